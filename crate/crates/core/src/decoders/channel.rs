//! Channel coefficients `h[i][j][k]`: the fraction of molecules released by
//! transmitter `i` that region `j` absorbs during the `k`-th symbol slot
//! after the release (slot 1 is the release slot).
//!
//! # Cache file
//!
//! All integers and floats little-endian:
//!
//! | field     | type      |
//! |-----------|-----------|
//! | magic     | `b"MIMCHAN\0"` |
//! | version   | u32 (= 1) |
//! | n_tx      | u32       |
//! | n_regions | u32       |
//! | n_slots   | u32       |
//! | t_s       | f64 (s)   |
//! | m_est     | u64       |
//! | h         | `n_tx·n_regions·n_slots` f64, row-major `(i, j, k)` |

use std::path::Path;

use crate::binio::{read_file, write_file, BinReader, BinWriter};
use crate::diffusion::{Emission, Simulator};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Stream};
use crate::topology::RegionIndex;

const MAGIC: &[u8; 8] = b"MIMCHAN\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelCoefficients {
    n_tx: usize,
    n_regions: usize,
    n_slots: usize,
    /// Slot duration the coefficients were estimated for (s).
    pub symbol_duration: f64,
    /// Molecules released per transmitter during estimation.
    pub m_est: u64,
    h: Vec<f64>,
}

impl ChannelCoefficients {
    /// Builds a coefficient tensor from explicit values, row-major
    /// `(i, j, k)` with `k` running over slots `1..=n_slots`.
    pub fn from_values(
        n_tx: usize,
        n_regions: usize,
        n_slots: usize,
        symbol_duration: f64,
        m_est: u64,
        h: Vec<f64>,
    ) -> Result<ChannelCoefficients> {
        if h.len() != n_tx * n_regions * n_slots {
            return Err(Error::ShapeMismatch {
                expected: format!("{n_tx}x{n_regions}x{n_slots} coefficients"),
                got: format!("{}", h.len()),
            });
        }
        if n_slots == 0 {
            return Err(Error::InvalidInput("channel needs at least one slot".into()));
        }
        if let Some(bad) = h.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("coefficient {bad} outside [0, 1]")));
        }
        let coeffs = ChannelCoefficients {
            n_tx,
            n_regions,
            n_slots,
            symbol_duration,
            m_est,
            h,
        };
        for i in 0..n_tx {
            let total = coeffs.absorbed_fraction(i);
            if total > 1.0 + 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "coefficients of transmitter {i} sum to {total} > 1"
                )));
            }
        }
        Ok(coeffs)
    }

    /// Builds coefficients from a closure `f(i, j, slot)` with 1-based slots.
    pub fn from_fn(
        n_tx: usize,
        n_regions: usize,
        n_slots: usize,
        symbol_duration: f64,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<ChannelCoefficients> {
        let mut h = Vec::with_capacity(n_tx * n_regions * n_slots);
        for i in 0..n_tx {
            for j in 0..n_regions {
                for k in 1..=n_slots {
                    h.push(f(i, j, k));
                }
            }
        }
        ChannelCoefficients::from_values(n_tx, n_regions, n_slots, symbol_duration, 0, h)
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    /// `h[i][j][slot]` with 1-based `slot`; zero outside `1..=n_slots`.
    pub fn get(&self, tx: usize, region: usize, slot: usize) -> f64 {
        if slot == 0 || slot > self.n_slots {
            return 0.0;
        }
        self.h[(tx * self.n_regions + region) * self.n_slots + slot - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.h
    }

    /// Σ over regions and slots for one transmitter.
    pub fn absorbed_fraction(&self, tx: usize) -> f64 {
        let start = tx * self.n_regions * self.n_slots;
        self.h[start..start + self.n_regions * self.n_slots].iter().sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = BinWriter::new(Vec::with_capacity(40 + 8 * self.h.len()));
        let write = |w: &mut BinWriter<Vec<u8>>| -> std::io::Result<()> {
            w.bytes(MAGIC)?;
            w.u32(VERSION)?;
            w.u32(self.n_tx as u32)?;
            w.u32(self.n_regions as u32)?;
            w.u32(self.n_slots as u32)?;
            w.f64(self.symbol_duration)?;
            w.u64(self.m_est)?;
            w.f64s(&self.h)
        };
        write(&mut w).expect("writing to a Vec cannot fail");
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<ChannelCoefficients> {
        let mut r = BinReader::new(bytes, path);
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.malformed(format!("unsupported channel cache version {version}")));
        }
        let n_tx = r.u32()? as usize;
        let n_regions = r.u32()? as usize;
        let n_slots = r.u32()? as usize;
        let symbol_duration = r.f64()?;
        let m_est = r.u64()?;
        let h = r.f64s(n_tx * n_regions * n_slots)?;
        r.expect_end()?;
        ChannelCoefficients::from_values(n_tx, n_regions, n_slots, symbol_duration, m_est, h)
            .map_err(|e| r.malformed(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<ChannelCoefficients> {
        ChannelCoefficients::from_bytes(&read_file(path)?, path)
    }
}

/// Estimates `h` by releasing `m_est` molecules from each transmitter at
/// `t = 0` and observing for `n_slots · t_s` seconds.
pub fn estimate_channel(
    sim: &Simulator<'_>,
    symbol_duration: f64,
    n_slots: usize,
    m_est: u64,
    seed: u64,
) -> Result<ChannelCoefficients> {
    let topo = sim.topology();
    let n = topo.n_tx();
    if n_slots == 0 || m_est == 0 || !(symbol_duration > 0.0) {
        return Err(Error::InvalidInput(format!(
            "channel estimation needs n_slots, m_est and t_s positive (got {n_slots}, {m_est}, {symbol_duration})"
        )));
    }
    let horizon = n_slots as f64 * symbol_duration;
    let mut h = vec![0.0; n * n * n_slots];
    for tx in 0..n {
        let emission = Emission {
            time: 0.0,
            tx: RegionIndex(tx as u8),
            count: m_est,
        };
        let tx_seed = derive_seed(seed, Stream::Channel, &[tx as u64]);
        let events = sim.simulate_emissions(&[emission], horizon, tx_seed, Stream::Channel);
        let mut counts = vec![0u64; n * n_slots];
        for ev in &events {
            let k = ((ev.time / symbol_duration).floor() as usize).min(n_slots - 1);
            counts[ev.region.get() * n_slots + k] += 1;
        }
        for (slot, c) in h[tx * n * n_slots..(tx + 1) * n * n_slots].iter_mut().zip(&counts) {
            *slot = *c as f64 / m_est as f64;
        }
    }
    ChannelCoefficients::from_values(n, n, n_slots, symbol_duration, m_est, h)
}
