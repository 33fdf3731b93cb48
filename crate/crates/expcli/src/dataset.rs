//! Training and evaluation datasets.
//!
//! A dataset is a directory with two files:
//!
//! * `metadata.txt`: `key = value` text holding every topology key plus
//!   `w`, `molecules_per_symbol`, `seed`, `n_samples` and `config_hash`
//!   (SHA-256 prefix of the topology keys).
//! * `samples.bin`, little-endian:
//!
//! | field | type |
//! |-------|------|
//! | magic | `b"MIMDATA\0"` |
//! | version | u32 (= 1) |
//! | w, n_tx, n_bins | 3 × u32 |
//! | n_samples | u64 |
//! | per sample: labels | `w` bytes |
//! | per sample: window counts | `w·n_tx` u64, row-major |
//! | per sample: binned series | `n_tx·n_bins` u32, row-major |
//!
//! Normalized series are recomputed on load; absorption events are not
//! stored.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use molim::binio::{read_file, write_file, BinReader, BinWriter};
use molim::config::KeyValues;
use molim::diffusion::{normalized, SampleRecord, Simulator};
use molim::rng::{derive_seed, substream, Stream};
use molim::{build_topology, Grid, RegionIndex, TopologyConfig};
use rand::Rng;
use sha2::{Digest, Sha256};

const MAGIC: &[u8; 8] = b"MIMDATA\0";
const VERSION: u32 = 1;
pub const METADATA_FILE: &str = "metadata.txt";
pub const SAMPLES_FILE: &str = "samples.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub topology: TopologyConfig,
    pub w: usize,
    pub molecules_per_symbol: u64,
    pub seed: u64,
    pub samples: Vec<SampleRecord>,
}

/// Short stable fingerprint of a topology configuration.
pub fn config_hash(topology: &TopologyConfig) -> String {
    let digest = Sha256::digest(topology.to_key_values().as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Random symbols and simulation of sample `index` of a seeded sample set.
pub fn simulate_sample(
    sim: &Simulator<'_>,
    w: usize,
    molecules_per_symbol: u64,
    seed: u64,
    index: u64,
) -> molim::Result<SampleRecord> {
    let topo = sim.topology();
    let n_tx = topo.n_tx();
    let key = [w as u64, molecules_per_symbol, index];
    let mut sym_rng = substream(seed, Stream::Symbols, &key);
    let symbols: Vec<RegionIndex> = (0..w).map(|_| RegionIndex(sym_rng.random_range(0..n_tx) as u8)).collect();
    let t_s = topo.config.symbol_duration(w);
    let mut rec = sim.simulate_sequence(&symbols, t_s, molecules_per_symbol, derive_seed(seed, Stream::Sample, &key))?;
    rec.events = Vec::new();
    Ok(rec)
}

/// Runs `n_sims` simulations of `w` uniformly random symbols each.
pub fn gen_dataset(
    topology: &TopologyConfig,
    w: usize,
    n_sims: usize,
    molecules_per_symbol: u64,
    seed: u64,
) -> Result<Dataset> {
    if n_sims == 0 {
        bail!("n_sims must be at least 1");
    }
    let topo = build_topology(topology)?;
    let sim = Simulator::new(&topo);
    let samples = (0..n_sims as u64)
        .map(|s| simulate_sample(&sim, w, molecules_per_symbol, seed, s))
        .collect::<molim::Result<Vec<_>>>()?;
    Ok(Dataset {
        topology: topology.clone(),
        w,
        molecules_per_symbol,
        seed,
        samples,
    })
}

impl Dataset {
    pub fn metadata_text(&self) -> String {
        format!(
            "{}w = {}\nmolecules_per_symbol = {}\nseed = {}\nn_samples = {}\nconfig_hash = {}\n",
            self.topology.to_key_values(),
            self.w,
            self.molecules_per_symbol,
            self.seed,
            self.samples.len(),
            config_hash(&self.topology)
        )
    }

    pub fn samples_bytes(&self) -> Vec<u8> {
        let n_tx = self.topology.n_tx;
        let mut w = BinWriter::new(Vec::new());
        let write = |w: &mut BinWriter<Vec<u8>>| -> std::io::Result<()> {
            w.bytes(MAGIC)?;
            w.u32(VERSION)?;
            w.u32(self.w as u32)?;
            w.u32(n_tx as u32)?;
            w.u32(self.topology.n_bins() as u32)?;
            w.u64(self.samples.len() as u64)?;
            for s in &self.samples {
                let labels: Vec<u8> = s.true_symbols.iter().map(|r| r.0).collect();
                w.bytes(&labels)?;
                for &c in s.window_counts.as_slice() {
                    w.u64(c)?;
                }
                for &c in s.series.as_slice() {
                    w.u32(c)?;
                }
            }
            Ok(())
        };
        write(&mut w).expect("writing to a Vec cannot fail");
        w.into_inner()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_file(&dir.join(SAMPLES_FILE), &self.samples_bytes())?;
        write_file(&dir.join(METADATA_FILE), self.metadata_text().as_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let meta_path = dir.join(METADATA_FILE);
        let mut kv = KeyValues::from_file(&meta_path)?;
        let topology = TopologyConfig::take_from(&mut kv).with_context(|| meta_path.display().to_string())?;
        let mut int = |key: &str| -> Result<u64> {
            kv.take_u64(key)?
                .with_context(|| format!("{} lacks `{key}`", meta_path.display()))
        };
        let w = int("w")? as usize;
        let molecules_per_symbol = int("molecules_per_symbol")?;
        let seed = int("seed")?;
        let n_samples = int("n_samples")? as usize;
        let hash = kv
            .take_str("config_hash")
            .with_context(|| format!("{} lacks `config_hash`", meta_path.display()))?;
        kv.finish().with_context(|| meta_path.display().to_string())?;
        if hash != config_hash(&topology) {
            bail!("{}: config_hash does not match the stored topology", meta_path.display());
        }

        let path = dir.join(SAMPLES_FILE);
        let bytes = read_file(&path)?;
        let mut r = BinReader::new(bytes.as_slice(), &path);
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.malformed(format!("unsupported dataset version {version}")).into());
        }
        let (fw, n_tx, n_bins) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let count = r.u64()? as usize;
        if fw != w || n_tx != topology.n_tx || n_bins != topology.n_bins() || count != n_samples {
            return Err(r.malformed("header disagrees with metadata.txt").into());
        }
        let t_s = topology.symbol_duration(w);
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let labels = r.bytes(w)?;
            if labels.iter().any(|&l| l as usize >= n_tx) {
                return Err(r.malformed("label out of range").into());
            }
            let mut counts = Vec::with_capacity(w * n_tx);
            for _ in 0..w * n_tx {
                counts.push(r.u64()?);
            }
            let mut series = Vec::with_capacity(n_tx * n_bins);
            for _ in 0..n_tx * n_bins {
                series.push(r.u32()?);
            }
            let series = Grid::from_vec(n_tx, n_bins, series);
            samples.push(SampleRecord {
                true_symbols: labels.into_iter().map(RegionIndex).collect(),
                symbol_duration: t_s,
                molecules_per_symbol,
                events: Vec::new(),
                window_counts: Grid::from_vec(w, n_tx, counts),
                normalized_series: normalized(&series),
                series,
            });
        }
        r.expect_end()?;
        Ok(Dataset {
            topology,
            w,
            molecules_per_symbol,
            seed,
            samples,
        })
    }
}
