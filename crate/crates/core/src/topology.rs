//! MISO geometry: transmitters on a uniform circular array (UCA) in the
//! `z = 0` plane, a spherical receiver on the UCA axis, and the partition of
//! the receiver surface into azimuthal wedges, one per transmitter.
//!
//! Frame: UCA center at the origin, UCA axis along `+z`, transmitter 0 on
//! the `+x` axis. All lengths in µm, times in s.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::config::{Dimension, KeyValues};
use crate::error::{Error, Result};

/// A point or displacement in 3D space (µm).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Index of a receiver region, equal to the index of its conjugate
/// transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RegionIndex(pub u8);

impl RegionIndex {
    /// Checked constructor for a topology with `n_tx` transmitters.
    pub fn new(value: usize, n_tx: usize) -> Result<RegionIndex> {
        if value < n_tx && value <= u8::MAX as usize {
            Ok(RegionIndex(value as u8))
        } else {
            Err(Error::InvalidInput(format!(
                "region index {value} out of range for {n_tx} regions"
            )))
        }
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for RegionIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Geometry and physical constants. Defaults are the reference scenario:
/// 8 transmitters, r_tx = 0.5 µm, r_rx = 5 µm, d_rx = 15.5 µm,
/// d_tx = 10 µm, D = 79.4 µm²/s, T = 5 s, Δt = 0.1 ms, recording bin 0.1 s.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyConfig {
    pub n_tx: usize,
    /// Transmitter radius (µm).
    pub r_tx: f64,
    /// Receiver radius (µm).
    pub r_rx: f64,
    /// UCA center to receiver center (µm).
    pub d_rx: f64,
    /// UCA center to the closest point of each transmitter's surface (µm).
    pub d_tx: f64,
    /// Diffusion coefficient (µm²/s).
    pub diffusion_coeff: f64,
    /// Total observation time (s).
    pub total_time: f64,
    /// Brownian step length (s).
    pub dt_sim: f64,
    /// Width of a recording bin (s).
    pub dt_record: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            n_tx: 8,
            r_tx: 0.5,
            r_rx: 5.0,
            d_rx: 15.5,
            d_tx: 10.0,
            diffusion_coeff: 79.4,
            total_time: 5.0,
            dt_sim: 1e-4,
            dt_record: 1e-1,
        }
    }
}

/// Configuration keys understood by [`TopologyConfig::take_from`].
pub const TOPOLOGY_KEYS: [&str; 9] = [
    "n_tx",
    "r_tx",
    "r_rx",
    "d_rx",
    "d_tx",
    "diffusion_coeff",
    "total_time",
    "dt_sim",
    "dt_record",
];

impl TopologyConfig {
    /// Reads the topology keys out of `kv`, leaving any other keys in place.
    /// Missing keys keep their default value.
    pub fn take_from(kv: &mut KeyValues) -> Result<TopologyConfig> {
        let mut cfg = TopologyConfig::default();
        if let Some(n) = kv.take_u64("n_tx")? {
            cfg.n_tx = n as usize;
        }
        let lengths = [
            ("r_tx", &mut cfg.r_tx),
            ("r_rx", &mut cfg.r_rx),
            ("d_rx", &mut cfg.d_rx),
            ("d_tx", &mut cfg.d_tx),
        ];
        for (key, slot) in lengths {
            if let Some(v) = kv.take_f64(key, Dimension::Length)? {
                *slot = v;
            }
        }
        if let Some(v) = kv.take_f64("diffusion_coeff", Dimension::Diffusivity)? {
            cfg.diffusion_coeff = v;
        }
        let times = [
            ("total_time", &mut cfg.total_time),
            ("dt_sim", &mut cfg.dt_sim),
            ("dt_record", &mut cfg.dt_record),
        ];
        for (key, slot) in times {
            if let Some(v) = kv.take_f64(key, Dimension::Time)? {
                *slot = v;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serializes to the key/value format, one key per line, in µm/s.
    pub fn to_key_values(&self) -> String {
        format!(
            "n_tx = {}\nr_tx = {:?} um\nr_rx = {:?} um\nd_rx = {:?} um\nd_tx = {:?} um\n\
             diffusion_coeff = {:?} um^2/s\ntotal_time = {:?} s\ndt_sim = {:?} s\ndt_record = {:?} s\n",
            self.n_tx,
            self.r_tx,
            self.r_rx,
            self.d_rx,
            self.d_tx,
            self.diffusion_coeff,
            self.total_time,
            self.dt_sim,
            self.dt_record
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tx < 2 || !self.n_tx.is_power_of_two() || self.n_tx > 256 {
            return Err(Error::InvalidConfig(format!(
                "n_tx must be a power of two in [2, 256], got {}",
                self.n_tx
            )));
        }
        let positives = [
            ("r_tx", self.r_tx),
            ("r_rx", self.r_rx),
            ("d_rx", self.d_rx),
            ("d_tx", self.d_tx),
            ("diffusion_coeff", self.diffusion_coeff),
            ("total_time", self.total_time),
            ("dt_sim", self.dt_sim),
            ("dt_record", self.dt_record),
        ];
        for (name, v) in positives {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.dt_sim > self.dt_record {
            return Err(Error::InvalidConfig(format!(
                "dt_sim ({}) must not exceed dt_record ({})",
                self.dt_sim, self.dt_record
            )));
        }
        let bins = self.total_time / self.dt_record;
        if (bins - bins.round()).abs() > 1e-9 * bins.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "dt_record ({}) must divide total_time ({})",
                self.dt_record, self.total_time
            )));
        }
        Ok(())
    }

    /// Number of recording bins in `[0, T)`.
    pub fn n_bins(&self) -> usize {
        (self.total_time / self.dt_record).round() as usize
    }

    /// Bits carried by one symbol, log₂(n_tx).
    pub fn bits_per_symbol(&self) -> usize {
        self.n_tx.trailing_zeros() as usize
    }

    /// Symbol duration for `w` windows tiling `[0, T)`.
    pub fn symbol_duration(&self, w: usize) -> f64 {
        self.total_time / w as f64
    }
}

/// Resolved geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub config: TopologyConfig,
    pub tx_centers: Vec<Vec3>,
    pub rx_center: Vec3,
    /// Wedge center azimuth for each region (rad), equal to the azimuth of
    /// the conjugate transmitter.
    pub region_azimuths: Vec<f64>,
}

/// Builds the geometry from a validated configuration.
///
/// Transmitter `i` is centered at radius `d_tx + r_tx`, azimuth `2πi/n_tx`
/// in the `z = 0` plane; the receiver is centered at `(0, 0, d_rx)`.
pub fn build_topology(config: &TopologyConfig) -> Result<Topology> {
    config.validate()?;
    let n = config.n_tx;
    let radius = config.d_tx + config.r_tx;
    let region_azimuths: Vec<f64> = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
    let tx_centers: Vec<Vec3> = region_azimuths
        .iter()
        .map(|&phi| Vec3::new(radius * phi.cos(), radius * phi.sin(), 0.0))
        .collect();
    let rx_center = Vec3::new(0.0, 0.0, config.d_rx);

    for (i, c) in tx_centers.iter().enumerate() {
        let gap = (*c - rx_center).norm();
        if gap <= config.r_tx + config.r_rx {
            return Err(Error::InvalidTopology(format!(
                "transmitter {i} intersects the receiver (center distance {gap:.4} µm)"
            )));
        }
    }
    // Nearest neighbours on the UCA are the closest pair.
    let chord = 2.0 * radius * (PI / n as f64).sin();
    if chord <= 2.0 * config.r_tx {
        return Err(Error::InvalidTopology(format!(
            "adjacent transmitters overlap (center distance {chord:.4} µm, radius {} µm)",
            config.r_tx
        )));
    }

    Ok(Topology {
        config: config.clone(),
        tx_centers,
        rx_center,
        region_azimuths,
    })
}

impl Topology {
    pub fn n_tx(&self) -> usize {
        self.config.n_tx
    }

    /// Region whose wedge `[φᵢ − π/n, φᵢ + π/n)` contains `azimuth`.
    pub fn region_of_azimuth(&self, azimuth: f64) -> RegionIndex {
        region_of_azimuth(azimuth, self.n_tx())
    }

    /// Maps a point on the receiver surface to its region.
    pub fn region_of(&self, hit_point: Vec3) -> Result<RegionIndex> {
        let rel = hit_point - self.rx_center;
        let distance = rel.norm();
        let radius = self.config.r_rx;
        if ((distance - radius) / radius).abs() > 1e-6 {
            return Err(Error::NotOnReceiver {
                point: hit_point.to_array(),
                distance,
                radius,
            });
        }
        Ok(self.region_of_unchecked(hit_point))
    }

    /// [`Topology::region_of`] without the surface check; used by the
    /// engine, whose hit points are on the sphere by construction.
    pub(crate) fn region_of_unchecked(&self, hit_point: Vec3) -> RegionIndex {
        let rel = hit_point - self.rx_center;
        self.region_of_azimuth(rel.y.atan2(rel.x))
    }
}

/// Half-open wedge lookup; the lower boundary belongs to the wedge.
pub fn region_of_azimuth(azimuth: f64, n_tx: usize) -> RegionIndex {
    let width = TAU / n_tx as f64;
    let shifted = (azimuth + width / 2.0).rem_euclid(TAU);
    let idx = (shifted / width).floor() as usize;
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    RegionIndex((idx % n_tx) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_topology() -> Topology {
        build_topology(&TopologyConfig::default()).unwrap()
    }

    fn close(a: Vec3, b: Vec3) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn reference_placement() {
        let topo = reference_topology();
        assert_eq!(topo.tx_centers.len(), 8);
        assert!(close(topo.tx_centers[0], Vec3::new(10.5, 0.0, 0.0)));
        assert!(close(topo.tx_centers[4], Vec3::new(-10.5, 0.0, 0.0)));
        assert_eq!(topo.rx_center, Vec3::new(0.0, 0.0, 15.5));
        for c in &topo.tx_centers {
            assert_eq!(c.z, 0.0);
            assert!((c.norm() - 10.5).abs() < 1e-12);
        }
    }

    #[test]
    fn region_lookup_examples() {
        let topo = reference_topology();
        let r = topo.config.r_rx;
        let c = topo.rx_center;
        for elevation in [-1.2, 0.0, 0.7] {
            let p = c + Vec3::new(r * f64::cos(elevation), 0.0, r * f64::sin(elevation));
            assert_eq!(topo.region_of(p).unwrap(), RegionIndex(0));
        }
        let p = c + Vec3::new(-r, 0.0, 0.0);
        assert_eq!(topo.region_of(p).unwrap(), RegionIndex(4));
        assert_eq!(topo.region_of_azimuth(PI / 8.0), RegionIndex(1));
        assert_eq!(topo.region_of_azimuth(-PI / 8.0), RegionIndex(0));
        assert_eq!(topo.region_of_azimuth(-PI / 8.0 - 1e-12), RegionIndex(7));
        assert_eq!(topo.region_of_azimuth(TAU - 1e-15), RegionIndex(0));
    }

    #[test]
    fn rejects_points_off_the_sphere() {
        let topo = reference_topology();
        let p = topo.rx_center + Vec3::new(4.9, 0.0, 0.0);
        assert!(matches!(topo.region_of(p), Err(Error::NotOnReceiver { .. })));
    }

    #[test]
    fn rejects_invalid_configs() {
        let bad = [
            TopologyConfig {
                n_tx: 6,
                ..Default::default()
            },
            TopologyConfig {
                n_tx: 1,
                ..Default::default()
            },
            TopologyConfig {
                r_tx: 0.0,
                ..Default::default()
            },
            TopologyConfig {
                dt_sim: 0.2,
                ..Default::default()
            },
            TopologyConfig {
                dt_record: 0.3,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(build_topology(&cfg), Err(Error::InvalidConfig(_))), "{cfg:?}");
        }
        // Receiver swallowing the transmitters.
        let cfg = TopologyConfig {
            r_rx: 20.0,
            ..Default::default()
        };
        assert!(matches!(build_topology(&cfg), Err(Error::InvalidTopology(_))));
        // Transmitters touching each other on a tight ring.
        let cfg = TopologyConfig {
            d_tx: 0.5,
            r_tx: 0.5,
            ..Default::default()
        };
        assert!(matches!(build_topology(&cfg), Err(Error::InvalidTopology(_))));
    }

    #[test]
    fn config_round_trips_through_key_values() {
        let cfg = TopologyConfig {
            n_tx: 4,
            r_rx: 4.25,
            dt_sim: 2e-4,
            ..Default::default()
        };
        let mut kv = KeyValues::parse(&cfg.to_key_values()).unwrap();
        assert_eq!(TopologyConfig::take_from(&mut kv).unwrap(), cfg);
        kv.finish().unwrap();
    }
}
