//! Brownian Monte Carlo engine.
//!
//! Molecules are emitted at the center of a transmitter, move by Gaussian
//! steps of variance `2·D·Δt` per axis, are reflected by their own
//! transmitter once they have left it, and are absorbed when they enter the
//! receiver sphere. Molecules never interact, so each one is simulated
//! independently from its own random substream and the results are
//! aggregated in a canonical order.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rng::{substream, Stream};
use crate::topology::{RegionIndex, Topology, Vec3};

/// Default safety factor for [`StepMode::Adaptive`].
pub const DEFAULT_JUMP_SAFETY: f64 = 6.0;

/// How molecule trajectories are advanced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    /// One Gaussian step of length `dt_sim` at a time, with a collision
    /// check after every step.
    Exact,
    /// Far from every surface a molecule takes `n` steps at once. The sum of
    /// `n` independent Gaussian steps is drawn directly (variance
    /// `n·2·D·Δt`), with `n` chosen so the jump's standard deviation is at
    /// most `margin / safety`, where `margin` is the distance to the nearest
    /// surface the molecule can interact with. Jumps stay on the `dt_sim`
    /// time grid and collapse to single steps near surfaces.
    Adaptive { safety: f64 },
}

impl Default for StepMode {
    fn default() -> Self {
        StepMode::Adaptive {
            safety: DEFAULT_JUMP_SAFETY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoleculeState {
    pub position: Vec3,
    pub origin_tx: RegionIndex,
    pub alive: bool,
    /// Latches once the molecule has been outside its origin transmitter.
    pub has_exited_origin: bool,
}

impl MoleculeState {
    pub fn emitted(topology: &Topology, origin_tx: RegionIndex) -> MoleculeState {
        MoleculeState {
            position: topology.tx_centers[origin_tx.get()],
            origin_tx,
            alive: true,
            has_exited_origin: false,
        }
    }
}

/// One molecule absorbed by the receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorptionEvent {
    /// Seconds since the start of the sequence.
    pub time: f64,
    pub region: RegionIndex,
}

/// Result of a collision check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Collision {
    /// The molecule is at `position` and still diffusing.
    Free(Vec3),
    /// The molecule entered the receiver; `hit_point` is where its step
    /// crossed the surface.
    Absorbed { hit_point: Vec3, region: RegionIndex },
}

/// Standard deviation of a single per-axis Brownian step, `√(2·D·Δt)`.
pub fn step_sigma(diffusion_coeff: f64, dt: f64) -> f64 {
    (2.0 * diffusion_coeff * dt).sqrt()
}

/// Adds an independent `N(0, σ²)` increment to every coordinate.
pub fn brownian_step<R: Rng + ?Sized>(position: Vec3, sigma: f64, rng: &mut R) -> Vec3 {
    let dx: f64 = rng.sample(StandardNormal);
    let dy: f64 = rng.sample(StandardNormal);
    let dz: f64 = rng.sample(StandardNormal);
    Vec3::new(
        position.x + sigma * dx,
        position.y + sigma * dy,
        position.z + sigma * dz,
    )
}

/// First point where the segment `from → to` meets the sphere, given that
/// `from` is outside and `to` inside. Falls back to the radial projection
/// of `to` if rounding puts the root outside `[0, 1]`.
fn segment_entry_point(from: Vec3, to: Vec3, center: Vec3, radius: f64) -> Vec3 {
    let d = to - from;
    let f = from - center;
    let a = d.norm_sq();
    let b = 2.0 * f.dot(d);
    let c = f.norm_sq() - radius * radius;
    let disc = b * b - 4.0 * a * c;
    if a > 0.0 && disc >= 0.0 {
        let t = (-b - disc.sqrt()) / (2.0 * a);
        if (0.0..=1.0).contains(&t) {
            let p = from + d * t;
            // Snap onto the surface to absorb rounding.
            let rel = p - center;
            return center + rel * (radius / rel.norm());
        }
    }
    let rel = to - center;
    let n = rel.norm();
    if n > 0.0 {
        center + rel * (radius / n)
    } else {
        center + Vec3::new(0.0, 0.0, radius)
    }
}

/// Applies receiver absorption and origin-transmitter reflection to a
/// proposed move `old → new`, updating the molecule's flags.
///
/// Reflection is specular about the tangent plane at the point where the
/// step penetrated the transmitter; if that still leaves the molecule
/// inside (grazing steps), the penetration depth is mirrored radially.
pub fn resolve_collisions(
    old: Vec3,
    new: Vec3,
    molecule: &mut MoleculeState,
    topology: &Topology,
) -> Collision {
    let cfg = &topology.config;
    let rx = topology.rx_center;
    if (new - rx).norm_sq() < cfg.r_rx * cfg.r_rx {
        let hit_point = segment_entry_point(old, new, rx, cfg.r_rx);
        molecule.alive = false;
        molecule.position = hit_point;
        return Collision::Absorbed {
            hit_point,
            region: topology.region_of_unchecked(hit_point),
        };
    }

    let tx = topology.tx_centers[molecule.origin_tx.get()];
    let r_tx = cfg.r_tx;
    let inside_tx = (new - tx).norm_sq() < r_tx * r_tx;
    let position = if !molecule.has_exited_origin {
        if !inside_tx {
            molecule.has_exited_origin = true;
        }
        new
    } else if inside_tx {
        reflect_out_of_sphere(old, new, tx, r_tx)
    } else {
        new
    };
    molecule.position = position;
    Collision::Free(position)
}

fn reflect_out_of_sphere(old: Vec3, new: Vec3, center: Vec3, radius: f64) -> Vec3 {
    let entry = segment_entry_point(old, new, center, radius);
    let normal = (entry - center) * (1.0 / radius);
    let depth = (entry - new).dot(normal);
    let mirrored = new + normal * (2.0 * depth);
    if (mirrored - center).norm_sq() >= radius * radius {
        return mirrored;
    }
    let rel = new - center;
    let dist = rel.norm();
    if dist > 0.0 {
        center + rel * ((2.0 * radius - dist) / dist)
    } else {
        entry + normal * radius
    }
}

/// A burst of molecules released at one instant from one transmitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emission {
    pub time: f64,
    pub tx: RegionIndex,
    pub count: u64,
}

/// Runs molecules through the channel for one topology and step mode.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    topology: &'a Topology,
    mode: StepMode,
    sigma: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(topology: &'a Topology) -> Simulator<'a> {
        Simulator::with_mode(topology, StepMode::default())
    }

    pub fn with_mode(topology: &'a Topology, mode: StepMode) -> Simulator<'a> {
        let cfg = &topology.config;
        Simulator {
            topology,
            mode,
            sigma: step_sigma(cfg.diffusion_coeff, cfg.dt_sim),
        }
    }

    pub fn topology(&self) -> &Topology {
        self.topology
    }

    pub fn mode(&self) -> StepMode {
        self.mode
    }

    /// Simulates one molecule emitted at `t0` until `horizon`. Steps whose
    /// end time would reach `horizon` are not taken, so event times stay
    /// strictly below it.
    pub fn simulate_molecule<R: Rng + ?Sized>(
        &self,
        origin: RegionIndex,
        t0: f64,
        horizon: f64,
        rng: &mut R,
    ) -> Option<AbsorptionEvent> {
        let topo = self.topology;
        let cfg = &topo.config;
        let dt = cfg.dt_sim;
        let span = (horizon - t0) / dt;
        if span <= 0.0 {
            return None;
        }
        let n_steps = (span - 1e-9).ceil() as u64 - 1;
        let mut mol = MoleculeState::emitted(topo, origin);
        let rx = topo.rx_center;
        let tx = topo.tx_centers[origin.get()];
        let safety_sigma = match self.mode {
            StepMode::Exact => f64::INFINITY,
            StepMode::Adaptive { safety } => safety * self.sigma,
        };

        let mut step = 0u64;
        while step < n_steps {
            let remaining = n_steps - step;
            let mut n = 1u64;
            if mol.has_exited_origin && safety_sigma.is_finite() && remaining > 1 {
                let margin = ((mol.position - rx).norm() - cfg.r_rx)
                    .min((mol.position - tx).norm() - cfg.r_tx);
                let ratio = margin / safety_sigma;
                if ratio >= std::f64::consts::SQRT_2 {
                    n = ((ratio * ratio) as u64).min(remaining);
                }
            }
            let old = mol.position;
            let proposed = if n == 1 {
                brownian_step(old, self.sigma, rng)
            } else {
                brownian_step(old, self.sigma * (n as f64).sqrt(), rng)
            };
            step += n;
            if let Collision::Absorbed { region, .. } =
                resolve_collisions(old, proposed, &mut mol, topo)
            {
                let time = (t0 + step as f64 * dt).min(prev_float(horizon));
                return Some(AbsorptionEvent { time, region });
            }
        }
        None
    }

    /// Simulates a set of emissions, each molecule on its own substream keyed
    /// by `(stream, emission index, molecule index)`. Returns the events in
    /// canonical `(time, region)` order.
    pub fn simulate_emissions(
        &self,
        emissions: &[Emission],
        horizon: f64,
        seed: u64,
        stream: Stream,
    ) -> Vec<AbsorptionEvent> {
        let mut events: Vec<AbsorptionEvent> = emissions
            .iter()
            .enumerate()
            .flat_map(|(e_idx, em)| {
                (0..em.count as usize)
                    .into_par_iter()
                    .with_min_len(64)
                    .filter_map(move |m| {
                        let mut rng = substream(seed, stream, &[e_idx as u64, m as u64]);
                        self.simulate_molecule(em.tx, em.time, horizon, &mut rng)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        sort_events(&mut events);
        events
    }

    /// Emits `molecules_per_symbol` molecules from `true_symbols[k]` at
    /// `k·t_s` and records every absorption until `T`.
    pub fn simulate_sequence(
        &self,
        true_symbols: &[RegionIndex],
        symbol_duration: f64,
        molecules_per_symbol: u64,
        seed: u64,
    ) -> Result<SampleRecord> {
        let cfg = &self.topology.config;
        let w = true_symbols.len();
        if w == 0 {
            return Err(Error::InvalidInput("empty symbol sequence".into()));
        }
        if !(symbol_duration > 0.0) {
            return Err(Error::InvalidInput(format!(
                "symbol duration must be positive, got {symbol_duration}"
            )));
        }
        if w as f64 * symbol_duration > cfg.total_time * (1.0 + 1e-9) {
            return Err(Error::InvalidInput(format!(
                "{w} windows of {symbol_duration} s exceed the observation time {} s",
                cfg.total_time
            )));
        }
        if molecules_per_symbol == 0 {
            return Err(Error::InvalidInput("molecules_per_symbol must be at least 1".into()));
        }
        for s in true_symbols {
            RegionIndex::new(s.get(), cfg.n_tx)?;
        }
        let emissions: Vec<Emission> = true_symbols
            .iter()
            .enumerate()
            .map(|(k, &tx)| Emission {
                time: k as f64 * symbol_duration,
                tx,
                count: molecules_per_symbol,
            })
            .collect();
        let events = self.simulate_emissions(&emissions, cfg.total_time, seed, Stream::Molecule);
        Ok(SampleRecord::from_events(
            self.topology,
            true_symbols.to_vec(),
            symbol_duration,
            molecules_per_symbol,
            events,
        ))
    }
}

fn prev_float(x: f64) -> f64 {
    f64::from_bits(x.to_bits() - 1)
}

pub fn sort_events(events: &mut [AbsorptionEvent]) {
    events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.region.cmp(&b.region)));
}

/// [`Simulator::simulate_sequence`] with the default step mode.
pub fn simulate_sequence(
    topology: &Topology,
    true_symbols: &[RegionIndex],
    symbol_duration: f64,
    molecules_per_symbol: u64,
    seed: u64,
) -> Result<SampleRecord> {
    Simulator::new(topology).simulate_sequence(true_symbols, symbol_duration, molecules_per_symbol, seed)
}

/// One simulated transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub true_symbols: Vec<RegionIndex>,
    /// Symbol duration `t_s` (s).
    pub symbol_duration: f64,
    pub molecules_per_symbol: u64,
    /// Absorptions in `(time, region)` order.
    pub events: Vec<AbsorptionEvent>,
    /// `w × n_tx` absorption counts per symbol window, from exact event times.
    pub window_counts: Grid<u64>,
    /// `n_tx × n_bins` absorption counts per recording bin.
    pub series: Grid<u32>,
    /// `series` divided by the total absorbed count.
    pub normalized_series: Grid<f64>,
}

impl SampleRecord {
    pub fn from_events(
        topology: &Topology,
        true_symbols: Vec<RegionIndex>,
        symbol_duration: f64,
        molecules_per_symbol: u64,
        events: Vec<AbsorptionEvent>,
    ) -> SampleRecord {
        let cfg = &topology.config;
        let w = true_symbols.len();
        let n_bins = cfg.n_bins();
        let mut window_counts = Grid::zeros(w, cfg.n_tx);
        let mut series = Grid::zeros(cfg.n_tx, n_bins);
        for ev in &events {
            let k = ((ev.time / symbol_duration).floor() as usize).min(w - 1);
            let bin = ((ev.time / cfg.dt_record).floor() as usize).min(n_bins - 1);
            window_counts[(k, ev.region.get())] += 1;
            series[(ev.region.get(), bin)] += 1;
        }
        let mut record = SampleRecord {
            true_symbols,
            symbol_duration,
            molecules_per_symbol,
            events,
            window_counts,
            series,
            normalized_series: Grid::zeros(cfg.n_tx, n_bins),
        };
        normalize_sample(&mut record);
        record
    }

    pub fn window_count(&self) -> usize {
        self.true_symbols.len()
    }

    pub fn emitted(&self) -> u64 {
        self.molecules_per_symbol * self.true_symbols.len() as u64
    }

    pub fn absorbed(&self) -> u64 {
        self.window_counts.as_slice().iter().sum()
    }
}

/// Divides the binned series by its total, giving a matrix that sums to 1
/// (or all zeros when nothing was absorbed).
pub fn normalized(series: &Grid<u32>) -> Grid<f64> {
    let total: u64 = series.as_slice().iter().map(|&c| c as u64).sum();
    if total == 0 {
        return series.map(|_| 0.0);
    }
    let total = total as f64;
    series.map(|&c| c as f64 / total)
}

/// Recomputes `normalized_series` from `series`.
pub fn normalize_sample(record: &mut SampleRecord) {
    record.normalized_series = normalized(&record.series);
}
