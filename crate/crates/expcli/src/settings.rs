//! Experiment settings: topology plus the knobs of every pipeline stage,
//! with `desk` and `paper` presets that a config file can override.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use molim::config::{Dimension, KeyValues};
use molim::decoders::default_s_factor;
use molim::TopologyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    /// Reduced molecule counts, simulations, filters and epochs.
    Desk,
    /// Full-scale values.
    Paper,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

impl FromStr for Profile {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => bail!("unknown profile `{other}` (expected desk or paper)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub topology: TopologyConfig,
    /// Emitted molecules per symbol = round(s_factor · molecules per bit).
    pub s_factor: f64,
    /// Window counts with a training dataset and a trained model.
    pub windows: Vec<usize>,
    /// Training simulations per window count.
    pub n_sims: usize,
    /// Molecules per symbol in training data.
    pub m_train: u64,
    pub filters: usize,
    pub dense_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    /// Train on all cyclic region shifts of each sample.
    pub rotations: bool,
    /// Molecules per transmitter for channel estimation.
    pub m_est: u64,
    /// Symbols per (decoder, w, molecule budget) evaluation cell.
    pub eval_symbols: usize,
    /// Window count of the molecule-budget sweep.
    pub eval_w: usize,
    /// Molecules per bit of the molecule-budget sweep.
    pub eval_mpb: Vec<u64>,
    /// Molecules per bit of the bit-duration sweep.
    pub sweep_mpb: u64,
    pub sweep_windows: Vec<usize>,
}

const SETTING_KEYS: [&str; 17] = [
    "s_factor",
    "windows",
    "n_sims",
    "m_train",
    "filters",
    "dense_width",
    "epochs",
    "batch_size",
    "learning_rate",
    "validation_fraction",
    "rotations",
    "m_est",
    "eval_symbols",
    "eval_w",
    "eval_mpb",
    "sweep_mpb",
    "sweep_windows",
];

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    raw.split(',')
        .map(|v| v.trim().parse::<T>().with_context(|| format!("`{key}`: bad list item `{v}`")))
        .collect()
}

fn join<T: fmt::Display>(values: &[T]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

impl Settings {
    pub fn preset(profile: Profile) -> Settings {
        let topology = TopologyConfig::default();
        let s_factor = default_s_factor(topology.n_tx);
        match profile {
            Profile::Desk => Settings {
                topology,
                s_factor,
                windows: vec![3, 6, 10],
                n_sims: 200,
                m_train: 20_000,
                filters: 32,
                dense_width: 512,
                epochs: 100,
                batch_size: 64,
                learning_rate: 1e-3,
                validation_fraction: 0.1,
                rotations: true,
                m_est: 100_000,
                eval_symbols: 400,
                eval_w: 10,
                eval_mpb: vec![1500],
                sweep_mpb: 750,
                sweep_windows: vec![3, 6, 10],
            },
            Profile::Paper => Settings {
                topology,
                s_factor,
                windows: (3..=10).collect(),
                n_sims: 200,
                m_train: 100_000,
                filters: 512,
                dense_width: 512,
                epochs: 200,
                batch_size: 64,
                learning_rate: 1e-3,
                validation_fraction: 0.1,
                rotations: false,
                m_est: 1_000_000,
                eval_symbols: 2_000,
                eval_w: 10,
                eval_mpb: (0..11).map(|i| 750 + 250 * i).collect(),
                sweep_mpb: 750,
                sweep_windows: (3..=10).collect(),
            },
        }
    }

    /// The preset for `profile`, with any keys from the config file applied.
    /// Unknown keys are an error.
    pub fn load(profile: Profile, config: Option<&Path>) -> Result<Settings> {
        let mut settings = Settings::preset(profile);
        if let Some(path) = config {
            let mut kv = KeyValues::from_file(path)?;
            settings.apply(&mut kv).with_context(|| format!("in {}", path.display()))?;
            kv.finish().with_context(|| format!("in {}", path.display()))?;
        }
        settings.validate()?;
        Ok(settings)
    }

    pub fn parse(profile: Profile, text: &str) -> Result<Settings> {
        let mut settings = Settings::preset(profile);
        let mut kv = KeyValues::parse(text)?;
        settings.apply(&mut kv)?;
        kv.finish()?;
        settings.validate()?;
        Ok(settings)
    }

    fn apply(&mut self, kv: &mut KeyValues) -> Result<()> {
        let n_tx_given = self.topology.n_tx;
        self.topology = TopologyConfig::take_from(kv)?;
        if self.topology.n_tx != n_tx_given {
            self.s_factor = default_s_factor(self.topology.n_tx);
        }
        if let Some(v) = kv.take_f64("s_factor", Dimension::Scalar)? {
            self.s_factor = v;
        }
        if let Some(v) = kv.take_f64("learning_rate", Dimension::Scalar)? {
            self.learning_rate = v;
        }
        if let Some(v) = kv.take_f64("validation_fraction", Dimension::Scalar)? {
            self.validation_fraction = v;
        }
        if let Some(raw) = kv.take_str("rotations") {
            self.rotations = raw.trim().parse().with_context(|| format!("`rotations`: expected true or false, got `{raw}`"))?;
        }
        let usizes = [
            ("n_sims", &mut self.n_sims),
            ("filters", &mut self.filters),
            ("dense_width", &mut self.dense_width),
            ("epochs", &mut self.epochs),
            ("batch_size", &mut self.batch_size),
            ("eval_symbols", &mut self.eval_symbols),
            ("eval_w", &mut self.eval_w),
        ];
        for (key, slot) in usizes {
            if let Some(v) = kv.take_u64(key)? {
                *slot = v as usize;
            }
        }
        let u64s = [
            ("m_train", &mut self.m_train),
            ("m_est", &mut self.m_est),
            ("sweep_mpb", &mut self.sweep_mpb),
        ];
        for (key, slot) in u64s {
            if let Some(v) = kv.take_u64(key)? {
                *slot = v;
            }
        }
        if let Some(raw) = kv.take_str("windows") {
            self.windows = parse_list("windows", &raw)?;
        }
        if let Some(raw) = kv.take_str("sweep_windows") {
            self.sweep_windows = parse_list("sweep_windows", &raw)?;
        }
        if let Some(raw) = kv.take_str("eval_mpb") {
            self.eval_mpb = parse_list("eval_mpb", &raw)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        let n_bins = self.topology.n_bins();
        if self.windows.is_empty() {
            bail!("`windows` is empty");
        }
        for &w in &self.windows {
            if w == 0 || w > n_bins {
                bail!("window count {w} outside 1..={n_bins}");
            }
        }
        for &w in self.sweep_windows.iter().chain(std::iter::once(&self.eval_w)) {
            if !self.windows.contains(&w) {
                bail!("evaluation window count {w} has no model; add it to `windows`");
            }
        }
        if !(self.s_factor > 0.0) {
            bail!("`s_factor` must be positive");
        }
        let positive = [
            ("n_sims", self.n_sims as u64),
            ("m_train", self.m_train),
            ("m_est", self.m_est),
            ("eval_symbols", self.eval_symbols as u64),
            ("sweep_mpb", self.sweep_mpb),
        ];
        for (key, v) in positive {
            if v == 0 {
                bail!("`{key}` must be positive");
            }
        }
        if self.eval_mpb.is_empty() || self.eval_mpb.contains(&0) {
            bail!("`eval_mpb` needs positive entries");
        }
        self.train_config(0).validate()?;
        Ok(())
    }

    /// Emitted molecules per symbol for a per-bit budget.
    pub fn molecules_per_symbol(&self, molecules_per_bit: u64) -> u64 {
        (self.s_factor * molecules_per_bit as f64).round() as u64
    }

    pub fn architecture(&self, w: usize) -> molim::cnn::CnnArchitecture {
        molim::cnn::CnnArchitecture {
            dense_width: self.dense_width,
            ..molim::cnn::CnnArchitecture::with_filters(
                self.filters,
                w,
                self.topology.n_tx,
                self.topology.n_tx,
                self.topology.n_bins(),
            )
        }
    }

    pub fn train_config(&self, seed: u64) -> molim::cnn::TrainConfig {
        molim::cnn::TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            validation_fraction: self.validation_fraction,
            rotations: self.rotations,
            ..molim::cnn::TrainConfig::default()
        }
    }

    /// All settings as a config file that [`Settings::parse`] reads back.
    pub fn to_text(&self) -> String {
        let mut out = self.topology.to_key_values();
        let lines = [
            ("s_factor", format!("{:?}", self.s_factor)),
            ("windows", join(&self.windows)),
            ("n_sims", self.n_sims.to_string()),
            ("m_train", self.m_train.to_string()),
            ("filters", self.filters.to_string()),
            ("dense_width", self.dense_width.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", format!("{:?}", self.learning_rate)),
            ("validation_fraction", format!("{:?}", self.validation_fraction)),
            ("rotations", self.rotations.to_string()),
            ("m_est", self.m_est.to_string()),
            ("eval_symbols", self.eval_symbols.to_string()),
            ("eval_w", self.eval_w.to_string()),
            ("eval_mpb", join(&self.eval_mpb)),
            ("sweep_mpb", self.sweep_mpb.to_string()),
            ("sweep_windows", join(&self.sweep_windows)),
        ];
        debug_assert_eq!(lines.len(), SETTING_KEYS.len());
        for (k, v) in lines {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for profile in [Profile::Desk, Profile::Paper] {
            let s = Settings::preset(profile);
            s.validate().unwrap();
            assert_eq!(Settings::parse(profile, &s.to_text()).unwrap(), s);
        }
    }

    #[test]
    fn paper_hyperparameters() {
        let s = Settings::preset(Profile::Paper);
        assert_eq!((s.learning_rate, s.epochs, s.batch_size), (1e-3, 200, 64));
        assert_eq!((s.filters, s.dense_width, s.m_train, s.n_sims), (512, 512, 100_000, 200));
        assert_eq!(s.windows.len() * s.n_sims, 1600);
        assert_eq!(s.eval_mpb.len(), 11);
        assert_eq!(*s.eval_mpb.last().unwrap(), 3250);
        assert!(!s.train_config(0).rotations);
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let s = Settings::parse(Profile::Desk, "epochs = 3\nwindows = 2, 4\neval_w = 4\nsweep_windows = 2\ns_factor = 3\n").unwrap();
        assert_eq!(s.epochs, 3);
        assert_eq!(s.windows, vec![2, 4]);
        assert_eq!(s.molecules_per_symbol(750), 2250);
        assert!(Settings::parse(Profile::Desk, "epoch = 3\n").is_err());
        assert!(Settings::parse(Profile::Desk, "eval_w = 7\n").is_err());
        assert_eq!(Settings::preset(Profile::Desk).molecules_per_symbol(1500), 2250);
    }
}
