use rand::seq::SliceRandom;

use crate::cnn::adam::{adam_step, AdamConfig, AdamState};
use crate::cnn::arch::CnnArchitecture;
use crate::cnn::model::CnnModel;
use crate::cnn::network::{backward, forward, loss, update_running_stats, ForwardPass, Mode};
use crate::diffusion::SampleRecord;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rng::{substream, Stream};
use crate::topology::RegionIndex;

/// Samples evaluated per forward call during prediction.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Fraction of the dataset held out for per-epoch validation.
    pub validation_fraction: f64,
    /// Also train on every cyclic shift of the regions (rows and labels
    /// together). Only meaningful when the topology is invariant under
    /// rotation by one transmitter spacing. The validation split is taken
    /// before shifting.
    pub rotations: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            validation_fraction: 0.1,
            rotations: false,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..1.0).contains(&v);
        if !(self.learning_rate > 0.0) || self.epochs == 0 || self.batch_size == 0 || !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(
                "learning_rate, epochs, batch_size and epsilon must be positive".into(),
            ));
        }
        if !unit(self.beta1) || !unit(self.beta2) || !unit(self.validation_fraction) {
            return Err(Error::InvalidConfig(
                "beta1, beta2 and validation_fraction must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean mini-batch loss over the epoch.
    pub loss: f64,
    /// Fraction of correctly classified (sample, head) pairs during the epoch.
    pub accuracy: f64,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    /// Training loss before the first update.
    pub initial_loss: f64,
    pub epochs: Vec<EpochStats>,
}

impl TrainTrace {
    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(self.initial_loss, |e| e.loss)
    }
}

fn check_dataset(samples: &[SampleRecord], arch: &CnnArchitecture) -> Result<()> {
    let Some(first) = samples.first() else {
        return Err(Error::InvalidInput("training set is empty".into()));
    };
    let w = first.true_symbols.len();
    if w != arch.heads {
        return Err(Error::ShapeMismatch {
            expected: format!("{} symbols per sample", arch.heads),
            got: w.to_string(),
        });
    }
    for s in samples {
        if s.true_symbols.len() != w {
            return Err(Error::InvalidInput(format!(
                "mixed window counts in training set: {w} and {}",
                s.true_symbols.len()
            )));
        }
        check_input(&s.normalized_series, arch)?;
        if s.true_symbols.iter().any(|l| l.get() >= arch.classes) {
            return Err(Error::InvalidInput("label outside the class range".into()));
        }
    }
    Ok(())
}

fn check_input(input: &Grid<f64>, arch: &CnnArchitecture) -> Result<()> {
    if input.rows() != arch.input_height || input.cols() != arch.input_width {
        return Err(Error::ShapeMismatch {
            expected: format!("{} x {}", arch.input_height, arch.input_width),
            got: format!("{} x {}", input.rows(), input.cols()),
        });
    }
    Ok(())
}

fn gather(samples: &[SampleRecord], idx: &[usize]) -> (Vec<f64>, Vec<RegionIndex>) {
    let mut input = Vec::new();
    let mut labels = Vec::new();
    for &i in idx {
        input.extend_from_slice(samples[i].normalized_series.as_slice());
        labels.extend_from_slice(&samples[i].true_symbols);
    }
    (input, labels)
}

/// Training item `item` is sample `item / shifts` with its regions shifted
/// by `item % shifts`.
fn gather_shifted(samples: &[SampleRecord], items: &[usize], shifts: usize) -> (Vec<f64>, Vec<RegionIndex>) {
    if shifts == 1 {
        return gather(samples, items);
    }
    let mut input = Vec::new();
    let mut labels = Vec::new();
    for &item in items {
        let (s, r) = (&samples[item / shifts], item % shifts);
        let series = &s.normalized_series;
        let start = input.len();
        input.resize(start + series.as_slice().len(), 0.0);
        let cols = series.cols();
        for j in 0..shifts {
            let to = start + (j + r) % shifts * cols;
            input[to..to + cols].copy_from_slice(series.row(j));
        }
        labels.extend(s.true_symbols.iter().map(|l| RegionIndex(((l.get() + r) % shifts) as u8)));
    }
    (input, labels)
}

fn correct(pass: &ForwardPass, labels: &[RegionIndex]) -> usize {
    pass.predictions().iter().zip(labels).filter(|(p, l)| p == l).count()
}

/// Eval-mode loss and accuracy over `idx`.
fn evaluate(model: &CnnModel, samples: &[SampleRecord], idx: &[usize]) -> Result<(f64, f64)> {
    let mut total_loss = 0.0;
    let mut hits = 0;
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (input, labels) = gather(samples, chunk);
        let pass = forward(model, &input, chunk.len(), Mode::Eval)?;
        total_loss += loss(&pass, &labels)? * chunk.len() as f64;
        hits += correct(&pass, &labels);
    }
    let n = idx.len() as f64;
    Ok((total_loss / n, hits as f64 / (n * model.arch.heads as f64)))
}

/// Trains a fresh model on `samples`; see [`train_with`].
pub fn train(samples: &[SampleRecord], arch: &CnnArchitecture, cfg: &TrainConfig) -> Result<(CnnModel, TrainTrace)> {
    train_with(samples, arch, cfg, |_| {})
}

/// Mini-batch Adam training. The held-out split and the per-epoch shuffle
/// are drawn from `cfg.seed`; `on_epoch` sees each epoch's statistics as it
/// completes.
pub fn train_with(
    samples: &[SampleRecord],
    arch: &CnnArchitecture,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(CnnModel, TrainTrace)> {
    cfg.validate()?;
    arch.validate()?;
    check_dataset(samples, arch)?;
    if cfg.rotations && arch.input_height != arch.classes {
        return Err(Error::InvalidConfig(format!(
            "region rotations need as many input rows as classes ({} vs {})",
            arch.input_height, arch.classes
        )));
    }
    let shifts = if cfg.rotations { arch.classes } else { 1 };

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut substream(cfg.seed, Stream::Split, &[]));
    let n_val = (samples.len() as f64 * cfg.validation_fraction).floor() as usize;
    let n_val = n_val.min(samples.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx: Vec<usize> = train_idx.iter().flat_map(|&i| (0..shifts).map(move |r| i * shifts + r)).collect();
    if cfg.batch_size > train_idx.len() {
        return Err(Error::InvalidConfig(format!(
            "batch_size {} exceeds the {} training items",
            cfg.batch_size,
            train_idx.len()
        )));
    }

    let mut model = CnnModel::init(arch, cfg.seed)?;
    let mut state = AdamState::new(model.n_params());
    let adam = cfg.adam();

    let mut initial = 0.0;
    for batch in train_idx.chunks(cfg.batch_size) {
        let (input, labels) = gather_shifted(samples, batch, shifts);
        let pass = forward(&model, &input, batch.len(), Mode::Train)?;
        initial += loss(&pass, &labels)? * batch.len() as f64;
    }
    let mut trace = TrainTrace {
        initial_loss: initial / train_idx.len() as f64,
        epochs: Vec::with_capacity(cfg.epochs),
    };

    let mut shuffle_rng = substream(cfg.seed, Stream::Shuffle, &[]);
    let mut t = 0u64;
    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut shuffle_rng);
        let mut total_loss = 0.0;
        let mut hits = 0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let (input, labels) = gather_shifted(samples, batch, shifts);
            let pass = forward(&model, &input, batch.len(), Mode::Train)?;
            total_loss += loss(&pass, &labels)? * batch.len() as f64;
            hits += correct(&pass, &labels);
            let grads = backward(&model, &pass, &labels)?;
            t += 1;
            adam_step(&mut model.params, &grads, &mut state, t, &adam)?;
            update_running_stats(&mut model, &pass);
        }
        let n = train_idx.len() as f64;
        let (validation_loss, validation_accuracy) = if val_idx.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&model, samples, &val_idx)?;
            (Some(l), Some(a))
        };
        let stats = EpochStats {
            epoch,
            loss: total_loss / n,
            accuracy: hits as f64 / (n * arch.heads as f64),
            validation_loss,
            validation_accuracy,
        };
        on_epoch(&stats);
        trace.epochs.push(stats);
    }
    Ok((model, trace))
}

/// Per-head argmax class for one normalized `regions × bins` series.
pub fn predict(model: &CnnModel, normalized_series: &Grid<f64>) -> Result<Vec<RegionIndex>> {
    Ok(predict_batch(model, std::slice::from_ref(normalized_series))?.remove(0))
}

/// [`predict`] over many inputs.
pub fn predict_batch(model: &CnnModel, inputs: &[Grid<f64>]) -> Result<Vec<Vec<RegionIndex>>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(EVAL_CHUNK) {
        let mut data = Vec::with_capacity(chunk.len() * model.arch.input_height * model.arch.input_width);
        for g in chunk {
            check_input(g, &model.arch)?;
            data.extend_from_slice(g.as_slice());
        }
        let pass = forward(model, &data, chunk.len(), Mode::Eval)?;
        let preds = pass.predictions();
        out.extend(preds.chunks(model.arch.heads).map(|p| p.to_vec()));
    }
    Ok(out)
}
