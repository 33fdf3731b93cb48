//! On-disk layout of an experiment run and the stages that fill it.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use molim::cnn::{train_with, CheckpointMeta, CnnModel, TrainTrace};
use molim::codec::CodingScheme;
use molim::decoders::{estimate_channel, ChannelCoefficients};
use molim::diffusion::Simulator;
use molim::rng::{derive_seed, Stream};
use molim::build_topology;
use serde::Serialize;

use crate::dataset::{config_hash, gen_dataset, Dataset};
use crate::evaluate::{eval_samples, evaluate_samples, DecoderInputs};
use crate::report::{BerReport, Decoder, ReportMeta};
use crate::settings::{Profile, Settings};

pub const MOLECULE_SWEEP_REPORT: &str = "ber_vs_molecules";
pub const BIT_DURATION_REPORT: &str = "ber_vs_tb";

/// Directory tree of one run.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Workspace {
        Workspace { root: root.into() }
    }

    pub fn settings_path(&self) -> PathBuf {
        self.root.join("settings.txt")
    }

    pub fn dataset_dir(&self, w: usize) -> PathBuf {
        self.root.join("datasets").join(format!("w{w}"))
    }

    pub fn channel_path(&self, w: usize) -> PathBuf {
        self.root.join("channels").join(format!("w{w}.chan"))
    }

    pub fn model_path(&self, w: usize) -> PathBuf {
        self.root.join("models").join(format!("w{w}.ckpt"))
    }

    pub fn model_meta_path(&self, w: usize) -> PathBuf {
        self.root.join("models").join(format!("w{w}.meta.txt"))
    }

    pub fn trace_path(&self, w: usize) -> PathBuf {
        self.root.join("models").join(format!("w{w}.trace.csv"))
    }

    pub fn report_path(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(format!("{name}.csv"))
    }

    pub fn marker_path(&self, stage: &str) -> PathBuf {
        self.root.join("stages").join(format!("{stage}.done"))
    }

    pub fn is_done(&self, stage: &str) -> bool {
        self.marker_path(stage).exists()
    }

    pub fn load_channel(&self, w: usize) -> Result<ChannelCoefficients> {
        let path = self.channel_path(w);
        if !path.exists() {
            bail!(
                "channel coefficients for w={w} not found at {}; run `molim estimate-channel --w {w}` first",
                path.display()
            );
        }
        Ok(ChannelCoefficients::load(&path)?)
    }

    pub fn load_model(&self, w: usize) -> Result<CnnModel> {
        let path = self.model_path(w);
        if !path.exists() {
            bail!(
                "CNN checkpoint for w={w} not found at {}; run `molim train --w {w}` first",
                path.display()
            );
        }
        Ok(CnnModel::load(&path)?)
    }

    pub fn load_dataset(&self, w: usize) -> Result<Dataset> {
        let dir = self.dataset_dir(w);
        if !dir.exists() {
            bail!(
                "dataset for w={w} not found at {}; run `molim gen-dataset --w {w}` first",
                dir.display()
            );
        }
        Dataset::load(&dir)
    }
}

/// A failed pipeline stage.
#[derive(Debug)]
pub struct StageError {
    pub stage: String,
    pub source: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed: {:#}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

pub fn dataset_seed(seed: u64, w: usize) -> u64 {
    derive_seed(seed, Stream::Sample, &[w as u64])
}

pub fn channel_seed(seed: u64, w: usize) -> u64 {
    derive_seed(seed, Stream::Channel, &[w as u64])
}

pub fn train_seed(seed: u64, w: usize) -> u64 {
    derive_seed(seed, Stream::Init, &[w as u64])
}

pub fn eval_seed(seed: u64) -> u64 {
    derive_seed(seed, Stream::Evaluation, &[])
}

pub type Log<'a> = &'a mut dyn FnMut(&str);

pub fn run_dataset(settings: &Settings, ws: &Workspace, seed: u64, w: usize, log: Log<'_>) -> Result<Dataset> {
    log(&format!(
        "generating dataset w={w}: {} simulations at {} molecules per symbol",
        settings.n_sims, settings.m_train
    ));
    let ds = gen_dataset(&settings.topology, w, settings.n_sims, settings.m_train, dataset_seed(seed, w))?;
    ds.save(&ws.dataset_dir(w))?;
    Ok(ds)
}

pub fn run_channel(settings: &Settings, ws: &Workspace, seed: u64, w: usize, log: Log<'_>) -> Result<ChannelCoefficients> {
    let t_s = settings.topology.symbol_duration(w);
    log(&format!("estimating channel for t_s={t_s:.4} s with {} molecules per transmitter", settings.m_est));
    let topo = build_topology(&settings.topology)?;
    let sim = Simulator::new(&topo);
    let h = estimate_channel(&sim, t_s, w, settings.m_est, channel_seed(seed, w))?;
    h.save(&ws.channel_path(w))?;
    Ok(h)
}

#[derive(Serialize)]
struct TraceRow {
    epoch: usize,
    loss: f64,
    accuracy: Option<f64>,
    validation_loss: Option<f64>,
    validation_accuracy: Option<f64>,
}

fn write_trace(path: &Path, trace: &TrainTrace) -> Result<()> {
    let mut out = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    out.serialize(TraceRow {
        epoch: 0,
        loss: trace.initial_loss,
        accuracy: None,
        validation_loss: None,
        validation_accuracy: None,
    })?;
    for e in &trace.epochs {
        out.serialize(TraceRow {
            epoch: e.epoch,
            loss: e.loss,
            accuracy: Some(e.accuracy),
            validation_loss: e.validation_loss,
            validation_accuracy: e.validation_accuracy,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn run_train(settings: &Settings, ws: &Workspace, seed: u64, w: usize, log: Log<'_>) -> Result<(CnnModel, TrainTrace)> {
    let ds = ws.load_dataset(w)?;
    if config_hash(&ds.topology) != config_hash(&settings.topology) {
        bail!("dataset for w={w} was generated with a different topology");
    }
    if ds.w != w {
        bail!("dataset in {} holds w={}, expected {w}", ws.dataset_dir(w).display(), ds.w);
    }
    let arch = settings.architecture(w);
    let cfg = settings.train_config(train_seed(seed, w));
    log(&format!(
        "training w={w}: {} samples{}, {} filters, {} epochs",
        ds.samples.len(),
        if cfg.rotations { " with region rotations" } else { "" },
        arch.filters,
        cfg.epochs
    ));
    let (model, trace) = train_with(&ds.samples, &arch, &cfg, |e| {
        if e.epoch == 1 || e.epoch % 10 == 0 || e.epoch == cfg.epochs {
            let val = e
                .validation_accuracy
                .map(|a| format!(", validation accuracy {a:.3}"))
                .unwrap_or_default();
            log(&format!("  epoch {}: loss {:.4}, accuracy {:.3}{val}", e.epoch, e.loss, e.accuracy));
        }
    })?;
    model.save(&ws.model_path(w))?;
    CheckpointMeta {
        w,
        seed: cfg.seed,
        epochs: trace.epochs.len(),
        final_loss: trace.final_loss(),
    }
    .save(&ws.model_meta_path(w))?;
    write_trace(&ws.trace_path(w), &trace)?;
    Ok((model, trace))
}

/// Evaluates all decoders under both codings on fresh samples for every
/// `(w, molecules per bit)` cell and writes the report with its sidecar.
pub fn run_evaluation(
    settings: &Settings,
    ws: &Workspace,
    seed: u64,
    name: &str,
    cells: &[(usize, u64)],
    log: Log<'_>,
) -> Result<BerReport> {
    let mut report = BerReport::default();
    let mut meta = ReportMeta::default();
    let es = eval_seed(seed);
    meta.push("seed", seed);
    meta.push("eval_seed", es);
    meta.push("eval_symbols", settings.eval_symbols);
    meta.push("s_factor", settings.s_factor);
    meta.push("config_hash", config_hash(&settings.topology));
    let mut seen = BTreeSet::new();
    for &(w, mpb) in cells {
        let channel = ws.load_channel(w)?;
        let model = ws.load_model(w)?;
        if seen.insert(w) {
            meta.push(format!("channel_seed_w{w}"), channel_seed(seed, w));
            meta.push(format!("train_seed_w{w}"), train_seed(seed, w));
        }
        let mps = settings.molecules_per_symbol(mpb);
        log(&format!(
            "evaluating w={w} at {mpb} molecules per bit ({mps} per symbol), {} symbols",
            settings.eval_symbols
        ));
        let samples = eval_samples(&settings.topology, w, mps, settings.eval_symbols, es)?;
        let rows = evaluate_samples(
            &samples,
            settings.topology.n_tx,
            mpb as f64,
            &Decoder::ALL,
            &CodingScheme::ALL,
            DecoderInputs {
                channel: Some(&channel),
                model: Some(&model),
            },
        )?;
        for r in &rows {
            log(&format!("  {} {}: ber {:.4} ({}/{})", r.decoder, r.coding.label(), r.ber, r.bit_errors, r.n_bits));
        }
        report.rows.extend(rows);
    }
    let path = ws.report_path(name);
    report.save(&path)?;
    meta.save(&path)?;
    Ok(report)
}

pub fn molecule_sweep_cells(settings: &Settings) -> Vec<(usize, u64)> {
    settings.eval_mpb.iter().map(|&m| (settings.eval_w, m)).collect()
}

pub fn bit_duration_cells(windows: &[usize], mpb: u64) -> Vec<(usize, u64)> {
    windows.iter().map(|&w| (w, mpb)).collect()
}

fn run_stage<T>(ws: &Workspace, stage: &str, log: Log<'_>, f: impl FnOnce(Log<'_>) -> Result<T>) -> Result<(), StageError> {
    if ws.is_done(stage) {
        log(&format!("[{stage}] already complete, skipping"));
        return Ok(());
    }
    log(&format!("[{stage}]"));
    let wrap = |source: anyhow::Error| StageError {
        stage: stage.to_string(),
        source,
    };
    f(log).map_err(wrap)?;
    let marker = ws.marker_path(stage);
    fs::create_dir_all(marker.parent().expect("marker has a parent"))
        .and_then(|_| fs::write(&marker, b"done\n"))
        .with_context(|| format!("writing {}", marker.display()))
        .map_err(wrap)?;
    Ok(())
}

fn settings_record(settings: &Settings, profile: Profile, seed: u64) -> String {
    format!("# profile = {profile}\n# seed = {seed}\n{}", settings.to_text())
}

/// Every stage, in order: datasets, channels, models, then the two reports.
/// Completed stages leave a marker and are skipped when the run is resumed.
/// Returns the report paths.
pub fn run_all(
    settings: &Settings,
    profile: Profile,
    ws: &Workspace,
    seed: u64,
    log: Log<'_>,
) -> Result<Vec<PathBuf>, StageError> {
    let setup = |source| StageError {
        stage: "setup".into(),
        source,
    };
    settings.validate().map_err(setup)?;
    let record = settings_record(settings, profile, seed);
    let path = ws.settings_path();
    if path.exists() {
        let existing = fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(setup)?;
        if existing != record {
            return Err(setup(anyhow::anyhow!(
                "{} holds a run with different settings or seed; use a fresh --out directory",
                ws.root.display()
            )));
        }
    } else {
        fs::create_dir_all(&ws.root)
            .and_then(|_| fs::write(&path, &record))
            .with_context(|| format!("writing {}", path.display()))
            .map_err(setup)?;
    }

    for &w in &settings.windows {
        run_stage(ws, &format!("dataset-w{w}"), log, |l| run_dataset(settings, ws, seed, w, l))?;
    }
    let eval_windows: BTreeSet<usize> = settings
        .sweep_windows
        .iter()
        .copied()
        .chain(std::iter::once(settings.eval_w))
        .collect();
    for &w in &eval_windows {
        run_stage(ws, &format!("channel-w{w}"), log, |l| run_channel(settings, ws, seed, w, l))?;
    }
    for &w in &settings.windows {
        run_stage(ws, &format!("train-w{w}"), log, |l| run_train(settings, ws, seed, w, l))?;
    }
    run_stage(ws, "evaluate", log, |l| {
        run_evaluation(settings, ws, seed, MOLECULE_SWEEP_REPORT, &molecule_sweep_cells(settings), l)
    })?;
    run_stage(ws, "sweep-tb", log, |l| {
        let cells = bit_duration_cells(&settings.sweep_windows, settings.sweep_mpb);
        run_evaluation(settings, ws, seed, BIT_DURATION_REPORT, &cells, l)
    })?;
    Ok(vec![ws.report_path(MOLECULE_SWEEP_REPORT), ws.report_path(BIT_DURATION_REPORT)])
}
