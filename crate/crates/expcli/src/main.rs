use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use molim::codec::CodingScheme;
use molim_exp::evaluate::{evaluate_samples, DecoderInputs};
use molim_exp::pipeline::{self, bit_duration_cells, Workspace, BIT_DURATION_REPORT, MOLECULE_SWEEP_REPORT};
use molim_exp::report::{BerReport, Decoder};
use molim_exp::{Dataset, Profile, Settings};

#[derive(Parser)]
#[command(name = "molim", version, about = "Index-modulation molecular communication experiments")]
struct Cli {
    /// Config file with topology and experiment keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Run directory.
    #[arg(long, global = true, default_value = "runs/desk")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a training dataset for one window count.
    GenDataset {
        #[arg(long)]
        w: usize,
        /// Number of simulations (default from the profile).
        #[arg(long)]
        sims: Option<usize>,
        /// Molecules per symbol (default from the profile).
        #[arg(long)]
        molecules: Option<u64>,
    },
    /// Estimate and cache channel coefficients for a window count.
    EstimateChannel {
        #[arg(long)]
        w: usize,
        /// Molecules per transmitter (default from the profile).
        #[arg(long)]
        m_est: Option<u64>,
    },
    /// Train the CNN for a window count on its dataset.
    Train {
        #[arg(long)]
        w: usize,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// BER of every decoder versus molecules per bit.
    Evaluate {
        /// Window count (default from the profile).
        #[arg(long)]
        w: Option<usize>,
        /// Comma-separated molecules per bit (default from the profile).
        #[arg(long, value_delimiter = ',')]
        mpb: Vec<u64>,
        /// Symbols per cell (default from the profile).
        #[arg(long)]
        symbols: Option<usize>,
        /// Evaluate a stored dataset instead of fresh simulations.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Comma-separated subset of mcd, mle, cnn.
        #[arg(long, value_delimiter = ',')]
        decoders: Vec<Decoder>,
    },
    /// BER versus bit duration at a fixed molecules-per-bit budget.
    SweepTb {
        #[arg(long)]
        mpb: Option<u64>,
        /// Comma-separated window counts (default from the profile).
        #[arg(long, value_delimiter = ',')]
        windows: Vec<usize>,
    },
    /// Full pipeline; resumes from completed stages.
    RunAll,
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::GenDataset { .. } => "gen-dataset",
            Command::EstimateChannel { .. } => "estimate-channel",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::SweepTb { .. } => "sweep-tb",
            Command::RunAll => "run-all",
        }
    }
}

fn log(line: &str) {
    eprintln!("{line}");
}

fn evaluate_dataset(settings: &Settings, ws: &Workspace, dir: &Path, decoders: &[Decoder]) -> Result<PathBuf> {
    let ds = Dataset::load(dir)?;
    let channel = if decoders.contains(&Decoder::Mle) { Some(ws.load_channel(ds.w)?) } else { None };
    let model = if decoders.contains(&Decoder::Cnn) { Some(ws.load_model(ds.w)?) } else { None };
    let rows = evaluate_samples(
        &ds.samples,
        ds.topology.n_tx,
        ds.molecules_per_symbol as f64 / settings.s_factor,
        decoders,
        &CodingScheme::ALL,
        DecoderInputs {
            channel: channel.as_ref(),
            model: model.as_ref(),
        },
    )?;
    let path = ws.report_path(&format!("dataset_w{}", ds.w));
    BerReport { rows }.save(&path)?;
    Ok(path)
}

fn run(cli: &Cli) -> Result<()> {
    let mut settings = Settings::load(cli.profile, cli.config.as_deref())?;
    let ws = Workspace::new(&cli.out);
    let mut sink = log;
    match &cli.command {
        Command::GenDataset { w, sims, molecules } => {
            settings.n_sims = sims.unwrap_or(settings.n_sims);
            settings.m_train = molecules.unwrap_or(settings.m_train);
            pipeline::run_dataset(&settings, &ws, cli.seed, *w, &mut sink)?;
            log(&format!("wrote {}", ws.dataset_dir(*w).display()));
        }
        Command::EstimateChannel { w, m_est } => {
            settings.m_est = m_est.unwrap_or(settings.m_est);
            pipeline::run_channel(&settings, &ws, cli.seed, *w, &mut sink)?;
            log(&format!("wrote {}", ws.channel_path(*w).display()));
        }
        Command::Train { w, epochs } => {
            settings.epochs = epochs.unwrap_or(settings.epochs);
            pipeline::run_train(&settings, &ws, cli.seed, *w, &mut sink)?;
            log(&format!("wrote {}", ws.model_path(*w).display()));
        }
        Command::Evaluate { w, mpb, symbols, dataset, decoders } => {
            let decoders = if decoders.is_empty() { Decoder::ALL.to_vec() } else { decoders.clone() };
            if let Some(dir) = dataset {
                let path = evaluate_dataset(&settings, &ws, dir, &decoders)?;
                log(&format!("wrote {}", path.display()));
                return Ok(());
            }
            settings.eval_w = w.unwrap_or(settings.eval_w);
            if !mpb.is_empty() {
                settings.eval_mpb = mpb.clone();
            }
            settings.eval_symbols = symbols.unwrap_or(settings.eval_symbols);
            let cells = pipeline::molecule_sweep_cells(&settings);
            pipeline::run_evaluation(&settings, &ws, cli.seed, MOLECULE_SWEEP_REPORT, &cells, &mut sink)?;
            log(&format!("wrote {}", ws.report_path(MOLECULE_SWEEP_REPORT).display()));
        }
        Command::SweepTb { mpb, windows } => {
            let windows = if windows.is_empty() { settings.sweep_windows.clone() } else { windows.clone() };
            let cells = bit_duration_cells(&windows, mpb.unwrap_or(settings.sweep_mpb));
            pipeline::run_evaluation(&settings, &ws, cli.seed, BIT_DURATION_REPORT, &cells, &mut sink)?;
            log(&format!("wrote {}", ws.report_path(BIT_DURATION_REPORT).display()));
        }
        Command::RunAll => {
            let reports = pipeline::run_all(&settings, cli.profile, &ws, cli.seed, &mut sink)?;
            for r in reports {
                log(&format!("wrote {}", r.display()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli).with_context(|| format!("{} failed", cli.command.stage())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
