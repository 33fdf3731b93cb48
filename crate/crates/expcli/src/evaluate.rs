//! Decoding samples with each decoder and tallying bit errors.

use std::time::Instant;

use anyhow::{bail, ensure, Result};
use molim::cnn::{predict_batch, CnnModel};
use molim::codec::{bit_duration, symbol_bit_errors, CodingScheme};
use molim::decoders::{mcd_decode, mle_decode, ChannelCoefficients};
use molim::diffusion::{SampleRecord, Simulator};
use molim::{build_topology, Grid, RegionIndex, TopologyConfig};
use rayon::prelude::*;

use crate::dataset::simulate_sample;
use crate::report::{BerRow, Decoder};

/// Artifacts the decoders need; only those of requested decoders must be set.
#[derive(Debug, Clone, Copy, Default)]
pub struct DecoderInputs<'a> {
    pub channel: Option<&'a ChannelCoefficients>,
    pub model: Option<&'a CnnModel>,
}

/// Fresh evaluation samples: enough `w`-symbol simulations to cover
/// `n_symbols` symbols.
pub fn eval_samples(
    topology: &TopologyConfig,
    w: usize,
    molecules_per_symbol: u64,
    n_symbols: usize,
    seed: u64,
) -> Result<Vec<SampleRecord>> {
    let topo = build_topology(topology)?;
    let sim = Simulator::new(&topo);
    let n_sims = n_symbols.div_ceil(w);
    Ok((0..n_sims as u64)
        .map(|s| simulate_sample(&sim, w, molecules_per_symbol, seed, s))
        .collect::<molim::Result<Vec<_>>>()?)
}

/// Decodes every sample with `decoder`.
pub fn decode_samples(samples: &[SampleRecord], decoder: Decoder, inputs: DecoderInputs<'_>) -> Result<Vec<Vec<RegionIndex>>> {
    let Some(first) = samples.first() else {
        return Ok(Vec::new());
    };
    let w = first.true_symbols.len();
    match decoder {
        Decoder::Mcd => Ok(samples.iter().map(|s| mcd_decode(&s.window_counts)).collect()),
        Decoder::Mle => {
            let Some(h) = inputs.channel else {
                bail!("MLE needs channel coefficients for w={w}");
            };
            ensure!(
                (h.symbol_duration - first.symbol_duration).abs() <= 1e-9 * first.symbol_duration,
                "channel coefficients were estimated for t_s = {} s, samples use {} s",
                h.symbol_duration,
                first.symbol_duration
            );
            let s_mssk = first.molecules_per_symbol as f64;
            Ok(samples
                .par_iter()
                .map(|s| mle_decode(&s.window_counts, h, s_mssk))
                .collect::<molim::Result<Vec<_>>>()?)
        }
        Decoder::Cnn => {
            let Some(model) = inputs.model else {
                bail!("CNN needs a trained model for w={w}");
            };
            ensure!(model.arch.heads == w, "model has {} heads, samples have w={w}", model.arch.heads);
            let inputs: Vec<Grid<f64>> = samples.iter().map(|s| s.normalized_series.clone()).collect();
            Ok(predict_batch(model, &inputs)?)
        }
    }
}

/// One report row per (decoder, coding) over a shared sample set.
pub fn evaluate_samples(
    samples: &[SampleRecord],
    n_tx: usize,
    molecules_per_bit: f64,
    decoders: &[Decoder],
    codings: &[CodingScheme],
    inputs: DecoderInputs<'_>,
) -> Result<Vec<BerRow>> {
    let Some(first) = samples.first() else {
        bail!("no samples to evaluate");
    };
    let w = first.true_symbols.len();
    let mps = first.molecules_per_symbol;
    ensure!(
        samples.iter().all(|s| s.true_symbols.len() == w && s.molecules_per_symbol == mps),
        "evaluation samples mix window counts or molecule budgets"
    );
    let t_b = bit_duration(first.symbol_duration, n_tx)?;
    let mut rows = Vec::new();
    for &decoder in decoders {
        let start = Instant::now();
        let decoded = decode_samples(samples, decoder, inputs)?;
        let seconds = start.elapsed().as_secs_f64();
        for &coding in codings {
            let mut errors = 0;
            let mut bits = 0;
            for (s, d) in samples.iter().zip(&decoded) {
                errors += symbol_bit_errors(&s.true_symbols, d, coding, n_tx)?;
                bits += (s.true_symbols.len() * n_tx.trailing_zeros() as usize) as u64;
            }
            rows.push(BerRow {
                decoder,
                coding,
                w,
                t_b_s: t_b,
                molecules_per_bit,
                molecules_per_symbol: mps,
                n_bits: bits,
                bit_errors: errors,
                ber: errors as f64 / bits as f64,
                seconds,
            });
        }
    }
    Ok(rows)
}
