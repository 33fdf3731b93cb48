//! Symbol-by-symbol maximum-likelihood detection with decision feedback.
//!
//! Each window count `R_j[k]` is modelled as Gaussian. Its mean and
//! variance add the binomial contribution of the candidate emission in
//! slot 1 to the residue of all previously decided emissions, which arrive
//! in later slots of the channel response. Decisions are greedy and fed
//! back into the residue of the following windows.

use crate::decoders::channel::ChannelCoefficients;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::topology::RegionIndex;

/// Lower clamp applied to every variance before the log-likelihood (in
/// molecules²).
pub const VARIANCE_FLOOR: f64 = 1e-9;

/// Log-likelihoods within this relative distance of the maximum count as
/// tied, so that summation-order rounding cannot break symmetric ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Lowest index whose value is within [`TIE_TOLERANCE`] of the maximum.
pub fn argmax_with_ties(values: &[f64]) -> usize {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOLERANCE * max.abs().max(1.0);
    values.iter().position(|v| *v >= max - tol).unwrap_or(0)
}

/// Default multiplier turning molecules-per-bit into the per-symbol
/// emission scale: `log₂(n_tx)/2`.
pub fn default_s_factor(n_tx: usize) -> f64 {
    n_tx.trailing_zeros() as f64 / 2.0
}

/// Decisions so far and the per-emission molecule scale of the mean model.
#[derive(Debug, Clone, PartialEq)]
pub struct MleState {
    decided: Vec<RegionIndex>,
    pub s_mssk: f64,
}

impl MleState {
    pub fn new(s_mssk: f64) -> MleState {
        MleState {
            decided: Vec::new(),
            s_mssk,
        }
    }

    pub fn with_decisions(s_mssk: f64, decided: Vec<RegionIndex>) -> MleState {
        MleState { decided, s_mssk }
    }

    pub fn decisions(&self) -> &[RegionIndex] {
        &self.decided
    }

    pub fn into_decisions(self) -> Vec<RegionIndex> {
        self.decided
    }
}

/// Expected residue of past emissions in window `k` (1-based), per region:
/// `μ_j = Σ_{z<k} s·h[x̂(z)][j][k−z+1]` and
/// `σ²_j = Σ_{z<k} s·h(1−h)` over the same coefficients.
pub fn mle_past(state: &MleState, h: &ChannelCoefficients, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if k == 0 {
        return Err(Error::InvalidInput("window index k is 1-based".into()));
    }
    if state.decided.len() < k - 1 {
        return Err(Error::InvalidInput(format!(
            "window {k} needs {} past decisions, state has {}",
            k - 1,
            state.decided.len()
        )));
    }
    let n_regions = h.n_regions();
    let mut mean = vec![0.0; n_regions];
    let mut var = vec![0.0; n_regions];
    for (z0, x) in state.decided[..k - 1].iter().enumerate() {
        let slot = k - (z0 + 1) + 1;
        if slot > h.n_slots() {
            continue;
        }
        for j in 0..n_regions {
            let p = h.get(x.get(), j, slot);
            mean[j] += state.s_mssk * p;
            var[j] += state.s_mssk * p * (1.0 - p);
        }
    }
    Ok((mean, var))
}

/// Gaussian log-likelihood of the observed window for every candidate
/// transmitter, given the state's past decisions.
pub fn mle_log_likelihoods(observed: &[f64], state: &MleState, h: &ChannelCoefficients) -> Result<Vec<f64>> {
    if observed.len() != h.n_regions() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} region counts", h.n_regions()),
            got: observed.len().to_string(),
        });
    }
    let k = state.decided.len() + 1;
    let (past_mean, past_var) = mle_past(state, h, k)?;
    let s = state.s_mssk;
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    Ok((0..h.n_tx())
        .map(|i| {
            observed
                .iter()
                .enumerate()
                .map(|(j, &r)| {
                    let p = h.get(i, j, 1);
                    let mean = past_mean[j] + s * p;
                    let var = (past_var[j] + s * p * (1.0 - p)).max(VARIANCE_FLOOR);
                    -half_ln_2pi - 0.5 * var.ln() - (r - mean).powi(2) / (2.0 * var)
                })
                .sum()
        })
        .collect())
}

/// Decides the next window and appends the decision to `state`.
pub fn mle_decode_window(observed: &[f64], state: &mut MleState, h: &ChannelCoefficients) -> Result<RegionIndex> {
    let ll = mle_log_likelihoods(observed, state, h)?;
    let decision = RegionIndex(argmax_with_ties(&ll) as u8);
    state.decided.push(decision);
    Ok(decision)
}

/// Sequential greedy decoding of real-valued window observations.
pub fn mle_decode_observations(observations: &Grid<f64>, h: &ChannelCoefficients, s_mssk: f64) -> Result<Vec<RegionIndex>> {
    let mut state = MleState::new(s_mssk);
    for row in observations.iter_rows() {
        mle_decode_window(row, &mut state, h)?;
    }
    Ok(state.into_decisions())
}

/// Sequential greedy decoding of integer window counts (`w × n_regions`).
pub fn mle_decode(window_counts: &Grid<u64>, h: &ChannelCoefficients, s_mssk: f64) -> Result<Vec<RegionIndex>> {
    mle_decode_observations(&window_counts.map(|&c| c as f64), h, s_mssk)
}
