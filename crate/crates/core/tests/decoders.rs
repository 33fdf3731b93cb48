use molim::decoders::{mcd_decode, mle_decode, mle_decode_observations, mle_decode_window, mle_past, ChannelCoefficients, MleState};
use molim::{Grid, RegionIndex};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Reference MCD: the first index whose count is not exceeded anywhere and
/// strictly exceeds every earlier index.
fn mcd_oracle(row: &[u64]) -> usize {
    (0..row.len())
        .find(|&i| row.iter().all(|&c| row[i] >= c) && row[..i].iter().all(|&c| row[i] > c))
        .unwrap()
}

#[test]
fn mcd_matches_brute_force_on_random_matrices() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
    for _ in 0..100 {
        let w = rng.random_range(1..=10);
        // Small counts make ties common.
        let data: Vec<u64> = (0..w * 8).map(|_| rng.random_range(0..4)).collect();
        let counts = Grid::from_vec(w, 8, data);
        let decoded = mcd_decode(&counts);
        let expected: Vec<RegionIndex> = counts.iter_rows().map(|r| RegionIndex(mcd_oracle(r) as u8)).collect();
        assert_eq!(decoded, expected);
        let scaled = counts.map(|c| c * 13);
        assert_eq!(mcd_decode(&scaled), decoded);
    }
    let fixed = Grid::from_vec(3, 8, vec![5, 1, 0, 0, 0, 0, 0, 2, 3, 3, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
    assert_eq!(mcd_decode(&fixed), vec![RegionIndex(0); 3]);
}

/// Synthetic ISI channel: conjugate-peaked spatial profile, geometric decay
/// over slots.
fn synthetic_channel(n_slots: usize) -> ChannelCoefficients {
    ChannelCoefficients::from_fn(8, 8, n_slots, 0.5, |i, j, k| {
        let d = (j + 8 - i) % 8;
        let d = d.min(8 - d) as f64;
        0.04 * (-0.7 * d).exp() * 0.6f64.powi(k as i32 - 1)
    })
    .unwrap()
}

/// Independent Gaussian log-likelihood of candidate `i` for window `k`
/// (1-based) given earlier decisions.
fn oracle_ll(r: &[f64], decided: &[usize], i: usize, h: &ChannelCoefficients, s: f64) -> f64 {
    let k = decided.len() + 1;
    let mut total = 0.0;
    for (j, &rj) in r.iter().enumerate() {
        let mut mean = s * h.get(i, j, 1);
        let mut var = s * h.get(i, j, 1) * (1.0 - h.get(i, j, 1));
        for (z, &x) in decided.iter().enumerate() {
            let p = h.get(x, j, k - (z + 1) + 1);
            mean += s * p;
            var += s * p * (1.0 - p);
        }
        let var = var.max(1e-9);
        total += (1.0 / (2.0 * std::f64::consts::PI * var).sqrt()).ln() - (rj - mean).powi(2) / (2.0 * var);
    }
    total
}

fn oracle_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[test]
fn single_window_matches_brute_force_likelihoods() {
    let h = ChannelCoefficients::from_fn(8, 8, 1, 1.0, |i, j, _| if i == j { 0.5 } else { 0.01 }).unwrap();
    let s = 100.0;
    let mut r = vec![0.0; 8];
    r[2] = s * 0.5;
    let lls: Vec<f64> = (0..8).map(|i| oracle_ll(&r, &[], i, &h, s)).collect();
    assert_eq!(oracle_argmax(&lls), 2);
    let mut state = MleState::new(s);
    assert_eq!(mle_decode_window(&r, &mut state, &h).unwrap(), RegionIndex(2));

    for c in [2.0, 10.0] {
        let scaled: Vec<f64> = r.iter().map(|v| v * c).collect();
        let mut state = MleState::new(s * c);
        assert_eq!(mle_decode_window(&scaled, &mut state, &h).unwrap(), RegionIndex(2));
    }

    let symmetric = vec![7.0; 8];
    let mut state = MleState::new(s);
    assert_eq!(mle_decode_window(&symmetric, &mut state, &h).unwrap(), RegionIndex(0));
}

#[test]
fn three_windows_match_exhaustive_greedy_oracle() {
    let h = synthetic_channel(3);
    let s = 300.0;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(17);
    for _ in 0..20 {
        let data: Vec<u64> = (0..24).map(|_| rng.random_range(0..20)).collect();
        let counts = Grid::from_vec(3, 8, data);
        let obs: Vec<Vec<f64>> = counts.iter_rows().map(|r| r.iter().map(|&c| c as f64).collect()).collect();
        // Exactly one of the 512 sequences is consistent with greedy
        // decisions at every window.
        let mut consistent = Vec::new();
        for seq in 0..512usize {
            let x = [seq / 64, (seq / 8) % 8, seq % 8];
            let ok = (0..3).all(|k| {
                let lls: Vec<f64> = (0..8).map(|i| oracle_ll(&obs[k], &x[..k], i, &h, s)).collect();
                oracle_argmax(&lls) == x[k]
            });
            if ok {
                consistent.push(x);
            }
        }
        assert_eq!(consistent.len(), 1);
        let expected: Vec<RegionIndex> = consistent[0].iter().map(|&v| RegionIndex(v as u8)).collect();
        assert_eq!(mle_decode(&counts, &h, s).unwrap(), expected);
    }
}

#[test]
fn noiseless_observations_are_recovered() {
    let w = 10;
    let h = synthetic_channel(w);
    let s = 1e4;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    for _ in 0..20 {
        let truth: Vec<usize> = (0..w).map(|_| rng.random_range(0..8)).collect();
        let mut obs = Grid::<f64>::zeros(w, 8);
        for k in 0..w {
            for j in 0..8 {
                obs.row_mut(k)[j] = (0..=k).map(|z| s * h.get(truth[z], j, k - z + 1)).sum();
            }
        }
        let decoded = mle_decode_observations(&obs, &h, s).unwrap();
        let decoded: Vec<usize> = decoded.iter().map(|d| d.get()).collect();
        assert_eq!(decoded, truth);
    }
}

#[test]
fn past_moments_follow_binomial_model() {
    let h = synthetic_channel(4);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
    let decided: Vec<RegionIndex> = (0..6).map(|_| RegionIndex(rng.random_range(0..8))).collect();
    let state = MleState::with_decisions(250.0, decided.clone());
    for k in 1..=7 {
        let (mean, var) = mle_past(&state, &h, k).unwrap();
        for j in 0..8 {
            let expected: f64 = (1..k)
                .map(|z| 250.0 * h.get(decided[z - 1].get(), j, k - z + 1))
                .sum();
            assert!((mean[j] - expected).abs() < 1e-12);
            assert!(var[j] <= mean[j]);
        }
    }
    let zero = ChannelCoefficients::from_fn(8, 8, 4, 0.5, |_, _, _| 0.0).unwrap();
    let (mean, var) = mle_past(&state, &zero, 7).unwrap();
    assert!(mean.iter().chain(&var).all(|v| *v == 0.0));
    assert!(mle_past(&state, &h, 0).is_err());
}

#[test]
fn isi_free_channel_decodes_windows_independently() {
    let h = ChannelCoefficients::from_fn(8, 8, 5, 1.0, |i, j, k| {
        if k > 1 {
            0.0
        } else if i == j {
            0.3
        } else {
            0.02 * ((i + j) % 3 + 1) as f64
        }
    })
    .unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(8);
    let data: Vec<u64> = (0..40).map(|_| rng.random_range(0..60)).collect();
    let counts = Grid::from_vec(5, 8, data);
    let seq = mle_decode(&counts, &h, 100.0).unwrap();
    for (k, row) in counts.iter_rows().enumerate() {
        let r: Vec<f64> = row.iter().map(|&c| c as f64).collect();
        let mut fresh = MleState::new(100.0);
        assert_eq!(mle_decode_window(&r, &mut fresh, &h).unwrap(), seq[k]);
    }
}

#[test]
fn equal_variances_reduce_to_nearest_mean() {
    // With h ∈ {p, 1−p} every candidate shares the same variance per region.
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
    for p in [0.1, 0.25, 0.4] {
        let h = ChannelCoefficients::from_fn(2, 2, 2, 1.0, |i, j, k| {
            let base = if i == j { 1.0 - p } else { p };
            if k == 1 { base } else { 0.0 }
        })
        .unwrap();
        for _ in 0..50 {
            let r: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..120.0)).collect();
            let past: Vec<RegionIndex> = vec![RegionIndex(rng.random_range(0..2))];
            let mut state = MleState::with_decisions(150.0, past.clone());
            let (pm, _) = mle_past(&state, &h, 2).unwrap();
            let dist: Vec<f64> = (0..2)
                .map(|i| (0..2).map(|j| (r[j] - pm[j] - 150.0 * h.get(i, j, 1)).powi(2)).sum())
                .collect();
            let nearest = if dist[1] < dist[0] { 1 } else { 0 };
            assert_eq!(mle_decode_window(&r, &mut state, &h).unwrap(), RegionIndex(nearest));
        }
    }
}
