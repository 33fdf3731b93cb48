use molim::diffusion::{brownian_step, step_sigma, Emission, Simulator, StepMode};
use molim::rng::Stream;
use molim::{build_topology, RegionIndex, TopologyConfig, Vec3};
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

fn reference_topology() -> molim::Topology {
    build_topology(&TopologyConfig::default()).unwrap()
}

/// Chi-square homogeneity statistic of two count vectors, skipping empty
/// categories; returns (statistic, degrees of freedom).
fn chi2_homogeneity(a: &[u64], b: &[u64]) -> (f64, usize) {
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let n = na + nb;
    let mut stat = 0.0;
    let mut cats = 0;
    for (&x, &y) in a.iter().zip(b) {
        let total = (x + y) as f64;
        if total == 0.0 {
            continue;
        }
        cats += 1;
        let ea = total * na / n;
        let eb = total * nb / n;
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    (stat, cats - 1)
}

/// Upper 0.01 quantiles of the chi-square distribution.
fn chi2_crit_01(dof: usize) -> f64 {
    [6.635, 9.210, 11.345, 13.277, 15.086, 16.812, 18.475, 20.090, 21.666, 23.209][dof - 1]
}

#[test]
fn step_moments_match_diffusion_coefficient() {
    let cfg = TopologyConfig::default();
    let sigma = step_sigma(cfg.diffusion_coeff, cfg.dt_sim);
    let var_expected = 2.0 * cfg.diffusion_coeff * cfg.dt_sim;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(99);
    let n = 1_000_000;
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    for _ in 0..n {
        let d = brownian_step(Vec3::ZERO, sigma, &mut rng).to_array();
        for a in 0..3 {
            sum[a] += d[a];
            sq[a] += d[a] * d[a];
        }
    }
    for a in 0..3 {
        let mean = sum[a] / n as f64;
        let var = sq[a] / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02 * sigma, "axis {a} mean {mean}");
        assert!((var / var_expected - 1.0).abs() < 0.02, "axis {a} variance {var}");
    }
}

#[test]
fn molecules_are_conserved_and_events_ordered() {
    let topo = reference_topology();
    let sim = Simulator::new(&topo);
    for seed in 0..5 {
        let symbols: Vec<RegionIndex> = (0..5).map(|k| RegionIndex(((k * 3 + seed) % 8) as u8)).collect();
        let rec = sim.simulate_sequence(&symbols, 1.0, 400, seed as u64).unwrap();
        assert_eq!(rec.emitted(), 2000);
        assert_eq!(rec.absorbed() as usize, rec.events.len());
        assert!(rec.absorbed() <= rec.emitted());
        let window_total: u64 = rec.window_counts.as_slice().iter().sum();
        let series_total: u64 = rec.series.as_slice().iter().map(|&c| c as u64).sum();
        assert_eq!(window_total, rec.absorbed());
        assert_eq!(series_total, rec.absorbed());
        assert!(rec.events.windows(2).all(|p| p[0].time <= p[1].time));
        assert!(rec.events.iter().all(|e| e.time > 0.0 && e.time < 5.0));
    }

    // Counting survivors one molecule at a time gives the same balance.
    let mut absorbed = 0;
    let mut surviving = 0;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
    for _ in 0..300 {
        match sim.simulate_molecule(RegionIndex(2), 0.0, 5.0, &mut rng) {
            Some(_) => absorbed += 1,
            None => surviving += 1,
        }
    }
    assert_eq!(absorbed + surviving, 300);
}

#[test]
fn nothing_arrives_before_the_first_emission() {
    let topo = reference_topology();
    let sim = Simulator::new(&topo);
    let emissions = [
        Emission { time: 1.5, tx: RegionIndex(4), count: 500 },
        Emission { time: 3.0, tx: RegionIndex(1), count: 500 },
    ];
    let events = sim.simulate_emissions(&emissions, 5.0, 8, Stream::Molecule);
    assert!(!events.is_empty());
    assert!(events.iter().all(|e| e.time > 1.5 && e.time < 5.0));
}

#[test]
fn relabeling_the_transmitter_rotates_the_counts() {
    let topo = reference_topology();
    let sim = Simulator::new(&topo);
    let mut base = [0u64; 8];
    let mut rotated = [0u64; 8];
    for run in 0..50u64 {
        let a = sim.simulate_sequence(&[RegionIndex(0)], 5.0, 400, 1_000 + run).unwrap();
        let b = sim.simulate_sequence(&[RegionIndex(1)], 5.0, 400, 2_000 + run).unwrap();
        for j in 0..8 {
            base[j] += a.window_counts.row(0)[j];
            // Region j+1 under transmitter 1 plays the role of region j.
            rotated[j] += b.window_counts.row(0)[(j + 1) % 8];
        }
    }
    let (stat, dof) = chi2_homogeneity(&base, &rotated);
    assert!(stat < chi2_crit_01(dof), "chi-square {stat} ({dof} dof): {base:?} vs {rotated:?}");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let topo = reference_topology();
    let sim = Simulator::new(&topo);
    let symbols = [RegionIndex(3), RegionIndex(6), RegionIndex(0)];
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sim.simulate_sequence(&symbols, 5.0 / 3.0, 700, 77).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.events, four.events);
    assert_eq!(one.series, four.series);
    assert_eq!(one.events, run(2).events);
}

#[test]
fn far_field_jumps_agree_with_exact_stepping() {
    let topo = reference_topology();
    let exact = Simulator::with_mode(&topo, StepMode::Exact);
    let adaptive = Simulator::new(&topo);
    let m = 3_000;
    // Categories: region × {first, second half of the horizon}, plus survivors.
    let histogram = |sim: &Simulator, seed: u64| {
        let events = sim.simulate_emissions(
            &[Emission { time: 0.0, tx: RegionIndex(0), count: m }],
            5.0,
            seed,
            Stream::Molecule,
        );
        let mut h = vec![0u64; 17];
        for e in &events {
            h[e.region.get() * 2 + usize::from(e.time >= 2.5)] += 1;
        }
        h[16] = m - events.len() as u64;
        let mean_time = events.iter().map(|e| e.time).sum::<f64>() / events.len() as f64;
        (h, mean_time)
    };
    let (he, te) = histogram(&exact, 5);
    let (ha, ta) = histogram(&adaptive, 6);
    let (stat, dof) = chi2_homogeneity(&he, &ha);
    // 0.01 quantile for 16 degrees of freedom.
    let crit = if dof == 16 { 32.0 } else { chi2_crit_01(dof.min(10)) };
    assert!(stat < crit, "chi-square {stat} ({dof} dof)\nexact {he:?}\nadaptive {ha:?}");
    println!("mean absorption time exact {te:.3} s, adaptive {ta:.3} s");
}

#[test]
fn same_seed_same_events() {
    let topo = reference_topology();
    let sim = Simulator::new(&topo);
    let symbols = [RegionIndex(5), RegionIndex(2)];
    let a = sim.simulate_sequence(&symbols, 2.5, 500, 4).unwrap();
    let b = sim.simulate_sequence(&symbols, 2.5, 500, 4).unwrap();
    let c = sim.simulate_sequence(&symbols, 2.5, 500, 5).unwrap();
    assert_eq!(a.events, b.events);
    assert_ne!(a.events, c.events);
}
