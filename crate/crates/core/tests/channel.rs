use molim::decoders::estimate_channel;
use molim::diffusion::Simulator;
use molim::{build_topology, TopologyConfig};

#[test]
fn estimated_channel_is_conjugate_peaked_and_rotation_symmetric() {
    let topo = build_topology(&TopologyConfig::default()).unwrap();
    let sim = Simulator::new(&topo);
    let m = 20_000;
    let h = estimate_channel(&sim, 0.5, 10, m, 3).unwrap();
    assert_eq!(h.m_est, m);
    for i in 0..8 {
        let total = h.absorbed_fraction(i);
        assert!(total > 0.0 && total <= 1.0);
        assert!(h.get(i, i, 1) > h.get(i, (i + 4) % 8, 1));
    }
    assert!(h.get(0, 0, 1) > h.get(0, 4, 1));

    let mut violations = 0;
    for i in 0..8 {
        for j in 0..8 {
            for k in 1..=10 {
                let a = h.get(i, j, k);
                let b = h.get((i + 1) % 8, (j + 1) % 8, k);
                let p = 0.5 * (a + b);
                // Standard deviation of the difference of two binomial estimates.
                let sd = (2.0 * p * (1.0 - p) / m as f64).sqrt();
                if (a - b).abs() > 3.0 * sd + 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    // Out of 640 comparisons about 0.3% exceed 3σ by chance.
    assert!(violations <= 8, "{violations} of 640 pairs outside 3σ");
}
