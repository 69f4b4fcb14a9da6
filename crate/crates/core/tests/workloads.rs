use privknap::rdp::AlphaGrid;
use privknap::workload::*;

#[test]
fn block_count_spread_matches_sigma() {
    let corpus = build_curve_corpus(&AlphaGrid::default()).unwrap();
    let knobs = MicrobenchKnobs {
        task_count: 1000,
        sigma_blocks: 3.0,
        seed: 5,
        ..Default::default()
    };
    let counts: Vec<f64> = generate_microbenchmark(&knobs, &corpus)
        .unwrap()
        .iter()
        .map(|t| t.block_count() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (counts.len() - 1) as f64;
    // [1, 20] sits more than 3 sigma from the mean, so truncation barely moves the std
    let expected = (9.0f64 + 1.0 / 12.0).sqrt();
    assert!((var.sqrt() - expected).abs() <= 0.15 * expected, "std {}", var.sqrt());
    assert!((mean - 10.0).abs() < 0.3);
}

#[test]
fn centered_alpha_only_without_spread() {
    let corpus = build_curve_corpus(&AlphaGrid::default()).unwrap();
    let cap = reference_capacity(&corpus.grid).unwrap();
    let five = corpus.grid.index_of(5.0).unwrap();
    let knobs = MicrobenchKnobs {
        task_count: 300,
        blocks: 1,
        mu_blocks: 1,
        ..Default::default()
    };
    for t in generate_microbenchmark(&knobs, &corpus).unwrap() {
        assert_eq!(normalized_min(t.uniform_curve().unwrap(), &cap).unwrap().0, five);
    }
    let spread = MicrobenchKnobs {
        sigma_alpha: 3.0,
        ..knobs
    };
    let alphas: std::collections::BTreeSet<usize> = generate_microbenchmark(&spread, &corpus)
        .unwrap()
        .iter()
        .map(|t| normalized_min(t.uniform_curve().unwrap(), &cap).unwrap().0)
        .collect();
    assert!(alphas.len() >= 5);
}

#[test]
fn corpus_covers_every_target() {
    let corpus = build_curve_corpus(&AlphaGrid::default()).unwrap();
    assert!(corpus.curves.len() >= 500);
    for a in TARGET_ALPHAS {
        assert!(!corpus.bucket(a).is_empty(), "alpha {a}");
    }
    assert!(corpus.curves.iter().all(|c| c.normalized >= OUTLIER_THRESHOLD));
}

#[test]
fn trace_contract() {
    let corpus = build_curve_corpus(&AlphaGrid::default()).unwrap();
    let cap = reference_capacity(&corpus.grid).unwrap();
    let trace = generate_synthetic_trace(&SyntheticTraceParams::default(), 8).unwrap();
    let tasks = map_trace(&trace, &TraceMappingParams::default(), &corpus, 8).unwrap();
    assert!(tasks.len() > 900);
    let gpu_menu: Vec<&str> = MachineClass::Gpu.menu().iter().map(|m| m.name()).collect();
    let cpu_menu: Vec<&str> = MachineClass::Cpu.menu().iter().map(|m| m.name()).collect();
    for t in &tasks {
        assert!((1..=100).contains(&t.block_count()));
        let (_, v) = normalized_min(t.uniform_curve().unwrap(), &cap).unwrap();
        assert!((0.001 - 1e-12..=1.0 + 1e-12).contains(&v));
        assert_eq!(t.weight, 1.0);
        assert!(gpu_menu.contains(&t.mechanism.as_str()) || cpu_menu.contains(&t.mechanism.as_str()));
    }
    assert!(tasks.windows(2).all(|w| w[0].arrival <= w[1].arrival));
}
