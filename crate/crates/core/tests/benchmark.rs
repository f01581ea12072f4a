use lfr_augment::data::DataSequence;
use lfr_augment::msd::{
    generate_datasets, generate_multisine, msd_step, simulate_msd, split_seeds, BenchmarkConfig, MsdParams,
};
use proptest::prelude::*;

#[test]
fn benchmark_amplitude_excites_the_hardening_spring() {
    let cfg = BenchmarkConfig::default();
    let seeds = split_seeds(1)[0];
    let u = generate_multisine(&cfg.multisine, cfg.transient_len() + cfg.sizes[0], seeds.excitation).unwrap();
    let p1 = simulate_msd(&cfg.truth, &[0.0; 6], &u, cfg.multisine.ts, 0);
    let peak = p1[cfg.transient_len()..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let ratio = cfg.truth.hardening * peak * peak / cfg.truth.springs[0];
    assert!(ratio >= 0.10, "cubic to linear force ratio at peak {ratio}");
}

#[test]
fn ideal_baseline_free_response_loses_energy_every_step() {
    let p = MsdParams::ideal_baseline();
    let mut x = vec![0.05, -0.02, 0.0, 0.3];
    let mut e = p.energy(&x);
    for _ in 0..2000 {
        x = msd_step(&p, &x, 0.0, 0.02);
        let next = p.energy(&x);
        assert!(next < e);
        e = next;
    }
    assert!(e < 1e-6 * p.energy(&[0.05, -0.02, 0.0, 0.3]));
}

#[test]
fn datasets_are_reproducible_per_master_seed() {
    let cfg = BenchmarkConfig {
        sizes: [4000, 2000, 2000],
        ..BenchmarkConfig::default()
    };
    let a = generate_datasets(&cfg, 3).unwrap();
    let b = generate_datasets(&cfg, 3).unwrap();
    let c = generate_datasets(&cfg, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.estimation.u, c.estimation.u);
    assert_ne!(a.estimation.u, a.validation.u);
}

#[test]
fn saved_split_loads_back_exactly() {
    let cfg = BenchmarkConfig {
        sizes: [500, 300, 300],
        ..BenchmarkConfig::default()
    };
    let bundle = generate_datasets(&cfg, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("validation.csv");
    bundle.validation.save(&path).unwrap();
    assert_eq!(DataSequence::load(&path).unwrap(), bundle.validation);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_finite_sequence_round_trips(rows in prop::collection::vec((any::<f64>(), any::<f64>()), 1..40), seed in any::<u64>()) {
        let rows: Vec<(f64, f64)> = rows.into_iter().filter(|(a, b)| a.is_finite() && b.is_finite()).collect();
        prop_assume!(!rows.is_empty());
        let mut seq = DataSequence::new(
            rows.iter().map(|r| vec![r.0]).collect(),
            rows.iter().map(|r| vec![r.1]).collect(),
            0.02,
        ).unwrap();
        seq.seed = seed;
        seq.snr_db = 30.0;
        let mut buf = Vec::new();
        seq.write_to(&mut buf).unwrap();
        prop_assert_eq!(DataSequence::read_from(buf.as_slice()).unwrap(), seq);
    }
}
