use proptest::prelude::*;
use xmreid_core::cca::Scenario;
use xmreid_core::eval::{attribute_degradation_sweep, cmc, evaluate_scenario, PipelineConfig};
use xmreid_core::linalg::Matrix;
use xmreid_core::rng::{CounterRng, RngExt};
use xmreid_core::synth::{gen_paired, gen_splits, oracle_cmc_chance, SynthConfig};

fn random_scores(probes: usize, gallery: usize, rng: &mut CounterRng) -> Matrix {
    Matrix::from_fn(probes, gallery, |_, _| rng.unit_f64())
}

fn gallery_ids(g: usize) -> Vec<String> {
    (0..g).map(|i| format!("g{i}")).collect()
}

#[test]
fn random_scores_follow_the_uniform_rank_law() {
    let mut rng = CounterRng::new(55);
    let g = 100;
    let probes = 100_000;
    let ids = gallery_ids(g);
    let truth: Vec<String> = (0..probes).map(|_| ids[rng.below(g)].clone()).collect();
    let scores = random_scores(probes, g, &mut rng);
    let r = cmc(&scores, &ids, &truth).unwrap();
    for k in 1..=g {
        assert!((r.rank_at(k) - k as f64 / g as f64).abs() <= 0.01, "K={k}: {}", r.rank_at(k));
    }
}

#[test]
fn chance_oracle_matches_analytic_curve() {
    let est = oracle_cmc_chance(10, 1, 1_000_000, &mut CounterRng::new(56));
    assert!((est[0] - 0.1).abs() <= 0.002, "{}", est[0]);
    assert_eq!(est[9], 1.0);
    assert!(est.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn evaluation_is_seed_deterministic() {
    let c = SynthConfig { identities: 40, splits: 3, ..SynthConfig::scenario_reference() };
    let ds = gen_paired(&c).unwrap();
    let splits = gen_splits(&c);
    let cfg = PipelineConfig { cca_k: Some(5), ..PipelineConfig::default() };
    let a = evaluate_scenario(&ds, &splits, Scenario::VxVL, &cfg, 42).unwrap();
    let b = evaluate_scenario(&ds, &splits, Scenario::VxVL, &cfg, 42).unwrap();
    assert_eq!(a, b);
    for k in 1..=a.mean.len() {
        let vals: Vec<f64> = a.splits.iter().map(|s| s.rank_at(k)).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(a.mean_at(k) >= lo - 1e-12 && a.mean_at(k) <= hi + 1e-12);
    }
}

#[test]
fn attribute_sweep_is_consistent_across_seeds() {
    let mut r1 = Vec::new();
    for seed in [42, 43] {
        let c = SynthConfig { seed, ..SynthConfig::attribute_reference() };
        let ds = gen_paired(&c).unwrap();
        let splits = gen_splits(&c);
        let sweep = attribute_degradation_sweep(&ds, &splits, &[2], &PipelineConfig::default(), seed).unwrap();
        let rep = &sweep[0].1;
        let se = rep.std_at(1) / (rep.splits.len() as f64).sqrt();
        r1.push((rep.mean_at(1), se));
    }
    let (a, b) = (r1[0], r1[1]);
    let se = (a.1 * a.1 + b.1 * b.1).sqrt();
    assert!((a.0 - b.0).abs() <= 3.0 * se.max(1e-3), "{r1:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cmc_is_monotone_and_complete(seed in any::<u64>(), g in 1usize..30, p in 1usize..30) {
        let mut rng = CounterRng::new(seed);
        let ids = gallery_ids(g);
        let truth: Vec<String> = (0..p).map(|_| ids[rng.below(g)].clone()).collect();
        // Coarse scores force plenty of ties.
        let scores = Matrix::from_fn(p, g, |_, _| rng.below(4) as f64);
        let r = cmc(&scores, &ids, &truth).unwrap();
        prop_assert!(r.accuracies.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(r.accuracies[g - 1], 1.0);
    }

    #[test]
    fn cmc_ignores_increasing_transforms(seed in any::<u64>(), g in 1usize..20, p in 1usize..20) {
        let mut rng = CounterRng::new(seed);
        let ids = gallery_ids(g);
        let truth: Vec<String> = (0..p).map(|_| ids[rng.below(g)].clone()).collect();
        let scores = Matrix::from_fn(p, g, |_, _| rng.normal());
        let base = cmc(&scores, &ids, &truth).unwrap();
        let cube = Matrix::from_fn(p, g, |i, j| scores[(i, j)].powi(3));
        let exp = Matrix::from_fn(p, g, |i, j| scores[(i, j)].exp());
        prop_assert_eq!(&cmc(&cube, &ids, &truth).unwrap(), &base);
        prop_assert_eq!(&cmc(&exp, &ids, &truth).unwrap(), &base);
    }
}
