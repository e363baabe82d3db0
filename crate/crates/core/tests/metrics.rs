mod common;

use common::{count_orders, random_built_tower};
use overhang_core::metrics::{order_dependency, summarize_runs, trace_log_likelihood, Estimate};
use overhang_core::planners::{run_episode, PlannerConfig};
use overhang_core::predictors::{PerturbationConfig, Predictor, PredictorSpec};
use overhang_core::rng::seeded;
use overhang_core::sampling::random_task;
use overhang_core::{BlockSpec, PlacedBlock, TowerGeometry};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

#[test]
fn order_counts_match_permutation_walk() {
    let mut rng = seeded(31);
    let mut dependent = 0;
    for _ in 0..200 {
        let g = random_built_tower(&mut rng, 6);
        let r = order_dependency(&g).unwrap();
        let (valid, stable) = count_orders(&g);
        assert_eq!((r.valid_orders, r.stable_orders), (valid, stable), "{g:?}");
        assert!(valid >= 1 && stable <= valid);
        assert!((r.gamma - (1.0 - stable as f64 / valid as f64)).abs() < 1e-12);
        dependent += usize::from(r.gamma > 0.0);
    }
    assert!(dependent > 0, "suite never exercises an unstable prefix");
}

#[test]
fn sem_shrinks_with_root_n() {
    let noise = Normal::new(1.0, 0.5).unwrap();
    let mut rng = seeded(8);
    let mut ratio = Vec::new();
    for _ in 0..50 {
        let small: Vec<f64> = (0..40).map(|_| noise.sample(&mut rng)).collect();
        let large: Vec<f64> = (0..160).map(|_| noise.sample(&mut rng)).collect();
        ratio.push(Estimate::of(&small).unwrap().sem / Estimate::of(&large).unwrap().sem);
    }
    let mean = ratio.iter().sum::<f64>() / ratio.len() as f64;
    assert!((mean - 2.0).abs() < 0.15, "{mean}");
}

fn column(widths: &[f64]) -> TowerGeometry {
    TowerGeometry::from_blocks(
        widths
            .iter()
            .enumerate()
            .map(|(i, &w)| PlacedBlock::new(BlockSpec::new(w).unwrap(), 0.0, i as u8))
            .collect(),
    )
    .unwrap()
}

fn random_traces(seed: u64, n: usize) -> Vec<overhang_core::trace::TraceRecord> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|i| {
            let task = random_task(&mut rng, &format!("t{i}"), 6);
            let cfg = PlannerConfig::myopic(PredictorSpec::ipe()).with_seed(seed + i as u64);
            run_episode(&task, &cfg, None).unwrap().trace
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn centered_columns_have_no_order_dependency(widths in proptest::collection::vec(prop_oneof![Just(0.6), Just(1.2), Just(1.8)], 1..=6)) {
        let r = order_dependency(&column(&widths)).unwrap();
        prop_assert_eq!(r.gamma, 0.0);
        prop_assert_eq!(r.valid_orders, 1);
    }

    #[test]
    fn log_likelihoods_are_finite_and_non_positive(seed in 0u64..1000) {
        let traces = random_traces(seed, 2);
        for p in [Predictor::Veridical, Predictor::Ipe(PerturbationConfig::default())] {
            for t in &traces {
                for s in trace_log_likelihood(t, &p).unwrap() {
                    prop_assert!(s.log_likelihood.is_finite() && s.log_likelihood <= 0.0);
                }
            }
        }
    }

    #[test]
    fn summary_ignores_ingestion_order(seed in 0u64..1000) {
        let traces = random_traces(seed, 6);
        let mut shuffled = traces.clone();
        shuffled.shuffle(&mut seeded(seed));
        prop_assert_eq!(summarize_runs(&traces), summarize_runs(&shuffled));
    }
}
