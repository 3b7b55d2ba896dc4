mod common;

use corrgraph::features::{scale_by, FeatureVector, FeatureWeights};
use corrgraph::graph::{build_free_graph, similarity_matrix, SimilarityParams};
use corrgraph::propagate::{minimized_loss, PreEstimate};
use corrgraph::tune::{weights_fitness, Objective, TuningSet, TuningSlot};
use proptest::prelude::*;
use rand::Rng;

const DIMS: usize = 6;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn fixture(seed: u64, n: usize) -> (Vec<FeatureVector<f64>>, Vec<f64>) {
    let mut rng = common::rng(seed);
    let f = common::random_features(&mut rng, n, DIMS).into_iter().map(FeatureVector::new).collect();
    let y = (0..n).map(|_| rng.random_range(10.0..60.0)).collect();
    (f, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unnormalized_scaling_keeps_similarities(
        seed in 0u64..1_000_000,
        raw in prop::collection::vec(0.01f64..1.0, DIMS),
        log_c in -3.0f64..3.0,
    ) {
        let c = 10f64.powf(log_c);
        let (features, _) = fixture(seed, 15);
        let scaled: Vec<f64> = raw.iter().map(|b| b * c).collect();
        let a: Vec<_> = features.iter().map(|q| scale_by(q, &raw).unwrap()).collect();
        let b: Vec<_> = features.iter().map(|q| scale_by(q, &scaled).unwrap()).collect();
        let (sa, sb) = (similarity_matrix(&a).unwrap(), similarity_matrix(&b).unwrap());
        for (x, y) in sa.iter().zip(&sb) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn raw_scaling_keeps_weights_loss_and_fitness(
        seed in 0u64..1_000_000,
        raw in prop::collection::vec(0.01f64..1.0, DIMS),
        log_c in -3.0f64..3.0,
    ) {
        let c = 10f64.powf(log_c);
        let scaled: Vec<f64> = raw.iter().map(|b| b * c).collect();
        let wa = FeatureWeights::from_raw(&raw).unwrap();
        let wb = FeatureWeights::from_raw(&scaled).unwrap();
        let params = SimilarityParams::new(2.0, 0.0, 6).unwrap();
        let lambda = 0.3;
        let mut slots = Vec::new();
        for s in 0..3u64 {
            let (features, y) = fixture(seed.wrapping_add(s), 20);
            let ga = build_free_graph(vec![None; 20], &features, &wa, &params).unwrap();
            let gb = build_free_graph(vec![None; 20], &features, &wb, &params).unwrap();
            for (x, z) in ga.weights().iter().zip(gb.weights()) {
                prop_assert!((x - z).abs() <= 1e-9 * z.abs().max(1e-300));
            }
            let p = PreEstimate::new(0, y.clone()).unwrap();
            prop_assert!(rel(minimized_loss(&ga, &p, lambda).unwrap(), minimized_loss(&gb, &p, lambda).unwrap()) <= 1e-9);
            slots.push(TuningSlot { anchor: s, window: None, features, labels: vec![None; 20], y });
        }
        let data = TuningSet::new(slots).unwrap();
        let obj = Objective { similarity: params, lambda };
        prop_assert!(rel(weights_fitness(&wa, &data, &obj).unwrap(), weights_fitness(&wb, &data, &obj).unwrap()) <= 1e-9);
    }
}
