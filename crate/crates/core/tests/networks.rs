use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

use ndde::dense_resnet::discretize;
use ndde::embedding::{embed_augmented, embed_basic, embed_nonaugmented, max_error, TargetMap, TargetSpec};
use ndde::fields::{ForcedField, TanhDelay};
use ndde::neural_dde::{classify_architecture, parameterized_gap_bound, AffineMap, Architecture, NeuralDde, NeuralDdeConfig};
use ndde::rng::stream;
use ndde::Error;

fn random_net(seed: u64, n: usize, m: usize, q: usize, r: usize) -> NeuralDde {
    let mut rng = stream(seed, 2);
    let mut mat = |rows: usize, cols: usize| DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
    let input = AffineMap::new(mat(m, n), mat(m, 1).column(0).into_owned()).unwrap();
    let output = AffineMap::new(mat(q, m), mat(q, 1).column(0).into_owned()).unwrap();
    let tau = r as f64 * 0.1;
    let field = TanhDelay::random(m, tau, &mut stream(seed, 3));
    NeuralDde::new(input, Arc::new(field), tau, 1.0, output).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dense_network_equals_solver(seed in 0u64..10_000, n in 1usize..4, m in 1usize..5, q in 1usize..4, r in 0usize..11) {
        let net = random_net(seed, n, m, q, r);
        let dn = discretize(&net, 10).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5).sin()).collect();
        prop_assert_eq!(dn.dense_forward(&x).unwrap(), net.forward(&x, 10).unwrap());
        for l in 0..10 {
            prop_assert!(dn.layer_arguments(l).iter().all(|&a| a <= l));
        }
    }
}

#[test]
fn spec_json_round_trip_for_tanh_network() {
    let net = random_net(5, 2, 3, 1, 4);
    let cfg = net.to_config().unwrap();
    let text = serde_json::to_string_pretty(&cfg).unwrap();
    for key in ["\"n\"", "\"m\"", "\"q\"", "\"tau\"", "\"T\"", "\"W\"", "\"b\"", "\"W_tilde\"", "\"b_tilde\"", "\"field\""] {
        assert!(text.contains(key), "missing {key}");
    }
    let back: NeuralDdeConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    let rebuilt = back.build().unwrap();
    assert_eq!(rebuilt.forward(&[0.2, -0.4], 20).unwrap(), net.forward(&[0.2, -0.4], 20).unwrap());
}

#[test]
fn spec_json_for_embeddings() {
    let sq = TargetMap::named(TargetSpec::Square, 0.0, 2.0).unwrap();
    for net in [embed_basic(&sq, 1.0).unwrap(), embed_augmented(&sq, 0.5, 4.0, 1.0, 1.0, 1.0, 3).unwrap()] {
        let cfg = net.to_config().unwrap();
        let back: NeuralDdeConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        let rebuilt = back.build().unwrap();
        assert_eq!(rebuilt.forward(&[1.3], 100).unwrap(), net.forward(&[1.3], 100).unwrap());
    }
}

#[test]
fn spec_json_rejects_bad_input() {
    let bad = r#"{"n":1,"m":2,"q":1,"tau":0.5,"T":1,"W":[[1]],"b":[0],"W_tilde":[[1]],"b_tilde":[0],"field":{"name":"zero"}}"#;
    let cfg: NeuralDdeConfig = serde_json::from_str(bad).unwrap();
    assert!(cfg.build().is_err());
    let unknown = r#"{"n":1,"m":1,"q":1,"tau":0.5,"T":1,"W":[[1]],"b":[0],"W_tilde":[[1]],"b_tilde":[0],"field":{"name":"nope"}}"#;
    let cfg: NeuralDdeConfig = serde_json::from_str(unknown).unwrap();
    assert!(matches!(cfg.build(), Err(Error::Invalid(_))));
}

#[test]
fn embeddings_share_architecture_labels() {
    let neg2 = TargetMap::named(TargetSpec::Neg { dim: 2 }, -1.0, 1.0).unwrap();
    let non = embed_nonaugmented(&neg2, 0.5, 8.0, 1.0, 1.0, 1.0, None).unwrap();
    assert_eq!(non.architecture(), Architecture::NonAugmented);
    let aug = embed_augmented(&neg2, 0.5, 1.0, 1.0, 1.0, 1.0, 4).unwrap();
    assert_eq!(aug.architecture(), Architecture::Augmented);
    assert_eq!(classify_architecture(aug.n(), aug.m(), aug.q()), Architecture::Augmented);
}

#[test]
fn nonaugmented_error_halves_with_the_step_for_several_targets() {
    let targets = [
        TargetMap::named(TargetSpec::Affine { a: 0.5, b: 0.3 }, -2.0, 2.0).unwrap(),
        TargetMap::named(TargetSpec::Sin, -2.0, 2.0).unwrap(),
    ];
    for psi in targets {
        let k = 2.0 * (1.0 + psi.lipschitz);
        let net = embed_nonaugmented(&psi, 1.0, k, 1.0, 1.0, 1.0, None).unwrap();
        let samples = psi.diagonal_samples(11);
        let e1 = max_error(&net, &psi, &samples, 500).unwrap();
        let e2 = max_error(&net, &psi, &samples, 1000).unwrap();
        assert!((e1 / e2 - 2.0).abs() < 0.05, "{}: {e1} {e2}", psi.name);
        assert!(e2 <= 5e-3);
    }
}

#[test]
fn scaled_nonaugmented_embedding() {
    // w, w~ != 1 and a delay shorter than the horizon
    let psi = TargetMap::named(TargetSpec::Neg { dim: 1 }, -2.0, 2.0).unwrap();
    let net = embed_nonaugmented(&psi, 0.5, 10.0, 2.0, 0.5, 1.0, None).unwrap();
    let err = max_error(&net, &psi, &psi.diagonal_samples(9), 2000).unwrap();
    assert!(err < 1e-2, "{err}");
}

#[test]
fn domain_violations_surface_as_errors() {
    let sq = TargetMap::named(TargetSpec::Square, 0.0, 2.0).unwrap();
    let net = embed_basic(&sq, 1.0).unwrap();
    assert!(matches!(net.forward(&[-0.5], 10), Err(Error::Domain { .. })));
}

#[test]
fn gap_grows_with_state_feedback_beyond_the_simple_bound() {
    // With y' = y(t) + g the perturbation is amplified by e^{Kt}; the
    // reported Gronwall bound still covers it.
    let base = Arc::new(ndde::fields::LinearDelay::new(1, 1.0, 0.0));
    let id = AffineMap::linear(DMatrix::identity(1, 1));
    let net = NeuralDde::new(id.clone(), base.clone(), 0.0, 1.0, id).unwrap();
    let pert = NeuralDde { field: Arc::new(ForcedField::scalar(base, |_| 0.01, 0.01)), ..net.clone() };
    let rep = parameterized_gap_bound(&net, &pert, 0.01, &[vec![1.0]], 1000).unwrap();
    assert!(rep.empirical_max > rep.theory_bound);
    assert!(rep.empirical_max <= rep.gronwall_bound);
}
