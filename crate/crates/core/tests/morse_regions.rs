use nalgebra::DMatrix;
use proptest::prelude::*;

use ndde::morse::{classify_critical_point, estimate_c2, rank_deficient_witness, separation_constants, SeparationInputs};
use ndde::regions::{classify_region, predicates, sweep_regions, ConstantsBundle, Label, RegionQuery, SweepSpec};

fn query(k: f64, tau: f64) -> RegionQuery {
    RegionQuery {
        k,
        tau,
        horizon: 1.0,
        n: 2,
        m: 2,
        q: 1,
        k_psi: 2.0,
        w: 1.0,
        wt: 1.0,
        constants: Some(ConstantsBundle { c2: 0.5, m_bound: 1.0, a: 0.0, r0: 1.0, r1: 0.25, eps: 0.1 }),
    }
}

#[test]
fn saddle_of_a_rotated_quadratic() {
    let f = |x: &[f64]| {
        let (u, v) = (x[0] + x[1], x[0] - x[1]);
        1.0 + 0.5 * u * u - 0.25 * v * v
    };
    let cp = classify_critical_point(&f, &[0.0, 0.0], 1e-3);
    assert!(cp.is_critical && cp.nondegenerate);
    assert_eq!(cp.index, 1);
    assert!((cp.eigenvalues[0] + 1.0).abs() < 1e-6 && (cp.eigenvalues[1] - 2.0).abs() < 1e-6);
}

#[test]
fn estimated_c2_feeds_the_ledger() {
    let c2 = estimate_c2(-1.0, 0.25, 0.25, 3.0, 1200).unwrap();
    let inputs = SeparationInputs { k: 1.0, a: 0.0, horizon: 1.0, m_bound: 1.0, r0: 1.0, r1: 0.25, eps: 0.1, w: 1.0, wt: 1.0, c2 };
    let c = separation_constants(&inputs).unwrap();
    assert!(c.tau0 > 0.0 && c.smallness_margin > 0.0);
    let json = serde_json::to_value(c).unwrap();
    assert_eq!(json["inputs"]["C2"], c2);
    assert!(json["tau0"].as_f64().unwrap() > 0.0);
}

#[test]
fn augmented_width_needs_n_plus_q() {
    let q = RegionQuery { m: 3, tau: 0.0, k: 2.0, ..query(0.0, 0.0) };
    assert_eq!(classify_region(&q).unwrap().label, Label::UeAugmented);
    let q = RegionQuery { m: 3, tau: 0.0, k: 1.9, ..query(0.0, 0.0) };
    assert_eq!(classify_region(&q).unwrap().label, Label::Unknown);
}

#[test]
fn mixed_dimension_sweep() {
    let spec = SweepSpec { k_min: 0.0, k_max: 20.0, tau_min: 0.0, tau_max: 1.0, resolution: 40, base: query(0.0, 0.0) };
    let g = sweep_regions(&spec).unwrap();
    assert_eq!(g.overlaps(), 0);
    assert!(g.ue_upward_closed_in_k());
    assert!(g.count(Label::UeNonAugmented) > 0);
    assert!((0..40).all(|i| g.cell(i, 0).label == Label::NotUniversal));
}

proptest! {
    #[test]
    fn witnesses_for_random_rank_deficient_matrices(seed in proptest::collection::vec(-1.0f64..1.0, 12), r0 in 0.05f64..3.0) {
        // rank 1 or 2 in dimension 3
        let a = DMatrix::from_row_slice(3, 2, &seed[..6]);
        let b = DMatrix::from_row_slice(2, 3, &seed[6..]);
        let w = a * b;
        let p = [0.1, -0.2, 0.3];
        let wit = rank_deficient_witness(&w, &p, r0).unwrap().unwrap();
        prop_assert!(wit.valid(), "{:?}", wit);
    }

    #[test]
    fn labels_never_overlap(k in 0.0f64..30.0, tau in 0.0f64..1.0, m in 1usize..5) {
        let q = RegionQuery { m, ..query(k, tau) };
        let p = predicates(&q).unwrap();
        prop_assert!(!((p.ue_nonaugmented.is_some() || p.ue_augmented.is_some()) && p.not_universal.is_some()));
    }

    #[test]
    fn ue_is_upward_closed(k in 0.0f64..30.0, extra in 0.0f64..10.0, tau in 0.0f64..1.0) {
        let a = classify_region(&query(k, tau)).unwrap().label;
        let b = classify_region(&query(k + extra, tau)).unwrap().label;
        prop_assert!(!a.is_ue() || b.is_ue());
    }

    #[test]
    fn tau0_always_small(k in 0.05f64..50.0) {
        let inputs = SeparationInputs { k, a: 0.1, horizon: 1.0, m_bound: 2.0, r0: 1.0, r1: 0.25, eps: 0.1, w: 1.0, wt: 1.0, c2: 0.5 };
        let c = separation_constants(&inputs).unwrap();
        prop_assert!(k * c.tau0 * std::f64::consts::E < 1.0);
    }
}
