use proptest::prelude::*;

use cadops::brep::{parse_brep, serialize_brep, validate_topology, TypeVocabulary};
use cadops::heads::{hungarian, step_loss_value};
use cadops::metrics::{evaluate, ModelEval};
use cadops::nn::{riou, softmax_rows, Matrix};
use cadops::rng::SplitMix64;
use cadops::sketch::svg::{chains, view_box};
use cadops::synth::{generate_model, GenParams};

fn square(n: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(0.0f64..10.0, n * n).prop_map(move |d| Matrix::from_vec(n, n, d).unwrap())
}

fn cost_of(m: &Matrix, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(r, &c)| m.get(r, c)).sum()
}

/// Dense step labels with every step present, plus a stochastic prediction.
fn labels_and_prediction() -> impl Strategy<Value = (Vec<usize>, Matrix)> {
    (1usize..5, 0usize..3, 0usize..10).prop_flat_map(|(k, extra_cols, extra_faces)| {
        let n = k + extra_faces;
        let k_s = k + extra_cols;
        (
            Just(k),
            prop::collection::vec(0..k, extra_faces),
            prop::collection::vec(0.01f64..1.0, n * k_s),
            any::<u64>(),
        )
            .prop_map(move |(k, rest, logits, seed)| {
                let mut gt: Vec<usize> = (0..k).chain(rest).collect();
                SplitMix64::new(seed).shuffle(&mut gt);
                let m = softmax_rows(&Matrix::from_vec(n, k_s, logits).unwrap());
                (gt, m)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn hungarian_is_a_permutation_no_worse_than_identity_or_reverse(m in (1usize..7).prop_flat_map(square)) {
        let a = hungarian(&m).unwrap();
        let n = m.rows();
        let mut seen = a.perm.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        let identity: Vec<usize> = (0..n).collect();
        let reverse: Vec<usize> = (0..n).rev().collect();
        prop_assert!(cost_of(&m, &a.perm) <= cost_of(&m, &identity) + 1e-12);
        prop_assert!(cost_of(&m, &a.perm) <= cost_of(&m, &reverse) + 1e-12);
        prop_assert!((cost_of(&m, &a.perm) - a.total_cost).abs() <= 1e-9);
    }

    #[test]
    fn riou_is_symmetric_and_bounded(v in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..12)) {
        let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        prop_assume!(a.iter().sum::<f64>() > 1e-6 && b.iter().sum::<f64>() > 1e-6);
        let x = riou(&a, &b).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&x));
        prop_assert!((x - riou(&b, &a).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn step_loss_is_bounded_and_ignores_numbering((gt, s_hat) in labels_and_prediction(), seed in any::<u64>()) {
        let l = step_loss_value(&gt, &s_hat).unwrap();
        prop_assert!((0.0..=1.0).contains(&l));
        let k = gt.iter().max().unwrap() + 1;
        let mut ids: Vec<usize> = (0..k).collect();
        SplitMix64::new(seed).shuffle(&mut ids);
        let relabeled: Vec<usize> = gt.iter().map(|&s| ids[s]).collect();
        prop_assert!((step_loss_value(&relabeled, &s_hat).unwrap() - l).abs() <= 1e-12);
    }

    #[test]
    fn softmax_rows_are_distributions(d in prop::collection::vec(-50.0f64..50.0, 12)) {
        let m = softmax_rows(&Matrix::from_vec(3, 4, d).unwrap());
        for r in 0..3 {
            prop_assert!((m.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(m.row(r).iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn shuffle_is_a_permutation(seed in any::<u64>(), n in 0usize..50) {
        let mut v: Vec<usize> = (0..n).collect();
        SplitMix64::new(seed).shuffle(&mut v);
        v.sort_unstable();
        prop_assert_eq!(v, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn metrics_are_bounded_and_ignore_step_numbering(
        faces in prop::collection::vec((0usize..4, 0u64..4, 0usize..4, 0u64..4), 1..20),
        offset in 1u64..100,
    ) {
        let vocab = TypeVocabulary::extrude_family();
        let m = ModelEval {
            name: "m".into(),
            gt_types: faces.iter().map(|f| f.0).collect(),
            gt_steps: faces.iter().map(|f| f.1).collect(),
            pred_types: faces.iter().map(|f| f.2).collect(),
            pred_steps: faces.iter().map(|f| f.3).collect(),
        };
        let shifted = ModelEval { pred_steps: m.pred_steps.iter().map(|s| 3 - s + offset).collect(), ..m.clone() };
        let (a, b) = (evaluate(&[m], &vocab).unwrap(), evaluate(&[shifted], &vocab).unwrap());
        for x in [a.type_macc, a.type_miou, a.step_macc, a.r_c, a.ms_c, a.face_acc_pooled] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        prop_assert_eq!((a.step_macc, a.r_c, a.ms_c), (b.step_macc, b.r_c, b.ms_c));
    }

    #[test]
    fn view_box_contains_every_segment(segs in prop::collection::vec(((-5.0f64..5.0, -5.0f64..5.0), (-5.0f64..5.0, -5.0f64..5.0)), 1..10)) {
        let segs: Vec<[[f64; 2]; 2]> = segs.iter().map(|&((a, b), (c, d))| [[a, b], [c, d]]).collect();
        let (x0, y0, size) = view_box(&segs).unwrap();
        for p in segs.iter().flatten() {
            // SVG y points down.
            prop_assert!(p[0] >= x0 && p[0] <= x0 + size);
            prop_assert!(-p[1] >= y0 && -p[1] <= y0 + size);
        }
        let n_points: usize = chains(&segs).iter().map(|(pts, closed)| pts.len() - 1 + usize::from(*closed)).sum();
        prop_assert_eq!(n_points, segs.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn generated_models_are_valid_and_round_trip(seed in any::<u64>(), steps_max in 1usize..5) {
        let g = generate_model(seed, &GenParams { steps_max, ..Default::default() }).unwrap();
        prop_assert!(validate_topology(&g.brep).is_valid());
        let text = serialize_brep(&g.brep).unwrap();
        prop_assert_eq!(parse_brep(&text).unwrap(), g.brep.clone());
        prop_assert!(g.k() >= 1 && g.k() <= steps_max);
    }
}
