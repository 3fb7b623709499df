use dermfair_core::metrics::{auc, hausdorff, seg_scores};
use dermfair_core::BinaryMask;
use proptest::prelude::*;

fn arb_points() -> impl Strategy<Value = Vec<(u32, u32)>> {
    prop::collection::vec((0u32..24, 0u32..24), 1..20)
}

fn arb_mask() -> impl Strategy<Value = BinaryMask> {
    prop::collection::vec(any::<bool>(), 64).prop_map(|bits| BinaryMask::from_bits(8, 8, bits))
}

proptest! {
    #[test]
    fn hausdorff_is_symmetric(a in arb_points(), b in arb_points()) {
        prop_assert_eq!(hausdorff(&a, &b), hausdorff(&b, &a));
    }

    #[test]
    fn hausdorff_triangle_inequality(a in arb_points(), b in arb_points(), c in arb_points()) {
        let (ab, bc, ac) = (hausdorff(&a, &b), hausdorff(&b, &c), hausdorff(&a, &c));
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn hausdorff_zero_on_identical_sets(a in arb_points()) {
        prop_assert_eq!(hausdorff(&a, &a), 0.0);
    }

    #[test]
    fn overlap_scores_are_ordered(p in arb_mask(), t in arb_mask()) {
        prop_assume!(!t.is_empty());
        let s = seg_scores(&p, &t).unwrap();
        for v in [s.iou, s.dice, s.recall] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(s.iou <= s.dice);
        prop_assert_eq!(s.confusion.total(), 64);
    }

    #[test]
    fn auc_flips_with_labels(scores in prop::collection::vec((0u8..10, any::<bool>()), 2..15)) {
        let samples: Vec<(f64, bool)> = scores.iter().map(|&(s, l)| (f64::from(s), l)).collect();
        prop_assume!(samples.iter().any(|s| s.1) && samples.iter().any(|s| !s.1));
        let flipped: Vec<(f64, bool)> = samples.iter().map(|&(s, l)| (s, !l)).collect();
        let (a, b) = (auc(&samples).unwrap(), auc(&flipped).unwrap());
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_under_monotone_rescoring(scores in prop::collection::vec((0u8..10, any::<bool>()), 2..15)) {
        let samples: Vec<(f64, bool)> = scores.iter().map(|&(s, l)| (f64::from(s), l)).collect();
        prop_assume!(samples.iter().any(|s| s.1) && samples.iter().any(|s| !s.1));
        let squashed: Vec<(f64, bool)> = samples.iter().map(|&(s, l)| (1.0 / (1.0 + (-s).exp()), l)).collect();
        prop_assert_eq!(auc(&samples).unwrap(), auc(&squashed).unwrap());
    }

    #[test]
    fn dice_iou_identity_on_32x32(bits in prop::collection::vec(any::<(bool, bool)>(), 1024)) {
        let p = BinaryMask::from_bits(32, 32, bits.iter().map(|b| b.0).collect());
        let t = BinaryMask::from_bits(32, 32, bits.iter().map(|b| b.1).collect());
        prop_assume!(!t.is_empty());
        let s = seg_scores(&p, &t).unwrap();
        prop_assert!((s.dice - 2.0 * s.iou / (1.0 + s.iou)).abs() <= 1e-12);
    }

    #[test]
    fn auc_ignores_sample_order(
        scores in prop::collection::vec((0u8..10, any::<bool>()), 2..15),
        rotate in 0usize..15,
    ) {
        let samples: Vec<(f64, bool)> = scores.iter().map(|&(s, l)| (f64::from(s), l)).collect();
        prop_assume!(samples.iter().any(|s| s.1) && samples.iter().any(|s| !s.1));
        let mut shuffled = samples.clone();
        shuffled.rotate_left(rotate % samples.len());
        shuffled.reverse();
        prop_assert_eq!(auc(&samples).unwrap(), auc(&shuffled).unwrap());
    }
}
