use dld_core::dld::{dld_loss, top_k_size, DldConfig, LossBatch};
use dld_core::dynamics::{detect_el, ElParams, EpochSeries};
use dld_core::geometry::{rotated_iou, OrientedBox};
use dld_core::metrics::{average_precision, interpolated_precision, ApMode};
use proptest::prelude::*;

fn obb() -> impl Strategy<Value = OrientedBox> {
    (-20.0..20.0f64, -20.0..20.0f64, 0.5..30.0f64, 0.5..30.0f64, -4.0..4.0f64)
        .prop_map(|(x, y, w, h, a)| OrientedBox::new(x, y, w, h, a).unwrap())
}

fn flags() -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), 0..30)
}

fn pr(flags: &[bool], num_gt: usize) -> (Vec<f64>, Vec<f64>) {
    let mut tp = 0;
    flags
        .iter()
        .enumerate()
        .map(|(i, f)| {
            tp += *f as usize;
            (tp as f64 / num_gt as f64, tp as f64 / (i + 1) as f64)
        })
        .unzip()
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in obb(), b in obb()) {
        let ab = rotated_iou(&a, &b);
        prop_assert_eq!(ab.to_bits(), rotated_iou(&b, &a).to_bits());
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn self_iou_is_one(a in obb()) {
        prop_assert!((rotated_iou(&a, &a) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iou_is_translation_invariant(a in obb(), b in obb(), dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
        let shift = |o: &OrientedBox| OrientedBox::new(o.cx() + dx, o.cy() + dy, o.w(), o.h(), o.angle()).unwrap();
        prop_assert!((rotated_iou(&a, &b) - rotated_iou(&shift(&a), &shift(&b))).abs() < 1e-9);
    }

    #[test]
    fn prepending_a_tp_never_lowers_ap(f in flags(), extra in 1usize..5) {
        let num_gt = f.iter().filter(|x| **x).count() + extra;
        let mut g = vec![true];
        g.extend(&f);
        for mode in [ApMode::AllPoint, ApMode::Voc07ElevenPoint] {
            prop_assert!(average_precision(&g, num_gt, mode) >= average_precision(&f, num_gt, mode) - 1e-12);
        }
    }

    #[test]
    fn appending_an_fp_never_raises_ap(f in flags(), extra in 0usize..5) {
        let num_gt = (f.iter().filter(|x| **x).count() + extra).max(1);
        let mut g = f.clone();
        g.push(false);
        for mode in [ApMode::AllPoint, ApMode::Voc07ElevenPoint] {
            prop_assert!(average_precision(&g, num_gt, mode) <= average_precision(&f, num_gt, mode) + 1e-12);
        }
    }

    // Any step approximation that takes the interpolated precision at the
    // right end of each recall interval stays below the all-point area.
    #[test]
    fn all_point_dominates_right_endpoint_sums(f in flags(), extra in 0usize..5, cuts in prop::collection::vec(0.0..1.0f64, 0..12)) {
        let num_gt = (f.iter().filter(|x| **x).count() + extra).max(1);
        let (recall, precision) = pr(&f, num_gt);
        let mut levels = cuts;
        levels.push(0.0);
        levels.push(1.0);
        levels.sort_by(f64::total_cmp);
        let sum: f64 = levels.windows(2).map(|w| (w[1] - w[0]) * interpolated_precision(&recall, &precision, w[1])).sum();
        prop_assert!(sum <= average_precision(&f, num_gt, ApMode::AllPoint) + 1e-12);
    }

    #[test]
    fn decay_touches_exactly_top_k(losses in prop::collection::vec(0.0..20.0f64, 1..200), k in 0.0..0.5f64, ec in 1u32..40, el in 1u32..40) {
        let batch = LossBatch::from_losses(losses.clone()).unwrap();
        let out = dld_loss(&batch, ec, &DldConfig::new(k, el)).unwrap();
        let decayed = out.weights.iter().filter(|w| **w != 1.0).count();
        if ec > el && k > 0.0 {
            prop_assert_eq!(out.top_k, top_k_size(losses.len(), k));
            prop_assert_eq!(decayed, out.top_k);
            let smallest_decayed = losses.iter().zip(&out.weights).filter(|(_, w)| **w != 1.0).map(|(l, _)| *l).fold(f64::INFINITY, f64::min);
            let largest_kept = losses.iter().zip(&out.weights).filter(|(_, w)| **w == 1.0).map(|(l, _)| *l).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(smallest_decayed >= largest_kept);
        } else if ec < el {
            prop_assert_eq!(decayed, 0);
        }
        prop_assert!(out.loss <= batch.mean() + 1e-12);
    }

    #[test]
    fn el_is_monotone_in_eta(a in 0.3..0.9f64, tau in 2.0..9.0f64, wobble in 0.0..0.02f64, e1 in 1e-4..5e-3f64, ratio in 1.0..10.0f64) {
        let s = EpochSeries::from_values("acc", &(1..=36).map(|t| {
            let t = t as f64;
            a * (1.0 - (-t / tau).exp()) + wobble * (t / 5.0).sin()
        }).collect::<Vec<_>>()).unwrap();
        let el = |eta| detect_el(&s, &ElParams { eta, ..ElParams::default() }).unwrap().el.unwrap_or(u32::MAX);
        prop_assert!(el(e1 * ratio) <= el(e1));
    }

    #[test]
    fn el_scale_identity(a in 0.3..0.9f64, tau in 2.0..9.0f64, scale in prop::sample::select(vec![0.25, 2.0, 8.0, 100.0])) {
        let s = EpochSeries::from_values("acc", &(1..=36).map(|t| a * (1.0 - (-(t as f64) / tau).exp())).collect::<Vec<_>>()).unwrap();
        let p = ElParams::default();
        let scaled = detect_el(&s.scaled(scale), &p).unwrap();
        let rescaled = detect_el(&s, &ElParams { eta: p.eta / scale, ..p }).unwrap();
        prop_assert_eq!(scaled.el, rescaled.el);
    }
}
