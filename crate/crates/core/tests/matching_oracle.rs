use dld_core::annotations::Instance;
use dld_core::geometry::{quad_iou, OrientedBox};
use dld_core::metrics::{match_detections, Detection, EvalConfig, MatchOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Enumerates every partial one-to-one assignment of detections (in score
/// order) to GT with IoU above the threshold and keeps the one whose IoU
/// vector is lexicographically largest.
fn oracle(dets: &[Detection], gts: &[Instance], thr: f64) -> Vec<MatchOutcome> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut best: Option<(Vec<f64>, Vec<Option<usize>>)> = None;
    let mut current = Vec::new();
    fn rec(
        pos: usize,
        order: &[usize],
        dets: &[Detection],
        gts: &[Instance],
        thr: f64,
        used: &mut Vec<bool>,
        current: &mut Vec<Option<usize>>,
        best: &mut Option<(Vec<f64>, Vec<Option<usize>>)>,
    ) {
        if pos == order.len() {
            let key: Vec<f64> = current
                .iter()
                .enumerate()
                .map(|(p, g)| g.map_or(0.0, |g| quad_iou(&dets[order[p]].corners, &gts[g].corners)))
                .collect();
            if best.as_ref().is_none_or(|(k, _)| key.iter().zip(k).find(|(a, b)| a != b).is_some_and(|(a, b)| a > b)) {
                *best = Some((key, current.clone()));
            }
            return;
        }
        current.push(None);
        rec(pos + 1, order, dets, gts, thr, used, current, best);
        current.pop();
        for g in 0..gts.len() {
            if !used[g] && quad_iou(&dets[order[pos]].corners, &gts[g].corners) >= thr {
                used[g] = true;
                current.push(Some(g));
                rec(pos + 1, order, dets, gts, thr, used, current, best);
                current.pop();
                used[g] = false;
            }
        }
    }
    let mut used = vec![false; gts.len()];
    rec(0, &order, dets, gts, thr, &mut used, &mut current, &mut best);
    let (_, assignment) = best.unwrap();
    let mut out = vec![MatchOutcome::FalsePositive; dets.len()];
    for (p, g) in assignment.iter().enumerate() {
        if g.is_some() {
            out[order[p]] = MatchOutcome::TruePositive;
        }
    }
    out
}

fn jittered(rng: &mut ChaCha8Rng, cx: f64, cy: f64) -> OrientedBox {
    OrientedBox::new(
        cx + rng.random_range(-3.0..3.0),
        cy + rng.random_range(-3.0..3.0),
        rng.random_range(8.0..12.0),
        rng.random_range(8.0..12.0),
        rng.random_range(-0.4..0.4),
    )
    .unwrap()
}

#[test]
fn crafted_three_by_two() {
    // two overlapping GT; the top detection straddles both
    let g0 = OrientedBox::new(0.0, 0.0, 10.0, 10.0, 0.0).unwrap();
    let g1 = OrientedBox::new(4.0, 0.0, 10.0, 10.0, 0.0).unwrap();
    let gts = vec![Instance::new(g0.to_corners(), "a", 0).unwrap(), Instance::new(g1.to_corners(), "a", 0).unwrap()];
    let dets = vec![
        Detection::new(OrientedBox::new(2.5, 0.0, 10.0, 10.0, 0.0).unwrap().to_corners(), "a", 0.9).unwrap(),
        Detection::new(OrientedBox::new(0.5, 0.0, 10.0, 10.0, 0.0).unwrap().to_corners(), "a", 0.8).unwrap(),
        Detection::new(OrientedBox::new(4.0, 0.5, 10.0, 10.0, 0.1).unwrap().to_corners(), "a", 0.7).unwrap(),
    ];
    let cfg = EvalConfig::default();
    let got = match_detections(&dets, &gts, &cfg);
    assert_eq!(got, oracle(&dets, &gts, cfg.iou_threshold));
    assert_eq!(got, vec![MatchOutcome::TruePositive, MatchOutcome::TruePositive, MatchOutcome::FalsePositive]);
}

#[test]
fn random_clusters_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let cfg = EvalConfig { ignore_difficult: false, ..EvalConfig::default() };
    for _ in 0..300 {
        let n_gt = rng.random_range(0..4);
        let n_det = rng.random_range(0..5);
        let gts: Vec<Instance> =
            (0..n_gt).map(|i| Instance::new(jittered(&mut rng, i as f64 * 5.0, 0.0).to_corners(), "a", 0).unwrap()).collect();
        let dets: Vec<Detection> = (0..n_det)
            .map(|_| {
                let cx = rng.random_range(0.0..15.0);
                // coarse scores force ties
                let score = f64::from(rng.random_range(0..4u8)) / 4.0;
                Detection::new(jittered(&mut rng, cx, 0.0).to_corners(), "a", score).unwrap()
            })
            .collect();
        assert_eq!(match_detections(&dets, &gts, &cfg), oracle(&dets, &gts, cfg.iou_threshold));
    }
}
