//! Higher Order Tracking Accuracy.
//!
//! Follows the reference formulation: per-frame matches maximize IoU weighted
//! by a global GT/prediction ID alignment score, then for every localization
//! threshold α the matches with IoU ≥ α give DetA and AssA, and HOTA averages
//! `sqrt(DetA·AssA)` over the α sweep.

use serde::{Deserialize, Serialize};

use super::{by_frame, id_index, similarity};
use crate::lap::max_weight_matching;
use crate::tracker::TrackRow;

/// 0.05, 0.10, …, 0.95.
pub fn default_alphas() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HotaResult {
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
}

pub fn hota(gt: &[TrackRow], pred: &[TrackRow], alphas: &[f64]) -> HotaResult {
    let gi = id_index(gt);
    let pi = id_index(pred);
    let (ng, np) = (gi.len(), pi.len());
    let frames = by_frame(gt, pred);

    let mut gt_count = vec![0.0f64; ng];
    let mut pred_count = vec![0.0f64; np];
    let mut potential = vec![0.0f64; ng * np];
    let mut sims: Vec<Vec<f64>> = Vec::with_capacity(frames.len());
    for (g, p) in frames.values() {
        let s: Vec<f64> = g
            .iter()
            .flat_map(|&i| p.iter().map(move |&j| similarity(&gt[i], &pred[j])))
            .collect();
        let row_sum: Vec<f64> = (0..g.len()).map(|a| s[a * p.len()..(a + 1) * p.len()].iter().sum()).collect();
        let col_sum: Vec<f64> = (0..p.len()).map(|b| (0..g.len()).map(|a| s[a * p.len() + b]).sum()).collect();
        for (a, &i) in g.iter().enumerate() {
            gt_count[gi[&gt[i].track_id]] += 1.0;
            for (b, &j) in p.iter().enumerate() {
                let v = s[a * p.len() + b];
                if v > 0.0 {
                    potential[gi[&gt[i].track_id] * np + pi[&pred[j].track_id]] += v / (row_sum[a] + col_sum[b] - v);
                }
            }
        }
        for &j in p {
            pred_count[pi[&pred[j].track_id]] += 1.0;
        }
        sims.push(s);
    }
    let global: Vec<f64> = (0..ng * np)
        .map(|k| {
            let d = gt_count[k / np] + pred_count[k % np] - potential[k];
            if d > 0.0 {
                potential[k] / d
            } else {
                0.0
            }
        })
        .collect();

    let na = alphas.len();
    let mut tp = vec![0usize; na];
    let mut matches = vec![vec![0.0f64; ng * np]; na];
    for ((g, p), s) in frames.values().zip(&sims) {
        let pairs = max_weight_matching(g.len(), p.len(), |a, b| {
            let v = s[a * p.len() + b];
            let w = global[gi[&gt[g[a]].track_id] * np + pi[&pred[p[b]].track_id]] * v;
            (w > 0.0).then_some(w)
        });
        for &(a, b) in &pairs {
            let v = s[a * p.len() + b];
            let k = gi[&gt[g[a]].track_id] * np + pi[&pred[p[b]].track_id];
            for (ai, &alpha) in alphas.iter().enumerate() {
                if v >= alpha - 1e-12 {
                    tp[ai] += 1;
                    matches[ai][k] += 1.0;
                }
            }
        }
    }

    let (n_gt, n_pred) = (gt.len(), pred.len());
    let mut hs = 0.0;
    let mut ds = 0.0;
    let mut as_ = 0.0;
    for ai in 0..na {
        let t = tp[ai];
        let det_a = if n_gt + n_pred == 0 {
            0.0
        } else {
            t as f64 / (n_gt + n_pred - t) as f64
        };
        let mut ass_sum = 0.0;
        for (k, &m) in matches[ai].iter().enumerate() {
            if m > 0.0 {
                ass_sum += m * m / (gt_count[k / np] + pred_count[k % np] - m);
            }
        }
        let ass_a = ass_sum / (t.max(1)) as f64;
        hs += (det_a * ass_a).sqrt();
        ds += det_a;
        as_ += ass_a;
    }
    let n = na.max(1) as f64;
    HotaResult {
        hota: hs / n,
        det_a: ds / n,
        ass_a: as_ / n,
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_rows::*;
    use super::*;
    use crate::geom::BBox;

    #[test]
    fn perfect_tracking_is_one() {
        let mut gt = straight(1, 20, 0.0);
        gt.extend(straight(2, 20, 5.0));
        let r = hota(&gt, &gt, &default_alphas());
        assert_eq!((r.hota, r.det_a, r.ass_a), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_prediction_is_zero() {
        let gt = straight(1, 5, 0.0);
        let r = hota(&gt, &[], &default_alphas());
        assert_eq!((r.hota, r.det_a), (0.0, 0.0));
    }

    #[test]
    fn single_switch_by_hand() {
        // one GT track of 10 frames; prediction switches ID at frame 5, boxes exact
        let gt = straight(1, 10, 0.0);
        let pred: Vec<_> = gt
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.track_id = if r.frame < 5 { 5 } else { 6 };
                r
            })
            .collect();
        let r = hota(&gt, &pred, &default_alphas());
        // DetA = 1; each pair has 5 matches over 10 + 5 - 5 = 10 → A = 0.5; AssA = 0.5
        assert!((r.det_a - 1.0).abs() < 1e-12);
        assert!((r.ass_a - 0.5).abs() < 1e-12);
        assert!((r.hota - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn localization_threshold_sweep() {
        // IoU of each pair is exactly 0.5 (box half-shifted vertically by 1/3 of height)
        let gt: Vec<_> = (0..4).map(|f| row(f, 1, BBox::new(0.0, 0.0, 10.0, 12.0))).collect();
        let pred: Vec<_> = (0..4).map(|f| row(f, 2, BBox::new(0.0, 4.0, 10.0, 12.0))).collect();
        assert!((similarity(&gt[0], &pred[0]) - 0.5).abs() < 1e-12);
        let r = hota(&gt, &pred, &default_alphas());
        // α ≤ 0.5 → perfect (10 values), α > 0.5 → zero (9 values)
        assert!((r.hota - 10.0 / 19.0).abs() < 1e-12);
    }

    #[test]
    fn bounded_and_relabel_invariant() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let gt = random_rows(&mut rng, 4, 10);
            let pred = random_rows(&mut rng, 5, 10);
            let r = hota(&gt, &pred, &default_alphas());
            for v in [r.hota, r.det_a, r.ass_a] {
                assert!((0.0..=1.0).contains(&v));
            }
            let relabeled: Vec<_> = pred
                .iter()
                .map(|x| {
                    let mut x = x.clone();
                    x.track_id = 1000 - x.track_id;
                    x
                })
                .collect();
            let s = hota(&gt, &relabeled, &default_alphas());
            assert!((r.hota - s.hota).abs() < 1e-12);
        }
    }
}
