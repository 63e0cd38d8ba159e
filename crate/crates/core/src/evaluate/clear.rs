//! Per-frame matching, CLEAR MOTA and identity F1.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{by_frame, id_index, similarity};
use crate::lap::max_weight_matching;
use crate::tracker::TrackRow;

/// One matched GT/prediction pair: row indices into the inputs and their IoU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub gt: usize,
    pub pred: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatch {
    pub frame: u32,
    pub n_gt: usize,
    pub n_pred: usize,
    pub pairs: Vec<MatchPair>,
}

/// Maximum-IoU one-to-one matching per frame, keeping pairs with IoU ≥ `iou_thresh`.
/// Boxes of different classes never match.
pub fn match_frames(gt: &[TrackRow], pred: &[TrackRow], iou_thresh: f64) -> Vec<FrameMatch> {
    by_frame(gt, pred)
        .into_iter()
        .map(|(frame, (g, p))| {
            let pairs = max_weight_matching(g.len(), p.len(), |i, j| {
                let s = similarity(&gt[g[i]], &pred[p[j]]);
                (s >= iou_thresh && s > 0.0).then_some(s)
            })
            .into_iter()
            .map(|(i, j)| MatchPair {
                gt: g[i],
                pred: p[j],
                iou: similarity(&gt[g[i]], &pred[p[j]]),
            })
            .collect();
            FrameMatch {
                frame,
                n_gt: g.len(),
                n_pred: p.len(),
                pairs,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub idsw: usize,
    pub gt: usize,
}

impl ClearCounts {
    /// `1 − (FN + FP + IDSW) / GT`; 0 GT objects count as one for the denominator.
    pub fn mota(&self) -> f64 {
        1.0 - (self.fn_ + self.fp + self.idsw) as f64 / self.gt.max(1) as f64
    }
}

/// CLEAR counts. Pairs that continue the previous frame's correspondence win
/// ties over new pairs; an ID switch is counted when a GT object is matched to
/// a different prediction ID than at its last match.
pub fn clear_counts(gt: &[TrackRow], pred: &[TrackRow], iou_thresh: f64) -> ClearCounts {
    let mut last: HashMap<u64, u64> = HashMap::new();
    let mut c = ClearCounts {
        tp: 0,
        fp: 0,
        fn_: 0,
        idsw: 0,
        gt: gt.len(),
    };
    for (_, (g, p)) in by_frame(gt, pred) {
        // a continuation bonus larger than any sum of IoUs makes kept pairs lexicographically preferred
        let bonus = (g.len().min(p.len()) + 1) as f64;
        let pairs = max_weight_matching(g.len(), p.len(), |i, j| {
            let (a, b) = (&gt[g[i]], &pred[p[j]]);
            let s = similarity(a, b);
            if s < iou_thresh || s <= 0.0 {
                return None;
            }
            let keep = last.get(&a.track_id) == Some(&b.track_id);
            Some(if keep { s + bonus } else { s })
        });
        for &(i, j) in &pairs {
            let (a, b) = (&gt[g[i]], &pred[p[j]]);
            if let Some(&prev) = last.get(&a.track_id) {
                if prev != b.track_id {
                    c.idsw += 1;
                }
            }
            last.insert(a.track_id, b.track_id);
        }
        c.tp += pairs.len();
        c.fn_ += g.len() - pairs.len();
        c.fp += p.len() - pairs.len();
    }
    c
}

pub fn mota(gt: &[TrackRow], pred: &[TrackRow], iou_thresh: f64) -> f64 {
    clear_counts(gt, pred, iou_thresh).mota()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdCounts {
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

impl IdCounts {
    pub fn idf1(&self) -> f64 {
        let denom = 2 * self.idtp + self.idfp + self.idfn;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.idtp as f64 / denom as f64
        }
    }
}

/// Frames in which each (GT ID, prediction ID) pair overlaps with IoU ≥ `iou_thresh`.
pub fn id_overlap_counts(gt: &[TrackRow], pred: &[TrackRow], iou_thresh: f64) -> BTreeMap<(u64, u64), usize> {
    let mut counts = BTreeMap::new();
    for (_, (g, p)) in by_frame(gt, pred) {
        for &i in &g {
            for &j in &p {
                let s = similarity(&gt[i], &pred[j]);
                if s >= iou_thresh && s > 0.0 {
                    *counts.entry((gt[i].track_id, pred[j].track_id)).or_insert(0) += 1;
                }
            }
        }
    }
    counts
}

/// Identity counts under the one-to-one GT/prediction ID mapping that
/// maximizes the number of co-located detections.
pub fn id_counts(gt: &[TrackRow], pred: &[TrackRow], iou_thresh: f64) -> IdCounts {
    let gi = id_index(gt);
    let pi = id_index(pred);
    let overlap = id_overlap_counts(gt, pred, iou_thresh);
    let mut w = vec![0usize; gi.len() * pi.len()];
    for (&(g, p), &n) in &overlap {
        w[gi[&g] * pi.len() + pi[&p]] = n;
    }
    let idtp: usize = max_weight_matching(gi.len(), pi.len(), |i, j| {
        let n = w[i * pi.len() + j];
        (n > 0).then_some(n as f64)
    })
    .into_iter()
    .map(|(i, j)| w[i * pi.len() + j])
    .sum();
    IdCounts {
        idtp,
        idfp: pred.len() - idtp,
        idfn: gt.len() - idtp,
    }
}

pub fn idf1(gt: &[TrackRow], pred: &[TrackRow], iou_thresh: f64) -> f64 {
    id_counts(gt, pred, iou_thresh).idf1()
}

#[cfg(test)]
mod tests {
    use super::super::test_rows::*;
    use super::*;
    use crate::assoc::ObjectClass;
    use crate::geom::BBox;

    #[test]
    fn identical_and_empty() {
        let gt = straight(1, 10, 0.0);
        let m = match_frames(&gt, &gt, 0.5);
        assert!(m.iter().all(|f| f.pairs.len() == 1 && f.pairs[0].iou == 1.0));
        let m = match_frames(&gt, &[], 0.5);
        assert_eq!(m.iter().map(|f| f.n_gt - f.pairs.len()).sum::<usize>(), 10);
        assert_eq!(mota(&gt, &gt, 0.5), 1.0);
        assert_eq!(idf1(&gt, &gt, 0.5), 1.0);
        assert_eq!(clear_counts(&gt, &[], 0.5).fn_, 10);
    }

    #[test]
    fn crossing_pair_matches_best_pairing() {
        let g = vec![
            row(0, 1, BBox::new(0.0, 0.0, 10.0, 10.0)),
            row(0, 2, BBox::new(6.0, 0.0, 10.0, 10.0)),
        ];
        let p = vec![
            row(0, 7, BBox::new(5.0, 0.0, 10.0, 10.0)),
            row(0, 8, BBox::new(1.0, 0.0, 10.0, 10.0)),
        ];
        let m = match_frames(&g, &p, 0.1);
        // oracle: both pairings, keep the larger IoU total
        let iou = |a: usize, b: usize| similarity(&g[a], &p[b]);
        let straight = iou(0, 0) + iou(1, 1);
        let crossed = iou(0, 1) + iou(1, 0);
        let got: f64 = m[0].pairs.iter().map(|x| x.iou).sum();
        assert_eq!(got, straight.max(crossed));
        assert!(crossed > straight);
        assert_eq!(m[0].pairs.iter().map(|x| (x.gt, x.pred)).collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn classes_never_match() {
        let g = vec![row(0, 1, BBox::new(0.0, 0.0, 10.0, 10.0))];
        let mut p = g.clone();
        p[0].class = ObjectClass::Motorcycle;
        assert!(match_frames(&g, &p, 0.5)[0].pairs.is_empty());
    }

    #[test]
    fn scripted_miss() {
        let gt = straight(1, 3, 0.0);
        let pred: Vec<_> = straight(5, 3, 0.0).into_iter().filter(|r| r.frame != 1).collect();
        let c = clear_counts(&gt, &pred, 0.5);
        assert_eq!((c.tp, c.fp, c.fn_, c.idsw), (2, 0, 1, 0));
        assert!((c.mota() - 2.0 / 3.0).abs() < 1e-12);
        assert!((idf1(&gt, &pred, 0.5) - 2.0 * 2.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn scripted_false_positive() {
        let gt = straight(1, 3, 0.0);
        let mut pred = straight(5, 3, 0.0);
        pred.push(row(2, 9, BBox::new(500.0, 500.0, 10.0, 10.0)));
        let c = clear_counts(&gt, &pred, 0.5);
        assert_eq!((c.tp, c.fp, c.fn_, c.idsw), (3, 1, 0, 0));
        assert!((c.mota() - 2.0 / 3.0).abs() < 1e-12);
        assert!((idf1(&gt, &pred, 0.5) - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn scripted_id_switch() {
        let gt = straight(1, 10, 0.0);
        let pred: Vec<_> = straight(5, 10, 0.0)
            .into_iter()
            .map(|mut r| {
                if r.frame >= 5 {
                    r.track_id = 6;
                }
                r
            })
            .collect();
        let c = clear_counts(&gt, &pred, 0.5);
        assert_eq!(c.idsw, 1);
        assert!((c.mota() - 0.9).abs() < 1e-12);
        assert!((idf1(&gt, &pred, 0.5) - brute_idf1(&gt, &pred, 0.5)).abs() < 1e-12);
        assert!((idf1(&gt, &pred, 0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn idf1_matches_bijection_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let gt = random_rows(&mut rng, 4, 8);
            let mut pred = random_rows(&mut rng, 4, 8);
            // make some predictions shadow GT boxes under shuffled IDs
            for r in &mut pred {
                if rng.gen_bool(0.5) {
                    if let Some(g) = gt.iter().find(|g| g.frame == r.frame) {
                        r.bbox = g.bbox.translated(rng.gen_range(-2.0..2.0), 0.0);
                    }
                }
            }
            let a = idf1(&gt, &pred, 0.5);
            let b = brute_idf1(&gt, &pred, 0.5);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
