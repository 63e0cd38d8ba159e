//! Tracking, association, violation, e-ticket and plate metrics.

pub mod clear;
pub mod hota;
mod report;
pub mod tasks;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::geom::iou_box;
use crate::tracker::TrackRow;

pub use clear::{clear_counts, id_counts, idf1, match_frames, mota, ClearCounts, FrameMatch, IdCounts, MatchPair};
pub use hota::{default_alphas, hota, HotaResult};
pub use report::{
    aggregate, check_frame_range, evaluate_scenario, frame_instances, label_tickets, track_correspondence, EvalConfig,
    EvalReport, SuiteReport, TicketCounts,
};
pub use tasks::{
    cer, correct_instances, eticket_label, eticket_prf, f1_score, plate_accuracy, prf_from_counts,
    rm_association_metric, violation_prf, FrameInstance, Outcome, PlateDetection, Prf, Recognition, StageLabel,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("prediction has frame {frame}, ground truth covers frames 0..{n_frames}")]
    FrameMismatch { frame: u32, n_frames: u32 },
    #[error("stage combination {0:?} is not a valid e-ticket row")]
    InvalidStage(StageLabel),
    #[error("ground-truth plate string is empty")]
    EmptyGroundTruth,
    #[error("invalid evaluation config: {0}")]
    Config(String),
}

/// IoU, or 0 for boxes of different classes.
pub(crate) fn similarity(a: &TrackRow, b: &TrackRow) -> f64 {
    if a.class != b.class {
        0.0
    } else {
        iou_box(&a.bbox, &b.bbox)
    }
}

/// Row indices of each input per frame, over the union of frames.
pub(crate) fn by_frame(gt: &[TrackRow], pred: &[TrackRow]) -> BTreeMap<u32, (Vec<usize>, Vec<usize>)> {
    let mut m: BTreeMap<u32, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, r) in gt.iter().enumerate() {
        m.entry(r.frame).or_default().0.push(i);
    }
    for (i, r) in pred.iter().enumerate() {
        m.entry(r.frame).or_default().1.push(i);
    }
    m
}

/// Dense index of each track ID, in increasing ID order.
pub(crate) fn id_index(rows: &[TrackRow]) -> HashMap<u64, usize> {
    let mut ids: Vec<u64> = rows.iter().map(|r| r.track_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect()
}

#[cfg(test)]
pub(crate) mod test_rows {
    use super::*;
    use crate::assoc::ObjectClass;
    use crate::geom::BBox;
    use rand::Rng;

    pub fn row(frame: u32, track_id: u64, bbox: BBox) -> TrackRow {
        TrackRow {
            frame,
            track_id,
            class: ObjectClass::Rider,
            assoc_id: None,
            bbox,
            conf: 1.0,
            det_id: None,
        }
    }

    /// One object moving right by 3 px per frame over frames `0..n`.
    pub fn straight(id: u64, n: u32, y: f64) -> Vec<TrackRow> {
        (0..n).map(|f| row(f, id, BBox::new(3.0 * f as f64, y, 10.0, 10.0))).collect()
    }

    pub fn random_rows(rng: &mut impl Rng, n_ids: u64, n_frames: u32) -> Vec<TrackRow> {
        let mut out = Vec::new();
        for f in 0..n_frames {
            for id in 1..=n_ids {
                if rng.gen_bool(0.7) {
                    out.push(row(f, id, BBox::new(rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0), 10.0, 10.0)));
                }
            }
        }
        out
    }

    /// IDF1 by trying every injective mapping of GT IDs to prediction IDs.
    pub fn brute_idf1(gt: &[TrackRow], pred: &[TrackRow], t: f64) -> f64 {
        let overlap = clear::id_overlap_counts(gt, pred, t);
        let mut gids: Vec<u64> = gt.iter().map(|r| r.track_id).collect();
        gids.sort();
        gids.dedup();
        let mut pids: Vec<u64> = pred.iter().map(|r| r.track_id).collect();
        pids.sort();
        pids.dedup();
        fn rec(k: usize, g: &[u64], p: &[u64], used: &mut Vec<bool>, o: &BTreeMap<(u64, u64), usize>) -> usize {
            if k == g.len() {
                return 0;
            }
            let mut best = rec(k + 1, g, p, used, o);
            for j in 0..p.len() {
                if !used[j] {
                    used[j] = true;
                    let v = o.get(&(g[k], p[j])).copied().unwrap_or(0);
                    best = best.max(v + rec(k + 1, g, p, used, o));
                    used[j] = false;
                }
            }
            best
        }
        let idtp = rec(0, &gids, &pids, &mut vec![false; pids.len()], &overlap);
        let denom = gt.len() + pred.len();
        if denom == 0 {
            0.0
        } else {
            2.0 * idtp as f64 / denom as f64
        }
    }
}
