//! Association accuracy, violation and e-ticket P/R/F1, and plate recognition metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geom::{iou_box, BBox};
use crate::lap::max_weight_matching;

/// A motorcycle box with its rider boxes, in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameInstance {
    pub motorcycle: BBox,
    pub riders: Vec<BBox>,
}

/// True when the rider boxes can be paired one-to-one with IoU ≥ `thresh` each.
fn riders_correspond(gt: &[BBox], pred: &[BBox], thresh: f64) -> bool {
    if gt.len() != pred.len() {
        return false;
    }
    let m = max_weight_matching(gt.len(), pred.len(), |i, j| {
        let v = iou_box(&gt[i], &pred[j]);
        (v >= thresh && v > 0.0).then_some(1.0 + v)
    });
    m.len() == gt.len()
}

/// Correctly associated GT instances in one frame.
///
/// Motorcycles are matched one-to-one by IoU (≥ `thresh`); a GT instance is
/// correct when its matched prediction has a rider set that corresponds to its
/// own one-to-one with every rider IoU ≥ `thresh`.
pub fn correct_instances(gt: &[FrameInstance], pred: &[FrameInstance], thresh: f64) -> usize {
    let ok = |i: usize, j: usize| riders_correspond(&gt[i].riders, &pred[j].riders, thresh);
    // only pairs that make an instance correct are worth matching
    let pairs = max_weight_matching(gt.len(), pred.len(), |i, j| {
        let v = iou_box(&gt[i].motorcycle, &pred[j].motorcycle);
        (v >= thresh && v > 0.0 && ok(i, j)).then_some(1.0)
    });
    pairs.len()
}

/// `100 · correct / total` over frames of `(gt, pred)` instance lists; 0 without GT instances.
pub fn rm_association_metric(frames: &[(Vec<FrameInstance>, Vec<FrameInstance>)], thresh: f64) -> f64 {
    let total: usize = frames.iter().map(|(g, _)| g.len()).sum();
    if total == 0 {
        return 0.0;
    }
    let correct: usize = frames.iter().map(|(g, p)| correct_instances(g, p, thresh)).sum();
    100.0 * correct as f64 / total as f64
}

/// Precision, recall and F1 in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Harmonic mean of two percentages; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn prf_from_counts(tp: usize, fp: usize, fn_: usize) -> Prf {
    let pct = |n: usize, d: usize| if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 };
    let precision = pct(tp, tp + fp);
    let recall = pct(tp, tp + fn_);
    Prf {
        precision,
        recall,
        f1: f1_score(precision, recall),
        tp,
        fp,
        fn_,
    }
}

/// Track-level P/R/F1 of binary flags.
///
/// `correspondence` maps prediction track IDs to GT track IDs. A flagged GT
/// track is a TP when some corresponding prediction is flagged and an FN
/// otherwise; a flagged prediction without a flagged GT counterpart is an FP.
pub fn violation_prf(
    gt_flags: &BTreeMap<u64, bool>,
    pred_flags: &BTreeMap<u64, bool>,
    correspondence: &BTreeMap<u64, u64>,
) -> Prf {
    let mut hit: BTreeMap<u64, bool> = BTreeMap::new();
    let mut fp = 0;
    for (&p, &flag) in pred_flags {
        if !flag {
            continue;
        }
        match correspondence.get(&p) {
            Some(g) if gt_flags.get(g) == Some(&true) => {
                hit.insert(*g, true);
            }
            _ => fp += 1,
        }
    }
    let flagged = gt_flags.values().filter(|&&f| f).count();
    let tp = hit.len();
    prf_from_counts(tp, fp, flagged - tp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "TP")]
    Tp,
    #[serde(rename = "FP")]
    Fp,
    #[serde(rename = "FN")]
    Fn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlateDetection {
    #[serde(rename = "TP")]
    Tp,
    #[serde(rename = "FP")]
    Fp,
    #[serde(rename = "FN")]
    Fn,
    #[serde(rename = "absent")]
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recognition {
    Correct,
    Incorrect,
    Absent,
}

/// Per-track outcomes of the violation, plate detection and plate recognition stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageLabel {
    pub violation: Outcome,
    pub lp_detection: PlateDetection,
    pub lp_recognition: Recognition,
}

impl StageLabel {
    pub const fn new(violation: Outcome, lp_detection: PlateDetection, lp_recognition: Recognition) -> Self {
        Self {
            violation,
            lp_detection,
            lp_recognition,
        }
    }
}

/// E-ticket outcome of a track from its stage labels.
///
/// A ticket is a TP only when every stage succeeds. A missed violation, or a
/// caught violation whose plate was never detected, is an FN. Everything else
/// that reaches the output is an FP. A false violation with no plate is the
/// one combination outside the eight table rows; it is an FP as well.
pub fn eticket_label(s: StageLabel) -> Result<Outcome, EvalError> {
    use Outcome as V;
    use PlateDetection as D;
    use Recognition as R;
    match (s.violation, s.lp_detection, s.lp_recognition) {
        (V::Tp, D::Tp, R::Correct) => Ok(Outcome::Tp),
        (V::Tp, D::Tp, R::Incorrect) => Ok(Outcome::Fp),
        (V::Fp, D::Tp, R::Incorrect) => Ok(Outcome::Fp),
        (V::Fp, D::Tp, R::Correct) => Ok(Outcome::Fp),
        (V::Tp, D::Fp, R::Incorrect) => Ok(Outcome::Fp),
        (V::Fp, D::Fp, R::Incorrect) => Ok(Outcome::Fp),
        (V::Fn, D::Absent, R::Absent) => Ok(Outcome::Fn),
        (V::Tp, D::Fn, R::Absent) => Ok(Outcome::Fn),
        (V::Fp, D::Fn, R::Absent) => Ok(Outcome::Fp),
        _ => Err(EvalError::InvalidStage(s)),
    }
}

/// E-ticket P/R/F1. With `human_in_loop`, FP tickets are discarded first.
pub fn eticket_prf(labels: &[Outcome], human_in_loop: bool) -> Prf {
    let count = |o: Outcome| labels.iter().filter(|&&l| l == o).count();
    let fp = if human_in_loop { 0 } else { count(Outcome::Fp) };
    prf_from_counts(count(Outcome::Tp), fp, count(Outcome::Fn))
}

/// Levenshtein distance over characters divided by the GT length.
pub fn cer(gt: &str, pred: &str) -> Result<f64, EvalError> {
    let n = gt.chars().count();
    if n == 0 {
        return Err(EvalError::EmptyGroundTruth);
    }
    Ok(strsim::levenshtein(gt, pred) as f64 / n as f64)
}

/// Percentage of exact matches; 0 for no pairs.
pub fn plate_accuracy(pairs: &[(String, String)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let ok = pairs.iter().filter(|(g, p)| g == p).count();
    100.0 * ok as f64 / pairs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn b(x: f64, y: f64) -> BBox {
        BBox::new(x, y, 10.0, 10.0)
    }

    #[test]
    fn association_metric_definitional() {
        let inst = |x: f64, n: usize| FrameInstance {
            motorcycle: b(x, 20.0),
            riders: (0..n).map(|i| b(x + 10.0 * i as f64, 0.0)).collect(),
        };
        let gt = vec![inst(0.0, 2), inst(100.0, 1)];
        assert_eq!(rm_association_metric(&[(gt.clone(), gt.clone())], 0.5), 100.0);
        let pred = vec![inst(0.0, 1), inst(100.0, 1)];
        assert_eq!(rm_association_metric(&[(gt.clone(), pred)], 0.5), 50.0);
        assert_eq!(rm_association_metric(&[], 0.5), 0.0);
    }

    /// Exhaustive reading of the definition: best count over all motorcycle
    /// injections, each pair checked by enumerating rider permutations.
    fn brute_correct(gt: &[FrameInstance], pred: &[FrameInstance], t: f64) -> usize {
        fn perms_ok(g: &[BBox], p: &[BBox], t: f64, k: usize, used: &mut Vec<bool>) -> bool {
            if k == g.len() {
                return true;
            }
            for j in 0..p.len() {
                if !used[j] && iou_box(&g[k], &p[j]) >= t {
                    used[j] = true;
                    if perms_ok(g, p, t, k + 1, used) {
                        return true;
                    }
                    used[j] = false;
                }
            }
            false
        }
        fn rec(gt: &[FrameInstance], pred: &[FrameInstance], t: f64, i: usize, used: &mut Vec<bool>) -> usize {
            if i == gt.len() {
                return 0;
            }
            let mut best = rec(gt, pred, t, i + 1, used);
            for j in 0..pred.len() {
                if used[j] || iou_box(&gt[i].motorcycle, &pred[j].motorcycle) < t {
                    continue;
                }
                used[j] = true;
                let ok = gt[i].riders.len() == pred[j].riders.len()
                    && perms_ok(&gt[i].riders, &pred[j].riders, t, 0, &mut vec![false; pred[j].riders.len()]);
                best = best.max(ok as usize + rec(gt, pred, t, i + 1, used));
                used[j] = false;
            }
            best
        }
        rec(gt, pred, t, 0, &mut vec![false; pred.len()])
    }

    #[test]
    fn association_metric_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..300 {
            let mk = |n: usize, rng: &mut ChaCha8Rng| -> Vec<FrameInstance> {
                (0..n)
                    .map(|_| FrameInstance {
                        motorcycle: b(rng.gen_range(0.0..30.0), 20.0),
                        riders: (0..rng.gen_range(0..4)).map(|_| b(rng.gen_range(0.0..30.0), 0.0)).collect(),
                    })
                    .collect()
            };
            let gt = mk(rng.gen_range(0..4), &mut rng);
            let pred = mk(rng.gen_range(0..4), &mut rng);
            assert_eq!(correct_instances(&gt, &pred, 0.5), brute_correct(&gt, &pred, 0.5));
        }
    }

    #[test]
    fn published_f1_values() {
        assert!((f1_score(84.21, 63.16) - 72.18).abs() <= 0.01);
        assert!((f1_score(100.0, 69.57) - 82.05).abs() <= 0.01);
        let all = prf_from_counts(5, 0, 0);
        assert_eq!((all.precision, all.recall, all.f1), (100.0, 100.0, 100.0));
    }

    #[test]
    fn violation_prf_counts() {
        let gt = BTreeMap::from([(1, true), (2, false), (3, true)]);
        let pred = BTreeMap::from([(10, true), (11, true), (12, false), (13, true)]);
        let corr = BTreeMap::from([(10, 1), (11, 2), (12, 3)]);
        let r = violation_prf(&gt, &pred, &corr);
        assert_eq!((r.tp, r.fp, r.fn_), (1, 2, 1));
    }

    #[test]
    fn truth_table() {
        use Outcome::*;
        use PlateDetection as D;
        use Recognition as R;
        let rows = [
            ((Tp, D::Tp, R::Correct), Tp),
            ((Tp, D::Tp, R::Incorrect), Fp),
            ((Fp, D::Tp, R::Incorrect), Fp),
            ((Fp, D::Tp, R::Correct), Fp),
            ((Tp, D::Fp, R::Incorrect), Fp),
            ((Fp, D::Fp, R::Incorrect), Fp),
            ((Fn, D::Absent, R::Absent), Fn),
            ((Tp, D::Fn, R::Absent), Fn),
        ];
        for ((v, d, r), want) in rows {
            assert_eq!(eticket_label(StageLabel::new(v, d, r)).unwrap(), want);
        }
        assert_eq!(eticket_label(StageLabel::new(Fp, D::Fn, R::Absent)).unwrap(), Fp);
        assert!(eticket_label(StageLabel::new(Fn, D::Tp, R::Correct)).is_err());
        assert!(eticket_label(StageLabel::new(Tp, D::Tp, R::Absent)).is_err());
    }

    #[test]
    fn eticket_modes() {
        let mut labels = vec![Outcome::Tp; 48];
        labels.extend(vec![Outcome::Fp; 9]);
        labels.extend(vec![Outcome::Fn; 28]);
        let auto = eticket_prf(&labels, false);
        assert!((auto.precision - 84.21).abs() <= 0.01);
        assert!((auto.recall - 63.16).abs() <= 0.01);
        assert!((auto.f1 - 72.18).abs() <= 0.01);
        let hitl = eticket_prf(&labels, true);
        assert_eq!(hitl.precision, 100.0);
        assert_eq!(hitl.recall, auto.recall);
        let none = eticket_prf(&[], false);
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
    }

    fn dp_edit(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
            }
        }
        d[a.len()][b.len()]
    }

    #[test]
    fn cer_cases() {
        assert_eq!(cer("KA01AB1234", "KA01AB1234").unwrap(), 0.0);
        assert!((cer("KA01AB1234", "KA01AB1284").unwrap() - 0.1).abs() < 1e-15);
        assert!(cer("", "X").is_err());
        assert_eq!(plate_accuracy(&[("A".into(), "A".into()), ("B".into(), "C".into())]), 50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let alpha = b"AB01.#";
        let mut s = || -> String { (0..rng.gen_range(1..12)).map(|_| alpha[rng.gen_range(0..alpha.len())] as char).collect() };
        for _ in 0..300 {
            let (a, b2, c) = (s(), s(), s());
            assert_eq!(cer(&a, &b2).unwrap(), dp_edit(&a, &b2) as f64 / a.len() as f64);
            let (ab, bc, ac) = (dp_edit(&a, &b2), dp_edit(&b2, &c), dp_edit(&a, &c));
            assert!(ac <= ab + bc);
        }
    }
}
