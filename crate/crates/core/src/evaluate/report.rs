//! Scenario-level evaluation: tracks and tickets against a ground-truth log.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::clear::{clear_counts, id_counts, match_frames, ClearCounts};
use super::hota::{default_alphas, hota};
use super::tasks::{
    cer, eticket_label, eticket_prf, plate_accuracy, prf_from_counts, rm_association_metric, violation_prf,
    FrameInstance, Outcome, PlateDetection, Prf, Recognition, StageLabel,
};
use super::EvalError;
use crate::assoc::{HelmetLabel, ObjectClass};
use crate::simulate::GroundTruthLog;
use crate::tracker::TrackRow;
use crate::violate::{ETicket, Violation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// IoU needed for a box match, for MOTA, IDF1, track correspondence and association.
    pub iou_thresh: f64,
    /// Localization thresholds averaged by HOTA.
    pub alphas: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresh: 0.5,
            alphas: default_alphas(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.iou_thresh > 0.0 && self.iou_thresh <= 1.0) {
            return Err(format!("iou_thresh must be in (0, 1], got {}", self.iou_thresh));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err("alphas must be a non-empty list of values in (0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TicketCounts {
    /// GT instances with at least one violation.
    pub gt: usize,
    pub emitted: usize,
    /// Tickets on a violating instance whose violation set and plate both equal the truth.
    pub exact: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: String,
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    pub mota: f64,
    pub idf1: f64,
    pub assoc_score_pct: f64,
    pub helmet: Prf,
    pub triple: Prf,
    pub eticket: Prf,
    pub human_in_loop: bool,
    pub cer: f64,
    pub plate_accuracy: f64,
    pub n_plates: usize,
    pub counts: ClearCounts,
    pub tickets: TicketCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub scenarios: Vec<EvalReport>,
    pub aggregate: EvalReport,
}

pub fn check_frame_range(n_frames: u32, pred: &[TrackRow]) -> Result<(), EvalError> {
    match pred.iter().find(|r| r.frame >= n_frames) {
        Some(r) => Err(EvalError::FrameMismatch {
            frame: r.frame,
            n_frames,
        }),
        None => Ok(()),
    }
}

/// Prediction track ID → GT ID, when more than half of the prediction track's
/// rows are matched to that GT object. Ties go to the smaller GT ID.
pub fn track_correspondence(gt: &[TrackRow], pred: &[TrackRow], iou_thresh: f64) -> BTreeMap<u64, u64> {
    let mut len: HashMap<u64, usize> = HashMap::new();
    for r in pred {
        *len.entry(r.track_id).or_insert(0) += 1;
    }
    let mut hits: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    for f in match_frames(gt, pred, iou_thresh) {
        for p in f.pairs {
            *hits.entry((pred[p.pred].track_id, gt[p.gt].track_id)).or_insert(0) += 1;
        }
    }
    let mut best: BTreeMap<u64, (usize, u64)> = BTreeMap::new();
    for (&(p, g), &n) in &hits {
        let e = best.entry(p).or_insert((n, g));
        if n > e.0 {
            *e = (n, g);
        }
    }
    best.into_iter()
        .filter(|(p, (n, _))| 2 * n > len[p])
        .map(|(p, (_, g))| (p, g))
        .collect()
}

/// Per-frame rider–motorcycle instances from rows carrying association IDs.
/// Groups without a motorcycle row are dropped.
pub fn frame_instances(rows: &[TrackRow], n_frames: u32) -> Vec<Vec<FrameInstance>> {
    let mut groups: BTreeMap<(u32, u64), (Vec<&TrackRow>, Vec<&TrackRow>)> = BTreeMap::new();
    for r in rows {
        if let Some(a) = r.assoc_id {
            let g = groups.entry((r.frame, a)).or_default();
            match r.class {
                ObjectClass::Motorcycle => g.0.push(r),
                ObjectClass::Rider => g.1.push(r),
            }
        }
    }
    let mut out = vec![Vec::new(); n_frames as usize];
    for ((frame, _), (motos, riders)) in groups {
        let Some(slot) = out.get_mut(frame as usize) else {
            continue;
        };
        for m in motos {
            slot.push(FrameInstance {
                motorcycle: m.bbox,
                riders: riders.iter().map(|r| r.bbox).collect(),
            });
        }
    }
    out
}

fn group_correspondence(
    pred: &[TrackRow],
    track_corr: &BTreeMap<u64, u64>,
    moto_assoc: &HashMap<u64, u64>,
) -> BTreeMap<u64, u64> {
    // rows per (group, motorcycle track)
    let mut n: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    for r in pred {
        if let (ObjectClass::Motorcycle, Some(a)) = (r.class, r.assoc_id) {
            *n.entry((a, r.track_id)).or_insert(0) += 1;
        }
    }
    let mut best: BTreeMap<u64, (usize, u64)> = BTreeMap::new();
    for (&(a, t), &k) in &n {
        let Some(g) = track_corr.get(&t).and_then(|g| moto_assoc.get(g)) else {
            continue;
        };
        let e = best.entry(a).or_insert((k, *g));
        if k > e.0 {
            *e = (k, *g);
        }
    }
    best.into_iter().map(|(a, (_, g))| (a, g)).collect()
}

/// Stage labels for each ticket plus one `(FN, absent, absent)` per violating
/// GT instance that no ticket covers. Also returns the number of exact tickets.
pub fn label_tickets(
    truth: &GroundTruthLog,
    tickets: &[ETicket],
    group_corr: &BTreeMap<u64, u64>,
) -> (Vec<StageLabel>, usize) {
    let gt: BTreeMap<u64, _> = truth.instances.iter().map(|i| (i.assoc_gt_id, i)).collect();
    let mut claimed: BTreeSet<u64> = BTreeSet::new();
    let mut labels = Vec::new();
    let mut exact = 0;
    let mut order: Vec<&ETicket> = tickets.iter().collect();
    order.sort_by_key(|t| t.assoc_id);
    for t in order {
        let inst = group_corr.get(&t.assoc_id).and_then(|g| gt.get(g));
        let predicted: BTreeSet<Violation> = t.violations.iter().copied().collect();
        let violation = match inst {
            Some(i) if !claimed.contains(&i.assoc_gt_id) && !i.violations().is_disjoint(&predicted) => {
                claimed.insert(i.assoc_gt_id);
                Outcome::Tp
            }
            _ => Outcome::Fp,
        };
        let (det, rec) = match (&t.plate, inst) {
            (None, _) => (PlateDetection::Fn, Recognition::Absent),
            (Some(p), Some(i)) if *p == i.plate => (PlateDetection::Tp, Recognition::Correct),
            (Some(_), Some(_)) => (PlateDetection::Tp, Recognition::Incorrect),
            (Some(_), None) => (PlateDetection::Fp, Recognition::Incorrect),
        };
        if violation == Outcome::Tp && rec == Recognition::Correct && inst.is_some_and(|i| i.violations() == predicted) {
            exact += 1;
        }
        labels.push(StageLabel::new(violation, det, rec));
    }
    for i in &truth.instances {
        if !i.violations().is_empty() && !claimed.contains(&i.assoc_gt_id) {
            labels.push(StageLabel::new(Outcome::Fn, PlateDetection::Absent, Recognition::Absent));
        }
    }
    (labels, exact)
}

/// Evaluates one scenario. Without tickets the violation, e-ticket and plate
/// figures treat every prediction as unflagged.
pub fn evaluate_scenario(
    truth: &GroundTruthLog,
    pred: &[TrackRow],
    tickets: &[ETicket],
    cfg: &EvalConfig,
    human_in_loop: bool,
) -> Result<EvalReport, EvalError> {
    cfg.validate().map_err(EvalError::Config)?;
    check_frame_range(truth.n_frames(), pred)?;
    let t = cfg.iou_thresh;
    let gt = truth.track_rows();

    let h = hota(&gt, pred, &cfg.alphas);
    let counts = clear_counts(&gt, pred, t);
    let ids = id_counts(&gt, pred, t);

    let g_inst = frame_instances(&gt, truth.n_frames());
    let p_inst = frame_instances(pred, truth.n_frames());
    let paired: Vec<_> = g_inst.into_iter().zip(p_inst).collect();
    let assoc_score_pct = rm_association_metric(&paired, t);

    let corr = track_correspondence(&gt, pred, t);
    let moto_assoc: HashMap<u64, u64> = truth.instances.iter().map(|i| (i.motorcycle, i.assoc_gt_id)).collect();
    let gcorr = group_correspondence(pred, &corr, &moto_assoc);

    let mut gt_helmet = BTreeMap::new();
    let mut gt_triple = BTreeMap::new();
    for i in &truth.instances {
        for &r in &i.riders {
            gt_helmet.insert(r, i.rider_helmet.get(&r) == Some(&HelmetLabel::NoHelmet));
        }
        gt_triple.insert(i.assoc_gt_id, i.triple_riding);
    }
    let mut pred_helmet: BTreeMap<u64, bool> = BTreeMap::new();
    let mut pred_triple: BTreeMap<u64, bool> = BTreeMap::new();
    for r in pred {
        match r.class {
            ObjectClass::Rider => pred_helmet.entry(r.track_id).or_insert(false),
            ObjectClass::Motorcycle => match r.assoc_id {
                Some(a) => pred_triple.entry(a).or_insert(false),
                None => continue,
            },
        };
    }
    for tk in tickets {
        for (&rid, &h) in &tk.per_rider_helmet {
            if h == HelmetLabel::NoHelmet {
                pred_helmet.insert(rid, true);
            }
        }
        if tk.violations.contains(&Violation::TripleRiding) {
            pred_triple.insert(tk.assoc_id, true);
        }
    }
    let helmet = violation_prf(&gt_helmet, &pred_helmet, &corr);
    let triple = violation_prf(&gt_triple, &pred_triple, &gcorr);

    let (stages, exact) = label_tickets(truth, tickets, &gcorr);
    let outcomes = stages.into_iter().map(eticket_label).collect::<Result<Vec<_>, _>>()?;
    let eticket = eticket_prf(&outcomes, human_in_loop);

    let gt_plate: BTreeMap<u64, &str> = truth.instances.iter().map(|i| (i.assoc_gt_id, i.plate.as_str())).collect();
    let mut plate_pairs = Vec::new();
    let mut seen = BTreeSet::new();
    let mut order: Vec<&ETicket> = tickets.iter().collect();
    order.sort_by_key(|t| t.assoc_id);
    for tk in order {
        if let Some(&g) = gcorr.get(&tk.assoc_id) {
            if seen.insert(g) {
                plate_pairs.push((gt_plate[&g].to_string(), tk.plate.clone().unwrap_or_default()));
            }
        }
    }
    let mut cer_sum = 0.0;
    for (g, p) in &plate_pairs {
        cer_sum += cer(g, p)?;
    }
    let n_plates = plate_pairs.len();

    Ok(EvalReport {
        scenario: truth.header.scenario.clone(),
        hota: h.hota,
        det_a: h.det_a,
        ass_a: h.ass_a,
        mota: counts.mota(),
        idf1: ids.idf1(),
        assoc_score_pct,
        helmet,
        triple,
        eticket,
        human_in_loop,
        cer: if n_plates == 0 { 0.0 } else { cer_sum / n_plates as f64 },
        plate_accuracy: plate_accuracy(&plate_pairs),
        n_plates,
        counts,
        tickets: TicketCounts {
            gt: outcomes.iter().filter(|o| **o != Outcome::Fp).count(),
            emitted: tickets.len(),
            exact,
        },
    })
}

/// Means of the per-scenario scores; P/R/F1 are recomputed from summed counts
/// and plate figures are weighted by plate count.
pub fn aggregate(reports: &[EvalReport]) -> EvalReport {
    let n = reports.len().max(1) as f64;
    let mean = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let sum_prf = |f: fn(&EvalReport) -> Prf| {
        let (tp, fp, fn_) = reports.iter().map(f).fold((0, 0, 0), |a, p| (a.0 + p.tp, a.1 + p.fp, a.2 + p.fn_));
        prf_from_counts(tp, fp, fn_)
    };
    let n_plates: usize = reports.iter().map(|r| r.n_plates).sum();
    let weighted = |f: fn(&EvalReport) -> f64| {
        if n_plates == 0 {
            0.0
        } else {
            reports.iter().map(|r| f(r) * r.n_plates as f64).sum::<f64>() / n_plates as f64
        }
    };
    let mut counts = ClearCounts {
        tp: 0,
        fp: 0,
        fn_: 0,
        idsw: 0,
        gt: 0,
    };
    let mut tickets = TicketCounts::default();
    for r in reports {
        counts.tp += r.counts.tp;
        counts.fp += r.counts.fp;
        counts.fn_ += r.counts.fn_;
        counts.idsw += r.counts.idsw;
        counts.gt += r.counts.gt;
        tickets.gt += r.tickets.gt;
        tickets.emitted += r.tickets.emitted;
        tickets.exact += r.tickets.exact;
    }
    EvalReport {
        scenario: "aggregate".into(),
        hota: mean(|r| r.hota),
        det_a: mean(|r| r.det_a),
        ass_a: mean(|r| r.ass_a),
        mota: mean(|r| r.mota),
        idf1: mean(|r| r.idf1),
        assoc_score_pct: mean(|r| r.assoc_score_pct),
        helmet: sum_prf(|r| r.helmet),
        triple: sum_prf(|r| r.triple),
        eticket: sum_prf(|r| r.eticket),
        human_in_loop: reports.first().is_some_and(|r| r.human_in_loop),
        cer: weighted(|r| r.cer),
        plate_accuracy: weighted(|r| r.plate_accuracy),
        n_plates,
        counts,
        tickets,
    }
}

impl SuiteReport {
    pub fn new(scenarios: Vec<EvalReport>) -> Self {
        let aggregate = aggregate(&scenarios);
        Self { scenarios, aggregate }
    }
}
