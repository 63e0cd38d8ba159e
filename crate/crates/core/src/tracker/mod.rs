//! Cross-association tracking of riders and motorcycles.
//!
//! Each frame, every live track is paired with every same-class detection
//! passing an IoU gate. The pairings of both classes, plus a link variable for
//! each rider/motorcycle pairing pair scored from the recent mask history,
//! form one [`JointProblem`]. Its optimum decides which tracks continue and
//! which riders are linked to which motorcycles; links stamp a shared
//! association ID onto both tracks.

pub mod joint;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assoc::{
    association_score_parts, form_instances, AssocError, InstanceConfig, ObjectClass, SacDetection,
};
use crate::geom::{iou_box, BBox, BinaryMask, GeomError};
use crate::io::FormatError;
use crate::motion::{KalmanConfig, KalmanFilter, KalmanState, MotionError};

pub use joint::{
    solve_independent, solve_joint, ConstraintViolation, Hypothesis, JointProblem, JointSolution,
    ObjectiveWeights, SolveError,
};

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("frame {got} does not follow frame {last}")]
    OutOfOrder { last: u32, got: u32 },
    #[error("detection {det_id} belongs to frame {got}, expected {expected}")]
    FrameMismatch { det_id: u64, expected: u32, got: u32 },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Assoc(#[from] AssocError),
    #[error("solution violates constraints: {0}")]
    Constraint(#[from] ConstraintViolation),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Weight of rider hypothesis scores in the joint objective.
    pub lambda_rider: f64,
    /// Weight of motorcycle hypothesis scores.
    pub lambda_moto: f64,
    /// Weight of the rider–motorcycle link scores.
    pub lambda_assoc: f64,
    /// Subtracted from every summed link score.
    pub theta: f64,
    /// Past frames of masks kept per track.
    pub buffer_k: usize,
    pub gate_iou: f64,
    pub max_age: u32,
    /// Misses a tentative track survives.
    pub tentative_max_age: u32,
    pub min_hits: u32,
    pub w_iou: f64,
    pub w_app: f64,
    /// Weight of the old appearance vector in the moving average.
    pub emb_momentum: f64,
    pub solver_cap: usize,
    pub kalman: KalmanConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            lambda_rider: 1.0,
            lambda_moto: 1.0,
            lambda_assoc: 1.0,
            theta: 0.5,
            buffer_k: 3,
            gate_iou: 0.1,
            max_age: 30,
            tentative_max_age: 2,
            min_hits: 3,
            w_iou: 1.0,
            w_app: 0.5,
            emb_momentum: 0.9,
            solver_cap: 64,
            kalman: KalmanConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn weights(&self) -> ObjectiveWeights {
        ObjectiveWeights {
            rider: self.lambda_rider,
            moto: self.lambda_moto,
            assoc: self.lambda_assoc,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let nonneg = [
            ("lambda_rider", self.lambda_rider),
            ("lambda_moto", self.lambda_moto),
            ("lambda_assoc", self.lambda_assoc),
            ("theta", self.theta),
            ("w_iou", self.w_iou),
            ("w_app", self.w_app),
        ];
        for (k, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{k} must be finite and >= 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.gate_iou) {
            return Err(format!("gate_iou must be in [0,1], got {}", self.gate_iou));
        }
        if !(0.0..=1.0).contains(&self.emb_momentum) {
            return Err(format!("emb_momentum must be in [0,1], got {}", self.emb_momentum));
        }
        if self.min_hits == 0 {
            return Err("min_hits must be >= 1".into());
        }
        if self.solver_cap == 0 {
            return Err("solver_cap must be >= 1".into());
        }
        let k = &self.kalman;
        for (name, v) in [
            ("kalman.process_pos_std", k.process_pos_std),
            ("kalman.process_vel_std", k.process_vel_std),
            ("kalman.init_pos_std", k.init_pos_std),
            ("kalman.init_vel_std", k.init_vel_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(k.measurement_std.is_finite() && k.measurement_std > 0.0) {
            return Err(format!("kalman.measurement_std must be > 0, got {}", k.measurement_std));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

/// Masks and box a track carried in one past frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferedObservation {
    pub frame: u32,
    pub seg_mask: BinaryMask,
    pub cross_mask: BinaryMask,
    pub bbox: BBox,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub track_id: u64,
    pub class: ObjectClass,
    pub kf: KalmanState,
    pub mask_buffer: VecDeque<BufferedObservation>,
    pub emb: Option<Vec<f64>>,
    assoc_id: Option<u64>,
    pub hits: u32,
    pub misses: u32,
    pub age: u32,
    pub status: TrackStatus,
}

impl Track {
    pub fn assoc_id(&self) -> Option<u64> {
        self.assoc_id
    }

    /// Sets the association ID once; later calls are ignored.
    fn establish(&mut self, id: u64) {
        if self.assoc_id.is_none() {
            self.assoc_id = Some(id);
        }
    }

    fn buffered_at(&self, frame: u32) -> Option<&BufferedObservation> {
        self.mask_buffer.iter().find(|o| o.frame == frame)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || a.len() != b.len() {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Motion + appearance score of continuing `track` with `det`; `None` below the IoU gate.
pub fn hypothesis_score(
    predicted: &BBox,
    track_emb: Option<&[f64]>,
    det: &SacDetection,
    cfg: &TrackerConfig,
) -> Option<f64> {
    let iou = iou_box(predicted, &det.bbox);
    if iou < cfg.gate_iou || iou <= 0.0 {
        return None;
    }
    let app = match (track_emb, det.embedding.as_deref()) {
        (Some(a), Some(b)) => cosine(a, b),
        _ => 0.0,
    };
    Some(cfg.w_iou * iou + cfg.w_app * app)
}

/// Link score of a rider hypothesis and a motorcycle hypothesis.
///
/// Sums the association score over the last `buffer_k` frames from the two
/// tracks' buffers plus the current pair of detections, then subtracts
/// `theta`. A step where either side has no detection contributes 0. Returns
/// `None` when both tracks already carry different association IDs.
pub fn buffered_assoc_score(
    rider: &Track,
    moto: &Track,
    rider_det: &SacDetection,
    moto_det: &SacDetection,
    frame: u32,
    cfg: &TrackerConfig,
) -> Result<Option<f64>, GeomError> {
    if let (Some(a), Some(b)) = (rider.assoc_id, moto.assoc_id) {
        if a != b {
            return Ok(None);
        }
    }
    let history = history_score(rider, moto, frame, cfg.buffer_k)?;
    let current = current_score(rider_det, moto_det)?;
    Ok(Some(history + current - cfg.theta))
}

fn history_score(rider: &Track, moto: &Track, frame: u32, k: usize) -> Result<f64, GeomError> {
    let mut total = 0.0;
    for back in 1..=k as u32 {
        let Some(t) = frame.checked_sub(back) else { break };
        if let (Some(r), Some(m)) = (rider.buffered_at(t), moto.buffered_at(t)) {
            total += association_score_parts(&r.seg_mask, &r.cross_mask, &r.bbox, &m.seg_mask, &m.cross_mask)?;
        }
    }
    Ok(total)
}

fn current_score(r: &SacDetection, m: &SacDetection) -> Result<f64, GeomError> {
    association_score_parts(&r.seg_mask, &r.cross_mask, &r.bbox, &m.seg_mask, &m.cross_mask)
}

/// One emitted track box. `det_id` links back to the detection that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRow {
    pub frame: u32,
    pub track_id: u64,
    pub class: ObjectClass,
    pub assoc_id: Option<u64>,
    pub bbox: BBox,
    pub conf: f64,
    pub det_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameOutput {
    pub frame: u32,
    pub rows: Vec<TrackRow>,
    /// Number of joint programs solved this frame (0 or 1).
    pub solved: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignmentMode {
    /// Joint program with link variables.
    Joint,
    /// Per-class linear assignment; association IDs assigned afterwards.
    Independent,
}

/// Online tracker: feed frames in increasing order with [`Tracker::step`].
pub struct Tracker {
    cfg: TrackerConfig,
    mode: AssignmentMode,
    filter: KalmanFilter,
    tracks: Vec<Track>,
    next_track_id: u64,
    next_assoc_id: u64,
    last_frame: Option<u32>,
    log: Vec<TrackRow>,
    ever_confirmed: BTreeMap<u64, bool>,
    final_assoc: HashMap<u64, u64>,
    solutions_checked: u64,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig, mode: AssignmentMode) -> Self {
        Self {
            filter: KalmanFilter::new(&cfg.kalman),
            cfg,
            mode,
            tracks: Vec::new(),
            next_track_id: 1,
            next_assoc_id: 1,
            last_frame: None,
            log: Vec::new(),
            ever_confirmed: BTreeMap::new(),
            final_assoc: HashMap::new(),
            solutions_checked: 0,
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Live (non-dead) tracks, in creation order.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Joint solutions verified against the constraint families so far.
    pub fn solutions_checked(&self) -> u64 {
        self.solutions_checked
    }

    pub fn step(&mut self, frame: u32, dets: &[SacDetection]) -> Result<FrameOutput, TrackError> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(TrackError::OutOfOrder { last, got: frame });
            }
        }
        for d in dets {
            if d.frame != frame {
                return Err(TrackError::FrameMismatch {
                    det_id: d.det_id,
                    expected: frame,
                    got: d.frame,
                });
            }
        }
        let steps = self.last_frame.map_or(1, |l| frame - l);
        self.last_frame = Some(frame);

        for t in &mut self.tracks {
            for _ in 0..steps {
                t.kf = self.filter.predict(&t.kf);
            }
            t.age += steps;
        }

        let rider_dets: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].class == ObjectClass::Rider).collect();
        let moto_dets: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].class == ObjectClass::Motorcycle).collect();
        let rider_tracks: Vec<usize> = (0..self.tracks.len()).filter(|&i| self.tracks[i].class == ObjectClass::Rider).collect();
        let moto_tracks: Vec<usize> = (0..self.tracks.len()).filter(|&i| self.tracks[i].class == ObjectClass::Motorcycle).collect();

        let (rider_hyps, rider_scores) = self.hypotheses(&rider_tracks, &rider_dets, dets);
        let (moto_hyps, moto_scores) = self.hypotheses(&moto_tracks, &moto_dets, dets);

        let joint = self.mode == AssignmentMode::Joint;
        let assoc = if joint {
            self.link_scores(&rider_hyps, &moto_hyps, &rider_tracks, &moto_tracks, &rider_dets, &moto_dets, dets, frame)?
        } else {
            vec![None; rider_hyps.len() * moto_hyps.len()]
        };
        let problem = JointProblem::new(
            rider_hyps,
            rider_scores,
            moto_hyps,
            moto_scores,
            assoc,
            self.cfg.weights(),
        )?;
        let solution = if joint {
            let s = solve_joint(&problem, self.cfg.solver_cap)?;
            s.check(&problem)?;
            self.solutions_checked += 1;
            s
        } else {
            solve_independent(&problem)
        };

        // (track index, detection index) pairs that continue
        let mut matched: Vec<(usize, usize)> = Vec::new();
        for (i, h) in problem.rider_hyps.iter().enumerate() {
            if solution.rider_chosen[i] {
                matched.push((rider_tracks[h.track], rider_dets[h.detection]));
            }
        }
        for (j, h) in problem.moto_hyps.iter().enumerate() {
            if solution.moto_chosen[j] {
                matched.push((moto_tracks[h.track], moto_dets[h.detection]));
            }
        }

        let mut track_hit = vec![false; self.tracks.len()];
        let mut det_used = vec![false; dets.len()];
        for &(ti, di) in &matched {
            track_hit[ti] = true;
            det_used[di] = true;
            self.apply_match(ti, frame, &dets[di])?;
        }

        if joint {
            for i in 0..problem.n_riders() {
                if let Some(j) = solution.linked_moto(i) {
                    let rt = rider_tracks[problem.rider_hyps[i].track];
                    let mt = moto_tracks[problem.moto_hyps[j].track];
                    self.link(rt, mt);
                }
            }
        }

        let mut rows = Vec::new();
        for &(ti, di) in &matched {
            let t = &self.tracks[ti];
            let row = self.row_for(t, frame, &dets[di]);
            if t.status == TrackStatus::Confirmed {
                rows.push(row.clone());
            }
            self.log.push(row);
        }

        for (ti, t) in self.tracks.iter_mut().enumerate() {
            if track_hit[ti] {
                continue;
            }
            t.misses += 1;
            let limit = match t.status {
                TrackStatus::Tentative => self.cfg.tentative_max_age,
                _ => self.cfg.max_age,
            };
            if t.misses > limit {
                t.status = TrackStatus::Dead;
            }
        }
        self.tracks.retain(|t| t.status != TrackStatus::Dead);

        for (di, d) in dets.iter().enumerate() {
            if det_used[di] {
                continue;
            }
            let t = self.spawn(frame, d);
            let row = self.row_for(&t, frame, d);
            if t.status == TrackStatus::Confirmed {
                rows.push(row.clone());
            }
            self.log.push(row);
            self.tracks.push(t);
        }

        rows.sort_by_key(|r| r.track_id);
        Ok(FrameOutput {
            frame,
            rows,
            solved: usize::from(joint),
        })
    }

    fn hypotheses(&self, tracks: &[usize], det_idx: &[usize], dets: &[SacDetection]) -> (Vec<Hypothesis>, Vec<f64>) {
        let mut hyps = Vec::new();
        let mut scores = Vec::new();
        for (tl, &ti) in tracks.iter().enumerate() {
            let t = &self.tracks[ti];
            let pred = t.kf.predicted_box();
            for (dl, &di) in det_idx.iter().enumerate() {
                if let Some(s) = hypothesis_score(&pred, t.emb.as_deref(), &dets[di], &self.cfg) {
                    hyps.push(Hypothesis { track: tl, detection: dl });
                    scores.push(s);
                }
            }
        }
        (hyps, scores)
    }

    #[allow(clippy::too_many_arguments)]
    fn link_scores(
        &self,
        rider_hyps: &[Hypothesis],
        moto_hyps: &[Hypothesis],
        rider_tracks: &[usize],
        moto_tracks: &[usize],
        rider_dets: &[usize],
        moto_dets: &[usize],
        dets: &[SacDetection],
        frame: u32,
    ) -> Result<Vec<Option<f64>>, TrackError> {
        let mut history: HashMap<(usize, usize), f64> = HashMap::new();
        let mut current: HashMap<(usize, usize), f64> = HashMap::new();
        let mut out = Vec::with_capacity(rider_hyps.len() * moto_hyps.len());
        for rh in rider_hyps {
            let rt = &self.tracks[rider_tracks[rh.track]];
            for mh in moto_hyps {
                let mt = &self.tracks[moto_tracks[mh.track]];
                if let (Some(a), Some(b)) = (rt.assoc_id, mt.assoc_id) {
                    if a != b {
                        out.push(None);
                        continue;
                    }
                }
                let h = match history.get(&(rh.track, mh.track)) {
                    Some(&v) => v,
                    None => {
                        let v = history_score(rt, mt, frame, self.cfg.buffer_k)?;
                        history.insert((rh.track, mh.track), v);
                        v
                    }
                };
                let c = match current.get(&(rh.detection, mh.detection)) {
                    Some(&v) => v,
                    None => {
                        let v = current_score(&dets[rider_dets[rh.detection]], &dets[moto_dets[mh.detection]])?;
                        current.insert((rh.detection, mh.detection), v);
                        v
                    }
                };
                out.push(Some(h + c - self.cfg.theta));
            }
        }
        Ok(out)
    }

    fn apply_match(&mut self, ti: usize, frame: u32, d: &SacDetection) -> Result<(), TrackError> {
        let k = self.cfg.buffer_k;
        let momentum = self.cfg.emb_momentum;
        let min_hits = self.cfg.min_hits;
        let t = &mut self.tracks[ti];
        t.kf = self.filter.update(&t.kf, &d.bbox)?;
        t.hits += 1;
        t.misses = 0;
        push_buffer(t, frame, d, k);
        if let Some(e) = &d.embedding {
            t.emb = Some(match &t.emb {
                Some(old) => blend(old, e, momentum),
                None => e.clone(),
            });
        }
        if t.status == TrackStatus::Tentative && t.hits >= min_hits {
            t.status = TrackStatus::Confirmed;
            self.ever_confirmed.insert(t.track_id, true);
        }
        Ok(())
    }

    /// Applies the association ID rule for a chosen link.
    fn link(&mut self, rider: usize, moto: usize) {
        let id = match (self.tracks[rider].assoc_id, self.tracks[moto].assoc_id) {
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => {
                let id = self.next_assoc_id;
                self.next_assoc_id += 1;
                id
            }
        };
        for ti in [rider, moto] {
            let t = &mut self.tracks[ti];
            t.establish(id);
            if let Some(a) = t.assoc_id {
                self.final_assoc.insert(t.track_id, a);
            }
        }
    }

    fn spawn(&mut self, frame: u32, d: &SacDetection) -> Track {
        let mut t = Track {
            track_id: self.next_track_id,
            class: d.class,
            kf: self.filter.init(&d.bbox),
            mask_buffer: VecDeque::new(),
            emb: d.embedding.clone(),
            assoc_id: None,
            hits: 1,
            misses: 0,
            age: 0,
            status: TrackStatus::Tentative,
        };
        self.next_track_id += 1;
        push_buffer(&mut t, frame, d, self.cfg.buffer_k);
        if t.hits >= self.cfg.min_hits {
            t.status = TrackStatus::Confirmed;
            self.ever_confirmed.insert(t.track_id, true);
        }
        t
    }

    fn row_for(&self, t: &Track, frame: u32, d: &SacDetection) -> TrackRow {
        TrackRow {
            frame,
            track_id: t.track_id,
            class: t.class,
            assoc_id: t.assoc_id,
            bbox: d.bbox,
            conf: d.confidence,
            det_id: Some(d.det_id),
        }
    }

    /// Offline log: every row of every track that was ever confirmed, including
    /// its tentative lead-in, with each track's final association ID on all of
    /// its rows. Sorted by frame, then track ID.
    pub fn finish(self) -> Vec<TrackRow> {
        let mut rows: Vec<TrackRow> = self
            .log
            .into_iter()
            .filter(|r| self.ever_confirmed.contains_key(&r.track_id))
            .map(|mut r| {
                r.assoc_id = self.final_assoc.get(&r.track_id).copied();
                r
            })
            .collect();
        rows.sort_by_key(|r| (r.frame, r.track_id));
        rows
    }
}

fn push_buffer(t: &mut Track, frame: u32, d: &SacDetection, k: usize) {
    if k == 0 {
        return;
    }
    t.mask_buffer.push_back(BufferedObservation {
        frame,
        seg_mask: d.seg_mask.clone(),
        cross_mask: d.cross_mask.clone(),
        bbox: d.bbox,
    });
    while t.mask_buffer.len() > k {
        t.mask_buffer.pop_front();
    }
}

fn blend(old: &[f64], new: &[f64], momentum: f64) -> Vec<f64> {
    if old.len() != new.len() {
        return new.to_vec();
    }
    let mixed: Vec<f64> = old.iter().zip(new).map(|(a, b)| momentum * a + (1.0 - momentum) * b).collect();
    let n = mixed.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        mixed.into_iter().map(|v| v / n).collect()
    } else {
        new.to_vec()
    }
}

/// Groups detections by frame (stable within a frame) and runs a tracker over
/// every frame from 0 through the last detection frame.
pub fn track_detections(
    dets: &[SacDetection],
    cfg: &TrackerConfig,
    mode: AssignmentMode,
) -> Result<(Vec<TrackRow>, u64), TrackError> {
    let mut by_frame: BTreeMap<u32, Vec<SacDetection>> = BTreeMap::new();
    for d in dets {
        by_frame.entry(d.frame).or_default().push(d.clone());
    }
    let mut tracker = Tracker::new(*cfg, mode);
    let Some(&last) = by_frame.keys().next_back() else {
        return Ok((Vec::new(), 0));
    };
    let empty = Vec::new();
    for f in 0..=last {
        tracker.step(f, by_frame.get(&f).unwrap_or(&empty))?;
    }
    let checked = tracker.solutions_checked();
    Ok((tracker.finish(), checked))
}

/// Joint tracking of a detection stream.
pub fn run_joint(dets: &[SacDetection], cfg: &TrackerConfig) -> Result<Vec<TrackRow>, TrackError> {
    Ok(track_detections(dets, cfg, AssignmentMode::Joint)?.0)
}

/// Per-class SORT-style ablation: independent assignment, then association IDs
/// from per-frame instance formation voted over each rider track's lifetime.
pub fn run_independent_baseline(
    dets: &[SacDetection],
    cfg: &TrackerConfig,
    inst: &InstanceConfig,
) -> Result<Vec<TrackRow>, TrackError> {
    let (mut rows, _) = track_detections(dets, cfg, AssignmentMode::Independent)?;
    assign_assoc_post_hoc(&mut rows, dets, inst)?;
    Ok(rows)
}

/// Derives association IDs for rows that lack them from per-frame instances.
///
/// Each rider track votes, frame by frame, for the motorcycle track its
/// detection was grouped with; the most frequent motorcycle track (lowest ID
/// on ties) wins. Motorcycle tracks with at least one rider receive fresh IDs
/// in increasing track-ID order.
pub fn assign_assoc_post_hoc(
    rows: &mut [TrackRow],
    dets: &[SacDetection],
    inst: &InstanceConfig,
) -> Result<(), TrackError> {
    let by_id: HashMap<u64, &SacDetection> = dets.iter().map(|d| (d.det_id, d)).collect();
    let mut frames: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (k, r) in rows.iter().enumerate() {
        frames.entry(r.frame).or_default().push(k);
    }
    let mut votes: BTreeMap<u64, BTreeMap<u64, u32>> = BTreeMap::new();
    for idxs in frames.values() {
        let (mut riders, mut motos) = (Vec::new(), Vec::new());
        let (mut rider_rows, mut moto_rows) = (Vec::new(), Vec::new());
        for &k in idxs {
            let Some(d) = rows[k].det_id.and_then(|id| by_id.get(&id)) else { continue };
            match rows[k].class {
                ObjectClass::Rider => {
                    riders.push((*d).clone());
                    rider_rows.push(k);
                }
                ObjectClass::Motorcycle => {
                    motos.push((*d).clone());
                    moto_rows.push(k);
                }
            }
        }
        let f = form_instances(&riders, &motos, inst)?;
        for instance in f.instances {
            let mt = rows[moto_rows[instance.motorcycle]].track_id;
            for r in instance.riders {
                let rt = rows[rider_rows[r]].track_id;
                *votes.entry(rt).or_default().entry(mt).or_default() += 1;
            }
        }
    }
    let mut moto_of_rider: BTreeMap<u64, u64> = BTreeMap::new();
    for (rt, tally) in votes {
        let best = tally.iter().fold(None, |acc: Option<(u64, u32)>, (&m, &c)| match acc {
            Some((_, bc)) if bc >= c => acc,
            _ => Some((m, c)),
        });
        if let Some((m, _)) = best {
            moto_of_rider.insert(rt, m);
        }
    }
    let mut id_of_moto: BTreeMap<u64, u64> = moto_of_rider.values().map(|&m| (m, 0)).collect();
    for (n, v) in id_of_moto.values_mut().enumerate() {
        *v = n as u64 + 1;
    }
    for r in rows.iter_mut() {
        r.assoc_id = match r.class {
            ObjectClass::Motorcycle => id_of_moto.get(&r.track_id).copied(),
            ObjectClass::Rider => moto_of_rider.get(&r.track_id).and_then(|m| id_of_moto.get(m)).copied(),
        };
    }
    Ok(())
}

const CSV_HEADER: [&str; 9] = ["frame", "track_id", "class", "assoc_id", "x", "y", "w", "h", "conf"];

/// Writes `frame,track_id,class,assoc_id,x,y,w,h,conf` rows; unset association IDs are -1.
pub fn write_tracks_csv<W: Write>(writer: W, rows: &[TrackRow]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.frame.to_string(),
            r.track_id.to_string(),
            r.class.as_str().to_string(),
            r.assoc_id.map_or("-1".to_string(), |a| a.to_string()),
            r.bbox.x.to_string(),
            r.bbox.y.to_string(),
            r.bbox.w.to_string(),
            r.bbox.h.to_string(),
            r.conf.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tracks_csv<R: Read>(reader: R) -> Result<Vec<TrackRow>, FormatError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(FormatError::Invalid(format!("unexpected track header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |m: String| FormatError::Line { line, message: m };
        let field = |k: usize| rec.get(k).ok_or_else(|| bad(format!("missing column {}", CSV_HEADER[k])));
        let num = |k: usize| -> Result<f64, FormatError> {
            field(k)?.parse::<f64>().map_err(|e| bad(format!("{}: {e}", CSV_HEADER[k])))
        };
        let assoc: i64 = field(3)?.parse().map_err(|e| bad(format!("assoc_id: {e}")))?;
        let bbox = BBox::new(num(4)?, num(5)?, num(6)?, num(7)?);
        if !bbox.is_valid() {
            return Err(bad(format!("invalid box {bbox:?}")));
        }
        rows.push(TrackRow {
            frame: field(0)?.parse().map_err(|e| bad(format!("frame: {e}")))?,
            track_id: field(1)?.parse().map_err(|e| bad(format!("track_id: {e}")))?,
            class: field(2)?.parse().map_err(bad)?,
            assoc_id: if assoc < 0 { None } else { Some(assoc as u64) },
            bbox,
            conf: num(8)?,
            det_id: None,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assoc::test_support::det;
    use crate::geom::{rasterize_box, GridSpec};

    fn grid() -> GridSpec {
        GridSpec::new(100, 60, 4.0).unwrap()
    }

    fn rider_moto(frame: u32, base_id: u64, rider_box: BBox, moto_box: BBox) -> Vec<SacDetection> {
        let g = grid();
        let rs = rasterize_box(&rider_box, &g);
        let ms = rasterize_box(&moto_box, &g);
        let mut r = det(base_id, ObjectClass::Rider, rider_box, rs.clone(), ms.clone());
        let mut m = det(base_id + 1, ObjectClass::Motorcycle, moto_box, ms, rs);
        r.frame = frame;
        m.frame = frame;
        vec![r, m]
    }

    fn pair_at(frame: u32, x: f64) -> Vec<SacDetection> {
        rider_moto(
            frame,
            frame as u64 * 10,
            BBox::new(x + 8.0, 40.0, 24.0, 32.0),
            BBox::new(x, 72.0, 40.0, 28.0),
        )
    }

    #[test]
    fn hypothesis_scoring() {
        let cfg = TrackerConfig::default();
        let d = &pair_at(0, 0.0)[0];
        let exact = TrackerConfig { w_app: 0.0, ..cfg };
        assert_eq!(hypothesis_score(&d.bbox, None, d, &exact), Some(1.0));

        let mut with_emb = d.clone();
        with_emb.embedding = Some(vec![1.0, 0.0]);
        // same box stretched to twice the height: IoU 0.5
        let half = BBox::new(d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h * 2.0);
        let w = TrackerConfig { w_iou: 0.5, w_app: 0.5, ..cfg };
        let s = hypothesis_score(&half, Some(&[1.0, 0.0]), &with_emb, &w).unwrap();
        assert!((s - 0.75).abs() < 1e-12);

        let far = BBox::new(d.bbox.x + d.bbox.w * 0.95, d.bbox.y, d.bbox.w, d.bbox.h);
        assert!(iou_box(&far, &d.bbox) < 0.1);
        assert_eq!(hypothesis_score(&far, None, d, &cfg), None);
    }

    #[test]
    fn buffered_score_cases() {
        let cfg = TrackerConfig::default();
        let mut tracker = Tracker::new(cfg, AssignmentMode::Joint);
        for f in 0..4 {
            tracker.step(f, &pair_at(f, 0.0)).unwrap();
        }
        let r = tracker.tracks[0].clone();
        let m = tracker.tracks[1].clone();
        let cur = pair_at(4, 0.0);
        let s = buffered_assoc_score(&r, &m, &cur[0], &cur[1], 4, &cfg).unwrap().unwrap();
        assert!((s - 3.5).abs() < 1e-12);

        // masks that never overlap anything
        let mut lone_r = r.clone();
        lone_r.mask_buffer.clear();
        let far = pair_at(4, 300.0);
        let s = buffered_assoc_score(&lone_r, &m, &far[0], &cur[1], 4, &cfg).unwrap().unwrap();
        assert!((s + 0.5).abs() < 1e-12);

        let mut r7 = r.clone();
        r7.assoc_id = Some(7);
        let mut m9 = m.clone();
        m9.assoc_id = Some(9);
        assert_eq!(buffered_assoc_score(&r7, &m9, &cur[0], &cur[1], 4, &cfg).unwrap(), None);
    }

    #[test]
    fn empty_stream_emits_nothing() {
        let mut t = Tracker::new(TrackerConfig::default(), AssignmentMode::Joint);
        for f in 0..10 {
            assert!(t.step(f, &[]).unwrap().rows.is_empty());
        }
        assert!(t.finish().is_empty());
    }

    #[test]
    fn out_of_order_is_rejected() {
        let mut t = Tracker::new(TrackerConfig::default(), AssignmentMode::Joint);
        t.step(3, &[]).unwrap();
        assert!(matches!(t.step(3, &[]), Err(TrackError::OutOfOrder { last: 3, got: 3 })));
        assert!(matches!(t.step(5, &pair_at(4, 0.0)), Err(TrackError::FrameMismatch { .. })));
    }

    #[test]
    fn linear_pair_gets_one_shared_id() {
        let dets: Vec<SacDetection> = (0..50).flat_map(|f| pair_at(f, 10.0 + 3.0 * f as f64)).collect();
        let rows = run_joint(&dets, &TrackerConfig::default()).unwrap();
        assert_eq!(rows.len(), 100);
        let ids: std::collections::BTreeSet<u64> = rows.iter().map(|r| r.track_id).collect();
        assert_eq!(ids.len(), 2);
        let assoc: std::collections::BTreeSet<Option<u64>> = rows.iter().map(|r| r.assoc_id).collect();
        assert_eq!(assoc.len(), 1);
        assert!(assoc.iter().next().unwrap().is_some());
        // each track keeps one class and its id on every frame
        for f in 0..50u32 {
            let fr: Vec<_> = rows.iter().filter(|r| r.frame == f).collect();
            assert_eq!(fr.len(), 2);
            assert_eq!(fr[0].class, ObjectClass::Rider);
            assert_eq!(fr[0].track_id, 1);
            assert_eq!(fr[1].track_id, 2);
        }
    }

    #[test]
    fn occluded_rider_keeps_identity() {
        let cfg = TrackerConfig::default();
        let gap = cfg.max_age - 1;
        let mut dets = Vec::new();
        for f in 0..80u32 {
            let x = 10.0 + 2.0 * f as f64;
            let mut pair = pair_at(f, x);
            if (20..20 + gap).contains(&f) {
                pair.remove(0);
            }
            dets.extend(pair);
        }
        let rows = run_joint(&dets, &cfg).unwrap();
        let riders: Vec<_> = rows.iter().filter(|r| r.class == ObjectClass::Rider).collect();
        let ids: std::collections::BTreeSet<u64> = riders.iter().map(|r| r.track_id).collect();
        assert_eq!(ids.len(), 1, "rider track fragmented: {ids:?}");
        let assoc: std::collections::BTreeSet<Option<u64>> = rows.iter().map(|r| r.assoc_id).collect();
        assert_eq!(assoc.len(), 1);
        assert!(riders.iter().any(|r| r.frame == 20 + gap));
    }

    #[test]
    fn assoc_id_is_immutable() {
        let mut t = Tracker::new(TrackerConfig::default(), AssignmentMode::Joint);
        t.step(0, &pair_at(0, 0.0)).unwrap();
        t.step(1, &pair_at(1, 0.0)).unwrap();
        let first = t.tracks[0].assoc_id();
        assert!(first.is_some());
        t.tracks[0].establish(first.unwrap() + 5);
        assert_eq!(t.tracks[0].assoc_id(), first);
    }

    #[test]
    fn baseline_matches_joint_on_clean_data() {
        let dets: Vec<SacDetection> = (0..30)
            .flat_map(|f| {
                let mut v = pair_at(f, 10.0 + 2.0 * f as f64);
                let mut other = rider_moto(
                    f,
                    f as u64 * 10 + 5,
                    BBox::new(250.0 - 2.0 * f as f64, 40.0, 24.0, 32.0),
                    BBox::new(242.0 - 2.0 * f as f64, 72.0, 40.0, 28.0),
                );
                v.append(&mut other);
                v
            })
            .collect();
        let cfg = TrackerConfig::default();
        let joint = run_joint(&dets, &cfg).unwrap();
        let base = run_independent_baseline(&dets, &cfg, &InstanceConfig::default()).unwrap();
        let strip = |rows: &[TrackRow]| -> Vec<(u32, u64, [f64; 4])> {
            rows.iter().map(|r| (r.frame, r.track_id, r.bbox.into())).collect()
        };
        assert_eq!(strip(&joint), strip(&base));
        // post-hoc grouping reproduces the joint pairing
        let pairs = |rows: &[TrackRow]| -> std::collections::BTreeSet<(u64, u64)> {
            let mut by: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
            for r in rows {
                by.entry(r.assoc_id.unwrap()).or_default().push(r.track_id);
            }
            by.values()
                .map(|v| {
                    let mut v = v.clone();
                    v.sort();
                    v.dedup();
                    (v[0], v[1])
                })
                .collect()
        };
        assert_eq!(pairs(&joint), pairs(&base));
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            TrackRow {
                frame: 3,
                track_id: 4,
                class: ObjectClass::Motorcycle,
                assoc_id: None,
                bbox: BBox::new(1.5, 2.25, 10.0, 0.1),
                conf: 0.75,
                det_id: None,
            },
            TrackRow {
                frame: 3,
                track_id: 5,
                class: ObjectClass::Rider,
                assoc_id: Some(2),
                bbox: BBox::new(-1.0, 0.0, 3.0, 4.0),
                conf: 1.0,
                det_id: None,
            },
        ];
        let mut buf = Vec::new();
        write_tracks_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "frame,track_id,class,assoc_id,x,y,w,h,conf\n3,4,motorcycle,-1,1.5,2.25,10,0.1,0.75\n3,5,rider,2,-1,0,3,4,1\n"
        );
        assert_eq!(read_tracks_csv(buf.as_slice()).unwrap(), rows);
    }
}
