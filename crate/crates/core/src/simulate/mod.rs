//! Seeded synthetic traffic generator.
//!
//! A scenario describes lanes of rider–motorcycle instances, moving occluders
//! and a noise model. [`generate`] turns it into a ground-truth log and a
//! stream of detections in the same format the tracker consumes. Each
//! instance box is split into a lower motorcycle band and an upper rider band
//! cut into one slice per rider; cross-object masks are exactly the partner
//! masks before noise.
//!
//! All randomness comes from one ChaCha8 stream seeded by `Scenario::seed`.

mod presets;
mod truth;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assoc::{write_detections, CountLabel, DetectionAttrs, HelmetLabel, ObjectClass, PlateRead, SacDetection};
use crate::geom::{rasterize_box, BBox, BinaryMask, GridSpec};
use crate::io::FormatError;
use crate::tracker::write_tracks_csv;

pub use presets::{occlusion_suite, preset, preset_names, preset_suite};
pub use truth::{GroundTruthLog, GtFrame, GtHeader, GtInstance, GtObject};

/// Height of the rider band as a fraction of instance width.
pub const RIDER_BAND: f64 = 0.7;
/// Height of the motorcycle band as a fraction of instance width.
pub const MOTO_BAND: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lane {
    /// Bottom edge of instances in this lane, pixels.
    pub y: f64,
    /// +1 moves right, -1 moves left.
    pub dir: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnSpec {
    /// Instances placed at frame 0.
    pub initial: u32,
    /// Mean new instances per frame.
    pub rate: f64,
    /// Probability of 1, 2 and 3 riders.
    pub rider_count_probs: [f64; 3],
    /// Probability that a rider wears a helmet.
    pub helmet_prob: f64,
    /// `@` is a random letter, `9` a random digit, anything else literal.
    pub plate_templates: Vec<String>,
    /// Minimum horizontal gap to an instance already in the lane.
    pub min_gap: f64,
    /// No spawning in the last `tail_frames` frames.
    pub tail_frames: u32,
    pub max_active: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSpec {
    pub lanes: Vec<Lane>,
    /// Instance width range, pixels.
    pub width: [f64; 2],
    /// Speed range, pixels per frame.
    pub speed: [f64; 2],
    /// Largest vertical acceleration, pixels per frame².
    pub curvature_max: f64,
    /// Scene shift per frame from camera motion.
    pub ego_drift: [f64; 2],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OccluderSpec {
    pub count: u32,
    pub width: [f64; 2],
    pub height: [f64; 2],
    pub speed_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub miss_prob: f64,
    /// Added to the miss probability per unit of occluded fraction.
    pub occlusion_miss_mult: f64,
    /// Gaussian std on each box coordinate, pixels.
    pub box_jitter: f64,
    /// Mean false positives per frame.
    pub fp_rate: f64,
    /// Mask growth in cells (negative erodes).
    pub mask_morph_cells: i32,
    pub helmet_flip_prob: f64,
    pub count_flip_prob: f64,
    /// Per-character corruption probability at `plate_ref_height`; scales
    /// inversely with motorcycle box height.
    pub plate_char_prob: f64,
    pub plate_ref_height: f64,
    /// Plates on boxes shorter than this read as `#`.
    pub plate_hidden_height: f64,
    /// Probability that a clean character is misread as another one.
    pub plate_substitute_prob: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            miss_prob: 0.0,
            occlusion_miss_mult: 0.0,
            box_jitter: 0.0,
            fp_rate: 0.0,
            mask_morph_cells: 0,
            helmet_flip_prob: 0.0,
            count_flip_prob: 0.0,
            plate_char_prob: 0.0,
            plate_ref_height: 32.0,
            plate_hidden_height: 0.0,
            plate_substitute_prob: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppearanceSpec {
    /// Embedding length; 0 disables embeddings.
    pub dim: usize,
    /// Gaussian std added per component before renormalizing.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub n_frames: u32,
    pub image_w: u32,
    pub image_h: u32,
    pub grid: GridSpec,
    pub spawn: SpawnSpec,
    pub motion: MotionSpec,
    #[serde(default)]
    pub occluders: OccluderSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub appearance: AppearanceSpec,
}

fn check_prob(name: &str, p: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SimError::Invalid(format!("{name} = {p} is not a probability")))
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<(), SimError> {
    if r[0].is_finite() && r[1].is_finite() && 0.0 <= r[0] && r[0] <= r[1] {
        Ok(())
    } else {
        Err(SimError::Invalid(format!("{name} = {r:?} is not an ordered non-negative range")))
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<(), SimError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(SimError::Invalid(format!("{name} = {v} must be finite and >= 0")))
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| {
            FormatError::Line {
                line: e.line(),
                message: e.to_string(),
            }
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let inv = |m: String| Err(SimError::Invalid(m));
        if self.n_frames == 0 {
            return inv("n_frames must be >= 1".into());
        }
        if self.image_w == 0 || self.image_h == 0 {
            return inv("image size must be positive".into());
        }
        self.grid.validate().map_err(|e| SimError::Invalid(e.to_string()))?;
        let g = &self.grid;
        if (g.grid_w as f64) * g.cell_size < self.image_w as f64 || (g.grid_h as f64) * g.cell_size < self.image_h as f64 {
            return inv("grid does not cover the image".into());
        }
        let s = &self.spawn;
        check_nonneg("spawn.rate", s.rate)?;
        check_nonneg("spawn.min_gap", s.min_gap)?;
        check_prob("spawn.helmet_prob", s.helmet_prob)?;
        for (i, &p) in s.rider_count_probs.iter().enumerate() {
            check_prob(&format!("spawn.rider_count_probs[{i}]"), p)?;
        }
        let total: f64 = s.rider_count_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return inv(format!("spawn.rider_count_probs sum to {total}, not 1"));
        }
        if s.plate_templates.is_empty() {
            return inv("spawn.plate_templates is empty".into());
        }
        for t in &s.plate_templates {
            if t.is_empty() || t.contains(['.', '#']) || !t.is_ascii() {
                return inv(format!("plate template {t:?} must be non-empty ASCII without '.' or '#'"));
            }
        }
        let m = &self.motion;
        check_range("motion.width", m.width)?;
        check_range("motion.speed", m.speed)?;
        check_nonneg("motion.curvature_max", m.curvature_max)?;
        if !m.ego_drift.iter().all(|v| v.is_finite()) {
            return inv("motion.ego_drift must be finite".into());
        }
        if m.width[0] <= 0.0 || m.width[1] >= self.image_w as f64 {
            return inv(format!("motion.width {:?} must be positive and narrower than the image", m.width));
        }
        if m.lanes.is_empty() {
            return inv("motion.lanes is empty".into());
        }
        let tallest = instance_height(m.width[1]);
        for (i, l) in m.lanes.iter().enumerate() {
            if l.dir != 1 && l.dir != -1 {
                return inv(format!("lane {i}: dir must be 1 or -1"));
            }
            if !(l.y.is_finite() && l.y - tallest >= 0.0 && l.y <= self.image_h as f64) {
                return inv(format!("lane {i}: y = {} cannot hold an instance of height {tallest}", l.y));
            }
        }
        let o = &self.occluders;
        if o.count > 0 {
            check_range("occluders.width", o.width)?;
            check_range("occluders.height", o.height)?;
            check_nonneg("occluders.speed_max", o.speed_max)?;
        }
        let n = &self.noise;
        check_prob("noise.miss_prob", n.miss_prob)?;
        check_nonneg("noise.occlusion_miss_mult", n.occlusion_miss_mult)?;
        check_nonneg("noise.box_jitter", n.box_jitter)?;
        check_nonneg("noise.fp_rate", n.fp_rate)?;
        check_prob("noise.helmet_flip_prob", n.helmet_flip_prob)?;
        check_prob("noise.count_flip_prob", n.count_flip_prob)?;
        check_prob("noise.plate_char_prob", n.plate_char_prob)?;
        check_prob("noise.plate_substitute_prob", n.plate_substitute_prob)?;
        check_nonneg("noise.plate_hidden_height", n.plate_hidden_height)?;
        if !(n.plate_ref_height.is_finite() && n.plate_ref_height > 0.0) {
            return inv("noise.plate_ref_height must be > 0".into());
        }
        check_nonneg("appearance.noise", self.appearance.noise)?;
        Ok(())
    }
}

fn instance_height(w: f64) -> f64 {
    (RIDER_BAND + MOTO_BAND) * w
}

/// Motorcycle box and rider boxes of an instance whose box has top-left `(x, y)` and width `w`.
pub fn instance_layout(x: f64, y: f64, w: f64, n_riders: usize) -> (BBox, Vec<BBox>) {
    let rider_h = RIDER_BAND * w;
    let moto = BBox::new(x, y + rider_h, w, MOTO_BAND * w);
    let slice = w / n_riders as f64;
    let riders = (0..n_riders)
        .map(|i| BBox::new(x + slice * i as f64, y, slice, rider_h))
        .collect();
    (moto, riders)
}

struct Entity {
    assoc_gt_id: u64,
    moto_id: u64,
    rider_ids: Vec<u64>,
    lane: usize,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    ay: f64,
    w: f64,
    helmets: Vec<HelmetLabel>,
    plate: String,
    /// Motorcycle first, then riders.
    embs: Vec<Vec<f64>>,
    first_frame: u32,
    last_frame: u32,
}

impl Entity {
    fn bbox(&self) -> BBox {
        BBox::new(self.x, self.y, self.w, instance_height(self.w))
    }

    fn layout(&self) -> (BBox, Vec<BBox>) {
        instance_layout(self.x, self.y, self.w, self.rider_ids.len())
    }
}

struct Occluder {
    bbox: BBox,
    vx: f64,
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.gen_range(r[0]..r[1])
    } else {
        r[0]
    }
}

fn inside(b: &BBox, w: f64, h: f64) -> bool {
    b.x >= 0.0 && b.y >= 0.0 && b.right() <= w && b.bottom() <= h
}

fn h_gap(a: &BBox, b: &BBox) -> f64 {
    (a.x - b.right()).max(b.x - a.right())
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| n.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn render_plate(rng: &mut ChaCha8Rng, template: &str) -> String {
    template
        .chars()
        .map(|c| match c {
            '@' => rng.gen_range(b'A'..=b'Z') as char,
            '9' => rng.gen_range(b'0'..=b'9') as char,
            other => other,
        })
        .collect()
}

/// Ground truth plus the detection stream of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub truth: GroundTruthLog,
    pub detections: Vec<SacDetection>,
}

struct Generator<'a> {
    sc: &'a Scenario,
    rng: ChaCha8Rng,
    entities: Vec<Entity>,
    retired: Vec<Entity>,
    occluders: Vec<Occluder>,
    next_gt: u64,
    next_assoc: u64,
    next_det: u64,
}

impl<'a> Generator<'a> {
    fn new(sc: &'a Scenario) -> Self {
        Self {
            sc,
            rng: ChaCha8Rng::seed_from_u64(sc.seed),
            entities: Vec::new(),
            retired: Vec::new(),
            occluders: Vec::new(),
            next_gt: 1,
            next_assoc: 1,
            next_det: 0,
        }
    }

    fn try_spawn(&mut self, frame: u32, at_edge: bool) {
        let sc = self.sc;
        let m = &sc.motion;
        let lane = self.rng.gen_range(0..m.lanes.len());
        let w = uniform(&mut self.rng, m.width);
        let speed = uniform(&mut self.rng, m.speed);
        let ay = if m.curvature_max > 0.0 {
            self.rng.gen_range(-m.curvature_max..=m.curvature_max)
        } else {
            0.0
        };
        let dir = m.lanes[lane].dir as f64;
        let image_w = sc.image_w as f64;
        let x = if at_edge {
            if dir > 0.0 {
                0.0
            } else {
                image_w - w
            }
        } else {
            self.rng.gen_range(0.0..=(image_w - w))
        };
        let y = m.lanes[lane].y - instance_height(w);
        let p = self.rng.gen::<f64>();
        let probs = sc.spawn.rider_count_probs;
        let n_riders = if p < probs[0] {
            1
        } else if p < probs[0] + probs[1] {
            2
        } else {
            3
        };
        let helmets: Vec<HelmetLabel> = (0..n_riders)
            .map(|_| {
                if self.rng.gen_bool(sc.spawn.helmet_prob) {
                    HelmetLabel::Helmet
                } else {
                    HelmetLabel::NoHelmet
                }
            })
            .collect();
        let t = self.rng.gen_range(0..sc.spawn.plate_templates.len());
        let plate = render_plate(&mut self.rng, &sc.spawn.plate_templates[t]);
        let dim = sc.appearance.dim;
        let embs = if dim > 0 {
            (0..=n_riders).map(|_| unit_vector(&mut self.rng, dim)).collect()
        } else {
            Vec::new()
        };

        let candidate = BBox::new(x, y, w, instance_height(w));
        if !inside(&candidate, image_w, sc.image_h as f64) {
            return;
        }
        if self.entities.len() >= sc.spawn.max_active as usize {
            return;
        }
        let crowded = self
            .entities
            .iter()
            .any(|e| e.lane == lane && h_gap(&e.bbox(), &candidate) < sc.spawn.min_gap);
        if crowded {
            return;
        }
        let moto_id = self.next_gt;
        let rider_ids: Vec<u64> = (1..=n_riders as u64).map(|i| moto_id + i).collect();
        self.next_gt += 1 + n_riders as u64;
        self.entities.push(Entity {
            assoc_gt_id: self.next_assoc,
            moto_id,
            rider_ids,
            lane,
            x,
            y,
            vx: dir * speed,
            vy: 0.0,
            ay,
            w,
            helmets,
            plate,
            embs,
            first_frame: frame,
            last_frame: frame,
        });
        self.next_assoc += 1;
    }

    fn advance(&mut self) {
        let sc = self.sc;
        let [ex, ey] = sc.motion.ego_drift;
        let (iw, ih) = (sc.image_w as f64, sc.image_h as f64);
        for e in &mut self.entities {
            e.vy += e.ay;
            e.x += e.vx + ex;
            e.y += e.vy + ey;
        }
        self.keep_lane_gaps();
        let mut kept = Vec::with_capacity(self.entities.len());
        for e in self.entities.drain(..) {
            if inside(&e.bbox(), iw, ih) {
                kept.push(e);
            } else {
                self.retired.push(e);
            }
        }
        self.entities = kept;
        for o in &mut self.occluders {
            o.bbox.x += o.vx + ex;
            o.bbox.y += ey;
            if o.bbox.x > iw {
                o.bbox.x -= iw + o.bbox.w;
            } else if o.bbox.right() < 0.0 {
                o.bbox.x += iw + o.bbox.w;
            }
        }
    }

    /// A vehicle that would close within `min_gap` of the one ahead in its lane
    /// stops at the gap and takes the leader's speed.
    fn keep_lane_gaps(&mut self) {
        let gap = self.sc.spawn.min_gap;
        for lane in 0..self.sc.motion.lanes.len() {
            let dir = self.sc.motion.lanes[lane].dir as f64;
            let mut order: Vec<usize> = (0..self.entities.len()).filter(|&i| self.entities[i].lane == lane).collect();
            // leader first
            order.sort_by(|&a, &b| (dir * self.entities[b].x).total_cmp(&(dir * self.entities[a].x)).then(a.cmp(&b)));
            for k in 1..order.len() {
                let lead = &self.entities[order[k - 1]];
                let (lx, lw, lvx) = (lead.x, lead.w, lead.vx);
                let f = &mut self.entities[order[k]];
                let limit = if dir > 0.0 { lx - gap - f.w } else { lx + lw + gap };
                if dir * (f.x - limit) > 0.0 {
                    f.x = limit;
                    f.vx = lvx;
                }
            }
        }
    }

    fn place_occluders(&mut self) {
        let o = &self.sc.occluders;
        for _ in 0..o.count {
            let w = uniform(&mut self.rng, o.width);
            let h = uniform(&mut self.rng, o.height);
            let x = self.rng.gen_range(0.0..=self.sc.image_w as f64);
            let y = self.rng.gen_range(0.0..=(self.sc.image_h as f64 - h).max(0.0));
            let vx = if o.speed_max > 0.0 {
                self.rng.gen_range(-o.speed_max..=o.speed_max)
            } else {
                0.0
            };
            self.occluders.push(Occluder {
                bbox: BBox::new(x, y, w, h),
                vx,
            });
        }
    }

    fn occluder_mask(&self) -> BinaryMask {
        let g = &self.sc.grid;
        self.occluders.iter().fold(BinaryMask::empty(*g), |acc, o| {
            acc.union(&rasterize_box(&o.bbox, g)).expect("same grid")
        })
    }

    fn jitter(&mut self, b: &BBox) -> BBox {
        let s = self.sc.noise.box_jitter;
        if s == 0.0 {
            return *b;
        }
        let n = Normal::new(0.0, s).expect("finite std");
        let x = b.x + n.sample(&mut self.rng);
        let y = b.y + n.sample(&mut self.rng);
        let w = (b.w + n.sample(&mut self.rng)).max(2.0);
        let h = (b.h + n.sample(&mut self.rng)).max(2.0);
        BBox::new(x, y, w, h)
    }

    fn mask_of(&self, b: &BBox) -> BinaryMask {
        let cells = self.sc.noise.mask_morph_cells;
        if cells == 0 {
            rasterize_box(b, &self.sc.grid)
        } else {
            rasterize_box(&b.inflated(cells as f64 * self.sc.grid.cell_size), &self.sc.grid)
        }
    }

    fn noisy_emb(&mut self, e: &[f64]) -> Vec<f64> {
        let s = self.sc.appearance.noise;
        if s == 0.0 {
            return e.to_vec();
        }
        let n = Normal::new(0.0, s).expect("finite std");
        let v: Vec<f64> = e.iter().map(|x| x + n.sample(&mut self.rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            v.into_iter().map(|x| x / norm).collect()
        } else {
            e.to_vec()
        }
    }

    fn read_plate(&mut self, plate: &str, moto_h: f64) -> PlateRead {
        let n = &self.sc.noise;
        if moto_h < n.plate_hidden_height {
            return PlateRead {
                text: "#".into(),
                conf: 0.0,
            };
        }
        let p_char = (n.plate_char_prob * n.plate_ref_height / moto_h).min(1.0);
        let p_sub = n.plate_substitute_prob;
        let mut clean = 0usize;
        let text: String = plate
            .chars()
            .map(|c| {
                if p_char > 0.0 && self.rng.gen_bool(p_char) {
                    '.'
                } else if p_sub > 0.0 && self.rng.gen_bool(p_sub) {
                    misread(&mut self.rng, c)
                } else {
                    clean += 1;
                    c
                }
            })
            .collect();
        let len = plate.chars().count().max(1);
        PlateRead {
            text,
            conf: clean as f64 / len as f64,
        }
    }

    fn flip_helmet(&mut self, h: HelmetLabel) -> HelmetLabel {
        let p = self.sc.noise.helmet_flip_prob;
        if p > 0.0 && self.rng.gen_bool(p) {
            match h {
                HelmetLabel::Helmet => HelmetLabel::NoHelmet,
                HelmetLabel::NoHelmet => HelmetLabel::Helmet,
                HelmetLabel::Unknown => HelmetLabel::Unknown,
            }
        } else {
            h
        }
    }

    fn flip_count(&mut self, c: CountLabel) -> CountLabel {
        let p = self.sc.noise.count_flip_prob;
        if p > 0.0 && self.rng.gen_bool(p) {
            let others: Vec<CountLabel> = ALL_COUNTS.iter().copied().filter(|&o| o != c).collect();
            others[self.rng.gen_range(0..others.len())]
        } else {
            c
        }
    }

    fn emit(
        &mut self,
        out: &mut Vec<SacDetection>,
        frame: u32,
        class: ObjectClass,
        bbox: BBox,
        seg: BinaryMask,
        cross: BinaryMask,
        conf: f64,
        embedding: Option<Vec<f64>>,
        attrs: DetectionAttrs,
    ) {
        out.push(SacDetection {
            frame,
            class,
            bbox,
            confidence: conf.clamp(0.0, 1.0),
            seg_mask: seg,
            cross_mask: cross,
            embedding,
            attrs: Some(attrs),
            det_id: self.next_det,
        });
        self.next_det += 1;
    }

    fn frame(&mut self, frame: u32, gt: &mut Vec<GtObject>, dets: &mut Vec<SacDetection>) {
        let occ = self.occluder_mask();
        let grid = self.sc.grid;
        let noise = self.sc.noise.clone();
        let entities = std::mem::take(&mut self.entities);
        for e in &entities {
            let (moto_box, rider_boxes) = e.layout();
            let n = rider_boxes.len();
            let count = CountLabel::from_count(n);
            let frac = |b: &BBox| {
                let m = rasterize_box(b, &grid);
                if m.is_empty() {
                    0.0
                } else {
                    m.intersection_count(&occ).expect("same grid") as f64 / m.count() as f64
                }
            };
            let moto_occ = frac(&moto_box);
            gt.push(GtObject {
                gt_id: e.moto_id,
                class: ObjectClass::Motorcycle,
                bbox: moto_box,
                assoc_gt_id: e.assoc_gt_id,
                helmet: None,
                count: Some(count),
                plate: Some(e.plate.clone()),
                occluded_fraction: moto_occ,
            });
            let rider_occ: Vec<f64> = rider_boxes.iter().map(frac).collect();
            for (i, b) in rider_boxes.iter().enumerate() {
                gt.push(GtObject {
                    gt_id: e.rider_ids[i],
                    class: ObjectClass::Rider,
                    bbox: *b,
                    assoc_gt_id: e.assoc_gt_id,
                    helmet: Some(e.helmets[i]),
                    count: None,
                    plate: None,
                    occluded_fraction: rider_occ[i],
                });
            }

            // detections: motorcycle, then riders
            let miss = |rng: &mut ChaCha8Rng, o: f64| {
                let p = (noise.miss_prob + noise.occlusion_miss_mult * o).clamp(0.0, 1.0);
                p > 0.0 && rng.gen_bool(p)
            };
            if !miss(&mut self.rng, moto_occ) {
                let b = self.jitter(&moto_box);
                let seg = self.mask_of(&b);
                let mut cross = BinaryMask::empty(grid);
                for r in &rider_boxes {
                    let rb = self.jitter(r);
                    cross = cross.union(&self.mask_of(&rb)).expect("same grid");
                }
                let emb = e.embs.first().map(|v| v.clone());
                let emb = emb.map(|v| self.noisy_emb(&v));
                let attrs = DetectionAttrs {
                    helmet: None,
                    count: Some(self.flip_count(count)),
                    plate: Some(self.read_plate(&e.plate, moto_box.h)),
                };
                self.emit(dets, frame, ObjectClass::Motorcycle, b, seg, cross, 1.0 - 0.5 * moto_occ, emb, attrs);
            }
            for (i, r) in rider_boxes.iter().enumerate() {
                if miss(&mut self.rng, rider_occ[i]) {
                    continue;
                }
                let b = self.jitter(r);
                let seg = self.mask_of(&b);
                let mb = self.jitter(&moto_box);
                let cross = self.mask_of(&mb);
                let emb = e.embs.get(i + 1).cloned();
                let emb = emb.map(|v| self.noisy_emb(&v));
                let attrs = DetectionAttrs {
                    helmet: Some(self.flip_helmet(e.helmets[i])),
                    count: None,
                    plate: None,
                };
                self.emit(dets, frame, ObjectClass::Rider, b, seg, cross, 1.0 - 0.5 * rider_occ[i], emb, attrs);
            }
        }
        self.entities = entities;
        for e in &mut self.entities {
            e.last_frame = frame;
        }

        if noise.fp_rate > 0.0 {
            let k = Poisson::new(noise.fp_rate).expect("positive rate").sample(&mut self.rng) as usize;
            for _ in 0..k {
                self.false_positive(frame, dets);
            }
        }
    }

    fn false_positive(&mut self, frame: u32, dets: &mut Vec<SacDetection>) {
        let sc = self.sc;
        let w = uniform(&mut self.rng, sc.motion.width);
        let rider = self.rng.gen_bool(0.5);
        let (bw, bh) = if rider { (w / 2.0, RIDER_BAND * w) } else { (w, MOTO_BAND * w) };
        let x = self.rng.gen_range(0.0..=(sc.image_w as f64 - bw).max(0.0));
        let y = self.rng.gen_range(0.0..=(sc.image_h as f64 - bh).max(0.0));
        let b = BBox::new(x, y, bw, bh);
        let off = b.translated(self.rng.gen_range(-w..=w), self.rng.gen_range(-w..=w));
        let seg = self.mask_of(&b);
        let cross = self.mask_of(&off);
        let emb = (sc.appearance.dim > 0).then(|| unit_vector(&mut self.rng, sc.appearance.dim));
        let conf = self.rng.gen_range(0.3..=1.0);
        let (class, attrs) = if rider {
            let h = if self.rng.gen_bool(0.5) { HelmetLabel::Helmet } else { HelmetLabel::NoHelmet };
            (
                ObjectClass::Rider,
                DetectionAttrs {
                    helmet: Some(h),
                    ..Default::default()
                },
            )
        } else {
            let c = ALL_COUNTS[self.rng.gen_range(0..ALL_COUNTS.len())];
            let t = self.rng.gen_range(0..sc.spawn.plate_templates.len());
            let text = render_plate(&mut self.rng, &sc.spawn.plate_templates[t]);
            (
                ObjectClass::Motorcycle,
                DetectionAttrs {
                    count: Some(c),
                    plate: Some(PlateRead { text, conf: 0.5 }),
                    ..Default::default()
                },
            )
        };
        self.emit(dets, frame, class, b, seg, cross, conf, emb, attrs);
    }

    fn run(mut self) -> Simulation {
        let sc = self.sc;
        self.place_occluders();
        let mut frames = Vec::with_capacity(sc.n_frames as usize);
        let mut dets = Vec::new();
        for f in 0..sc.n_frames {
            if f == 0 {
                for _ in 0..sc.spawn.initial {
                    self.try_spawn(0, false);
                }
            } else {
                self.advance();
                if f + sc.spawn.tail_frames < sc.n_frames && sc.spawn.rate > 0.0 {
                    let k = Poisson::new(sc.spawn.rate).expect("positive rate").sample(&mut self.rng) as usize;
                    for _ in 0..k {
                        self.try_spawn(f, true);
                    }
                }
            }
            let mut objects = Vec::new();
            self.frame(f, &mut objects, &mut dets);
            frames.push(GtFrame { frame: f, objects });
        }
        let mut all: Vec<Entity> = self.retired;
        all.append(&mut self.entities);
        all.sort_by_key(|e| e.assoc_gt_id);
        let instances = all
            .iter()
            .map(|e| GtInstance {
                assoc_gt_id: e.assoc_gt_id,
                motorcycle: e.moto_id,
                riders: e.rider_ids.clone(),
                rider_helmet: e.rider_ids.iter().copied().zip(e.helmets.iter().copied()).collect::<BTreeMap<_, _>>(),
                triple_riding: e.rider_ids.len() >= 3,
                plate: e.plate.clone(),
                first_frame: e.first_frame,
                last_frame: e.last_frame,
            })
            .collect();
        Simulation {
            truth: GroundTruthLog {
                header: GtHeader {
                    scenario: sc.name.clone(),
                    n_frames: sc.n_frames,
                    image_w: sc.image_w,
                    image_h: sc.image_h,
                    grid: sc.grid,
                },
                frames,
                instances,
            },
            detections: dets,
        }
    }
}

const ALL_COUNTS: [CountLabel; 4] = [CountLabel::None, CountLabel::Single, CountLabel::Double, CountLabel::Triple];

fn misread(rng: &mut ChaCha8Rng, c: char) -> char {
    let pool: &[u8] = if c.is_ascii_digit() {
        b"0123456789"
    } else if c.is_ascii_uppercase() {
        b"ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    } else {
        return c;
    };
    loop {
        let n = pool[rng.gen_range(0..pool.len())] as char;
        if n != c {
            return n;
        }
    }
}

/// Runs a scenario. The result is a pure function of the scenario.
pub fn generate(sc: &Scenario) -> Result<Simulation, SimError> {
    sc.validate()?;
    Ok(Generator::new(sc).run())
}

/// Writes `gt.jsonl`, `detections.jsonl` and `gt_tracks.csv` into `dir`.
pub fn write_outputs(dir: &Path, sim: &Simulation) -> Result<(), SimError> {
    std::fs::create_dir_all(dir)?;
    let mut gt = BufWriter::new(File::create(dir.join("gt.jsonl"))?);
    sim.truth.write(&mut gt)?;
    gt.flush()?;
    let mut d = BufWriter::new(File::create(dir.join("detections.jsonl"))?);
    write_detections(&mut d, &sim.detections)?;
    d.flush()?;
    let f = File::create(dir.join("gt_tracks.csv"))?;
    write_tracks_csv(BufWriter::new(f), &sim.truth.track_rows())?;
    Ok(())
}
