//! Rider–motorcycle association from segmentation and cross-object masks.
//!
//! A rider's cross-object mask covers the motorcycle it sits on; a
//! motorcycle's cross-object mask covers all of its riders. The association
//! score averages two mask IoUs: the rider's cross mask against the
//! motorcycle's own mask, and the rider's mask against the motorcycle's cross
//! mask clipped to the rider box (the clip keeps co-riders out of the term).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{mask_iou, mask_restrict, BBox, BinaryMask, GeomError};
use crate::io::{read_jsonl, write_jsonl, FormatError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssocError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("detection {det_id}: expected class {expected:?}, got {got:?}")]
    WrongClass {
        det_id: u64,
        expected: ObjectClass,
        got: ObjectClass,
    },
    #[error("detection {det_id}: {reason}")]
    InvalidDetection { det_id: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Rider,
    Motorcycle,
}

impl ObjectClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectClass::Rider => "rider",
            ObjectClass::Motorcycle => "motorcycle",
        }
    }
}

impl std::str::FromStr for ObjectClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rider" => Ok(ObjectClass::Rider),
            "motorcycle" => Ok(ObjectClass::Motorcycle),
            other => Err(format!("unknown class {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HelmetLabel {
    Helmet,
    NoHelmet,
    Unknown,
}

/// Per-frame rider count classification of an R-M instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountLabel {
    None,
    Single,
    Double,
    Triple,
}

impl CountLabel {
    pub fn from_count(n: usize) -> Self {
        match n {
            0 => CountLabel::None,
            1 => CountLabel::Single,
            2 => CountLabel::Double,
            _ => CountLabel::Triple,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateRead {
    pub text: String,
    pub conf: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionAttrs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub helmet: Option<HelmetLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<CountLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plate: Option<PlateRead>,
}

/// One per-frame observation as the segmentation/cross-association stage would emit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SacDetection {
    pub frame: u32,
    pub class: ObjectClass,
    pub bbox: BBox,
    #[serde(rename = "conf")]
    pub confidence: f64,
    #[serde(rename = "seg")]
    pub seg_mask: BinaryMask,
    #[serde(rename = "cross")]
    pub cross_mask: BinaryMask,
    #[serde(rename = "emb", default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attrs: Option<DetectionAttrs>,
    pub det_id: u64,
}

impl SacDetection {
    pub fn validate(&self) -> Result<(), AssocError> {
        let bad = |reason: String| AssocError::InvalidDetection {
            det_id: self.det_id,
            reason,
        };
        if !self.bbox.is_valid() {
            return Err(bad(format!("invalid box {:?}", self.bbox)));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(bad(format!("confidence {} outside [0,1]", self.confidence)));
        }
        if self.seg_mask.grid() != self.cross_mask.grid() {
            return Err(GeomError::GridMismatch(*self.seg_mask.grid(), *self.cross_mask.grid()).into());
        }
        if let Some(e) = &self.embedding {
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(bad(format!("embedding norm {norm} is not 1")));
            }
        }
        Ok(())
    }

    pub fn helmet(&self) -> Option<HelmetLabel> {
        self.attrs.as_ref().and_then(|a| a.helmet)
    }

    pub fn count_label(&self) -> Option<CountLabel> {
        self.attrs.as_ref().and_then(|a| a.count)
    }

    pub fn plate(&self) -> Option<&PlateRead> {
        self.attrs.as_ref().and_then(|a| a.plate.as_ref())
    }
}

pub fn read_detections<R: BufRead>(reader: R) -> Result<Vec<SacDetection>, FormatError> {
    let dets: Vec<SacDetection> = read_jsonl(reader)?;
    for (i, d) in dets.iter().enumerate() {
        d.validate().map_err(|e| FormatError::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
    }
    Ok(dets)
}

pub fn write_detections<W: Write>(writer: W, dets: &[SacDetection]) -> Result<(), FormatError> {
    write_jsonl(writer, dets)
}

/// Association score from raw parts; the motorcycle box does not enter the score.
pub fn association_score_parts(
    rider_seg: &BinaryMask,
    rider_cross: &BinaryMask,
    rider_box: &BBox,
    moto_seg: &BinaryMask,
    moto_cross: &BinaryMask,
) -> Result<f64, GeomError> {
    let first = mask_iou(rider_cross, moto_seg)?;
    let clipped = mask_restrict(moto_cross, rider_box);
    let second = mask_iou(rider_seg, &clipped)?;
    Ok(0.5 * (first + second))
}

fn expect_class(d: &SacDetection, class: ObjectClass) -> Result<(), AssocError> {
    if d.class != class {
        return Err(AssocError::WrongClass {
            det_id: d.det_id,
            expected: class,
            got: d.class,
        });
    }
    Ok(())
}

/// Score in `[0, 1]` that rider `r` sits on motorcycle `m`.
pub fn association_score(r: &SacDetection, m: &SacDetection) -> Result<f64, AssocError> {
    expect_class(r, ObjectClass::Rider)?;
    expect_class(m, ObjectClass::Motorcycle)?;
    Ok(association_score_parts(
        &r.seg_mask,
        &r.cross_mask,
        &r.bbox,
        &m.seg_mask,
        &m.cross_mask,
    )?)
}

/// Rider × motorcycle score table, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMatrix {
    n_riders: usize,
    n_motorcycles: usize,
    scores: Vec<f64>,
}

impl AssociationMatrix {
    pub fn n_riders(&self) -> usize {
        self.n_riders
    }

    pub fn n_motorcycles(&self) -> usize {
        self.n_motorcycles
    }

    pub fn get(&self, rider: usize, moto: usize) -> f64 {
        self.scores[rider * self.n_motorcycles + moto]
    }

    pub fn row(&self, rider: usize) -> &[f64] {
        &self.scores[rider * self.n_motorcycles..(rider + 1) * self.n_motorcycles]
    }
}

pub fn build_matrix(
    riders: &[SacDetection],
    motos: &[SacDetection],
) -> Result<AssociationMatrix, AssocError> {
    let mut scores = Vec::with_capacity(riders.len() * motos.len());
    for r in riders {
        for m in motos {
            scores.push(association_score(r, m)?);
        }
    }
    Ok(AssociationMatrix {
        n_riders: riders.len(),
        n_motorcycles: motos.len(),
        scores,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceConfig {
    /// Minimum row maximum for a rider to join a motorcycle.
    pub tau_assoc: f64,
    pub max_riders: usize,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            tau_assoc: 0.5,
            max_riders: 4,
        }
    }
}

/// A motorcycle and the riders on it within one frame. Members are indices
/// into the rider / motorcycle slices passed to [`form_instances`].
#[derive(Debug, Clone, PartialEq)]
pub struct RMInstance {
    pub motorcycle: usize,
    pub riders: Vec<usize>,
    pub bbox: BBox,
    pub instance_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InstanceFormation {
    pub instances: Vec<RMInstance>,
    pub unassigned_riders: Vec<usize>,
    pub unassigned_motorcycles: Vec<usize>,
}

/// Groups one frame's riders onto motorcycles.
///
/// Each rider goes to the motorcycle maximizing its row of the association
/// matrix (lowest index on ties) when that maximum reaches `tau_assoc`.
/// Instances come out ordered by motorcycle index with riders in index order.
pub fn form_instances(
    riders: &[SacDetection],
    motos: &[SacDetection],
    cfg: &InstanceConfig,
) -> Result<InstanceFormation, AssocError> {
    let matrix = build_matrix(riders, motos)?;
    Ok(form_instances_from_matrix(&matrix, riders, motos, cfg))
}

pub fn form_instances_from_matrix(
    matrix: &AssociationMatrix,
    riders: &[SacDetection],
    motos: &[SacDetection],
    cfg: &InstanceConfig,
) -> InstanceFormation {
    let mut claims: Vec<Vec<(usize, f64)>> = vec![Vec::new(); motos.len()];
    let mut unassigned_riders = Vec::new();
    for k in 0..matrix.n_riders() {
        let best = matrix
            .row(k)
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, f64)>, (l, &s)| match acc {
                Some((_, bs)) if bs >= s => acc,
                _ => Some((l, s)),
            });
        match best {
            Some((l, s)) if s >= cfg.tau_assoc => claims[l].push((k, s)),
            _ => unassigned_riders.push(k),
        }
    }

    let mut instances = Vec::new();
    let mut unassigned_motorcycles = Vec::new();
    for (l, mut claim) in claims.into_iter().enumerate() {
        if claim.is_empty() {
            unassigned_motorcycles.push(l);
            continue;
        }
        if claim.len() > cfg.max_riders {
            claim.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            unassigned_riders.extend(claim.drain(cfg.max_riders..).map(|(k, _)| k));
        }
        let mut members: Vec<usize> = claim.into_iter().map(|(k, _)| k).collect();
        members.sort_unstable();
        let bbox = members
            .iter()
            .fold(motos[l].bbox, |acc, &k| acc.union_box(&riders[k].bbox));
        instances.push(RMInstance {
            motorcycle: l,
            riders: members,
            bbox,
            instance_id: None,
        });
    }
    unassigned_riders.sort_unstable();
    InstanceFormation {
        instances,
        unassigned_riders,
        unassigned_motorcycles,
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::geom::{rasterize_box, GridSpec};

    pub fn det(
        det_id: u64,
        class: ObjectClass,
        bbox: BBox,
        seg: BinaryMask,
        cross: BinaryMask,
    ) -> SacDetection {
        SacDetection {
            frame: 0,
            class,
            bbox,
            confidence: 1.0,
            seg_mask: seg,
            cross_mask: cross,
            embedding: None,
            attrs: None,
            det_id,
        }
    }

    /// A perfectly consistent rider/motorcycle pair on `grid`.
    pub fn perfect_pair(grid: GridSpec, rider_box: BBox, moto_box: BBox) -> (SacDetection, SacDetection) {
        let rs = rasterize_box(&rider_box, &grid);
        let ms = rasterize_box(&moto_box, &grid);
        (
            det(1, ObjectClass::Rider, rider_box, rs.clone(), ms.clone()),
            det(2, ObjectClass::Motorcycle, moto_box, ms, rs),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::geom::{rasterize_box, GridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g() -> GridSpec {
        GridSpec::new(16, 16, 1.0).unwrap()
    }

    fn pixel_iou(a: &[bool], b: &[bool]) -> f64 {
        let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
        let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    #[test]
    fn perfect_and_disjoint() {
        let (r, m) = perfect_pair(g(), BBox::new(2.0, 0.0, 4.0, 4.0), BBox::new(0.0, 4.0, 8.0, 4.0));
        assert_eq!(association_score(&r, &m).unwrap(), 1.0);

        let quad = |x: f64, y: f64| rasterize_box(&BBox::new(x, y, 3.0, 3.0), &g());
        let r = det(1, ObjectClass::Rider, BBox::new(0.0, 0.0, 3.0, 3.0), quad(0.0, 0.0), quad(4.0, 0.0));
        let m = det(2, ObjectClass::Motorcycle, BBox::new(8.0, 0.0, 3.0, 3.0), quad(8.0, 0.0), quad(12.0, 0.0));
        assert_eq!(association_score(&r, &m).unwrap(), 0.0);
    }

    #[test]
    fn two_thirds_case() {
        // first term: 4x4 vs 4x4 shifted by 2 columns -> 8/24; second term exact
        let grid = g();
        let rider_box = BBox::new(0.0, 8.0, 4.0, 4.0);
        let rider_seg = rasterize_box(&rider_box, &grid);
        let rider_cross = rasterize_box(&BBox::new(0.0, 0.0, 4.0, 4.0), &grid);
        let moto_seg = rasterize_box(&BBox::new(2.0, 0.0, 4.0, 4.0), &grid);
        let r = det(1, ObjectClass::Rider, rider_box, rider_seg.clone(), rider_cross);
        let m = det(2, ObjectClass::Motorcycle, BBox::new(2.0, 0.0, 4.0, 4.0), moto_seg, rider_seg);
        let s = association_score(&r, &m).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn wrong_class_is_an_error() {
        let (r, m) = perfect_pair(g(), BBox::new(2.0, 0.0, 4.0, 4.0), BBox::new(0.0, 4.0, 8.0, 4.0));
        assert!(matches!(association_score(&m, &r), Err(AssocError::WrongClass { .. })));
    }

    #[test]
    fn matrix_matches_pixel_oracle() {
        let grid = g();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut rand_box = || {
            BBox::new(
                rng.gen_range(0..12) as f64,
                rng.gen_range(0..12) as f64,
                rng.gen_range(1..6) as f64,
                rng.gen_range(1..6) as f64,
            )
        };
        let mk = |id, class, b: BBox, s: BBox, c: BBox| {
            det(id, class, b, rasterize_box(&s, &grid), rasterize_box(&c, &grid))
        };
        let riders: Vec<_> = (0..2)
            .map(|i| mk(i, ObjectClass::Rider, rand_box(), rand_box(), rand_box()))
            .collect();
        let motos: Vec<_> = (0..2)
            .map(|i| mk(10 + i, ObjectClass::Motorcycle, rand_box(), rand_box(), rand_box()))
            .collect();
        let m = build_matrix(&riders, &motos).unwrap();
        for (k, r) in riders.iter().enumerate() {
            for (l, mo) in motos.iter().enumerate() {
                let rb = r.bbox;
                let window: Vec<bool> = (0..256)
                    .map(|i| rb.contains_point((i % 16) as f64 + 0.5, (i / 16) as f64 + 0.5))
                    .collect();
                let clipped: Vec<bool> = mo
                    .cross_mask
                    .to_bits()
                    .iter()
                    .zip(&window)
                    .map(|(a, b)| *a && *b)
                    .collect();
                let oracle = 0.5
                    * (pixel_iou(&r.cross_mask.to_bits(), &mo.seg_mask.to_bits())
                        + pixel_iou(&r.seg_mask.to_bits(), &clipped));
                assert!((m.get(k, l) - oracle).abs() < 1e-12);
            }
        }
        assert_eq!(build_matrix(&[], &motos).unwrap().n_riders(), 0);
    }

    #[test]
    fn instance_formation_rules() {
        let grid = g();
        let (r, m) = perfect_pair(grid, BBox::new(2.0, 0.0, 4.0, 4.0), BBox::new(0.0, 4.0, 8.0, 4.0));
        let cfg = InstanceConfig::default();
        let f = form_instances(&[r.clone()], &[m.clone()], &cfg).unwrap();
        assert_eq!(f.instances.len(), 1);
        assert_eq!(f.instances[0].riders, vec![0]);
        assert_eq!(f.instances[0].bbox, BBox::new(0.0, 0.0, 8.0, 8.0));

        let strict = InstanceConfig {
            tau_assoc: 1.1,
            ..cfg
        };
        let f = form_instances(&[r], &[m], &strict).unwrap();
        assert!(f.instances.is_empty());
        assert_eq!(f.unassigned_riders, vec![0]);
        assert_eq!(f.unassigned_motorcycles, vec![0]);
    }

    #[test]
    fn argmax_rule_exhaustive() {
        // every 3-rider / 2-moto score pattern over a small value set
        let values = [0.0, 0.3, 0.5, 0.9];
        let cfg = InstanceConfig {
            tau_assoc: 0.5,
            max_riders: 4,
        };
        let dummy: Vec<SacDetection> = (0..3)
            .map(|i| {
                det(i, ObjectClass::Rider, BBox::new(i as f64, 0.0, 1.0, 1.0),
                    BinaryMask::empty(g()), BinaryMask::empty(g()))
            })
            .collect();
        let motos: Vec<SacDetection> = (0..2)
            .map(|i| {
                det(10 + i, ObjectClass::Motorcycle, BBox::new(i as f64, 5.0, 1.0, 1.0),
                    BinaryMask::empty(g()), BinaryMask::empty(g()))
            })
            .collect();
        for code in 0..values.len().pow(6) {
            let mut c = code;
            let scores: Vec<f64> = (0..6)
                .map(|_| {
                    let v = values[c % values.len()];
                    c /= values.len();
                    v
                })
                .collect();
            let matrix = AssociationMatrix {
                n_riders: 3,
                n_motorcycles: 2,
                scores: scores.clone(),
            };
            let f = form_instances_from_matrix(&matrix, &dummy, &motos, &cfg);
            let mut seen = vec![false; 3];
            for inst in &f.instances {
                for &k in &inst.riders {
                    assert!(!seen[k]);
                    seen[k] = true;
                    let (a, b) = (scores[2 * k], scores[2 * k + 1]);
                    let expect = if a >= b { 0 } else { 1 };
                    assert_eq!(inst.motorcycle, expect);
                    assert!(a.max(b) >= 0.5);
                }
            }
            for &k in &f.unassigned_riders {
                assert!(!seen[k]);
                assert!(scores[2 * k].max(scores[2 * k + 1]) < 0.5);
            }
        }
        // three riders all preferring moto 1
        let matrix = AssociationMatrix {
            n_riders: 3,
            n_motorcycles: 2,
            scores: vec![0.1, 0.8, 0.2, 0.9, 0.0, 0.7],
        };
        let f = form_instances_from_matrix(&matrix, &dummy, &motos, &cfg);
        assert_eq!(f.instances.len(), 1);
        assert_eq!(f.instances[0].motorcycle, 1);
        assert_eq!(f.instances[0].riders, vec![0, 1, 2]);
    }

    #[test]
    fn rider_cap_drops_weakest() {
        let dummy: Vec<SacDetection> = (0..3)
            .map(|i| {
                det(i, ObjectClass::Rider, BBox::new(0.0, 0.0, 1.0, 1.0),
                    BinaryMask::empty(g()), BinaryMask::empty(g()))
            })
            .collect();
        let moto = vec![det(9, ObjectClass::Motorcycle, BBox::new(0.0, 0.0, 1.0, 1.0),
                            BinaryMask::empty(g()), BinaryMask::empty(g()))];
        let matrix = AssociationMatrix {
            n_riders: 3,
            n_motorcycles: 1,
            scores: vec![0.6, 0.9, 0.8],
        };
        let cfg = InstanceConfig {
            tau_assoc: 0.5,
            max_riders: 2,
        };
        let f = form_instances_from_matrix(&matrix, &dummy, &moto, &cfg);
        assert_eq!(f.instances[0].riders, vec![1, 2]);
        assert_eq!(f.unassigned_riders, vec![0]);
    }

    #[test]
    fn detection_json_round_trip() {
        let (mut r, _) = perfect_pair(g(), BBox::new(2.0, 0.0, 4.0, 4.0), BBox::new(0.0, 4.0, 8.0, 4.0));
        r.attrs = Some(DetectionAttrs {
            helmet: Some(HelmetLabel::NoHelmet),
            ..Default::default()
        });
        r.embedding = Some(vec![0.6, 0.8]);
        let mut buf = Vec::new();
        write_detections(&mut buf, std::slice::from_ref(&r)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"frame":0,"class":"rider","bbox":[2.0,0.0,4.0,4.0],"conf":1.0,"seg":"#));
        let back = read_detections(buf.as_slice()).unwrap();
        assert_eq!(back, vec![r]);

        let bad = text.replace("\"conf\":1.0", "\"conf\":1.5");
        assert!(matches!(read_detections(bad.as_bytes()), Err(FormatError::Line { line: 1, .. })));
    }
}
