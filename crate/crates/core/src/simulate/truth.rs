//! Ground-truth log: per-frame objects plus per-instance violation summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::assoc::{CountLabel, HelmetLabel, ObjectClass};
use crate::geom::{BBox, GridSpec};
use crate::io::{read_jsonl, FormatError};
use crate::tracker::TrackRow;
use crate::violate::Violation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtObject {
    pub gt_id: u64,
    pub class: ObjectClass,
    pub bbox: BBox,
    pub assoc_gt_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub helmet: Option<HelmetLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<CountLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plate: Option<String>,
    pub occluded_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtFrame {
    pub frame: u32,
    pub objects: Vec<GtObject>,
}

/// One rider–motorcycle instance over its whole visible lifetime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtInstance {
    pub assoc_gt_id: u64,
    pub motorcycle: u64,
    pub riders: Vec<u64>,
    pub rider_helmet: BTreeMap<u64, HelmetLabel>,
    pub triple_riding: bool,
    pub plate: String,
    pub first_frame: u32,
    pub last_frame: u32,
}

impl GtInstance {
    pub fn violations(&self) -> BTreeSet<Violation> {
        let mut v = BTreeSet::new();
        if self.rider_helmet.values().any(|&h| h == HelmetLabel::NoHelmet) {
            v.insert(Violation::NoHelmet);
        }
        if self.triple_riding {
            v.insert(Violation::TripleRiding);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtHeader {
    pub scenario: String,
    pub n_frames: u32,
    pub image_w: u32,
    pub image_h: u32,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthLog {
    pub header: GtHeader,
    /// Exactly one entry per frame, in order.
    pub frames: Vec<GtFrame>,
    pub instances: Vec<GtInstance>,
}

fn tagged<T: Serialize, W: Write>(w: &mut W, kind: &str, v: &T) -> Result<(), FormatError> {
    let body = serde_json::to_string(v)?;
    // every line type is a non-empty struct, so the body opens with `{"`
    writeln!(w, "{{\"kind\":\"{kind}\",{}", &body[1..])?;
    Ok(())
}

fn untag<T: serde::de::DeserializeOwned>(mut v: serde_json::Value, line: usize) -> Result<T, FormatError> {
    if let Some(m) = v.as_object_mut() {
        m.remove("kind");
    }
    serde_json::from_value(v).map_err(|e| FormatError::Line {
        line,
        message: e.to_string(),
    })
}

impl GroundTruthLog {
    pub fn n_frames(&self) -> u32 {
        self.header.n_frames
    }

    /// GT objects as track rows (track ID = `gt_id`, association ID = `assoc_gt_id`).
    pub fn track_rows(&self) -> Vec<TrackRow> {
        self.frames
            .iter()
            .flat_map(|f| {
                f.objects.iter().map(move |o| TrackRow {
                    frame: f.frame,
                    track_id: o.gt_id,
                    class: o.class,
                    assoc_id: Some(o.assoc_gt_id),
                    bbox: o.bbox,
                    conf: 1.0,
                    det_id: None,
                })
            })
            .collect()
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), FormatError> {
        tagged(&mut w, "header", &self.header)?;
        for f in &self.frames {
            tagged(&mut w, "frame", f)?;
        }
        for i in &self.instances {
            tagged(&mut w, "instance", i)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, FormatError> {
        let lines: Vec<serde_json::Value> = read_jsonl(r)?;
        let mut header: Option<GtHeader> = None;
        let mut frames: Vec<GtFrame> = Vec::new();
        let mut instances: Vec<GtInstance> = Vec::new();
        for (i, v) in lines.into_iter().enumerate() {
            let line = i + 1;
            let bad = |m: String| FormatError::Line { line, message: m };
            let kind = v.get("kind").and_then(|k| k.as_str()).unwrap_or("").to_string();
            match (kind.as_str(), header.is_some()) {
                ("header", false) if line == 1 => header = Some(untag(v, line)?),
                ("header", _) => return Err(bad("header must be the first line, once".into())),
                (_, false) => return Err(bad("first line must be the header".into())),
                ("frame", true) => {
                    let f: GtFrame = untag(v, line)?;
                    if !instances.is_empty() || f.frame as usize != frames.len() {
                        return Err(bad(format!("frame {} out of order", f.frame)));
                    }
                    frames.push(f);
                }
                ("instance", true) => instances.push(untag(v, line)?),
                (other, true) => return Err(bad(format!("unknown line kind {other:?}"))),
            }
        }
        let header = header.ok_or_else(|| FormatError::Invalid("empty ground-truth file".into()))?;
        if frames.len() != header.n_frames as usize {
            return Err(FormatError::Invalid(format!(
                "header declares {} frames, found {}",
                header.n_frames,
                frames.len()
            )));
        }
        Ok(Self {
            header,
            frames,
            instances,
        })
    }
}
