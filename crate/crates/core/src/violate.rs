//! Track-level consolidation of helmet, rider-count and plate evidence into e-tickets.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assoc::{CountLabel, HelmetLabel, ObjectClass, PlateRead, SacDetection};
use crate::tracker::TrackRow;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ViolateError {
    #[error("track {track_id} frame {frame}: detection {det_id} not found")]
    DanglingDetection { track_id: u64, frame: u32, det_id: u64 },
    #[error("track {track_id} frame {frame}: row carries no detection id")]
    MissingDetId { track_id: u64, frame: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    NoHelmet,
    TripleRiding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsolidationConfig {
    /// Frames labelled triple needed to flag a track.
    pub triple_min_count: usize,
    /// Label returned when helmet votes tie.
    pub helmet_tie: HelmetLabel,
}

impl Default for ConsolidationConfig {
    fn default() -> Self {
        Self {
            triple_min_count: 1,
            helmet_tie: HelmetLabel::Helmet,
        }
    }
}

impl ConsolidationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.triple_min_count == 0 {
            return Err("triple_min_count must be >= 1".into());
        }
        if self.helmet_tie == HelmetLabel::Unknown {
            return Err("helmet_tie must be helmet or no_helmet".into());
        }
        Ok(())
    }
}

/// Majority vote over helmet observations; unknown labels are ignored and a
/// tie (including no votes at all) yields `helmet`.
pub fn consolidate_helmet(obs: &[HelmetLabel]) -> HelmetLabel {
    consolidate_helmet_with(obs, HelmetLabel::Helmet)
}

pub fn consolidate_helmet_with(obs: &[HelmetLabel], tie: HelmetLabel) -> HelmetLabel {
    let yes = obs.iter().filter(|&&l| l == HelmetLabel::Helmet).count();
    let no = obs.iter().filter(|&&l| l == HelmetLabel::NoHelmet).count();
    match yes.cmp(&no) {
        std::cmp::Ordering::Greater => HelmetLabel::Helmet,
        std::cmp::Ordering::Less => HelmetLabel::NoHelmet,
        std::cmp::Ordering::Equal => tie,
    }
}

/// Flags triple riding when at least `m` frames were labelled triple.
pub fn consolidate_triple(labels: &[CountLabel], m: usize) -> bool {
    labels.iter().filter(|&&l| l == CountLabel::Triple).count() >= m.max(1)
}

/// True for reads containing no placeholder characters.
pub fn is_complete_plate(text: &str) -> bool {
    !text.is_empty() && !text.contains(['.', '#'])
}

/// Most frequent complete plate string. Ties go to the larger summed
/// confidence, then to the lexicographically smaller string.
pub fn consolidate_plate(reads: &[PlateRead]) -> Option<String> {
    let mut tally: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for r in reads.iter().filter(|r| is_complete_plate(&r.text)) {
        let e = tally.entry(r.text.as_str()).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += r.conf;
    }
    // BTreeMap iterates in lexicographic order, so keeping the first of equals
    // implements the final tie-break.
    let mut best: Option<(&str, usize, f64)> = None;
    for (text, (n, conf)) in tally {
        let better = match best {
            None => true,
            Some((_, bn, bc)) => n > bn || (n == bn && conf > bc),
        };
        if better {
            best = Some((text, n, conf));
        }
    }
    best.map(|(t, _, _)| t.to_string())
}

/// Violation record for one rider–motorcycle association group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ETicket {
    pub assoc_id: u64,
    pub violations: Vec<Violation>,
    pub plate: Option<String>,
    pub evidence_frames: Vec<u32>,
    pub per_rider_helmet: BTreeMap<u64, HelmetLabel>,
}

#[derive(Default)]
struct Group<'a> {
    riders: BTreeMap<u64, Vec<(u32, &'a SacDetection)>>,
    motos: BTreeMap<u64, Vec<(u32, &'a SacDetection)>>,
}

/// Builds e-tickets from tracker rows joined to their detections by `det_id`.
///
/// Rows are grouped by association ID; rows without one are ignored. Each
/// rider track's helmet labels are voted, the group's motorcycle count labels
/// are checked for triple riding, and motorcycle plate reads are voted. A
/// ticket is emitted only when some violation is flagged. Output is ordered by
/// association ID.
pub fn assemble_etickets(
    rows: &[TrackRow],
    dets: &[SacDetection],
    cfg: &ConsolidationConfig,
) -> Result<Vec<ETicket>, ViolateError> {
    let by_id: HashMap<u64, &SacDetection> = dets.iter().map(|d| (d.det_id, d)).collect();
    let mut groups: BTreeMap<u64, Group> = BTreeMap::new();
    for r in rows {
        let Some(assoc) = r.assoc_id else { continue };
        let det_id = r.det_id.ok_or(ViolateError::MissingDetId {
            track_id: r.track_id,
            frame: r.frame,
        })?;
        let d = *by_id.get(&det_id).ok_or(ViolateError::DanglingDetection {
            track_id: r.track_id,
            frame: r.frame,
            det_id,
        })?;
        let g = groups.entry(assoc).or_default();
        let side = match r.class {
            ObjectClass::Rider => &mut g.riders,
            ObjectClass::Motorcycle => &mut g.motos,
        };
        side.entry(r.track_id).or_default().push((r.frame, d));
    }

    let mut tickets = Vec::new();
    for (assoc_id, g) in groups {
        let mut violations = BTreeSet::new();
        let mut evidence = BTreeSet::new();
        let mut per_rider = BTreeMap::new();
        for (&tid, obs) in &g.riders {
            let labels: Vec<HelmetLabel> = obs.iter().filter_map(|(_, d)| d.helmet()).collect();
            let verdict = consolidate_helmet_with(&labels, cfg.helmet_tie);
            if verdict == HelmetLabel::NoHelmet {
                violations.insert(Violation::NoHelmet);
                evidence.extend(
                    obs.iter()
                        .filter(|(_, d)| d.helmet() == Some(HelmetLabel::NoHelmet))
                        .map(|(f, _)| *f),
                );
            }
            per_rider.insert(tid, verdict);
        }
        let counts: Vec<(u32, CountLabel)> = g
            .motos
            .values()
            .flatten()
            .filter_map(|(f, d)| d.count_label().map(|c| (*f, c)))
            .collect();
        let labels: Vec<CountLabel> = counts.iter().map(|(_, c)| *c).collect();
        if consolidate_triple(&labels, cfg.triple_min_count) {
            violations.insert(Violation::TripleRiding);
            evidence.extend(counts.iter().filter(|(_, c)| *c == CountLabel::Triple).map(|(f, _)| *f));
        }
        if violations.is_empty() {
            continue;
        }
        let reads: Vec<PlateRead> = g.motos.values().flatten().filter_map(|(_, d)| d.plate().cloned()).collect();
        tickets.push(ETicket {
            assoc_id,
            violations: violations.into_iter().collect(),
            plate: consolidate_plate(&reads),
            evidence_frames: evidence.into_iter().collect(),
            per_rider_helmet: per_rider,
        });
    }
    Ok(tickets)
}

pub fn write_etickets<W: std::io::Write>(mut w: W, tickets: &[ETicket]) -> Result<(), serde_json::Error> {
    serde_json::to_writer_pretty(&mut w, tickets)?;
    Ok(())
}

pub fn read_etickets<R: std::io::Read>(r: R) -> Result<Vec<ETicket>, serde_json::Error> {
    serde_json::from_reader(r)
}
