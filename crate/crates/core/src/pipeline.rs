//! Simulate → track → consolidate → evaluate, for one scenario or a suite.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use thiserror::Error;

use crate::assoc::SacDetection;
use crate::config::RunConfig;
use crate::evaluate::{evaluate_scenario, EvalError, EvalReport, SuiteReport};
use crate::io::FormatError;
use crate::simulate::{generate, write_outputs, Scenario, SimError, Simulation};
use crate::tracker::{assign_assoc_post_hoc, track_detections, write_tracks_csv, AssignmentMode, TrackError, TrackRow};
use crate::violate::{assemble_etickets, write_etickets, ETicket, ViolateError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Violate(#[from] ViolateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Joint,
    /// Per-class assignment with association IDs voted afterwards.
    Baseline,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<TrackRow>,
    pub tickets: Vec<ETicket>,
    /// Joint solutions checked against the constraints.
    pub solutions_checked: u64,
}

pub fn track_and_ticket(dets: &[SacDetection], cfg: &RunConfig, method: Method) -> Result<RunOutput, PipelineError> {
    let (rows, solutions_checked) = match method {
        Method::Joint => track_detections(dets, &cfg.tracker, AssignmentMode::Joint)?,
        Method::Baseline => {
            let (mut rows, n) = track_detections(dets, &cfg.tracker, AssignmentMode::Independent)?;
            assign_assoc_post_hoc(&mut rows, dets, &cfg.instance)?;
            (rows, n)
        }
    };
    let tickets = assemble_etickets(&rows, dets, &cfg.consolidation)?;
    Ok(RunOutput {
        rows,
        tickets,
        solutions_checked,
    })
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub sim: Simulation,
    pub output: RunOutput,
    pub report: EvalReport,
}

pub fn run_scenario(
    sc: &Scenario,
    cfg: &RunConfig,
    method: Method,
    human_in_loop: bool,
) -> Result<ScenarioRun, PipelineError> {
    let sim = generate(sc)?;
    let output = track_and_ticket(&sim.detections, cfg, method)?;
    let report = evaluate_scenario(&sim.truth, &output.rows, &output.tickets, &cfg.evaluation, human_in_loop)?;
    info!(
        "{}: hota {:.4} idf1 {:.4} mota {:.4} tickets {}",
        sc.name,
        report.hota,
        report.idf1,
        report.mota,
        output.tickets.len()
    );
    Ok(ScenarioRun { sim, output, report })
}

/// Runs scenarios in parallel; results keep the input order.
pub fn run_suite(
    scenarios: &[Scenario],
    cfg: &RunConfig,
    method: Method,
    human_in_loop: bool,
) -> Result<(Vec<ScenarioRun>, SuiteReport), PipelineError> {
    let runs = scenarios
        .par_iter()
        .map(|sc| run_scenario(sc, cfg, method, human_in_loop))
        .collect::<Result<Vec<_>, _>>()?;
    let report = SuiteReport::new(runs.iter().map(|r| r.report.clone()).collect());
    Ok((runs, report))
}

pub fn write_tracks(path: &Path, rows: &[TrackRow]) -> Result<(), PipelineError> {
    write_tracks_csv(BufWriter::new(File::create(path)?), rows)?;
    Ok(())
}

pub fn write_tickets(path: &Path, tickets: &[ETicket]) -> Result<(), PipelineError> {
    write_etickets(BufWriter::new(File::create(path)?), tickets).map_err(FormatError::from)?;
    Ok(())
}

pub fn write_report<T: serde::Serialize>(path: &Path, report: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(report).map_err(FormatError::from)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// `dir/<scenario>/` gets the simulation files, tracks.csv and etickets.json.
pub fn write_run(dir: &Path, run: &ScenarioRun) -> Result<(), PipelineError> {
    let sub = dir.join(&run.sim.truth.header.scenario);
    write_outputs(&sub, &run.sim)?;
    write_tracks(&sub.join("tracks.csv"), &run.output.rows)?;
    write_tickets(&sub.join("etickets.json"), &run.output.tickets)?;
    Ok(())
}
