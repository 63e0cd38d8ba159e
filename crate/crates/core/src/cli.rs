//! The `rmtrack` command line.
//!
//! Exit codes: 0 success, 2 usage or schema errors, 3 frame-range mismatch
//! between prediction and ground truth, 1 anything else.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::assoc::read_detections;
use crate::config::{ConfigError, RunConfig};
use crate::evaluate::{evaluate_scenario, EvalError, SuiteReport};
use crate::io::FormatError;
use crate::pipeline::{
    run_suite, track_and_ticket, write_report, write_run, write_tickets, write_tracks, Method, PipelineError,
};
use crate::simulate::{generate, occlusion_suite, preset, preset_names, preset_suite, write_outputs, GroundTruthLog, Scenario, SimError};
use crate::tracker::read_tracks_csv;
use crate::violate::read_etickets;

#[derive(Debug, Parser)]
#[command(name = "rmtrack", version, about = "Rider-motorcycle tracking, violation e-tickets and evaluation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON run config; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set tracker.theta=0.4`. Repeatable; wins over --config.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate synthetic detections and ground truth for a scenario.
    Simulate {
        /// Scenario JSON file.
        #[arg(required_unless_present = "preset", conflicts_with = "preset")]
        scenario: Option<PathBuf>,
        /// Named preset instead of a file.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track a detection stream and write tracks.csv.
    Track {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-class assignment with association voted afterwards.
        #[arg(long)]
        baseline: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Simulate (optionally), track, build e-tickets and evaluate.
    Pipeline {
        #[arg(long, group = "source")]
        preset: Option<String>,
        #[arg(long, group = "source")]
        scenario: Option<PathBuf>,
        /// `presets` or `occlusion`.
        #[arg(long, group = "source")]
        suite: Option<String>,
        #[arg(long, group = "source")]
        detections: Option<PathBuf>,
        /// Ground truth for `--detections`; enables the report.
        #[arg(long, requires = "detections")]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        baseline: bool,
        /// Discard false-positive tickets before scoring, as a human reviewer would.
        #[arg(long)]
        hitl: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score tracks (and optionally e-tickets) against ground truth.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        etickets: Option<PathBuf>,
        #[arg(long)]
        hitl: bool,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn schema(message: impl ToString) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        let code = if matches!(e, FormatError::Io(_)) { 1 } else { 2 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::schema(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Format(FormatError::Io(_)) | PipelineError::Io(_) => 1,
            PipelineError::Format(_) | PipelineError::Sim(SimError::Invalid(_) | SimError::Format(_)) => 2,
            PipelineError::Eval(EvalError::FrameMismatch { .. }) => 3,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        PipelineError::from(e).into()
    }
}

fn config_help() -> String {
    let mut s = String::from("Config keys (JSON file via --config, single keys via --set KEY=VALUE):\n");
    for k in RunConfig::documented_keys() {
        s.push_str("  ");
        s.push_str(&k);
        s.push('\n');
    }
    s.push_str(&format!("\nPresets: {}\nSuites: presets, occlusion\n", preset_names().join(", ")));
    s.push_str("Log verbosity: RUST_LOG (error, warn, info, debug)\n");
    s
}

fn load_config(a: &ConfigArgs) -> Result<RunConfig, Failure> {
    let base = match &a.config {
        Some(p) => RunConfig::from_json(&std::fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    Ok(base.with_overrides(&a.set)?)
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    Ok(Scenario::from_json(&std::fs::read_to_string(path)?)?)
}

fn named_preset(name: &str) -> Result<Scenario, Failure> {
    preset(name).ok_or_else(|| {
        Failure::schema(format!("unknown preset {name:?}; known: {}", preset_names().join(", ")))
    })
}

fn read_gt(path: &Path) -> Result<GroundTruthLog, Failure> {
    Ok(GroundTruthLog::read(BufReader::new(File::open(path)?))?)
}

fn method(baseline: bool) -> Method {
    if baseline {
        Method::Baseline
    } else {
        Method::Joint
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Simulate { scenario, preset, out } => {
            let sc = match (scenario, preset) {
                (Some(p), _) => load_scenario(&p)?,
                (None, Some(name)) => named_preset(&name)?,
                (None, None) => unreachable!("clap requires one source"),
            };
            let sim = generate(&sc)?;
            write_outputs(&out, &sim)?;
        }
        Cmd::Track {
            detections,
            out,
            baseline,
            config,
        } => {
            let cfg = load_config(&config)?;
            let dets = read_detections(BufReader::new(File::open(&detections)?))?;
            let run = track_and_ticket(&dets, &cfg, method(baseline))?;
            write_tracks(&out, &run.rows)?;
        }
        Cmd::Pipeline {
            preset,
            scenario,
            suite,
            detections,
            gt,
            out,
            baseline,
            hitl,
            config,
        } => {
            let cfg = load_config(&config)?;
            std::fs::create_dir_all(&out)?;
            if let Some(dpath) = detections {
                let dets = read_detections(BufReader::new(File::open(&dpath)?))?;
                let run = track_and_ticket(&dets, &cfg, method(baseline))?;
                write_tracks(&out.join("tracks.csv"), &run.rows)?;
                write_tickets(&out.join("etickets.json"), &run.tickets)?;
                if let Some(g) = gt {
                    let truth = read_gt(&g)?;
                    let r = evaluate_scenario(&truth, &run.rows, &run.tickets, &cfg.evaluation, hitl)?;
                    write_report(&out.join("report.json"), &SuiteReport::new(vec![r]))?;
                }
                return Ok(());
            }
            let scenarios = match (preset, scenario, suite) {
                (Some(name), _, _) => vec![named_preset(&name)?],
                (_, Some(p), _) => vec![load_scenario(&p)?],
                (_, _, Some(s)) => match s.as_str() {
                    "presets" => preset_suite(),
                    "occlusion" => occlusion_suite(),
                    other => return Err(Failure::schema(format!("unknown suite {other:?}; known: presets, occlusion"))),
                },
                _ => return Err(Failure::schema("pipeline needs --preset, --scenario, --suite or --detections")),
            };
            let (runs, report) = run_suite(&scenarios, &cfg, method(baseline), hitl)?;
            for r in &runs {
                write_run(&out, r)?;
            }
            write_report(&out.join("report.json"), &report)?;
        }
        Cmd::Evaluate {
            gt,
            pred,
            etickets,
            hitl,
            out,
            config,
        } => {
            let cfg = load_config(&config)?;
            let truth = read_gt(&gt)?;
            let rows = read_tracks_csv(BufReader::new(File::open(&pred)?))?;
            let tickets = match etickets {
                Some(p) => read_etickets(BufReader::new(File::open(&p)?)).map_err(FormatError::from)?,
                None => Vec::new(),
            };
            let r = evaluate_scenario(&truth, &rows, &tickets, &cfg.evaluation, hitl)?;
            let report = SuiteReport::new(vec![r]);
            match out {
                Some(p) => write_report(&p, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report).map_err(FormatError::from)?),
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().after_help(config_help()).try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("rmtrack: {}", f.message);
            f.code
        }
    }
}
