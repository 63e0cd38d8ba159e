//! Generates a preset scenario and summarizes it.
//!
//! `cargo run --example simulate_scenario -- occlusion-heavy [out_dir]`

use std::collections::BTreeSet;

use rmtrack::assoc::ObjectClass;
use rmtrack::simulate::{generate, preset, preset_names, write_outputs};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "dense-traffic".into());
    let Some(sc) = preset(&name) else {
        eprintln!("unknown preset {name}; try one of {}", preset_names().join(", "));
        std::process::exit(2);
    };
    let sim = generate(&sc)?;

    let rows = sim.truth.track_rows();
    let ids = |c| rows.iter().filter(|r| r.class == c).map(|r| r.track_id).collect::<BTreeSet<_>>().len();
    let riders = sim.detections.iter().filter(|d| d.class == ObjectClass::Rider).count();
    println!("{}: {} frames, seed {}", sc.name, sim.truth.n_frames(), sc.seed);
    println!("  gt objects: {} riders, {} motorcycles", ids(ObjectClass::Rider), ids(ObjectClass::Motorcycle));
    println!("  detections: {} ({} riders)", sim.detections.len(), riders);
    let peak = (0..sim.truth.n_frames())
        .map(|f| sim.detections.iter().filter(|d| d.frame == f).count())
        .max()
        .unwrap_or(0);
    println!("  peak detections per frame: {peak}");

    if let Some(dir) = args.next() {
        write_outputs(dir.as_ref(), &sim)?;
        println!("wrote {dir}/gt.jsonl, detections.jsonl, gt_tracks.csv");
    }
    Ok(())
}
