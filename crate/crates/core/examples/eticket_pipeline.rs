//! Tracks a scenario and prints the e-tickets next to the true violators.

use rmtrack::assoc::{HelmetLabel, PlateRead};
use rmtrack::config::RunConfig;
use rmtrack::pipeline::{track_and_ticket, Method};
use rmtrack::simulate::{generate, preset};
use rmtrack::violate::{consolidate_helmet, consolidate_plate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // the voting rules on their own
    let votes = [HelmetLabel::NoHelmet, HelmetLabel::Helmet, HelmetLabel::NoHelmet, HelmetLabel::Unknown];
    println!("helmet votes {votes:?} -> {:?}", consolidate_helmet(&votes));
    let reads = [
        PlateRead { text: "KA01AB1234".into(), conf: 0.7 },
        PlateRead { text: "KA01A8123".into(), conf: 0.9 },
        PlateRead { text: "KA01AB1234".into(), conf: 0.6 },
    ];
    println!("plate reads -> {:?}", consolidate_plate(&reads));

    let sc = preset("noiseless").expect("preset");
    let sim = generate(&sc)?;
    let out = track_and_ticket(&sim.detections, &RunConfig::default(), Method::Joint)?;
    println!("\n{} tickets from {} frames", out.tickets.len(), sc.n_frames);
    for t in &out.tickets {
        println!(
            "  group {:3} {:?} plate {:<12} seen in {} frames",
            t.assoc_id,
            t.violations,
            t.plate.as_deref().unwrap_or("-"),
            t.evidence_frames.len()
        );
    }
    for i in sim.truth.instances.iter().filter(|i| !i.violations().is_empty()) {
        println!("  truth {:3} {:?} plate {}", i.assoc_gt_id, i.violations(), i.plate);
    }
    Ok(())
}
