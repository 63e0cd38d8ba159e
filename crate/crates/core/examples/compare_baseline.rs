//! Joint tracker against per-class tracking with post-hoc association, on the
//! occlusion suite.

use rmtrack::config::RunConfig;
use rmtrack::pipeline::{run_suite, Method};
use rmtrack::simulate::occlusion_suite;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let suite = occlusion_suite();
    let cfg = RunConfig::default();
    let (_, joint) = run_suite(&suite, &cfg, Method::Joint, false)?;
    let (_, base) = run_suite(&suite, &cfg, Method::Baseline, false)?;

    println!("{:<22} {:>14} {:>14} {:>14} {:>14}", "scenario", "IDF1 j/b", "HOTA j/b", "assoc% j/b", "ticket F1 j/b");
    let line = |name: &str, j: &rmtrack::evaluate::EvalReport, b: &rmtrack::evaluate::EvalReport| {
        println!(
            "{name:<22} {:>6.4}/{:<6.4} {:>6.4}/{:<6.4} {:>6.2}/{:<6.2} {:>6.2}/{:<6.2}",
            j.idf1, b.idf1, j.hota, b.hota, j.assoc_score_pct, b.assoc_score_pct, j.eticket.f1, b.eticket.f1
        )
    };
    for (j, b) in joint.scenarios.iter().zip(&base.scenarios) {
        line(&j.scenario, j, b);
    }
    line("aggregate", &joint.aggregate, &base.aggregate);
    Ok(())
}
