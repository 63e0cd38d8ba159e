//! One frame of the joint assignment program, solved with and without link terms.
//!
//! Two riders pass close by each other. Motion alone prefers swapping their
//! detections; the link scores to the motorcycles they have been riding keep
//! each rider on its own detection.

use rmtrack::tracker::joint::{solve_independent, solve_joint, Hypothesis, JointProblem, ObjectiveWeights};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = |track, detection| Hypothesis { track, detection };
    let rider_hyps = vec![h(0, 0), h(0, 1), h(1, 0), h(1, 1)];
    let rider_scores = vec![0.55, 0.70, 0.65, 0.52];
    let moto_hyps = vec![h(0, 0), h(1, 1)];
    let moto_scores = vec![0.9, 0.8];
    // buffered association sums minus the threshold, rider-major
    let assoc = [[2.8, -0.5], [1.9, 0.4], [0.4, 1.9], [-0.5, 2.8]].iter().flatten().map(|&v| Some(v)).collect::<Vec<_>>();

    for (name, w) in [
        ("joint", ObjectiveWeights::default()),
        ("no link term", ObjectiveWeights { assoc: 0.0, ..Default::default() }),
    ] {
        let p = JointProblem::new(rider_hyps.clone(), rider_scores.clone(), moto_hyps.clone(), moto_scores.clone(), assoc.clone(), w)?;
        let s = solve_joint(&p, 64)?;
        s.check(&p)?;
        println!("{name}: objective {:.3}", s.objective);
        for (i, hyp) in p.rider_hyps.iter().enumerate() {
            if s.rider_chosen[i] {
                let link = s.linked_moto(i).map(|j| format!(" linked to moto track {}", p.moto_hyps[j].track));
                println!("  rider track {} <- detection {}{}", hyp.track, hyp.detection, link.unwrap_or_default());
            }
        }
        let ind = solve_independent(&p);
        println!("  per-class assignment objective {:.3}", ind.objective);
    }
    Ok(())
}
