//! Feeds a detection stream to the online tracker frame by frame.

use rmtrack::assoc::ObjectClass;
use rmtrack::simulate::{generate, preset};
use rmtrack::tracker::{AssignmentMode, Tracker, TrackerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sc = preset("low-visibility").expect("preset");
    sc.n_frames = 200;
    let sim = generate(&sc)?;

    let mut tracker = Tracker::new(TrackerConfig::default(), AssignmentMode::Joint);
    let mut start = 0;
    for frame in 0..sc.n_frames {
        let end = start + sim.detections[start..].iter().take_while(|d| d.frame == frame).count();
        let out = tracker.step(frame, &sim.detections[start..end])?;
        start = end;
        if frame % 40 == 0 {
            let linked = out.rows.iter().filter(|r| r.class == ObjectClass::Rider && r.assoc_id.is_some()).count();
            println!("frame {frame:3}: {} boxes out, {linked} riders linked to a motorcycle", out.rows.len());
        }
    }
    println!("joint solutions checked: {}", tracker.solutions_checked());
    let rows = tracker.finish();
    let mut ids: Vec<u64> = rows.iter().map(|r| r.track_id).collect();
    ids.sort_unstable();
    ids.dedup();
    println!("{} rows across {} tracks", rows.len(), ids.len());
    Ok(())
}
