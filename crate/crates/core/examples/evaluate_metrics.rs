//! Tracking and e-ticket metrics on small hand-made cases.

use rmtrack::assoc::ObjectClass;
use rmtrack::evaluate::{
    cer, clear_counts, default_alphas, eticket_label, eticket_prf, hota, idf1, Outcome, PlateDetection, Recognition,
    StageLabel,
};
use rmtrack::geom::BBox;
use rmtrack::tracker::TrackRow;

fn row(frame: u32, id: u64, x: f64) -> TrackRow {
    TrackRow {
        frame,
        track_id: id,
        class: ObjectClass::Motorcycle,
        assoc_id: None,
        bbox: BBox::new(x, 0.0, 10.0, 10.0),
        conf: 1.0,
        det_id: None,
    }
}

fn report(name: &str, gt: &[TrackRow], pred: &[TrackRow]) {
    let c = clear_counts(gt, pred, 0.5);
    let h = hota(gt, pred, &default_alphas());
    println!(
        "{name:<14} MOTA {:.3}  IDF1 {:.3}  HOTA {:.3}  (fn {} fp {} idsw {})",
        c.mota(),
        idf1(gt, pred, 0.5),
        h.hota,
        c.fn_,
        c.fp,
        c.idsw
    );
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // two objects crossing the scene for 10 frames
    let gt: Vec<TrackRow> = (0..10).flat_map(|f| [row(f, 1, 3.0 * f as f64), row(f, 2, 100.0 + 3.0 * f as f64)]).collect();
    report("perfect", &gt, &gt);

    let missed: Vec<TrackRow> = gt.iter().filter(|r| !(r.track_id == 2 && r.frame >= 7)).cloned().collect();
    report("three misses", &gt, &missed);

    let mut ghost = gt.clone();
    ghost.extend((0..5).map(|f| row(f, 9, 300.0)));
    report("ghost track", &gt, &ghost);

    let switched: Vec<TrackRow> = gt
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if r.frame >= 5 {
                r.track_id = 3 - r.track_id;
            }
            r
        })
        .collect();
    report("id swap", &gt, &switched);

    println!();
    for (g, p) in [("KA01AB1234", "KA01AB1234"), ("KA01AB1234", "KA01A81234"), ("KA01AB1234", "")] {
        println!("CER({g}, {p:?}) = {:.3}", cer(g, p)?);
    }

    use Outcome::*;
    let stages = [
        StageLabel::new(Tp, PlateDetection::Tp, Recognition::Correct),
        StageLabel::new(Tp, PlateDetection::Tp, Recognition::Incorrect),
        StageLabel::new(Tp, PlateDetection::Fn, Recognition::Absent),
        StageLabel::new(Fp, PlateDetection::Tp, Recognition::Correct),
    ];
    let labels = stages.iter().map(|s| eticket_label(*s)).collect::<Result<Vec<_>, _>>()?;
    println!("\nstage labels -> {labels:?}");
    for hitl in [false, true] {
        let p = eticket_prf(&labels, hitl);
        println!("reviewed {hitl:5}: P {:.1} R {:.1} F1 {:.1}", p.precision, p.recall, p.f1);
    }
    Ok(())
}
