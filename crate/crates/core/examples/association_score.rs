//! Scores two riders against two motorcycles and groups them into instances.
//!
//! Each detection carries its own mask and a cross mask: the part of the other
//! class it believes it is attached to.

use rmtrack::assoc::{build_matrix, form_instances, InstanceConfig, ObjectClass, SacDetection};
use rmtrack::geom::{rasterize_box, BBox, BinaryMask, GridSpec};

fn det(id: u64, class: ObjectClass, bbox: BBox, cross: BinaryMask, grid: &GridSpec) -> SacDetection {
    SacDetection {
        frame: 0,
        class,
        bbox,
        confidence: 0.9,
        seg_mask: rasterize_box(&bbox, grid),
        cross_mask: cross,
        embedding: None,
        attrs: None,
        det_id: id,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = GridSpec::new(64, 48, 4.0)?;
    let bike_a = BBox::new(20.0, 80.0, 60.0, 40.0);
    let rider_a = BBox::new(32.0, 40.0, 28.0, 56.0);
    let bike_b = BBox::new(140.0, 90.0, 60.0, 40.0);
    let rider_b = BBox::new(150.0, 50.0, 28.0, 56.0);

    let riders = vec![
        det(1, ObjectClass::Rider, rider_a, rasterize_box(&bike_a, &grid), &grid),
        det(2, ObjectClass::Rider, rider_b, rasterize_box(&bike_b, &grid), &grid),
    ];
    let motos = vec![
        det(3, ObjectClass::Motorcycle, bike_a, rasterize_box(&rider_a, &grid), &grid),
        // this one only half-sees its rider
        det(4, ObjectClass::Motorcycle, bike_b, rasterize_box(&BBox::new(150.0, 78.0, 28.0, 28.0), &grid), &grid),
    ];

    let m = build_matrix(&riders, &motos)?;
    println!("association scores (rows: riders, cols: motorcycles)");
    for i in 0..m.n_riders() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:.3}")).collect();
        println!("  rider {}: [{}]", riders[i].det_id, row.join(", "));
    }

    for tau in [0.5, 0.8] {
        let f = form_instances(&riders, &motos, &InstanceConfig { tau_assoc: tau, max_riders: 4 })?;
        println!("tau_assoc {tau}:");
        for inst in &f.instances {
            let ids: Vec<u64> = inst.riders.iter().map(|&k| riders[k].det_id).collect();
            println!("  motorcycle {} carries riders {:?}", motos[inst.motorcycle].det_id, ids);
        }
        let left: Vec<u64> = f.unassigned_riders.iter().map(|&k| riders[k].det_id).collect();
        println!("  unassigned riders {left:?}");
    }
    Ok(())
}
