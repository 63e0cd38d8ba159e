//! Shipped scenarios with fixed seeds.

use super::{AppearanceSpec, Lane, MotionSpec, NoiseSpec, OccluderSpec, Scenario, SpawnSpec};
use crate::geom::GridSpec;

const IMAGE_W: u32 = 1280;
const IMAGE_H: u32 = 720;
const FRAMES: u32 = 1000;

fn lanes(spec: &[(f64, i8)]) -> Vec<Lane> {
    spec.iter().map(|&(y, dir)| Lane { y, dir }).collect()
}

fn base(name: &str, seed: u64) -> Scenario {
    Scenario {
        name: name.into(),
        seed,
        n_frames: FRAMES,
        image_w: IMAGE_W,
        image_h: IMAGE_H,
        grid: GridSpec::new(IMAGE_W / 4, IMAGE_H / 4, 4.0).expect("static grid"),
        spawn: SpawnSpec {
            initial: 4,
            rate: 0.03,
            rider_count_probs: [0.4, 0.35, 0.25],
            helmet_prob: 0.7,
            plate_templates: vec!["KA99@@9999".into(), "MH99@9999".into(), "DL9@@9999".into()],
            min_gap: 40.0,
            tail_frames: 20,
            max_active: 12,
        },
        motion: MotionSpec {
            lanes: lanes(&[(200.0, 1), (360.0, 1), (520.0, -1), (680.0, -1)]),
            width: [48.0, 72.0],
            speed: [3.0, 3.0],
            curvature_max: 0.0,
            ego_drift: [0.0, 0.0],
        },
        occluders: OccluderSpec::default(),
        noise: NoiseSpec::default(),
        appearance: AppearanceSpec { dim: 8, noise: 0.0 },
    }
}

fn noiseless() -> Scenario {
    base("noiseless", 1)
}

fn sparse_clean() -> Scenario {
    let mut sc = base("sparse-clean", 2);
    sc.motion.speed = [2.0, 4.0];
    sc.noise = NoiseSpec {
        miss_prob: 0.02,
        box_jitter: 0.8,
        fp_rate: 0.05,
        helmet_flip_prob: 0.02,
        count_flip_prob: 0.02,
        plate_char_prob: 0.05,
        plate_substitute_prob: 0.01,
        plate_hidden_height: 20.0,
        ..NoiseSpec::default()
    };
    sc.appearance.noise = 0.05;
    sc
}

fn dense_traffic() -> Scenario {
    let mut sc = base("dense-traffic", 3);
    sc.spawn.initial = 10;
    sc.spawn.rate = 0.12;
    sc.spawn.min_gap = 20.0;
    sc.spawn.max_active = 20;
    sc.motion = MotionSpec {
        lanes: lanes(&[(130.0, 1), (240.0, 1), (350.0, 1), (460.0, -1), (570.0, -1), (680.0, -1)]),
        width: [40.0, 60.0],
        speed: [2.0, 6.0],
        curvature_max: 0.005,
        ego_drift: [0.2, 0.0],
    };
    sc.noise = NoiseSpec {
        miss_prob: 0.05,
        box_jitter: 1.5,
        fp_rate: 0.3,
        helmet_flip_prob: 0.05,
        count_flip_prob: 0.05,
        plate_char_prob: 0.1,
        plate_substitute_prob: 0.02,
        plate_hidden_height: 18.0,
        ..NoiseSpec::default()
    };
    sc.appearance.noise = 0.1;
    sc
}

fn occlusion_heavy(name: &str, seed: u64) -> Scenario {
    let mut sc = base(name, seed);
    sc.spawn.initial = 6;
    sc.spawn.rate = 0.06;
    sc.motion.lanes = lanes(&[(200.0, 1), (330.0, -1), (460.0, 1), (590.0, -1)]);
    sc.motion.speed = [2.0, 5.0];
    sc.occluders = OccluderSpec {
        count: 5,
        width: [60.0, 160.0],
        height: [200.0, 500.0],
        speed_max: 1.5,
    };
    sc.noise = NoiseSpec {
        miss_prob: 0.03,
        occlusion_miss_mult: 0.95,
        box_jitter: 1.0,
        fp_rate: 0.1,
        helmet_flip_prob: 0.03,
        count_flip_prob: 0.03,
        plate_char_prob: 0.08,
        plate_substitute_prob: 0.01,
        plate_hidden_height: 20.0,
        ..NoiseSpec::default()
    };
    sc.appearance.noise = 0.15;
    sc
}

fn low_visibility() -> Scenario {
    let mut sc = base("low-visibility", 5);
    sc.motion.speed = [2.0, 5.0];
    sc.motion.width = [48.0, 80.0];
    sc.noise = NoiseSpec {
        miss_prob: 0.15,
        box_jitter: 3.0,
        fp_rate: 0.6,
        mask_morph_cells: -1,
        helmet_flip_prob: 0.1,
        count_flip_prob: 0.1,
        plate_char_prob: 0.3,
        plate_substitute_prob: 0.05,
        plate_hidden_height: 26.0,
        ..NoiseSpec::default()
    };
    sc.appearance.noise = 0.3;
    sc
}

fn opposite_lane() -> Scenario {
    let mut sc = base("opposite-lane", 6);
    sc.spawn.rate = 0.05;
    sc.motion.lanes = lanes(&[(250.0, 1), (300.0, -1), (550.0, 1), (600.0, -1)]);
    sc.motion.width = [60.0, 90.0];
    sc.motion.speed = [4.0, 8.0];
    sc.noise = NoiseSpec {
        miss_prob: 0.05,
        box_jitter: 1.0,
        fp_rate: 0.1,
        helmet_flip_prob: 0.03,
        count_flip_prob: 0.03,
        plate_char_prob: 0.05,
        plate_hidden_height: 20.0,
        ..NoiseSpec::default()
    };
    sc.appearance.noise = 0.1;
    sc
}

/// The named benchmark scenarios.
pub fn preset_suite() -> Vec<Scenario> {
    vec![
        noiseless(),
        sparse_clean(),
        dense_traffic(),
        occlusion_heavy("occlusion-heavy", 4),
        low_visibility(),
        opposite_lane(),
    ]
}

/// Occlusion-heavy scenario under five further seeds.
pub fn occlusion_suite() -> Vec<Scenario> {
    (101..=105)
        .map(|s| occlusion_heavy(&format!("occlusion-heavy-s{s}"), s))
        .collect()
}

pub fn preset_names() -> Vec<String> {
    preset_suite().into_iter().map(|s| s.name).collect()
}

pub fn preset(name: &str) -> Option<Scenario> {
    preset_suite()
        .into_iter()
        .chain(occlusion_suite())
        .find(|s| s.name == name)
}
