//! Named scenes used by the test suites, each built to provoke one behaviour.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dropout, RsuSpec, Sampling, SimConfig, VehicleSpec};
use crate::geometry::bev_iou;

pub const CAR: [f64; 3] = [4.5, 1.9, 1.6];
pub const VAN: [f64; 3] = [5.4, 2.1, 2.2];
pub const BUS: [f64; 3] = [12.0, 2.5, 3.0];
pub const TRUCK: [f64; 3] = [8.0, 2.5, 3.2];

#[derive(Clone, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub config: SimConfig,
}

fn parked(id: u32, dims: [f64; 3], x: f64, y: f64, yaw: f64) -> VehicleSpec {
    VehicleSpec {
        id,
        dims,
        waypoints: vec![[0.0, x, y]],
        yaw: Some(yaw),
        spawn: None,
        despawn: None,
    }
}

fn driving(id: u32, dims: [f64; 3], from: [f64; 2], to: [f64; 2], t0: f64, t1: f64) -> VehicleSpec {
    VehicleSpec {
        id,
        dims,
        waypoints: vec![[t0, from[0], from[1]], [t1, to[0], to[1]]],
        yaw: None,
        spawn: None,
        despawn: None,
    }
}

fn rsu(id: u16, x: f64, y: f64, height: f64) -> RsuSpec {
    RsuSpec {
        id,
        position: [x, y],
        height,
    }
}

/// One parked car next to a single RSU.
pub fn static_car() -> SimConfig {
    SimConfig {
        seed: 1,
        frames: 10,
        vehicles: vec![parked(0, CAR, 9.0, 5.0, 0.3)],
        ..Default::default()
    }
}

/// A parked bus seen through a coarse elevation grid: neighbouring scan rings
/// on its faces are about 0.9–1.1 m apart, more than the default DBSCAN radius
/// but less than twice it.
pub fn sparse_bus() -> SimConfig {
    SimConfig {
        seed: 2,
        frames: 5,
        rsus: vec![rsu(0, 0.0, 0.0, 5.0)],
        vehicles: vec![parked(0, BUS, 8.0, 22.0, 0.0)],
        sampling: sparse_sampling(),
        ..Default::default()
    }
}

fn sparse_sampling() -> Sampling {
    Sampling {
        az_res_deg: 0.2,
        el_res_deg: 2.5,
        el_min_deg: -40.0,
        el_max_deg: -1.0,
        ..Default::default()
    }
}

/// Two sparse buses parked end to end 0.5 m apart. The scan rings run across
/// the gap, so any scale that joins the rings of one bus joins both buses.
pub fn adjacent_buses() -> SimConfig {
    SimConfig {
        seed: 3,
        frames: 5,
        rsus: vec![rsu(0, 0.0, 0.0, 5.0)],
        vehicles: vec![
            parked(0, BUS, 2.0, 22.0, 0.0),
            parked(1, BUS, 14.5, 22.0, 0.0),
        ],
        sampling: sparse_sampling(),
        ..Default::default()
    }
}

/// Two cars on perpendicular roads; the second stops short of the junction
/// the first drives through, so the two never come close.
pub fn crossing_pair() -> SimConfig {
    SimConfig {
        seed: 4,
        frames: 20,
        rsus: vec![rsu(0, -10.0, -10.0, 6.0), rsu(1, 10.0, 10.0, 6.0)],
        vehicles: vec![
            driving(0, CAR, [-14.0, -2.5], [14.0, -2.5], 0.0, 2.0),
            driving(1, CAR, [2.5, 28.0], [2.5, 6.0], 0.0, 2.0),
        ],
        ..Default::default()
    }
}

/// A car between two RSUs that see opposite faces.
pub fn two_rsu_car() -> SimConfig {
    SimConfig {
        seed: 5,
        frames: 5,
        rsus: vec![rsu(0, 0.0, -12.0, 6.0), rsu(1, 0.0, 12.0, 6.0)],
        vehicles: vec![parked(0, CAR, 0.0, 0.0, 0.0)],
        ..Default::default()
    }
}

/// A truck crossing the 60° horizontal field of view of a single RSU.
///
/// It enters and leaves the view during the sequence, so the first and last
/// frames show only its front or rear.
pub fn partial_visibility(seed: u64) -> SimConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e_ed0f_9a27);
    let y = rng.random_range(10.0..13.0);
    let speed = rng.random_range(6.0..9.0);
    let yaw_jitter = rng.random_range(-0.1..0.1f64);
    let frames = 20;
    let span = frames as f64 * 0.1;
    // centre crosses the middle of the window halfway through the sequence
    let start = -speed * span / 2.0;
    let end = start + speed * span;
    let (s, c) = yaw_jitter.sin_cos();
    SimConfig {
        seed,
        frames,
        vehicles: vec![driving(
            0,
            TRUCK,
            [start * c, y + start * s],
            [end * c, y + end * s],
            0.0,
            span,
        )],
        sampling: Sampling {
            az_min_deg: 60.0,
            az_max_deg: 120.0,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Crossroads with 6–8 vehicles of mixed size on two perpendicular roads,
/// observed by two RSUs on opposite corners. Vehicles keep at least
/// [`MIN_GAP`] between their footprints in every frame.
pub fn random_intersection(seed: u64) -> SimConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = 20;
    let frame_dt = 0.1;
    let span = frames as f64 * frame_dt;
    loop {
        let count = rng.random_range(6..=8);
        let mut vehicles = Vec::with_capacity(count);
        for id in 0..count as u32 {
            let dims = match rng.random_range(0..10) {
                0..=5 => CAR,
                6..=7 => VAN,
                8 => TRUCK,
                _ => BUS,
            };
            let along_x = rng.random_bool(0.5);
            let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let lane = dir * if rng.random_bool(0.5) { 2.0 } else { 5.5 };
            let speed = if rng.random_bool(0.25) { 0.0 } else { rng.random_range(4.0..12.0) };
            let s0 = rng.random_range(-40.0..35.0);
            let s1 = s0 + dir * speed * span;
            let (from, to) = if along_x {
                ([s0, -lane], [s1, -lane])
            } else {
                ([lane, s0], [lane, s1])
            };
            let yaw = if along_x { if dir > 0.0 { 0.0 } else { std::f64::consts::PI } } else { dir * std::f64::consts::FRAC_PI_2 };
            vehicles.push(VehicleSpec {
                id,
                dims,
                waypoints: vec![[0.0, from[0], from[1]], [span, to[0], to[1]]],
                yaw: Some(yaw),
                spawn: None,
                despawn: None,
            });
        }
        let cfg = SimConfig {
            seed,
            frames,
            frame_dt,
            rsus: vec![rsu(0, -12.0, -12.0, 7.0), rsu(1, 12.0, 12.0, 7.0)],
            vehicles,
            sampling: Sampling {
                az_res_deg: 0.4,
                el_res_deg: 1.0,
                ..Default::default()
            },
            dropout: Dropout {
                ground: 0.7,
                vehicle: 0.3,
            },
            ..Default::default()
        };
        if cfg.validate().is_ok() && keeps_gap(&cfg, MIN_GAP) {
            return cfg;
        }
    }
}

/// Bumper-to-bumper clearance of the random traffic scenes (m).
pub const MIN_GAP: f64 = 2.5;

fn keeps_gap(cfg: &SimConfig, gap: f64) -> bool {
    (0..cfg.frames).all(|f| {
        let t = cfg.timestamp(f);
        let boxes: Vec<_> = cfg
            .vehicles
            .iter()
            .filter(|v| v.present(f))
            .map(|v| {
                // growing both boxes by gap/2 per side makes them touch at `gap`
                let mut b = v.box_at(t);
                b.l += gap;
                b.w += gap;
                b
            })
            .collect();
        boxes
            .iter()
            .enumerate()
            .all(|(i, a)| boxes[i + 1..].iter().all(|b| bev_iou(a, b) == 0.0))
    })
}

pub fn fixture_library() -> Vec<Preset> {
    vec![
        Preset {
            name: "static_car",
            description: "one parked car, one RSU; trivially detectable",
            config: static_car(),
        },
        Preset {
            name: "sparse_bus",
            description: "bus whose scan rings fragment at full scale but join at half scale",
            config: sparse_bus(),
        },
        Preset {
            name: "adjacent_buses",
            description: "two sparse buses 0.5 m apart that merge into one oversized cluster",
            config: adjacent_buses(),
        },
        Preset {
            name: "crossing_pair",
            description: "two cars on perpendicular roads that never overlap",
            config: crossing_pair(),
        },
        Preset {
            name: "partial_visibility",
            description: "truck entering and leaving a 60° field of view",
            config: partial_visibility(0),
        },
        Preset {
            name: "two_rsu_car",
            description: "car observed from two opposite RSUs",
            config: two_rsu_car(),
        },
        Preset {
            name: "intersection",
            description: "random crossroads traffic with 6–8 vehicles over 20 frames",
            config: random_intersection(0),
        },
    ]
}

/// Looks up a preset by name.
pub fn preset(name: &str) -> Option<SimConfig> {
    fixture_library().into_iter().find(|p| p.name == name).map(|p| p.config)
}
