//! Sensor-network world generation: the sensor grid, the four target
//! trajectories, and per-step measurement sets with Gaussian target noise,
//! zero-truncated-Poisson target counts, and uniform Poisson clutter.
//!
//! All randomness flows from one master seed through named ChaCha streams
//! (see [`derive_rng`]), so a run is fully reproducible from its seed.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};
use thiserror::Error;

use crate::config::{FieldConfig, LayoutMode, Scenario, SensorConfig, TrajectoryConfig};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("trajectory left the field and could not be reflected back")]
    TrajectoryEscaped,
}

/// Named sub-streams derived from the master seed. Each purpose draws from
/// its own ChaCha stream so consumers never perturb each other.
#[derive(Debug, Clone, Copy)]
pub enum RngStream {
    Trajectory,
    TargetCounts,
    Noise,
    Clutter,
}

impl RngStream {
    fn id(self) -> u64 {
        match self {
            RngStream::Trajectory => 1,
            RngStream::TargetCounts => 2,
            RngStream::Noise => 3,
            RngStream::Clutter => 4,
        }
    }
}

/// Splitting rule: ChaCha8 seeded from the master seed with the stream id
/// selecting the cipher stream.
pub fn derive_rng(master_seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream.id());
    rng
}

/// Bundled measurement-generation streams for one run.
pub struct MeasurementStreams {
    pub counts: ChaCha8Rng,
    pub noise: ChaCha8Rng,
    pub clutter: ChaCha8Rng,
}

impl MeasurementStreams {
    pub fn from_seed(master_seed: u64) -> Self {
        Self {
            counts: derive_rng(master_seed, RngStream::TargetCounts),
            noise: derive_rng(master_seed, RngStream::Noise),
            clutter: derive_rng(master_seed, RngStream::Clutter),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Sensor {
    pub id: u32,
    pub position: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct SensorNetwork {
    pub sensors: Vec<Sensor>,
    pub sensing_radius: f64,
    pub field: FieldConfig,
}

impl SensorNetwork {
    /// Area of one sensor's sensing disc in square meters.
    pub fn sensing_area(&self) -> f64 {
        std::f64::consts::PI * self.sensing_radius * self.sensing_radius
    }
}

/// Lay out the network. The lattice mode places sensors at the centers of a
/// near-square cell grid; the random mode draws positions uniformly from a
/// dedicated stream of the given seed.
pub fn build_grid(
    sensors: &SensorConfig,
    field: FieldConfig,
    seed: u64,
) -> Result<SensorNetwork, SimError> {
    if sensors.count == 0 {
        return Err(SimError::InvalidArgument("sensor count must be positive".into()));
    }
    let positions: Vec<[f64; 2]> = match sensors.layout {
        LayoutMode::Lattice => {
            let n = sensors.count as f64;
            let cols = (n * field.width / field.height).sqrt().ceil() as usize;
            let cols = cols.max(1);
            let rows = sensors.count.div_ceil(cols);
            let dx = field.width / cols as f64;
            let dy = field.height / rows as f64;
            (0..sensors.count)
                .map(|i| {
                    let r = i / cols;
                    let c = i % cols;
                    [(c as f64 + 0.5) * dx, (r as f64 + 0.5) * dy]
                })
                .collect()
        }
        LayoutMode::Random => {
            let mut rng = derive_rng(seed, RngStream::Trajectory);
            // Layout shares the trajectory stream's seed path but uses a
            // distinct stream id offset to stay independent of it.
            rng.set_stream(100);
            (0..sensors.count)
                .map(|_| {
                    [
                        rng.gen_range(0.0..field.width),
                        rng.gen_range(0.0..field.height),
                    ]
                })
                .collect()
        }
    };
    Ok(SensorNetwork {
        sensors: positions
            .into_iter()
            .enumerate()
            .map(|(i, position)| Sensor {
                id: i as u32,
                position,
            })
            .collect(),
        sensing_radius: sensors.sensing_radius,
        field,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct TrajectoryState {
    pub t: u32,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub scenario: Scenario,
    pub states: Vec<TrajectoryState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

fn rotate(v: [f64; 2], angle_rad: f64) -> [f64; 2] {
    let (s, c) = angle_rad.sin_cos();
    [v[0] * c - v[1] * s, v[0] * s + v[1] * c]
}

fn inside(field: &FieldConfig, p: [f64; 2]) -> bool {
    p[0] >= 0.0 && p[0] <= field.width && p[1] >= 0.0 && p[1] <= field.height
}

/// Advance one step, reflecting the heading off the field boundary when the
/// straight-line step would leave it.
fn advance(
    field: &FieldConfig,
    position: &mut [f64; 2],
    velocity: &mut [f64; 2],
) -> Result<(), SimError> {
    for _ in 0..4 {
        let next = [position[0] + velocity[0], position[1] + velocity[1]];
        if inside(field, next) {
            *position = next;
            return Ok(());
        }
        if next[0] < 0.0 || next[0] > field.width {
            velocity[0] = -velocity[0];
        }
        if next[1] < 0.0 || next[1] > field.height {
            velocity[1] = -velocity[1];
        }
    }
    Err(SimError::TrajectoryEscaped)
}

fn generate_waypoint_trajectory(
    cfg: &TrajectoryConfig,
    field: &FieldConfig,
    length: usize,
) -> Result<Trajectory, SimError> {
    let mut waypoints = cfg.waypoints.clone();
    if waypoints.is_empty() {
        return Err(SimError::InvalidArgument(
            "S1 requires at least two waypoints".into(),
        ));
    }
    if waypoints.len() < 2 {
        waypoints.insert(0, cfg.start);
    }
    if waypoints.iter().any(|w| !inside(field, *w)) {
        return Err(SimError::InvalidArgument("waypoint outside the field".into()));
    }
    let mut states = Vec::with_capacity(length);
    let mut position = waypoints[0];
    let mut leg = 1usize;
    for t in 0..length {
        // Constant speed toward the current waypoint, switching legs on
        // arrival; after the last waypoint the velocity of the final leg is
        // kept.
        let mut remaining = cfg.speed;
        let mut velocity = [0.0, 0.0];
        let mut next = position;
        while remaining > 1e-12 && leg < waypoints.len() {
            let target = waypoints[leg];
            let dx = target[0] - next[0];
            let dy = target[1] - next[1];
            let dist = (dx * dx + dy * dy).sqrt();
            if dist <= remaining {
                next = target;
                remaining -= dist;
                leg += 1;
            } else {
                next = [next[0] + dx / dist * remaining, next[1] + dy / dist * remaining];
                velocity = [dx / dist * cfg.speed, dy / dist * cfg.speed];
                remaining = 0.0;
            }
        }
        if leg >= waypoints.len() {
            // Past the final waypoint: hold position.
            velocity = [0.0, 0.0];
        }
        states.push(TrajectoryState {
            t: t as u32,
            position,
            velocity,
        });
        position = next;
    }
    Ok(Trajectory {
        scenario: cfg.scenario,
        states,
    })
}

fn generate_coordinated_turns(
    cfg: &TrajectoryConfig,
    field: &FieldConfig,
    length: usize,
    rng: &mut ChaCha8Rng,
    turn_rate_deg: f64,
    turn_duration: usize,
) -> Result<Trajectory, SimError> {
    let heading = cfg.heading_deg.to_radians();
    let mut velocity = [cfg.speed * heading.cos(), cfg.speed * heading.sin()];
    let mut position = cfg.start;
    if !inside(field, position) {
        return Err(SimError::InvalidArgument("start outside the field".into()));
    }
    let mut states = Vec::with_capacity(length);
    let mut phase_left = cfg.straight_duration;
    let mut turning = false;
    let mut turn_step = 0.0;
    for t in 0..length {
        states.push(TrajectoryState {
            t: t as u32,
            position,
            velocity,
        });
        if turning {
            velocity = rotate(velocity, turn_step);
        }
        advance(field, &mut position, &mut velocity)?;
        phase_left -= 1;
        if phase_left == 0 {
            if turning {
                turning = false;
                phase_left = cfg.straight_duration;
            } else {
                turning = true;
                phase_left = turn_duration;
                let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                turn_step = dir * turn_rate_deg.to_radians();
            }
        }
    }
    Ok(Trajectory {
        scenario: cfg.scenario,
        states,
    })
}

fn generate_singer(
    cfg: &TrajectoryConfig,
    field: &FieldConfig,
    length: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory, SimError> {
    let heading = cfg.heading_deg.to_radians();
    let mut velocity = [cfg.speed * heading.cos(), cfg.speed * heading.sin()];
    let mut position = cfg.start;
    if !inside(field, position) {
        return Err(SimError::InvalidArgument("start outside the field".into()));
    }
    let rho = (-1.0 / cfg.singer_tau).exp();
    let sigma_a = cfg.singer_max_accel / 3.0;
    let drive = sigma_a * (1.0 - rho * rho).sqrt();
    let mut accel = [0.0, 0.0];
    let mut states = Vec::with_capacity(length);
    for t in 0..length {
        states.push(TrajectoryState {
            t: t as u32,
            position,
            velocity,
        });
        if rng.gen_bool(cfg.singer_non_accel_prob) {
            accel = [0.0, 0.0];
        } else {
            for a in accel.iter_mut() {
                let w: f64 = StandardNormal.sample(rng);
                *a = (rho * *a + drive * w).clamp(-cfg.singer_max_accel, cfg.singer_max_accel);
            }
        }
        velocity[0] += accel[0];
        velocity[1] += accel[1];
        let speed = (velocity[0] * velocity[0] + velocity[1] * velocity[1]).sqrt();
        if speed > cfg.max_speed {
            let scale = cfg.max_speed / speed;
            velocity[0] *= scale;
            velocity[1] *= scale;
        }
        advance(field, &mut position, &mut velocity)?;
    }
    Ok(Trajectory {
        scenario: cfg.scenario,
        states,
    })
}

/// Generate a target trajectory for the configured scenario, deterministic
/// given the seed.
pub fn generate_trajectory(
    cfg: &TrajectoryConfig,
    field: FieldConfig,
    seed: u64,
    length: usize,
) -> Result<Trajectory, SimError> {
    let mut rng = derive_rng(seed, RngStream::Trajectory);
    match cfg.scenario {
        Scenario::S1 => generate_waypoint_trajectory(cfg, &field, length),
        Scenario::S2 => generate_coordinated_turns(cfg, &field, length, &mut rng, 20.0, 10),
        Scenario::S3 => generate_coordinated_turns(cfg, &field, length, &mut rng, 30.0, 9),
        Scenario::S4 => generate_singer(cfg, &field, length, &mut rng),
    }
}

/// Sensors whose closed sensing disc contains the position.
pub fn active_sensors(network: &SensorNetwork, position: [f64; 2]) -> Vec<u32> {
    network
        .sensors
        .iter()
        .filter(|s| {
            let dx = s.position[0] - position[0];
            let dy = s.position[1] - position[1];
            (dx * dx + dy * dy).sqrt() <= network.sensing_radius
        })
        .map(|s| s.id)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Target,
    Clutter,
}

/// A single 2-D position observation. The origin label is ground truth for
/// evaluation only and is never shown to a tracker.
#[derive(Debug, Clone, Copy)]
pub struct Measurement {
    pub sensor_id: u32,
    pub t: u32,
    pub value: [f64; 2],
    pub origin: Origin,
}

fn zero_truncated_poisson(lambda: f64, rng: &mut ChaCha8Rng) -> usize {
    let dist = Poisson::new(lambda).expect("positive rate");
    loop {
        let k = dist.sample(rng) as usize;
        if k >= 1 {
            return k;
        }
    }
}

/// Measurements emitted by every active sensor at one step: a
/// zero-truncated Poisson number of noisy target observations plus
/// Poisson-many clutter points uniform on the sensing disc. Target noise is
/// applied after the detection decision, so target measurements may land
/// slightly outside the disc.
pub fn generate_measurements(
    network: &SensorNetwork,
    position: [f64; 2],
    t: u32,
    noise_std: f64,
    clutter_rate: f64,
    lambda_target: f64,
    streams: &mut MeasurementStreams,
) -> Result<Vec<Measurement>, SimError> {
    if !(noise_std > 0.0) || !(clutter_rate >= 0.0) || !(lambda_target > 0.0) {
        return Err(SimError::InvalidArgument(
            "noise_std and lambda_T must be positive, clutter rate non-negative".into(),
        ));
    }
    let mut out = Vec::new();
    for id in active_sensors(network, position) {
        let sensor = network.sensors[id as usize];
        let n_target = zero_truncated_poisson(lambda_target, &mut streams.counts);
        for _ in 0..n_target {
            let nx: f64 = StandardNormal.sample(&mut streams.noise);
            let ny: f64 = StandardNormal.sample(&mut streams.noise);
            out.push(Measurement {
                sensor_id: id,
                t,
                value: [position[0] + noise_std * nx, position[1] + noise_std * ny],
                origin: Origin::Target,
            });
        }
        if clutter_rate > 0.0 {
            let n_clutter = Poisson::new(clutter_rate)
                .expect("positive rate")
                .sample(&mut streams.clutter) as usize;
            for _ in 0..n_clutter {
                let u: f64 = streams.clutter.gen();
                let theta: f64 = streams.clutter.gen_range(0.0..std::f64::consts::TAU);
                let r = network.sensing_radius * u.sqrt();
                out.push(Measurement {
                    sensor_id: id,
                    t,
                    value: [
                        sensor.position[0] + r * theta.cos(),
                        sensor.position[1] + r * theta.sin(),
                    ],
                    origin: Origin::Clutter,
                });
            }
        }
    }
    Ok(out)
}
