//! Scenario configuration: the full description of one experiment, loadable
//! from TOML.

use serde::{Deserialize, Serialize};

use crate::aggregate::WeightRule;

/// Axis-aligned surveillance field with its origin at (0, 0).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FieldConfig {
    pub width: f64,
    pub height: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            width: 1000.0,
            height: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutMode {
    /// Deterministic near-square lattice covering the field.
    Lattice,
    /// Seeded uniform random placement.
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorConfig {
    pub count: usize,
    #[serde(default = "default_layout")]
    pub layout: LayoutMode,
    pub sensing_radius: f64,
}

fn default_layout() -> LayoutMode {
    LayoutMode::Lattice
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            count: 250,
            layout: LayoutMode::Lattice,
            sensing_radius: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scenario {
    /// Straight constant-velocity legs with abrupt turns at waypoints.
    S1,
    /// Gradual coordinated turns: 20 deg/s for 10 s between straight legs.
    S2,
    /// Sharp coordinated turns: 30 deg/s for 9 s between straight legs.
    S3,
    /// Singer acceleration model.
    S4,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub scenario: Scenario,
    /// Number of time steps (sampling period is one second).
    pub length: usize,
    /// Start position; for S1 the first waypoint is the start.
    #[serde(default = "default_start")]
    pub start: [f64; 2],
    /// Cruise speed in m/s.
    #[serde(default = "default_speed")]
    pub speed: f64,
    /// Initial heading in degrees (S2-S4).
    #[serde(default)]
    pub heading_deg: f64,
    /// S1 waypoints, visited in order at the cruise speed.
    #[serde(default)]
    pub waypoints: Vec<[f64; 2]>,
    /// Steps of straight flight between coordinated turns (S2/S3).
    #[serde(default = "default_straight")]
    pub straight_duration: usize,
    /// Singer maneuver time constant tau in seconds (S4).
    #[serde(default = "default_tau")]
    pub singer_tau: f64,
    /// Singer maximum acceleration in m/s^2 (S4).
    #[serde(default = "default_max_accel")]
    pub singer_max_accel: f64,
    /// Singer probability of non-acceleration per step (S4).
    #[serde(default = "default_non_accel")]
    pub singer_non_accel_prob: f64,
    /// Speed cap keeping maneuvering trajectories inside the field (S4).
    #[serde(default = "default_max_speed")]
    pub max_speed: f64,
}

fn default_start() -> [f64; 2] {
    [500.0, 500.0]
}
fn default_speed() -> f64 {
    10.0
}
fn default_straight() -> usize {
    15
}
fn default_tau() -> f64 {
    10.0
}
fn default_max_accel() -> f64 {
    50.0
}
fn default_non_accel() -> f64 {
    0.4
}
fn default_max_speed() -> f64 {
    15.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    /// Temporal GP: input is the time step.
    Tgp,
    /// Spatial-temporal GP: input is (previous estimated coordinate, time).
    Stgp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Poe,
    Gpoe,
    Bcm,
    Rbcm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackerKind {
    /// Distributed GP tracking.
    Dgp,
    /// Distributed GP tracking refined by the Poisson hybrid filter.
    Hybrid,
    /// Pooled standard-GP benchmark.
    Centralized,
}

/// Which measurements the hybrid refinement consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HybridInput {
    /// All raw measurements pooled from the active sensors.
    Raw,
    /// The per-sensor gated pseudo-measurements.
    Gated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackerSettings {
    /// Sliding window length C in time steps.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_feature")]
    pub feature: FeatureKind,
    #[serde(default = "default_method")]
    pub aggregation: MethodKind,
    #[serde(default = "default_weight_rule")]
    pub weight_rule: WeightRule,
    /// Clip negative entropy weights at zero (ablation switch).
    #[serde(default)]
    pub clip_negative_weights: bool,
    /// Learn the noise variance by MLE; when false it is pinned to the
    /// simulator's noise.
    #[serde(default = "default_true")]
    pub learn_noise: bool,
    #[serde(default = "default_tracker")]
    pub mode: TrackerKind,
    #[serde(default = "default_hybrid_input")]
    pub hybrid_input: HybridInput,
}

fn default_window() -> usize {
    5
}
fn default_feature() -> FeatureKind {
    FeatureKind::Tgp
}
fn default_method() -> MethodKind {
    MethodKind::Rbcm
}
fn default_weight_rule() -> WeightRule {
    WeightRule::Entropy
}
fn default_true() -> bool {
    true
}
fn default_tracker() -> TrackerKind {
    TrackerKind::Dgp
}
fn default_hybrid_input() -> HybridInput {
    HybridInput::Gated
}

impl Default for TrackerSettings {
    fn default() -> Self {
        Self {
            window: default_window(),
            feature: default_feature(),
            aggregation: default_method(),
            weight_rule: default_weight_rule(),
            clip_negative_weights: false,
            learn_noise: true,
            mode: default_tracker(),
            hybrid_input: default_hybrid_input(),
        }
    }
}

/// Full experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub sensors: SensorConfig,
    pub trajectory: TrajectoryConfig,
    /// Measurement noise STD sigma_z in meters.
    pub noise_std: f64,
    /// Expected clutter measurements per active sensor per scan.
    pub clutter_rate: f64,
    /// Expected target measurements per active sensor per scan.
    #[serde(default = "default_lambda_target")]
    pub lambda_target: f64,
    #[serde(default)]
    pub tracker: TrackerSettings,
    /// Total UCB failure probability (0.003 is the 99.7% setting).
    #[serde(default = "default_ucb_delta")]
    pub ucb_delta: f64,
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub mc_runs: usize,
}

fn default_lambda_target() -> f64 {
    1.0
}
fn default_ucb_delta() -> f64 {
    0.003
}
fn default_runs() -> usize {
    100
}
