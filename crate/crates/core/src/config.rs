//! Scenario and training parameters, config-file loading, and RNG streams.
//!
//! The config file is flat TOML: every key of [`ScenarioConfig`] and
//! [`TrainConfig`] lives at the top level. Absent keys keep their defaults.
//! Ranges are written as two-element arrays, `task_size_bits = [1.2e6, 3.6e6]`.

use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bits per megabyte as used for task sizes (1 MB = 10^6 bytes).
pub const BITS_PER_MB: f64 = 8.0e6;

/// Environment variable that overrides the training seed.
pub const SEED_ENV_VAR: &str = "MAGIN_SEED";

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid config: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

/// Closed interval `[min, max]`, serialized as `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub const fn point(v: f64) -> Self {
        Self { min: v, max: v }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    /// Uniform draw. A collapsed range still consumes one draw so that RNG
    /// streams stay aligned across configs that differ only in ranges.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.min + u * (self.max - self.min)
    }

    /// Maps `v` into `[0, 1]` relative to the range; a collapsed range maps to 0.
    pub fn normalize(&self, v: f64) -> f64 {
        let w = self.width();
        if w <= 0.0 {
            0.0
        } else {
            ((v - self.min) / w).clamp(0.0, 1.0)
        }
    }
}

impl From<[f64; 2]> for Range {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.min, r.max]
    }
}

/// Physical scenario. Units are SI unless the field name says otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub area_width: f64,
    pub n_iotds: usize,
    pub n_uavs: usize,
    pub n_hotspots: usize,
    pub hotspot_radius: f64,
    /// Fraction of IoTDs placed inside hotspot discs at reset.
    pub hotspot_fraction: f64,
    pub slot_duration: f64,
    pub episode_length: usize,
    pub haps_altitude: f64,
    pub uav_altitude: f64,
    pub uav_coverage_radius: f64,
    pub uav_capacity: usize,
    pub bandwidth_haps: f64,
    pub bandwidth_uav: Range,
    pub noise_haps_dbm: f64,
    pub noise_uav_dbm: f64,
    pub eta_los_db: f64,
    pub eta_nlos_db: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub carrier_frequency: f64,
    pub pathloss_exponent: f64,
    /// Channel gain at 1 m for HAPS-bound links.
    pub ref_gain_haps_db: f64,
    pub tx_power_iotd_dbm: Range,
    pub tx_power_uav_dbm: f64,
    pub cpu_iotd: Range,
    pub cpu_uav_max: Range,
    pub cpu_haps_max: f64,
    pub task_size_bits: Range,
    pub deadline: Range,
    pub cycles_per_bit: Range,
    pub switching_cap_iotd: f64,
    pub switching_cap_edge: f64,
    pub d_min: f64,
    /// Per-slot travel cap; defaults to `uav_speed * slot_duration`.
    pub d_max: Option<f64>,
    pub uav_speed: f64,
    pub rotor_profile_power: f64,
    pub rotor_induced_power: f64,
    pub rotor_tip_speed: f64,
    pub rotor_induced_velocity: f64,
    pub fuselage_drag_ratio: f64,
    pub rotor_solidity: f64,
    pub air_density: f64,
    pub rotor_disc_area: f64,
    pub queue_bound_local: f64,
    pub queue_bound_offload: f64,
    pub queue_bound_edge: f64,
    pub energy_weight: f64,
    pub battery_iotd: f64,
    pub battery_uav: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
    pub psi4: f64,
    pub mu_flyout: f64,
    pub mu_collision: f64,
    pub mu_guide: f64,
    pub mob_speed_memory: f64,
    pub mob_heading_memory: f64,
    pub mob_mean_speed: f64,
    pub mob_mean_heading: f64,
    pub mob_speed_noise_mean: f64,
    pub mob_speed_noise_std: f64,
    pub mob_heading_noise_mean: f64,
    pub mob_heading_noise_std: f64,
    /// Initial UAV positions; UAVs beyond this list start at random positions.
    pub uav_starts: Vec<[f64; 2]>,
    /// Seeds the hotspot centres, which stay fixed across episodes.
    pub layout_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area_width: 1000.0,
            n_iotds: 70,
            n_uavs: 3,
            n_hotspots: 5,
            hotspot_radius: 100.0,
            hotspot_fraction: 0.8,
            slot_duration: 2.0,
            episode_length: 50,
            haps_altitude: 20_000.0,
            uav_altitude: 100.0,
            uav_coverage_radius: 100.0,
            uav_capacity: 10,
            bandwidth_haps: 100.0e6,
            bandwidth_uav: Range::new(20.0e6, 45.0e6),
            noise_haps_dbm: -130.0,
            noise_uav_dbm: -144.0,
            eta_los_db: 0.1,
            eta_nlos_db: 21.0,
            mu1: 4.88,
            mu2: 0.43,
            carrier_frequency: 0.1e9,
            pathloss_exponent: 2.0,
            ref_gain_haps_db: -40.0,
            tx_power_iotd_dbm: Range::new(20.0, 23.0),
            tx_power_uav_dbm: 30.0,
            cpu_iotd: Range::new(1.0e9, 2.0e9),
            cpu_uav_max: Range::new(18.0e9, 20.0e9),
            cpu_haps_max: 100.0e9,
            task_size_bits: Range::new(0.15 * BITS_PER_MB, 0.45 * BITS_PER_MB),
            deadline: Range::new(0.1, 0.5),
            cycles_per_bit: Range::new(800.0, 1000.0),
            switching_cap_iotd: 1e-28,
            switching_cap_edge: 1e-28,
            d_min: 20.0,
            d_max: None,
            uav_speed: 25.0,
            rotor_profile_power: 79.86,
            rotor_induced_power: 88.63,
            rotor_tip_speed: 120.0,
            rotor_induced_velocity: 4.03,
            fuselage_drag_ratio: 0.6,
            rotor_solidity: 0.05,
            air_density: 1.225,
            rotor_disc_area: 0.503,
            queue_bound_local: 0.14,
            queue_bound_offload: 0.05,
            queue_bound_edge: 0.1,
            energy_weight: 0.001,
            battery_iotd: 1.0e3,
            battery_uav: 1.0e5,
            psi1: 10.0,
            psi2: 10.0,
            psi3: 10.0,
            psi4: 10.0,
            mu_flyout: 0.01,
            mu_collision: 1.0,
            mu_guide: 1.0,
            mob_speed_memory: 0.8,
            mob_heading_memory: 0.8,
            mob_mean_speed: 1.0,
            mob_mean_heading: 0.0,
            mob_speed_noise_mean: 0.0,
            mob_speed_noise_std: 0.5,
            mob_heading_noise_mean: 0.0,
            mob_heading_noise_std: 0.5,
            uav_starts: vec![[100.0, 800.0], [200.0, 100.0], [500.0, 800.0]],
            layout_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn d_max(&self) -> f64 {
        self.d_max.unwrap_or(self.uav_speed * self.slot_duration)
    }

    /// Horizontal HAPS position (centre of the area).
    pub fn haps_position(&self) -> [f64; 2] {
        [0.5 * self.area_width, 0.5 * self.area_width]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive"));
            }
        };
        positive("area_width", self.area_width);
        positive("n_iotds", self.n_iotds as f64);
        positive("n_uavs", self.n_uavs as f64);
        positive("n_hotspots", self.n_hotspots as f64);
        positive("hotspot_radius", self.hotspot_radius);
        positive("slot_duration", self.slot_duration);
        positive("episode_length", self.episode_length as f64);
        positive("haps_altitude", self.haps_altitude);
        positive("uav_altitude", self.uav_altitude);
        positive("uav_coverage_radius", self.uav_coverage_radius);
        positive("uav_capacity", self.uav_capacity as f64);
        positive("bandwidth_haps", self.bandwidth_haps);
        positive("carrier_frequency", self.carrier_frequency);
        positive("pathloss_exponent", self.pathloss_exponent);
        positive("cpu_haps_max", self.cpu_haps_max);
        positive("switching_cap_iotd", self.switching_cap_iotd);
        positive("switching_cap_edge", self.switching_cap_edge);
        positive("d_min", self.d_min);
        positive("d_max", self.d_max());
        positive("uav_speed", self.uav_speed);
        positive("rotor_profile_power", self.rotor_profile_power);
        positive("rotor_induced_power", self.rotor_induced_power);
        positive("rotor_tip_speed", self.rotor_tip_speed);
        positive("rotor_induced_velocity", self.rotor_induced_velocity);
        positive("fuselage_drag_ratio", self.fuselage_drag_ratio);
        positive("rotor_solidity", self.rotor_solidity);
        positive("air_density", self.air_density);
        positive("rotor_disc_area", self.rotor_disc_area);
        positive("queue_bound_local", self.queue_bound_local);
        positive("queue_bound_offload", self.queue_bound_offload);
        positive("queue_bound_edge", self.queue_bound_edge);
        positive("battery_iotd", self.battery_iotd);
        positive("battery_uav", self.battery_uav);
        positive("mu1", self.mu1);
        positive("mu2", self.mu2);

        for (name, r, strictly_positive) in [
            ("bandwidth_uav", self.bandwidth_uav, true),
            ("cpu_iotd", self.cpu_iotd, true),
            ("cpu_uav_max", self.cpu_uav_max, true),
            ("task_size_bits", self.task_size_bits, false),
            ("deadline", self.deadline, true),
            ("cycles_per_bit", self.cycles_per_bit, true),
            ("tx_power_iotd_dbm", self.tx_power_iotd_dbm, false),
        ] {
            if !(r.min.is_finite() && r.max.is_finite()) {
                errs.push(format!("{name} must be finite"));
            } else if r.min > r.max {
                errs.push(format!("{name} range must satisfy min <= max"));
            } else if strictly_positive && r.min <= 0.0 {
                errs.push(format!("{name} must be positive"));
            } else if !strictly_positive && name == "task_size_bits" && r.min < 0.0 {
                errs.push(format!("{name} must be non-negative"));
            }
        }

        let mut non_negative = |name: &str, v: f64| {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be non-negative"));
            }
        };
        non_negative("eta_los_db", self.eta_los_db);
        non_negative("eta_nlos_db", self.eta_nlos_db);
        non_negative("energy_weight", self.energy_weight);
        for (name, v) in [
            ("psi1", self.psi1),
            ("psi2", self.psi2),
            ("psi3", self.psi3),
            ("psi4", self.psi4),
            ("mu_flyout", self.mu_flyout),
            ("mu_collision", self.mu_collision),
            ("mu_guide", self.mu_guide),
            ("mob_mean_speed", self.mob_mean_speed),
            ("mob_speed_noise_std", self.mob_speed_noise_std),
            ("mob_heading_noise_std", self.mob_heading_noise_std),
        ] {
            non_negative(name, v);
        }

        for (name, v) in [
            ("hotspot_fraction", self.hotspot_fraction),
            ("mob_speed_memory", self.mob_speed_memory),
            ("mob_heading_memory", self.mob_heading_memory),
        ] {
            if !(0.0..=1.0).contains(&v) {
                errs.push(format!("{name} must lie in [0, 1]"));
            }
        }

        let kinematic = self.uav_speed * self.slot_duration;
        if let Some(d) = self.d_max {
            if (d - kinematic).abs() > 1e-9 * kinematic.max(1.0) {
                errs.push(format!(
                    "d_max must equal uav_speed * slot_duration ({kinematic})"
                ));
            }
        }
        for (i, p) in self.uav_starts.iter().enumerate() {
            if !p.iter().all(|c| (0.0..=self.area_width).contains(c)) {
                errs.push(format!("uav_starts[{i}] must lie inside the area"));
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    MappoBd,
    MappoNd,
    PoMappoBd,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::MappoBd, Variant::MappoNd, Variant::PoMappoBd];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::MappoBd => "mappo-bd",
            Variant::MappoNd => "mappo-nd",
            Variant::PoMappoBd => "po-mappo-bd",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant `{s}` (expected mappo-bd, mappo-nd or po-mappo-bd)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub ppo_epochs: usize,
    pub actor_lr_iotd: f64,
    pub critic_lr_iotd: f64,
    pub actor_lr_uav: f64,
    pub critic_lr_uav: f64,
    pub actor_lr_haps: f64,
    pub critic_lr_haps: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub entropy_coef: f64,
    pub seed: u64,
    pub variant: Variant,
    /// Samples per gradient step; 0 means full batch.
    pub minibatch_size: usize,
    /// Episodes collected before each update phase.
    pub rollout_episodes: usize,
    pub hidden_sizes: Vec<usize>,
    pub max_grad_norm: f64,
    /// Critic regresses onto running-normalized return targets.
    pub value_normalization: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            ppo_epochs: 10,
            actor_lr_iotd: 1e-3,
            critic_lr_iotd: 2e-3,
            actor_lr_uav: 1e-4,
            critic_lr_uav: 1e-3,
            actor_lr_haps: 1e-3,
            critic_lr_haps: 2e-3,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            entropy_coef: 0.1,
            seed: 0,
            variant: Variant::MappoBd,
            minibatch_size: 0,
            rollout_episodes: 1,
            hidden_sizes: vec![64, 64],
            max_grad_norm: 0.5,
            value_normalization: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            errs.push("gamma must lie in (0, 1)".to_string());
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            errs.push("gae_lambda must lie in [0, 1]".to_string());
        }
        if !(self.clip_epsilon > 0.0) {
            errs.push("clip_epsilon must be positive".to_string());
        }
        if !(self.entropy_coef >= 0.0) {
            errs.push("entropy_coef must be non-negative".to_string());
        }
        for (name, lr) in [
            ("actor_lr_iotd", self.actor_lr_iotd),
            ("critic_lr_iotd", self.critic_lr_iotd),
            ("actor_lr_uav", self.actor_lr_uav),
            ("critic_lr_uav", self.critic_lr_uav),
            ("actor_lr_haps", self.actor_lr_haps),
            ("critic_lr_haps", self.critic_lr_haps),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                errs.push(format!("{name} must be positive"));
            }
        }
        if self.rollout_episodes == 0 {
            errs.push("rollout_episodes must be positive".to_string());
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            errs.push("hidden_sizes entries must be positive".to_string());
        }
        if !(self.max_grad_norm > 0.0) {
            errs.push("max_grad_norm must be positive".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

fn keys_of<T: Serialize>(v: &T) -> Vec<String> {
    match toml::Value::try_from(v) {
        Ok(toml::Value::Table(t)) => t.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

/// Parses flat config text, filling absent keys with defaults and validating.
pub fn parse_config(text: &str) -> Result<(ScenarioConfig, TrainConfig), ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        ConfigError::Parse(e.to_string())
    })?;
    let scenario_keys = keys_of(&ScenarioConfig {
        d_max: Some(0.0),
        ..ScenarioConfig::default()
    });
    let train_keys = keys_of(&TrainConfig::default());

    let mut scenario_table = toml::Table::new();
    let mut train_table = toml::Table::new();
    for (k, v) in table {
        if scenario_keys.contains(&k) {
            scenario_table.insert(k, v);
        } else if train_keys.contains(&k) {
            train_table.insert(k, v);
        } else {
            return Err(ConfigError::UnknownKey(k));
        }
    }
    let scenario: ScenarioConfig = toml::Value::Table(scenario_table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let train: TrainConfig = toml::Value::Table(train_table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    scenario.validate()?;
    train.validate()?;
    Ok((scenario, train))
}

pub fn load_config(path: impl AsRef<Path>) -> Result<(ScenarioConfig, TrainConfig), ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

/// Serializes both configs into one flat document accepted by [`parse_config`].
pub fn to_config_string(scenario: &ScenarioConfig, train: &TrainConfig) -> String {
    let mut table = toml::Table::new();
    for v in [toml::Value::try_from(scenario), toml::Value::try_from(train)] {
        if let Ok(toml::Value::Table(t)) = v {
            table.extend(t);
        }
    }
    toml::to_string(&table).expect("config tables always serialize")
}

/// Deterministic stream keyed by `(seed, stream_id)`. Distinct stream ids
/// select disjoint ChaCha streams under the same key.
pub fn make_rng(seed: u64, stream_id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Seed from [`SEED_ENV_VAR`], if set and parseable.
pub fn seed_from_env() -> Option<u64> {
    std::env::var(SEED_ENV_VAR).ok()?.trim().parse().ok()
}
