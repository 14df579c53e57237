//! Hierarchical air-ground MEC simulator (IoT devices, UAVs, one HAPS) and a
//! heterogeneous multi-agent PPO trainer with Beta-distribution policies.
//!
//! Numeric kernels are generic over [`scalar::Real`]; the environment and the
//! trainer run in `f64`. The aliases below fix the generic types to `f64`.

pub mod association;
pub mod channel;
pub mod config;
pub mod energy;
pub mod env;
pub mod mappo;
pub mod mobility;
pub mod nn;
pub mod queues;
pub mod scalar;

pub use config::{load_config, parse_config, ConfigError, Range, ScenarioConfig, TrainConfig, Variant};

pub type IotdKinematics = mobility::IotdKinematics<f64>;
pub type UavKinematics = mobility::UavKinematics<f64>;
pub type AtgChannel = channel::AtgChannel<f64>;
pub type Rotor = energy::Rotor<f64>;
pub type TaskSet = queues::TaskSet<f64>;
pub type Mlp = nn::Mlp<f64>;
pub type Adam = nn::Adam<f64>;
pub type AdvantageSet = mappo::AdvantageSet<f64>;
pub type ValueNorm = mappo::ValueNorm<f64>;
