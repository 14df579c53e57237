//! Gauss-Markov IoTD mobility and polar-step UAV kinematics.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("heading {0} outside [0, 2pi]")]
    HeadingOutOfRange(f64),
    #[error("move distance {0} outside [0, {1}]")]
    DistanceOutOfRange(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IotdKinematics<T> {
    pub x: T,
    pub y: T,
    pub speed: T,
    /// Unwrapped heading in radians.
    pub heading: T,
}

/// Parameters of the Gauss-Markov process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussMarkov<T> {
    pub speed_memory: T,
    pub heading_memory: T,
    pub mean_speed: T,
    pub mean_heading: T,
    pub slot: T,
    pub width: T,
}

impl GaussMarkov<f64> {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            speed_memory: cfg.mob_speed_memory,
            heading_memory: cfg.mob_heading_memory,
            mean_speed: cfg.mob_mean_speed,
            mean_heading: cfg.mob_mean_heading,
            slot: cfg.slot_duration,
            width: cfg.area_width,
        }
    }
}

/// One Gauss-Markov step given the slot's speed and heading innovations.
///
/// Speed and heading are updated first; the position then advances with the
/// previous slot's speed and heading, and is clamped to the square area.
pub fn step_iotd<T: Real>(
    k: IotdKinematics<T>,
    p: &GaussMarkov<T>,
    speed_noise: T,
    heading_noise: T,
) -> IotdKinematics<T> {
    let one = T::one();
    let w1 = p.speed_memory;
    let w2 = p.heading_memory;
    let speed = w1 * k.speed + (one - w1) * p.mean_speed + (one - w1 * w1).max(T::zero()).sqrt() * speed_noise;
    let heading =
        w2 * k.heading + (one - w2) * p.mean_heading + (one - w2 * w2).max(T::zero()).sqrt() * heading_noise;
    let x = k.x + k.speed * k.heading.cos() * p.slot;
    let y = k.y + k.speed * k.heading.sin() * p.slot;
    IotdKinematics {
        x: x.max(T::zero()).min(p.width),
        y: y.max(T::zero()).min(p.width),
        speed: speed.max(T::zero()),
        heading,
    }
}

/// Draws the innovations from `N(mean, std^2)` per the config and steps.
pub fn step_iotd_random<R: Rng + ?Sized>(
    k: IotdKinematics<f64>,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> IotdKinematics<f64> {
    let zs: f64 = rng.sample(StandardNormal);
    let zh: f64 = rng.sample(StandardNormal);
    let phi = cfg.mob_speed_noise_mean + cfg.mob_speed_noise_std * zs;
    let psi = cfg.mob_heading_noise_mean + cfg.mob_heading_noise_std * zh;
    step_iotd(k, &GaussMarkov::from_config(cfg), phi, psi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavKinematics<T> {
    pub x: T,
    pub y: T,
    pub altitude: T,
    /// Distance actually travelled in the last slot.
    pub last_distance: T,
    pub last_heading: T,
}

impl<T: Real> UavKinematics<T> {
    pub fn at(x: T, y: T, altitude: T) -> Self {
        Self {
            x,
            y,
            altitude,
            last_distance: T::zero(),
            last_heading: T::zero(),
        }
    }
}

/// Moves a UAV by `distance` along `heading`, stopping at the area boundary.
///
/// Returns the new kinematics and the boundary overshoot
/// `|raw_x - clip_x| + |raw_y - clip_y|`.
pub fn step_uav<T: Real>(
    k: UavKinematics<T>,
    heading: T,
    distance: T,
    width: T,
    d_max: T,
) -> Result<(UavKinematics<T>, T), MobilityError> {
    let tol = T::lit(1e-9);
    if !(heading >= -tol && heading <= T::TAU() + tol) {
        return Err(MobilityError::HeadingOutOfRange(heading.as_f64()));
    }
    if !(distance >= -tol && distance <= d_max * (T::one() + tol)) {
        return Err(MobilityError::DistanceOutOfRange(distance.as_f64(), d_max.as_f64()));
    }
    let distance = distance.max(T::zero()).min(d_max);
    let raw_x = k.x + distance * heading.cos();
    let raw_y = k.y + distance * heading.sin();
    let x = raw_x.max(T::zero()).min(width);
    let y = raw_y.max(T::zero()).min(width);
    let violation = (raw_x - x).abs() + (raw_y - y).abs();
    let travelled = ((x - k.x).powi(2) + (y - k.y).powi(2)).sqrt();
    Ok((
        UavKinematics {
            x,
            y,
            altitude: k.altitude,
            last_distance: travelled,
            last_heading: heading,
        },
        violation,
    ))
}

pub fn horizontal_distance<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Pairwise horizontal UAV distances, symmetric with a zero diagonal.
pub fn uav_pair_distances<T: Real>(uavs: &[UavKinematics<T>]) -> Vec<Vec<T>> {
    let m = uavs.len();
    let mut out = vec![vec![T::zero(); m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let d = horizontal_distance([uavs[i].x, uavs[i].y], [uavs[j].x, uavs[j].y]);
            out[i][j] = d;
            out[j][i] = d;
        }
    }
    out
}

/// 3-D distance between a ground node and an aerial node at `altitude`.
pub fn ground_to_air<T: Real>(ground: [T; 2], air: [T; 2], altitude: T) -> T {
    let h = horizontal_distance(ground, air);
    (h * h + altitude * altitude).sqrt()
}

/// 3-D distance between two aerial nodes.
pub fn air_to_air<T: Real>(a: [T; 2], alt_a: T, b: [T; 2], alt_b: T) -> T {
    let h = horizontal_distance(a, b);
    let dz = alt_a - alt_b;
    (h * h + dz * dz).sqrt()
}

/// Link distances for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkDistances<T> {
    /// `iotd_uav[n][m]`
    pub iotd_uav: Vec<Vec<T>>,
    pub iotd_haps: Vec<T>,
    pub uav_haps: Vec<T>,
}

pub fn link_distances<T: Real>(
    iotds: &[[T; 2]],
    uavs: &[UavKinematics<T>],
    haps: [T; 2],
    haps_altitude: T,
) -> LinkDistances<T> {
    let iotd_uav = iotds
        .iter()
        .map(|&q| uavs.iter().map(|u| ground_to_air(q, [u.x, u.y], u.altitude)).collect())
        .collect();
    let iotd_haps = iotds.iter().map(|&q| ground_to_air(q, haps, haps_altitude)).collect();
    let uav_haps = uavs
        .iter()
        .map(|u| air_to_air([u.x, u.y], u.altitude, haps, haps_altitude))
        .collect();
    LinkDistances {
        iotd_uav,
        iotd_haps,
        uav_haps,
    }
}
