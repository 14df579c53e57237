//! Air-to-ground channel: LoS probability, path loss, SINR and Shannon rates.
//!
//! All SINR arithmetic is done in linear watts.

use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::scalar::Real;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("link distance must be positive, got {0}")]
    NonPositiveDistance(f64),
}

pub fn dbm_to_watts<T: Real>(dbm: T) -> T {
    T::lit(10.0).powf((dbm - T::lit(30.0)) / T::lit(10.0))
}

pub fn db_to_linear<T: Real>(db: T) -> T {
    T::lit(10.0).powf(db / T::lit(10.0))
}

/// Elevation-angle sigmoid, angle in degrees. `d == 0` is treated as 90 degrees.
pub fn los_probability<T: Real>(h: T, d: T, mu1: T, mu2: T) -> T {
    let phi = if d <= T::zero() {
        T::lit(90.0)
    } else {
        (h / d).atan().to_degrees()
    };
    T::one() / (T::one() + mu1 * (-mu2 * (phi - mu1)).exp())
}

pub fn free_space_loss_db<T: Real>(d: T, carrier: T) -> Result<T, ChannelError> {
    if !(d > T::zero()) {
        return Err(ChannelError::NonPositiveDistance(d.as_f64()));
    }
    let c = T::lit(SPEED_OF_LIGHT);
    Ok(T::lit(20.0) * (T::lit(4.0) * T::PI() * carrier * d / c).log10())
}

/// Probabilistic LoS/NLoS air-to-ground channel for IoTD-to-UAV links.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtgChannel<T> {
    pub carrier: T,
    pub eta_los_db: T,
    pub eta_nlos_db: T,
    pub mu1: T,
    pub mu2: T,
}

impl AtgChannel<f64> {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            carrier: cfg.carrier_frequency,
            eta_los_db: cfg.eta_los_db,
            eta_nlos_db: cfg.eta_nlos_db,
            mu1: cfg.mu1,
            mu2: cfg.mu2,
        }
    }
}

/// Per-link quantities for one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget<T> {
    pub path_loss_db: T,
    pub los_probability: T,
    pub gain: T,
}

impl<T: Real> AtgChannel<T> {
    pub fn los_probability(&self, h: T, d: T) -> T {
        los_probability(h, d, self.mu1, self.mu2)
    }

    /// Mean path loss in dB for a link of 3-D length `d` to an altitude `h`.
    pub fn path_loss_db(&self, d: T, h: T) -> Result<T, ChannelError> {
        let p = self.los_probability(h, d);
        Ok(self.path_loss_with_los(free_space_loss_db(d, self.carrier)?, p))
    }

    pub fn path_loss_with_los(&self, free_space_db: T, p_los: T) -> T {
        free_space_db + p_los * self.eta_los_db + (T::one() - p_los) * self.eta_nlos_db
    }

    pub fn budget(&self, d: T, h: T) -> Result<LinkBudget<T>, ChannelError> {
        let p = self.los_probability(h, d);
        let loss = self.path_loss_with_los(free_space_loss_db(d, self.carrier)?, p);
        Ok(LinkBudget {
            path_loss_db: loss,
            los_probability: p,
            gain: db_to_linear(-loss),
        })
    }
}

/// Distance-power-law gain `g0 * d^-a` used on HAPS-bound links.
pub fn reference_gain<T: Real>(d: T, g0: T, exponent: T) -> Result<T, ChannelError> {
    if !(d > T::zero()) {
        return Err(ChannelError::NonPositiveDistance(d.as_f64()));
    }
    Ok(g0 * d.powf(-exponent))
}

pub fn sinr<T: Real>(signal: T, interference: T, noise: T) -> T {
    signal / (interference + noise)
}

pub fn shannon_rate<T: Real>(bandwidth: T, sinr: T) -> T {
    bandwidth * sinr.ln_1p() / T::LN_2()
}

/// Rates for a set of transmitters sharing one receiver and band.
///
/// `rx_power[i]` is transmitter `i`'s received power in watts. Each
/// transmitter sees interference from every *other* transmitter with
/// `active[j]`, plus `noise`.
pub fn uplink_rates<T: Real>(rx_power: &[T], active: &[bool], noise: T, bandwidth: T) -> Vec<T> {
    debug_assert_eq!(rx_power.len(), active.len());
    let total: T = rx_power
        .iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|(&p, _)| p)
        .sum();
    rx_power
        .iter()
        .zip(active)
        .map(|(&p, &a)| {
            let own = if a { p } else { T::zero() };
            let interference = (total - own).max(T::zero());
            shannon_rate(bandwidth, sinr(p, interference, noise))
        })
        .collect()
}
