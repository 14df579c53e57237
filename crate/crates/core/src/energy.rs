//! Energy accounting: rotary-wing propulsion, computing and transmission
//! energy, the weighted network total and cumulative battery drain.

use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::queues::DelayReport;
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("UAV speed must be positive to fly {0} m")]
    ZeroSpeed(f64),
}

/// Rotary-wing constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotor<T> {
    pub profile_power: T,
    pub induced_power: T,
    pub tip_speed: T,
    pub induced_velocity: T,
    pub fuselage_drag_ratio: T,
    pub solidity: T,
    pub air_density: T,
    pub disc_area: T,
}

impl Rotor<f64> {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            profile_power: cfg.rotor_profile_power,
            induced_power: cfg.rotor_induced_power,
            tip_speed: cfg.rotor_tip_speed,
            induced_velocity: cfg.rotor_induced_velocity,
            fuselage_drag_ratio: cfg.fuselage_drag_ratio,
            solidity: cfg.rotor_solidity,
            air_density: cfg.air_density,
            disc_area: cfg.rotor_disc_area,
        }
    }
}

impl<T: Real> Rotor<T> {
    /// Forward-flight power at speed `v`, watts.
    pub fn flight_power(&self, v: T) -> T {
        let half = T::lit(0.5);
        let v2 = v * v;
        let v0 = self.induced_velocity;
        let v04 = v0 * v0 * v0 * v0;
        let parasite = half * self.fuselage_drag_ratio * self.air_density * self.solidity * self.disc_area * v2 * v;
        // Blade profile term uses the dimensionally consistent v^2 / U_tip^2.
        let profile = self.profile_power * (T::one() + T::lit(3.0) * v2 / (self.tip_speed * self.tip_speed));
        let induced = self.induced_power
            * ((T::one() + v2 * v2 / (T::lit(4.0) * v04)).sqrt() - v2 / (T::lit(2.0) * v0 * v0)).sqrt();
        parasite + profile + induced
    }

    pub fn hover_power(&self) -> T {
        self.profile_power + self.induced_power
    }
}

pub fn fly_energy<T: Real>(distance: T, speed: T, rotor: &Rotor<T>) -> Result<T, EnergyError> {
    if distance <= T::zero() {
        return Ok(T::zero());
    }
    if !(speed > T::zero()) {
        return Err(EnergyError::ZeroSpeed(distance.as_f64()));
    }
    Ok(rotor.flight_power(speed) * distance / speed)
}

pub fn hover_energy<T: Real>(distance: T, speed: T, slot: T, profile_power: T, induced_power: T) -> T {
    let flight_time = if distance > T::zero() { distance / speed } else { T::zero() };
    ((profile_power + induced_power) * (slot - flight_time)).max(T::zero())
}

/// Trajectory energy of one UAV for one slot.
pub fn trajectory_energy<T: Real>(distance: T, speed: T, slot: T, rotor: &Rotor<T>) -> Result<(T, T), EnergyError> {
    let fly = fly_energy(distance, speed, rotor)?;
    let hover = hover_energy(distance, speed, slot, rotor.profile_power, rotor.induced_power);
    Ok((fly, hover))
}

/// Dynamic CPU energy `W * f^3 * t`.
pub fn compute_energy<T: Real>(switching_cap: T, cpu: T, time: T) -> T {
    switching_cap * cpu * cpu * cpu * time
}

/// Energy terms of one IoTD for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IotdEnergy {
    pub local: f64,
    pub offload_tx: f64,
    pub edge: f64,
    pub relay_tx: f64,
    pub relay_edge: f64,
    pub com2: f64,
}

/// Per-IoTD inputs besides the delays.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyInputs<'a> {
    pub cpu_local: f64,
    /// IoTD transmit power, watts.
    pub tx_power: f64,
    /// Per-server edge delay (HAPS column first) with matching allocations.
    pub edge_delays: &'a [f64],
    pub edge_alloc: &'a [f64],
    pub haps_relay_alloc: f64,
    /// Relaying UAV transmit power, watts.
    pub uav_tx_power: f64,
}

pub fn compute_energies(delays: &DelayReport, inp: &EnergyInputs<'_>, cfg: &ScenarioConfig) -> IotdEnergy {
    let local = compute_energy(cfg.switching_cap_iotd, inp.cpu_local, delays.local);
    let offload_tx = inp.tx_power * delays.offload;
    let edge: f64 = inp
        .edge_delays
        .iter()
        .zip(inp.edge_alloc)
        .map(|(&t, &f)| compute_energy(cfg.switching_cap_edge, f, t))
        .sum();
    let relay_tx = inp.uav_tx_power * delays.relay;
    let relay_edge = compute_energy(cfg.switching_cap_edge, inp.haps_relay_alloc, delays.relay_edge);
    IotdEnergy {
        local,
        offload_tx,
        edge,
        relay_tx,
        relay_edge,
        com2: local + offload_tx + edge + relay_tx + relay_edge,
    }
}

/// Full slot energy breakdown.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyReport {
    pub iotds: Vec<IotdEnergy>,
    pub fly: Vec<f64>,
    pub hover: Vec<f64>,
    pub all: f64,
}

impl EnergyReport {
    pub fn new(iotds: Vec<IotdEnergy>, fly: Vec<f64>, hover: Vec<f64>, weight: f64) -> Self {
        let all = total_energy(&iotds, &fly, &hover, weight);
        Self { iotds, fly, hover, all }
    }

    pub fn trajectory(&self, m: usize) -> f64 {
        self.fly[m] + self.hover[m]
    }
}

pub fn total_energy(iotds: &[IotdEnergy], fly: &[f64], hover: &[f64], weight: f64) -> f64 {
    let com2: f64 = iotds.iter().map(|e| e.com2).sum();
    let traj: f64 = fly.iter().zip(hover).map(|(f, h)| f + h).sum();
    com2 + weight * traj
}

/// Cumulative drain per entity against a capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Batteries {
    pub capacity: f64,
    pub drain: Vec<f64>,
}

impl Batteries {
    pub fn new(n: usize, capacity: f64) -> Self {
        Self {
            capacity,
            drain: vec![0.0; n],
        }
    }

    /// Adds this slot's drain; returns per-entity violation flags.
    pub fn update(&mut self, slot_drain: &[f64]) -> Vec<bool> {
        self.drain
            .iter_mut()
            .zip(slot_drain)
            .map(|(d, &x)| {
                *d += x.max(0.0);
                *d > self.capacity
            })
            .collect()
    }

    pub fn violated(&self) -> Vec<bool> {
        self.drain.iter().map(|&d| d > self.capacity).collect()
    }
}

/// IoTD drain is local compute plus its own transmission; UAV drain is
/// trajectory plus relay transmission.
pub fn update_batteries(
    iotd: &mut Batteries,
    uav: &mut Batteries,
    report: &EnergyReport,
    relay_tx_by_uav: &[f64],
) -> (Vec<bool>, Vec<bool>) {
    let iotd_drain: Vec<f64> = report.iotds.iter().map(|e| e.local + e.offload_tx).collect();
    let uav_drain: Vec<f64> = (0..report.fly.len())
        .map(|m| report.trajectory(m) + relay_tx_by_uav.get(m).copied().unwrap_or(0.0))
        .collect();
    (iotd.update(&iotd_drain), uav.update(&uav_drain))
}
