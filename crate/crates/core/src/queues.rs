//! Task arrivals, the five queue families, per-slot delays and Little's-law
//! long-term delay averages.
//!
//! Every queue follows `Q' = max(Q - g, 0) + a` with `g = min(Q, capacity)`.
//! Service is drawn from the backlog held at the start of the slot; arrivals
//! are admitted after service.

use rand::Rng;
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::scalar::{capped_ratio, Real};

#[derive(Debug, Error, PartialEq)]
pub enum QueueError {
    #[error("offloading ratio {0} outside [0, 1]")]
    RatioOutOfRange(f64),
    #[error("cycles per bit must be positive, got {0}")]
    ZeroCycles(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskSet<T> {
    pub size_bits: T,
    pub cycles_per_bit: T,
    pub deadline: T,
}

/// One task set per IoTD, drawn uniformly from the configured ranges.
pub fn generate_tasks<R: Rng + ?Sized>(rng: &mut R, cfg: &ScenarioConfig, n: usize) -> Vec<TaskSet<f64>> {
    (0..n)
        .map(|_| TaskSet {
            size_bits: cfg.task_size_bits.sample(rng),
            cycles_per_bit: cfg.cycles_per_bit.sample(rng),
            deadline: cfg.deadline.sample(rng),
        })
        .collect()
}

/// Splits `bits` into `(local, offloaded)` with `offloaded = alpha * bits`.
pub fn split_task<T: Real>(bits: T, alpha: T) -> Result<(T, T), QueueError> {
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(QueueError::RatioOutOfRange(alpha.as_f64()));
    }
    let offloaded = alpha * bits;
    Ok((bits - offloaded, offloaded))
}

/// Outcome of one slot of a single queue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueStep<T> {
    /// Backlog after service and admission.
    pub backlog: T,
    /// Bits served this slot.
    pub served: T,
    /// Backlog left after service, before admission.
    pub carried: T,
}

pub fn serve<T: Real>(backlog: T, capacity: T, arrivals: T) -> QueueStep<T> {
    let served = backlog.min(capacity.max(T::zero()));
    let carried = (backlog - served).max(T::zero());
    QueueStep {
        backlog: carried + arrivals,
        served,
        carried,
    }
}

pub fn step_local_queue<T: Real>(
    backlog: T,
    arrivals: T,
    cpu: T,
    cycles_per_bit: T,
    slot: T,
) -> Result<QueueStep<T>, QueueError> {
    if !(cycles_per_bit > T::zero()) {
        return Err(QueueError::ZeroCycles(cycles_per_bit.as_f64()));
    }
    Ok(serve(backlog, slot * cpu / cycles_per_bit, arrivals))
}

pub fn step_offload_queue<T: Real>(backlog: T, arrivals: T, rate: T, slot: T) -> QueueStep<T> {
    serve(backlog, slot * rate, arrivals)
}

pub fn step_edge_queue<T: Real>(
    backlog: T,
    arrivals: T,
    cpu_alloc: T,
    cycles_per_bit: T,
    slot: T,
) -> Result<QueueStep<T>, QueueError> {
    step_local_queue(backlog, arrivals, cpu_alloc, cycles_per_bit, slot)
}

/// Relay buffer at the UAV feeding the relayed-edge buffer at the HAPS.
///
/// With `relay = false` both queues still drain but admit nothing new from
/// `feed`. Bits relayed this slot enter the HAPS buffer in the same slot.
#[allow(clippy::too_many_arguments)]
pub fn step_relay_queues<T: Real>(
    relay_backlog: T,
    relay_edge_backlog: T,
    feed: T,
    relay_rate: T,
    haps_alloc: T,
    cycles_per_bit: T,
    slot: T,
    relay: bool,
) -> Result<(QueueStep<T>, QueueStep<T>), QueueError> {
    let feed = if relay { feed } else { T::zero() };
    let first = serve(relay_backlog, slot * relay_rate, feed);
    let second = step_local_queue(relay_edge_backlog, first.served, haps_alloc, cycles_per_bit, slot)?;
    Ok((first, second))
}

/// Per-slot delays of one IoTD, all in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DelayReport {
    pub local: f64,
    pub offload: f64,
    pub edge: f64,
    pub relay: f64,
    pub relay_edge: f64,
    pub total: f64,
    pub deadline_violated: bool,
}

impl DelayReport {
    pub fn components(&self) -> [f64; 5] {
        [self.local, self.offload, self.edge, self.relay, self.relay_edge]
    }
}

/// Everything needed to turn a post-update queue snapshot into delays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayInputs<'a> {
    pub local_backlog: f64,
    pub offload_backlog: f64,
    /// Edge backlog per server column (HAPS first).
    pub edge_backlog: &'a [f64],
    /// Allocated CPU per server column, Hz.
    pub edge_alloc: &'a [f64],
    pub relay_backlog: f64,
    pub relay_edge_backlog: f64,
    pub cpu_local: f64,
    pub offload_rate: f64,
    pub relay_rate: f64,
    pub haps_alloc: f64,
    pub cycles_per_bit: f64,
    pub deadline: f64,
    pub slot: f64,
}

/// Per-server edge delays, each capped at the slot length.
pub fn edge_delays(inp: &DelayInputs<'_>) -> Vec<f64> {
    inp.edge_backlog
        .iter()
        .zip(inp.edge_alloc)
        .map(|(&q, &f)| capped_ratio(q * inp.cycles_per_bit, f, inp.slot))
        .collect()
}

pub fn compute_delays(inp: &DelayInputs<'_>) -> DelayReport {
    let tau = inp.slot;
    let s = inp.cycles_per_bit;
    let local = capped_ratio(inp.local_backlog * s, inp.cpu_local, tau);
    let offload = capped_ratio(inp.offload_backlog, inp.offload_rate, tau);
    let edge = edge_delays(inp).into_iter().fold(0.0, f64::max);
    let relay = capped_ratio(inp.relay_backlog, inp.relay_rate, tau);
    let relay_edge = capped_ratio(inp.relay_edge_backlog * s, inp.haps_alloc, tau);
    let total = local.max(offload + relay + edge + relay_edge);
    DelayReport {
        local,
        offload,
        edge,
        relay,
        relay_edge,
        total,
        deadline_violated: total > inp.deadline,
    }
}

/// Running Little's-law delay estimate `tau * mean_t(Q(t) / mean arrivals up to t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LongTermDelay {
    arrivals: f64,
    ratios: f64,
    slots: usize,
}

impl LongTermDelay {
    /// Adds slot `t`'s backlog and arrivals; returns the updated average in seconds.
    pub fn update(&mut self, backlog: f64, arrivals: f64, slot: f64) -> f64 {
        self.slots += 1;
        self.arrivals += arrivals;
        let mean_arrivals = self.arrivals / self.slots as f64;
        if mean_arrivals > 0.0 {
            self.ratios += backlog / mean_arrivals;
        }
        self.value(slot)
    }

    pub fn value(&self, slot: f64) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            slot * self.ratios / self.slots as f64
        }
    }
}

/// Cumulative in/out bit counts for one queue family.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Flow {
    pub arrived: f64,
    pub departed: f64,
}

impl Flow {
    pub fn record(&mut self, step: &QueueStep<f64>, arrivals: f64) {
        self.arrived += arrivals;
        self.departed += step.served;
    }

    /// Relative conservation error against the current total backlog.
    pub fn imbalance(&self, backlog: f64) -> f64 {
        let lhs = self.arrived;
        let rhs = self.departed + backlog;
        (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0)
    }
}

/// All queues belonging to one IoTD.
#[derive(Debug, Clone, PartialEq)]
pub struct IotdQueues {
    pub local: f64,
    pub offload: f64,
    /// Edge backlog keyed by server column (HAPS at 0, UAV m at m + 1).
    pub edge: Vec<f64>,
    pub relay: f64,
    pub relay_edge: f64,
    /// UAV currently holding this IoTD's relay backlog.
    pub relay_via: Option<usize>,
    pub lt_local: LongTermDelay,
    pub lt_offload: LongTermDelay,
    pub lt_edge: LongTermDelay,
}

impl IotdQueues {
    pub fn new(n_uavs: usize) -> Self {
        Self {
            local: 0.0,
            offload: 0.0,
            edge: vec![0.0; n_uavs + 1],
            relay: 0.0,
            relay_edge: 0.0,
            relay_via: None,
            lt_local: LongTermDelay::default(),
            lt_offload: LongTermDelay::default(),
            lt_edge: LongTermDelay::default(),
        }
    }

    /// Bits waiting anywhere past the IoTD's radio.
    pub fn edge_side_backlog(&self) -> f64 {
        self.edge.iter().sum::<f64>() + self.relay + self.relay_edge
    }
}

/// Per-family flow ledgers used to check bit conservation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlowLedger {
    pub local: Flow,
    pub offload: Flow,
    pub edge: Flow,
    pub relay: Flow,
    pub relay_edge: Flow,
}

impl FlowLedger {
    /// Largest relative conservation error across the five families.
    pub fn max_imbalance(&self, queues: &[IotdQueues]) -> f64 {
        let local: f64 = queues.iter().map(|q| q.local).sum();
        let offload: f64 = queues.iter().map(|q| q.offload).sum();
        let edge: f64 = queues.iter().map(|q| q.edge.iter().sum::<f64>()).sum();
        let relay: f64 = queues.iter().map(|q| q.relay).sum();
        let relay_edge: f64 = queues.iter().map(|q| q.relay_edge).sum();
        [
            self.local.imbalance(local),
            self.offload.imbalance(offload),
            self.edge.imbalance(edge),
            self.relay.imbalance(relay),
            self.relay_edge.imbalance(relay_edge),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}
