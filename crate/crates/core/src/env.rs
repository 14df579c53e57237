//! The heterogeneous multi-agent environment: IoTD, UAV and HAPS agents
//! acting on one shared world, one slot per [`Env::step`].
//!
//! Agents act with unit vectors in `[0, 1]^k`; [`scale_uav_action`] and
//! [`scale_fractions`] map them to physical ranges.

use std::cmp::Ordering;

use rand::Rng;
use thiserror::Error;

use crate::association::{associate, decide_relay, AssociationMap, HotspotCounts, Server};
use crate::channel::{db_to_linear, dbm_to_watts, reference_gain, uplink_rates, AtgChannel};
use crate::config::{make_rng, ScenarioConfig, SimRng};
use crate::energy::{compute_energies, trajectory_energy, update_batteries, Batteries, EnergyInputs, EnergyReport, Rotor};
use crate::mobility::{horizontal_distance, link_distances, step_iotd_random, step_uav, uav_pair_distances};
use crate::queues::{
    compute_delays, edge_delays, generate_tasks, serve, split_task, step_edge_queue, step_local_queue,
    step_relay_queues, DelayInputs, DelayReport, FlowLedger, IotdQueues, TaskSet,
};
use crate::scalar::relu;

/// Stream id reserved for world randomness; policy streams use other ids.
pub const WORLD_STREAM: u64 = 0;
/// RNG stream for the hotspot layout, keyed by `layout_seed`.
pub const LAYOUT_STREAM: u64 = 7;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("{agent}: expected {expected} action values, got {got}")]
    ActionShape { agent: String, expected: usize, got: usize },
    #[error("{agent}: action value {value} is not a unit sample")]
    ActionValue { agent: String, value: f64 },
    #[error("{count} agent groups given, expected {expected}")]
    GroupCount { expected: usize, count: usize },
    #[error("step called after the episode ended")]
    EpisodeOver,
    #[error("internal model error: {0}")]
    Model(String),
}

/// Agent groups in fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentKind {
    Iotd,
    Uav,
    Haps,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Iotd, AgentKind::Uav, AgentKind::Haps];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Iotd => "iotd",
            AgentKind::Uav => "uav",
            AgentKind::Haps => "haps",
        }
    }
}

/// Observation, action and population sizes of one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_iotds: usize,
    pub n_uavs: usize,
    pub neighbours: usize,
}

impl Dims {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            n_iotds: cfg.n_iotds,
            n_uavs: cfg.n_uavs,
            neighbours: cfg.uav_capacity,
        }
    }

    pub fn count(&self, kind: AgentKind) -> usize {
        match kind {
            AgentKind::Iotd => self.n_iotds,
            AgentKind::Uav => self.n_uavs,
            AgentKind::Haps => 1,
        }
    }

    pub fn obs_width(&self, kind: AgentKind) -> usize {
        match kind {
            AgentKind::Iotd => 5,
            AgentKind::Uav => 6 * self.neighbours + 2 * self.n_uavs,
            AgentKind::Haps => 5 * self.n_iotds,
        }
    }

    pub fn action_width(&self, kind: AgentKind) -> usize {
        match kind {
            AgentKind::Iotd => 1,
            AgentKind::Uav => self.neighbours + 2,
            AgentKind::Haps => self.n_iotds,
        }
    }

    pub fn state_width(&self) -> usize {
        AgentKind::ALL
            .iter()
            .map(|&k| self.count(k) * self.obs_width(k))
            .sum()
    }
}

/// Unit-interval actions for every agent, grouped by kind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Actions {
    pub iotd: Vec<Vec<f64>>,
    pub uav: Vec<Vec<f64>>,
    pub haps: Vec<f64>,
}

impl Actions {
    /// All-zero actions: no offloading, no flight, no allocation.
    pub fn zeros(d: &Dims) -> Self {
        Self {
            iotd: vec![vec![0.0; 1]; d.n_iotds],
            uav: vec![vec![0.0; d.neighbours + 2]; d.n_uavs],
            haps: vec![0.0; d.n_iotds],
        }
    }

    pub fn filled(d: &Dims, v: f64) -> Self {
        Self {
            iotd: vec![vec![v; 1]; d.n_iotds],
            uav: vec![vec![v; d.neighbours + 2]; d.n_uavs],
            haps: vec![v; d.n_iotds],
        }
    }

    /// Builds actions from per-group agent rows (IoTDs, UAVs, HAPS).
    pub fn from_groups(groups: &[Vec<Vec<f64>>]) -> Result<Self, EnvError> {
        if groups.len() != 3 {
            return Err(EnvError::GroupCount {
                expected: 3,
                count: groups.len(),
            });
        }
        let haps = match groups[2].as_slice() {
            [one] => one.clone(),
            other => {
                return Err(EnvError::ActionShape {
                    agent: "haps".into(),
                    expected: 1,
                    got: other.len(),
                })
            }
        };
        Ok(Self {
            iotd: groups[0].clone(),
            uav: groups[1].clone(),
            haps,
        })
    }

    fn validate(&self, d: &Dims) -> Result<(), EnvError> {
        let shape = |agent: String, expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(EnvError::ActionShape { agent, expected, got })
            }
        };
        shape("iotd group".into(), d.n_iotds, self.iotd.len())?;
        shape("uav group".into(), d.n_uavs, self.uav.len())?;
        for (n, a) in self.iotd.iter().enumerate() {
            shape(format!("iotd {n}"), 1, a.len())?;
        }
        for (m, a) in self.uav.iter().enumerate() {
            shape(format!("uav {m}"), d.neighbours + 2, a.len())?;
        }
        shape("haps".into(), d.n_iotds, self.haps.len())?;
        let rows = self
            .iotd
            .iter()
            .enumerate()
            .map(|(n, a)| (format!("iotd {n}"), a.as_slice()))
            .chain(self.uav.iter().enumerate().map(|(m, a)| (format!("uav {m}"), a.as_slice())))
            .chain(std::iter::once(("haps".to_string(), self.haps.as_slice())));
        for (agent, row) in rows {
            if let Some(&value) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(EnvError::ActionValue { agent, value });
            }
        }
        Ok(())
    }
}

/// Maps unit resource fractions to Hz with `f = u * cap / max(1, sum u)`,
/// so the total never exceeds `cap`.
pub fn scale_fractions(unit: &[f64], cap: f64) -> Vec<f64> {
    let total: f64 = unit.iter().sum();
    let denom = total.max(1.0);
    let mut out: Vec<f64> = unit.iter().map(|&u| u * cap / denom).collect();
    // Rounding can push the sum a few ulps past the cap.
    while out.iter().sum::<f64>() > cap {
        out.iter_mut().for_each(|f| *f *= 1.0 - f64::EPSILON);
    }
    out
}

/// Physical UAV action.
#[derive(Debug, Clone, PartialEq)]
pub struct UavAction {
    pub heading: f64,
    pub distance: f64,
    /// CPU per neighbour slot, Hz.
    pub cpu: Vec<f64>,
}

pub fn scale_uav_action(unit: &[f64], d_max: f64, cpu_cap: f64) -> UavAction {
    UavAction {
        heading: unit[0] * std::f64::consts::TAU,
        distance: unit[1] * d_max,
        cpu: scale_fractions(&unit[2..], cpu_cap),
    }
}

/// Per-episode world.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub slot: usize,
    pub iotds: Vec<IotdKinematics>,
    pub uavs: Vec<UavKinematics>,
    pub hotspots: Vec<[f64; 2]>,
    /// Current task of each IoTD, to be split by this slot's action.
    pub tasks: Vec<TaskSet<f64>>,
    pub queues: Vec<IotdQueues>,
    pub flows: FlowLedger,
    /// Offloading ratio chosen in the previous slot.
    pub last_alpha: Vec<f64>,
    /// Each UAV's observed neighbour list; its resource dims map onto it.
    pub neighbours: Vec<Vec<usize>>,
    pub cpu_local: Vec<f64>,
    pub tx_power: Vec<f64>,
    pub bandwidth_uav: Vec<f64>,
    pub cpu_uav_max: Vec<f64>,
    pub iotd_battery: Batteries,
    pub uav_battery: Batteries,
    pub counts: HotspotCounts,
    pub assoc: AssociationMap,
}

type IotdKinematics = crate::mobility::IotdKinematics<f64>;
type UavKinematics = crate::mobility::UavKinematics<f64>;

/// Per-agent rewards with the terms that produced them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Rewards {
    pub iotd: Vec<f64>,
    pub uav: Vec<f64>,
    pub haps: f64,
    pub iotd_delay_penalty: Vec<f64>,
    pub uav_delay_penalty: Vec<f64>,
    pub flyout_penalty: Vec<f64>,
    pub collision_penalty: Vec<f64>,
    pub guide: Vec<f64>,
    pub haps_delay_penalty: f64,
}

impl Rewards {
    pub fn group(&self, kind: AgentKind) -> Vec<f64> {
        match kind {
            AgentKind::Iotd => self.iotd.clone(),
            AgentKind::Uav => self.uav.clone(),
            AgentKind::Haps => vec![self.haps],
        }
    }
}

/// One slot's aggregate metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlotMetrics {
    pub reward_iotd: f64,
    pub reward_uav: f64,
    pub reward_haps: f64,
    pub e_all: f64,
    pub mean_alpha: f64,
    /// Mean edge CPU granted per IoTD, Hz.
    pub mean_f_alloc: f64,
    pub mean_delay: f64,
    pub fairness: f64,
    pub deadline_violations: usize,
    pub queue_violations: usize,
    pub boundary_violations: usize,
    pub collisions: usize,
}

impl SlotMetrics {
    /// Episode aggregate: means of the rates, sums of the counts and the
    /// final slot's fairness.
    pub fn aggregate(rows: &[SlotMetrics]) -> SlotMetrics {
        let n = rows.len().max(1) as f64;
        let mean = |f: fn(&SlotMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let sum = |f: fn(&SlotMetrics) -> usize| rows.iter().map(f).sum::<usize>();
        SlotMetrics {
            reward_iotd: mean(|r| r.reward_iotd),
            reward_uav: mean(|r| r.reward_uav),
            reward_haps: mean(|r| r.reward_haps),
            e_all: mean(|r| r.e_all),
            mean_alpha: mean(|r| r.mean_alpha),
            mean_f_alloc: mean(|r| r.mean_f_alloc),
            mean_delay: mean(|r| r.mean_delay),
            fairness: rows.last().map_or(1.0, |r| r.fairness),
            deadline_violations: sum(|r| r.deadline_violations),
            queue_violations: sum(|r| r.queue_violations),
            boundary_violations: sum(|r| r.boundary_violations),
            collisions: sum(|r| r.collisions),
        }
    }
}

/// Observations of every agent, grouped by kind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observations {
    pub iotd: Vec<Vec<f64>>,
    pub uav: Vec<Vec<f64>>,
    pub haps: Vec<f64>,
}

impl Observations {
    pub fn group(&self, kind: AgentKind) -> Vec<Vec<f64>> {
        match kind {
            AgentKind::Iotd => self.iotd.clone(),
            AgentKind::Uav => self.uav.clone(),
            AgentKind::Haps => vec![self.haps.clone()],
        }
    }

    /// IoTDs by index, then UAVs by index, then the HAPS.
    pub fn global_state(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.iotd.iter().flatten().copied().collect();
        s.extend(self.uav.iter().flatten());
        s.extend(&self.haps);
        s
    }
}

/// Everything a step produces.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observations: Observations,
    pub state: Vec<f64>,
    pub rewards: Rewards,
    pub metrics: SlotMetrics,
    pub energy: EnergyReport,
    pub delays: Vec<DelayReport>,
    /// Long-term delays `(local, offload, edge)` per IoTD, seconds.
    pub longterm: Vec<[f64; 3]>,
    /// CPU each UAV granted this slot, Hz, per neighbour slot.
    pub uav_cpu: Vec<Vec<f64>>,
    pub haps_cpu: Vec<f64>,
    pub alpha: Vec<f64>,
    pub boundary: Vec<f64>,
    pub done: bool,
}

/// Configuration-derived constants.
#[derive(Debug, Clone, PartialEq)]
struct Consts {
    atg: AtgChannel<f64>,
    rotor: Rotor<f64>,
    noise_uav: f64,
    noise_haps: f64,
    gain_ref: f64,
    uav_tx: f64,
    d_max: f64,
    haps: [f64; 2],
    queue_scale: f64,
    diag: f64,
}

pub struct Env {
    pub cfg: ScenarioConfig,
    pub dims: Dims,
    consts: Consts,
    rng: SimRng,
    pub world: WorldState,
}

fn sample_disc<R: Rng + ?Sized>(rng: &mut R, centre: [f64; 2], radius: f64, width: f64) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let a = rng.random::<f64>() * std::f64::consts::TAU;
    [
        (centre[0] + r * a.cos()).clamp(0.0, width),
        (centre[1] + r * a.sin()).clamp(0.0, width),
    ]
}

fn pos(k: &IotdKinematics) -> [f64; 2] {
    [k.x, k.y]
}

fn upos(k: &UavKinematics) -> [f64; 2] {
    [k.x, k.y]
}

/// Hotspot centres, uniform in `[r, W - r]²` and fixed by `layout_seed`.
pub fn hotspot_layout(cfg: &ScenarioConfig) -> Vec<[f64; 2]> {
    let mut rng = make_rng(cfg.layout_seed, LAYOUT_STREAM);
    let w = cfg.area_width;
    let r = cfg.hotspot_radius.min(w / 2.0);
    (0..cfg.n_hotspots)
        .map(|_| [rng.random_range(r..=w - r), rng.random_range(r..=w - r)])
        .collect()
}

/// Indices of the `k` IoTDs nearest to `at`, nearest first.
fn nearest(iotds: &[IotdKinematics], at: [f64; 2], k: usize) -> Vec<usize> {
    let mut idx: Vec<(usize, f64)> = iotds
        .iter()
        .enumerate()
        .map(|(n, q)| (n, horizontal_distance(pos(q), at)))
        .collect();
    idx.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    idx.into_iter().take(k).map(|(n, _)| n).collect()
}

impl Env {
    /// Builds an environment and resets it with `seed`.
    pub fn new(cfg: ScenarioConfig, seed: u64) -> Result<Self, crate::config::ConfigError> {
        cfg.validate()?;
        let consts = Consts {
            atg: AtgChannel::from_config(&cfg),
            rotor: Rotor::from_config(&cfg),
            noise_uav: dbm_to_watts(cfg.noise_uav_dbm),
            noise_haps: dbm_to_watts(cfg.noise_haps_dbm),
            gain_ref: db_to_linear(cfg.ref_gain_haps_db),
            uav_tx: dbm_to_watts(cfg.tx_power_uav_dbm),
            d_max: cfg.d_max(),
            haps: cfg.haps_position(),
            queue_scale: (4.0 * cfg.task_size_bits.max).max(1.0),
            diag: cfg.area_width * std::f64::consts::SQRT_2,
        };
        let dims = Dims::new(&cfg);
        let mut rng = make_rng(seed, WORLD_STREAM);
        let world = Self::fresh_world(&cfg, &mut rng);
        Ok(Self {
            cfg,
            dims,
            consts,
            rng,
            world,
        })
    }

    fn fresh_world(cfg: &ScenarioConfig, rng: &mut SimRng) -> WorldState {
        let w = cfg.area_width;
        let hotspots = hotspot_layout(cfg);
        let in_hotspots = (cfg.n_iotds as f64 * cfg.hotspot_fraction).round() as usize;
        let iotds = (0..cfg.n_iotds)
            .map(|n| {
                let [x, y] = if n < in_hotspots {
                    let h = rng.random_range(0..hotspots.len());
                    sample_disc(rng, hotspots[h], cfg.hotspot_radius, w)
                } else {
                    [rng.random_range(0.0..=w), rng.random_range(0.0..=w)]
                };
                IotdKinematics {
                    x,
                    y,
                    speed: cfg.mob_mean_speed,
                    heading: rng.random::<f64>() * std::f64::consts::TAU,
                }
            })
            .collect::<Vec<_>>();
        let uavs = (0..cfg.n_uavs)
            .map(|m| {
                let [x, y] = cfg
                    .uav_starts
                    .get(m)
                    .copied()
                    .unwrap_or_else(|| [rng.random_range(0.0..=w), rng.random_range(0.0..=w)]);
                UavKinematics::at(x, y, cfg.uav_altitude)
            })
            .collect::<Vec<_>>();
        let cpu_local = (0..cfg.n_iotds).map(|_| cfg.cpu_iotd.sample(rng)).collect();
        let tx_power = (0..cfg.n_iotds)
            .map(|_| dbm_to_watts(cfg.tx_power_iotd_dbm.sample(rng)))
            .collect();
        let bandwidth_uav = (0..cfg.n_uavs).map(|_| cfg.bandwidth_uav.sample(rng)).collect();
        let cpu_uav_max = (0..cfg.n_uavs).map(|_| cfg.cpu_uav_max.sample(rng)).collect();
        let tasks = generate_tasks(rng, cfg, cfg.n_iotds);
        let neighbours = uavs
            .iter()
            .map(|u| nearest(&iotds, upos(u), cfg.uav_capacity))
            .collect();
        WorldState {
            slot: 0,
            iotds,
            uavs,
            hotspots,
            tasks,
            queues: vec![IotdQueues::new(cfg.n_uavs); cfg.n_iotds],
            flows: FlowLedger::default(),
            last_alpha: vec![0.0; cfg.n_iotds],
            neighbours,
            cpu_local,
            tx_power,
            bandwidth_uav,
            cpu_uav_max,
            iotd_battery: Batteries::new(cfg.n_iotds, cfg.battery_iotd),
            uav_battery: Batteries::new(cfg.n_uavs, cfg.battery_uav),
            counts: HotspotCounts::new(cfg.n_hotspots, cfg.n_uavs),
            assoc: AssociationMap::all_haps(cfg.n_iotds, cfg.n_uavs),
        }
    }

    /// Starts a new episode from `seed`; returns the initial observations.
    pub fn reset(&mut self, seed: u64) -> Observations {
        self.rng = make_rng(seed, WORLD_STREAM);
        self.world = Self::fresh_world(&self.cfg, &mut self.rng);
        self.observe()
    }

    pub fn done(&self) -> bool {
        self.world.slot >= self.cfg.episode_length
    }

    fn norm_queue(&self, bits: f64) -> f64 {
        (bits / self.consts.queue_scale).clamp(0.0, 1.0)
    }

    fn task_features(&self, n: usize) -> [f64; 5] {
        let w = &self.world;
        let t = &w.tasks[n];
        let q = &w.queues[n];
        [
            w.last_alpha[n],
            self.cfg.task_size_bits.normalize(t.size_bits),
            self.cfg.cycles_per_bit.normalize(t.cycles_per_bit),
            self.cfg.deadline.normalize(t.deadline),
            self.norm_queue(q.edge_side_backlog()),
        ]
    }

    pub fn observe(&self) -> Observations {
        let w = &self.world;
        let iotd = (0..self.dims.n_iotds)
            .map(|n| {
                let t = &w.tasks[n];
                let q = &w.queues[n];
                vec![
                    self.cfg.task_size_bits.normalize(t.size_bits),
                    self.cfg.cycles_per_bit.normalize(t.cycles_per_bit),
                    self.cfg.deadline.normalize(t.deadline),
                    self.norm_queue(q.local),
                    self.norm_queue(q.offload),
                ]
            })
            .collect();
        let width = self.cfg.area_width;
        let k = self.dims.neighbours;
        let uav = (0..self.dims.n_uavs)
            .map(|m| {
                let list = &w.neighbours[m];
                let mut o = vec![0.0; self.dims.obs_width(AgentKind::Uav)];
                for (i, &n) in list.iter().enumerate() {
                    o[i] = (horizontal_distance(pos(&w.iotds[n]), upos(&w.uavs[m])) / self.consts.diag).min(1.0);
                }
                for (j, u) in w.uavs.iter().enumerate() {
                    o[k + 2 * j] = u.x / width;
                    o[k + 2 * j + 1] = u.y / width;
                }
                let base = k + 2 * self.dims.n_uavs;
                for (i, &n) in list.iter().enumerate() {
                    for (f, v) in self.task_features(n).into_iter().enumerate() {
                        o[base + f * k + i] = v;
                    }
                }
                o
            })
            .collect();
        let n_iotds = self.dims.n_iotds;
        let mut haps = vec![0.0; 5 * n_iotds];
        for n in 0..n_iotds {
            for (f, v) in self.task_features(n).into_iter().enumerate() {
                haps[f * n_iotds + n] = v;
            }
        }
        Observations { iotd, uav, haps }
    }

    /// Advances the world by one slot.
    pub fn step(&mut self, actions: &Actions) -> Result<StepOutcome, EnvError> {
        if self.done() {
            return Err(EnvError::EpisodeOver);
        }
        actions.validate(&self.dims)?;
        let cfg = self.cfg.clone();
        let c = self.consts.clone();
        let (n_iotds, n_uavs) = (self.dims.n_iotds, self.dims.n_uavs);
        let tau = cfg.slot_duration;

        let alpha: Vec<f64> = actions.iotd.iter().map(|a| a[0]).collect();
        let uav_actions: Vec<UavAction> = actions
            .uav
            .iter()
            .zip(&self.world.cpu_uav_max)
            .map(|(a, &cap)| scale_uav_action(a, c.d_max, cap))
            .collect();
        let haps_cpu = scale_fractions(&actions.haps, cfg.cpu_haps_max);

        // Mobility.
        let rng = &mut self.rng;
        let w = &mut self.world;
        for k in w.iotds.iter_mut() {
            *k = step_iotd_random(*k, &cfg, rng);
        }
        let mut boundary = vec![0.0; n_uavs];
        for (m, a) in uav_actions.iter().enumerate() {
            let (k, v) = step_uav(w.uavs[m], a.heading, a.distance, cfg.area_width, c.d_max)
                .map_err(|e| EnvError::Model(e.to_string()))?;
            w.uavs[m] = k;
            boundary[m] = v;
        }
        let iotd_pos: Vec<[f64; 2]> = w.iotds.iter().map(pos).collect();
        let uav_pos: Vec<[f64; 2]> = w.uavs.iter().map(upos).collect();
        let deadlines: Vec<f64> = w.tasks.iter().map(|t| t.deadline).collect();

        // Association, allocation and relaying.
        let mut assoc = associate(&iotd_pos, &deadlines, &uav_pos, cfg.uav_coverage_radius, cfg.uav_capacity);
        let mut uav_alloc = vec![vec![0.0; n_uavs]; n_iotds];
        for (m, a) in uav_actions.iter().enumerate() {
            for (i, &n) in w.neighbours[m].iter().enumerate() {
                uav_alloc[n][m] = a.cpu[i];
            }
        }
        let demand: Vec<f64> = (0..n_iotds)
            .map(|n| match assoc.serving[n] {
                Server::Uav(m) => {
                    let t = &w.tasks[n];
                    t.cycles_per_bit * (w.queues[n].edge[m + 1] + alpha[n] * t.size_bits) / tau
                }
                Server::Haps => 0.0,
            })
            .collect();
        decide_relay(&mut assoc, &demand, &deadlines, &w.cpu_uav_max);

        // Rates.
        let links = link_distances(&iotd_pos, &w.uavs, c.haps, cfg.haps_altitude);
        let active: Vec<bool> = (0..n_iotds)
            .map(|n| w.queues[n].offload > 0.0 || alpha[n] * w.tasks[n].size_bits > 0.0)
            .collect();
        let mut offload_rate = vec![0.0; n_iotds];
        for m in 0..n_uavs {
            let members: Vec<usize> = assoc.served_by(m).collect();
            if members.is_empty() {
                continue;
            }
            let mut rx = Vec::with_capacity(members.len());
            for &n in &members {
                let g = c
                    .atg
                    .budget(links.iotd_uav[n][m], cfg.uav_altitude)
                    .map_err(|e| EnvError::Model(e.to_string()))?
                    .gain;
                rx.push(w.tx_power[n] * g);
            }
            let act: Vec<bool> = members.iter().map(|&n| active[n]).collect();
            let rates = uplink_rates(&rx, &act, c.noise_uav, w.bandwidth_uav[m]);
            for (&n, r) in members.iter().zip(rates) {
                offload_rate[n] = r;
            }
        }
        let haps_members: Vec<usize> = (0..n_iotds).filter(|&n| assoc.serving[n] == Server::Haps).collect();
        let relaying: Vec<bool> = (0..n_uavs)
            .map(|m| {
                (0..n_iotds).any(|n| {
                    (assoc.relay[n] && assoc.serving[n] == Server::Uav(m))
                        || (w.queues[n].relay > 0.0 && w.queues[n].relay_via == Some(m))
                })
            })
            .collect();
        let haps_direct_active = haps_members.iter().any(|&n| active[n]);
        let bw_haps = if haps_direct_active && relaying.iter().any(|&r| r) {
            cfg.bandwidth_haps / 2.0
        } else {
            cfg.bandwidth_haps
        };
        if !haps_members.is_empty() {
            let mut rx = Vec::with_capacity(haps_members.len());
            for &n in &haps_members {
                let g = reference_gain(links.iotd_haps[n], c.gain_ref, cfg.pathloss_exponent)
                    .map_err(|e| EnvError::Model(e.to_string()))?;
                rx.push(w.tx_power[n] * g);
            }
            let act: Vec<bool> = haps_members.iter().map(|&n| active[n]).collect();
            for (&n, r) in haps_members.iter().zip(uplink_rates(&rx, &act, c.noise_haps, bw_haps)) {
                offload_rate[n] = r;
            }
        }
        let mut uav_rx = Vec::with_capacity(n_uavs);
        for m in 0..n_uavs {
            let g = reference_gain(links.uav_haps[m], c.gain_ref, cfg.pathloss_exponent)
                .map_err(|e| EnvError::Model(e.to_string()))?;
            uav_rx.push(c.uav_tx * g);
        }
        let relay_rate = uplink_rates(&uav_rx, &relaying, c.noise_haps, bw_haps);

        // Queues.
        let mut delays = Vec::with_capacity(n_iotds);
        let mut longterm = Vec::with_capacity(n_iotds);
        let mut energy_in = Vec::with_capacity(n_iotds);
        let mut granted = vec![0.0; n_iotds];
        let qerr = |e: crate::queues::QueueError| EnvError::Model(e.to_string());
        for n in 0..n_iotds {
            let task = w.tasks[n];
            let s = task.cycles_per_bit;
            let (j_local, j_off) = split_task(task.size_bits, alpha[n]).map_err(qerr)?;
            let q = &mut w.queues[n];

            let local = step_local_queue(q.local, j_local, w.cpu_local[n], s, tau).map_err(qerr)?;
            w.flows.local.record(&local, j_local);
            q.local = local.backlog;

            let off = serve(q.offload, tau * offload_rate[n], j_off);
            w.flows.offload.record(&off, j_off);
            q.offload = off.backlog;
            let sent = off.served;

            let relayed = assoc.relay[n];
            let target = assoc.serving[n].column();
            if relayed {
                if let Server::Uav(m) = assoc.serving[n] {
                    if sent > 0.0 || q.relay_via.is_none() {
                        q.relay_via = Some(m);
                    }
                }
            }
            let via_rate = q.relay_via.map_or(0.0, |m| relay_rate[m]);

            // The HAPS share of IoTD n is split between its direct and
            // relayed buffers in proportion to their pending work.
            let relay_feed = if relayed { sent } else { 0.0 };
            let first_stage = q.relay.min(tau * via_rate);
            let direct_pending = q.edge[0] + if !relayed && target == 0 { sent } else { 0.0 };
            let relay_pending = q.relay_edge + first_stage;
            let share = if direct_pending + relay_pending > 0.0 {
                direct_pending / (direct_pending + relay_pending)
            } else {
                1.0
            };
            let mut alloc = vec![0.0; n_uavs + 1];
            alloc[0] = haps_cpu[n] * share;
            alloc[1..].copy_from_slice(&uav_alloc[n]);
            let haps_relay_alloc = haps_cpu[n] - alloc[0];

            let (r1, r2) = step_relay_queues(
                q.relay,
                q.relay_edge,
                relay_feed,
                via_rate,
                haps_relay_alloc,
                s,
                tau,
                relayed,
            )
            .map_err(qerr)?;
            w.flows.relay.record(&r1, relay_feed);
            w.flows.relay_edge.record(&r2, r1.served);
            q.relay = r1.backlog;
            q.relay_edge = r2.backlog;
            if q.relay <= 0.0 && q.relay_edge <= 0.0 && !relayed {
                q.relay_via = None;
            }

            let mut edge_carried = 0.0;
            for (col, &f) in alloc.iter().enumerate() {
                let arrivals = if !relayed && col == target { sent } else { 0.0 };
                let e = step_edge_queue(q.edge[col], arrivals, f, s, tau).map_err(qerr)?;
                w.flows.edge.record(&e, arrivals);
                q.edge[col] = e.backlog;
                edge_carried += e.carried;
            }

            let lt = [
                q.lt_local.update(local.carried, j_local, tau),
                q.lt_offload.update(off.carried, j_off, tau),
                q.lt_edge.update(edge_carried + r1.carried + r2.carried, sent, tau),
            ];
            longterm.push(lt);

            let inp = DelayInputs {
                local_backlog: q.local,
                offload_backlog: q.offload,
                edge_backlog: &q.edge,
                edge_alloc: &alloc,
                relay_backlog: q.relay,
                relay_edge_backlog: q.relay_edge,
                cpu_local: w.cpu_local[n],
                offload_rate: offload_rate[n],
                relay_rate: via_rate,
                haps_alloc: haps_relay_alloc,
                cycles_per_bit: s,
                deadline: task.deadline,
                slot: tau,
            };
            delays.push(compute_delays(&inp));
            granted[n] = alloc.iter().sum::<f64>() + haps_relay_alloc;
            energy_in.push((edge_delays(&inp), alloc, haps_relay_alloc, q.relay_via));
        }

        // Energy.
        let mut iotd_energy = Vec::with_capacity(n_iotds);
        let mut relay_tx_by_uav = vec![0.0; n_uavs];
        for n in 0..n_iotds {
            let (ed, alloc, hr, via) = &energy_in[n];
            let e = compute_energies(
                &delays[n],
                &EnergyInputs {
                    cpu_local: w.cpu_local[n],
                    tx_power: w.tx_power[n],
                    edge_delays: ed,
                    edge_alloc: alloc,
                    haps_relay_alloc: *hr,
                    uav_tx_power: c.uav_tx,
                },
                &cfg,
            );
            if let Some(m) = via {
                relay_tx_by_uav[*m] += e.relay_tx;
            }
            iotd_energy.push(e);
        }
        let mut fly = Vec::with_capacity(n_uavs);
        let mut hover = Vec::with_capacity(n_uavs);
        for u in &w.uavs {
            let (f, h) = trajectory_energy(u.last_distance, cfg.uav_speed, tau, &c.rotor)
                .map_err(|e| EnvError::Model(e.to_string()))?;
            fly.push(f);
            hover.push(h);
        }
        let energy = EnergyReport::new(iotd_energy, fly, hover, cfg.energy_weight);
        update_batteries(&mut w.iotd_battery, &mut w.uav_battery, &energy, &relay_tx_by_uav);

        // Rewards.
        let omega = cfg.energy_weight;
        let mut rewards = Rewards {
            iotd: vec![0.0; n_iotds],
            uav: vec![0.0; n_uavs],
            iotd_delay_penalty: vec![0.0; n_iotds],
            uav_delay_penalty: vec![0.0; n_uavs],
            flyout_penalty: vec![0.0; n_uavs],
            collision_penalty: vec![0.0; n_uavs],
            guide: vec![0.0; n_uavs],
            ..Rewards::default()
        };
        let edge_excess: Vec<f64> = longterm.iter().map(|l| relu(l[2] - cfg.queue_bound_edge)).collect();
        for n in 0..n_iotds {
            let traj = assoc.serving[n].uav().map_or(0.0, |m| energy.trajectory(m));
            let p = cfg.psi1 * relu(longterm[n][0] - cfg.queue_bound_local)
                + cfg.psi2 * relu(longterm[n][1] - cfg.queue_bound_offload);
            rewards.iotd_delay_penalty[n] = p;
            rewards.iotd[n] = -(energy.iotds[n].com2 + omega * traj + p);
        }
        let pair = uav_pair_distances(&w.uavs);
        let mut collisions = 0;
        for m in 0..n_uavs {
            let served: Vec<usize> = assoc.served_by(m).collect();
            let com2: f64 = served.iter().map(|&n| energy.iotds[n].com2).sum();
            let p_delay = cfg.psi3 * served.iter().map(|&n| edge_excess[n]).sum::<f64>();
            let p_fly = cfg.mu_flyout * boundary[m];
            let mut intrusion = 0.0;
            for j in (0..n_uavs).filter(|&j| j != m) {
                let v = ((pair[m][j] - cfg.d_min) / cfg.d_min).min(0.0);
                intrusion += v.abs();
                if j > m && v < 0.0 {
                    collisions += 1;
                }
            }
            let p_col = cfg.mu_collision * intrusion;
            let covered = iotd_pos
                .iter()
                .filter(|&&q| horizontal_distance(q, uav_pos[m]) <= cfg.uav_coverage_radius)
                .count()
                .min(cfg.uav_capacity);
            let guide = cfg.mu_guide * covered as f64 / cfg.uav_capacity as f64;
            rewards.uav_delay_penalty[m] = p_delay;
            rewards.flyout_penalty[m] = p_fly;
            rewards.collision_penalty[m] = p_col;
            rewards.guide[m] = guide;
            rewards.uav[m] = -(com2 + omega * energy.trajectory(m) + p_delay + p_fly + p_col) + guide;
        }
        let haps_com2: f64 = haps_members.iter().map(|&n| energy.iotds[n].com2).sum();
        let haps_handled = (0..n_iotds).filter(|&n| assoc.serving[n] == Server::Haps || assoc.relay[n]);
        rewards.haps_delay_penalty = cfg.psi4 * haps_handled.map(|n| edge_excess[n]).sum::<f64>();
        rewards.haps = -haps_com2 - rewards.haps_delay_penalty;

        // Fairness and bookkeeping.
        w.counts.record(&assoc, &iotd_pos, &w.hotspots, 2.0 * cfg.hotspot_radius);
        let queue_violations = longterm
            .iter()
            .map(|l| {
                usize::from(l[0] > cfg.queue_bound_local)
                    + usize::from(l[1] > cfg.queue_bound_offload)
                    + usize::from(l[2] > cfg.queue_bound_edge)
            })
            .sum();
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let metrics = SlotMetrics {
            reward_iotd: mean(&rewards.iotd),
            reward_uav: mean(&rewards.uav),
            reward_haps: rewards.haps,
            e_all: energy.all,
            mean_alpha: mean(&alpha),
            mean_f_alloc: mean(&granted),
            mean_delay: mean(&delays.iter().map(|d| d.total).collect::<Vec<_>>()),
            fairness: w.counts.fairness(),
            deadline_violations: delays.iter().filter(|d| d.deadline_violated).count(),
            queue_violations,
            boundary_violations: boundary.iter().filter(|&&b| b > 0.0).count(),
            collisions,
        };

        w.last_alpha = alpha.clone();
        w.assoc = assoc;
        w.slot += 1;
        w.tasks = generate_tasks(&mut self.rng, &cfg, n_iotds);
        let iotds = w.iotds.clone();
        w.neighbours = w
            .uavs
            .iter()
            .map(|u| nearest(&iotds, upos(u), cfg.uav_capacity))
            .collect();

        let observations = self.observe();
        let state = observations.global_state();
        Ok(StepOutcome {
            observations,
            state,
            rewards,
            metrics,
            energy,
            delays,
            longterm,
            uav_cpu: uav_actions.into_iter().map(|a| a.cpu).collect(),
            haps_cpu,
            alpha,
            boundary,
            done: self.done(),
        })
    }

    /// Runs a full episode with uniformly random unit actions.
    pub fn random_episode<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<StepOutcome>, EnvError> {
        let mut out = Vec::with_capacity(self.cfg.episode_length);
        while !self.done() {
            let a = random_actions(&self.dims, rng);
            out.push(self.step(&a)?);
        }
        Ok(out)
    }
}

pub fn random_actions<R: Rng + ?Sized>(d: &Dims, rng: &mut R) -> Actions {
    let mut row = |k: usize| (0..k).map(|_| rng.random::<f64>()).collect::<Vec<_>>();
    Actions {
        iotd: (0..d.n_iotds).map(|_| row(1)).collect(),
        uav: (0..d.n_uavs).map(|_| row(d.neighbours + 2)).collect(),
        haps: row(d.n_iotds),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Range;
    use approx::assert_relative_eq;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            n_iotds: 12,
            n_uavs: 2,
            n_hotspots: 2,
            episode_length: 10,
            uav_starts: vec![[300.0, 300.0], [700.0, 700.0]],
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn reset_is_deterministic_and_uses_starts() {
        let a = Env::new(ScenarioConfig::default(), 3).unwrap();
        let b = Env::new(ScenarioConfig::default(), 3).unwrap();
        assert_eq!(a.world, b.world);
        let starts: Vec<[f64; 2]> = a.world.uavs.iter().map(|u| [u.x, u.y]).collect();
        assert_eq!(starts, vec![[100.0, 800.0], [200.0, 100.0], [500.0, 800.0]]);
        let obs = a.observe();
        assert_eq!(obs.iotd.len(), 70);
        assert!(obs.iotd.iter().all(|o| o.len() == 5));
        assert_eq!(obs.global_state().len(), a.dims.state_width());
    }

    #[test]
    fn scaling() {
        let f = scale_fractions(&[1.0; 4], 100e9);
        assert!(f.iter().all(|&x| (x - 25e9).abs() < 1.0));
        let f = scale_fractions(&[0.2, 0.3], 20e9);
        assert_relative_eq!(f[0], 4e9, max_relative = 1e-12);
        assert_relative_eq!(f[1], 6e9, max_relative = 1e-12);
        let a = scale_uav_action(&[0.0; 4], 50.0, 20e9);
        assert_eq!((a.heading, a.distance, a.cpu.clone()), (0.0, 0.0, vec![0.0, 0.0]));
        let a = scale_uav_action(&[1.0, 1.0, 0.5, 0.5], 50.0, 20e9);
        assert_relative_eq!(a.heading, std::f64::consts::TAU);
        assert_eq!(a.distance, 50.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut env = Env::new(small(), 1).unwrap();
        let mut a = Actions::zeros(&env.dims);
        a.uav[1].pop();
        let err = env.step(&a).unwrap_err();
        assert!(err.to_string().contains("uav 1"), "{err}");
        let mut a = Actions::zeros(&env.dims);
        a.haps[0] = 1.5;
        assert!(env.step(&a).unwrap_err().to_string().contains("haps"));
    }

    #[test]
    fn zero_action_rewards() {
        let cfg = small();
        let mut env = Env::new(cfg.clone(), 5).unwrap();
        let a = Actions::zeros(&env.dims);
        for _ in 0..cfg.episode_length {
            let o = env.step(&a).unwrap();
            for (n, r) in o.rewards.iotd.iter().enumerate() {
                let e = &o.energy.iotds[n];
                assert_eq!((e.offload_tx, e.edge, e.relay_tx, e.relay_edge), (0.0, 0.0, 0.0, 0.0));
                let traj = env.world.assoc.serving[n].uav().map_or(0.0, |m| o.energy.trajectory(m));
                let expect = -(e.local + cfg.energy_weight * traj + o.rewards.iotd_delay_penalty[n]);
                assert_eq!(*r, expect);
            }
            for q in &env.world.queues {
                assert_eq!(q.offload + q.edge.iter().sum::<f64>() + q.relay + q.relay_edge, 0.0);
            }
            for m in 0..cfg.n_uavs {
                assert_eq!(o.energy.fly[m], 0.0);
                assert_relative_eq!(o.energy.hover[m], 336.98, max_relative = 1e-12);
            }
        }
        assert!(env.done());
        assert_eq!(env.step(&a).unwrap_err(), EnvError::EpisodeOver);
    }

    #[test]
    fn reward_energy_reconciles_with_report() {
        let cfg = small();
        let mut env = Env::new(cfg.clone(), 9).unwrap();
        let mut rng = make_rng(9, 7);
        for o in env.random_episode(&mut rng).unwrap() {
            let iotd_side: f64 = (0..cfg.n_iotds)
                .map(|n| -o.rewards.iotd[n] - o.rewards.iotd_delay_penalty[n])
                .sum();
            let traj_by_assoc = iotd_side - o.energy.iotds.iter().map(|e| e.com2).sum::<f64>();
            assert!(traj_by_assoc >= -1e-9);
            let com2: f64 = o.energy.iotds.iter().map(|e| e.com2).sum();
            let traj: f64 = (0..cfg.n_uavs).map(|m| o.energy.trajectory(m)).sum();
            assert_eq!(o.energy.all, com2 + cfg.energy_weight * traj);
        }
    }

    #[test]
    fn wall_move_feeds_flyout_penalty() {
        let cfg = ScenarioConfig {
            uav_starts: vec![[990.0, 500.0], [100.0, 100.0]],
            ..small()
        };
        let mut env = Env::new(cfg.clone(), 2).unwrap();
        let mut a = Actions::zeros(&env.dims);
        a.uav[0][1] = 1.0; // heading 0, full distance
        let o = env.step(&a).unwrap();
        assert!((o.boundary[0] - 40.0).abs() < 1e-9);
        assert_relative_eq!(o.rewards.flyout_penalty[0], cfg.mu_flyout * 40.0, max_relative = 1e-9);
        assert_eq!(o.metrics.boundary_violations, 1);
    }

    #[test]
    fn collision_penalty_half_intrusion() {
        let cfg = ScenarioConfig {
            uav_starts: vec![[500.0, 500.0], [510.0, 500.0]],
            ..small()
        };
        let mut env = Env::new(cfg.clone(), 2).unwrap();
        let o = env.step(&Actions::zeros(&env.dims)).unwrap();
        assert_relative_eq!(o.rewards.collision_penalty[0], cfg.mu_collision * 0.5, max_relative = 1e-12);
        assert_eq!(o.metrics.collisions, 1);
    }

    #[test]
    fn zero_tasks_leave_only_trajectory_energy() {
        let cfg = ScenarioConfig {
            task_size_bits: Range::point(0.0),
            ..small()
        };
        let mut env = Env::new(cfg.clone(), 4).unwrap();
        let mut rng = make_rng(4, 1);
        for o in env.random_episode(&mut rng).unwrap() {
            let traj: f64 = (0..cfg.n_uavs).map(|m| o.energy.trajectory(m)).sum();
            assert_eq!(o.energy.all, cfg.energy_weight * traj);
        }
    }

    #[test]
    fn invariants_over_random_runs() {
        let cfg = small();
        let mut env = Env::new(cfg.clone(), 11).unwrap();
        let mut rng = make_rng(11, 3);
        for o in env.random_episode(&mut rng).unwrap() {
            for (m, cpu) in o.uav_cpu.iter().enumerate() {
                assert!(cpu.iter().sum::<f64>() <= env.world.cpu_uav_max[m]);
            }
            assert!(o.haps_cpu.iter().sum::<f64>() <= cfg.cpu_haps_max);
            for d in &o.delays {
                assert!(d.components().iter().all(|&t| (0.0..=cfg.slot_duration).contains(&t)));
            }
            for v in o.state.iter() {
                assert!((0.0..=1.0).contains(v), "{v}");
            }
            assert!(o.rewards.guide.iter().all(|&g| (0.0..=cfg.mu_guide).contains(&g)));
            assert!(o.rewards.iotd.iter().chain(&o.rewards.uav).all(|r| r.is_finite()));
        }
        assert!(env.world.flows.max_imbalance(&env.world.queues) < 1e-9);
    }
}
