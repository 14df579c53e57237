//! Rollout collection, per-group PPO updates, deterministic evaluation and
//! checkpointing.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use super::gae::{compute_gae, normalize_advantages};
use super::loss::{actor_loss, critic_loss, ActorBatch};
use super::value_norm::ValueNorm;
use crate::config::{make_rng, ConfigError, ScenarioConfig, TrainConfig, Variant};
use crate::env::{Actions, AgentKind, Dims, Env, EnvError, Observations, SlotMetrics};
use crate::nn::{clip_grad_norm, Adam, Checkpoint, Head, Mlp, NnError};

/// RNG stream for action sampling during a rollout.
pub const POLICY_STREAM: u64 = 1;
/// RNG stream for network initialization.
pub const INIT_STREAM: u64 = 2;
/// RNG stream for minibatch shuffling.
pub const SHUFFLE_STREAM: u64 = 3;

const ACTOR_OUTPUT_GAIN: f64 = 0.01;
const CRITIC_OUTPUT_GAIN: f64 = 1.0;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite {what} loss for the {group} group at episode {episode}, epoch {epoch}")]
    NonFinite {
        episode: usize,
        epoch: usize,
        group: &'static str,
        what: &'static str,
    },
    #[error("checkpoint does not fit the scenario: {0}")]
    Shape(String),
    #[error("{0}")]
    Hook(String),
}

/// World seed of episode `e` for a run seeded with `base`.
pub fn episode_seed(base: u64, episode: usize) -> u64 {
    base ^ (episode as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn head_for(variant: Variant) -> Head {
    match variant {
        Variant::MappoNd => Head::Gaussian,
        Variant::MappoBd | Variant::PoMappoBd => Head::Beta,
    }
}

/// Shared actor and critic of one agent type, with their optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentGroup {
    pub kind: AgentKind,
    pub head: Head,
    pub actor: Mlp<f64>,
    pub critic: Mlp<f64>,
    pub actor_opt: Adam<f64>,
    pub critic_opt: Adam<f64>,
    pub value_norm: ValueNorm<f64>,
    pub members: usize,
    pub obs_dim: usize,
    /// Dimensions produced by the actor.
    pub action_dim: usize,
    /// Leading environment dimensions drawn uniformly instead of learned.
    pub random_dims: usize,
    pub gamma: f64,
}

impl AgentGroup {
    /// Unit action for the environment and the stored (learned) action.
    fn act<R: Rng + ?Sized>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> Result<Act, NnError> {
        let logits = self.actor.predict(obs)?;
        let stored = if deterministic {
            self.head.mode(&logits)
        } else {
            self.head.sample(&logits, rng)
        };
        let log_prob = self.head.log_prob(&logits, &stored);
        let mut unit: Vec<f64> = (0..self.random_dims).map(|_| rng.random::<f64>()).collect();
        unit.extend(self.head.to_unit(&stored));
        Ok(Act { unit, stored, log_prob })
    }

    /// Critic estimate for one member, in return units.
    fn value(&self, state: &[f64], own: &[f64]) -> Result<f64, NnError> {
        let x = critic_input(state, own);
        Ok(self.value_norm.denormalize(self.critic.predict(&x)?[0]))
    }
}

/// The critic reads the global state followed by the member's own
/// observation, so members sharing a critic still get their own baseline.
fn critic_input(state: &[f64], own: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(state.len() + own.len());
    x.extend_from_slice(state);
    x.extend_from_slice(own);
    x
}

struct Act {
    unit: Vec<f64>,
    stored: Vec<f64>,
    log_prob: f64,
}

/// Actors and critics of all three agent types.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub variant: Variant,
    pub dims: Dims,
    /// IoTD, UAV and HAPS groups, in that order.
    pub groups: Vec<AgentGroup>,
}

impl Policy {
    pub fn new(scenario: &ScenarioConfig, train: &TrainConfig) -> Self {
        let dims = Dims::new(scenario);
        let mut rng = make_rng(train.seed, INIT_STREAM);
        let head = head_for(train.variant);
        let state_w = dims.state_width();
        let groups = AgentKind::ALL
            .iter()
            .map(|&kind| {
                let random_dims = if kind == AgentKind::Uav && train.variant == Variant::PoMappoBd {
                    2
                } else {
                    0
                };
                let obs_dim = dims.obs_width(kind);
                let action_dim = dims.action_width(kind) - random_dims;
                let mut actor_sizes = vec![obs_dim];
                actor_sizes.extend(&train.hidden_sizes);
                actor_sizes.push(2 * action_dim);
                let mut critic_sizes = vec![state_w + obs_dim];
                critic_sizes.extend(&train.hidden_sizes);
                critic_sizes.push(1);
                let actor = Mlp::new(&actor_sizes, ACTOR_OUTPUT_GAIN, &mut rng);
                let critic = Mlp::new(&critic_sizes, CRITIC_OUTPUT_GAIN, &mut rng);
                let (alr, clr) = match kind {
                    AgentKind::Iotd => (train.actor_lr_iotd, train.critic_lr_iotd),
                    AgentKind::Uav => (train.actor_lr_uav, train.critic_lr_uav),
                    AgentKind::Haps => (train.actor_lr_haps, train.critic_lr_haps),
                };
                AgentGroup {
                    kind,
                    head,
                    actor_opt: Adam::new(actor.num_params(), alr),
                    critic_opt: Adam::new(critic.num_params(), clr),
                    actor,
                    critic,
                    value_norm: ValueNorm::new(train.value_normalization),
                    members: dims.count(kind),
                    obs_dim,
                    action_dim,
                    random_dims,
                    gamma: train.gamma,
                }
            })
            .collect();
        Self {
            variant: train.variant,
            dims,
            groups,
        }
    }

    fn actions<R: Rng + ?Sized>(
        &self,
        obs: &Observations,
        deterministic: bool,
        rng: &mut R,
    ) -> Result<Vec<Vec<Act>>, NnError> {
        self.groups
            .iter()
            .map(|g| {
                obs.group(g.kind)
                    .iter()
                    .map(|o| g.act(o, deterministic, rng))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect()
    }

    /// Environment-ready unit actions per group, as used in rollouts
    /// (`deterministic = false`) or evaluation.
    pub fn unit_actions<R: Rng + ?Sized>(
        &self,
        obs: &Observations,
        deterministic: bool,
        rng: &mut R,
    ) -> Result<Vec<Vec<Vec<f64>>>, NnError> {
        Ok(self
            .actions(obs, deterministic, rng)?
            .into_iter()
            .map(|g| g.into_iter().map(|a| a.unit).collect())
            .collect())
    }

    pub fn group(&self, kind: AgentKind) -> &AgentGroup {
        &self.groups[kind as usize]
    }

    pub fn to_checkpoint(&self, ck: &mut Checkpoint) {
        ck.put_text("variant", self.variant.as_str());
        ck.put_ints(
            "dims",
            &[self.dims.n_iotds as u64, self.dims.n_uavs as u64, self.dims.neighbours as u64],
        );
        for g in &self.groups {
            let p = g.kind.as_str();
            ck.put_mlp(&format!("{p}.actor"), &g.actor);
            ck.put_mlp(&format!("{p}.critic"), &g.critic);
            ck.put_adam(&format!("{p}.actor_opt"), &g.actor_opt);
            ck.put_adam(&format!("{p}.critic_opt"), &g.critic_opt);
            let vn = &g.value_norm;
            ck.put_floats(&format!("{p}.value_norm"), &[vn.mean, vn.var, vn.count]);
            ck.put_ints(&format!("{p}.value_norm.enabled"), &[vn.enabled as u64]);
            ck.put_floats(&format!("{p}.gamma"), &[g.gamma]);
        }
    }

    /// Restores a policy and checks every network against `scenario`.
    pub fn from_checkpoint(ck: &Checkpoint, scenario: &ScenarioConfig) -> Result<Self, TrainError> {
        let variant: Variant = ck.text("variant")?.parse().map_err(TrainError::Shape)?;
        let dims = Dims::new(scenario);
        let saved = ck.ints("dims")?;
        let want = [dims.n_iotds as u64, dims.n_uavs as u64, dims.neighbours as u64];
        if saved != want {
            return Err(TrainError::Shape(format!(
                "checkpoint has (N, M, N_max) = {saved:?}, scenario has {want:?}"
            )));
        }
        let head = head_for(variant);
        let mut groups = Vec::with_capacity(3);
        for kind in AgentKind::ALL {
            let p = kind.as_str();
            let actor: Mlp<f64> = ck.mlp(&format!("{p}.actor"))?;
            let critic: Mlp<f64> = ck.mlp(&format!("{p}.critic"))?;
            let random_dims = if kind == AgentKind::Uav && variant == Variant::PoMappoBd {
                2
            } else {
                0
            };
            let obs_dim = dims.obs_width(kind);
            let action_dim = dims.action_width(kind) - random_dims;
            if actor.input_width() != obs_dim || actor.output_width() != 2 * action_dim {
                return Err(TrainError::Shape(format!(
                    "{p} actor maps {} -> {}, expected {} -> {}",
                    actor.input_width(),
                    actor.output_width(),
                    obs_dim,
                    2 * action_dim
                )));
            }
            if critic.input_width() != dims.state_width() + obs_dim || critic.output_width() != 1 {
                return Err(TrainError::Shape(format!(
                    "{p} critic reads {} inputs, expected {}",
                    critic.input_width(),
                    dims.state_width() + obs_dim
                )));
            }
            let actor_opt: Adam<f64> = ck.adam(&format!("{p}.actor_opt"))?;
            let critic_opt: Adam<f64> = ck.adam(&format!("{p}.critic_opt"))?;
            if actor_opt.m.len() != actor.num_params() || critic_opt.m.len() != critic.num_params() {
                return Err(TrainError::Shape(format!("{p} optimizer state does not match its network")));
            }
            let vn: Vec<f64> = ck.floats(&format!("{p}.value_norm"))?;
            let enabled = ck.ints(&format!("{p}.value_norm.enabled"))?;
            let gamma: Vec<f64> = ck.floats(&format!("{p}.gamma"))?;
            if vn.len() != 3 || enabled.len() != 1 || gamma.len() != 1 {
                return Err(TrainError::Shape(format!("{p} normalizer fields are malformed")));
            }
            groups.push(AgentGroup {
                kind,
                head,
                actor,
                critic,
                actor_opt,
                critic_opt,
                value_norm: ValueNorm {
                    enabled: enabled[0] != 0,
                    mean: vn[0],
                    var: vn[1],
                    count: vn[2],
                },
                members: dims.count(kind),
                obs_dim,
                action_dim,
                random_dims,
                gamma: gamma[0],
            });
        }
        Ok(Self { variant, dims, groups })
    }
}

/// Per-group statistics of one update phase, averaged over epochs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub excluded: usize,
    pub clipped_grads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// Zero-based episode index.
    pub episode: usize,
    pub slots: Vec<SlotMetrics>,
    pub aggregate: SlotMetrics,
    /// Present on the last episode of each update phase, one per group.
    pub update: Option<Vec<UpdateStats>>,
}

/// Transitions of one group over one episode, indexed `[slot][member]`.
#[derive(Debug, Clone, Default)]
struct GroupRollout {
    obs: Vec<Vec<Vec<f64>>>,
    actions: Vec<Vec<Vec<f64>>>,
    log_probs: Vec<Vec<f64>>,
    rewards: Vec<Vec<f64>>,
    /// Critic estimates under the behaviour policy, in return units.
    values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct Rollout {
    states: Vec<Vec<f64>>,
    groups: Vec<GroupRollout>,
    slots: Vec<SlotMetrics>,
}

fn collect_rollout(policy: &Policy, env: &mut Env, seed: u64) -> Result<Rollout, TrainError> {
    let mut rng = make_rng(seed, POLICY_STREAM);
    let mut obs = env.reset(seed);
    let mut rollout = Rollout {
        states: Vec::new(),
        groups: vec![GroupRollout::default(); policy.groups.len()],
        slots: Vec::new(),
    };
    while !env.done() {
        let state = obs.global_state();
        let acts = policy.actions(&obs, false, &mut rng)?;
        let unit: Vec<Vec<Vec<f64>>> = acts
            .iter()
            .map(|g| g.iter().map(|a| a.unit.clone()).collect())
            .collect();
        let out = env.step(&Actions::from_groups(&unit)?)?;
        for ((g, buf), acts) in policy.groups.iter().zip(&mut rollout.groups).zip(acts) {
            let own = obs.group(g.kind);
            buf.values.push(own.iter().map(|o| g.value(&state, o)).collect::<Result<_, _>>()?);
            buf.obs.push(own);
            buf.log_probs.push(acts.iter().map(|a| a.log_prob).collect());
            buf.actions.push(acts.into_iter().map(|a| a.stored).collect());
            buf.rewards.push(out.rewards.group(g.kind));
        }
        rollout.states.push(state);
        rollout.slots.push(out.metrics);
        obs = out.observations;
    }
    Ok(rollout)
}

fn chunks(n: usize, size: usize, rng: &mut crate::config::SimRng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    if size == 0 || size >= n {
        return vec![idx];
    }
    idx.shuffle(rng);
    idx.chunks(size).map(|c| c.to_vec()).collect()
}

/// Runs PPO epochs for one group over a batch of rollouts.
fn update_group(
    group: &mut AgentGroup,
    gi: usize,
    rollouts: &[Rollout],
    train: &TrainConfig,
    episode: usize,
    rng: &mut crate::config::SimRng,
) -> Result<UpdateStats, TrainError> {
    let name = group.kind.as_str();
    if train.ppo_epochs == 0 {
        return Ok(UpdateStats::default());
    }
    let mut states = Vec::new();
    let mut value_targets = Vec::new();
    let mut obs = Vec::new();
    let mut actions = Vec::new();
    let mut old_lp = Vec::new();
    let mut adv = Vec::new();
    for r in rollouts {
        let buf = &r.groups[gi];
        let slots = buf.rewards.len();
        let members = buf.rewards.first().map_or(0, Vec::len);
        let mut per_member = Vec::with_capacity(members);
        for i in 0..members {
            let rewards: Vec<f64> = (0..slots).map(|t| buf.rewards[t][i]).collect();
            let values: Vec<f64> = (0..slots).map(|t| buf.values[t][i]).collect();
            per_member.push(compute_gae(&rewards, &values, 0.0, group.gamma, train.gae_lambda));
        }
        for t in 0..slots {
            for (i, a) in per_member.iter().enumerate() {
                states.push(critic_input(&r.states[t], &buf.obs[t][i]));
                value_targets.push(a.targets[t]);
                obs.push(buf.obs[t][i].clone());
                actions.push(buf.actions[t][i].clone());
                old_lp.push(buf.log_probs[t][i]);
                adv.push(a.advantages[t]);
            }
        }
    }
    normalize_advantages(&mut adv);
    group.value_norm.update(&value_targets);
    let norm_targets: Vec<f64> = value_targets.iter().map(|&v| group.value_norm.normalize(v)).collect();

    let mut stats = UpdateStats::default();
    let epochs = train.ppo_epochs;
    for epoch in 0..epochs {
        for batch in chunks(states.len(), train.minibatch_size, rng) {
            let s: Vec<Vec<f64>> = batch.iter().map(|&k| states[k].clone()).collect();
            let y: Vec<f64> = batch.iter().map(|&k| norm_targets[k]).collect();
            let mut lg = critic_loss(&group.critic, &s, &y)?;
            if !lg.loss.is_finite() {
                return Err(TrainError::NonFinite {
                    episode,
                    epoch,
                    group: name,
                    what: "critic",
                });
            }
            let norm = clip_grad_norm(&mut lg.grads, train.max_grad_norm);
            if norm > train.max_grad_norm {
                stats.clipped_grads += 1;
                log::debug!("{name} critic gradient norm {norm:.3} clipped to {}", train.max_grad_norm);
            }
            group.critic_opt.update(group.critic.params_mut(), &lg.grads);
            stats.critic_loss += lg.loss;
        }
        for batch in chunks(obs.len(), train.minibatch_size, rng) {
            let o: Vec<Vec<f64>> = batch.iter().map(|&k| obs[k].clone()).collect();
            let a: Vec<Vec<f64>> = batch.iter().map(|&k| actions[k].clone()).collect();
            let l: Vec<f64> = batch.iter().map(|&k| old_lp[k]).collect();
            let v: Vec<f64> = batch.iter().map(|&k| adv[k]).collect();
            let b = ActorBatch {
                observations: &o,
                actions: &a,
                old_log_probs: &l,
                advantages: &v,
            };
            let mut al = actor_loss(&group.actor, group.head, &b, train.clip_epsilon, train.entropy_coef)?;
            if !al.loss.is_finite() {
                return Err(TrainError::NonFinite {
                    episode,
                    epoch,
                    group: name,
                    what: "actor",
                });
            }
            if al.excluded > 0 {
                log::warn!("{name} actor: {} samples with non-finite ratio excluded", al.excluded);
            }
            let norm = clip_grad_norm(&mut al.grads, train.max_grad_norm);
            if norm > train.max_grad_norm {
                stats.clipped_grads += 1;
                log::debug!("{name} actor gradient norm {norm:.3} clipped to {}", train.max_grad_norm);
            }
            group.actor_opt.update(group.actor.params_mut(), &al.grads);
            stats.actor_loss += al.loss;
            stats.entropy += al.entropy;
            stats.clip_fraction += al.clip_fraction;
            stats.excluded += al.excluded;
        }
    }
    let steps_c = (epochs * chunks_len(states.len(), train.minibatch_size)) as f64;
    let steps_a = (epochs * chunks_len(obs.len(), train.minibatch_size)) as f64;
    stats.critic_loss /= steps_c;
    stats.actor_loss /= steps_a;
    stats.entropy /= steps_a;
    stats.clip_fraction /= steps_a;
    Ok(stats)
}

fn chunks_len(n: usize, size: usize) -> usize {
    if size == 0 || size >= n {
        1
    } else {
        n.div_ceil(size)
    }
}

/// Owns the policy, the environment and the episode counter of a run.
pub struct Trainer {
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
    pub policy: Policy,
    env: Env,
    episodes_done: usize,
}

impl Trainer {
    pub fn new(scenario: ScenarioConfig, train: TrainConfig) -> Result<Self, TrainError> {
        train.validate()?;
        let env = Env::new(scenario.clone(), train.seed)?;
        let policy = Policy::new(&scenario, &train);
        Ok(Self {
            scenario,
            train,
            policy,
            env,
            episodes_done: 0,
        })
    }

    /// Resumes from a checkpoint written by [`Trainer::checkpoint`].
    pub fn from_checkpoint(
        scenario: ScenarioConfig,
        train: TrainConfig,
        ck: &Checkpoint,
    ) -> Result<Self, TrainError> {
        let mut t = Self::new(scenario, train)?;
        let policy = Policy::from_checkpoint(ck, &t.scenario)?;
        if policy.variant != t.train.variant {
            return Err(TrainError::Shape(format!(
                "checkpoint variant {} differs from the configured {}",
                policy.variant.as_str(),
                t.train.variant.as_str()
            )));
        }
        t.policy = policy;
        t.episodes_done = ck.ints("episodes_done")?.first().copied().unwrap_or(0) as usize;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        self.policy.to_checkpoint(&mut ck);
        ck.put_ints("episodes_done", &[self.episodes_done as u64]);
        ck.put_ints("seed", &[self.train.seed]);
        ck
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    pub fn finished(&self) -> bool {
        self.episodes_done >= self.train.episodes
    }

    /// Collects up to `rollout_episodes` episodes, then updates every
    /// group's critic and actor.
    pub fn iterate(&mut self) -> Result<Vec<EpisodeRecord>, TrainError> {
        let n = self
            .train
            .rollout_episodes
            .max(1)
            .min(self.train.episodes.saturating_sub(self.episodes_done));
        let first = self.episodes_done;
        let mut rollouts = Vec::with_capacity(n);
        for e in first..first + n {
            rollouts.push(collect_rollout(&self.policy, &mut self.env, episode_seed(self.train.seed, e))?);
        }
        let last = first + n.saturating_sub(1);
        let mut rng = make_rng(episode_seed(self.train.seed, last), SHUFFLE_STREAM);
        let mut stats = Vec::with_capacity(self.policy.groups.len());
        for (gi, group) in self.policy.groups.iter_mut().enumerate() {
            stats.push(update_group(group, gi, &rollouts, &self.train, last, &mut rng)?);
        }
        self.episodes_done += n;
        let mut records: Vec<EpisodeRecord> = rollouts
            .into_iter()
            .enumerate()
            .map(|(k, r)| EpisodeRecord {
                episode: first + k,
                aggregate: SlotMetrics::aggregate(&r.slots),
                slots: r.slots,
                update: None,
            })
            .collect();
        if let Some(r) = records.last_mut() {
            r.update = Some(stats);
        }
        Ok(records)
    }

    /// Trains until the configured episode count, calling `hook` after
    /// each episode.
    pub fn run<F>(&mut self, mut hook: F) -> Result<Vec<EpisodeRecord>, TrainError>
    where
        F: FnMut(&Self, &EpisodeRecord) -> Result<(), String>,
    {
        let mut history = Vec::new();
        while !self.finished() {
            for rec in self.iterate()? {
                hook(self, &rec).map_err(TrainError::Hook)?;
                history.push(rec);
            }
        }
        Ok(history)
    }
}

/// Trains a fresh policy for `train.episodes` episodes.
pub fn train(scenario: &ScenarioConfig, train: &TrainConfig) -> Result<(Policy, Vec<EpisodeRecord>), TrainError> {
    let mut t = Trainer::new(scenario.clone(), train.clone())?;
    let history = t.run(|_, _| Ok(()))?;
    Ok((t.policy, history))
}

/// Episode-mean headline metrics of an evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub episodes: usize,
    pub reward_iotd: f64,
    pub reward_uav: f64,
    pub reward_haps: f64,
    pub e_all: f64,
    pub mean_alpha: f64,
    pub mean_f_alloc: f64,
    pub mean_delay: f64,
    pub fairness: f64,
    /// Totals over all evaluated episodes.
    pub deadline_violations: usize,
    pub queue_violations: usize,
    pub boundary_violations: usize,
    pub collisions: usize,
}

impl EvalSummary {
    pub fn from_episodes(aggregates: &[SlotMetrics]) -> Self {
        let n = aggregates.len().max(1) as f64;
        let mean = |f: fn(&SlotMetrics) -> f64| aggregates.iter().map(f).sum::<f64>() / n;
        Self {
            episodes: aggregates.len(),
            reward_iotd: mean(|m| m.reward_iotd),
            reward_uav: mean(|m| m.reward_uav),
            reward_haps: mean(|m| m.reward_haps),
            e_all: mean(|m| m.e_all),
            mean_alpha: mean(|m| m.mean_alpha),
            mean_f_alloc: mean(|m| m.mean_f_alloc),
            mean_delay: mean(|m| m.mean_delay),
            fairness: mean(|m| m.fairness),
            deadline_violations: aggregates.iter().map(|m| m.deadline_violations).sum(),
            queue_violations: aggregates.iter().map(|m| m.queue_violations).sum(),
            boundary_violations: aggregates.iter().map(|m| m.boundary_violations).sum(),
            collisions: aggregates.iter().map(|m| m.collisions).sum(),
        }
    }
}

/// Rolls out `episodes` episodes acting with each head's mean. Random
/// trajectory dimensions stay random.
pub fn evaluate(
    policy: &Policy,
    scenario: &ScenarioConfig,
    episodes: usize,
    seed: u64,
) -> Result<(EvalSummary, Vec<EpisodeRecord>), TrainError> {
    if Dims::new(scenario) != policy.dims {
        return Err(TrainError::Shape(format!(
            "policy built for {:?}, scenario has {:?}",
            policy.dims,
            Dims::new(scenario)
        )));
    }
    let mut env = Env::new(scenario.clone(), seed)?;
    let mut records = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let s = episode_seed(seed, e);
        let mut rng = make_rng(s, POLICY_STREAM);
        let mut obs = env.reset(s);
        let mut slots = Vec::with_capacity(scenario.episode_length);
        while !env.done() {
            let acts = policy.actions(&obs, true, &mut rng)?;
            let unit: Vec<Vec<Vec<f64>>> = acts
                .iter()
                .map(|g| g.iter().map(|a| a.unit.clone()).collect())
                .collect();
            let out = env.step(&Actions::from_groups(&unit)?)?;
            slots.push(out.metrics);
            obs = out.observations;
        }
        records.push(EpisodeRecord {
            episode: e,
            aggregate: SlotMetrics::aggregate(&slots),
            slots,
            update: None,
        });
    }
    let aggs: Vec<SlotMetrics> = records.iter().map(|r| r.aggregate.clone()).collect();
    Ok((EvalSummary::from_episodes(&aggs), records))
}
