//! Critic regression loss and the clipped PPO surrogate, each with
//! analytic parameter gradients.

use crate::nn::{Head, Mlp, NnError};
use crate::scalar::Real;

/// Loss value and its gradient with respect to the flat parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    pub loss: T,
    pub grads: Vec<T>,
}

/// `½ mean (V(s) − target)²`.
pub fn critic_loss<T: Real>(critic: &Mlp<T>, states: &[Vec<T>], targets: &[T]) -> Result<LossGrad<T>, NnError> {
    if states.len() != targets.len() {
        return Err(NnError::Shape(format!(
            "{} states but {} targets",
            states.len(),
            targets.len()
        )));
    }
    let mut grads = vec![T::zero(); critic.num_params()];
    if states.is_empty() {
        return Ok(LossGrad { loss: T::zero(), grads });
    }
    let inv_n = T::one() / T::from_usize(states.len()).unwrap();
    let mut loss = T::zero();
    for (s, &target) in states.iter().zip(targets) {
        let (out, cache) = critic.forward(s)?;
        let err = out[0] - target;
        loss += T::lit(0.5) * err * err * inv_n;
        critic.backward(&cache, &[err * inv_n], &mut grads);
    }
    Ok(LossGrad { loss, grads })
}

/// One update batch for an actor. Rows are aligned across fields.
#[derive(Debug, Clone, Copy)]
pub struct ActorBatch<'a, T> {
    pub observations: &'a [Vec<T>],
    pub actions: &'a [Vec<T>],
    pub old_log_probs: &'a [T],
    pub advantages: &'a [T],
}

impl<T> ActorBatch<'_, T> {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorLoss<T> {
    /// Negated objective; this is what the optimizer minimizes.
    pub loss: T,
    /// Mean clipped surrogate plus the entropy bonus.
    pub objective: T,
    pub entropy: T,
    /// Share of included samples whose ratio left `[1 − ε, 1 + ε]`.
    pub clip_fraction: T,
    /// Samples dropped because their probability ratio was not finite.
    pub excluded: usize,
    pub grads: Vec<T>,
}

/// Clipped surrogate `min(r Â, clip(r, 1−ε, 1+ε) Â) + ψ S`, averaged over
/// the samples with a finite ratio.
pub fn actor_loss<T: Real>(
    actor: &Mlp<T>,
    head: Head,
    batch: &ActorBatch<'_, T>,
    clip_epsilon: T,
    entropy_coef: T,
) -> Result<ActorLoss<T>, NnError> {
    let n = batch.len();
    if batch.actions.len() != n || batch.old_log_probs.len() != n || batch.advantages.len() != n {
        return Err(NnError::Shape("actor batch fields are not aligned".into()));
    }
    let one = T::one();
    let lo = one - clip_epsilon;
    let hi = one + clip_epsilon;

    struct Row<T> {
        cache: crate::nn::Cache<T>,
        grad_logits: Vec<T>,
    }
    let mut rows = Vec::with_capacity(n);
    let (mut obj_sum, mut ent_sum, mut clipped) = (T::zero(), T::zero(), 0usize);
    let mut excluded = 0usize;
    for i in 0..n {
        let (logits, cache) = actor.forward(&batch.observations[i])?;
        let (lp, glp) = head.log_prob_grad(&logits, &batch.actions[i]);
        let ratio = (lp - batch.old_log_probs[i]).exp();
        let adv = batch.advantages[i];
        if !ratio.is_finite() || !lp.is_finite() {
            excluded += 1;
            continue;
        }
        let (ent, gent) = head.entropy_grad(&logits);
        let unclipped = ratio * adv;
        let clipped_term = ratio.max(lo).min(hi) * adv;
        let surrogate = unclipped.min(clipped_term);
        if ratio < lo || ratio > hi {
            clipped += 1;
        }
        // The clip branch is the minimum (and flat) exactly when the ratio
        // has moved past the bound in the direction the advantage favours.
        let saturated = (adv > T::zero() && ratio > hi) || (adv < T::zero() && ratio < lo);
        let d_lp = if saturated { T::zero() } else { ratio * adv };
        let grad_logits: Vec<T> = glp
            .iter()
            .zip(&gent)
            .map(|(&g, &h)| d_lp * g + entropy_coef * h)
            .collect();
        obj_sum += surrogate + entropy_coef * ent;
        ent_sum += ent;
        rows.push(Row { cache, grad_logits });
    }

    let mut grads = vec![T::zero(); actor.num_params()];
    let kept = rows.len();
    if kept == 0 {
        return Ok(ActorLoss {
            loss: T::zero(),
            objective: T::zero(),
            entropy: T::zero(),
            clip_fraction: T::zero(),
            excluded,
            grads,
        });
    }
    let inv = one / T::from_usize(kept).unwrap();
    for row in &rows {
        // Ascent on the objective is descent on its negation.
        let g: Vec<T> = row.grad_logits.iter().map(|&v| -v * inv).collect();
        actor.backward(&row.cache, &g, &mut grads);
    }
    let objective = obj_sum * inv;
    Ok(ActorLoss {
        loss: -objective,
        objective,
        entropy: ent_sum * inv,
        clip_fraction: T::from_usize(clipped).unwrap() * inv,
        excluded,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::make_rng;
    use crate::nn::{beta_head, gaussian_head};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn net(sizes: &[usize], seed: u64) -> Mlp<f64> {
        let mut rng = make_rng(seed, 0);
        let mut m = Mlp::new(sizes, 1.0, &mut rng);
        // Non-zero biases so every path is exercised.
        for p in m.params_mut() {
            *p += 0.05 * (rng.random::<f64>() - 0.5);
        }
        m
    }

    fn inputs(n: usize, w: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = make_rng(seed, 1);
        (0..n).map(|_| (0..w).map(|_| rng.random::<f64>()).collect()).collect()
    }

    fn central_diff(f: impl Fn(&[f64]) -> f64, p: &[f64], i: usize, h: f64) -> f64 {
        let mut a = p.to_vec();
        let mut b = p.to_vec();
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    }

    #[test]
    fn critic_at_target_is_flat() {
        let c = net(&[4, 8, 1], 1);
        let s = inputs(5, 4, 2);
        let y: Vec<f64> = s.iter().map(|x| c.predict(x).unwrap()[0]).collect();
        let lg = critic_loss(&c, &s, &y).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn critic_offset_two_costs_two() {
        let c = net(&[4, 8, 1], 1);
        let s = inputs(6, 4, 3);
        let y: Vec<f64> = s.iter().map(|x| c.predict(x).unwrap()[0] - 2.0).collect();
        assert_relative_eq!(critic_loss(&c, &s, &y).unwrap().loss, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let c = net(&[3, 6, 5, 1], 4);
        let s = inputs(7, 3, 5);
        let y: Vec<f64> = (0..7).map(|k| k as f64 * 0.3 - 1.0).collect();
        let lg = critic_loss(&c, &s, &y).unwrap();
        let f = |p: &[f64]| {
            let m = Mlp::from_parts(c.sizes(), p.to_vec()).unwrap();
            critic_loss(&m, &s, &y).unwrap().loss
        };
        for i in 0..c.num_params() {
            let fd = central_diff(f, c.params(), i, 1e-6);
            assert!((fd - lg.grads[i]).abs() <= 1e-6 + 1e-5 * fd.abs(), "param {i}: {fd} vs {}", lg.grads[i]);
        }
    }

    struct Fixture {
        actor: Mlp<f64>,
        obs: Vec<Vec<f64>>,
        actions: Vec<Vec<f64>>,
        lp: Vec<f64>,
        adv: Vec<f64>,
    }

    fn fixture(head: Head, k: usize, seed: u64) -> Fixture {
        let actor = net(&[4, 8, 2 * k], seed);
        let obs = inputs(9, 4, seed + 10);
        let mut rng = make_rng(seed, 2);
        let actions: Vec<Vec<f64>> = obs
            .iter()
            .map(|o| head.sample(&actor.predict(o).unwrap(), &mut rng))
            .collect();
        let lp = obs
            .iter()
            .zip(&actions)
            .map(|(o, a)| head.log_prob(&actor.predict(o).unwrap(), a))
            .collect();
        let adv = (0..obs.len()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        Fixture {
            actor,
            obs,
            actions,
            lp,
            adv,
        }
    }

    impl Fixture {
        fn batch<'a>(&'a self, old: &'a [f64]) -> ActorBatch<'a, f64> {
            ActorBatch {
                observations: &self.obs,
                actions: &self.actions,
                old_log_probs: old,
                advantages: &self.adv,
            }
        }
    }

    #[test]
    fn on_policy_objective_is_mean_advantage_plus_entropy() {
        for head in [Head::Beta, Head::Gaussian] {
            let fx = fixture(head, 2, 7);
            let out = actor_loss(&fx.actor, head, &fx.batch(&fx.lp), 0.2, 0.1).unwrap();
            let mean_adv = fx.adv.iter().sum::<f64>() / fx.adv.len() as f64;
            assert_relative_eq!(out.objective, mean_adv + 0.1 * out.entropy, epsilon = 1e-12);
            assert_eq!(out.clip_fraction, 0.0);
            assert_eq!(out.loss, -out.objective);
        }
    }

    #[test]
    fn objective_matches_straight_line_recomputation() {
        let fx = fixture(Head::Beta, 3, 8);
        let mut rng = make_rng(9, 3);
        let old: Vec<f64> = fx.lp.iter().map(|l| l + 0.5 * (rng.random::<f64>() - 0.5)).collect();
        let (eps, psi) = (0.2, 0.05);
        let out = actor_loss(&fx.actor, Head::Beta, &fx.batch(&old), eps, psi).unwrap();
        let mut total = 0.0;
        for i in 0..fx.obs.len() {
            let d = beta_head(&fx.actor.predict(&fx.obs[i]).unwrap());
            let r = (d.log_prob(&fx.actions[i]) - old[i]).exp();
            let a = fx.adv[i];
            let c = if r < 1.0 - eps {
                1.0 - eps
            } else if r > 1.0 + eps {
                1.0 + eps
            } else {
                r
            };
            total += f64::min(r * a, c * a) + psi * d.entropy();
        }
        assert_relative_eq!(out.objective, total / fx.obs.len() as f64, epsilon = 1e-12);

        let fg = fixture(Head::Gaussian, 2, 9);
        let out = actor_loss(&fg.actor, Head::Gaussian, &fg.batch(&fg.lp), eps, psi).unwrap();
        let mut total = 0.0;
        for i in 0..fg.obs.len() {
            let d = gaussian_head(&fg.actor.predict(&fg.obs[i]).unwrap());
            total += fg.adv[i] + psi * d.entropy();
        }
        assert_relative_eq!(out.objective, total / fg.obs.len() as f64, epsilon = 1e-12);
    }

    #[test]
    fn saturated_clip_has_no_gradient() {
        let fx = fixture(Head::Beta, 2, 11);
        let eps: f64 = 0.2;
        // ratio = 1 + 2ε everywhere, advantages all positive.
        let old: Vec<f64> = fx.lp.iter().map(|l| l - (1.0 + 2.0 * eps).ln()).collect();
        let adv: Vec<f64> = fx.adv.iter().map(|a| a.abs() + 0.1).collect();
        let b = ActorBatch {
            observations: &fx.obs,
            actions: &fx.actions,
            old_log_probs: &old,
            advantages: &adv,
        };
        let out = actor_loss(&fx.actor, Head::Beta, &b, eps, 0.0).unwrap();
        assert!(out.grads.iter().all(|&g| g == 0.0));
        assert_eq!(out.clip_fraction, 1.0);
        let mean_adv = adv.iter().sum::<f64>() / adv.len() as f64;
        assert_relative_eq!(out.objective, (1.0 + eps) * mean_adv, epsilon = 1e-12);
    }

    #[test]
    fn huge_epsilon_is_plain_policy_gradient() {
        let fx = fixture(Head::Beta, 2, 12);
        let mut rng = make_rng(13, 3);
        let old: Vec<f64> = fx.lp.iter().map(|l| l + rng.random::<f64>() - 0.5).collect();
        let out = actor_loss(&fx.actor, Head::Beta, &fx.batch(&old), 1e9, 0.0).unwrap();
        let surrogate = |p: &[f64]| {
            let m = Mlp::from_parts(fx.actor.sizes(), p.to_vec()).unwrap();
            let mut s = 0.0;
            for i in 0..fx.obs.len() {
                let lp = Head::Beta.log_prob(&m.predict(&fx.obs[i]).unwrap(), &fx.actions[i]);
                s += (lp - old[i]).exp() * fx.adv[i];
            }
            s / fx.obs.len() as f64
        };
        assert_relative_eq!(out.objective, surrogate(fx.actor.params()), epsilon = 1e-12);
        for i in (0..fx.actor.num_params()).step_by(3) {
            let fd = -central_diff(surrogate, fx.actor.params(), i, 1e-6);
            assert!((fd - out.grads[i]).abs() <= 1e-6 + 1e-4 * fd.abs(), "param {i}");
        }
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        for head in [Head::Beta, Head::Gaussian] {
            let fx = fixture(head, 2, 14);
            let mut rng = make_rng(15, 3);
            // Ratios stay well inside the clip band.
            let old: Vec<f64> = fx.lp.iter().map(|l| l + 0.1 * (rng.random::<f64>() - 0.5)).collect();
            let out = actor_loss(&fx.actor, head, &fx.batch(&old), 0.2, 0.1).unwrap();
            let f = |p: &[f64]| {
                let m = Mlp::from_parts(fx.actor.sizes(), p.to_vec()).unwrap();
                actor_loss(&m, head, &fx.batch(&old), 0.2, 0.1).unwrap().loss
            };
            for i in 0..fx.actor.num_params() {
                let fd = central_diff(f, fx.actor.params(), i, 1e-6);
                assert!(
                    (fd - out.grads[i]).abs() <= 1e-6 + 1e-4 * fd.abs(),
                    "{head:?} param {i}: {fd} vs {}",
                    out.grads[i]
                );
            }
        }
    }

    #[test]
    fn non_finite_ratio_is_excluded() {
        let fx = fixture(Head::Beta, 1, 16);
        let mut old = fx.lp.clone();
        old[0] = f64::NEG_INFINITY;
        let out = actor_loss(&fx.actor, Head::Beta, &fx.batch(&old), 0.2, 0.0).unwrap();
        assert_eq!(out.excluded, 1);
        assert!(out.loss.is_finite());
        let rest = fx.adv[1..].iter().sum::<f64>() / (fx.adv.len() - 1) as f64;
        assert_relative_eq!(out.objective, rest, epsilon = 1e-12);
    }

    #[test]
    fn misaligned_batch_is_rejected() {
        let fx = fixture(Head::Beta, 1, 17);
        let short = &fx.lp[1..];
        assert!(actor_loss(&fx.actor, Head::Beta, &fx.batch(short), 0.2, 0.0).is_err());
    }
}
