//! Generalized advantage estimation and advantage normalization.

use crate::scalar::Real;

/// Per-slot advantages and the critic's return targets for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageSet<T> {
    pub advantages: Vec<T>,
    pub targets: Vec<T>,
}

/// Backward recursion `A_t = δ_t + γλ A_{t+1}` with
/// `δ_t = r_t + γ V_{t+1} − V_t` and `V_I = bootstrap`.
///
/// # Panics
/// If `rewards` and `values` differ in length.
pub fn compute_gae<T: Real>(rewards: &[T], values: &[T], bootstrap: T, gamma: T, lambda: T) -> AdvantageSet<T> {
    assert_eq!(rewards.len(), values.len(), "rewards and values must be aligned");
    let n = rewards.len();
    let mut advantages = vec![T::zero(); n];
    let mut next_value = bootstrap;
    let mut acc = T::zero();
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        acc = delta + gamma * lambda * acc;
        advantages[t] = acc;
        next_value = values[t];
    }
    let targets = advantages.iter().zip(values).map(|(&a, &v)| a + v).collect();
    AdvantageSet { advantages, targets }
}

/// Shifts to zero mean and scales to unit variance. A (near) constant
/// input is only centred.
pub fn normalize_advantages<T: Real>(adv: &mut [T]) {
    if adv.is_empty() {
        return;
    }
    let n = T::from_usize(adv.len()).unwrap();
    let mean = adv.iter().copied().sum::<T>() / n;
    let var = adv.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>() / n;
    let std = var.sqrt();
    let scale = if std > T::lit(1e-8) { T::one() / std } else { T::one() };
    for a in adv.iter_mut() {
        *a = (*a - mean) * scale;
    }
}
