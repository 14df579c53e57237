//! Gaussian policy head for the MAPPO-ND baseline. Logits `[m_1..m_k,
//! s_1..s_k]` give `mean = sigmoid(m)` and `std = softplus(s + STD_SHIFT) +
//! STD_MIN`. Log-densities are taken at the raw sample; only the value sent
//! to the environment is clipped into `[0, 1]`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::{sigmoid, softplus, Real};

/// Shifts the initial std (zero logits) down to about 0.2.
pub const STD_SHIFT: f64 = -1.5;
pub const STD_MIN: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

pub fn gaussian_head<T: Real>(logits: &[T]) -> GaussianParams<T> {
    let k = logits.len() / 2;
    GaussianParams {
        mean: logits[..k].iter().map(|&z| sigmoid(z)).collect(),
        std: logits[k..2 * k]
            .iter()
            .map(|&z| softplus(z + T::lit(STD_SHIFT)) + T::lit(STD_MIN))
            .collect(),
    }
}

fn half_ln_2pi<T: Real>() -> T {
    T::lit(0.5) * T::TAU().ln()
}

impl<T: Real> GaussianParams<T> {
    pub fn log_prob(&self, x: &[T]) -> T {
        self.mean
            .iter()
            .zip(&self.std)
            .zip(x)
            .map(|((&m, &s), &v)| {
                let z = (v - m) / s;
                -T::lit(0.5) * z * z - s.ln() - half_ln_2pi()
            })
            .sum()
    }

    pub fn entropy(&self) -> T {
        self.std
            .iter()
            .map(|&s| T::lit(0.5) + half_ln_2pi::<T>() + s.ln())
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        self.mean
            .iter()
            .zip(&self.std)
            .map(|(&m, &s)| m + s * T::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect()
    }
}

pub fn clip_unit<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| v.max(T::zero()).min(T::one())).collect()
}

pub fn gaussian_log_prob_grad<T: Real>(logits: &[T], x: &[T]) -> (T, Vec<T>) {
    let k = logits.len() / 2;
    let p = gaussian_head(logits);
    let mut grad = vec![T::zero(); 2 * k];
    for i in 0..k {
        let (m, s) = (p.mean[i], p.std[i]);
        let d = x[i] - m;
        grad[i] = d / (s * s) * m * (T::one() - m);
        grad[k + i] = (d * d / (s * s * s) - s.recip()) * sigmoid(logits[k + i] + T::lit(STD_SHIFT));
    }
    (p.log_prob(x), grad)
}

pub fn gaussian_entropy_grad<T: Real>(logits: &[T]) -> (T, Vec<T>) {
    let k = logits.len() / 2;
    let p = gaussian_head(logits);
    let mut grad = vec![T::zero(); 2 * k];
    for i in 0..k {
        grad[k + i] = sigmoid(logits[k + i] + T::lit(STD_SHIFT)) / p.std[i];
    }
    (p.entropy(), grad)
}
