//! Beta policy head. Logits `[a_1..a_k, b_1..b_k]` map to shapes
//! `alpha = 1 + min(softplus(a), SHAPE_CAP)` and likewise for `beta`, which
//! keeps every density unimodal and zero at the interval ends.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::special::{digamma, ln_beta, trigamma};
use crate::scalar::{sigmoid, softplus, Real};

pub const SHAPE_CAP: f64 = 100.0;
/// Samples and evaluation points are kept inside `[UNIT_EPS, 1 - UNIT_EPS]`.
pub const UNIT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BetaParams<T> {
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
}

fn shape<T: Real>(z: T) -> (T, T) {
    let sp = softplus(z);
    if sp < T::lit(SHAPE_CAP) {
        (T::one() + sp, sigmoid(z))
    } else {
        (T::one() + T::lit(SHAPE_CAP), T::zero())
    }
}

fn clamp_unit<T: Real>(u: T) -> T {
    u.max(T::lit(UNIT_EPS)).min(T::one() - T::lit(UNIT_EPS))
}

pub fn beta_head<T: Real>(logits: &[T]) -> BetaParams<T> {
    let k = logits.len() / 2;
    BetaParams {
        alpha: logits[..k].iter().map(|&z| shape(z).0).collect(),
        beta: logits[k..2 * k].iter().map(|&z| shape(z).0).collect(),
    }
}

impl<T: Real> BetaParams<T> {
    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn mean(&self) -> Vec<T> {
        self.alpha.iter().zip(&self.beta).map(|(&a, &b)| a / (a + b)).collect()
    }

    pub fn log_prob(&self, u: &[T]) -> T {
        self.alpha
            .iter()
            .zip(&self.beta)
            .zip(u)
            .map(|((&a, &b), &x)| {
                let x = clamp_unit(x);
                (a - T::one()) * x.ln() + (b - T::one()) * (T::one() - x).ln() - ln_beta(a, b)
            })
            .sum()
    }

    pub fn entropy(&self) -> T {
        let two = T::lit(2.0);
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(&a, &b)| {
                ln_beta(a, b) - (a - T::one()) * digamma(a) - (b - T::one()) * digamma(b)
                    + (a + b - two) * digamma(a + b)
            })
            .sum()
    }

    /// One draw per dimension as `X / (X + Y)` with `X ~ Gamma(alpha)`,
    /// `Y ~ Gamma(beta)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(&a, &b)| {
                let x = Gamma::new(a.as_f64(), 1.0).expect("alpha > 1").sample(rng);
                let y = Gamma::new(b.as_f64(), 1.0).expect("beta > 1").sample(rng);
                clamp_unit(T::lit(x / (x + y)))
            })
            .collect()
    }
}

/// Log-density and its gradient with respect to the logits.
pub fn beta_log_prob_grad<T: Real>(logits: &[T], u: &[T]) -> (T, Vec<T>) {
    let k = logits.len() / 2;
    let mut grad = vec![T::zero(); 2 * k];
    let mut lp = T::zero();
    for i in 0..k {
        let (a, da) = shape(logits[i]);
        let (b, db) = shape(logits[k + i]);
        let x = clamp_unit(u[i]);
        let (lx, l1x) = (x.ln(), (T::one() - x).ln());
        lp += (a - T::one()) * lx + (b - T::one()) * l1x - ln_beta(a, b);
        let dab = digamma(a + b);
        grad[i] = (lx - digamma(a) + dab) * da;
        grad[k + i] = (l1x - digamma(b) + dab) * db;
    }
    (lp, grad)
}

/// Entropy and its gradient with respect to the logits.
pub fn beta_entropy_grad<T: Real>(logits: &[T]) -> (T, Vec<T>) {
    let k = logits.len() / 2;
    let two = T::lit(2.0);
    let mut grad = vec![T::zero(); 2 * k];
    let mut h = T::zero();
    for i in 0..k {
        let (a, da) = shape(logits[i]);
        let (b, db) = shape(logits[k + i]);
        let s = a + b;
        h += ln_beta(a, b) - (a - T::one()) * digamma(a) - (b - T::one()) * digamma(b) + (s - two) * digamma(s);
        let ts = (s - two) * trigamma(s);
        grad[i] = (ts - (a - T::one()) * trigamma(a)) * da;
        grad[k + i] = (ts - (b - T::one()) * trigamma(b)) * db;
    }
    (h, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::make_rng;

    fn params(a: f64, b: f64) -> BetaParams<f64> {
        BetaParams {
            alpha: vec![a],
            beta: vec![b],
        }
    }

    #[test]
    fn uniform_and_closed_form() {
        let p = params(1.0, 1.0);
        for u in [0.1, 0.5, 0.93] {
            assert!(p.log_prob(&[u]).abs() < 1e-14);
        }
        let p = params(2.0, 2.0);
        assert!((p.log_prob(&[0.5]).exp() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn head_bounds() {
        let p = beta_head(&[-50.0_f64, 0.0, 500.0, 3.0]);
        // A very negative logit rounds to exactly 1 in f64.
        assert!(p.alpha.iter().chain(&p.beta).all(|&s| s >= 1.0 && s <= 1.0 + SHAPE_CAP));
        assert_eq!(p.beta[0], 1.0 + SHAPE_CAP);
        assert!(p.alpha[1] > 1.0);
    }

    #[test]
    fn sample_mean() {
        let p = params(3.0, 2.0);
        let mut rng = make_rng(7, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| p.sample(&mut rng)[0]).sum::<f64>() / n as f64;
        let var = 3.0 * 2.0 / (25.0 * 6.0);
        assert!((mean - 0.6).abs() < 3.0 * (var / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let z = [0.3_f64, -1.2, 2.0, 0.7];
        let u = [0.35, 0.8];
        let (lp, g) = beta_log_prob_grad(&z, &u);
        assert!((lp - beta_head(&z).log_prob(&u)).abs() < 1e-14);
        let (h, gh) = beta_entropy_grad(&z);
        assert!((h - beta_head(&z).entropy()).abs() < 1e-14);
        let eps = 1e-5;
        for i in 0..4 {
            let mut a = z;
            a[i] += eps;
            let mut b = z;
            b[i] -= eps;
            let fd = (beta_head(&a).log_prob(&u) - beta_head(&b).log_prob(&u)) / (2.0 * eps);
            assert!((fd - g[i]).abs() < 1e-4 * fd.abs().max(1e-3), "lp {i}");
            let fd = (beta_head(&a).entropy() - beta_head(&b).entropy()) / (2.0 * eps);
            assert!((fd - gh[i]).abs() < 1e-4 * fd.abs().max(1e-3), "h {i}");
        }
    }

    #[test]
    fn entropy_matches_quadrature() {
        for (a, b) in [(1.5, 4.0), (7.0, 2.2), (12.0, 15.0)] {
            let p = params(a, b);
            let n = 20_000;
            let h = 1.0 / n as f64;
            let f = |x: f64| {
                let lp = p.log_prob(&[x]);
                -lp.exp() * lp
            };
            let mut s = 0.0;
            for i in 0..n {
                let x = (i as f64 + 0.5) * h;
                s += f(x) * h;
            }
            assert!((s - p.entropy()).abs() < 1e-4, "({a},{b}): {s} vs {}", p.entropy());
        }
    }
}
