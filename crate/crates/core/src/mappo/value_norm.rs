use crate::scalar::Real;

/// Running mean and variance of return targets. The critic regresses onto
/// normalized targets and its outputs are mapped back before GAE.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNorm<T> {
    pub enabled: bool,
    pub mean: T,
    pub var: T,
    pub count: T,
}

impl<T: Real> ValueNorm<T> {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            mean: T::zero(),
            var: T::one(),
            count: T::zero(),
        }
    }

    pub fn std(&self) -> T {
        if self.count > T::zero() {
            self.var.sqrt().max(T::lit(1e-6))
        } else {
            T::one()
        }
    }

    /// Merges a batch into the running moments.
    pub fn update(&mut self, xs: &[T]) {
        if !self.enabled || xs.is_empty() {
            return;
        }
        let n = T::from_usize(xs.len()).unwrap();
        let bm = xs.iter().copied().sum::<T>() / n;
        let bv = xs.iter().map(|&x| (x - bm) * (x - bm)).sum::<T>() / n;
        if self.count == T::zero() {
            self.mean = bm;
            self.var = bv;
            self.count = n;
            return;
        }
        let total = self.count + n;
        let delta = bm - self.mean;
        self.mean += delta * n / total;
        self.var = (self.var * self.count + bv * n + delta * delta * self.count * n / total) / total;
        self.count = total;
    }

    pub fn normalize(&self, x: T) -> T {
        if self.enabled {
            (x - self.mean) / self.std()
        } else {
            x
        }
    }

    pub fn denormalize(&self, x: T) -> T {
        if self.enabled {
            x * self.std() + self.mean
        } else {
            x
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn merged_moments_match_pooled() {
        let a = [1.0, 4.0, -2.0];
        let b = [3.0, 3.5, 10.0, 0.0];
        let mut vn = ValueNorm::new(true);
        vn.update(&a);
        vn.update(&b);
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        let m = all.iter().sum::<f64>() / 7.0;
        let v = all.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 7.0;
        assert_relative_eq!(vn.mean, m, epsilon = 1e-12);
        assert_relative_eq!(vn.var, v, epsilon = 1e-12);
        assert_relative_eq!(vn.denormalize(vn.normalize(2.5)), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn disabled_is_identity() {
        let mut vn = ValueNorm::new(false);
        vn.update(&[5.0, 7.0]);
        assert_eq!(vn.normalize(3.0), 3.0);
        assert_eq!(vn.denormalize(3.0), 3.0);
    }
}
