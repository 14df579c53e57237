//! Fully-connected network with tanh hidden layers, a linear output layer
//! and exact backpropagation. Parameters live in one flat vector so the
//! optimizer and checkpoints can treat them uniformly.

use rand::Rng;
use rand_distr::StandardNormal;

use super::NnError;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    params: Vec<T>,
}

/// Layer inputs and activations recorded by [`Mlp::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Cache<T> {
    acts: Vec<Vec<T>>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Random matrix with orthonormal rows (or columns when taller than wide),
/// scaled by `gain`. Row-major `rows x cols`.
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (r, c, transpose) = if rows <= cols { (rows, cols, false) } else { (cols, rows, true) };
    let mut m: Vec<Vec<f64>> = Vec::with_capacity(r);
    while m.len() < r {
        let mut v: Vec<f64> = (0..c).map(|_| rng.sample(StandardNormal)).collect();
        for u in &m {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            m.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..r {
        for j in 0..c {
            let (row, col) = if transpose { (j, i) } else { (i, j) };
            out[row * cols + col] = gain * m[i][j];
        }
    }
    out
}

impl<T: Real> Mlp<T> {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self {
            sizes: sizes.to_vec(),
            params: vec![T::zero(); param_count(sizes)],
        }
    }

    /// Orthogonal initialisation with gain sqrt(2) on hidden layers and
    /// `output_gain` on the last layer; biases start at zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let mut off = 0;
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == layers { output_gain } else { std::f64::consts::SQRT_2 };
            for (p, w) in net.params[off..off + fan_in * fan_out]
                .iter_mut()
                .zip(orthogonal(fan_out, fan_in, gain, rng))
            {
                *p = T::lit(w);
            }
            off += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn from_parts(sizes: &[usize], params: Vec<T>) -> Result<Self, NnError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let want = param_count(sizes);
        if params.len() != want {
            return Err(NnError::Shape(format!("expected {want} parameters, got {}", params.len())));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().expect("sizes checked at construction")
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, Cache<T>), NnError> {
        if x.len() != self.input_width() {
            return Err(NnError::Width {
                expected: self.input_width(),
                got: x.len(),
            });
        }
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let input = &acts[l];
            let mut out: Vec<T> = (0..fan_out)
                .map(|o| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    row.iter().zip(input).fold(b[o], |acc, (&wi, &xi)| acc + wi * xi)
                })
                .collect();
            if l + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
            off += fan_in * fan_out + fan_out;
        }
        let y = acts.last().cloned().unwrap_or_default();
        Ok((y, Cache { acts }))
    }

    pub fn predict(&self, x: &[T]) -> Result<Vec<T>, NnError> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d output`.
    pub fn backward(&self, cache: &Cache<T>, grad_out: &[T], grads: &mut [T]) {
        debug_assert_eq!(grads.len(), self.params.len());
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = grad_out.to_vec();
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                // Through tanh: d/dz = 1 - a^2.
                for (d, &a) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= T::one() - a * a;
                }
            }
            let off = offsets[l];
            let input = &cache.acts[l];
            for o in 0..fan_out {
                let g = delta[o];
                if g == T::zero() {
                    continue;
                }
                let row = &mut grads[off + o * fan_in..off + (o + 1) * fan_in];
                row.iter_mut().zip(input).for_each(|(r, &x)| *r += g * x);
                grads[off + fan_in * fan_out + o] += g;
            }
            if l > 0 {
                let w = &self.params[off..off + fan_in * fan_out];
                let mut next = vec![T::zero(); fan_in];
                for o in 0..fan_out {
                    let g = delta[o];
                    for (n, &wi) in next.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                        *n += g * wi;
                    }
                }
                delta = next;
            }
        }
    }
}
