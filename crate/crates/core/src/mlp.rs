//! Fully connected network with `tanh` between layers and a linear output,
//! stored as one flat parameter vector so that optimizers, checkpoints and
//! finite-difference checks can treat every parameter uniformly.

use rand::Rng;

use crate::linalg::{add_outer, add_transpose_matvec, affine};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Activations retained by [`Mlp::forward`]: input, each hidden layer's
/// post-`tanh` output, and the linear output.
#[derive(Debug, Clone)]
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache holds at least the input")
    }
}

/// Parameter count of a network with layer widths `dims`.
pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    /// Uniform Glorot initialization; the last layer is zeroed when
    /// `zero_last` is set.
    pub fn init(dims: &[usize], rng: &mut impl Rng, zero_last: bool) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let mut params = Vec::with_capacity(param_count(dims));
        let layers = dims.len() - 1;
        for (l, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let zero = zero_last && l + 1 == layers;
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(if zero { 0.0 } else { rng.gen_range(-limit..limit) });
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Self { dims: dims.to_vec(), params }
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Option<Self> {
        (dims.len() >= 2 && params.len() == param_count(dims)).then(|| Self { dims: dims.to_vec(), params })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn depth(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// `(weight_range, bias_range)` offsets of layer `l` in the flat vector.
    fn layer_ranges(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let off = param_count(&self.dims[..=l]);
        let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
        let w = off..off + fan_in * fan_out;
        (w.clone(), w.end..w.end + fan_out)
    }

    pub fn forward(&self, x: &[f64]) -> MlpCache {
        debug_assert_eq!(x.len(), self.dims[0]);
        let layers = self.depth();
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for l in 0..layers {
            let (w, b) = self.layer_ranges(l);
            let mut out = vec![0.0; self.dims[l + 1]];
            affine(&self.params[w], &self.params[b], &acts[l], &mut out);
            if l + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        MlpCache { acts }
    }

    /// Backpropagates `d_out` through the cached pass. Parameter gradients are
    /// accumulated into `grads` when given; the input gradient is returned.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], mut grads: Option<&mut [f64]>) -> Vec<f64> {
        let layers = self.depth();
        let mut delta = d_out.to_vec();
        for l in (0..layers).rev() {
            if l + 1 < layers {
                // through tanh: acts[l + 1] holds the post-activation
                for (d, a) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let (w, b) = self.layer_ranges(l);
            if let Some(g) = grads.as_deref_mut() {
                add_outer(&mut g[w.clone()], &delta, &cache.acts[l]);
                for (gb, d) in g[b].iter_mut().zip(&delta) {
                    *gb += d;
                }
            }
            let mut prev = vec![0.0; self.dims[l]];
            add_transpose_matvec(&self.params[w], &delta, &mut prev);
            delta = prev;
        }
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss(net: &Mlp, x: &[f64], w: &[f64]) -> f64 {
        crate::linalg::dot(net.forward(x).output(), w)
    }

    #[test]
    fn zero_last_layer_outputs_zero() {
        let mut rng = crate::seed::rng(1, "test", 0);
        let net = Mlp::init(&[5, 7, 3], &mut rng, true);
        assert_eq!(net.forward(&[0.3, -1.0, 2.0, 0.0, 1.0]).output(), &[0.0; 3]);
        assert_eq!(net.len(), param_count(&[5, 7, 3]));
    }

    #[test]
    fn backward_matches_central_differences() {
        use rand::Rng;
        let mut rng = crate::seed::rng(2, "test", 0);
        let mut net = Mlp::init(&[4, 6, 5, 3], &mut rng, false);
        net.params_mut().iter_mut().for_each(|p| *p += rng.gen_range(-0.1..0.1));
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cache = net.forward(&x);
        let mut g = vec![0.0; net.len()];
        let dx = net.backward(&cache, &w, Some(&mut g));
        let h = 1e-6;
        for i in 0..net.len() {
            let mut p = net.clone();
            p.params_mut()[i] += h;
            let mut m = net.clone();
            m.params_mut()[i] -= h;
            let fd = (loss(&p, &x, &w) - loss(&m, &x, &w)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8, "param {i}: fd {fd} vs {}", g[i]);
        }
        for i in 0..4 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss(&net, &xp, &w) - loss(&net, &xm, &w)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-8);
        }
    }
}
