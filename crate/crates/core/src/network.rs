//! Two-hidden-layer tanh controller f(x) = W3ᵀ tanh(W2 tanh(W1 x + B1) + B2).
//!
//! The input is the normalized time x = t/T ∈ [−1, 1]. Hidden widths can grow;
//! every block is stored flat and row-major so growth is an explicit copy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    W1,
    B1,
    W2,
    B2,
    W3,
}

impl Block {
    pub const ALL: [Block; 5] = [Block::W1, Block::B1, Block::W2, Block::B2, Block::W3];
}

/// Weights and biases. `w2` is n2×n1, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub n1: usize,
    pub n2: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(n1: usize, n2: usize) -> Self {
        Self {
            n1,
            n2,
            w1: vec![0.0; n1],
            b1: vec![0.0; n1],
            w2: vec![0.0; n1 * n2],
            b2: vec![0.0; n2],
            w3: vec![0.0; n2],
        }
    }

    /// Every entry i.i.d. uniform on [−range, range].
    pub fn random<R: Rng + ?Sized>(n1: usize, n2: usize, range: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(n1, n2);
        for b in Block::ALL {
            for x in p.block_mut(b) {
                *x = uniform(rng, range);
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let (n1, n2) = (self.n1, self.n2);
        if n1 == 0 || n2 == 0 {
            return Err(Error::Shape("hidden layers must be non-empty".into()));
        }
        let ok = self.w1.len() == n1
            && self.b1.len() == n1
            && self.w2.len() == n1 * n2
            && self.b2.len() == n2
            && self.w3.len() == n2;
        if !ok {
            return Err(Error::Shape(format!("block sizes do not match n1 = {n1}, n2 = {n2}")));
        }
        if !self.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(())
    }

    /// n1·n2 + 2·n1 + 2·n2.
    pub fn param_count(&self) -> usize {
        param_count(self.n1, self.n2)
    }

    pub fn block(&self, b: Block) -> &[f64] {
        match b {
            Block::W1 => &self.w1,
            Block::B1 => &self.b1,
            Block::W2 => &self.w2,
            Block::B2 => &self.b2,
            Block::W3 => &self.w3,
        }
    }

    pub fn block_mut(&mut self, b: Block) -> &mut [f64] {
        match b {
            Block::W1 => &mut self.w1,
            Block::B1 => &mut self.b1,
            Block::W2 => &mut self.w2,
            Block::B2 => &mut self.b2,
            Block::W3 => &mut self.w3,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        Block::ALL.into_iter().flat_map(move |b| self.block(b).iter())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn set_from_slice(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.param_count());
        let mut offset = 0;
        for b in Block::ALL {
            let dst = self.block_mut(b);
            let len = dst.len();
            dst.copy_from_slice(&values[offset..offset + len]);
            offset += len;
        }
    }

    fn hidden(&self, x: f64, h1: &mut [f64], h2: &mut [f64]) {
        for i in 0..self.n1 {
            h1[i] = (self.w1[i] * x + self.b1[i]).tanh();
        }
        for j in 0..self.n2 {
            let row = &self.w2[j * self.n1..(j + 1) * self.n1];
            let z: f64 = row.iter().zip(h1.iter()).map(|(w, h)| w * h).sum();
            h2[j] = (z + self.b2[j]).tanh();
        }
    }

    pub fn output(&self, x: f64) -> f64 {
        let mut h1 = vec![0.0; self.n1];
        let mut h2 = vec![0.0; self.n2];
        self.hidden(x, &mut h1, &mut h2);
        self.w3.iter().zip(&h2).map(|(w, h)| w * h).sum()
    }

    pub fn outputs(&self, xs: &[f64]) -> Vec<f64> {
        let mut h1 = vec![0.0; self.n1];
        let mut h2 = vec![0.0; self.n2];
        xs.iter()
            .map(|&x| {
                self.hidden(x, &mut h1, &mut h2);
                self.w3.iter().zip(&h2).map(|(w, h)| w * h).sum()
            })
            .collect()
    }

    /// Σ_m upstream_m · ∂f(x_m)/∂θ for every parameter θ, returned in the
    /// shape of `self`.
    pub fn vjp(&self, xs: &[f64], upstream: &[f64]) -> NetworkParams {
        assert_eq!(xs.len(), upstream.len());
        let (n1, n2) = (self.n1, self.n2);
        let mut grad = NetworkParams::zeros(n1, n2);
        let mut h1 = vec![0.0; n1];
        let mut h2 = vec![0.0; n2];
        let mut d1 = vec![0.0; n1];
        for (&x, &u) in xs.iter().zip(upstream) {
            if u == 0.0 {
                continue;
            }
            self.hidden(x, &mut h1, &mut h2);
            d1.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..n2 {
                grad.w3[j] += u * h2[j];
                // δ at the second pre-activation
                let d2 = u * self.w3[j] * (1.0 - h2[j] * h2[j]);
                if d2 == 0.0 {
                    continue;
                }
                grad.b2[j] += d2;
                let row = j * n1;
                for i in 0..n1 {
                    grad.w2[row + i] += d2 * h1[i];
                    d1[i] += d2 * self.w2[row + i];
                }
            }
            for i in 0..n1 {
                let z = d1[i] * (1.0 - h1[i] * h1[i]);
                grad.b1[i] += z;
                grad.w1[i] += z * x;
            }
        }
        grad
    }

    /// Per-point gradient ∂f(x)/∂θ, flattened in block order.
    pub fn jacobian_row(&self, x: f64) -> Vec<f64> {
        self.vjp(&[x], &[1.0]).to_vec()
    }
}

pub fn param_count(n1: usize, n2: usize) -> usize {
    n1 * n2 + 2 * n1 + 2 * n2
}

pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, range: f64) -> f64 {
    if range == 0.0 {
        0.0
    } else {
        rng.gen_range(-range..=range)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let p = NetworkParams::zeros(3, 4);
        assert_eq!(p.outputs(&[-1.0, 0.0, 0.7]), vec![0.0; 3]);
        assert_eq!(p.param_count(), 12 + 6 + 8);
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = NetworkParams::random(4, 6, 0.8, &mut rng);
        let xs = [-1.0, -0.3, 0.25, 0.9];
        let up = [0.7, -1.1, 0.4, 2.0];
        let g = p.vjp(&xs, &up).to_vec();
        let theta = p.to_vec();
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut a = p.clone();
            let mut t = theta.clone();
            t[i] += h;
            a.set_from_slice(&t);
            let mut b = p.clone();
            t[i] -= 2.0 * h;
            b.set_from_slice(&t);
            let fa: f64 = a.outputs(&xs).iter().zip(&up).map(|(f, u)| f * u).sum();
            let fb: f64 = b.outputs(&xs).iter().zip(&up).map(|(f, u)| f * u).sum();
            let fd = (fa - fb) / (2.0 * h);
            let scale = fd.abs().max(g[i].abs()).max(1e-3);
            assert!((fd - g[i]).abs() / scale < 1e-6, "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn validate_catches_bad_shapes() {
        let mut p = NetworkParams::zeros(2, 3);
        assert!(p.validate().is_ok());
        p.w2.pop();
        assert!(p.validate().is_err());
        let mut q = NetworkParams::zeros(2, 3);
        q.b1[0] = f64::NAN;
        assert!(q.validate().is_err());
    }
}
