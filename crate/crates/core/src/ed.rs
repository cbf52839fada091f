//! Dense simulation of the full 2^N spin chain, independent of the
//! free-fermion mapping.
//!
//! Basis states are bit strings in the σᶻ basis; bit j = 0 means spin j up
//! (σᶻ_j = +1). The Hamiltonian H = −Σ_j [σˣ_j σˣ_{j+1} + g σᶻ_j] with periodic
//! boundary is applied matrix-free.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::ising::QuenchSpec;
use crate::propagator::ControlField;

pub const MAX_SPINS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pub n: usize,
    pub amps: Vec<C64>,
}

fn check_size(n: usize) -> Result<()> {
    if n > MAX_SPINS {
        return Err(Error::TooLarge { n, max: MAX_SPINS });
    }
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidSpec(format!("dense chain needs even N ≥ 2, got {n}")));
    }
    Ok(())
}

#[inline]
fn bond_mask(n: usize, j: usize) -> usize {
    (1 << j) | (1 << ((j + 1) % n))
}

/// y = H(g)·x for real or complex vectors.
fn apply_h<T>(n: usize, g: f64, x: &[T], y: &mut [T])
where
    T: Copy + std::ops::AddAssign + std::ops::SubAssign + std::ops::Mul<f64, Output = T>,
{
    for (s, out) in y.iter_mut().enumerate() {
        let up = n as f64 - 2.0 * s.count_ones() as f64;
        *out = x[s] * (-g * up);
        for j in 0..n {
            *out -= x[s ^ bond_mask(n, j)];
        }
    }
}

impl DenseState {
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// ⟨D⟩/N with D = ½ Σ_j (1 − σˣ_j σˣ_{j+1}).
    pub fn defect_density(&self) -> f64 {
        let n = self.n;
        let mut xx = 0.0;
        for j in 0..n {
            let mask = bond_mask(n, j);
            xx += self
                .amps
                .iter()
                .enumerate()
                .map(|(s, a)| (self.amps[s ^ mask].conj() * a).re)
                .sum::<f64>();
        }
        0.5 * (n as f64 - xx) / n as f64
    }

    /// |⟨cat|ψ⟩|² with |cat⟩ = (|→…→⟩ + |←…←⟩)/√2.
    pub fn cat_fidelity(&self) -> f64 {
        let amp = 2f64.sqrt() * 2f64.powf(-(self.n as f64) / 2.0);
        let overlap: C64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(s, _)| s.count_ones() % 2 == 0)
            .map(|(_, a)| a * amp)
            .sum();
        overlap.norm_sqr()
    }

    /// Weight in the sector Π_j σᶻ_j = +1.
    pub fn even_parity_weight(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .filter(|(s, _)| s.count_ones() % 2 == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    pub fn energy(&self, g: f64) -> f64 {
        let mut h = vec![C64::new(0.0, 0.0); self.amps.len()];
        apply_h(self.n, g, &self.amps, &mut h);
        self.amps.iter().zip(&h).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub state: DenseState,
    pub energy: f64,
    /// Gap to the next level reachable from the symmetric start vector.
    pub gap: f64,
    pub near_degenerate: bool,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One Lanczos pass with full reorthogonalization from `start`; returns the
/// lowest Ritz pair and the gap to the next Ritz value.
fn lanczos(n: usize, g: f64, start: Vec<f64>) -> (Vec<f64>, f64, f64) {
    let dim = start.len();
    let max_iter = dim.min(300);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_iter);
    let mut alpha = Vec::with_capacity(max_iter);
    let mut beta: Vec<f64> = Vec::with_capacity(max_iter);
    let mut v = start;
    let mut w = vec![0.0; dim];
    loop {
        apply_h(n, g, &v, &mut w);
        alpha.push(dot(&v, &w));
        basis.push(v.clone());
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = dot(&w, &w).sqrt();
        let m = alpha.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let lo = order[0];
        let ritz_res = (b * eig.eigenvectors[(m - 1, lo)]).abs();
        // the tridiagonal eigensolver deflates tiny couplings, so the Ritz
        // estimate is only trusted once the Krylov space has some depth
        let deep = m >= max_iter.min(30);
        if (deep && ritz_res < 1e-12) || b < 1e-13 || m == max_iter {
            let e0 = eig.eigenvalues[lo];
            let gap = if m > 1 {
                eig.eigenvalues[order[1]] - e0
            } else {
                f64::INFINITY
            };
            let mut psi = vec![0.0; dim];
            for (i, q) in basis.iter().enumerate() {
                let c = eig.eigenvectors[(i, lo)];
                psi.iter_mut().zip(q).for_each(|(x, y)| *x += c * y);
            }
            let norm = dot(&psi, &psi).sqrt();
            psi.iter_mut().for_each(|x| *x /= norm);
            return (psi, e0, gap);
        }
        beta.push(b);
        v.iter_mut().zip(&w).for_each(|(x, y)| *x = y / b);
    }
}

/// Lowest state of the even-parity, translation-invariant sector, by Lanczos
/// started from the all-up state and restarted from the Ritz vector until the
/// true residual ‖Hψ − Eψ‖ is below 1e−11.
pub fn ed_ground_state(n: usize, g: f64) -> Result<GroundState> {
    check_size(n)?;
    let dim = 1usize << n;
    let mut start = vec![0.0; dim];
    start[0] = 1.0;
    let mut hpsi = vec![0.0; dim];
    let mut best = None;
    for _ in 0..6 {
        let (psi, _, gap) = lanczos(n, g, start);
        apply_h(n, g, &psi, &mut hpsi);
        let energy = dot(&psi, &hpsi);
        let residual = hpsi
            .iter()
            .zip(&psi)
            .map(|(h, p)| (h - energy * p).powi(2))
            .sum::<f64>()
            .sqrt();
        let done = residual < 1e-11;
        start = psi.clone();
        best = Some((psi, energy, gap, residual));
        if done {
            break;
        }
    }
    let (psi, energy, gap, residual) = best.expect("at least one Lanczos pass");
    Ok(GroundState {
        state: DenseState {
            n,
            amps: psi.into_iter().map(|x| C64::new(x, 0.0)).collect(),
        },
        energy,
        gap,
        near_degenerate: gap < 1e-10,
        residual,
    })
}

/// v ← exp(−i H(g) τ) v by a Taylor series, splitting τ so each piece has
/// ‖Hτ‖ ≤ 1/2.
fn exp_step(n: usize, g: f64, tau: f64, v: &mut [C64], scratch: &mut [C64], term: &mut [C64]) {
    let bound = n as f64 * (1.0 + g.abs());
    let pieces = ((bound * tau.abs()) / 0.5).ceil().max(1.0) as usize;
    let h = tau / pieces as f64;
    for _ in 0..pieces {
        term.copy_from_slice(v);
        let mut j = 1;
        loop {
            apply_h(n, g, term, scratch);
            let factor = C64::new(0.0, -h / j as f64);
            let mut size = 0.0;
            for (t, s) in term.iter_mut().zip(scratch.iter()) {
                *t = s * factor;
                size += t.norm_sqr();
            }
            v.iter_mut().zip(term.iter()).for_each(|(a, b)| *a += b);
            if size.sqrt() < 1e-18 || j > 60 {
                break;
            }
            j += 1;
        }
    }
}

/// Evolves the even-sector ground state at g_i through the same piecewise
/// midpoint field as the free-fermion propagator.
pub fn ed_evolve(spec: &QuenchSpec, field: &ControlField) -> Result<DenseState> {
    check_size(spec.n)?;
    field.check_grid(spec)?;
    let mut psi = ed_ground_state(spec.n, spec.g_i)?.state.amps;
    let dim = psi.len();
    let mut scratch = vec![C64::new(0.0, 0.0); dim];
    let mut term = vec![C64::new(0.0, 0.0); dim];
    let dt = spec.dt();
    for g in field.midpoints() {
        exp_step(spec.n, g, dt, &mut psi, &mut scratch, &mut term);
    }
    Ok(DenseState { n: spec.n, amps: psi })
}
