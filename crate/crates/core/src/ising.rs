//! Static physics of the periodic transverse-field Ising chain
//!
//! H = -Σ_j [σˣ_j σˣ_{j+1} + g σᶻ_j], N even, restricted to the even fermion
//! parity sector. After Jordan-Wigner and Fourier transforms the chain splits
//! into N/2 independent two-level problems, one per momentum k ∈ K, each acting
//! on the ordered basis (|vac⟩_k, |k,−k⟩).
//!
//! Convention used throughout the crate (checked against dense diagonalization):
//!
//! ```text
//! H_k(g) = 2(g + cos k) σᶻ − 2 sin k σˣ
//! Y_k    = ∂H_k/∂g = 2 σᶻ
//! D_k    = 1 + cos k σᶻ − sin k σˣ
//! χ_k    = (sin k/2, cos k/2)
//! ```

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// The physical quench problem: chain length, half-duration, endpoint fields
/// and the uniform time grid t_m = −T + m·2T/M.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchSpec {
    pub n: usize,
    pub t_half: f64,
    pub g_i: f64,
    pub g_f: f64,
    pub steps: usize,
}

impl QuenchSpec {
    pub fn new(n: usize, t_half: f64, g_i: f64, g_f: f64, steps: usize) -> Result<Self> {
        let spec = Self {
            n,
            t_half,
            g_i,
            g_f,
            steps,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Quench 2 → 0 with the default step count.
    pub fn standard(n: usize, t_half: f64) -> Result<Self> {
        Self::with_default_steps(n, t_half, 2.0, 0.0)
    }

    /// Uses M = max(2000, ⌈40·T·Λ_max⌉) with Λ_max the largest mode gap at g_i.
    pub fn with_default_steps(n: usize, t_half: f64, g_i: f64, g_f: f64) -> Result<Self> {
        let mut spec = Self {
            n,
            t_half,
            g_i,
            g_f,
            steps: 2,
        };
        spec.validate()?;
        spec.steps = default_steps(n, t_half, g_i);
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || !self.n.is_multiple_of(2) {
            return Err(Error::InvalidSpec(format!(
                "N must be even and positive, got {}",
                self.n
            )));
        }
        if !(self.t_half > 0.0 && self.t_half.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "T must be positive and finite, got {}",
                self.t_half
            )));
        }
        if self.steps < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 time steps, got {}",
                self.steps
            )));
        }
        if !self.g_i.is_finite() || !self.g_f.is_finite() {
            return Err(Error::InvalidSpec("endpoint fields must be finite".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        2.0 * self.t_half / self.steps as f64
    }

    /// t_m for m = 0..=M. The last point is pinned to +T exactly.
    pub fn time(&self, m: usize) -> f64 {
        if m == self.steps {
            self.t_half
        } else {
            -self.t_half + m as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|m| self.time(m)).collect()
    }

    pub fn modes(&self) -> Vec<ModeIndex> {
        momenta(self.n)
    }

    pub fn with_steps(&self, steps: usize) -> Self {
        Self { steps, ..*self }
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..*self }
    }
}

pub fn default_steps(n: usize, t_half: f64, g_i: f64) -> usize {
    let lambda_max = momenta(n)
        .iter()
        .map(|k| dispersion(*k, g_i))
        .fold(0.0, f64::max);
    let wanted = (40.0 * t_half * lambda_max).ceil();
    if wanted.is_finite() && wanted > 2000.0 {
        wanted as usize
    } else {
        2000
    }
}

/// A momentum k = (2j+1)π/N from the even-parity set K.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ModeIndex(f64);

impl ModeIndex {
    /// Checks that `k` is one of the N/2 allowed momenta.
    pub fn new(n: usize, k: f64) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::InvalidSpec(format!("N must be even, got {n}")));
        }
        let j = (k * n as f64 / PI - 1.0) / 2.0;
        let jr = j.round();
        if (j - jr).abs() > 1e-9 || jr < 0.0 || jr >= (n / 2) as f64 {
            return Err(Error::InvalidMode { k, n });
        }
        Ok(Self(k))
    }

    pub fn k(self) -> f64 {
        self.0
    }
}

/// K = {π/N, 3π/N, …, π − π/N}, in increasing order.
pub fn momenta(n: usize) -> Vec<ModeIndex> {
    (0..n / 2)
        .map(|j| ModeIndex((2 * j + 1) as f64 * PI / n as f64))
        .collect()
}

/// Λ_k(g) = 2√(g² + 2g cos k + 1).
pub fn dispersion(k: ModeIndex, g: f64) -> f64 {
    let (s, c) = k.0.sin_cos();
    2.0 * ((g + c) * (g + c) + s * s).sqrt()
}

/// 2×2 complex matrix in the ordered mode basis, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeOperator(pub [[C64; 2]; 2]);

impl ModeOperator {
    pub fn identity() -> Self {
        Self([[ONE, ZERO], [ZERO, ONE]])
    }

    pub fn sigma_x() -> Self {
        Self([[ZERO, ONE], [ONE, ZERO]])
    }

    pub fn sigma_z() -> Self {
        Self([[ONE, ZERO], [ZERO, -ONE]])
    }

    /// Real combination c₀·1 + cₓ·σˣ + c_z·σᶻ.
    pub fn from_pauli(c0: f64, cx: f64, cz: f64) -> Self {
        Self([
            [C64::new(c0 + cz, 0.0), C64::new(cx, 0.0)],
            [C64::new(cx, 0.0), C64::new(c0 - cz, 0.0)],
        ])
    }

    pub fn apply(&self, v: ModeState) -> ModeState {
        let m = &self.0;
        ModeState {
            a: m[0][0] * v.a + m[0][1] * v.b,
            b: m[1][0] * v.a + m[1][1] * v.b,
        }
    }

    /// ⟨u|A|v⟩.
    pub fn element(&self, u: ModeState, v: ModeState) -> C64 {
        u.inner(self.apply(v))
    }

    pub fn expectation(&self, v: ModeState) -> f64 {
        self.element(v, v).re
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Self([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let d = *self - self.adjoint();
        d.0.iter().flatten().all(|z| z.norm() <= tol)
    }

    /// Eigenvalues of a Hermitian operator, ascending.
    pub fn hermitian_eigenvalues(&self) -> [f64; 2] {
        let m = &self.0;
        let half_tr = 0.5 * (m[0][0].re + m[1][1].re);
        let half_diff = 0.5 * (m[0][0].re - m[1][1].re);
        let r = (half_diff * half_diff + m[0][1].norm_sqr()).sqrt();
        [half_tr - r, half_tr + r]
    }
}

impl Add for ModeOperator {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] += rhs.0[i][j];
            }
        }
        out
    }
}

impl Sub for ModeOperator {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] -= rhs.0[i][j];
            }
        }
        out
    }
}

impl Mul for ModeOperator {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[ZERO; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self(out)
    }
}

impl Mul<ModeOperator> for f64 {
    type Output = ModeOperator;
    fn mul(self, rhs: ModeOperator) -> ModeOperator {
        let mut out = rhs;
        out.0.iter_mut().flatten().for_each(|z| *z *= self);
        out
    }
}

/// Amplitudes (a, b) on (|vac⟩_k, |k,−k⟩).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeState {
    pub a: C64,
    pub b: C64,
}

impl ModeState {
    pub fn new(a: C64, b: C64) -> Self {
        Self { a, b }
    }

    pub fn real(a: f64, b: f64) -> Self {
        Self {
            a: C64::new(a, 0.0),
            b: C64::new(b, 0.0),
        }
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: ModeState) -> C64 {
        self.a.conj() * other.a + self.b.conj() * other.b
    }

    pub fn norm_sqr(&self) -> f64 {
        self.a.norm_sqr() + self.b.norm_sqr()
    }
}

/// 2×2 reduction of the mode Hamiltonian. Its eigenvalues are ±Λ_k(g).
pub fn mode_hamiltonian(k: ModeIndex, g: f64) -> ModeOperator {
    let (s, c) = k.0.sin_cos();
    ModeOperator::from_pauli(0.0, -2.0 * s, 2.0 * (g + c))
}

/// Bloch-vector components (x, z) of H_k(g) = x σˣ + z σᶻ.
#[inline]
pub(crate) fn hamiltonian_vector(k_sin: f64, k_cos: f64, g: f64) -> (f64, f64) {
    (-2.0 * k_sin, 2.0 * (g + k_cos))
}

/// Mixing angle θ_k with tan θ_k = −sin k/(g + cos k), on the branch where
/// (cos θ/2, sin θ/2) is the lower eigenvector of `mode_hamiltonian`.
pub fn mixing_angle(k: ModeIndex, g: f64) -> f64 {
    let (s, c) = k.0.sin_cos();
    s.atan2(-(g + c))
}

/// (|G_k⟩, |Ḡ_k⟩): H_k|G_k⟩ = −Λ_k|G_k⟩ and H_k|Ḡ_k⟩ = +Λ_k|Ḡ_k⟩.
pub fn ground_excited_pair(k: ModeIndex, g: f64) -> (ModeState, ModeState) {
    let half = 0.5 * mixing_angle(k, g);
    let (s, c) = half.sin_cos();
    (ModeState::real(c, s), ModeState::real(s, -c))
}

/// Ŷ_k = −2(c†_k c_k + c†_{−k} c_{−k} − 1) = diag(+2, −2).
pub fn y_operator(_k: ModeIndex) -> ModeOperator {
    2.0 * ModeOperator::sigma_z()
}

/// Domain-wall counting operator of mode k; eigenvalues {0, 2}.
pub fn defect_operator(k: ModeIndex) -> ModeOperator {
    let (s, c) = k.0.sin_cos();
    ModeOperator::from_pauli(1.0, -s, c)
}

/// |χ_k⟩ = sin(k/2)|vac⟩ + cos(k/2)|k,−k⟩; the cat state is Π_k |χ_k⟩.
pub fn cat_component(k: ModeIndex) -> ModeState {
    let (s, c) = (0.5 * k.0).sin_cos();
    ModeState::real(s, c)
}

/// Even-sector ground energy Σ_k −Λ_k(g).
pub fn ground_energy(n: usize, g: f64) -> f64 {
    -momenta(n).iter().map(|k| dispersion(*k, g)).sum::<f64>()
}

/// ρ after an instantaneous jump from the ground state at `g_from`:
/// (1/N)·Σ_k ⟨G_k(g_from)|D_k|G_k(g_from)⟩.
pub fn sudden_quench_density(n: usize, g_from: f64) -> f64 {
    momenta(n)
        .iter()
        .map(|&k| defect_operator(k).expectation(ground_excited_pair(k, g_from).0))
        .sum::<f64>()
        / n as f64
}
