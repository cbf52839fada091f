//! Functional gradients δO(T)/δg(t) of the final defect density and the final
//! cat-state fidelity.
//!
//! Every mode contributes through its two-state decomposition: with
//! β_k = ⟨φ_k(T)|O_k|φ̄_k(T)⟩, an additive observable has
//!
//! ```text
//! δO/δg(t) = 2 Im Σ_k β_k ⟨φ̄_k(t)|Y_k|φ_k(t)⟩
//! ```
//!
//! and a product observable divides each mode term by ⟨φ_k(T)|O_k|φ_k(T)⟩ and
//! multiplies by the full product. The analytic routes here use the exact
//! per-segment stream `y_step`, so they equal the gradient of the discretized
//! evolution, not only its Δt → 0 limit.
//!
//! Gradients are stored as densities: sample m holds (∂O/∂g_m)/Δt, so a
//! parameter chain rule is Σ_m Δt·dO_m·∂g_m/∂θ.

use std::io::Write;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{cat_component, defect_operator, y_operator, QuenchSpec};
use crate::propagator::{evaluate, ControlField, ModeTrack, Step, TrajectoryRecord};

/// Which final observable a gradient refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    /// ρ(T)
    #[default]
    Defect,
    /// F(T)
    Fidelity,
}

impl std::fmt::Display for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Observable::Defect => "defect",
            Observable::Fidelity => "fidelity",
        })
    }
}

impl std::str::FromStr for Observable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "defect" => Ok(Observable::Defect),
            "fidelity" => Ok(Observable::Fidelity),
            other => Err(Error::Parse(format!("unknown objective `{other}`"))),
        }
    }
}

/// δO(T)/δg(t_m) on the grid, m = 0..=M, in the density convention.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGradient {
    pub samples: Vec<f64>,
}

impl FieldGradient {
    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |a, x| a.max(x.abs()))
    }

    /// ‖self − other‖_∞ / ‖other‖_∞.
    pub fn relative_error(&self, reference: &FieldGradient) -> f64 {
        let diff = self
            .samples
            .iter()
            .zip(&reference.samples)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
        diff / reference.max_abs()
    }

    pub fn cosine(&self, other: &FieldGradient) -> f64 {
        let dot: f64 = self.samples.iter().zip(&other.samples).map(|(a, b)| a * b).sum();
        let na: f64 = self.samples.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = other.samples.iter().map(|a| a * a).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    pub fn write_table<W: Write>(&self, spec: &QuenchSpec, mut w: W) -> Result<()> {
        writeln!(w, "t,dO")?;
        for (m, v) in self.samples.iter().enumerate() {
            writeln!(w, "{:?},{:?}", spec.time(m), v)?;
        }
        Ok(())
    }

    /// Spreads per-segment derivatives ∂O/∂g_{m+1/2} onto grid samples and
    /// divides by Δt.
    fn from_segments(spec: &QuenchSpec, seg: &[f64]) -> Self {
        let dt = spec.dt();
        let m_max = seg.len();
        let samples = (0..=m_max)
            .map(|m| {
                let left = if m > 0 { seg[m - 1] } else { 0.0 };
                let right = if m < m_max { seg[m] } else { 0.0 };
                0.5 * (left + right) / dt
            })
            .collect();
        Self { samples }
    }
}

fn check_streams(spec: &QuenchSpec, traj: &TrajectoryRecord) -> Result<()> {
    if traj.tracks.len() != spec.n / 2 {
        return Err(Error::Shape(format!(
            "trajectory holds {} modes, N = {} needs {}",
            traj.tracks.len(),
            spec.n,
            spec.n / 2
        )));
    }
    if traj
        .tracks
        .iter()
        .any(|t| t.y_step.len() != spec.steps || t.y_grid.len() != spec.steps + 1)
    {
        return Err(Error::MissingStream);
    }
    Ok(())
}

/// Segment-resolved ∂O/∂g_{m+1/2} = 2Δt·Σ_k Im[c_k·ỹ_{k,m}] for per-mode
/// coefficients c_k, summed in the fixed order of K.
fn segment_sum(spec: &QuenchSpec, tracks: &[ModeTrack], coeffs: &[C64], scale: f64) -> Vec<f64> {
    let dt = spec.dt();
    (0..spec.steps)
        .map(|m| {
            let mut acc = 0.0;
            for (tr, c) in tracks.iter().zip(coeffs) {
                acc += (c * tr.y_step[m]).im;
            }
            2.0 * dt * scale * acc
        })
        .collect()
}

/// δρ(T)/δg(t).
pub fn defect_gradient(spec: &QuenchSpec, traj: &TrajectoryRecord) -> Result<FieldGradient> {
    check_streams(spec, traj)?;
    let coeffs: Vec<C64> = traj
        .tracks
        .iter()
        .map(|t| defect_operator(t.k).element(t.final_state, t.final_excited))
        .collect();
    let seg = segment_sum(spec, &traj.tracks, &coeffs, 1.0 / spec.n as f64);
    Ok(FieldGradient::from_segments(spec, &seg))
}

/// δF(T)/δg(t) in the ratio form F·Σ_k (∂f_k)/f_k.
pub fn fidelity_gradient(spec: &QuenchSpec, traj: &TrajectoryRecord) -> Result<FieldGradient> {
    check_streams(spec, traj)?;
    let mut fidelity = 1.0;
    let mut coeffs = Vec::with_capacity(traj.tracks.len());
    for t in &traj.tracks {
        let chi = cat_component(t.k);
        let over = chi.inner(t.final_state);
        if over.norm() < 1e-12 {
            return Err(Error::NearZeroOverlap {
                k: t.k.k(),
                overlap: over.norm(),
            });
        }
        fidelity *= over.norm_sqr();
        coeffs.push(chi.inner(t.final_excited) / over);
    }
    let seg = segment_sum(spec, &traj.tracks, &coeffs, fidelity);
    Ok(FieldGradient::from_segments(spec, &seg))
}

/// δF(T)/δg(t) via the product rule Σ_k (Π_{k'≠k} f_k')·∂f_k; no division.
pub fn fidelity_gradient_expanded(
    spec: &QuenchSpec,
    traj: &TrajectoryRecord,
) -> Result<FieldGradient> {
    check_streams(spec, traj)?;
    let f: Vec<f64> = traj
        .tracks
        .iter()
        .map(|t| cat_component(t.k).inner(t.final_state).norm_sqr())
        .collect();
    let n = f.len();
    let mut prefix = vec![1.0; n + 1];
    let mut suffix = vec![1.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] * f[i];
        suffix[n - 1 - i] = suffix[n - i] * f[n - 1 - i];
    }
    let coeffs: Vec<C64> = traj
        .tracks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let chi = cat_component(t.k);
            let others = prefix[i] * suffix[i + 1];
            others * t.final_state.inner(chi) * chi.inner(t.final_excited)
        })
        .collect();
    let seg = segment_sum(spec, &traj.tracks, &coeffs, 1.0);
    Ok(FieldGradient::from_segments(spec, &seg))
}

/// Ratio form, switching to the product-rule form when an overlap vanishes.
pub fn fidelity_gradient_robust(
    spec: &QuenchSpec,
    traj: &TrajectoryRecord,
) -> Result<FieldGradient> {
    match fidelity_gradient(spec, traj) {
        Err(Error::NearZeroOverlap { .. }) => fidelity_gradient_expanded(spec, traj),
        other => other,
    }
}

pub fn observable_gradient(
    spec: &QuenchSpec,
    traj: &TrajectoryRecord,
    which: Observable,
) -> Result<FieldGradient> {
    match which {
        Observable::Defect => defect_gradient(spec, traj),
        Observable::Fidelity => fidelity_gradient_robust(spec, traj),
    }
}

pub fn observable_value(spec: &QuenchSpec, field: &ControlField, which: Observable) -> Result<f64> {
    let rep = evaluate(spec, field)?;
    Ok(match which {
        Observable::Defect => rep.defect_density,
        Observable::Fidelity => rep.cat_fidelity,
    })
}

/// Central differences of O(T) under single-sample bumps of size ε,
/// rescaled by 1/Δt. Costs 2(M+1) full evolutions.
pub fn finite_difference_oracle(
    spec: &QuenchSpec,
    field: &ControlField,
    which: Observable,
    eps: f64,
) -> Result<FieldGradient> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidSpec(format!("ε = {eps:e} outside [1e-7, 1e-3]")));
    }
    field.check_grid(spec)?;
    let dt = spec.dt();
    let samples = (0..field.len())
        .into_par_iter()
        .map(|m| {
            let up = observable_value(spec, &field.bumped(m, eps), which)?;
            let down = observable_value(spec, &field.bumped(m, -eps), which)?;
            Ok((up - down) / (2.0 * eps * dt))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(FieldGradient { samples })
}

/// Continuum gradient of an additive mode-sum observable at the grid points
/// from the compact two-state formula and the raw stream `y_grid`.
pub fn mode_sum_grid_gradient(
    spec: &QuenchSpec,
    traj: &TrajectoryRecord,
    which: Observable,
) -> Result<FieldGradient> {
    check_streams(spec, traj)?;
    if which != Observable::Defect {
        return Err(Error::InvalidSpec("mode-sum form applies to additive observables".into()));
    }
    let coeffs: Vec<C64> = traj
        .tracks
        .iter()
        .map(|t| defect_operator(t.k).element(t.final_state, t.final_excited))
        .collect();
    let scale = 2.0 / spec.n as f64;
    let samples = (0..=spec.steps)
        .map(|m| {
            let acc: f64 = traj
                .tracks
                .iter()
                .zip(&coeffs)
                .map(|(t, c)| (c * t.y_grid[m]).im)
                .sum();
            scale * acc
        })
        .collect();
    Ok(FieldGradient { samples })
}

/// The same continuum quantity without the two-state identity:
/// 2 Im Σ_k ⟨φ_k(T)|D_k U_k(T, t_m) Y_k|φ_k(t_m)⟩, propagating Y_k|φ_k(t_m)⟩
/// forward from every grid point. O(M²) per mode; small instances only.
pub fn heisenberg_defect_gradient(
    spec: &QuenchSpec,
    field: &ControlField,
    traj: &TrajectoryRecord,
) -> Result<FieldGradient> {
    field.check_grid(spec)?;
    let dt = spec.dt();
    let mids = field.midpoints();
    let mut samples = vec![0.0; spec.steps + 1];
    for tr in &traj.tracks {
        let hist = tr.history.as_ref().ok_or(Error::MissingStream)?;
        let (ks, kc) = tr.k.k().sin_cos();
        let steps: Vec<Step> = mids.iter().map(|&g| Step::new(ks, kc, g, dt, false)).collect();
        let d = defect_operator(tr.k);
        let y = y_operator(tr.k);
        for (m, (phi, _)) in hist.iter().enumerate() {
            let mut psi = y.apply(*phi);
            for step in &steps[m..] {
                psi = step.propagate(psi);
            }
            samples[m] += 2.0 * d.element(tr.final_state, psi).im / spec.n as f64;
        }
    }
    Ok(FieldGradient { samples })
}
