//! Per-mode time evolution under a sampled control field.
//!
//! The field is piecewise constant on each grid segment at its midpoint value
//! g_{m+1/2} = (g_m + g_{m+1})/2, and each step applies the closed-form 2×2
//! exponential exp(−i H_k(g_{m+1/2}) Δt). Both the evolved ground state φ_k
//! and the evolved excited state φ̄_k are carried so the gradient engine can
//! use the two-state decomposition of each mode.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{
    cat_component, defect_operator, ground_excited_pair, hamiltonian_vector, ModeIndex, ModeState,
    QuenchSpec,
};

/// Where a control field came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Linear,
    PowerLaw { r: f64 },
    Network,
    ExternalFile,
    Noisy {
        parent: Box<Provenance>,
        seed: u64,
        snr_db: f64,
    },
    Custom(String),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Linear => write!(f, "linear"),
            Provenance::PowerLaw { r } => write!(f, "power-law({r:?})"),
            Provenance::Network => write!(f, "network"),
            Provenance::ExternalFile => write!(f, "external-file"),
            Provenance::Noisy {
                parent,
                seed,
                snr_db,
            } => write!(f, "noisy({seed},{snr_db:?},{parent})"),
            Provenance::Custom(label) => write!(f, "custom({label})"),
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("unrecognized provenance `{s}`"));
        match s {
            "linear" => return Ok(Provenance::Linear),
            "network" => return Ok(Provenance::Network),
            "external-file" => return Ok(Provenance::ExternalFile),
            _ => {}
        }
        let open = s.find('(').ok_or_else(bad)?;
        if !s.ends_with(')') {
            return Err(bad());
        }
        let (head, inner) = (&s[..open], &s[open + 1..s.len() - 1]);
        match head {
            "power-law" => Ok(Provenance::PowerLaw {
                r: inner.parse().map_err(|_| bad())?,
            }),
            "custom" => Ok(Provenance::Custom(inner.to_string())),
            "noisy" => {
                let mut parts = inner.splitn(3, ',');
                let seed = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                let snr_db = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                let parent = parts.next().ok_or_else(bad)?.parse()?;
                Ok(Provenance::Noisy {
                    parent: Box::new(parent),
                    seed,
                    snr_db,
                })
            }
            _ => Err(bad()),
        }
    }
}

/// Samples g_m on the uniform grid, m = 0..=M.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlField {
    samples: Vec<f64>,
    pub provenance: Provenance,
}

impl ControlField {
    pub fn new(samples: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::Shape(format!(
                "a control field needs at least 3 samples, got {}",
                samples.len()
            )));
        }
        if let Some(m) = samples.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("control field sample {m}")));
        }
        Ok(Self {
            samples,
            provenance,
        })
    }

    pub fn from_fn(spec: &QuenchSpec, provenance: Provenance, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(spec.times().into_iter().map(f).collect(), provenance)
    }

    pub fn constant(spec: &QuenchSpec, g: f64) -> Result<Self> {
        Self::from_fn(spec, Provenance::Custom(format!("constant {g:?}")), |_| g)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.samples[0]
    }

    pub fn last(&self) -> f64 {
        self.samples[self.samples.len() - 1]
    }

    pub fn check_grid(&self, spec: &QuenchSpec) -> Result<()> {
        if self.samples.len() != spec.steps + 1 {
            return Err(Error::GridMismatch {
                expected: spec.steps + 1,
                got: self.samples.len(),
            });
        }
        Ok(())
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.samples.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Copy with one sample shifted; used by finite-difference probes.
    pub fn bumped(&self, m: usize, delta: f64) -> Self {
        let mut out = self.clone();
        out.samples[m] += delta;
        out
    }

    /// Two-column (t, g) table with a `#` header carrying N, T, M and provenance.
    pub fn write_table<W: Write>(&self, spec: &QuenchSpec, mut w: W) -> Result<()> {
        self.check_grid(spec)?;
        writeln!(
            w,
            "# N={} T={:?} M={} g_i={:?} g_f={:?} provenance={}",
            spec.n, spec.t_half, spec.steps, spec.g_i, spec.g_f, self.provenance
        )?;
        writeln!(w, "t,g")?;
        for (m, g) in self.samples.iter().enumerate() {
            writeln!(w, "{:?},{:?}", spec.time(m), g)?;
        }
        Ok(())
    }

    pub fn read_table<R: BufRead>(r: R) -> Result<(QuenchSpec, ControlField)> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty field file".into()))??;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("field file must start with a `#` header".into()))?;
        let (mut n, mut t, mut m, mut gi, mut gf, mut prov) = (None, None, None, None, None, None);
        let mut rest = header.trim();
        while !rest.is_empty() {
            let (key, tail) = rest
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header entry `{rest}`")))?;
            if key == "provenance" {
                prov = Some(tail.trim().to_string());
                break;
            }
            let (val, tail) = tail.split_once(' ').unwrap_or((tail, ""));
            let perr = |_| Error::Parse(format!("bad value for {key}: `{val}`"));
            match key {
                "N" => n = Some(val.parse::<usize>().map_err(|_| Error::Parse(format!("bad N `{val}`")))?),
                "T" => t = Some(val.parse::<f64>().map_err(perr)?),
                "M" => m = Some(val.parse::<usize>().map_err(|_| Error::Parse(format!("bad M `{val}`")))?),
                "g_i" => gi = Some(val.parse::<f64>().map_err(perr)?),
                "g_f" => gf = Some(val.parse::<f64>().map_err(perr)?),
                other => return Err(Error::Parse(format!("unknown header key `{other}`"))),
            }
            rest = tail.trim_start();
        }
        let missing = |what: &str| Error::Parse(format!("field header is missing {what}"));
        let spec = QuenchSpec::new(
            n.ok_or_else(|| missing("N"))?,
            t.ok_or_else(|| missing("T"))?,
            gi.ok_or_else(|| missing("g_i"))?,
            gf.ok_or_else(|| missing("g_f"))?,
            m.ok_or_else(|| missing("M"))?,
        )?;
        let provenance: Provenance = prov.ok_or_else(|| missing("provenance"))?.parse()?;
        match lines.next() {
            Some(Ok(l)) if l.trim() == "t,g" => {}
            _ => return Err(Error::Parse("expected `t,g` column header".into())),
        }
        let mut samples = Vec::with_capacity(spec.steps + 1);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (_, g) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("bad row `{line}`")))?;
            samples.push(
                g.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad g value in `{line}`")))?,
            );
        }
        let field = ControlField::new(samples, provenance)?;
        field.check_grid(&spec)?;
        Ok((spec, field))
    }
}

/// How much of the forward trajectory to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrajectoryMode {
    /// Y-streams plus final states.
    #[default]
    Compact,
    /// Additionally every (φ_k, φ̄_k) pair on the grid.
    Full,
}

/// Forward record of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTrack {
    pub k: ModeIndex,
    pub final_state: ModeState,
    pub final_excited: ModeState,
    /// ⟨φ̄_k(t_m)|Y_k|φ_k(t_m)⟩ at every grid point.
    pub y_grid: Vec<C64>,
    /// Exact discrete counterpart of `y_grid` for segment m:
    /// i⟨φ̄_k(t_{m+1})|∂U_m/∂g|φ_k(t_m)⟩/Δt. Tends to the midpoint value of
    /// ⟨φ̄|Y|φ⟩ as Δt → 0.
    pub y_step: Vec<C64>,
    /// (φ_k(t_m), φ̄_k(t_m)) for m = 0..=M, only in [`TrajectoryMode::Full`].
    pub history: Option<Vec<(ModeState, ModeState)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub spec: QuenchSpec,
    pub tracks: Vec<ModeTrack>,
}

impl TrajectoryRecord {
    pub fn final_states(&self) -> Vec<ModeState> {
        self.tracks.iter().map(|t| t.final_state).collect()
    }
}

/// Closed-form step propagator and its field derivative for one segment.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Step {
    u: [[C64; 2]; 2],
    du: [[C64; 2]; 2],
}

impl Step {
    /// U = cos(|h|Δt)·1 − i sin(|h|Δt)·(ĥ·σ) for H = hₓσˣ + h_zσᶻ, plus ∂U/∂g
    /// with ∂h_z/∂g = 2.
    #[inline]
    pub(crate) fn new(k_sin: f64, k_cos: f64, g: f64, dt: f64, with_derivative: bool) -> Self {
        let (hx, hz) = hamiltonian_vector(k_sin, k_cos, g);
        let r = (hx * hx + hz * hz).sqrt();
        let x = r * dt;
        let (sx, cx) = x.sin_cos();
        let s = sx / r;
        let u = [
            [C64::new(cx, -s * hz), C64::new(0.0, -s * hx)],
            [C64::new(0.0, -s * hx), C64::new(cx, s * hz)],
        ];
        let du = if with_derivative {
            let dr = 2.0 * hz / r;
            let dc = -sx * dt * dr;
            let ds = (dt * cx - s) / r * dr;
            let dz = ds * hz + 2.0 * s;
            [
                [C64::new(dc, -dz), C64::new(0.0, -ds * hx)],
                [C64::new(0.0, -ds * hx), C64::new(dc, dz)],
            ]
        } else {
            [[C64::new(0.0, 0.0); 2]; 2]
        };
        Self { u, du }
    }

    #[inline]
    fn apply(m: &[[C64; 2]; 2], v: ModeState) -> ModeState {
        ModeState {
            a: m[0][0] * v.a + m[0][1] * v.b,
            b: m[1][0] * v.a + m[1][1] * v.b,
        }
    }

    #[inline]
    pub(crate) fn propagate(&self, v: ModeState) -> ModeState {
        Self::apply(&self.u, v)
    }

    #[inline]
    pub(crate) fn derivative(&self, v: ModeState) -> ModeState {
        Self::apply(&self.du, v)
    }
}

#[inline]
fn y_element(bar: ModeState, phi: ModeState) -> C64 {
    // Y = 2σᶻ
    2.0 * (bar.a.conj() * phi.a - bar.b.conj() * phi.b)
}

fn track_mode(spec: &QuenchSpec, k: ModeIndex, mids: &[f64], mode: TrajectoryMode) -> ModeTrack {
    let (ks, kc) = k.k().sin_cos();
    let dt = spec.dt();
    let (mut phi, mut bar) = ground_excited_pair(k, spec.g_i);
    let mut y_grid = Vec::with_capacity(mids.len() + 1);
    let mut y_step = Vec::with_capacity(mids.len());
    let mut history = match mode {
        TrajectoryMode::Full => Some(Vec::with_capacity(mids.len() + 1)),
        TrajectoryMode::Compact => None,
    };
    y_grid.push(y_element(bar, phi));
    if let Some(h) = history.as_mut() {
        h.push((phi, bar));
    }
    for &g in mids {
        let step = Step::new(ks, kc, g, dt, true);
        let dphi = step.derivative(phi);
        phi = step.propagate(phi);
        bar = step.propagate(bar);
        let z = bar.inner(dphi);
        y_step.push(C64::new(-z.im, z.re) / dt);
        y_grid.push(y_element(bar, phi));
        if let Some(h) = history.as_mut() {
            h.push((phi, bar));
        }
    }
    ModeTrack {
        k,
        final_state: phi,
        final_excited: bar,
        y_grid,
        y_step,
        history,
    }
}

fn final_mode_state(spec: &QuenchSpec, k: ModeIndex, mids: &[f64]) -> ModeState {
    let (ks, kc) = k.k().sin_cos();
    let dt = spec.dt();
    let mut phi = ground_excited_pair(k, spec.g_i).0;
    for &g in mids {
        phi = Step::new(ks, kc, g, dt, false).propagate(phi);
    }
    phi
}

/// Evolves every mode from |G_k(g_i)⟩ and |Ḡ_k(g_i)⟩ and keeps compact streams.
pub fn evolve(spec: &QuenchSpec, field: &ControlField) -> Result<TrajectoryRecord> {
    evolve_with(spec, field, TrajectoryMode::Compact)
}

pub fn evolve_with(
    spec: &QuenchSpec,
    field: &ControlField,
    mode: TrajectoryMode,
) -> Result<TrajectoryRecord> {
    spec.validate()?;
    field.check_grid(spec)?;
    let mids = field.midpoints();
    let tracks = spec
        .modes()
        .par_iter()
        .map(|&k| track_mode(spec, k, &mids, mode))
        .collect();
    Ok(TrajectoryRecord {
        spec: *spec,
        tracks,
    })
}

/// Final φ_k(T) for every mode, without streams.
pub fn final_states(spec: &QuenchSpec, field: &ControlField) -> Result<Vec<ModeState>> {
    spec.validate()?;
    field.check_grid(spec)?;
    let mids = field.midpoints();
    Ok(spec
        .modes()
        .par_iter()
        .map(|&k| final_mode_state(spec, k, &mids))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableReport {
    /// ρ(T) = D(T)/N.
    pub defect_density: f64,
    /// F(T) = Π_k |⟨χ_k|φ_k(T)⟩|².
    pub cat_fidelity: f64,
    /// p_k = |⟨Ḡ_k(g_f)|φ_k(T)⟩|², in the order of K.
    pub excitation: Vec<f64>,
}

/// Observables from final mode states listed in the order of `spec.modes()`.
pub fn report_from_states(spec: &QuenchSpec, states: &[ModeState]) -> ObservableReport {
    let modes = spec.modes();
    debug_assert_eq!(modes.len(), states.len());
    let mut defects = 0.0;
    let mut fidelity = 1.0;
    let mut excitation = Vec::with_capacity(states.len());
    for (&k, &phi) in modes.iter().zip(states) {
        defects += defect_operator(k).expectation(phi);
        fidelity *= cat_component(k).inner(phi).norm_sqr();
        excitation.push(ground_excited_pair(k, spec.g_f).1.inner(phi).norm_sqr());
    }
    ObservableReport {
        defect_density: defects / spec.n as f64,
        cat_fidelity: fidelity,
        excitation,
    }
}

pub fn observables(spec: &QuenchSpec, traj: &TrajectoryRecord) -> ObservableReport {
    report_from_states(spec, &traj.final_states())
}

/// Evolve and measure in one go, skipping the streams.
pub fn evaluate(spec: &QuenchSpec, field: &ControlField) -> Result<ObservableReport> {
    Ok(report_from_states(spec, &final_states(spec, field)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub steps: usize,
    pub defect_density: f64,
    pub cat_fidelity: f64,
}

/// Observables of the same field resampled at each resolution in `step_list`.
pub fn convergence_check<F>(
    spec: &QuenchSpec,
    field_on: F,
    step_list: &[usize],
) -> Result<Vec<ConvergenceRow>>
where
    F: Fn(&QuenchSpec) -> Result<ControlField>,
{
    if step_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSpec("step list must be increasing".into()));
    }
    step_list
        .iter()
        .map(|&m| {
            let s = spec.with_steps(m);
            let report = evaluate(&s, &field_on(&s)?)?;
            Ok(ConvergenceRow {
                steps: m,
                defect_density: report.defect_density,
                cat_fidelity: report.cat_fidelity,
            })
        })
        .collect()
}

/// Smallest M in a doubling table whose ρ moves by less than `tol` at 2M.
pub fn converged_steps(rows: &[ConvergenceRow], tol: f64) -> Option<usize> {
    rows.windows(2)
        .find(|w| w[1].steps == 2 * w[0].steps && (w[1].defect_density - w[0].defect_density).abs() < tol)
        .map(|w| w[0].steps)
}
