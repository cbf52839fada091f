//! Growable-network optimizer for Q = q₁·O + q₂·ℒ.
//!
//! O is ρ(T) for the defect objective and −F(T) for the fidelity objective.
//! Between growth events every parameter takes a normalized descent step;
//! a growth event appends neurons, trains only those for a few steps and
//! keeps them when both O and ℒ improved.

use std::io::{Read, Write};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{network_field, normalized_times, optimize_power_law, power_law_value, FieldScale};
use crate::gradient::{observable_gradient, Observable};
use crate::ising::QuenchSpec;
use crate::network::{uniform, Block, NetworkParams};
use crate::propagator::{evolve, observables, ControlField, ObservableReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningRates {
    pub w1: f64,
    pub b1: f64,
    pub w2: f64,
    pub b2: f64,
    pub w3: f64,
}

impl LearningRates {
    pub fn get(&self, b: Block) -> f64 {
        match b {
            Block::W1 => self.w1,
            Block::B1 => self.b1,
            Block::W2 => self.w2,
            Block::B2 => self.b2,
            Block::W3 => self.w3,
        }
    }
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            w1: 0.05,
            b1: 0.05,
            w2: 0.05,
            b2: 0.05,
            w3: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    /// Target exponent; `None` runs the power-law optimizer first.
    pub exponent: Option<f64>,
    pub max_iters: usize,
    /// Stop once the RMS residual on the grid falls below this.
    pub tol: f64,
    /// Fit points, spread uniformly over [−T, T].
    pub points: usize,
    /// Half-width of the uniform start for W1 and B1.
    pub input_range: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            exponent: None,
            max_iters: 5000,
            tol: 1e-3,
            points: 401,
            input_range: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub n1: usize,
    pub n2: usize,
    pub grow_n1: usize,
    pub grow_n2: usize,
    pub max_n1: usize,
    pub max_n2: usize,
    pub lr: LearningRates,
    pub q1: f64,
    pub q2: f64,
    /// Extra factor on the observable gradient inside the update.
    pub observable_grad_factor: f64,
    pub init_range: f64,
    /// Endpoint targets of ℒ; default to g_i and g_f.
    pub target_start: Option<f64>,
    pub target_end: Option<f64>,
    pub objective: Observable,
    pub max_iters: usize,
    pub stall_window: usize,
    /// Growth is attempted each time this many iterations pass without
    /// improving the incumbent; `None` means stall_window / 4.
    pub growth_interval: Option<usize>,
    pub trial_steps: usize,
    pub relax: f64,
    /// Smallest decrease of the incumbent Q that resets the stall counter.
    pub improve_tol: f64,
    /// Halve the step after a rejected descent step instead of accepting it.
    pub backtracking: bool,
    pub scale: Option<FieldScale>,
    pub pretrain: Option<PretrainConfig>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n1: 10,
            n2: 25,
            grow_n1: 5,
            grow_n2: 10,
            max_n1: 60,
            max_n2: 125,
            lr: LearningRates::default(),
            q1: 5.0,
            q2: 1.0,
            observable_grad_factor: 1.0,
            init_range: 0.1,
            target_start: None,
            target_end: None,
            objective: Observable::Defect,
            max_iters: 10000,
            stall_window: 200,
            growth_interval: None,
            trial_steps: 50,
            relax: 1.02,
            improve_tol: 1e-10,
            backtracking: true,
            scale: None,
            pretrain: Some(PretrainConfig::default()),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n1 == 0 || self.n2 == 0 {
            return bad("hidden widths must be positive");
        }
        if self.max_n1 < self.n1 || self.max_n2 < self.n2 {
            return bad("width caps below the initial widths");
        }
        for b in Block::ALL {
            let l = self.lr.get(b);
            if !(l.is_finite() && l > 0.0) {
                return bad("learning rates must be positive");
            }
        }
        if !(self.q1.is_finite() && self.q2.is_finite() && self.init_range >= 0.0) {
            return bad("q1, q2 must be finite and init_range non-negative");
        }
        if self.stall_window < 4 || self.growth_interval == Some(0) {
            return bad("stall_window must be at least 4 and growth_interval positive");
        }
        if self.relax.is_nan() || self.relax < 1.0 {
            return bad("relax must be at least 1");
        }
        Ok(())
    }

    pub fn growth_interval(&self) -> usize {
        self.growth_interval.unwrap_or(self.stall_window / 4).max(1)
    }

    pub fn targets(&self, spec: &QuenchSpec) -> (f64, f64) {
        (self.target_start.unwrap_or(spec.g_i), self.target_end.unwrap_or(spec.g_f))
    }

    /// Affine output map; by default centred between the endpoint targets
    /// with unit scale.
    pub fn field_scale(&self, spec: &QuenchSpec) -> FieldScale {
        self.scale.unwrap_or_else(|| {
            let (r, s) = self.targets(spec);
            FieldScale {
                offset: 0.5 * (r + s),
                scale: 1.0,
            }
        })
    }
}

/// ℒ = (g(−T) − r)² + (g(T) − s)².
pub fn endpoint_loss(field: &ControlField, r: f64, s: f64) -> f64 {
    (field.first() - r).powi(2) + (field.last() - s).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub q: f64,
    pub o: f64,
    pub loss: f64,
    pub defect_density: f64,
    pub cat_fidelity: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub score: Score,
    pub field: ControlField,
    pub report: ObservableReport,
    /// ∂Q/∂θ, unnormalized.
    pub grads: NetworkParams,
}

fn objective_value(which: Observable, rep: &ObservableReport) -> f64 {
    match which {
        Observable::Defect => rep.defect_density,
        Observable::Fidelity => -rep.cat_fidelity,
    }
}

/// Q, O, ℒ and ∂Q/∂θ for every network parameter.
pub fn objective_and_gradients(
    spec: &QuenchSpec,
    params: &NetworkParams,
    cfg: &OptimizerConfig,
) -> Result<Evaluation> {
    params.validate()?;
    let scale = cfg.field_scale(spec);
    let field = network_field(spec, params, scale)?;
    let traj = evolve(spec, &field)?;
    let report = observables(spec, &traj);
    let o = objective_value(cfg.objective, &report);
    let (r, s) = cfg.targets(spec);
    let loss = endpoint_loss(&field, r, s);
    let q = cfg.q1 * o + cfg.q2 * loss;

    let grad = observable_gradient(spec, &traj, cfg.objective)?;
    let sign = match cfg.objective {
        Observable::Defect => 1.0,
        Observable::Fidelity => -1.0,
    };
    let dt = spec.dt();
    let weight = cfg.q1 * cfg.observable_grad_factor * sign * dt * scale.scale;
    let mut upstream: Vec<f64> = grad.samples.iter().map(|d| weight * d).collect();
    let last = upstream.len() - 1;
    upstream[0] += cfg.q2 * 2.0 * (field.first() - r) * scale.scale;
    upstream[last] += cfg.q2 * 2.0 * (field.last() - s) * scale.scale;
    let grads = params.vjp(&normalized_times(spec), &upstream);
    if !grads.iter().all(|g| g.is_finite()) {
        return Err(Error::NonFinite("parameter gradient".into()));
    }
    Ok(Evaluation {
        score: Score {
            q,
            o,
            loss,
            defect_density: report.defect_density,
            cat_fidelity: report.cat_fidelity,
        },
        field,
        report,
        grads,
    })
}

/// Which parameters a step may touch: `None` means all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthMask {
    pub old_n1: usize,
    pub old_n2: usize,
}

impl GrowthMask {
    /// True for entries added by the growth event.
    pub fn is_new(&self, params: &NetworkParams, b: Block, idx: usize) -> bool {
        match b {
            Block::W1 | Block::B1 => idx >= self.old_n1,
            Block::B2 | Block::W3 => idx >= self.old_n2,
            Block::W2 => {
                let (row, col) = (idx / params.n1, idx % params.n1);
                row >= self.old_n2 || col >= self.old_n1
            }
        }
    }
}

/// θ ← θ − l_b·scale·g_b/‖g_b‖_∞ per block, restricted to `mask` if given.
pub fn descent_step(
    params: &NetworkParams,
    grads: &NetworkParams,
    cfg: &OptimizerConfig,
    mask: Option<&GrowthMask>,
    step_scale: f64,
) -> Result<NetworkParams> {
    if params.n1 != grads.n1 || params.n2 != grads.n2 {
        return Err(Error::Shape("gradient shape differs from parameters".into()));
    }
    if !grads.iter().all(|g| g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    let mut next = params.clone();
    for b in Block::ALL {
        let g = grads.block(b);
        let active = |i: usize| mask.is_none_or(|m| m.is_new(params, b, i));
        let norm = (0..g.len())
            .filter(|&i| active(i))
            .fold(0.0_f64, |a, i| a.max(g[i].abs()));
        if norm == 0.0 {
            continue;
        }
        let step = cfg.lr.get(b) * step_scale / norm;
        let dst = next.block_mut(b);
        for i in 0..g.len() {
            if active(i) {
                dst[i] -= step * g[i];
            }
        }
    }
    Ok(next)
}

/// Appends δn₁ first-layer and δn₂ second-layer neurons with entries drawn
/// uniformly from [−init_range, init_range]; old entries are copied.
pub fn grow<R: rand::Rng + ?Sized>(
    params: &NetworkParams,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> (NetworkParams, GrowthMask) {
    let (n1, n2) = (params.n1, params.n2);
    let (m1, m2) = (n1 + cfg.grow_n1, n2 + cfg.grow_n2);
    let a = cfg.init_range;
    let mut out = NetworkParams::zeros(m1, m2);
    for i in 0..m1 {
        if i < n1 {
            out.w1[i] = params.w1[i];
            out.b1[i] = params.b1[i];
        } else {
            out.w1[i] = uniform(rng, a);
            out.b1[i] = uniform(rng, a);
        }
    }
    for j in 0..m2 {
        for i in 0..m1 {
            out.w2[j * m1 + i] = if j < n2 && i < n1 {
                params.w2[j * n1 + i]
            } else {
                uniform(rng, a)
            };
        }
        if j < n2 {
            out.b2[j] = params.b2[j];
            out.w3[j] = params.w3[j];
        } else {
            out.b2[j] = uniform(rng, a);
            out.w3[j] = uniform(rng, a);
        }
    }
    (out, GrowthMask { old_n1: n1, old_n2: n2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub exponent: f64,
    pub iterations: usize,
    pub rms_residual: f64,
    pub max_residual: f64,
}

/// Levenberg-Marquardt fit of the network field to the power law g_r on an
/// evenly spaced subset of the grid.
pub fn pretrain<R: rand::Rng + ?Sized>(
    spec: &QuenchSpec,
    cfg: &OptimizerConfig,
    pre: &PretrainConfig,
    exponent: f64,
    rng: &mut R,
) -> Result<(NetworkParams, PretrainReport)> {
    let mut p = NetworkParams::random(cfg.n1, cfg.n2, cfg.init_range, rng);
    for b in [Block::W1, Block::B1] {
        for x in p.block_mut(b) {
            *x = uniform(rng, pre.input_range);
        }
    }
    let scale = cfg.field_scale(spec);
    let pts = pre.points.max(3);
    let xs: Vec<f64> = (0..pts)
        .map(|i| -1.0 + 2.0 * i as f64 / (pts - 1) as f64)
        .collect();
    let target: Vec<f64> = xs
        .iter()
        .map(|&x| (power_law_value(spec, exponent, x * spec.t_half) - scale.offset) / scale.scale)
        .collect();
    let residuals = |p: &NetworkParams| -> Vec<f64> {
        p.outputs(&xs).iter().zip(&target).map(|(f, t)| f - t).collect()
    };
    let rms = |r: &[f64]| (r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt();
    let np = p.param_count();
    let mut res = residuals(&p);
    let mut cost = rms(&res);
    let mut lambda = 1e-3;
    let mut iters = 0;
    while iters < pre.max_iters && cost * scale.scale.abs() > pre.tol {
        iters += 1;
        let mut jac = DMatrix::<f64>::zeros(pts, np);
        for (row, &x) in xs.iter().enumerate() {
            for (col, v) in p.jacobian_row(x).into_iter().enumerate() {
                jac[(row, col)] = v;
            }
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let jtr = &jt * DVector::from_vec(res.clone());
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj.clone();
            for i in 0..np {
                a[(i, i)] += lambda * (jtj[(i, i)] + 1e-12);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&jtr);
            let theta: Vec<f64> = p.to_vec().iter().zip(delta.iter()).map(|(t, d)| t - d).collect();
            let mut trial = p.clone();
            trial.set_from_slice(&theta);
            let r = residuals(&trial);
            let c = rms(&r);
            if c.is_finite() && c < cost {
                p = trial;
                res = r;
                cost = c;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    // Residual on the full grid.
    let grid = network_field(spec, &p, scale)?;
    let max_residual = grid
        .samples()
        .iter()
        .zip(spec.times())
        .fold(0.0_f64, |a, (g, t)| a.max((g - power_law_value(spec, exponent, t)).abs()));
    Ok((
        p,
        PretrainReport {
            exponent,
            iterations: iters,
            rms_residual: cost * scale.scale.abs(),
            max_residual,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Descent,
    Growth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub kind: StepKind,
    /// Descent step taken, or growth kept.
    pub accepted: bool,
    /// Growth kept under the relaxed rule.
    pub relaxed: bool,
    pub o: f64,
    pub loss: f64,
    pub q: f64,
    pub best_q: f64,
    pub n1: usize,
    pub n2: usize,
    /// Largest |Δg| caused by inserting the new neurons, growth events only.
    pub growth_shift: Option<f64>,
}

/// Per-iteration records of the current point. Wall times are kept apart and
/// do not take part in equality.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LearningTrace {
    pub entries: Vec<TraceEntry>,
    pub wall_seconds: Vec<f64>,
}

impl PartialEq for LearningTrace {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl LearningTrace {
    fn push(&mut self, entry: TraceEntry, wall: f64) {
        debug_assert!(self.entries.last().is_none_or(|e| e.iteration < entry.iteration));
        self.entries.push(entry);
        self.wall_seconds.push(wall);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn growth_events(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind == StepKind::Growth && e.accepted)
            .count()
    }

    pub fn write_table<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,kind,accepted,relaxed,O,L,Q,best_Q,n1,n2,wall_s")?;
        for (e, t) in self.entries.iter().zip(&self.wall_seconds) {
            let kind = match e.kind {
                StepKind::Descent => "descent",
                StepKind::Growth => "growth",
            };
            writeln!(
                w,
                "{},{kind},{},{},{:?},{:?},{:?},{:?},{},{},{:?}",
                e.iteration, e.accepted, e.relaxed, e.o, e.loss, e.q, e.best_q, e.n1, e.n2, t
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxIters,
    Stalled,
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcnnState {
    pub spec: QuenchSpec,
    pub config: OptimizerConfig,
    pub seed: u64,
    pub rng_word_pos: u128,
    pub iteration: usize,
    pub current: NetworkParams,
    pub current_score: Score,
    pub best: NetworkParams,
    pub best_score: Score,
    pub step_scale: f64,
    pub stall: usize,
    pub pretrain: Option<PretrainReport>,
    pub trace: LearningTrace,
    pub stopped: Option<StopReason>,
}

#[derive(Debug, Clone)]
pub struct DcnnOutcome {
    pub params: NetworkParams,
    pub field: ControlField,
    pub score: Score,
    pub trace: LearningTrace,
    pub state: DcnnState,
}

fn rng_at(seed: u64, word_pos: u128) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(word_pos);
    rng
}

impl DcnnState {
    /// Initial network (pretrained or random) and its score.
    pub fn init(spec: &QuenchSpec, cfg: &OptimizerConfig, seed: u64) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (params, report) = match &cfg.pretrain {
            Some(pre) => {
                let r = match pre.exponent {
                    Some(r) => r,
                    None => optimize_power_law(spec, cfg.objective)?.r,
                };
                let (p, rep) = pretrain(spec, cfg, pre, r, &mut rng)?;
                (p, Some(rep))
            }
            None => (NetworkParams::random(cfg.n1, cfg.n2, cfg.init_range, &mut rng), None),
        };
        let eval = objective_and_gradients(spec, &params, cfg)?;
        Ok(Self {
            spec: *spec,
            config: cfg.clone(),
            seed,
            rng_word_pos: rng.get_word_pos(),
            iteration: 0,
            best: params.clone(),
            best_score: eval.score,
            current: params,
            current_score: eval.score,
            step_scale: 1.0,
            stall: 0,
            pretrain: report,
            trace: LearningTrace::default(),
            stopped: None,
        })
    }

    /// Runs until `max_iters` or a stall stop, whichever comes first.
    pub fn run(&mut self) -> Result<()> {
        let limit = self.config.max_iters;
        self.advance(limit)
    }

    /// Runs up to iteration `until` (capped by `max_iters`).
    pub fn advance(&mut self, until: usize) -> Result<()> {
        let spec = self.spec;
        let cfg = self.config.clone();
        let until = until.min(cfg.max_iters);
        let mut rng = rng_at(self.seed, self.rng_word_pos);
        let mut eval = objective_and_gradients(&spec, &self.current, &cfg)?;
        let start = Instant::now();
        let interval = cfg.growth_interval();
        while self.stopped.is_none() && self.iteration < until {
            self.iteration += 1;
            let can_grow = self.current.n1 + cfg.grow_n1 <= cfg.max_n1
                && self.current.n2 + cfg.grow_n2 <= cfg.max_n2;
            let growth_due = self.stall > 0 && self.stall.is_multiple_of(interval);
            let entry = if growth_due && can_grow {
                let relaxed_allowed = self.stall >= cfg.stall_window;
                let (entry, next) = self.growth_attempt(&spec, &cfg, &eval, relaxed_allowed, &mut rng)?;
                if let Some(next) = next {
                    eval = next;
                }
                if !entry.accepted && relaxed_allowed {
                    self.stopped = Some(StopReason::Stalled);
                }
                entry
            } else if growth_due && self.stall >= cfg.stall_window {
                self.stopped = Some(StopReason::Stalled);
                continue;
            } else {
                let cand = descent_step(&self.current, &eval.grads, &cfg, None, self.step_scale)?;
                let ce = objective_and_gradients(&spec, &cand, &cfg)?;
                let accepted = !cfg.backtracking || ce.score.q < eval.score.q;
                if accepted {
                    self.current = cand;
                    eval = ce;
                    self.step_scale = (self.step_scale * 1.25).min(1.0);
                } else {
                    self.step_scale = (self.step_scale * 0.5).max(1e-12);
                }
                self.entry(StepKind::Descent, accepted, false, &eval.score, None)
            };
            self.current_score = eval.score;
            let improved = eval.score.q < self.best_score.q - cfg.improve_tol;
            if eval.score.q < self.best_score.q {
                self.best = self.current.clone();
                self.best_score = eval.score;
            }
            if improved || (entry.kind == StepKind::Growth && entry.accepted) {
                self.stall = 0;
            } else {
                self.stall += 1;
            }
            let mut entry = entry;
            entry.best_q = self.best_score.q;
            self.trace.push(entry, start.elapsed().as_secs_f64());
        }
        if self.stopped.is_none() && self.iteration >= cfg.max_iters {
            self.stopped = Some(StopReason::MaxIters);
        }
        self.rng_word_pos = rng.get_word_pos();
        Ok(())
    }

    fn entry(&self, kind: StepKind, accepted: bool, relaxed: bool, s: &Score, shift: Option<f64>) -> TraceEntry {
        TraceEntry {
            iteration: self.iteration,
            kind,
            accepted,
            relaxed,
            o: s.o,
            loss: s.loss,
            q: s.q,
            best_q: s.q,
            n1: self.current.n1,
            n2: self.current.n2,
            growth_shift: shift,
        }
    }

    fn growth_attempt(
        &mut self,
        spec: &QuenchSpec,
        cfg: &OptimizerConfig,
        eval: &Evaluation,
        relaxed_allowed: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(TraceEntry, Option<Evaluation>)> {
        let (mut trial, mask) = grow(&self.current, cfg, rng);
        let mut te = objective_and_gradients(spec, &trial, cfg)?;
        let shift = te
            .field
            .samples()
            .iter()
            .zip(eval.field.samples())
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
        let mut scale = 1.0;
        for _ in 0..cfg.trial_steps {
            let cand = descent_step(&trial, &te.grads, cfg, Some(&mask), scale)?;
            let ce = objective_and_gradients(spec, &cand, cfg)?;
            if !cfg.backtracking || ce.score.q < te.score.q {
                trial = cand;
                te = ce;
                scale = (scale * 1.25).min(1.0);
            } else {
                scale *= 0.5;
            }
        }
        let (old, new) = (eval.score, te.score);
        let strict = new.o < old.o && new.loss < old.loss;
        let slack = |v: f64| v + (cfg.relax - 1.0) * v.abs();
        let relaxed = !strict && relaxed_allowed && new.o <= slack(old.o) && new.loss <= slack(old.loss);
        if strict || relaxed {
            self.current = trial;
            self.step_scale = 1.0;
            let entry = self.entry(StepKind::Growth, true, relaxed, &new, Some(shift));
            Ok((entry, Some(te)))
        } else {
            let entry = self.entry(StepKind::Growth, false, false, &old, Some(shift));
            Ok((entry, None))
        }
    }

    pub fn outcome(&self) -> Result<DcnnOutcome> {
        let field = network_field(&self.spec, &self.best, self.config.field_scale(&self.spec))?;
        Ok(DcnnOutcome {
            params: self.best.clone(),
            field,
            score: self.best_score,
            trace: self.trace.clone(),
            state: self.clone(),
        })
    }
}

/// Full run from seed: optional pretraining, then the descent/growth loop.
pub fn run_dcnn(spec: &QuenchSpec, cfg: &OptimizerConfig, seed: u64) -> Result<DcnnOutcome> {
    let mut state = DcnnState::init(spec, cfg, seed)?;
    state.run()?;
    state.outcome()
}

pub const CHECKPOINT_FORMAT: &str = "dcnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    state: DcnnState,
}

pub fn save_checkpoint<W: Write>(state: &DcnnState, w: W) -> Result<()> {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        state: state.clone(),
    };
    serde_json::to_writer_pretty(w, &ck).map_err(|e| Error::Parse(e.to_string()))
}

pub fn load_checkpoint<R: Read>(r: R) -> Result<DcnnState> {
    let ck: Checkpoint = serde_json::from_reader(r).map_err(|e| Error::Parse(e.to_string()))?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported checkpoint {} v{}",
            ck.format, ck.version
        )));
    }
    ck.state.current.validate()?;
    ck.state.best.validate()?;
    Ok(ck.state)
}

/// Parameter count after `events` accepted growth events from (n1, n2).
pub fn grown_param_count(cfg: &OptimizerConfig, events: usize) -> usize {
    crate::network::param_count(cfg.n1 + events * cfg.grow_n1, cfg.n2 + events * cfg.grow_n2)
}
