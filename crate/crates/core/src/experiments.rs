//! Experiment runners: T–N scans, initial-field sweeps, speed-limit estimate,
//! noise and spin-number robustness, and cost profiling. Every runner returns
//! plain rows that serialize to CSV with a `# key: value` header.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dcnn::{descent_step, grow, objective_and_gradients, run_dcnn, OptimizerConfig};
use crate::error::{Error, Result};
use crate::fields::{add_awgn, optimize_power_law, power_law_field, NoiseSpec};
use crate::gradient::Observable;
use crate::ising::{dispersion, QuenchSpec};
use crate::network::NetworkParams;
use crate::propagator::{evaluate, ControlField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ScanTn,
    GiSweep,
    Qsl,
    Noise,
    SpinFluct,
    Cost,
    Optimize,
    Evolve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: Vec<usize>,
    /// Explicit half-durations.
    pub t: Vec<f64>,
    /// Half-durations given as multiples of N.
    pub t_over_n: Vec<f64>,
    pub g_i: f64,
    pub g_f: f64,
    /// Time steps; the default rule applies when absent.
    pub steps: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: vec![24],
            t: Vec::new(),
            t_over_n: vec![0.25],
            g_i: 2.0,
            g_f: 0.0,
            steps: None,
        }
    }
}

impl GridConfig {
    /// Every (N, T) cell: explicit T first, then T/N multiples, per N.
    pub fn cells(&self) -> Result<Vec<QuenchSpec>> {
        let mut out = Vec::new();
        for &n in &self.n {
            let ts = self
                .t
                .iter()
                .copied()
                .chain(self.t_over_n.iter().map(|r| r * n as f64));
            for t in ts {
                out.push(self.spec(n, t)?);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("the grid has no (N, T) cells".into()));
        }
        Ok(out)
    }

    pub fn spec(&self, n: usize, t: f64) -> Result<QuenchSpec> {
        match self.steps {
            Some(m) => QuenchSpec::new(n, t, self.g_i, self.g_f, m),
            None => QuenchSpec::with_default_steps(n, t, self.g_i, self.g_f),
        }
    }

    pub fn first(&self) -> Result<QuenchSpec> {
        Ok(self.cells()?[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub snr_db: f64,
    pub simulations: usize,
    /// Running-mean rows are written every `batch` simulations.
    pub batch: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            snr_db: 10.0,
            simulations: 2000,
            batch: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GiSweepConfig {
    pub g_i: Vec<f64>,
    pub n: usize,
    pub t: f64,
    /// |g − g_c| window used to fit the gap proportionality.
    pub window: (f64, f64),
}

impl Default for GiSweepConfig {
    fn default() -> Self {
        Self {
            g_i: vec![1.5, 2.0, 3.0, 4.0],
            n: 50,
            t: 50.0,
            window: (0.05, 0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinConfig {
    pub delta_n: usize,
}

impl Default for SpinConfig {
    fn default() -> Self {
        Self { delta_n: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub scales: Vec<(usize, usize)>,
    pub repetitions: usize,
    pub n: usize,
    pub t: f64,
    pub steps: usize,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            scales: vec![(10, 25), (15, 35), (20, 50), (30, 70), (40, 100)],
            repetitions: 10,
            n: 8,
            t: 2.0,
            steps: 1000,
        }
    }
}

/// Whole-run configuration, read from TOML. Unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub objective: Observable,
    /// Field table used by noise, spin-fluct and evolve instead of optimizing.
    pub field: Option<PathBuf>,
    pub grid: GridConfig,
    pub optimizer: OptimizerConfig,
    pub noise: NoiseConfig,
    pub gi_sweep: GiSweepConfig,
    pub spin: SpinConfig,
    pub cost: CostConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            out: None,
            objective: Observable::Defect,
            field: None,
            grid: GridConfig::default(),
            optimizer: OptimizerConfig::default(),
            noise: NoiseConfig::default(),
            gi_sweep: GiSweepConfig::default(),
            spin: SpinConfig::default(),
            cost: CostConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.grid.cells()?;
        if self.noise.snr_db.is_nan() || self.noise.batch == 0 {
            return Err(Error::Config("noise.snr_db must be a number and noise.batch positive".into()));
        }
        if self.cost.repetitions == 0 || self.cost.scales.is_empty() {
            return Err(Error::Config("cost needs at least one scale and one repetition".into()));
        }
        Ok(())
    }

    /// Optimizer settings with the run-level objective applied.
    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            objective: self.objective,
            ..self.optimizer.clone()
        }
    }
}

/// Deterministic per-cell seed from the master seed and the cell.
pub fn cell_seed(master: u64, n: usize, t: f64) -> u64 {
    let mut x = master ^ 0x9e37_79b9_7f4a_7c15;
    for v in [n as u64, t.to_bits()] {
        x = splitmix(x ^ v);
    }
    x
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Latest time at which g crosses `level`, linearly interpolated.
pub fn crossing_time(spec: &QuenchSpec, field: &ControlField, level: f64) -> Option<f64> {
    let g = field.samples();
    (0..g.len() - 1).rev().find_map(|m| {
        let (a, b) = (g[m] - level, g[m + 1] - level);
        if a == 0.0 {
            Some(spec.time(m))
        } else if a * b < 0.0 || b == 0.0 {
            let frac = a / (a - b);
            Some(spec.time(m) + frac * spec.dt())
        } else {
            None
        }
    })
}

/// Number of sign changes of g − level on the grid.
pub fn crossing_count(field: &ControlField, level: f64) -> usize {
    field
        .samples()
        .windows(2)
        .filter(|w| (w[0] - level) * (w[1] - level) < 0.0 || (w[1] == level && w[0] != level))
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub t: f64,
    pub n: usize,
    pub t_over_n: f64,
    pub rho_dcnn: f64,
    pub rho_powerlaw: f64,
    pub r_rho: f64,
    pub f_dcnn: f64,
    pub f_powerlaw: f64,
    pub r_star: f64,
    pub t_star: Option<f64>,
    pub wall_s: f64,
    pub param_count: usize,
    /// Failure message, never empty (an empty cell reads back as `None`).
    pub error: Option<String>,
}

impl ScanRow {
    fn failed(spec: &QuenchSpec, err: &Error) -> Self {
        Self {
            t: spec.t_half,
            n: spec.n,
            t_over_n: spec.t_half / spec.n as f64,
            rho_dcnn: f64::NAN,
            rho_powerlaw: f64::NAN,
            r_rho: f64::NAN,
            f_dcnn: f64::NAN,
            f_powerlaw: f64::NAN,
            r_star: f64::NAN,
            t_star: None,
            wall_s: 0.0,
            param_count: 0,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
}

/// Optimal power law and DCNN run on one (N, T) cell.
pub fn scan_cell(spec: &QuenchSpec, opt: &OptimizerConfig, seed: u64) -> Result<ScanRow> {
    let start = Instant::now();
    let pl = optimize_power_law(spec, opt.objective)?;
    let pl_rep = evaluate(spec, &power_law_field(spec, pl.r)?)?;
    let mut cfg = opt.clone();
    if let Some(pre) = cfg.pretrain.as_mut() {
        pre.exponent.get_or_insert(pl.r);
    }
    let out = run_dcnn(spec, &cfg, seed)?;
    let rho = out.score.defect_density;
    Ok(ScanRow {
        t: spec.t_half,
        n: spec.n,
        t_over_n: spec.t_half / spec.n as f64,
        rho_dcnn: rho,
        rho_powerlaw: pl_rep.defect_density,
        r_rho: rho / pl_rep.defect_density,
        f_dcnn: out.score.cat_fidelity,
        f_powerlaw: pl_rep.cat_fidelity,
        r_star: pl.r,
        t_star: crossing_time(spec, &out.field, 1.0),
        wall_s: start.elapsed().as_secs_f64(),
        param_count: out.params.param_count(),
        error: None,
    })
}

/// Every grid cell, run concurrently with per-cell seeds. Failed cells are
/// kept as rows with an error message.
pub fn scan_tn(cfg: &RunConfig) -> Result<ScanResult> {
    let opt = cfg.optimizer();
    let cells = cfg.grid.cells()?;
    let rows = cells
        .par_iter()
        .map(|spec| {
            let seed = cell_seed(cfg.seed, spec.n, spec.t_half);
            scan_cell(spec, &opt, seed).unwrap_or_else(|e| ScanRow::failed(spec, &e))
        })
        .collect();
    Ok(ScanResult { rows })
}

/// Gap-closing mode for g > 0 and its Landau-Zener data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QslEstimate {
    pub n: usize,
    pub k_n: f64,
    pub omega: f64,
    pub t_qsl: f64,
    pub t_qsl_over_n: f64,
}

/// The mode k_N = (N−1)π/N has off-diagonal coupling ω = 2 sin k_N ≈ 2π/N;
/// 2ω·T_QSL = π/2 gives T_QSL.
pub fn qsl_estimate(n: usize) -> Result<QslEstimate> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidSpec(format!("N must be even and at least 2, got {n}")));
    }
    let k_n = (n as f64 - 1.0) * std::f64::consts::PI / n as f64;
    let omega = 2.0 * k_n.sin();
    let t_qsl = std::f64::consts::PI / (4.0 * omega);
    Ok(QslEstimate {
        n,
        k_n,
        omega,
        t_qsl,
        t_qsl_over_n: t_qsl / n as f64,
    })
}

/// ΔE = 2·min_k Λ_k(g).
pub fn lowest_gap(spec: &QuenchSpec, g: f64) -> f64 {
    spec.modes()
        .into_iter()
        .map(|k| dispersion(k, g))
        .fold(f64::INFINITY, f64::min)
        * 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSample {
    pub g_i: f64,
    pub t: f64,
    pub g: f64,
    pub offset: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiSweepRow {
    pub g_i: f64,
    pub t_star: Option<f64>,
    pub crossings: usize,
    pub rho: f64,
    /// Least-squares c in |g − 1| ≈ c·ΔE over the window.
    pub gap_ratio: f64,
    /// Set when g_i sits on the critical point and no crossing exists.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GiSweepResult {
    pub rows: Vec<GiSweepRow>,
    pub samples: Vec<GapSample>,
    pub fields: Vec<(f64, ControlField)>,
}

/// Fits c in |g − 1| = c·ΔE through the origin on the samples whose offset
/// lies inside `window`, within the half-width |t − t*| ≤ T/2 of the crossing.
pub fn gap_fit(spec: &QuenchSpec, field: &ControlField, t_star: Option<f64>, window: (f64, f64)) -> (f64, Vec<GapSample>) {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut samples = Vec::new();
    for (m, &g) in field.samples().iter().enumerate() {
        let t = spec.time(m);
        if let Some(ts) = t_star {
            if (t - ts).abs() > 0.5 * spec.t_half {
                continue;
            }
        }
        let offset = (g - 1.0).abs();
        if offset < window.0 || offset > window.1 {
            continue;
        }
        let gap = lowest_gap(spec, g);
        num += offset * gap;
        den += gap * gap;
        samples.push(GapSample {
            g_i: spec.g_i,
            t,
            g,
            offset,
            gap,
        });
    }
    (if den > 0.0 { num / den } else { f64::NAN }, samples)
}

pub fn gi_sweep(cfg: &RunConfig) -> Result<GiSweepResult> {
    let opt = cfg.optimizer();
    let sweep = &cfg.gi_sweep;
    let runs = sweep
        .g_i
        .par_iter()
        .map(|&gi| -> Result<(GiSweepRow, Vec<GapSample>, ControlField)> {
            let spec = match cfg.grid.steps {
                Some(m) => QuenchSpec::new(sweep.n, sweep.t, gi, cfg.grid.g_f, m)?,
                None => QuenchSpec::with_default_steps(sweep.n, sweep.t, gi, cfg.grid.g_f)?,
            };
            let degenerate = (gi - 1.0).abs() < 1e-12;
            let out = run_dcnn(&spec, &opt, cell_seed(cfg.seed, spec.n, gi))?;
            let t_star = crossing_time(&spec, &out.field, 1.0);
            let (gap_ratio, samples) = gap_fit(&spec, &out.field, t_star, sweep.window);
            let row = GiSweepRow {
                g_i: gi,
                t_star,
                crossings: crossing_count(&out.field, 1.0),
                rho: out.score.defect_density,
                gap_ratio,
                degenerate,
            };
            Ok((row, samples, out.field))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut result = GiSweepResult {
        rows: Vec::new(),
        samples: Vec::new(),
        fields: Vec::new(),
    };
    for (row, samples, field) in runs {
        result.fields.push((row.g_i, field));
        result.rows.push(row);
        result.samples.extend(samples);
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub simulations: usize,
    pub mean_offset: f64,
    pub mean_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseResult {
    pub rho_ideal: f64,
    pub rows: Vec<NoiseRow>,
    /// |δρ(𝓡) − δρ(𝓡/2)| / |δρ(𝓡)| at the final 𝓡.
    pub drift: f64,
}

impl NoiseResult {
    pub fn converged_offset(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.mean_offset)
    }

    pub fn converged_rho(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.mean_rho)
    }

    pub fn is_stable(&self, tol: f64) -> bool {
        self.drift < tol
    }
}

pub const OFFSET_FLOOR: f64 = 1e-12;

/// Evolves `simulations` noisy copies of `field`; δρ_p =
/// (ρ_p − ρ_ideal)/max(ρ_ideal, 1e−12) and its running mean.
pub fn noise_robustness(
    spec: &QuenchSpec,
    field: &ControlField,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<NoiseResult> {
    let ideal = evaluate(spec, field)?.defect_density;
    let rhos = (0..noise.simulations)
        .into_par_iter()
        .map(|p| {
            let noisy = add_awgn(
                field,
                NoiseSpec {
                    snr_db: noise.snr_db,
                    seed: splitmix(seed ^ splitmix(p as u64)),
                },
            )?;
            Ok(evaluate(spec, &noisy)?.defect_density)
        })
        .collect::<Result<Vec<f64>>>()?;
    let denom = ideal.max(OFFSET_FLOOR);
    let mut rows = Vec::new();
    let mut running = Vec::with_capacity(rhos.len());
    let (mut sum_off, mut sum_rho) = (0.0, 0.0);
    for (p, &rho) in rhos.iter().enumerate() {
        sum_off += (rho - ideal) / denom;
        sum_rho += rho;
        let count = p + 1;
        running.push(sum_off / count as f64);
        if count % noise.batch == 0 || count == rhos.len() {
            rows.push(NoiseRow {
                simulations: count,
                mean_offset: sum_off / count as f64,
                mean_rho: sum_rho / count as f64,
            });
        }
    }
    let drift = match running.len() {
        0 | 1 => f64::NAN,
        len => {
            let full = running[len - 1];
            let half = running[len / 2 - 1];
            if full == 0.0 && half == 0.0 {
                0.0
            } else {
                (full - half).abs() / full.abs()
            }
        }
    };
    Ok(NoiseResult {
        rho_ideal: ideal,
        rows,
        drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinRow {
    pub n: usize,
    pub delta_n: i64,
    pub rho: f64,
    pub cat_fidelity: f64,
    pub relative_change: f64,
}

/// The same sampled field applied to chains of length N + δ, δ even in
/// [−δN, δN].
pub fn spin_fluctuation(spec: &QuenchSpec, field: &ControlField, delta_n: usize) -> Result<Vec<SpinRow>> {
    let nominal = evaluate(spec, field)?.defect_density;
    let d = delta_n as i64;
    let mut rows = Vec::new();
    for delta in (-d..=d).filter(|x| x % 2 == 0) {
        let n = spec.n as i64 + delta;
        if n < 2 {
            continue;
        }
        let s = spec.with_n(n as usize);
        let rep = evaluate(&s, field)?;
        rows.push(SpinRow {
            n: n as usize,
            delta_n: delta,
            rho: rep.defect_density,
            cat_fidelity: rep.cat_fidelity,
            relative_change: (rep.defect_density - nominal) / nominal,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub n1: usize,
    pub n2: usize,
    pub param_count: usize,
    pub seconds_per_cycle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    pub rows: Vec<CostRow>,
    /// Fitted slope of log(time) against log(parameter count).
    pub slope: f64,
}

/// Wall time of one grow-and-trial cycle (growth followed by the configured
/// number of masked descent steps) for each network scale, averaged over
/// the repetitions.
pub fn cost_profile(cfg: &RunConfig) -> Result<CostProfile> {
    let c = &cfg.cost;
    let spec = QuenchSpec::new(c.n, c.t, cfg.grid.g_i, cfg.grid.g_f, c.steps)?;
    let opt = OptimizerConfig {
        pretrain: None,
        ..cfg.optimizer()
    };
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    for &(n1, n2) in &c.scales {
        let base = NetworkParams::random(n1, n2, opt.init_range, &mut rng);
        let start = Instant::now();
        for _ in 0..c.repetitions {
            let (mut p, mask) = grow(&base, &opt, &mut rng);
            let mut eval = objective_and_gradients(&spec, &p, &opt)?;
            for _ in 0..opt.trial_steps {
                p = descent_step(&p, &eval.grads, &opt, Some(&mask), 1.0)?;
                eval = objective_and_gradients(&spec, &p, &opt)?;
            }
        }
        let grown = (n1 + opt.grow_n1, n2 + opt.grow_n2);
        rows.push(CostRow {
            n1,
            n2,
            param_count: crate::network::param_count(grown.0, grown.1),
            seconds_per_cycle: start.elapsed().as_secs_f64() / c.repetitions as f64,
        });
    }
    let slope = log_log_slope(
        &rows
            .iter()
            .map(|r| (r.param_count as f64, r.seconds_per_cycle))
            .collect::<Vec<_>>(),
    );
    Ok(CostProfile { rows, slope })
}

/// Least-squares slope of ln y against ln x.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Control field for the robustness experiments: from `cfg.field` when
/// given, otherwise optimized on the first grid cell.
pub fn reference_field(cfg: &RunConfig) -> Result<(QuenchSpec, ControlField)> {
    match &cfg.field {
        Some(path) => ControlField::read_table(BufReader::new(fs::File::open(path)?)),
        None => {
            let spec = cfg.grid.first()?;
            let out = run_dcnn(&spec, &cfg.optimizer(), cell_seed(cfg.seed, spec.n, spec.t_half))?;
            Ok((spec, out.field))
        }
    }
}

/// Ordered metadata lines written as `# key: value`.
pub type Meta = Vec<(String, String)>;

pub fn meta<K: ToString, V: ToString>(pairs: impl IntoIterator<Item = (K, V)>) -> Meta {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// CSV with a metadata header. Floats are written in shortest round-trip
/// form, so `read_table(write_table(x)) == x`.
pub fn write_table<W: Write, T: Serialize>(mut w: W, meta: &Meta, rows: &[T]) -> Result<()> {
    for (k, v) in meta {
        if k.contains(':') || k.contains('\n') || v.contains('\n') {
            return Err(Error::Parse(format!("metadata entry `{k}` cannot be written")));
        }
        writeln!(w, "# {k}: {v}")?;
    }
    let mut csv = csv::Writer::from_writer(w);
    for row in rows {
        csv.serialize(row).map_err(|e| Error::Parse(e.to_string()))?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_table<R: Read, T: DeserializeOwned>(r: R) -> Result<(Meta, Vec<T>)> {
    let mut reader = BufReader::new(r);
    let mut meta = Vec::new();
    let mut body = String::new();
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        match line.strip_prefix("# ") {
            Some(rest) if body.is_empty() => {
                let (k, v) = rest
                    .trim_end_matches(['\n', '\r'])
                    .split_once(": ")
                    .ok_or_else(|| Error::Parse(format!("bad metadata line `{}`", line.trim_end())))?;
                meta.push((k.to_string(), v.to_string()));
            }
            _ => body.push_str(&line),
        }
    }
    let mut csv = csv::Reader::from_reader(body.as_bytes());
    let rows = csv
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Parse(e.to_string()))?;
    Ok((meta, rows))
}

pub fn write_table_file<T: Serialize>(path: &Path, meta: &Meta, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let file = std::io::BufWriter::new(fs::File::create(path)?);
    write_table(file, meta, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qsl_matches_one_eighth() {
        let q = qsl_estimate(50).unwrap();
        assert!((q.t_qsl_over_n / 0.125 - 1.0).abs() < 0.05);
        let big = qsl_estimate(2000).unwrap();
        assert!((big.t_qsl_over_n - 0.125).abs() < 1e-5);
        assert!(qsl_estimate(7).is_err());
    }

    #[test]
    fn crossing_time_interpolates() {
        let spec = QuenchSpec::new(4, 1.0, 2.0, 0.0, 4).unwrap();
        let f = ControlField::new(vec![2.0, 1.5, 0.5, 0.2, 0.0], crate::propagator::Provenance::Linear).unwrap();
        let ts = crossing_time(&spec, &f, 1.0).unwrap();
        assert!((ts + 0.25).abs() < 1e-15, "{ts}");
        assert_eq!(crossing_count(&f, 1.0), 1);
        let flat = ControlField::constant(&spec, 1.5).unwrap();
        assert_eq!(crossing_time(&spec, &flat, 1.0), None);
    }

    #[test]
    fn cell_seeds_differ() {
        assert_ne!(cell_seed(1, 24, 6.0), cell_seed(1, 24, 12.0));
        assert_ne!(cell_seed(1, 24, 6.0), cell_seed(2, 24, 6.0));
        assert_eq!(cell_seed(3, 50, 0.5), cell_seed(3, 50, 0.5));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(RunConfig::from_toml("seed = 1\nbogus = 2\n").is_err());
        assert!(RunConfig::from_toml("[optimizer]\nn1 = 4\nwhat = 1\n").is_err());
        let cfg = RunConfig::from_toml("seed = 4\nobjective = \"fidelity\"\n[optimizer]\nn1 = 4\n").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.optimizer().objective, Observable::Fidelity);
        assert_eq!(cfg.optimizer.n2, 25);
        let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn slope_of_power_law_is_its_exponent() {
        let pts: Vec<(f64, f64)> = [1.0_f64, 2.0, 5.0, 9.0].iter().map(|&x| (x, 3.0 * x.powf(1.1))).collect();
        assert!((log_log_slope(&pts) - 1.1).abs() < 1e-12);
    }
}
