//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run everything with `cargo test --release --test acceptance`, or pick
//! criteria by number: `cargo test --test acceptance -- 1 2 11`.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use quench_core::dcnn::{objective_and_gradients, run_dcnn, OptimizerConfig, PretrainConfig};
use quench_core::ed::ed_evolve;
use quench_core::experiments::{
    cell_seed, meta, noise_robustness, qsl_estimate, scan_cell, spin_fluctuation, write_table,
    NoiseConfig, ScanRow,
};
use quench_core::fields::linear_field;
use quench_core::gradient::{finite_difference_oracle, observable_gradient, Observable};
use quench_core::ising::QuenchSpec;
use quench_core::network::NetworkParams;
use quench_core::propagator::{evaluate, evolve, ControlField};

const SEED: u64 = 20240607;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Optimizer cells shared between criteria.
#[derive(Default)]
struct Cache {
    cells: BTreeMap<(usize, u64, bool), (ScanRow, Option<(QuenchSpec, ControlField)>)>,
}

impl Cache {
    fn setup(n: usize, t: f64, objective: Observable) -> (QuenchSpec, OptimizerConfig, u64) {
        let spec = QuenchSpec::with_default_steps(n, t, 2.0, 0.0).unwrap();
        let cfg = OptimizerConfig {
            objective,
            ..OptimizerConfig::default()
        };
        (spec, cfg, cell_seed(SEED, n, t))
    }

    fn cell(&mut self, n: usize, t: f64, objective: Observable) -> ScanRow {
        let key = (n, t.to_bits(), objective == Observable::Fidelity);
        if let Some((row, _)) = self.cells.get(&key) {
            return row.clone();
        }
        let (spec, cfg, seed) = Self::setup(n, t, objective);
        let row = scan_cell(&spec, &cfg, seed).unwrap();
        self.cells.insert(key, (row.clone(), None));
        row
    }

    fn cell_with_field(&mut self, n: usize, t: f64, objective: Observable) -> (ScanRow, QuenchSpec, ControlField) {
        let row = self.cell(n, t, objective);
        let key = (n, t.to_bits(), objective == Observable::Fidelity);
        if let Some((_, Some((spec, field)))) = self.cells.get(&key) {
            return (row, *spec, field.clone());
        }
        // scan_cell keeps only scalars; rerun deterministically for the field.
        let (spec, mut cfg, seed) = Self::setup(n, t, objective);
        cfg.pretrain = Some(PretrainConfig {
            exponent: Some(row.r_star),
            ..PretrainConfig::default()
        });
        let out = run_dcnn(&spec, &cfg, seed).unwrap();
        assert_eq!(out.score.defect_density, row.rho_dcnn, "rerun diverged from scan cell");
        self.cells.insert(key, (row.clone(), Some((spec, out.field.clone()))));
        (row, spec, out.field)
    }
}

fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    diff / b.iter().fold(0.0_f64, |m, y| m.max(y.abs()))
}

fn c1_oracle(_: &mut Cache) -> Outcome {
    let (mut worst_rho, mut worst_f) = (0.0_f64, 0.0_f64);
    for n in [4, 6, 8] {
        let spec = QuenchSpec::new(n, 1.5, 2.0, 0.0, 300).unwrap();
        for seed in 0..5 {
            let field = common::random_smooth_field(&spec, 1000 + 10 * n as u64 + seed);
            let free = evaluate(&spec, &field).unwrap();
            let dense = ed_evolve(&spec, &field).unwrap();
            worst_rho = worst_rho.max((free.defect_density - dense.defect_density()).abs());
            worst_f = worst_f.max((free.cat_fidelity - dense.cat_fidelity()).abs());
        }
    }
    outcome(
        worst_rho < 1e-9 && worst_f < 1e-9,
        format!("max |Δρ| = {worst_rho:.2e}, max |ΔF| = {worst_f:.2e} (tol 1e-9, N ∈ {{4,6,8}}, 5 fields each)"),
    )
}

fn c2_gradients(_: &mut Cache) -> Outcome {
    let spec = QuenchSpec::new(8, 2.0, 2.0, 0.0, 500).unwrap();
    let field = common::random_smooth_field(&spec, 77);
    let traj = evolve(&spec, &field).unwrap();
    let mut errs = Vec::new();
    for which in [Observable::Defect, Observable::Fidelity] {
        let analytic = observable_gradient(&spec, &traj, which).unwrap();
        let fd = finite_difference_oracle(&spec, &field, which, 1e-5).unwrap();
        errs.push((which, analytic.relative_error(&fd)));
    }
    let pass = errs.iter().all(|(_, e)| *e < 1e-5);
    outcome(
        pass,
        format!(
            "relative ∞-norm error: defect {:.2e}, fidelity {:.2e} (tol 1e-5, N = 8, M = 500)",
            errs[0].1, errs[1].1
        ),
    )
}

fn c3_parameter_gradient(_: &mut Cache) -> Outcome {
    use rand::SeedableRng;
    let spec = QuenchSpec::new(8, 2.0, 2.0, 0.0, 400).unwrap();
    let mut errs = Vec::new();
    for (which, seed) in [(Observable::Defect, 1u64), (Observable::Fidelity, 2)] {
        let cfg = OptimizerConfig {
            n1: 4,
            n2: 6,
            objective: which,
            pretrain: None,
            ..OptimizerConfig::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut p = NetworkParams::random(4, 6, 0.8, &mut rng);
        p.w3.iter_mut().for_each(|w| *w -= 0.3);
        let analytic = objective_and_gradients(&spec, &p, &cfg).unwrap().grads.to_vec();
        let theta = p.to_vec();
        let h = 1e-5;
        let fd: Vec<f64> = (0..theta.len())
            .map(|i| {
                let q = |delta: f64| {
                    let mut t = theta.clone();
                    t[i] += delta;
                    let mut a = p.clone();
                    a.set_from_slice(&t);
                    objective_and_gradients(&spec, &a, &cfg).unwrap().score.q
                };
                (q(h) - q(-h)) / (2.0 * h)
            })
            .collect();
        errs.push(rel_inf(&analytic, &fd));
    }
    outcome(
        errs.iter().all(|e| *e < 1e-4),
        format!(
            "relative error of ∂Q/∂θ: defect {:.2e}, fidelity {:.2e} (tol 1e-4, N = 8, 4×6 network, {} params)",
            errs[0],
            errs[1],
            quench_core::network::param_count(4, 6)
        ),
    )
}

fn c4_kibble_zurek(_: &mut Cache) -> Outcome {
    let pts: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0]
        .iter()
        .map(|&t| {
            let spec = QuenchSpec::with_default_steps(400, t, 2.0, 0.0).unwrap();
            let rho = evaluate(&spec, &linear_field(&spec).unwrap()).unwrap().defect_density;
            (t, rho)
        })
        .collect();
    let alpha = quench_core::experiments::log_log_slope(&pts);
    let rhos: Vec<String> = pts.iter().map(|(t, r)| format!("ρ({t}) = {r:.3e}")).collect();
    outcome(
        (alpha + 0.5).abs() <= 0.1,
        format!("α = {alpha:.4} (target −0.5 ± 0.1); {}", rhos.join(", ")),
    )
}

fn c5_baseline(cache: &mut Cache) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for ratio in [0.25, 0.5, 1.0] {
        let row = cache.cell(24, ratio * 24.0, Observable::Defect);
        pass &= row.r_rho <= 1.0;
        parts.push(format!(
            "T/N = {ratio}: R_ρ = {:.3} (ρ_dcnn {:.3e}, ρ_pl {:.3e}, r* = {:.3})",
            row.r_rho, row.rho_dcnn, row.rho_powerlaw, row.r_star
        ));
    }
    outcome(pass, format!("N = 24, R_ρ ≤ 1: {}", parts.join("; ")))
}

fn c6_crossover(cache: &mut Cache) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for n in [24usize, 50] {
        let lo = cache.cell(n, 0.10 * n as f64, Observable::Defect);
        let hi = cache.cell(n, 0.25 * n as f64, Observable::Defect);
        let drop = lo.rho_dcnn / hi.rho_dcnn;
        pass &= drop >= 100.0;
        parts.push(format!(
            "N = {n}: ρ(0.10) = {:.3e}, ρ(0.25) = {:.3e}, drop ×{drop:.1}",
            lo.rho_dcnn, hi.rho_dcnn
        ));
    }
    for n in [50usize, 100, 400] {
        let q = qsl_estimate(n).unwrap();
        let dev = (q.t_qsl_over_n / 0.125 - 1.0).abs();
        pass &= dev < 0.05;
        parts.push(format!("T_QSL/N(N = {n}) = {:.5}", q.t_qsl_over_n));
    }
    outcome(pass, format!("need drop ≥ ×100 and T_QSL/N within 5% of 1/8: {}", parts.join("; ")))
}

fn c7_short_plateau(cache: &mut Cache) -> Outcome {
    let row = cache.cell(50, 0.5, Observable::Defect);
    outcome(
        (row.rho_dcnn - 0.18).abs() <= 0.02,
        format!(
            "T = 0.5, N = 50: ρ = {:.4} (target 0.18 ± 0.02; optimal power law {:.4})",
            row.rho_dcnn, row.rho_powerlaw
        ),
    )
}

fn c8_long_target(cache: &mut Cache) -> Outcome {
    let row = cache.cell(50, 50.0, Observable::Defect);
    outcome(
        row.rho_dcnn < 1e-3,
        format!(
            "T = 50, N = 50: ρ = {:.3e} (gate < 1e-3; stretch 9.13e-5 {}), crossing t* = {:?}",
            row.rho_dcnn,
            if row.rho_dcnn < 9.13e-5 { "met" } else { "not met" },
            row.t_star
        ),
    )
}

fn c9_fidelity_surge(cache: &mut Cache) -> Outcome {
    let ratios = [0.06, 0.08, 0.10, 0.12, 0.14, 0.16, 0.18, 0.20, 0.25, 0.30];
    let pts: Vec<(f64, f64)> = ratios
        .iter()
        .map(|&r| (r, cache.cell(50, r * 50.0, Observable::Fidelity).f_dcnn))
        .collect();
    let low_ok = pts.iter().filter(|p| p.0 <= 0.10 + 1e-12).all(|p| p.1 < 0.05);
    let high_ok = pts.iter().filter(|p| p.0 >= 0.25 - 1e-12).all(|p| p.1 > 0.9);
    let steepest = pts
        .windows(2)
        .max_by(|a, b| {
            let sa = (a[1].1 - a[0].1) / (a[1].0 - a[0].0);
            let sb = (b[1].1 - b[0].1) / (b[1].0 - b[0].0);
            sa.total_cmp(&sb)
        })
        .map(|w| 0.5 * (w[0].0 + w[1].0))
        .unwrap();
    let rise_ok = (0.10..=0.22).contains(&steepest);
    let table: Vec<String> = pts.iter().map(|(r, f)| format!("{r:.2}:{f:.3}")).collect();
    outcome(
        low_ok && high_ok && rise_ok,
        format!(
            "N = 50, F(T/N) = [{}]; F < 0.05 at T/N ≤ 0.10: {low_ok}; F > 0.9 at T/N ≥ 0.25: {high_ok}; steepest rise at {steepest:.3} (window [0.10, 0.22]): {rise_ok}",
            table.join(" ")
        ),
    )
}

fn c10_robustness(cache: &mut Cache) -> Outcome {
    let (_, spec, field) = cache.cell_with_field(50, 0.5, Observable::Defect);
    let noise = NoiseConfig {
        snr_db: 10.0,
        simulations: 2000,
        batch: 50,
    };
    let res = noise_robustness(&spec, &field, &noise, SEED).unwrap();
    let stable = res.is_stable(0.05);
    let rows = spin_fluctuation(&spec, &field, 4).unwrap();
    let worst = rows.iter().fold(0.0_f64, |m, r| m.max(r.relative_change.abs()));
    outcome(
        stable && worst < 0.1,
        format!(
            "T = 0.5, N = 50: δρ(2000) = {:.4e}, drift vs 𝓡/2 = {:.4} (tol 0.05), mean noisy ρ = {:.4}; max |Δρ|/ρ over δN = ±4: {:.2e} (tol 0.1)",
            res.converged_offset(),
            res.drift,
            res.converged_rho(),
            worst
        ),
    )
}

fn c11_determinism(_: &mut Cache) -> Outcome {
    let spec = QuenchSpec::new(8, 2.0, 2.0, 0.0, 300).unwrap();
    let cfg = OptimizerConfig {
        max_iters: 60,
        stall_window: 8,
        growth_interval: Some(2),
        trial_steps: 5,
        improve_tol: 1e-4,
        ..OptimizerConfig::default()
    };
    let a = run_dcnn(&spec, &cfg, SEED).unwrap();
    let b = run_dcnn(&spec, &cfg, SEED).unwrap();
    let table = |mut row: ScanRow| {
        row.wall_s = 0.0;
        let mut buf = Vec::new();
        write_table(&mut buf, &meta([("seed", SEED)]), &[row]).unwrap();
        buf
    };
    let ra = scan_cell(&spec, &cfg, SEED).unwrap();
    let rb = scan_cell(&spec, &cfg, SEED).unwrap();
    let same = a.trace == b.trace && a.params == b.params && table(ra) == table(rb);
    outcome(
        same,
        format!(
            "two runs, {} trace entries ({} growth events), traces/params/tables identical: {same}",
            a.trace.len(),
            a.trace.growth_events()
        ),
    )
}

type Check = fn(&mut Cache) -> Outcome;

fn main() -> ExitCode {
    let criteria: [(u32, &str, Check); 11] = [
        (1, "oracle equivalence", c1_oracle),
        (2, "gradient correctness", c2_gradients),
        (3, "end-to-end parameter gradient", c3_parameter_gradient),
        (4, "Kibble-Zurek scaling", c4_kibble_zurek),
        (5, "baseline superiority", c5_baseline),
        (6, "crossover location", c6_crossover),
        (7, "short-quench plateau", c7_short_plateau),
        (8, "long-quench target", c8_long_target),
        (9, "fidelity surge", c9_fidelity_surge),
        (10, "robustness", c10_robustness),
        (11, "determinism", c11_determinism),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut cache = Cache::default();
    let (mut passed, mut run) = (0, 0);
    for (id, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = check(&mut cache);
        run += 1;
        passed += out.pass as usize;
        println!(
            "criterion {id:>2} [{}] {name}: {} [{:.1} s]",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {passed}/{run} criteria passed");
    if passed == run {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
