//! `quench`: command-line front end for the experiment runners.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use quench_core::dcnn::{load_checkpoint, save_checkpoint, DcnnState};
use quench_core::experiments::{
    cost_profile, crossing_count, crossing_time, gi_sweep, meta, noise_robustness, qsl_estimate,
    reference_field, scan_tn, spin_fluctuation, write_table_file, RunConfig,
};
use quench_core::fields::{optimize_power_law, power_law_field};
use quench_core::gradient::Observable;
use quench_core::propagator::{evaluate, ControlField};

#[derive(Parser)]
#[command(name = "quench", version, about = "Optimal control of Ising-chain quenches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for tables.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_parser = parse_objective)]
    objective: Option<Observable>,
    /// Field table to use instead of optimizing (noise, spin-fluct, evolve).
    #[arg(long)]
    field: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Cell {
    /// Chain length, overriding the first grid entry.
    #[arg(long)]
    n: Option<usize>,
    /// Half-duration T, overriding the grid.
    #[arg(long)]
    t: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Power law and network optimization over a (T, N) grid.
    ScanTn(Common),
    /// Optimized fields for several initial fields g_i.
    GiSweep(Common),
    /// Quantum speed limit estimate for each N in the grid.
    Qsl(Common),
    /// Running mean of the relative defect offset under white noise.
    Noise(Common),
    /// Defect density of one field on chains of length N ± δN.
    SpinFluct(Common),
    /// Wall time per grow-and-trial cycle against network size.
    Cost(Common),
    /// Single optimizer run with checkpointing.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cell: Cell,
        /// Continue from a checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Iteration budget, overriding the config.
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Evaluate one field: a table file, a power law, or the optimal power law.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cell: Cell,
        #[arg(long, conflicts_with = "field")]
        power_law: Option<f64>,
    },
}

fn parse_objective(s: &str) -> Result<Observable, String> {
    s.parse().map_err(|e: quench_core::Error| e.to_string())
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(obj) = common.objective {
        cfg.objective = obj;
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    if let Some(field) = &common.field {
        cfg.field = Some(field.clone());
    }
    if let Some(threads) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn apply_cell(cfg: &mut RunConfig, cell: &Cell) {
    if let Some(n) = cell.n {
        cfg.grid.n = vec![n];
    }
    if let Some(t) = cell.t {
        cfg.grid.t = vec![t];
        cfg.grid.t_over_n.clear();
    }
}

fn write_field(path: &Path, spec: &quench_core::ising::QuenchSpec, field: &ControlField) -> Result<()> {
    let file = BufWriter::new(fs::File::create(path)?);
    field.write_table(spec, file)?;
    Ok(())
}

fn base_meta(cfg: &RunConfig, experiment: &str) -> Vec<(String, String)> {
    meta([
        ("experiment", experiment.to_string()),
        ("seed", cfg.seed.to_string()),
        ("objective", cfg.objective.to_string()),
        ("version", env!("CARGO_PKG_VERSION").to_string()),
    ])
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::ScanTn(common) => {
            let cfg = load_config(&common)?;
            let res = scan_tn(&cfg)?;
            let path = out_dir(&cfg).join("scan_tn.csv");
            write_table_file(&path, &base_meta(&cfg, "scan-tn"), &res.rows)?;
            for r in &res.rows {
                match &r.error {
                    Some(e) => println!("N={} T={}: failed: {e}", r.n, r.t),
                    None => println!(
                        "N={} T={} T/N={:.3}: rho_dcnn={:.4e} rho_pl={:.4e} R={:.3} F={:.4}",
                        r.n, r.t, r.t_over_n, r.rho_dcnn, r.rho_powerlaw, r.r_rho, r.f_dcnn
                    ),
                }
            }
            println!("wrote {}", path.display());
        }
        Command::GiSweep(common) => {
            let cfg = load_config(&common)?;
            let res = gi_sweep(&cfg)?;
            let dir = out_dir(&cfg);
            let mut m = base_meta(&cfg, "gi-sweep");
            m.push(("gap".into(), "2*min_k Lambda_k(g(t))".into()));
            write_table_file(&dir.join("gi_sweep.csv"), &m, &res.rows)?;
            write_table_file(&dir.join("gi_sweep_samples.csv"), &m, &res.samples)?;
            for (gi, field) in &res.fields {
                let spec = quench_core::ising::QuenchSpec::new(
                    cfg.gi_sweep.n,
                    cfg.gi_sweep.t,
                    *gi,
                    cfg.grid.g_f,
                    field.len() - 1,
                )?;
                write_field(&dir.join(format!("field_gi_{gi}.csv")), &spec, field)?;
            }
            for r in &res.rows {
                println!(
                    "g_i={} t*={:?} crossings={} rho={:.4e} |g-1|/dE={:.4}{}",
                    r.g_i,
                    r.t_star,
                    r.crossings,
                    r.rho,
                    r.gap_ratio,
                    if r.degenerate { " (degenerate)" } else { "" }
                );
            }
        }
        Command::Qsl(common) => {
            let cfg = load_config(&common)?;
            let rows = cfg
                .grid
                .n
                .iter()
                .map(|&n| qsl_estimate(n))
                .collect::<quench_core::Result<Vec<_>>>()?;
            write_table_file(&out_dir(&cfg).join("qsl.csv"), &base_meta(&cfg, "qsl"), &rows)?;
            for q in &rows {
                println!("N={} omega={:.6} T_QSL={:.6} T_QSL/N={:.6}", q.n, q.omega, q.t_qsl, q.t_qsl_over_n);
            }
        }
        Command::Noise(common) => {
            let cfg = load_config(&common)?;
            let (spec, field) = reference_field(&cfg)?;
            let res = noise_robustness(&spec, &field, &cfg.noise, cfg.seed)?;
            let mut m = base_meta(&cfg, "noise");
            m.extend(meta([
                ("N", spec.n.to_string()),
                ("T", format!("{:?}", spec.t_half)),
                ("snr_db", format!("{:?}", cfg.noise.snr_db)),
                ("rho_ideal", format!("{:?}", res.rho_ideal)),
                ("drift", format!("{:?}", res.drift)),
            ]));
            write_table_file(&out_dir(&cfg).join("noise.csv"), &m, &res.rows)?;
            println!(
                "rho_ideal={:.6e} mean rho={:.6e} delta_rho={:.4e} drift={:.4}",
                res.rho_ideal,
                res.converged_rho(),
                res.converged_offset(),
                res.drift
            );
        }
        Command::SpinFluct(common) => {
            let cfg = load_config(&common)?;
            let (spec, field) = reference_field(&cfg)?;
            let rows = spin_fluctuation(&spec, &field, cfg.spin.delta_n)?;
            let mut m = base_meta(&cfg, "spin-fluct");
            m.extend(meta([("N", spec.n.to_string()), ("T", format!("{:?}", spec.t_half))]));
            write_table_file(&out_dir(&cfg).join("spin_fluct.csv"), &m, &rows)?;
            for r in &rows {
                println!("N={} rho={:.6e} change={:+.3}%", r.n, r.rho, 100.0 * r.relative_change);
            }
        }
        Command::Cost(common) => {
            let cfg = load_config(&common)?;
            let prof = cost_profile(&cfg)?;
            let mut m = base_meta(&cfg, "cost");
            m.push(("log_log_slope".into(), format!("{:?}", prof.slope)));
            m.push(("memory".into(), "not profiled".into()));
            write_table_file(&out_dir(&cfg).join("cost.csv"), &m, &prof.rows)?;
            for r in &prof.rows {
                println!("{}x{} params={} {:.4} s/cycle", r.n1, r.n2, r.param_count, r.seconds_per_cycle);
            }
            println!("log-log slope {:.3}", prof.slope);
        }
        Command::Optimize {
            common,
            cell,
            resume,
            iters,
        } => {
            let mut cfg = load_config(&common)?;
            apply_cell(&mut cfg, &cell);
            let mut state = match &resume {
                Some(path) => load_checkpoint(BufReader::new(
                    fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
                ))?,
                None => {
                    let spec = cfg.grid.first()?;
                    DcnnState::init(&spec, &cfg.optimizer(), cfg.seed)?
                }
            };
            if let Some(n) = iters {
                state.config.max_iters = n;
                state.stopped = None;
            }
            state.run()?;
            let out = state.outcome()?;
            let dir = out_dir(&cfg);
            fs::create_dir_all(&dir)?;
            write_field(&dir.join("field.csv"), &state.spec, &out.field)?;
            out.trace.write_table(BufWriter::new(fs::File::create(dir.join("trace.csv"))?))?;
            save_checkpoint(&state, BufWriter::new(fs::File::create(dir.join("checkpoint.json"))?))?;
            let s = out.score;
            println!(
                "N={} T={} iterations={} stop={:?} rho={:.6e} F={:.6} L={:.3e} net={}x{} t*={:?} crossings={}",
                state.spec.n,
                state.spec.t_half,
                state.iteration,
                state.stopped,
                s.defect_density,
                s.cat_fidelity,
                s.loss,
                out.params.n1,
                out.params.n2,
                crossing_time(&state.spec, &out.field, 1.0),
                crossing_count(&out.field, 1.0)
            );
        }
        Command::Evolve {
            common,
            cell,
            power_law,
        } => {
            let mut cfg = load_config(&common)?;
            apply_cell(&mut cfg, &cell);
            let (spec, field) = match (&cfg.field, power_law) {
                (Some(path), _) => ControlField::read_table(BufReader::new(fs::File::open(path)?))?,
                (None, Some(r)) => {
                    let spec = cfg.grid.first()?;
                    (spec, power_law_field(&spec, r)?)
                }
                (None, None) => {
                    let spec = cfg.grid.first()?;
                    let opt = optimize_power_law(&spec, cfg.objective)?;
                    if !opt.bracketed {
                        eprintln!("warning: optimal exponent {} sits on the search boundary", opt.r);
                    }
                    (spec, power_law_field(&spec, opt.r)?)
                }
            };
            if field.len() != spec.steps + 1 {
                bail!("field has {} samples, grid needs {}", field.len(), spec.steps + 1);
            }
            let rep = evaluate(&spec, &field)?;
            println!(
                "N={} T={} M={} field={} rho={:.8e} F={:.8}",
                spec.n, spec.t_half, spec.steps, field.provenance, rep.defect_density, rep.cat_fidelity
            );
            let dir = out_dir(&cfg);
            fs::create_dir_all(&dir)?;
            write_field(&dir.join("evolve_field.csv"), &spec, &field)?;
        }
    }
    Ok(())
}
