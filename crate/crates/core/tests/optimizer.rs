use quench_core::dcnn::{
    grown_param_count, load_checkpoint, run_dcnn, save_checkpoint, DcnnState, OptimizerConfig,
    PretrainConfig, StepKind,
};
use quench_core::experiments::crossing_count;
use quench_core::ising::QuenchSpec;

/// Small problem with an aggressive growth schedule so a short run sees
/// several growth attempts.
fn busy_cfg(iters: usize) -> OptimizerConfig {
    OptimizerConfig {
        n1: 4,
        n2: 6,
        grow_n1: 2,
        grow_n2: 3,
        max_n1: 12,
        max_n2: 18,
        max_iters: iters,
        stall_window: 8,
        growth_interval: Some(2),
        trial_steps: 5,
        improve_tol: 1e-4,
        pretrain: Some(PretrainConfig {
            exponent: Some(2.0),
            max_iters: 50,
            ..PretrainConfig::default()
        }),
        ..OptimizerConfig::default()
    }
}

fn spec() -> QuenchSpec {
    QuenchSpec::new(8, 2.0, 2.0, 0.0, 300).unwrap()
}

#[test]
fn identical_seed_gives_identical_trace() {
    let a = run_dcnn(&spec(), &busy_cfg(40), 17).unwrap();
    let b = run_dcnn(&spec(), &busy_cfg(40), 17).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.params, b.params);
    assert_eq!(a.field, b.field);
    assert!(a.trace.entries.iter().any(|e| e.kind == StepKind::Growth));
    let c = run_dcnn(&spec(), &busy_cfg(40), 18).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let cfg = busy_cfg(40);
    let whole = run_dcnn(&spec(), &cfg, 5).unwrap();

    let mut first = DcnnState::init(&spec(), &cfg, 5).unwrap();
    first.advance(17).unwrap();
    let mut buf = Vec::new();
    save_checkpoint(&first, &mut buf).unwrap();
    let mut resumed = load_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(resumed, first);
    resumed.run().unwrap();
    let out = resumed.outcome().unwrap();
    assert_eq!(out.trace, whole.trace);
    assert_eq!(out.params, whole.params);
}

#[test]
fn checkpoint_rejects_other_formats() {
    assert!(load_checkpoint(r#"{"format":"x","version":1,"state":{}}"#.as_bytes()).is_err());
    assert!(load_checkpoint("not json".as_bytes()).is_err());
}

#[test]
fn incumbent_never_gets_worse_and_shapes_follow_growth_count() {
    let out = run_dcnn(&spec(), &busy_cfg(60), 3).unwrap();
    let entries = &out.trace.entries;
    assert!(entries.windows(2).all(|w| w[1].iteration > w[0].iteration));
    assert!(entries.windows(2).all(|w| w[1].best_q <= w[0].best_q));
    assert!(out.score.q <= entries.iter().map(|e| e.q).fold(f64::INFINITY, f64::min));
    let last = entries.last().unwrap();
    let cfg = busy_cfg(60);
    let grown = out.state.trace.growth_events();
    assert_eq!(
        out.state.current.param_count(),
        grown_param_count(&cfg, grown),
        "{}x{} after {grown} growth events",
        last.n1,
        last.n2
    );
    for e in entries.iter().filter(|e| e.kind == StepKind::Growth) {
        assert!(e.growth_shift.unwrap() < 0.5, "growth moved g by {:?}", e.growth_shift);
    }
}

#[test]
fn pretrained_start_descends_for_ten_accepted_steps() {
    let spec = QuenchSpec::with_default_steps(24, 50.0, 2.0, 0.0).unwrap();
    let cfg = OptimizerConfig {
        max_iters: 200,
        pretrain: Some(PretrainConfig {
            exponent: Some(3.4),
            ..PretrainConfig::default()
        }),
        ..OptimizerConfig::default()
    };
    let mut state = DcnnState::init(&spec, &cfg, 1).unwrap();
    let pre = state.pretrain.clone().unwrap();
    assert!(pre.rms_residual < 1e-3, "{pre:?}");
    assert!(pre.max_residual < 0.02, "{pre:?}");
    let mut accepted = Vec::new();
    while accepted.len() < 10 && state.iteration < cfg.max_iters {
        let next = state.iteration + 1;
        state.advance(next).unwrap();
        let e = state.trace.entries.last().unwrap();
        if e.kind == StepKind::Descent && e.accepted {
            accepted.push(e.q);
        }
    }
    assert_eq!(accepted.len(), 10);
    assert!(accepted.windows(2).all(|w| w[1] < w[0]), "{accepted:?}");
}

#[test]
fn optimized_long_quench_crosses_the_critical_point_once() {
    let spec = QuenchSpec::with_default_steps(24, 12.0, 2.0, 0.0).unwrap();
    let cfg = OptimizerConfig {
        max_iters: 150,
        ..OptimizerConfig::default()
    };
    let out = run_dcnn(&spec, &cfg, 2).unwrap();
    assert_eq!(crossing_count(&out.field, 1.0), 1);
    let t_star = quench_core::experiments::crossing_time(&spec, &out.field, 1.0).unwrap();
    assert!(t_star < 0.0, "t* = {t_star}");
}
