mod common;

use common::random_smooth_field;
use quench_core::ed::ed_evolve;
use quench_core::fields::power_law_field;
use quench_core::ising::QuenchSpec;
use quench_core::propagator::evaluate;

#[test]
fn mode_sum_agrees_with_dense_evolution() {
    for n in [4, 6, 8] {
        let spec = QuenchSpec::new(n, 1.5, 2.0, 0.0, 300).unwrap();
        for seed in 0..5 {
            let field = random_smooth_field(&spec, 100 * n as u64 + seed);
            let free = evaluate(&spec, &field).unwrap();
            let dense = ed_evolve(&spec, &field).unwrap();
            let d_rho = (free.defect_density - dense.defect_density()).abs();
            let d_f = (free.cat_fidelity - dense.cat_fidelity()).abs();
            assert!(d_rho < 1e-9, "N={n} seed={seed}: Δρ = {d_rho:e}");
            assert!(d_f < 1e-9, "N={n} seed={seed}: ΔF = {d_f:e}");
            assert!((dense.norm_sqr() - 1.0).abs() < 1e-9);
            assert!((dense.even_parity_weight() - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn power_law_quench_agrees_at_n8() {
    let spec = QuenchSpec::new(8, 3.0, 2.0, 0.0, 600).unwrap();
    let field = power_law_field(&spec, 2.5).unwrap();
    let free = evaluate(&spec, &field).unwrap();
    let dense = ed_evolve(&spec, &field).unwrap();
    assert!((free.defect_density - dense.defect_density()).abs() < 1e-9);
    assert!((free.cat_fidelity - dense.cat_fidelity()).abs() < 1e-9);
}

#[test]
fn fields_that_reenter_the_paramagnet_agree() {
    // Oscillates across g = 1 several times and dips below zero.
    let spec = QuenchSpec::new(6, 2.0, 2.0, 0.0, 500).unwrap();
    let field = quench_core::propagator::ControlField::from_fn(
        &spec,
        quench_core::propagator::Provenance::Custom("wiggle".into()),
        |t| 1.0 - 0.5 * t + 0.9 * (3.0 * t).sin(),
    )
    .unwrap();
    let free = evaluate(&spec, &field).unwrap();
    let dense = ed_evolve(&spec, &field).unwrap();
    assert!((free.defect_density - dense.defect_density()).abs() < 1e-9);
    assert!((free.cat_fidelity - dense.cat_fidelity()).abs() < 1e-9);
}
