use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use quench_core::dcnn::{endpoint_loss, objective_and_gradients, OptimizerConfig};
use quench_core::fields::{network_field, normalized_times};
use quench_core::gradient::Observable;
use quench_core::ising::QuenchSpec;
use quench_core::network::NetworkParams;

fn cfg(objective: Observable) -> OptimizerConfig {
    OptimizerConfig {
        n1: 4,
        n2: 6,
        objective,
        pretrain: None,
        ..OptimizerConfig::default()
    }
}

fn params(seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = NetworkParams::random(4, 6, 0.8, &mut rng);
    // A roughly decreasing start so the field actually crosses g = 1.
    p.w3.iter_mut().for_each(|w| *w -= 0.3);
    p
}

/// Central differences of Q over every network parameter.
fn fd_q(spec: &QuenchSpec, p: &NetworkParams, cfg: &OptimizerConfig, h: f64) -> Vec<f64> {
    let theta = p.to_vec();
    (0..theta.len())
        .map(|i| {
            let mut t = theta.clone();
            let mut a = p.clone();
            t[i] = theta[i] + h;
            a.set_from_slice(&t);
            let mut b = p.clone();
            t[i] = theta[i] - h;
            b.set_from_slice(&t);
            let qa = objective_and_gradients(spec, &a, cfg).unwrap().score.q;
            let qb = objective_and_gradients(spec, &b, cfg).unwrap().score.q;
            (qa - qb) / (2.0 * h)
        })
        .collect()
}

fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    diff / b.iter().fold(0.0_f64, |m, y| m.max(y.abs()))
}

#[test]
fn parameter_gradient_of_q_matches_finite_differences() {
    let spec = QuenchSpec::new(8, 2.0, 2.0, 0.0, 400).unwrap();
    for (objective, seed) in [(Observable::Defect, 1), (Observable::Fidelity, 2)] {
        let c = cfg(objective);
        let p = params(seed);
        let analytic = objective_and_gradients(&spec, &p, &c).unwrap().grads.to_vec();
        let fd = fd_q(&spec, &p, &c, 1e-5);
        let err = rel_inf(&analytic, &fd);
        assert!(err < 1e-4, "{objective}: relative error {err:e}");
    }
}

#[test]
fn endpoint_loss_gradient_matches_finite_differences() {
    // q1 = 0 isolates ℒ, which depends only on the two endpoint samples.
    let spec = QuenchSpec::new(8, 2.0, 2.0, 0.0, 200).unwrap();
    let c = OptimizerConfig {
        q1: 0.0,
        ..cfg(Observable::Defect)
    };
    let p = params(7);
    let scale = c.field_scale(&spec);
    let analytic = objective_and_gradients(&spec, &p, &c).unwrap().grads.to_vec();
    let loss = |q: &NetworkParams| endpoint_loss(&network_field(&spec, q, scale).unwrap(), 2.0, 0.0);
    let theta = p.to_vec();
    let h = 1e-6;
    for i in 0..theta.len() {
        let mut t = theta.clone();
        let mut a = p.clone();
        t[i] += h;
        a.set_from_slice(&t);
        let mut b = p.clone();
        t[i] -= 2.0 * h;
        b.set_from_slice(&t);
        let fd = (loss(&a) - loss(&b)) / (2.0 * h);
        assert!((fd - analytic[i]).abs() < 1e-8, "param {i}: {fd} vs {}", analytic[i]);
    }
}

#[test]
fn gradient_splits_into_observable_and_endpoint_parts() {
    let spec = QuenchSpec::new(8, 2.0, 2.0, 0.0, 300).unwrap();
    let base = cfg(Observable::Defect);
    let p = params(3);
    let g = |q1: f64, q2: f64| {
        objective_and_gradients(&spec, &p, &OptimizerConfig { q1, q2, ..base.clone() })
            .unwrap()
            .grads
            .to_vec()
    };
    let (full, o_only, l_only) = (g(5.0, 1.0), g(1.0, 0.0), g(0.0, 1.0));
    let combined: Vec<f64> = o_only.iter().zip(&l_only).map(|(o, l)| 5.0 * o + l).collect();
    assert!(rel_inf(&full, &combined) < 1e-12);
    // With the outer factor switched off only ℒ drives the update.
    assert_eq!(g(0.0, 1.0), l_only);
    assert!(g(0.0, 0.0).iter().all(|x| *x == 0.0));
}

#[test]
fn network_field_jacobian_matches_finite_differences() {
    let spec = QuenchSpec::new(8, 2.0, 2.0, 0.0, 50).unwrap();
    let p = params(11);
    let xs = normalized_times(&spec);
    let theta = p.to_vec();
    let h = 1e-6;
    for &m in &[0usize, 13, 25, 50] {
        let row = p.jacobian_row(xs[m]);
        for i in 0..theta.len() {
            let mut t = theta.clone();
            let mut a = p.clone();
            t[i] += h;
            a.set_from_slice(&t);
            let mut b = p.clone();
            t[i] -= 2.0 * h;
            b.set_from_slice(&t);
            let fd = (a.output(xs[m]) - b.output(xs[m])) / (2.0 * h);
            let scale = fd.abs().max(row[i].abs()).max(1e-4);
            assert!((fd - row[i]).abs() / scale < 1e-6, "m={m} param {i}");
        }
    }
}
