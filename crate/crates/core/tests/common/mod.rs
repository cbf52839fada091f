#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quench_core::ising::QuenchSpec;
use quench_core::propagator::{ControlField, Provenance};

/// Linear ramp plus a few random Fourier modes that vanish at both ends.
pub fn random_smooth_field(spec: &QuenchSpec, seed: u64) -> ControlField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64)> = (1..=4)
        .map(|j| (rng.gen_range(-0.6..0.6) / j as f64, j as f64))
        .collect();
    let (gi, gf, t_half) = (spec.g_i, spec.g_f, spec.t_half);
    ControlField::from_fn(spec, Provenance::Custom(format!("random {seed}")), |t| {
        let x = (t + t_half) / (2.0 * t_half);
        let bump: f64 = modes
            .iter()
            .map(|&(a, j)| a * (std::f64::consts::PI * j * x).sin())
            .sum();
        gi + (gf - gi) * x + bump
    })
    .unwrap()
}
