//! Control-field families: power laws, network-shaped fields and additive
//! white Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::Observable;
use crate::ising::QuenchSpec;
use crate::network::NetworkParams;
use crate::propagator::{evaluate, ControlField, Provenance};

/// g(t) = c − h·|t/T|^r·sgn(t) with c = (g_i + g_f)/2 and h = (g_i − g_f)/2,
/// so g(−T) = g_i, g(0) = c and g(T) = g_f.
pub fn power_law_value(spec: &QuenchSpec, r: f64, t: f64) -> f64 {
    let c = 0.5 * (spec.g_i + spec.g_f);
    let h = 0.5 * (spec.g_i - spec.g_f);
    let x = (t / spec.t_half).clamp(-1.0, 1.0);
    c - h * x.abs().powf(r) * x.signum()
}

pub fn power_law_field(spec: &QuenchSpec, r: f64) -> Result<ControlField> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidSpec(format!("power-law exponent must be positive, got {r}")));
    }
    let prov = if r == 1.0 {
        Provenance::Linear
    } else {
        Provenance::PowerLaw { r }
    };
    ControlField::from_fn(spec, prov, |t| power_law_value(spec, r, t))
}

pub fn linear_field(spec: &QuenchSpec) -> Result<ControlField> {
    power_law_field(spec, 1.0)
}

/// Affine output map g = offset + scale·f(t/T).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldScale {
    pub offset: f64,
    pub scale: f64,
}

impl Default for FieldScale {
    fn default() -> Self {
        Self {
            offset: 0.0,
            scale: 1.0,
        }
    }
}

/// Normalized grid x_m = t_m/T.
pub fn normalized_times(spec: &QuenchSpec) -> Vec<f64> {
    spec.times().into_iter().map(|t| t / spec.t_half).collect()
}

pub fn network_field(spec: &QuenchSpec, params: &NetworkParams, scale: FieldScale) -> Result<ControlField> {
    let xs = normalized_times(spec);
    let samples = params
        .outputs(&xs)
        .into_iter()
        .map(|f| scale.offset + scale.scale * f)
        .collect();
    ControlField::new(samples, Provenance::Network)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Signal-to-noise ratio in dB; +∞ means no noise.
    pub snr_db: f64,
    pub seed: u64,
}

/// P_s = mean g², P_n = P_s / 10^(snr/10).
pub fn noise_power(field: &ControlField, snr_db: f64) -> f64 {
    let s = field.samples();
    let ps = s.iter().map(|g| g * g).sum::<f64>() / s.len() as f64;
    ps / 10f64.powf(snr_db / 10.0)
}

/// Adds i.i.d. N(0, P_n) to every sample, drawn from a ChaCha stream seeded
/// by `noise.seed`.
pub fn add_awgn(field: &ControlField, noise: NoiseSpec) -> Result<ControlField> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let samples = awgn_samples(field, noise.snr_db, &mut rng)?;
    ControlField::new(
        samples,
        Provenance::Noisy {
            parent: Box::new(field.provenance.clone()),
            seed: noise.seed,
            snr_db: noise.snr_db,
        },
    )
}

/// As [`add_awgn`] with a caller-owned generator.
pub fn awgn_samples<R: Rng + ?Sized>(field: &ControlField, snr_db: f64, rng: &mut R) -> Result<Vec<f64>> {
    if snr_db.is_nan() {
        return Err(Error::InvalidSpec("SNR is NaN".into()));
    }
    let pn = noise_power(field, snr_db);
    if pn == 0.0 {
        return Ok(field.samples().to_vec());
    }
    let normal = Normal::new(0.0, pn.sqrt()).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    Ok(field.samples().iter().map(|g| g + normal.sample(rng)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawOptimum {
    pub r: f64,
    pub value: f64,
    /// False when the coarse minimum sits on the edge of the search range.
    pub bracketed: bool,
    pub scan: Vec<(f64, f64)>,
}

pub const POWER_LAW_RANGE: (f64, f64) = (0.5, 12.0);

/// Exponent minimizing ρ(T) (or maximizing F(T)) over r ∈ [0.5, 12]:
/// a log-spaced scan followed by golden-section refinement to |Δr| < 1e−3.
pub fn optimize_power_law(spec: &QuenchSpec, which: Observable) -> Result<PowerLawOptimum> {
    optimize_power_law_in(spec, which, POWER_LAW_RANGE, 25, 1e-3)
}

pub fn optimize_power_law_in(
    spec: &QuenchSpec,
    which: Observable,
    range: (f64, f64),
    coarse: usize,
    tol: f64,
) -> Result<PowerLawOptimum> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo && coarse >= 3) {
        return Err(Error::InvalidSpec(format!("bad power-law search range {lo}..{hi}")));
    }
    let cost = |r: f64| -> Result<f64> {
        let rep = evaluate(spec, &power_law_field(spec, r)?)?;
        Ok(match which {
            Observable::Defect => rep.defect_density,
            Observable::Fidelity => -rep.cat_fidelity,
        })
    };
    let ratio = (hi / lo).ln();
    let rs: Vec<f64> = (0..coarse)
        .map(|i| lo * (ratio * i as f64 / (coarse - 1) as f64).exp())
        .collect();
    let mut scan = Vec::with_capacity(coarse);
    for &r in &rs {
        scan.push((r, cost(r)?));
    }
    let best = (0..coarse)
        .min_by(|&a, &b| scan[a].1.total_cmp(&scan[b].1))
        .unwrap();
    let sign = |v: f64| match which {
        Observable::Defect => v,
        Observable::Fidelity => -v,
    };
    if best == 0 || best == coarse - 1 {
        return Ok(PowerLawOptimum {
            r: rs[best],
            value: sign(scan[best].1),
            bracketed: false,
            scan: scan.into_iter().map(|(r, v)| (r, sign(v))).collect(),
        });
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (rs[best - 1], rs[best + 1]);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = cost(c)?;
    let mut fd = cost(d)?;
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = cost(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = cost(d)?;
        }
    }
    let (mut r, mut v) = if fc < fd { (c, fc) } else { (d, fd) };
    if scan[best].1 < v {
        (r, v) = scan[best];
    }
    Ok(PowerLawOptimum {
        r,
        value: sign(v),
        bracketed: true,
        scan: scan.into_iter().map(|(r, v)| (r, sign(v))).collect(),
    })
}
