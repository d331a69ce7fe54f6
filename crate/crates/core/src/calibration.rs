//! Gain and polarimetric-response calibration from blackbody difference
//! images.
//!
//! With the polarizer at ψ in front of the microbolometer, the offset-free
//! response to any Stokes difference `Δs` is
//!
//! ```text
//! I_Δ = cᵀ M_cam M_pol(ψ) Δs = (c/2) m(ψ) [1, cos2ψ, sin2ψ]·Δs
//! m(ψ) = ((1+k) + (1-k) cos2ψ) / 2
//! ```
//!
//! so the per-angle gain `g(ψ) = A + B cos2ψ` with `A = c(1+k)/4` and
//! `B = c(1-k)/4`. `A` is the ψ-averaged (composite) gain; the angular
//! modulation separates `c` and `k`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::grid::Image;
use crate::imaging::polarizer_mueller;
use crate::polarization::blackbody_radiance;
use crate::stokes::StokesVector;
use crate::{Error, Result};

const ALS_MAX_ITER: usize = 100;
const ALS_TOL: f64 = 1e-9;

/// Target seen during a calibration shot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CalibrationSource {
    /// Bare blackbody.
    Unpolarized,
    /// Blackbody behind an ideal reference polarizer at `aolp` radians.
    Polarized { aolp: f64 },
}

impl CalibrationSource {
    pub fn stokes(&self, tau: f64) -> Result<StokesVector> {
        let s = blackbody_stokes(tau)?;
        Ok(match *self {
            CalibrationSource::Unpolarized => s,
            CalibrationSource::Polarized { aolp } => polarizer_mueller(aolp).apply(s),
        })
    }
}

/// Difference image `I(ψ, s(τ_β)) - I(ψ, s(τ_α))` of a blackbody pair.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationShot {
    pub psi: f64,
    pub tau_alpha: f64,
    pub tau_beta: f64,
    pub source: CalibrationSource,
    pub diff: Image,
}

impl CalibrationShot {
    /// `[1, cos2ψ, sin2ψ]·Δs`, the part of the response that does not depend
    /// on the camera.
    fn predictor(&self) -> Result<f64> {
        let ds = self.source.stokes(self.tau_beta)? - self.source.stokes(self.tau_alpha)?;
        let (s, c) = (2.0 * self.psi).sin_cos();
        Ok(ds.dot(&[1.0, c, s]))
    }
}

/// `[σ τ⁴, 0, 0]`.
pub fn blackbody_stokes(tau: f64) -> Result<StokesVector> {
    Ok(StokesVector::unpolarized(blackbody_radiance(tau)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMethod {
    Composite,
    PolarizedSource,
}

/// Output of [`calibrate_gain`].
#[derive(Clone, Debug, PartialEq)]
pub struct GainFit {
    /// ψ-averaged gain `c(1+k)/4` per unit predictor.
    pub composite: f64,
    /// `c`, available when the shots cover at least two orientations.
    pub c: Option<f64>,
    /// Slope of `I_Δ` against the predictor at each distinct orientation.
    pub per_angle: Vec<(f64, f64)>,
    /// Coefficient of determination of the fit over all shots.
    pub r2: f64,
    pub n_pairs: usize,
}

/// Persisted calibration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub c: f64,
    pub k: f64,
    pub r2: f64,
    pub method: CalibrationMethod,
}

impl CalibrationResult {
    /// Relative gain `m(ψ)` for light polarized along ψ.
    pub fn gain_factor(&self, psi: f64) -> f64 {
        gain_factor(self.k, psi)
    }
}

pub fn gain_factor(k: f64, psi: f64) -> f64 {
    0.5 * ((1.0 + k) + (1.0 - k) * (2.0 * psi).cos())
}

struct Sample {
    psi: f64,
    predictor: f64,
    value: f64,
}

fn samples(shots: &[CalibrationShot]) -> Result<Vec<Sample>> {
    shots
        .iter()
        .map(|shot| {
            if shot.tau_alpha == shot.tau_beta {
                return Err(Error::invalid(
                    "calibration shot",
                    format!("tau_alpha == tau_beta == {} K", shot.tau_alpha),
                ));
            }
            if shot.diff.is_empty() {
                return Err(Error::invalid("calibration shot", "empty difference image"));
            }
            Ok(Sample {
                psi: shot.psi,
                predictor: shot.predictor()?,
                value: shot.diff.mean(),
            })
        })
        .collect()
}

fn distinct_angles(psis: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for psi in psis {
        let p = psi.rem_euclid(PI);
        if !out.iter().any(|&q| crate::imaging::same_angle(p, q)) {
            out.push(p);
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

fn distinct_pairs(shots: &[CalibrationShot]) -> usize {
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for s in shots {
        let p = (s.tau_alpha, s.tau_beta);
        if !pairs.contains(&p) {
            pairs.push(p);
        }
    }
    pairs.len()
}

fn r_squared(samples: &[Sample], fitted: impl Fn(&Sample) -> f64) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.value).sum::<f64>() / n;
    let ss_tot: f64 = samples.iter().map(|s| (s.value - mean).powi(2)).sum();
    let ss_res: f64 = samples.iter().map(|s| (s.value - fitted(s)).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

/// Solve the 2×2 normal equations of `value ≈ A·x + B·y`.
fn lstsq2(rows: impl Iterator<Item = (f64, f64, f64)>) -> Option<(f64, f64)> {
    let (mut xx, mut xy, mut yy, mut xv, mut yv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y, v) in rows {
        xx += x * x;
        xy += x * y;
        yy += y * y;
        xv += x * v;
        yv += y * v;
    }
    let det = xx * yy - xy * xy;
    if !(det.abs() > 1e-12 * (xx * yy).max(f64::MIN_POSITIVE)) {
        return None;
    }
    Some(((xv * yy - yv * xy) / det, (yv * xx - xv * xy) / det))
}

/// Linear gain calibration from blackbody pairs.
///
/// Fits `I_Δ = q (A + B cos2ψ)` over all shots, `q` being the camera-free
/// predictor. With a single orientation only the slope at that orientation is
/// identifiable; it is reported as the composite gain and `c` is left unset.
pub fn calibrate_gain(shots: &[CalibrationShot]) -> Result<GainFit> {
    let n_pairs = distinct_pairs(shots);
    if n_pairs < 2 {
        return Err(Error::InsufficientData(format!(
            "at least 2 distinct blackbody temperature pairs, got {n_pairs}"
        )));
    }
    let samples = samples(shots)?;
    let angles = distinct_angles(samples.iter().map(|s| s.psi));

    let per_angle = angles
        .iter()
        .map(|&psi| {
            let (num, den) = samples
                .iter()
                .filter(|s| crate::imaging::same_angle(s.psi, psi))
                .fold((0.0, 0.0), |(n, d), s| {
                    (n + s.predictor * s.value, d + s.predictor * s.predictor)
                });
            (psi, num / den)
        })
        .collect::<Vec<_>>();

    if angles.len() < 2 {
        let slope = per_angle[0].1;
        if !slope.is_finite() {
            return Err(Error::InsufficientData("singular design (zero predictor)".into()));
        }
        let r2 = r_squared(&samples, |s| slope * s.predictor);
        return Ok(GainFit {
            composite: slope,
            c: None,
            per_angle,
            r2,
            n_pairs,
        });
    }

    let (a, b) = lstsq2(
        samples
            .iter()
            .map(|s| (s.predictor, s.predictor * (2.0 * s.psi).cos(), s.value)),
    )
    .ok_or_else(|| Error::InsufficientData("singular design for gain fit".into()))?;
    let r2 = r_squared(&samples, |s| s.predictor * (a + b * (2.0 * s.psi).cos()));
    Ok(GainFit {
        composite: a,
        c: Some(2.0 * (a + b)),
        per_angle,
        r2,
        n_pairs,
    })
}

/// Joint estimate of `c` and `k`.
///
/// The linear fit of [`calibrate_gain`] seeds an alternating least-squares
/// refinement over the raw shot means: `c` with `k` fixed, then `k` with `c`
/// fixed, until both change by less than 1e-9 (at most 100 rounds). `k` is
/// clamped into `(0, 1]`.
pub fn calibrate_response(shots: &[CalibrationShot]) -> Result<CalibrationResult> {
    let angles = distinct_angles(shots.iter().map(|s| s.psi));
    if angles.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "at least 3 distinct polarizer angles in [0, pi), got {}",
            angles.len()
        )));
    }
    let fit = calibrate_gain(shots)?;
    let samples = samples(shots)?;
    let a = fit.composite;
    let c0 = fit.c.expect("multiple angles");
    let b = c0 / 2.0 - a;

    let mut c = c0;
    let mut k = clamp_k((a - b) / (a + b));
    for _ in 0..ALS_MAX_ITER {
        // c-step: value = c · q m(ψ) / 2
        let (num, den) = samples.iter().fold((0.0, 0.0), |(n, d), s| {
            let u = 0.5 * s.predictor * gain_factor(k, s.psi);
            (n + u * s.value, d + u * u)
        });
        let c_new = num / den;
        // k-step: value - c q (1 + cos)/4 = k · c q (1 - cos)/4
        let (num, den) = samples.iter().fold((0.0, 0.0), |(n, d), s| {
            let cos = (2.0 * s.psi).cos();
            let r = s.value - c_new * s.predictor * (1.0 + cos) / 4.0;
            let v = c_new * s.predictor * (1.0 - cos) / 4.0;
            (n + r * v, d + v * v)
        });
        let k_new = clamp_k(num / den);
        let change = (c_new - c).abs().max((k_new - k).abs());
        c = c_new;
        k = k_new;
        if change < ALS_TOL {
            break;
        }
    }
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::InsufficientData(format!("fit produced gain {c}")));
    }

    let r2 = r_squared(&samples, |s| 0.5 * c * s.predictor * gain_factor(k, s.psi));
    let method = if shots
        .iter()
        .any(|s| matches!(s.source, CalibrationSource::Polarized { .. }))
    {
        CalibrationMethod::PolarizedSource
    } else {
        CalibrationMethod::Composite
    };
    Ok(CalibrationResult { c, k, r2, method })
}

fn clamp_k(k: f64) -> f64 {
    if k.is_finite() {
        k.clamp(1e-6, 1.0)
    } else {
        1.0
    }
}

/// Relative per-angle gain `m(ψ) = g(ψ) / g(0)` measured from the shots, one
/// entry per distinct orientation.
pub fn measured_gain_factors(shots: &[CalibrationShot]) -> Result<Vec<(f64, f64)>> {
    let fit = calibrate_gain(shots)?;
    let c = fit
        .c
        .ok_or_else(|| Error::InsufficientData("at least 2 distinct polarizer angles".into()))?;
    Ok(fit
        .per_angle
        .iter()
        .map(|&(psi, g)| (psi, g / (0.5 * c)))
        .collect())
}
