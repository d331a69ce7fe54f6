//! Least-squares Stokes recovery from difference images against a reference
//! blackbody: `s = (KᵀK)⁻¹ Kᵀ I + s_b(τ_ref)`.

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::calibration::blackbody_stokes;
use crate::grid::{Grid, Image, Mask};
use crate::imaging::{same_angle, CameraModel};
use crate::stokes::{StokesMap, StokesVector};
use crate::{Error, Result};

/// Condition numbers of `KᵀK` above this are worth a warning.
pub const CONDITION_WARN: f64 = 1e6;

/// Difference images of a scene against a reference blackbody.
#[derive(Clone, Debug, PartialEq)]
pub struct CaptureSession {
    /// `(ψ_j, I_Δ(ψ_j, s, s_b(τ_ref)))`
    pub diffs: Vec<(f64, Image)>,
    /// Reference blackbody temperature, kelvin.
    pub tau_ref: f64,
    pub cam: CameraModel,
    pub mask: Mask,
}

impl CaptureSession {
    pub fn angles(&self) -> Vec<f64> {
        self.diffs.iter().map(|(psi, _)| *psi).collect()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mask.shape()
    }

    pub fn validate(&self) -> Result<()> {
        self.cam.validate()?;
        for (_, img) in &self.diffs {
            self.mask.same_shape(img)?;
        }
        Ok(())
    }
}

/// `K` and its pseudo-inverse for a fixed angle set.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    pub rows: Vec<[f64; 3]>,
    /// `(KᵀK)⁻¹ Kᵀ`, stored as N columns of length 3.
    pseudo_inverse: Vec<[f64; 3]>,
    pub condition_number: f64,
}

impl DesignMatrix {
    pub fn solve(&self, values: impl Iterator<Item = f64>) -> StokesVector {
        let mut out = [0.0; 3];
        for (col, v) in self.pseudo_inverse.iter().zip(values) {
            for i in 0..3 {
                out[i] += col[i] * v;
            }
        }
        StokesVector::new(out[0], out[1], out[2])
    }

    pub fn apply(&self, s: &StokesVector) -> Vec<f64> {
        self.rows.iter().map(|r| s.dot(r)).collect()
    }
}

fn count_distinct(angles: &[f64]) -> usize {
    let mut seen: Vec<f64> = Vec::new();
    for &a in angles {
        if !seen.iter().any(|&b| same_angle(a, b)) {
            seen.push(a);
        }
    }
    seen.len()
}

/// Stack `cᵀ M_cam M_pol(ψ_j)` into `K` and precompute its pseudo-inverse.
pub fn design_matrix(angles: &[f64], cam: &CameraModel) -> Result<DesignMatrix> {
    cam.validate()?;
    let rank_error = || Error::RankDeficient {
        angles_deg: angles.iter().map(|a| a.to_degrees()).collect(),
    };
    if count_distinct(angles) < 3 {
        return Err(rank_error());
    }
    let rows: Vec<[f64; 3]> = angles.iter().map(|&psi| cam.response_row(psi)).collect();
    let mut ktk = Matrix3::zeros();
    for r in &rows {
        for i in 0..3 {
            for j in 0..3 {
                ktk[(i, j)] += r[i] * r[j];
            }
        }
    }
    let eig = SymmetricEigen::new(ktk);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 1e-12 * max) {
        return Err(rank_error());
    }
    let inv = ktk.try_inverse().ok_or_else(rank_error)?;
    let pseudo_inverse = rows
        .iter()
        .map(|r| {
            let v = inv * nalgebra::Vector3::new(r[0], r[1], r[2]);
            [v[0], v[1], v[2]]
        })
        .collect();
    Ok(DesignMatrix {
        rows,
        pseudo_inverse,
        condition_number: max / min,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub stokes: StokesMap,
    pub condition_number: f64,
}

impl Reconstruction {
    pub fn is_well_conditioned(&self) -> bool {
        self.condition_number <= CONDITION_WARN
    }
}

/// Per-pixel least squares. Pixels outside the session mask are left at zero.
pub fn reconstruct_stokes(session: &CaptureSession) -> Result<Reconstruction> {
    session.validate()?;
    let design = design_matrix(&session.angles(), &session.cam)?;
    let reference = blackbody_stokes(session.tau_ref)?;
    let (w, h) = session.shape();
    let mask = session.mask.data();
    let data: Vec<StokesVector> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            if !mask[i] {
                return StokesVector::ZERO;
            }
            design.solve(session.diffs.iter().map(|(_, img)| img.data()[i])) + reference
        })
        .collect();
    Ok(Reconstruction {
        stokes: StokesMap::new(Grid::from_vec(w, h, data)?, session.mask.clone())?,
        condition_number: design.condition_number,
    })
}
