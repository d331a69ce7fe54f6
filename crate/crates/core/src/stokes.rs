//! Linear Stokes vectors and 3×3 Mueller matrices. Circular polarization is
//! not represented.

use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use crate::grid::{Grid, Mask};
use crate::polarization::{wrap_half_open, PolarizationState};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StokesVector {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
}

impl StokesVector {
    pub const ZERO: Self = Self {
        s0: 0.0,
        s1: 0.0,
        s2: 0.0,
    };

    pub const fn new(s0: f64, s1: f64, s2: f64) -> Self {
        Self { s0, s1, s2 }
    }

    pub fn unpolarized(s0: f64) -> Self {
        Self::new(s0, 0.0, 0.0)
    }

    /// Radiance `s0` polarized with degree `dolp` at angle `aolp`.
    pub fn from_polarization(s0: f64, dolp: f64, aolp: f64) -> Self {
        let (sin2, cos2) = (2.0 * aolp).sin_cos();
        Self::new(s0, s0 * dolp * cos2, s0 * dolp * sin2)
    }

    pub fn polarized_magnitude(&self) -> f64 {
        self.s1.hypot(self.s2)
    }

    /// `sqrt(s1² + s2²) <= s0 (1 + slack)`.
    pub fn is_realizable(&self, slack: f64) -> bool {
        self.s0 >= 0.0 && self.polarized_magnitude() <= self.s0 * (1.0 + slack)
    }

    /// DoLP and AoLP. Errors when `s0 <= 0`.
    pub fn polarization_state(&self) -> Result<PolarizationState> {
        if !(self.s0 > 0.0) {
            return Err(Error::ZeroRadiance);
        }
        let mag = self.polarized_magnitude();
        if mag == 0.0 {
            return Ok(PolarizationState {
                dolp: 0.0,
                aolp: 0.0,
                valid: false,
            });
        }
        let aolp = wrap_half_open((0.5 * self.s2.atan2(self.s1)).rem_euclid(PI));
        Ok(PolarizationState {
            dolp: mag / self.s0,
            aolp,
            valid: true,
        })
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.s0, self.s1, self.s2)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn dot(&self, row: &[f64; 3]) -> f64 {
        row[0] * self.s0 + row[1] * self.s1 + row[2] * self.s2
    }
}

impl Add for StokesVector {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.s0 + o.s0, self.s1 + o.s1, self.s2 + o.s2)
    }
}

impl Sub for StokesVector {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.s0 - o.s0, self.s1 - o.s1, self.s2 - o.s2)
    }
}

impl Mul<f64> for StokesVector {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.s0 * k, self.s1 * k, self.s2 * k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MuellerMatrix(pub Matrix3<f64>);

impl MuellerMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn apply(&self, s: StokesVector) -> StokesVector {
        StokesVector::from_vector(self.0 * s.to_vector())
    }

    pub fn then(&self, next: &MuellerMatrix) -> MuellerMatrix {
        MuellerMatrix(next.0 * self.0)
    }

    pub fn row(&self, i: usize) -> [f64; 3] {
        [self.0[(i, 0)], self.0[(i, 1)], self.0[(i, 2)]]
    }
}

impl Mul for MuellerMatrix {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self(self.0 * rhs.0)
    }
}

/// Per-pixel Stokes vectors with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct StokesMap {
    pub stokes: Grid<StokesVector>,
    pub mask: Mask,
}

impl StokesMap {
    pub fn new(stokes: Grid<StokesVector>, mask: Mask) -> Result<Self> {
        stokes.same_shape(&mask)?;
        Ok(Self { stokes, mask })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.stokes.shape()
    }

    pub fn channel(&self, i: usize) -> Grid<f64> {
        self.stokes.map(|s| match i {
            0 => s.s0,
            1 => s.s1,
            _ => s.s2,
        })
    }

    pub fn from_channels(s0: &Grid<f64>, s1: &Grid<f64>, s2: &Grid<f64>, mask: Mask) -> Result<Self> {
        s0.same_shape(s1)?;
        s0.same_shape(s2)?;
        let data = s0
            .iter()
            .zip(s1.iter())
            .zip(s2.iter())
            .map(|((&a, &b), &c)| StokesVector::new(a, b, c))
            .collect();
        Self::new(Grid::from_vec(s0.width(), s0.height(), data)?, mask)
    }

    /// DoLP and AoLP maps; pixels with `s0 <= 0` or outside the mask get 0.
    pub fn dolp_aolp(&self) -> (Grid<f64>, Grid<f64>) {
        let states = self.stokes.map(|s| s.polarization_state().ok());
        let dolp = Grid::from_fn(self.stokes.width(), self.stokes.height(), |c, r| {
            match (self.mask.get(c, r), states.get(c, r)) {
                (true, Some(st)) => st.dolp,
                _ => 0.0,
            }
        });
        let aolp = Grid::from_fn(self.stokes.width(), self.stokes.height(), |c, r| {
            match (self.mask.get(c, r), states.get(c, r)) {
                (true, Some(st)) => st.aolp,
                _ => 0.0,
            }
        });
        (dolp, aolp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polarization_roundtrip() {
        let s = StokesVector::from_polarization(2.0, 0.25, 1.1);
        let st = s.polarization_state().unwrap();
        assert!((st.dolp - 0.25).abs() < 1e-14);
        assert!((st.aolp - 1.1).abs() < 1e-14);
        assert!(StokesVector::ZERO.polarization_state().is_err());
        assert!(!StokesVector::unpolarized(1.0).polarization_state().unwrap().valid);
    }

    #[test]
    fn realizability() {
        assert!(StokesVector::new(1.0, 0.6, 0.8).is_realizable(0.0));
        assert!(!StokesVector::new(1.0, 0.7, 0.8).is_realizable(1e-6));
    }
}
