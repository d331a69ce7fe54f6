//! Sensor model of a thermal camera behind a rotating linear polarizer.
//!
//! A raw pixel is `I(ψ, s) = cᵀ M_cam M_pol(ψ) s + I_off(ψ)` with
//! `c = [c, 0, 0]ᵀ`, the microbolometer modeled as a partial linear polarizer
//! with gain 1 along ψ = 0 and `k` along ψ = 90°, and an additive offset that
//! drifts with sensor temperature but is constant over a pair of captures.

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{Grid, Image};
use crate::stokes::{MuellerMatrix, StokesMap, StokesVector};
use crate::{Error, Result};

/// Ideal linear polarizer with transmission axis at `psi`.
pub fn polarizer_mueller(psi: f64) -> MuellerMatrix {
    let (s, c) = (2.0 * psi).sin_cos();
    MuellerMatrix(
        Matrix3::new(
            1.0,
            c,
            s, //
            c,
            c * c,
            s * c, //
            s,
            s * c,
            s * s,
        ) * 0.5,
    )
}

/// Microbolometer polarimetric response, a partial polarizer with gain 1 at
/// 0° and `k` at 90°.
pub fn camera_mueller(k: f64) -> Result<MuellerMatrix> {
    check_k(k)?;
    Ok(camera_mueller_unchecked(k))
}

fn camera_mueller_unchecked(k: f64) -> MuellerMatrix {
    MuellerMatrix(
        Matrix3::new(
            1.0 + k,
            1.0 - k,
            0.0, //
            1.0 - k,
            1.0 + k,
            0.0, //
            0.0,
            0.0,
            2.0 * k.sqrt(),
        ) * 0.5,
    )
}

fn check_k(k: f64) -> Result<()> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::domain("k", k, "(0, 1]"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Gain, digital numbers per radiance unit.
    pub c: f64,
    /// Polarimetric response factor in `(0, 1]`.
    pub k: f64,
    /// Polarization-independent offset (thermal noise floor), DN.
    pub offset_base: f64,
    /// Amplitude of the polarizer-dependent offset `cos(2ψ + phase)`, DN.
    pub offset_pol: f64,
    #[serde(default)]
    pub offset_phase: f64,
    /// Additive Gaussian noise std, DN.
    pub noise_sigma: f64,
    /// Round raw values to whole digital numbers.
    #[serde(default)]
    pub quantize: bool,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            c: 1.0,
            k: 1.0,
            offset_base: 0.0,
            offset_pol: 0.0,
            offset_phase: 0.0,
            noise_sigma: 0.0,
            quantize: false,
        }
    }
}

impl CameraModel {
    pub fn ideal(c: f64, k: f64) -> Self {
        Self {
            c,
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::domain("c", self.c, "> 0"));
        }
        check_k(self.k)?;
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::domain("noise_sigma", self.noise_sigma, ">= 0"));
        }
        for (name, v) in [
            ("offset_base", self.offset_base),
            ("offset_pol", self.offset_pol),
            ("offset_phase", self.offset_phase),
        ] {
            if !v.is_finite() {
                return Err(Error::domain(name, v, "finite"));
            }
        }
        Ok(())
    }

    pub fn camera_mueller(&self) -> MuellerMatrix {
        camera_mueller_unchecked(self.k)
    }

    /// `cᵀ M_cam M_pol(ψ)`, the linear functional mapping a Stokes vector to
    /// an offset-free pixel value.
    pub fn response_row(&self, psi: f64) -> [f64; 3] {
        let m = self.camera_mueller() * polarizer_mueller(psi);
        let r = m.row(0);
        [self.c * r[0], self.c * r[1], self.c * r[2]]
    }

    /// `I_off(ψ)`.
    pub fn offset(&self, psi: f64) -> f64 {
        self.offset_base + self.offset_pol * (2.0 * psi + self.offset_phase).cos()
    }

    /// Noiseless `I(ψ, s)`.
    pub fn expected_raw(&self, stokes: &StokesVector, psi: f64) -> f64 {
        stokes.dot(&self.response_row(psi)) + self.offset(psi)
    }

    fn finish(&self, value: f64, rng: Option<&mut ChaCha8Rng>) -> f64 {
        let mut v = value;
        if let Some(rng) = rng {
            if self.noise_sigma > 0.0 {
                v += self.noise_sigma * standard_normal(rng);
            }
        }
        if self.quantize {
            v = v.round();
        }
        v
    }
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

/// SplitMix64 step, used to derive independent per-image RNG streams from a
/// session seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED69));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One raw pixel value. With `with_noise` the Gaussian sample is drawn from a
/// stream seeded by `rng_seed`, so equal seeds give equal outputs.
pub fn simulate_raw(
    stokes: &StokesVector,
    psi: f64,
    cam: &CameraModel,
    with_noise: bool,
    rng_seed: u64,
) -> f64 {
    let value = cam.expected_raw(stokes, psi);
    if with_noise {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        cam.finish(value, Some(&mut rng))
    } else {
        cam.finish(value, None)
    }
}

/// A capture at one polarizer orientation.
#[derive(Clone, Debug, PartialEq)]
pub struct RawImage {
    pub psi: f64,
    pub timestamp_index: u64,
    pub pixels: Image,
}

impl RawImage {
    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }
}

/// Render a full raw frame from a per-pixel Stokes field. Noise, when
/// enabled, comes from a single stream seeded by `rng_seed` and consumed in
/// row-major order.
pub fn simulate_raw_image(
    stokes: &Grid<StokesVector>,
    psi: f64,
    cam: &CameraModel,
    with_noise: bool,
    rng_seed: u64,
    timestamp_index: u64,
) -> RawImage {
    let row = cam.response_row(psi);
    let offset = cam.offset(psi);
    let mut pixels: Vec<f64> = stokes
        .data()
        .par_iter()
        .map(|s| s.dot(&row) + offset)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for v in pixels.iter_mut() {
        *v = cam.finish(*v, with_noise.then_some(&mut rng));
    }
    RawImage {
        psi,
        timestamp_index,
        pixels: Grid::from_vec(stokes.width(), stokes.height(), pixels)
            .expect("shape preserved"),
    }
}

/// `L_ψ = ½(s0 + s1 cos 2ψ + s2 sin 2ψ)` for every pixel.
pub fn polarizer_image(stokes_map: &StokesMap, psi: f64) -> Image {
    let (s, c) = (2.0 * psi).sin_cos();
    stokes_map
        .stokes
        .map(|st| 0.5 * (st.s0 + st.s1 * c + st.s2 * s))
}

/// `b - a` for two captures at the same polarizer angle. The offset cancels
/// as long as it did not drift between the two captures.
pub fn difference_image(img_b: &RawImage, img_a: &RawImage) -> Result<Image> {
    img_b.pixels.same_shape(&img_a.pixels)?;
    if !same_angle(img_b.psi, img_a.psi) {
        return Err(Error::AngleMismatch {
            a: img_b.psi,
            b: img_a.psi,
        });
    }
    let data = img_b
        .pixels
        .iter()
        .zip(img_a.pixels.iter())
        .map(|(b, a)| b - a)
        .collect();
    Grid::from_vec(img_b.width(), img_b.height(), data)
}

/// Equality of polarizer orientations modulo π.
pub fn same_angle(a: f64, b: f64) -> bool {
    let d = (a - b).rem_euclid(std::f64::consts::PI);
    d.min(std::f64::consts::PI - d) < 1e-9
}
