//! Single-bounce ray-cast renderer.
//!
//! For every pixel the primary ray is intersected with the scene; hit pixels
//! get the Stokes vector of the combined emission/reflection ray, misses see
//! the environment as an unpolarized blackbody.

pub mod mesh;
pub mod scene;

use nalgebra::Vector3;
use rayon::prelude::*;
use std::f64::consts::TAU;

pub use mesh::{load_mesh, parse_obj, Bvh, Mesh, Ray, TriangleHit};
pub use scene::{
    height_field_mesh, Geometry, Pose, PreparedGeometry, ProjectionKind, ProjectionModel, SceneFile,
    SceneSpec,
};

use crate::calibration::{blackbody_stokes, CalibrationShot, CalibrationSource};
use crate::estimation::{NormalMap, NormalSpace};
use crate::grid::{Grid, Mask};
use crate::imaging::{derive_seed, difference_image, simulate_raw_image, CameraModel, RawImage};
use crate::polarization::{surface_stokes, CELSIUS_OFFSET};
use crate::reconstruction::CaptureSession;
use crate::stokes::{StokesMap, StokesVector};
use crate::{Error, Result};

/// Smallest view-space `n_z` kept for visible pixels, so the zenith stays
/// strictly below 90°.
const MIN_COS_ZENITH: f64 = 1e-6;

/// Rendered geometry for one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// Camera-space unit normals.
    pub normals: NormalMap,
    /// Angle between normal and view vector, radians.
    pub zenith: Grid<f64>,
    /// Azimuth in the per-pixel view frame, `[0, 2π)`.
    pub azimuth: Grid<f64>,
    pub mask: Mask,
}

impl GroundTruth {
    /// Same normals expressed in each pixel's view frame.
    pub fn view_normals(&self) -> NormalMap {
        let g = &self.zenith;
        let normals = Grid::from_fn(g.width(), g.height(), |c, r| {
            let (st, ct) = g.get(c, r).sin_cos();
            let phi = *self.azimuth.get(c, r);
            Vector3::new(st * phi.cos(), st * phi.sin(), ct)
        });
        NormalMap {
            normals,
            mask: self.mask.clone(),
            space: NormalSpace::ViewVector,
        }
    }
}

/// Cast one ray per pixel and record the visible surface normal.
pub fn render_ground_truth(scene: &SceneSpec) -> Result<GroundTruth> {
    let geometry = PreparedGeometry::prepare(scene)?;
    let proj = &scene.projection;
    let (w, h) = scene.resolution;
    let hits: Vec<Option<(Vector3<f64>, f64, f64)>> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (col, row) = (i % w, i / w);
            let ray = proj.ray(col, row, w, h);
            let (_, n) = geometry.intersect(&ray)?;
            let v = -ray.dir;
            // Two-sided surfaces: show the side facing the camera.
            let n = if n.dot(&v) < 0.0 { -n } else { n };
            let nv = proj.view_frame(col, row, w, h).inverse() * n;
            let nz = nv.z.max(MIN_COS_ZENITH);
            let zenith = nz.min(1.0).acos();
            let azimuth = if nv.x == 0.0 && nv.y == 0.0 {
                0.0
            } else {
                nv.y.atan2(nv.x).rem_euclid(TAU) % TAU
            };
            Some((n, zenith, azimuth))
        })
        .collect();

    let mask = Grid::from_vec(w, h, hits.iter().map(Option::is_some).collect())?;
    let normals = Grid::from_vec(
        w,
        h,
        hits.iter()
            .enumerate()
            .map(|(i, hit)| hit.map_or_else(|| proj.view_vector(i % w, i / w, w, h), |x| x.0))
            .collect(),
    )?;
    let zenith = Grid::from_vec(w, h, hits.iter().map(|x| x.map_or(0.0, |x| x.1)).collect())?;
    let azimuth = Grid::from_vec(w, h, hits.iter().map(|x| x.map_or(0.0, |x| x.2)).collect())?;
    Ok(GroundTruth {
        normals: NormalMap {
            normals,
            mask: mask.clone(),
            space: NormalSpace::Camera,
        },
        zenith,
        azimuth,
        mask,
    })
}

/// Exact Stokes field of a scene: surface polarization on hits, environment
/// blackbody elsewhere.
pub fn render_stokes(scene: &SceneSpec, truth: &GroundTruth) -> Result<StokesMap> {
    let background = blackbody_stokes(scene.material.tau_env)?;
    let (w, h) = scene.resolution;
    let data = (0..w * h)
        .into_par_iter()
        .map(|i| {
            if truth.mask.data()[i] {
                surface_stokes(truth.zenith.data()[i], truth.azimuth.data()[i], &scene.material)
            } else {
                Ok(background)
            }
        })
        .collect::<Result<Vec<StokesVector>>>()?;
    StokesMap::new(Grid::from_vec(w, h, data)?, truth.mask.clone())
}

/// Everything a synthetic capture produces.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedSession {
    pub raw_scene: Vec<RawImage>,
    pub raw_reference: Vec<RawImage>,
    /// Difference images with the object silhouette as mask.
    pub session: CaptureSession,
    /// Noise-free Stokes field the raw frames were rendered from.
    pub stokes: StokesMap,
    pub ground_truth: GroundTruth,
}

/// Render a full capture: at each polarizer angle a reference blackbody frame
/// at `tau_ref` followed by a scene frame. Frame `2j` / `2j + 1` use noise
/// streams derived from `seed`.
pub fn render_session(
    scene: &SceneSpec,
    cam: &CameraModel,
    angles: &[f64],
    tau_ref: f64,
    seed: u64,
) -> Result<SimulatedSession> {
    cam.validate()?;
    if angles.is_empty() {
        return Err(Error::InsufficientData("no polarizer angles".into()));
    }
    let ground_truth = render_ground_truth(scene)?;
    let stokes = render_stokes(scene, &ground_truth)?;
    let (w, h) = scene.resolution;
    let reference = Grid::filled(w, h, blackbody_stokes(tau_ref)?);

    let mut raw_scene = Vec::with_capacity(angles.len());
    let mut raw_reference = Vec::with_capacity(angles.len());
    let mut diffs = Vec::with_capacity(angles.len());
    for (j, &psi) in angles.iter().enumerate() {
        let j = j as u64;
        let a = simulate_raw_image(&reference, psi, cam, true, derive_seed(seed, 2 * j), 2 * j);
        let b = simulate_raw_image(&stokes.stokes, psi, cam, true, derive_seed(seed, 2 * j + 1), 2 * j + 1);
        diffs.push((psi, difference_image(&b, &a)?));
        raw_reference.push(a);
        raw_scene.push(b);
    }
    Ok(SimulatedSession {
        raw_scene,
        raw_reference,
        session: CaptureSession {
            diffs,
            tau_ref,
            cam: *cam,
            mask: ground_truth.mask.clone(),
        },
        stokes,
        ground_truth,
    })
}

/// Blackbody captures for calibration.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationPlan {
    pub angles: Vec<f64>,
    /// `(τ_α, τ_β)` in kelvin.
    pub pairs: Vec<(f64, f64)>,
    pub source: CalibrationSource,
    pub width: usize,
    pub height: usize,
}

impl Default for CalibrationPlan {
    fn default() -> Self {
        let alpha = 23.0 + CELSIUS_OFFSET;
        Self {
            angles: (0..8).map(|i| i as f64 * std::f64::consts::PI / 8.0).collect(),
            pairs: [20.0, 35.0, 50.0, 65.0, 80.0]
                .iter()
                .map(|b| (alpha, b + CELSIUS_OFFSET))
                .collect(),
            source: CalibrationSource::Unpolarized,
            width: 16,
            height: 16,
        }
    }
}

/// Render the difference images of every (angle, pair) combination.
pub fn calibration_shots(cam: &CameraModel, plan: &CalibrationPlan, seed: u64) -> Result<Vec<CalibrationShot>> {
    cam.validate()?;
    let (w, h) = (plan.width, plan.height);
    if w == 0 || h == 0 {
        return Err(Error::invalid("calibration plan", "empty frame"));
    }
    let mut shots = Vec::with_capacity(plan.angles.len() * plan.pairs.len());
    let mut stream = 0u64;
    for &psi in &plan.angles {
        for &(ta, tb) in &plan.pairs {
            let sa = Grid::filled(w, h, plan.source.stokes(ta)?);
            let sb = Grid::filled(w, h, plan.source.stokes(tb)?);
            let a = simulate_raw_image(&sa, psi, cam, true, derive_seed(seed, stream), stream);
            let b = simulate_raw_image(&sb, psi, cam, true, derive_seed(seed, stream + 1), stream + 1);
            stream += 2;
            shots.push(CalibrationShot {
                psi,
                tau_alpha: ta,
                tau_beta: tb,
                source: plan.source,
                diff: difference_image(&b, &a)?,
            });
        }
    }
    Ok(shots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polarization::MaterialEnv;
    use crate::reconstruction::reconstruct_stokes;
    use std::f64::consts::PI;

    fn material() -> MaterialEnv {
        MaterialEnv::from_celsius(1.8, 50.0, 23.0).unwrap()
    }

    #[test]
    fn sphere_ground_truth_matches_analytic() {
        let scene = SceneSpec::sphere(material(), 64);
        let gt = render_ground_truth(&scene).unwrap();
        let px = 2.2 / 64.0;
        let mut inside = 0;
        for row in 0..64 {
            for col in 0..64 {
                let x = (col as f64 + 0.5 - 32.0) * px;
                let y = (32.0 - (row as f64 + 0.5)) * px;
                let r2 = x * x + y * y;
                assert_eq!(*gt.mask.get(col, row), r2 <= 1.0, "{col},{row}");
                if r2 <= 1.0 {
                    inside += 1;
                    let n = gt.normals.normals.get(col, row);
                    let want = Vector3::new(x, y, (1.0 - r2).sqrt());
                    assert!((n - want).norm() < 1e-9);
                    assert!((gt.zenith.get(col, row) - want.z.acos()).abs() < 1e-9);
                    let phi = y.atan2(x).rem_euclid(TAU);
                    assert!((gt.azimuth.get(col, row) - phi).abs() < 1e-9);
                }
            }
        }
        assert!(inside > 2500);
        let vn = gt.view_normals();
        for (a, b) in vn.normals.iter().zip(gt.normals.normals.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn pinhole_view_frame_zenith() {
        let mut scene = SceneSpec::sphere(material(), 48);
        scene.projection = ProjectionModel::pinhole(100.0);
        let gt = render_ground_truth(&scene).unwrap();
        assert!(gt.mask.count() > 0);
        let proj = scene.projection;
        for row in 0..48 {
            for col in 0..48 {
                if *gt.mask.get(col, row) {
                    let v = proj.view_vector(col, row, 48, 48);
                    let n = gt.normals.normals.get(col, row);
                    let z = *gt.zenith.get(col, row);
                    assert!((n.dot(&v).clamp(-1.0, 1.0).acos() - z).abs() < 1e-6);
                    assert!(z < PI / 2.0);
                }
            }
        }
    }

    #[test]
    fn session_is_deterministic_and_reconstructs() {
        let scene = SceneSpec::sphere(material(), 24);
        let cam = CameraModel {
            offset_base: 500.0,
            offset_pol: 8.0,
            ..CameraModel::ideal(1.6, 0.95)
        };
        let angles: Vec<f64> = (0..4).map(|i| i as f64 * PI / 4.0).collect();
        let a = render_session(&scene, &cam, &angles, 296.15, 9).unwrap();
        let b = render_session(&scene, &cam, &angles, 296.15, 9).unwrap();
        assert_eq!(a, b);
        let rec = reconstruct_stokes(&a.session).unwrap();
        for i in 0..24 * 24 {
            if a.session.mask.data()[i] {
                let got = rec.stokes.stokes.data()[i];
                let want = a.stokes.stokes.data()[i];
                assert!(((got - want).to_vector().abs().max()) / want.s0 < 1e-9);
            }
        }
    }

    #[test]
    fn noisy_sessions_differ_by_seed() {
        let scene = SceneSpec::sphere(material(), 16);
        let cam = CameraModel {
            noise_sigma: 1.0,
            ..CameraModel::ideal(1.0, 1.0)
        };
        let angles = [0.0, PI / 3.0, 2.0 * PI / 3.0];
        let a = render_session(&scene, &cam, &angles, 296.15, 1).unwrap();
        let b = render_session(&scene, &cam, &angles, 296.15, 2).unwrap();
        assert_ne!(a.session.diffs, b.session.diffs);
    }

    #[test]
    fn calibration_plan_shape() {
        let shots = calibration_shots(&CameraModel::default(), &CalibrationPlan::default(), 0).unwrap();
        assert_eq!(shots.len(), 40);
        assert!(shots.iter().all(|s| s.diff.shape() == (16, 16)));
    }
}
