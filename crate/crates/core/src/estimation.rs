//! Model-based normal estimation from a Stokes map.
//!
//! Zenith comes from inverting the DoLP curve on its rising branch (below the
//! peak). Azimuth comes from the AoLP, whose π ambiguity is resolved by
//! propagating inward from the silhouette, where normals are assumed to point
//! outward, choosing at each pixel the candidate that agrees best with the
//! already-resolved neighbors.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::str::FromStr;

use crate::grid::{Grid, Mask};
use crate::polarization::{build_dolp_curve, DolpCurve, DEFAULT_CURVE_SAMPLES};
use crate::simulator::ProjectionModel;
use crate::stokes::StokesMap;
use crate::{Error, Result};

pub const DEFAULT_DOLP_FLOOR: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalSpace {
    ViewVector,
    Camera,
}

/// Per-pixel unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalMap {
    pub normals: Grid<Vector3<f64>>,
    pub mask: Mask,
    pub space: NormalSpace,
}

impl NormalMap {
    pub fn shape(&self) -> (usize, usize) {
        self.normals.shape()
    }
}

/// Which component dominates the observed radiance. It fixes the relation
/// between AoLP and azimuth: equal for emission, offset by π/2 for reflection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmissionMode {
    EmissionDominant,
    ReflectionDominant,
}

impl FromStr for EmissionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "emission" | "emission-dominant" => Ok(EmissionMode::EmissionDominant),
            "reflection" | "reflection-dominant" => Ok(EmissionMode::ReflectionDominant),
            _ => Err(Error::invalid(
                "mode",
                format!("'{s}' (expected emission or reflection)"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationParams {
    pub curve: DolpCurve,
    pub mode: EmissionMode,
    /// DoLP below this carries no usable azimuth.
    pub dolp_floor: f64,
    /// Blend between uniform neighbor weights (0) and weights proportional
    /// to DoLP above the floor (1) during azimuth propagation.
    pub smoothness_weight: f64,
    /// Half-size of the window used to estimate silhouette normals.
    pub boundary_window: usize,
}

impl EstimationParams {
    pub fn new(eta: f64, ratio: f64, mode: EmissionMode) -> Result<Self> {
        let params = Self {
            curve: build_dolp_curve(eta, ratio, DEFAULT_CURVE_SAMPLES)?,
            mode,
            dolp_floor: DEFAULT_DOLP_FLOOR,
            smoothness_weight: 1.0,
            boundary_window: 3,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_dolp_floor(mut self, floor: f64) -> Result<Self> {
        self.dolp_floor = floor;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.curve.is_degenerate() {
            return Err(Error::DegenerateCurve);
        }
        if !(self.dolp_floor >= 0.0 && self.dolp_floor < self.curve.rho_peak) {
            return Err(Error::domain("dolp_floor", self.dolp_floor, "[0, rho_peak)"));
        }
        if !(0.0..=1.0).contains(&self.smoothness_weight) {
            return Err(Error::domain("smoothness_weight", self.smoothness_weight, "[0, 1]"));
        }
        if self.boundary_window == 0 {
            return Err(Error::domain("boundary_window", 0.0, ">= 1"));
        }
        Ok(())
    }
}

/// Zenith on the rising branch whose DoLP equals `rho`. Values above the
/// peak clamp to the peak angle.
pub fn invert_zenith(rho: f64, curve: &DolpCurve) -> Result<f64> {
    let theta_peak = curve.theta_peak.ok_or(Error::DegenerateCurve)?;
    if rho.is_nan() {
        return Err(Error::domain("rho", rho, ">= 0"));
    }
    if rho <= 0.0 {
        return Ok(0.0);
    }
    if rho >= curve.rho_peak {
        return Ok(theta_peak);
    }
    let branch = &curve.samples[..=curve.peak_sample_index()];
    let i = branch.partition_point(|&(_, r)| r < rho);
    let mut lo = if i == 0 { 0.0 } else { branch[i - 1].0 };
    let mut hi = if i < branch.len() { branch[i].0 } else { theta_peak };
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if curve.dolp(mid) < rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The two azimuths consistent with an AoLP, both in `[0, 2π)`.
pub fn azimuth_candidates(aolp: f64, mode: EmissionMode) -> (f64, f64) {
    let base = match mode {
        EmissionMode::EmissionDominant => aolp,
        EmissionMode::ReflectionDominant => aolp + FRAC_PI_2,
    };
    (wrap_tau(base), wrap_tau(base + PI))
}

fn wrap_tau(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Absolute angular difference in `[0, π]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AzimuthField {
    /// Radians in `[0, 2π)`; 0 outside the mask.
    pub azimuth: Grid<f64>,
    /// Pixels whose azimuth was inherited from neighbors rather than read
    /// from their own AoLP.
    pub low_confidence: Mask,
}

const NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

fn offset(col: usize, row: usize, dc: isize, dr: isize, w: usize, h: usize) -> Option<(usize, usize)> {
    let c = col.checked_add_signed(dc)?;
    let r = row.checked_add_signed(dr)?;
    (c < w && r < h).then_some((c, r))
}

/// Outward silhouette direction at a mask pixel, as an image-plane angle
/// (x right, y up).
fn outward_direction(mask: &Mask, col: usize, row: usize, radius: usize) -> f64 {
    let (w, h) = mask.shape();
    let r = radius as isize;
    let (mut out_x, mut out_y, mut in_x, mut in_y) = (0.0, 0.0, 0.0, 0.0);
    for dr in -r..=r {
        for dc in -r..=r {
            if dr == 0 && dc == 0 {
                continue;
            }
            let inside = offset(col, row, dc, dr, w, h).is_some_and(|(c, rr)| *mask.get(c, rr));
            let (x, y) = (dc as f64, -dr as f64);
            if inside {
                in_x += x;
                in_y += y;
            } else {
                out_x += x;
                out_y += y;
            }
        }
    }
    if out_x != 0.0 || out_y != 0.0 {
        out_y.atan2(out_x)
    } else if in_x != 0.0 || in_y != 0.0 {
        (-in_y).atan2(-in_x)
    } else {
        0.0
    }
}

fn is_boundary(mask: &Mask, col: usize, row: usize) -> bool {
    let (w, h) = mask.shape();
    [(0, -1), (-1, 0), (1, 0), (0, 1)]
        .iter()
        .any(|&(dc, dr)| !offset(col, row, dc, dr, w, h).is_some_and(|(c, r)| *mask.get(c, r)))
}

/// Resolve the π ambiguity of the AoLP by boundary-inward propagation.
///
/// Boundary pixels take the candidate nearest the outward silhouette normal.
/// The remaining pixels are visited breadth-first from the boundary; each picks
/// the candidate with the smallest weighted mean angular deviation from its
/// resolved 8-neighbors. Ties go to the candidate nearer the outward
/// direction of the boundary pixel the wavefront came from. Pixels with DoLP
/// below the floor inherit the circular mean of their resolved neighbors.
pub fn resolve_azimuth(
    aolp: &Grid<f64>,
    dolp: &Grid<f64>,
    mask: &Mask,
    params: &EstimationParams,
) -> Result<AzimuthField> {
    aolp.same_shape(dolp)?;
    aolp.same_shape(mask)?;
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let (w, h) = mask.shape();
    let n = w * h;
    let mut azimuth = vec![0.0; n];
    let mut resolved = vec![false; n];
    let mut queued = vec![false; n];
    let mut low = vec![false; n];
    let mut source_dir = vec![0.0; n];
    let mut queue = VecDeque::new();

    let informative = |i: usize| dolp.data()[i] >= params.dolp_floor && dolp.data()[i] > 0.0;

    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            if !mask.data()[i] || !is_boundary(mask, col, row) {
                continue;
            }
            let out = outward_direction(mask, col, row, params.boundary_window);
            source_dir[i] = out;
            if informative(i) {
                let (a, b) = azimuth_candidates(aolp.data()[i], params.mode);
                azimuth[i] = if angular_distance(a, out) <= angular_distance(b, out) {
                    a
                } else {
                    b
                };
            } else {
                azimuth[i] = wrap_tau(out);
                low[i] = true;
            }
            resolved[i] = true;
            queued[i] = true;
            queue.push_back(i);
        }
    }

    let peak = params.curve.rho_peak.max(f64::MIN_POSITIVE);
    let sw = params.smoothness_weight;
    while let Some(i) = queue.pop_front() {
        let (col, row) = (i % w, i / w);
        if !resolved[i] {
            let mut nbrs: Vec<(f64, f64)> = Vec::with_capacity(8);
            for &(dc, dr) in &NEIGHBORS {
                if let Some((c, r)) = offset(col, row, dc, dr, w, h) {
                    let j = r * w + c;
                    if resolved[j] {
                        let excess = (dolp.data()[j] - params.dolp_floor).max(0.0) / peak;
                        nbrs.push((azimuth[j], (1.0 - sw) + sw * excess));
                    }
                }
            }
            if nbrs.iter().all(|&(_, wt)| wt <= 0.0) {
                nbrs.iter_mut().for_each(|n| n.1 = 1.0);
            }
            if informative(i) {
                let (a, b) = azimuth_candidates(aolp.data()[i], params.mode);
                let score = |cand: f64| {
                    let (num, den) = nbrs.iter().fold((0.0, 0.0), |(s, t), &(az, wt)| {
                        (s + wt * angular_distance(cand, az), t + wt)
                    });
                    num / den
                };
                let (sa, sb) = (score(a), score(b));
                azimuth[i] = if (sa - sb).abs() <= 1e-12 {
                    let out = source_dir[i];
                    if angular_distance(a, out) <= angular_distance(b, out) {
                        a
                    } else {
                        b
                    }
                } else if sa < sb {
                    a
                } else {
                    b
                };
            } else {
                let (s, c) = nbrs
                    .iter()
                    .fold((0.0, 0.0), |(s, c), &(az, _)| (s + az.sin(), c + az.cos()));
                azimuth[i] = if s == 0.0 && c == 0.0 {
                    wrap_tau(source_dir[i])
                } else {
                    wrap_tau(s.atan2(c))
                };
                low[i] = true;
            }
            resolved[i] = true;
        }
        for &(dc, dr) in &NEIGHBORS {
            if let Some((c, r)) = offset(col, row, dc, dr, w, h) {
                let j = r * w + c;
                if mask.data()[j] && !queued[j] {
                    queued[j] = true;
                    source_dir[j] = source_dir[i];
                    queue.push_back(j);
                }
            }
        }
    }

    Ok(AzimuthField {
        azimuth: Grid::from_vec(w, h, azimuth)?,
        low_confidence: Grid::from_vec(w, h, low)?,
    })
}

/// Result of [`estimate_normals`].
#[derive(Clone, Debug, PartialEq)]
pub struct NormalEstimate {
    /// Camera-space normals.
    pub normals: NormalMap,
    pub view_normals: NormalMap,
    /// 1 where both zenith and azimuth came from the pixel's own
    /// measurement, 0 for low-confidence pixels and outside the mask.
    pub confidence: Grid<f64>,
    pub zenith: Grid<f64>,
    pub azimuth: Grid<f64>,
    pub dolp: Grid<f64>,
    pub aolp: Grid<f64>,
}

/// Full model-based estimate over the mask of `stokes`.
///
/// Stokes vectors that are not physically realizable (noise) are clipped to
/// DoLP 1 here; pixels with non-positive `s0` are treated as unpolarized.
pub fn estimate_normals(
    stokes: &StokesMap,
    params: &EstimationParams,
    proj: &ProjectionModel,
) -> Result<NormalEstimate> {
    params.validate()?;
    proj.validate()?;
    let (w, h) = stokes.shape();
    let mask = &stokes.mask;

    let states = stokes.stokes.map(|s| s.polarization_state().ok());
    let dolp = Grid::from_fn(w, h, |c, r| match (mask.get(c, r), states.get(c, r)) {
        (true, Some(st)) if st.valid => st.dolp.min(1.0),
        _ => 0.0,
    });
    let aolp = Grid::from_fn(w, h, |c, r| match (mask.get(c, r), states.get(c, r)) {
        (true, Some(st)) if st.valid => st.aolp,
        _ => 0.0,
    });

    let zenith_data = dolp
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&rho, &m)| if m { invert_zenith(rho, &params.curve) } else { Ok(0.0) })
        .collect::<Result<Vec<f64>>>()?;
    let zenith = Grid::from_vec(w, h, zenith_data)?;

    let field = resolve_azimuth(&aolp, &dolp, mask, params)?;

    let mut view = Vec::with_capacity(w * h);
    let mut camera = Vec::with_capacity(w * h);
    let mut confidence = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            if !*mask.get(col, row) {
                view.push(Vector3::z());
                camera.push(proj.view_vector(col, row, w, h));
                confidence.push(0.0);
                continue;
            }
            let theta = *zenith.get(col, row);
            let phi = *field.azimuth.get(col, row);
            let (st, ct) = theta.sin_cos();
            let nv = Vector3::new(st * phi.cos(), st * phi.sin(), ct);
            view.push(nv);
            camera.push((proj.view_frame(col, row, w, h) * nv).normalize());
            confidence.push(if *field.low_confidence.get(col, row) { 0.0 } else { 1.0 });
        }
    }

    Ok(NormalEstimate {
        normals: NormalMap {
            normals: Grid::from_vec(w, h, camera)?,
            mask: mask.clone(),
            space: NormalSpace::Camera,
        },
        view_normals: NormalMap {
            normals: Grid::from_vec(w, h, view)?,
            mask: mask.clone(),
            space: NormalSpace::ViewVector,
        },
        confidence: Grid::from_vec(w, h, confidence)?,
        zenith,
        azimuth: field.azimuth,
        dolp,
        aolp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polarization::MaterialEnv;
    use crate::simulator::{render_ground_truth, Geometry, SceneSpec};
    use crate::stokes::StokesVector;

    fn params(ratio: f64) -> EstimationParams {
        EstimationParams::new(1.8, ratio, EmissionMode::EmissionDominant).unwrap()
    }

    #[test]
    fn invert_endpoints() {
        let p = params(0.7);
        assert_eq!(invert_zenith(0.0, &p.curve).unwrap(), 0.0);
        let peak = p.curve.theta_peak.unwrap();
        assert_eq!(invert_zenith(p.curve.rho_peak, &p.curve).unwrap(), peak);
        assert_eq!(invert_zenith(0.9, &p.curve).unwrap(), peak);
        let flat = build_dolp_curve(1.8, 1.0, 512).unwrap();
        assert!(matches!(invert_zenith(0.1, &flat), Err(Error::DegenerateCurve)));
    }

    #[test]
    fn invert_forward_round_trip() {
        for ratio in [0.6, 0.7, 1.4] {
            let p = params(ratio);
            let peak = p.curve.theta_peak.unwrap();
            for i in 0..1000 {
                let theta = (i as f64 + 0.5) / 1000.0 * (peak - 0.01);
                let back = invert_zenith(p.curve.dolp(theta), &p.curve).unwrap();
                assert!((back - theta).abs() < 1e-4, "ratio {ratio} theta {theta} back {back}");
            }
        }
    }

    #[test]
    fn candidates() {
        let (a, b) = azimuth_candidates(0.3, EmissionMode::EmissionDominant);
        assert!((a - 0.3).abs() < 1e-15 && (b - (0.3 + PI)).abs() < 1e-15);
        let (a, b) = azimuth_candidates(0.3, EmissionMode::ReflectionDominant);
        assert!((a - (0.3 + FRAC_PI_2)).abs() < 1e-15);
        assert!((b - (0.3 + 3.0 * FRAC_PI_2)).abs() < 1e-15);
        for k in 0..50 {
            let aolp = k as f64 * PI / 50.0;
            for mode in [EmissionMode::EmissionDominant, EmissionMode::ReflectionDominant] {
                let (a, b) = azimuth_candidates(aolp, mode);
                assert!((angular_distance(a, b) - PI).abs() < 1e-12);
                assert!((0.0..TAU).contains(&a) && (0.0..TAU).contains(&b));
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(params(0.7).with_dolp_floor(0.5).is_err());
        assert!(params(0.7).with_dolp_floor(-0.1).is_err());
        assert!(matches!(
            EstimationParams::new(1.8, 1.0, EmissionMode::EmissionDominant),
            Err(Error::DegenerateCurve)
        ));
        assert_eq!("reflection".parse::<EmissionMode>().unwrap(), EmissionMode::ReflectionDominant);
        assert!("sideways".parse::<EmissionMode>().is_err());
    }

    #[test]
    fn single_pixel_takes_outward_candidate() {
        let mask = Grid::from_fn(5, 5, |c, r| c == 2 && r == 2);
        let aolp = Grid::filled(5, 5, 0.4);
        let dolp = Grid::filled(5, 5, 0.05);
        let field = resolve_azimuth(&aolp, &dolp, &mask, &params(0.7)).unwrap();
        // All neighbors are outside, the outward vector sums to zero and the
        // reference direction is 0 rad.
        let (a, b) = azimuth_candidates(0.4, EmissionMode::EmissionDominant);
        let want = if angular_distance(a, 0.0) <= angular_distance(b, 0.0) { a } else { b };
        assert_eq!(*field.azimuth.get(2, 2), want);
        assert!(!*field.low_confidence.get(2, 2));
    }

    #[test]
    fn empty_mask_is_an_error() {
        let g = Grid::filled(3, 3, 0.0);
        assert!(matches!(
            resolve_azimuth(&g, &g, &Grid::filled(3, 3, false), &params(0.7)),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn flat_plate_is_view_vector_and_low_confidence() {
        let map = StokesMap::new(
            Grid::filled(6, 6, StokesVector::unpolarized(500.0)),
            Grid::filled(6, 6, true),
        )
        .unwrap();
        let est = estimate_normals(&map, &params(0.7), &ProjectionModel::orthographic(0.1)).unwrap();
        for (n, c) in est.normals.normals.iter().zip(est.confidence.iter()) {
            assert!((n - Vector3::z()).norm() < 1e-12);
            assert_eq!(*c, 0.0);
        }
    }

    #[test]
    fn sphere_from_exact_polarization() {
        let material = MaterialEnv::from_celsius(1.8, 50.0, 23.0).unwrap();
        let scene = SceneSpec::sphere(material, 96);
        let gt = render_ground_truth(&scene).unwrap();
        let curve = params(material.ratio());
        // Feed exact DoLP/AoLP computed from the ground truth.
        let aolp = Grid::from_fn(96, 96, |c, r| gt.azimuth.get(c, r).rem_euclid(PI));
        let dolp = Grid::from_fn(96, 96, |c, r| curve.curve.dolp(*gt.zenith.get(c, r)));
        let field = resolve_azimuth(&aolp, &dolp, &gt.mask, &curve).unwrap();
        let mut total = 0;
        let mut correct = 0;
        for i in 0..96 * 96 {
            if gt.mask.data()[i] && dolp.data()[i] >= curve.dolp_floor {
                total += 1;
                if angular_distance(field.azimuth.data()[i], gt.azimuth.data()[i]) < FRAC_PI_2 {
                    correct += 1;
                }
            }
        }
        assert!(correct as f64 >= 0.99 * total as f64, "{correct}/{total}");
    }

    #[test]
    fn convex_bump_has_no_flipped_region() {
        let (rows, cols) = (41, 41);
        let heights: Vec<f64> = (0..rows * cols)
            .map(|k| {
                let x = (k % cols) as f64 / 20.0 - 1.0;
                let y = (k / cols) as f64 / 20.0 - 1.0;
                0.8 * (-(x * x + y * y) * 2.5).exp()
            })
            .collect();
        let material = MaterialEnv::from_celsius(1.8, 50.0, 23.0).unwrap();
        let scene = SceneSpec {
            geometry: Geometry::HeightField {
                rows,
                cols,
                spacing: 0.05,
                heights,
            },
            pose: crate::simulator::Pose {
                translation: [0.0, 0.0, -5.0],
                ..Default::default()
            },
            ..SceneSpec::sphere(material, 64)
        };
        let gt = render_ground_truth(&scene).unwrap();
        let p = params(material.ratio());
        let aolp = Grid::from_fn(64, 64, |c, r| gt.azimuth.get(c, r).rem_euclid(PI));
        let dolp = Grid::from_fn(64, 64, |c, r| p.curve.dolp(*gt.zenith.get(c, r)));
        let field = resolve_azimuth(&aolp, &dolp, &gt.mask, &p).unwrap();
        let flipped = (0..64 * 64)
            .filter(|&i| {
                gt.mask.data()[i]
                    && dolp.data()[i] >= p.dolp_floor
                    && angular_distance(field.azimuth.data()[i], gt.azimuth.data()[i]) > FRAC_PI_2
            })
            .count();
        assert_eq!(flipped, 0);
    }
}
