//! Angular-error metrics between normal maps.

use serde::{Deserialize, Serialize};

use crate::estimation::NormalMap;
use crate::grid::{Grid, Mask};
use crate::{Error, Result};

/// Per-pixel angle between estimated and true normals, in degrees. Pixels
/// outside either mask are NaN.
pub fn angular_error_map(estimate: &NormalMap, truth: &NormalMap) -> Result<Grid<f64>> {
    if estimate.space != truth.space {
        return Err(Error::SpaceMismatch {
            a: estimate.space,
            b: truth.space,
        });
    }
    estimate.normals.same_shape(&truth.normals)?;
    let (w, h) = estimate.shape();
    Ok(Grid::from_fn(w, h, |c, r| {
        if !(*estimate.mask.get(c, r) && *truth.mask.get(c, r)) {
            return f64::NAN;
        }
        let a = estimate.normals.get(c, r).normalize();
        let b = truth.normals.get(c, r).normalize();
        a.dot(&b).clamp(-1.0, 1.0).acos().to_degrees()
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Degrees.
    pub mean: f64,
    /// Lower median, degrees.
    pub median: f64,
    pub rmse: f64,
    /// Percentage of pixels with error below 11.25°.
    pub accuracy_11_25: f64,
    pub accuracy_22_5: f64,
    pub accuracy_30: f64,
    pub n_pixels: usize,
}

/// Statistics over the finite error values inside `mask`.
pub fn summarize(errors: &Grid<f64>, mask: &Mask) -> Result<ErrorReport> {
    errors.same_shape(mask)?;
    let mut v: Vec<f64> = errors
        .iter()
        .zip(mask.iter())
        .filter(|(e, &m)| m && e.is_finite())
        .map(|(e, _)| *e)
        .collect();
    if v.is_empty() {
        return Err(Error::EmptyMask);
    }
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let pct = |t: f64| 100.0 * v.iter().filter(|&&e| e < t).count() as f64 / n;
    Ok(ErrorReport {
        mean: v.iter().sum::<f64>() / n,
        median: v[(v.len() - 1) / 2],
        rmse: (v.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        accuracy_11_25: pct(11.25),
        accuracy_22_5: pct(22.5),
        accuracy_30: pct(30.0),
        n_pixels: v.len(),
    })
}

impl ErrorReport {
    /// Plain-text table for terminals.
    pub fn table(&self) -> String {
        format!(
            "pixels   {}\nmean     {:.3} deg\nmedian   {:.3} deg\nrmse     {:.3} deg\n< 11.25  {:.2} %\n< 22.5   {:.2} %\n< 30     {:.2} %\n",
            self.n_pixels,
            self.mean,
            self.median,
            self.rmse,
            self.accuracy_11_25,
            self.accuracy_22_5,
            self.accuracy_30
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::NormalSpace;
    use nalgebra::Vector3;

    fn map(normals: Vec<Vector3<f64>>, space: NormalSpace) -> NormalMap {
        let n = normals.len();
        NormalMap {
            normals: Grid::from_vec(n, 1, normals).unwrap(),
            mask: Grid::filled(n, 1, true),
            space,
        }
    }

    #[test]
    fn identical_maps_have_zero_error() {
        let a = map(vec![Vector3::z(), Vector3::new(0.6, 0.0, 0.8)], NormalSpace::Camera);
        let e = angular_error_map(&a, &a).unwrap();
        assert!(e.iter().all(|&x| x < 1e-6));
    }

    #[test]
    fn known_angles() {
        let a = map(vec![Vector3::z(), Vector3::z(), Vector3::z()], NormalSpace::Camera);
        let b = map(vec![Vector3::x(), -Vector3::z(), Vector3::new(1.0, 0.0, 1.0)], NormalSpace::Camera);
        let e = angular_error_map(&a, &b).unwrap();
        assert!((e.data()[0] - 90.0).abs() < 1e-12);
        assert!((e.data()[1] - 180.0).abs() < 1e-12);
        assert!((e.data()[2] - 45.0).abs() < 1e-12);
        let r = summarize(&e, &a.mask).unwrap();
        assert_eq!(r.median, 90.0);
        assert!((r.mean - 105.0).abs() < 1e-9);
        assert_eq!(r.accuracy_30, 0.0);
        assert_eq!(r.n_pixels, 3);
    }

    #[test]
    fn thresholds_are_strict() {
        let g = Grid::from_vec(4, 1, vec![5.0, 11.25, 20.0, 40.0]).unwrap();
        let r = summarize(&g, &Grid::filled(4, 1, true)).unwrap();
        assert_eq!(r.accuracy_11_25, 25.0);
        assert_eq!(r.accuracy_22_5, 75.0);
        assert_eq!(r.accuracy_30, 75.0);
        assert_eq!(r.median, 11.25);
    }

    #[test]
    fn constant_and_bimodal_maps() {
        let all = Grid::filled(5, 4, true);
        let r = summarize(&Grid::filled(5, 4, 5.0), &all).unwrap();
        assert_eq!((r.mean, r.median, r.rmse), (5.0, 5.0, 5.0));
        assert_eq!((r.accuracy_11_25, r.accuracy_22_5, r.accuracy_30), (100.0, 100.0, 100.0));
        let half = Grid::from_fn(4, 4, |c, _| if c < 2 { 0.0 } else { 20.0 });
        let r = summarize(&half, &Grid::filled(4, 4, true)).unwrap();
        assert_eq!(r.mean, 10.0);
        assert_eq!(r.median, 0.0);
        assert_eq!(r.accuracy_11_25, 50.0);
    }

    #[test]
    fn errors() {
        let a = map(vec![Vector3::z()], NormalSpace::Camera);
        let b = map(vec![Vector3::z()], NormalSpace::ViewVector);
        assert!(matches!(angular_error_map(&a, &b), Err(Error::SpaceMismatch { .. })));
        let c = map(vec![Vector3::z(), Vector3::z()], NormalSpace::Camera);
        assert!(matches!(angular_error_map(&a, &c), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(
            summarize(&Grid::filled(2, 2, 1.0), &Grid::filled(2, 2, false)),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn masked_pixels_are_skipped() {
        let mut a = map(vec![Vector3::z(), Vector3::x()], NormalSpace::Camera);
        let b = map(vec![Vector3::z(), Vector3::z()], NormalSpace::Camera);
        a.mask.set(1, 0, false);
        let r = summarize(&angular_error_map(&a, &b).unwrap(), &b.mask).unwrap();
        assert_eq!(r.n_pixels, 1);
        assert!(r.mean < 1e-9);
    }
}
