//! JSON manifests tying image files together. Paths inside a manifest are
//! relative to the directory holding it.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use super::pfm::{read_image, read_pfm, write_image, write_pfm, Pfm};
use crate::calibration::{CalibrationResult, CalibrationShot, CalibrationSource};
use crate::estimation::{NormalMap, NormalSpace};
use crate::grid::{Grid, Image, Mask};
use crate::imaging::CameraModel;
use crate::simulator::ProjectionModel;
use crate::stokes::StokesMap;
use crate::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SHOTS_FILE: &str = "shots.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawEntry {
    pub psi: f64,
    pub timestamp_index: u64,
    pub file: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesFiles {
    pub s0: PathBuf,
    pub s1: PathBuf,
    pub s2: PathBuf,
    pub mask: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalFiles {
    pub normals: PathBuf,
    pub confidence: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visualization: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFiles {
    pub normals: PathBuf,
    pub mask: PathBuf,
    /// Exact Stokes field the capture was rendered from.
    pub stokes: StokesFiles,
}

/// Estimation settings recorded alongside the normals they produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationRecord {
    pub eta: f64,
    pub ratio: f64,
    pub mode: crate::estimation::EmissionMode,
    pub dolp_floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<PathBuf>,
    pub camera: CameraModel,
    /// Polarizer angles in radians, in capture order.
    pub angles: Vec<f64>,
    /// Kelvin.
    pub tau_ref: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub raw_scene: Vec<RawEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub raw_reference: Vec<RawEntry>,
    /// One difference image per angle.
    pub diffs: Vec<PathBuf>,
    /// Pixels to reconstruct.
    pub mask: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stokes: Option<StokesFiles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<NormalFiles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimation: Option<EstimationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthFiles>,
}

impl SessionManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: SessionManifest = serde_json::from_str(text)?;
        m.check_structure()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks that do not touch the filesystem.
    pub fn check_structure(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::invalid("manifest", format!("unsupported version {}", self.version)));
        }
        self.camera.validate()?;
        if !(self.tau_ref >= 0.0) {
            return Err(Error::domain("tau_ref", self.tau_ref, ">= 0"));
        }
        if self.angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("manifest", "non-finite polarizer angle"));
        }
        let n = self.angles.len();
        if self.diffs.len() != n {
            return Err(Error::invalid(
                "manifest",
                format!("{} angles but {} difference images", n, self.diffs.len()),
            ));
        }
        for (name, raw) in [("raw_scene", &self.raw_scene), ("raw_reference", &self.raw_reference)] {
            if !raw.is_empty() && raw.len() != n {
                return Err(Error::invalid(
                    "manifest",
                    format!("{n} angles but {} {name} images", raw.len()),
                ));
            }
        }
        if let Some(p) = &self.projection {
            p.validate()?;
        }
        Ok(())
    }

    /// Every file path referenced by the manifest.
    pub fn files(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = Vec::new();
        out.extend(self.scene.as_deref());
        out.extend(self.raw_scene.iter().map(|r| r.file.as_path()));
        out.extend(self.raw_reference.iter().map(|r| r.file.as_path()));
        out.extend(self.diffs.iter().map(PathBuf::as_path));
        out.push(&self.mask);
        if let Some(s) = &self.stokes {
            out.extend(s.paths());
        }
        if let Some(n) = &self.normals {
            out.push(&n.normals);
            out.push(&n.confidence);
            out.extend(n.visualization.as_deref());
        }
        if let Some(g) = &self.ground_truth {
            out.push(&g.normals);
            out.push(&g.mask);
            out.extend(g.stokes.paths());
        }
        out
    }

    /// Parse and check that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let m = Self::from_json(&std::fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        for f in m.files() {
            let full = dir.join(f);
            if !full.is_file() {
                return Err(Error::invalid(
                    "manifest",
                    format!("referenced file {} does not exist", full.display()),
                ));
            }
        }
        Ok((m, dir))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.check_structure()?;
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

impl StokesFiles {
    pub fn with_prefix(prefix: &str) -> Self {
        StokesFiles {
            s0: format!("{prefix}_s0.pfm").into(),
            s1: format!("{prefix}_s1.pfm").into(),
            s2: format!("{prefix}_s2.pfm").into(),
            mask: format!("{prefix}_mask.pfm").into(),
        }
    }

    fn paths(&self) -> [&Path; 4] {
        [&self.s0, &self.s1, &self.s2, &self.mask]
    }
}

pub fn mask_to_image(mask: &Mask) -> Image {
    mask.map(|&m| if m { 1.0 } else { 0.0 })
}

pub fn image_to_mask(image: &Image) -> Mask {
    image.map(|&v| v > 0.5)
}

pub fn write_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    write_image(&mask_to_image(mask), path)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    Ok(image_to_mask(&read_image(path)?))
}

pub fn write_stokes(map: &StokesMap, dir: &Path, files: &StokesFiles) -> Result<()> {
    write_image(&map.channel(0), dir.join(&files.s0))?;
    write_image(&map.channel(1), dir.join(&files.s1))?;
    write_image(&map.channel(2), dir.join(&files.s2))?;
    write_mask(&map.mask, dir.join(&files.mask))
}

pub fn read_stokes(dir: &Path, files: &StokesFiles) -> Result<StokesMap> {
    StokesMap::from_channels(
        &read_image(dir.join(&files.s0))?,
        &read_image(dir.join(&files.s1))?,
        &read_image(dir.join(&files.s2))?,
        read_mask(dir.join(&files.mask))?,
    )
}

/// Normals as a 3-channel map; pixels outside the mask are written as zero
/// vectors, which is how the mask is recovered on read.
pub fn write_normals(map: &NormalMap, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = map.shape();
    let g = Grid::from_fn(w, h, |c, r| {
        if *map.mask.get(c, r) {
            *map.normals.get(c, r)
        } else {
            nalgebra::Vector3::zeros()
        }
    });
    write_pfm(&Pfm::rgb(&g), path)
}

pub fn read_normals(path: impl AsRef<Path>, space: NormalSpace) -> Result<NormalMap> {
    let normals = read_pfm(path)?.to_vectors()?;
    let mask = normals.map(|n| n.norm_squared() > 0.0);
    Ok(NormalMap { normals, mask, space })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotEntry {
    pub psi: f64,
    pub tau_alpha: f64,
    pub tau_beta: f64,
    pub source: CalibrationSource,
    pub file: PathBuf,
}

/// Index of a calibration shot directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotsManifest {
    pub version: u32,
    pub shots: Vec<ShotEntry>,
}

impl ShotsManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: ShotsManifest = serde_json::from_str(text)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::invalid("shots manifest", format!("unsupported version {}", m.version)));
        }
        for s in &m.shots {
            if !(s.psi.is_finite() && s.tau_alpha >= 0.0 && s.tau_beta >= 0.0) {
                return Err(Error::invalid("shots manifest", format!("bad shot entry {}", s.file.display())));
            }
        }
        Ok(m)
    }
}

pub fn write_shots(shots: &[CalibrationShot], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(shots.len());
    for (i, s) in shots.iter().enumerate() {
        let file = PathBuf::from(format!("shot_{i:04}.pfm"));
        write_image(&s.diff, dir.join(&file))?;
        entries.push(ShotEntry {
            psi: s.psi,
            tau_alpha: s.tau_alpha,
            tau_beta: s.tau_beta,
            source: s.source,
            file,
        });
    }
    let m = ShotsManifest {
        version: MANIFEST_VERSION,
        shots: entries,
    };
    std::fs::write(dir.join(SHOTS_FILE), serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(())
}

pub fn read_shots(dir: &Path) -> Result<Vec<CalibrationShot>> {
    let m = ShotsManifest::from_json(&std::fs::read_to_string(dir.join(SHOTS_FILE))?)?;
    m.shots
        .into_iter()
        .map(|e| {
            Ok(CalibrationShot {
                psi: e.psi,
                tau_alpha: e.tau_alpha,
                tau_beta: e.tau_beta,
                source: e.source,
                diff: read_image(dir.join(&e.file))?,
            })
        })
        .collect()
}

pub fn read_calibration(path: impl AsRef<Path>) -> Result<CalibrationResult> {
    parse_calibration(&std::fs::read_to_string(path)?)
}

pub fn parse_calibration(text: &str) -> Result<CalibrationResult> {
    let c: CalibrationResult = serde_json::from_str(text)?;
    if !(c.c > 0.0 && c.c.is_finite()) {
        return Err(Error::domain("c", c.c, "> 0"));
    }
    if !(c.k > 0.0 && c.k <= 1.0) {
        return Err(Error::domain("k", c.k, "(0, 1]"));
    }
    Ok(c)
}
