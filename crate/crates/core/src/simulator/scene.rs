//! Scene description, camera projection and the JSON scene format.
//!
//! Camera space is right-handed with x to the right, y up and z toward the
//! viewer; the camera looks along -z. Image row 0 is the top row.

use nalgebra::{Isometry3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use super::mesh::{load_mesh, Mesh, Ray};
use crate::polarization::{MaterialEnv, CELSIUS_OFFSET};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProjectionKind {
    /// Parallel rays; `pixel_size` is the world extent of one pixel.
    Orthographic { pixel_size: f64 },
    /// Perspective camera at the origin; `focal_length` in pixels.
    Pinhole { focal_length: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    #[serde(flatten)]
    pub kind: ProjectionKind,
    /// Defaults to the image center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principal_point: Option<[f64; 2]>,
}

impl ProjectionModel {
    pub fn orthographic(pixel_size: f64) -> Self {
        Self {
            kind: ProjectionKind::Orthographic { pixel_size },
            principal_point: None,
        }
    }

    pub fn pinhole(focal_length: f64) -> Self {
        Self {
            kind: ProjectionKind::Pinhole { focal_length },
            principal_point: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ProjectionKind::Orthographic { pixel_size } if !(pixel_size > 0.0) => {
                Err(Error::domain("pixel_size", pixel_size, "> 0"))
            }
            ProjectionKind::Pinhole { focal_length } if !(focal_length > 0.0) => {
                Err(Error::domain("focal_length", focal_length, "> 0"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_orthographic(&self) -> bool {
        matches!(self.kind, ProjectionKind::Orthographic { .. })
    }

    fn principal(&self, width: usize, height: usize) -> (f64, f64) {
        match self.principal_point {
            Some([cx, cy]) => (cx, cy),
            None => (width as f64 / 2.0, height as f64 / 2.0),
        }
    }

    /// Primary ray through the center of pixel `(col, row)`.
    pub fn ray(&self, col: usize, row: usize, width: usize, height: usize) -> Ray {
        let (cx, cy) = self.principal(width, height);
        let x = col as f64 + 0.5 - cx;
        let y = cy - (row as f64 + 0.5);
        match self.kind {
            ProjectionKind::Orthographic { pixel_size } => Ray {
                origin: Point3::new(x * pixel_size, y * pixel_size, 0.0),
                dir: -Vector3::z(),
            },
            ProjectionKind::Pinhole { focal_length } => Ray {
                origin: Point3::origin(),
                dir: Vector3::new(x / focal_length, y / focal_length, -1.0).normalize(),
            },
        }
    }

    /// Unit vector from the surface toward the camera.
    pub fn view_vector(&self, col: usize, row: usize, width: usize, height: usize) -> Vector3<f64> {
        -self.ray(col, row, width, height).dir
    }

    /// Rotation taking view-vector space (z along the view vector) to camera
    /// space. This is the minimal rotation carrying +z onto the view vector,
    /// so orthographic projection gives the identity.
    pub fn view_frame(&self, col: usize, row: usize, width: usize, height: usize) -> Rotation3<f64> {
        let v = self.view_vector(col, row, width, height);
        Rotation3::rotation_between(&Vector3::z(), &v).unwrap_or_else(Rotation3::identity)
    }
}

/// Rigid transform from object space to camera space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Roll, pitch, yaw about x, y, z in degrees, applied in that order.
    #[serde(default)]
    pub rotation_deg: [f64; 3],
    #[serde(default)]
    pub translation: [f64; 3],
}

impl Pose {
    pub fn isometry(&self) -> Isometry3<f64> {
        let [r, p, y] = self.rotation_deg.map(f64::to_radians);
        let [tx, ty, tz] = self.translation;
        Isometry3::from_parts(
            Translation3::new(tx, ty, tz),
            UnitQuaternion::from_euler_angles(r, p, y),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Geometry {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Heights on a regular grid facing +z. Row 0 is the +y edge; `heights`
    /// is row-major with `rows * cols` entries.
    HeightField {
        rows: usize,
        cols: usize,
        spacing: f64,
        heights: Vec<f64>,
    },
    /// Wavefront OBJ file, relative paths resolved against the scene file.
    Mesh { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub geometry: Geometry,
    pub material: MaterialEnv,
    pub pose: Pose,
    /// `(width, height)` in pixels.
    pub resolution: (usize, usize),
    pub projection: ProjectionModel,
}

/// On-disk scene. Temperatures are Celsius here and kelvin everywhere else.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub geometry: Geometry,
    pub eta: f64,
    pub tau_obj_c: f64,
    pub tau_env_c: f64,
    pub projection: ProjectionModel,
    pub resolution: [usize; 2],
    #[serde(default)]
    pub pose: Pose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emission_scale: Option<f64>,
}

const MAX_RESOLUTION: usize = 16384;

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        self.projection.validate()?;
        let (w, h) = self.resolution;
        if w == 0 || h == 0 || w > MAX_RESOLUTION || h > MAX_RESOLUTION {
            return Err(Error::invalid("resolution", format!("{w}x{h}")));
        }
        match &self.geometry {
            Geometry::Sphere { center, radius } => {
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::domain("radius", *radius, "> 0"));
                }
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid("sphere", "non-finite center"));
                }
            }
            Geometry::HeightField {
                rows,
                cols,
                spacing,
                heights,
            } => {
                if *rows < 2 || *cols < 2 || rows.checked_mul(*cols) != Some(heights.len()) {
                    return Err(Error::invalid(
                        "height field",
                        format!("{rows}x{cols} grid with {} heights", heights.len()),
                    ));
                }
                if !(*spacing > 0.0) || heights.iter().any(|h| !h.is_finite()) {
                    return Err(Error::invalid("height field", "spacing must be > 0 and heights finite"));
                }
            }
            Geometry::Mesh { .. } => {}
        }
        Ok(())
    }

    pub fn from_file(file: SceneFile, base_dir: &Path) -> Result<Self> {
        let mut material = MaterialEnv::new(
            file.eta,
            file.tau_obj_c + CELSIUS_OFFSET,
            file.tau_env_c + CELSIUS_OFFSET,
        )?;
        if let Some(scale) = file.emission_scale {
            material.emission_scale = scale;
            material.validate()?;
        }
        let geometry = match file.geometry {
            Geometry::Mesh { path } if path.is_relative() => Geometry::Mesh {
                path: base_dir.join(path),
            },
            g => g,
        };
        let spec = SceneSpec {
            geometry,
            material,
            pose: file.pose,
            resolution: (file.resolution[0], file.resolution[1]),
            projection: file.projection,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_file(&self) -> SceneFile {
        SceneFile {
            geometry: self.geometry.clone(),
            eta: self.material.eta,
            tau_obj_c: self.material.tau_obj - CELSIUS_OFFSET,
            tau_env_c: self.material.tau_env - CELSIUS_OFFSET,
            projection: self.projection,
            resolution: [self.resolution.0, self.resolution.1],
            pose: self.pose,
            emission_scale: (self.material.emission_scale != 1.0).then_some(self.material.emission_scale),
        }
    }

    /// Parse scene JSON; relative mesh paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let file: SceneFile = serde_json::from_str(text)?;
        Self::from_file(file, base_dir)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&text, base)
    }

    /// Centered sphere filling most of the frame under orthographic
    /// projection.
    pub fn sphere(material: MaterialEnv, size: usize) -> Self {
        SceneSpec {
            geometry: Geometry::Sphere {
                center: [0.0, 0.0, -5.0],
                radius: 1.0,
            },
            material,
            pose: Pose::default(),
            resolution: (size, size),
            projection: ProjectionModel::orthographic(2.2 / size as f64),
        }
    }
}

/// Geometry resolved into camera space, ready for ray casting.
pub enum PreparedGeometry {
    Sphere {
        center: Point3<f64>,
        radius: f64,
    },
    Triangles {
        mesh: Mesh,
        bvh: Option<super::mesh::Bvh>,
    },
}

/// Meshes above this many triangles are traced through a BVH.
const BVH_THRESHOLD: usize = 64;

impl PreparedGeometry {
    pub fn prepare(spec: &SceneSpec) -> Result<Self> {
        spec.validate()?;
        let pose = spec.pose.isometry();
        let mesh = match &spec.geometry {
            Geometry::Sphere { center, radius } => {
                return Ok(PreparedGeometry::Sphere {
                    center: pose * Point3::new(center[0], center[1], center[2]),
                    radius: *radius,
                });
            }
            Geometry::HeightField {
                rows,
                cols,
                spacing,
                heights,
            } => height_field_mesh(*rows, *cols, *spacing, heights)?,
            Geometry::Mesh { path } => load_mesh(path)?,
        };
        Ok(Self::from_mesh(mesh.transformed(&pose)))
    }

    pub fn from_mesh(mesh: Mesh) -> Self {
        let bvh = (mesh.triangles.len() > BVH_THRESHOLD).then(|| super::mesh::Bvh::build(&mesh));
        PreparedGeometry::Triangles { mesh, bvh }
    }

    /// Nearest hit distance and outward unit normal.
    pub fn intersect(&self, ray: &Ray) -> Option<(f64, Vector3<f64>)> {
        match self {
            PreparedGeometry::Sphere { center, radius } => {
                let oc = ray.origin - center;
                let b = oc.dot(&ray.dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = if -b - sq > 1e-9 { -b - sq } else { -b + sq };
                if t <= 1e-9 {
                    return None;
                }
                let p = ray.origin + ray.dir * t;
                Some((t, (p - center) / *radius))
            }
            PreparedGeometry::Triangles { mesh, bvh } => {
                let hit = match bvh {
                    Some(bvh) => bvh.intersect(mesh, ray),
                    None => mesh.intersect_brute(ray),
                }?;
                Some((hit.t, mesh.shading_normal(&hit)))
            }
        }
    }
}

/// Triangulate a height field with central-difference vertex normals
/// (one-sided at the borders).
pub fn height_field_mesh(rows: usize, cols: usize, spacing: f64, heights: &[f64]) -> Result<Mesh> {
    let h = |i: usize, j: usize| heights[i * cols + j];
    let x0 = (cols - 1) as f64 / 2.0;
    let y0 = (rows - 1) as f64 / 2.0;
    let mut positions = Vec::with_capacity(rows * cols);
    let mut normals = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            positions.push(Point3::new(
                (j as f64 - x0) * spacing,
                (y0 - i as f64) * spacing,
                h(i, j),
            ));
            let (jl, jr) = (j.saturating_sub(1), (j + 1).min(cols - 1));
            let dzdx = (h(i, jr) - h(i, jl)) / ((jr - jl) as f64 * spacing);
            // y grows toward row 0.
            let (iu, id) = (i.saturating_sub(1), (i + 1).min(rows - 1));
            let dzdy = (h(iu, j) - h(id, j)) / ((id - iu) as f64 * spacing);
            normals.push(Vector3::new(-dzdx, -dzdy, 1.0).normalize());
        }
    }
    let mut triangles = Vec::with_capacity(2 * (rows - 1) * (cols - 1));
    for i in 0..rows - 1 {
        for j in 0..cols - 1 {
            let a = (i * cols + j) as u32;
            let b = a + 1;
            let c = a + cols as u32;
            let d = c + 1;
            // Counter-clockwise seen from +z.
            triangles.push([a, c, b]);
            triangles.push([b, c, d]);
        }
    }
    Ok(Mesh {
        positions,
        normals,
        triangles,
    })
}
