//! Triangle meshes: a Wavefront OBJ subset reader, ray–triangle intersection
//! and a bounding-volume hierarchy.

use nalgebra::{Point3, Vector3};
use std::collections::HashMap;
use std::path::Path;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub positions: Vec<Point3<f64>>,
    /// One unit normal per position.
    pub normals: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Point3<f64>,
    /// Unit direction.
    pub dir: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangleHit {
    pub t: f64,
    pub triangle: usize,
    /// Barycentric weights of vertices 1 and 2.
    pub u: f64,
    pub v: f64,
}

impl Mesh {
    /// Build a mesh whose normals come from area-weighted face averaging.
    pub fn from_triangles(positions: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let normals = area_weighted_normals(&positions, &triangles);
        let mesh = Self {
            positions,
            normals,
            triangles,
        };
        if mesh.triangles.is_empty() {
            return Err(Error::Obj {
                line: 0,
                msg: "mesh has no triangles".into(),
            });
        }
        Ok(mesh)
    }

    pub fn vertex(&self, tri: usize, corner: usize) -> Point3<f64> {
        self.positions[self.triangles[tri][corner] as usize]
    }

    /// Interpolated unit normal at a hit.
    pub fn shading_normal(&self, hit: &TriangleHit) -> Vector3<f64> {
        let [a, b, c] = self.triangles[hit.triangle];
        let n = self.normals[a as usize] * (1.0 - hit.u - hit.v)
            + self.normals[b as usize] * hit.u
            + self.normals[c as usize] * hit.v;
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            self.face_normal(hit.triangle)
        }
    }

    pub fn face_normal(&self, tri: usize) -> Vector3<f64> {
        let (a, b, c) = (self.vertex(tri, 0), self.vertex(tri, 1), self.vertex(tri, 2));
        (b - a).cross(&(c - a)).normalize()
    }

    /// Rigidly transform positions and normals.
    pub fn transformed(&self, pose: &nalgebra::Isometry3<f64>) -> Mesh {
        Mesh {
            positions: self.positions.iter().map(|p| pose * p).collect(),
            normals: self.normals.iter().map(|n| pose.rotation * n).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn intersect_brute(&self, ray: &Ray) -> Option<TriangleHit> {
        let mut best: Option<TriangleHit> = None;
        for tri in 0..self.triangles.len() {
            if let Some(hit) = self.intersect_triangle(tri, ray) {
                if best.is_none_or(|b| hit.t < b.t) {
                    best = Some(hit);
                }
            }
        }
        best
    }

    /// Möller–Trumbore, two-sided.
    pub fn intersect_triangle(&self, tri: usize, ray: &Ray) -> Option<TriangleHit> {
        let (a, b, c) = (self.vertex(tri, 0), self.vertex(tri, 1), self.vertex(tri, 2));
        let e1 = b - a;
        let e2 = c - a;
        let p = ray.dir.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-14 {
            return None;
        }
        let inv = 1.0 / det;
        let s = ray.origin - a;
        let u = s.dot(&p) * inv;
        if !(-1e-12..=1.0 + 1e-12).contains(&u) {
            return None;
        }
        let q = s.cross(&e1);
        let v = ray.dir.dot(&q) * inv;
        if v < -1e-12 || u + v > 1.0 + 1e-12 {
            return None;
        }
        let t = e2.dot(&q) * inv;
        (t > 1e-9).then_some(TriangleHit {
            t,
            triangle: tri,
            u,
            v,
        })
    }
}

fn area_weighted_normals(positions: &[Point3<f64>], triangles: &[[u32; 3]]) -> Vec<Vector3<f64>> {
    let mut acc = vec![Vector3::zeros(); positions.len()];
    for t in triangles {
        let (a, b, c) = (
            positions[t[0] as usize],
            positions[t[1] as usize],
            positions[t[2] as usize],
        );
        // Cross product length is twice the area.
        let n = (b - a).cross(&(c - a));
        for &i in t {
            acc[i as usize] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 {
                n / len
            } else {
                Vector3::z()
            }
        })
        .collect()
}

fn is_degenerate(positions: &[Point3<f64>], t: [u32; 3]) -> bool {
    let (a, b, c) = (
        positions[t[0] as usize],
        positions[t[1] as usize],
        positions[t[2] as usize],
    );
    (b - a).cross(&(c - a)).norm() <= 1e-300
}

/// Read an OBJ file. See [`parse_obj`].
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    parse_obj(&text)
}

/// Parse the `v`, `vn` and `f` statements of a Wavefront OBJ document.
///
/// Polygons are fan-triangulated. Vertex normals are taken from `vn` when
/// every face corner references one; otherwise they are recomputed by
/// area-weighted averaging of face normals. Zero-area triangles are dropped.
/// Other statements (`vt`, `o`, `g`, `s`, materials) are ignored.
pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut positions: Vec<Point3<f64>> = Vec::new();
    let mut normals: Vec<Vector3<f64>> = Vec::new();
    // Corners as (position index, optional normal index), per triangle.
    let mut faces: Vec<([(usize, Option<usize>); 3], usize)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let err = |msg: String| Error::Obj { line, msg };
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        let Some(keyword) = tokens.next() else {
            continue;
        };
        match keyword {
            "v" => {
                let xyz = parse_floats::<3>(&mut tokens).map_err(err)?;
                positions.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
            "vn" => {
                let xyz = parse_floats::<3>(&mut tokens).map_err(err)?;
                let n = Vector3::new(xyz[0], xyz[1], xyz[2]);
                let len = n.norm();
                if !(len > 0.0) {
                    return Err(err("zero-length normal".into()));
                }
                normals.push(n / len);
            }
            "f" => {
                let corners = tokens
                    .map(|tok| parse_corner(tok, positions.len(), normals.len()))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(err)?;
                if corners.len() < 3 {
                    return Err(err(format!("face with {} vertices", corners.len())));
                }
                for i in 1..corners.len() - 1 {
                    faces.push(([corners[0], corners[i], corners[i + 1]], line));
                }
            }
            _ => {}
        }
    }

    let all_have_normals = !faces.is_empty()
        && faces
            .iter()
            .all(|(f, _)| f.iter().all(|(_, n)| n.is_some()));

    let mesh = if all_have_normals {
        let mut remap: HashMap<(usize, usize), u32> = HashMap::new();
        let mut out_pos = Vec::new();
        let mut out_nrm = Vec::new();
        let mut tris = Vec::new();
        for (face, _) in &faces {
            let mut t = [0u32; 3];
            for (slot, &(p, n)) in t.iter_mut().zip(face.iter()) {
                let n = n.expect("checked");
                *slot = *remap.entry((p, n)).or_insert_with(|| {
                    out_pos.push(positions[p]);
                    out_nrm.push(normals[n]);
                    (out_pos.len() - 1) as u32
                });
            }
            if !is_degenerate(&out_pos, t) {
                tris.push(t);
            }
        }
        Mesh {
            positions: out_pos,
            normals: out_nrm,
            triangles: tris,
        }
    } else {
        let tris: Vec<[u32; 3]> = faces
            .iter()
            .map(|(f, _)| [f[0].0 as u32, f[1].0 as u32, f[2].0 as u32])
            .filter(|&t| !is_degenerate(&positions, t))
            .collect();
        let normals = area_weighted_normals(&positions, &tris);
        Mesh {
            positions,
            normals,
            triangles: tris,
        }
    };

    if mesh.triangles.is_empty() {
        return Err(Error::Obj {
            line: text.lines().count(),
            msg: "mesh has no non-degenerate triangles".into(),
        });
    }
    Ok(mesh)
}

fn parse_floats<'a, const N: usize>(
    tokens: &mut impl Iterator<Item = &'a str>,
) -> std::result::Result<[f64; N], String> {
    let mut out = [0.0; N];
    for slot in out.iter_mut() {
        let tok = tokens
            .next()
            .ok_or_else(|| format!("expected {N} coordinates"))?;
        let v: f64 = tok
            .parse()
            .map_err(|_| format!("invalid number '{tok}'"))?;
        if !v.is_finite() {
            return Err(format!("non-finite number '{tok}'"));
        }
        *slot = v;
    }
    Ok(out)
}

fn resolve_index(tok: &str, count: usize) -> std::result::Result<usize, String> {
    let i: i64 = tok.parse().map_err(|_| format!("invalid index '{tok}'"))?;
    let resolved = if i > 0 {
        (i - 1) as usize
    } else if i < 0 {
        let back = i.unsigned_abs() as usize;
        if back > count {
            return Err(format!("index {i} out of range"));
        }
        count - back
    } else {
        return Err("index 0 is invalid".into());
    };
    if resolved >= count {
        return Err(format!("index {i} out of range ({count} defined)"));
    }
    Ok(resolved)
}

fn parse_corner(
    tok: &str,
    n_pos: usize,
    n_nrm: usize,
) -> std::result::Result<(usize, Option<usize>), String> {
    let mut parts = tok.split('/');
    let p = resolve_index(parts.next().unwrap_or(""), n_pos)?;
    let _texcoord = parts.next();
    let n = match parts.next() {
        Some(s) if !s.is_empty() => Some(resolve_index(s, n_nrm)?),
        _ => None,
    };
    if parts.next().is_some() {
        return Err(format!("malformed face vertex '{tok}'"));
    }
    Ok((p, n))
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    min: Point3<f64>,
    max: Point3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn hit(&self, ray: &Ray, inv: &Vector3<f64>, t_max: f64) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut lo = (self.min[a] - ray.origin[a]) * inv[a];
            let mut hi = (self.max[a] - ray.origin[a]) * inv[a];
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            // NaN from 0 * inf compares false and leaves the slab open.
            if lo > t0 {
                t0 = lo;
            }
            if hi < t1 {
                t1 = hi;
            }
            if t0 > t1 * (1.0 + 1e-12) + 1e-12 {
                return false;
            }
        }
        true
    }
}

enum Node {
    Leaf { bounds: Aabb, first: usize, count: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

/// Median-split bounding-volume hierarchy over a mesh's triangles.
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(mesh: &Mesh) -> Self {
        let centroids: Vec<Point3<f64>> = (0..mesh.triangles.len())
            .map(|t| {
                let c = mesh.vertex(t, 0).coords + mesh.vertex(t, 1).coords + mesh.vertex(t, 2).coords;
                Point3::from(c / 3.0)
            })
            .collect();
        let mut bvh = Bvh {
            nodes: Vec::new(),
            order: (0..mesh.triangles.len()).collect(),
        };
        let n = bvh.order.len();
        bvh.build_node(mesh, &centroids, 0, n);
        bvh
    }

    fn build_node(&mut self, mesh: &Mesh, centroids: &[Point3<f64>], first: usize, count: usize) -> usize {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &t in &self.order[first..first + count] {
            for k in 0..3 {
                bounds.grow(&mesh.vertex(t, k));
            }
            cbounds.grow(&centroids[t]);
        }
        let index = self.nodes.len();
        if count <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                bounds,
                first,
                count,
            });
            return index;
        }
        let extent = cbounds.max - cbounds.min;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        self.order[first..first + count]
            .sort_by(|&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]));
        self.nodes.push(Node::Leaf {
            bounds,
            first,
            count,
        });
        let half = count / 2;
        let left = self.build_node(mesh, centroids, first, half);
        let right = self.build_node(mesh, centroids, first + half, count - half);
        self.nodes[index] = Node::Inner {
            bounds,
            left,
            right,
        };
        index
    }

    pub fn intersect(&self, mesh: &Mesh, ray: &Ray) -> Option<TriangleHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vector3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
        let mut best: Option<TriangleHit> = None;
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let t_max = best.map_or(f64::INFINITY, |b| b.t);
            match &self.nodes[i] {
                Node::Leaf {
                    bounds,
                    first,
                    count,
                } => {
                    if !bounds.hit(ray, &inv, t_max) {
                        continue;
                    }
                    for &t in &self.order[*first..first + count] {
                        if let Some(hit) = mesh.intersect_triangle(t, ray) {
                            if best.is_none_or(|b| hit.t < b.t) {
                                best = Some(hit);
                            }
                        }
                    }
                }
                Node::Inner {
                    bounds,
                    left,
                    right,
                } => {
                    if bounds.hit(ray, &inv, t_max) {
                        stack.push(*right);
                        stack.push(*left);
                    }
                }
            }
        }
        best
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::fmt::Write;

    /// Icosphere OBJ without normals, unit radius.
    pub(crate) fn icosphere_obj(subdivisions: usize) -> String {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vector3<f64>> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut cache = HashMap::new();
            let mut mid = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
                *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                    verts.len() - 1
                })
            };
            let mut next = Vec::new();
            for [a, b, c] in faces {
                let ab = mid(a, b, &mut verts);
                let bc = mid(b, c, &mut verts);
                let ca = mid(c, a, &mut verts);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let mut s = String::from("# icosphere\n");
        for v in &verts {
            writeln!(s, "v {} {} {}", v.x, v.y, v.z).unwrap();
        }
        for f in &faces {
            writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
        }
        s
    }

    #[test]
    fn single_triangle() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(m.triangles.len(), 1);
        assert_eq!(m.positions.len(), 3);
        assert!((m.normals[0] - Vector3::z()).norm() < 1e-15);
    }

    #[test]
    fn quad_fan() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn explicit_normals_and_negative_indices() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 2\nvt 0 0\nf -3/1/1 -2/1/1 -1/1/1\n";
        let m = parse_obj(src).unwrap();
        assert_eq!(m.normals.len(), 3);
        assert!(m.normals.iter().all(|n| (n - Vector3::z()).norm() < 1e-15));
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 1 0 0\nf 1//1 2//1 3//1\n").unwrap();
        assert!((m.normals[0] - Vector3::x()).norm() < 1e-15);
    }

    #[test]
    fn parse_errors_carry_line() {
        match parse_obj("v 0 0 0\nv 1 0\n") {
            Err(Error::Obj { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\n\nf 1 2 7\n") {
            Err(Error::Obj { line, msg }) => {
                assert_eq!(line, 5);
                assert!(msg.contains("out of range"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_obj("# nothing\n").is_err());
        assert!(parse_obj("v 0 0 0\nv 0 0 0\nv 0 0 0\nf 1 2 3\n").is_err());
        assert!(parse_obj("v 0 0 0\nf 0 1 1\n").is_err());
        assert!(parse_obj("v nan 0 0\n").is_err());
    }

    #[test]
    fn icosphere_normals_match_sphere() {
        let worst = |level| {
            let m = parse_obj(&icosphere_obj(level)).unwrap();
            m.positions
                .iter()
                .zip(&m.normals)
                .map(|(p, n)| (n - p.coords.normalize()).norm())
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (worst(2), worst(4));
        assert!(fine < 1e-2, "{fine}");
        assert!(fine < coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn bvh_matches_brute_force() {
        let m = parse_obj(&icosphere_obj(2)).unwrap();
        let bvh = Bvh::build(&m);
        for i in 0..400 {
            let x = (i % 20) as f64 / 10.0 - 1.0 + 0.013;
            let y = (i / 20) as f64 / 10.0 - 1.0 + 0.007;
            let ray = Ray {
                origin: Point3::new(x, y, 5.0),
                dir: Vector3::new(0.05, -0.02, -1.0).normalize(),
            };
            let a = m.intersect_brute(&ray);
            let b = bvh.intersect(&m, &ray);
            assert_eq!(a.map(|h| h.triangle), b.map(|h| h.triangle));
        }
    }
}
