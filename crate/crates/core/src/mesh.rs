//! Triangle surfaces: loading, generation, inside/outside classification.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Triangles whose area falls below this fraction of the squared bounding
/// box diagonal are discarded.
const DEGENERATE_AREA: f64 = 1e-14;

/// An indexed triangle mesh with per-triangle unit normals and areas.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleSurface {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    normals: Vec<Vector3<f64>>,
    areas: Vec<f64>,
}

impl TriangleSurface {
    /// Validates indices and drops degenerate triangles.
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Mesh(format!("non-finite vertex {v:?}")));
        }
        for (i, t) in triangles.iter().enumerate() {
            if t.iter().any(|&k| k >= vertices.len()) {
                return Err(Error::Mesh(format!(
                    "triangle {i} references vertex {t:?} out of {}",
                    vertices.len()
                )));
            }
        }
        let (lo, hi) = bounds(&vertices);
        let floor = DEGENERATE_AREA * (hi - lo).norm_squared().max(f64::MIN_POSITIVE);
        let mut kept = Vec::with_capacity(triangles.len());
        let mut normals = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        for t in triangles {
            let [a, b, c] = t.map(|k| vertices[k]);
            let cross = (b - a).cross(&(c - a));
            let area = 0.5 * cross.norm();
            if area > floor {
                kept.push(t);
                normals.push(cross / (2.0 * area));
                areas.push(area);
            }
        }
        if kept.is_empty() {
            return Err(Error::Mesh("surface has no non-degenerate triangles".into()));
        }
        Ok(TriangleSurface {
            vertices,
            triangles: kept,
            normals,
            areas,
        })
    }

    /// Reads STL (ASCII or binary) or OBJ, chosen by file extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("stl") => Self::load_stl(path),
            Some("obj") => Self::load_obj(path),
            _ => Err(Error::Mesh(format!(
                "{}: unsupported mesh format (expected .stl or .obj)",
                path.display()
            ))),
        }
    }

    fn load_stl(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mesh = stl_io::read_stl(&mut BufReader::new(file))
            .map_err(|e| Error::Mesh(format!("{}: {e}", path.display())))?;
        let vertices = mesh
            .vertices
            .iter()
            .map(|v| Vector3::new(v.0[0] as f64, v.0[1] as f64, v.0[2] as f64))
            .collect();
        let triangles = mesh.faces.iter().map(|f| f.vertices).collect();
        Self::new(vertices, triangles)
    }

    fn load_obj(path: &Path) -> Result<Self> {
        let opts = tobj::LoadOptions {
            triangulate: true,
            single_index: true,
            ..Default::default()
        };
        let (models, _) = tobj::load_obj(path, &opts)
            .map_err(|e| Error::Mesh(format!("{}: {e}", path.display())))?;
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for m in models {
            let base = vertices.len();
            vertices.extend(
                m.mesh
                    .positions
                    .chunks_exact(3)
                    .map(|p| Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64)),
            );
            triangles.extend(
                m.mesh
                    .indices
                    .chunks_exact(3)
                    .map(|t| [0, 1, 2].map(|k| base + t[k] as usize)),
            );
        }
        Self::new(vertices, triangles)
    }

    /// Writes a binary STL (single precision, as the format requires).
    pub fn write_stl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f32v = |v: &Vector3<f64>| stl_io::Vector::new([v.x as f32, v.y as f32, v.z as f32]);
        let tris: Vec<stl_io::Triangle> = (0..self.len())
            .map(|i| stl_io::Triangle {
                normal: f32v(&self.normals[i]),
                vertices: self.triangles[i].map(|k| f32v(&self.vertices[k])),
            })
            .collect();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        stl_io::write_stl(&mut BufWriter::new(file), tris.iter()).map_err(|e| Error::io(path, e))
    }

    /// Axis-aligned cube `[-h, h]³`, two triangles per face, outward normals.
    pub fn cube(half: f64) -> Self {
        let vertices = (0..8)
            .map(|i| {
                let s = |bit: usize| if i & bit != 0 { half } else { -half };
                Vector3::new(s(1), s(2), s(4))
            })
            .collect();
        let quads = [
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        Self::new(vertices, triangles).expect("cube is valid")
    }

    /// Subdivided icosahedron projected to a sphere.
    pub fn icosphere(center: Vector3<f64>, radius: f64, subdivisions: usize) -> Self {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<Vector3<f64>> = [
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ]
        .iter()
        .map(|p| Vector3::from(*p).normalize())
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut midpoints = HashMap::new();
            let mut mid = |a: usize, b: usize, vs: &mut Vec<Vector3<f64>>| {
                *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    vs.push(((vs[a] + vs[b]) / 2.0).normalize());
                    vs.len() - 1
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for [a, b, c] in faces {
                let ab = mid(a, b, &mut vertices);
                let bc = mid(b, c, &mut vertices);
                let ca = mid(c, a, &mut vertices);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let vertices = vertices.into_iter().map(|v| center + v * radius).collect();
        Self::new(vertices, faces).expect("icosphere is valid")
    }

    /// Closed cylinder of the given radius along the y axis, `y ∈ [-h/2, h/2]`,
    /// with `segments` facets around and `rings` bands along the axis.
    pub fn cylinder(
        center: Vector3<f64>,
        radius: f64,
        height: f64,
        segments: usize,
        rings: usize,
    ) -> Self {
        let segments = segments.max(3);
        let rings = rings.max(1);
        let mut vertices = Vec::new();
        for r in 0..=rings {
            let y = -height / 2.0 + height * r as f64 / rings as f64;
            for s in 0..segments {
                let a = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
                vertices.push(center + Vector3::new(radius * a.cos(), y, -radius * a.sin()));
            }
        }
        let at = |r: usize, s: usize| r * segments + s % segments;
        let mut triangles = Vec::new();
        for r in 0..rings {
            for s in 0..segments {
                let (a, b, c, d) = (at(r, s), at(r, s + 1), at(r + 1, s + 1), at(r + 1, s));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        let bottom = vertices.len();
        vertices.push(center - Vector3::new(0.0, height / 2.0, 0.0));
        let top = vertices.len();
        vertices.push(center + Vector3::new(0.0, height / 2.0, 0.0));
        for s in 0..segments {
            triangles.push([bottom, at(0, s + 1), at(0, s)]);
            triangles.push([top, at(rings, s), at(rings, s + 1)]);
        }
        Self::new(vertices, triangles).expect("cylinder is valid")
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn normal(&self, i: usize) -> &Vector3<f64> {
        &self.normals[i]
    }

    pub fn area(&self, i: usize) -> f64 {
        self.areas[i]
    }

    pub fn triangle(&self, i: usize) -> [Vector3<f64>; 3] {
        self.triangles[i].map(|k| self.vertices[k])
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Bounding box of the referenced vertices.
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let used: Vec<_> = self.triangles.iter().flatten().map(|&k| self.vertices[k]).collect();
        bounds(&used)
    }

    /// Edges not shared by exactly two triangles. Zero for closed manifolds.
    pub fn open_edge_count(&self) -> usize {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        count.values().filter(|&&c| c != 2).count()
    }

    /// Generalized winding number of the surface around `p`.
    pub fn winding_number(&self, p: &Vector3<f64>) -> f64 {
        let mut total = 0.0;
        for t in &self.triangles {
            let [a, b, c] = t.map(|k| self.vertices[k] - p);
            let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
            let num = a.dot(&b.cross(&c));
            let den = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
            total += 2.0 * num.atan2(den);
        }
        total / (4.0 * std::f64::consts::PI)
    }

    /// Inside test: winding number, with a ray-parity fallback when the
    /// winding number is ambiguous (open or self-overlapping meshes).
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let w = self.winding_number(p).abs();
        if w > 0.75 {
            true
        } else if w < 0.25 {
            false
        } else {
            self.ray_parity(p)
        }
    }

    fn ray_parity(&self, p: &Vector3<f64>) -> bool {
        // A fixed direction unlikely to graze edges of axis-aligned input.
        let dir = Vector3::new(0.5773, 0.5812, 0.5734).normalize();
        let mut hits = 0usize;
        for t in &self.triangles {
            let [a, b, c] = t.map(|k| self.vertices[k]);
            if ray_hits_triangle(p, &dir, &a, &b, &c) {
                hits += 1;
            }
        }
        hits % 2 == 1
    }

    /// SHA-256 over vertex coordinates and triangle indices.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.vertices.len() as u64).to_le_bytes());
        for v in &self.vertices {
            for c in v.iter() {
                h.update(c.to_le_bytes());
            }
        }
        h.update((self.triangles.len() as u64).to_le_bytes());
        for t in &self.triangles {
            for &k in t {
                h.update((k as u64).to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

fn bounds(points: &[Vector3<f64>]) -> (Vector3<f64>, Vector3<f64>) {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    if points.is_empty() {
        (Vector3::zeros(), Vector3::zeros())
    } else {
        (lo, hi)
    }
}

/// Möller–Trumbore, counting hits with `t > 0`.
fn ray_hits_triangle(
    o: &Vector3<f64>,
    d: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> bool {
    let e1 = b - a;
    let e2 = c - a;
    let pv = d.cross(&e2);
    let det = e1.dot(&pv);
    if det.abs() < 1e-14 * e1.norm() * e2.norm() {
        return false;
    }
    let inv = 1.0 / det;
    let tv = o - a;
    let u = tv.dot(&pv) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let qv = tv.cross(&e1);
    let v = d.dot(&qv) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    e2.dot(&qv) * inv > 0.0
}
