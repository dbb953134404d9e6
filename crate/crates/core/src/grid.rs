//! Octree grid with an immersed triangle-mesh boundary.
//!
//! Cells crossing the surface are refined to `max_level` and carry the
//! area-weighted sum of their fragments' normal penalties. Cells off the
//! surface stay as coarse as 2:1 face grading allows and are classified
//! inside or outside by winding number. Level `L` of the hierarchy is the
//! tree truncated at depth `L`, restricted to boundary and inside cells.

use std::collections::HashMap;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clip::{fragment_area, Aabb};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mesh::TriangleSurface;
use crate::penalty::{single_constraint, BoundaryPenalty, PackedPenalty};
use crate::sh_rotation::{Degree, UnitVector3};

pub const MAX_LEVEL_LIMIT: u8 = 12;
const CACHE_MAGIC: &[u8; 4] = b"SBCF";
const CACHE_VERSION: u32 = 1;
const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub max_level: u8,
    /// Root box inflation per side, as a fraction of the largest extent.
    pub padding: f64,
    pub degree: Degree,
    /// Spectral shift of cell penalties. Only applies to degree 3.
    pub shift: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            max_level: 4,
            padding: 0.05,
            degree: Degree::Three,
            shift: true,
            execution: Execution::default(),
        }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_LEVEL_LIMIT).contains(&self.max_level) {
            return Err(Error::invalid(format!(
                "max_level must be in 1..={MAX_LEVEL_LIMIT}, got {}",
                self.max_level
            )));
        }
        if !(self.padding >= 0.0 && self.padding.is_finite()) {
            return Err(Error::invalid(format!("padding must be ≥ 0, got {}", self.padding)));
        }
        Ok(())
    }

    pub fn shift_active(&self) -> bool {
        self.shift && self.degree == Degree::Three
    }
}

/// One octree node. Children, when present, are the eight consecutive
/// nodes starting at `first_child`, in [`Aabb::octant`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub level: u8,
    pub code: [u32; 3],
    pub parent: Option<usize>,
    pub first_child: Option<usize>,
    pub is_boundary: bool,
    /// Center inside the surface. Only meaningful off the boundary.
    pub inside: bool,
    /// Clipped surface area in the node (model units).
    pub area: f64,
    /// Present iff `is_boundary`.
    pub penalty: Option<PackedPenalty>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.first_child.is_none()
    }
}

/// A cell of one level's unknown set.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub node: usize,
    pub level: u8,
    pub is_boundary: bool,
    /// Center in normalized root coordinates, `[0, 1]³`.
    pub unit_center: Vector3<f64>,
    /// Side length in normalized units.
    pub unit_size: f64,
}

/// Face adjacency `i – j` with weight `shared area / center distance`
/// (normalized units).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub cells: Vec<Cell>,
    pub edges: Vec<Edge>,
    /// For each cell, the cell of the previous level that contains it.
    coarse: Vec<Option<usize>>,
}

impl Level {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn boundary_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_boundary).count()
    }

    pub fn coarse_parent(&self, i: usize) -> Option<usize> {
        self.coarse[i]
    }

    /// Neighbor lists, each sorted by neighbor index.
    pub fn neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.cells.len()];
        for e in &self.edges {
            out[e.i].push((e.j, e.weight));
            out[e.j].push((e.i, e.weight));
        }
        for n in &mut out {
            n.sort_by_key(|&(j, _)| j);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridHierarchy {
    params: GridParams,
    root: Aabb,
    mesh_hash: [u8; 32],
    nodes: Vec<Node>,
    levels: Vec<Level>,
}

fn root_box(surface: &TriangleSurface, padding: f64) -> Aabb {
    let (lo, hi) = surface.bounds();
    let side = (hi - lo).max() * (1.0 + 2.0 * padding);
    Aabb::cube((lo + hi) / 2.0, side)
}

/// Unit-weight penalty per triangle, reused by every cell.
fn unit_penalties(surface: &TriangleSurface, degree: Degree, exec: Execution) -> Result<Vec<BoundaryPenalty>> {
    exec.map_range(surface.len(), |t| {
        let n = UnitVector3::normalize(*surface.normal(t))?;
        single_constraint(degree, &n, 1.0)
    })
    .into_iter()
    .collect()
}

/// Sum of fragment penalties of `candidates` in `b`, with the fragments'
/// triangle indices. `None` when no fragment survives clipping.
fn accumulate_in(
    b: &Aabb,
    surface: &TriangleSurface,
    candidates: &[u32],
    units: &[BoundaryPenalty],
    degree: Degree,
) -> Option<(BoundaryPenalty, Vec<u32>)> {
    let mut acc = BoundaryPenalty::zero(degree);
    let mut hits = Vec::new();
    for &t in candidates {
        let tri = surface.triangle(t as usize);
        if !b.overlaps(&Aabb::of_triangle(&tri)) {
            continue;
        }
        let a = fragment_area(&tri, b);
        if a > 0.0 {
            acc.add_scaled(&units[t as usize], a).expect("same degree");
            hits.push(t);
        }
    }
    if hits.is_empty() {
        None
    } else {
        Some((acc, hits))
    }
}

fn finish_penalty(p: BoundaryPenalty, shift: bool) -> Result<PackedPenalty> {
    Ok(if shift { p.spectral_shift()?.pack() } else { p.pack() })
}

/// Penalty of every surface fragment inside `b`, shifted when requested
/// (degree 3 only).
pub fn accumulate_cell_constraints(
    b: &Aabb,
    surface: &TriangleSurface,
    degree: Degree,
    shift: bool,
) -> Result<PackedPenalty> {
    let units = unit_penalties(surface, degree, Execution::Sequential)?;
    let all: Vec<u32> = (0..surface.len() as u32).collect();
    let (p, _) = accumulate_in(b, surface, &all, &units, degree).ok_or(Error::EmptyConstraints)?;
    finish_penalty(p, shift && degree == Degree::Three)
}

impl GridHierarchy {
    pub fn build(surface: &TriangleSurface, params: GridParams) -> Result<Self> {
        params.validate()?;
        let exec = params.execution;
        let degree = params.degree;
        let shift = params.shift_active();
        let root = root_box(surface, params.padding);
        let units = unit_penalties(surface, degree, exec)?;
        let root_side = root.extent().x;

        let node_box = |level: u8, code: [u32; 3]| code_box(&root, root_side, level, code);

        let all: Vec<u32> = (0..surface.len() as u32).collect();
        let (root_penalty, root_hits) = accumulate_in(&root, surface, &all, &units, degree)
            .ok_or_else(|| Error::Mesh("surface lies outside its own bounding box".into()))?;
        let mut nodes = vec![Node {
            level: 0,
            code: [0; 3],
            parent: None,
            first_child: None,
            is_boundary: true,
            inside: false,
            area: root_penalty.total_weight(),
            penalty: Some(finish_penalty(root_penalty, shift)?),
        }];
        // Triangles touching each boundary node of the current frontier.
        let mut frontier: Vec<(usize, Vec<u32>)> = vec![(0, root_hits)];

        for depth in 0..params.max_level {
            let mut jobs = Vec::new();
            for (parent, cands) in &frontier {
                let first = nodes.len();
                nodes[*parent].first_child = Some(first);
                let pc = nodes[*parent].code;
                for k in 0..8 {
                    let code = [0, 1, 2].map(|a| 2 * pc[a] + ((k >> a) & 1) as u32);
                    nodes.push(Node {
                        level: depth + 1,
                        code,
                        parent: Some(*parent),
                        first_child: None,
                        is_boundary: false,
                        inside: false,
                        area: 0.0,
                        penalty: None,
                    });
                    jobs.push((first + k, cands));
                }
            }
            let results = exec.map(&jobs, |(idx, cands)| {
                let n = &nodes[*idx];
                accumulate_in(&node_box(n.level, n.code), surface, cands, &units, degree)
            });
            let mut next = Vec::new();
            for ((idx, _), r) in jobs.iter().zip(results) {
                if let Some((p, hits)) = r {
                    let n = &mut nodes[*idx];
                    n.is_boundary = true;
                    n.area = p.total_weight();
                    n.penalty = Some(finish_penalty(p, shift)?);
                    next.push((*idx, hits));
                }
            }
            frontier = next;
        }

        let mut lookup: HashMap<(u8, [u32; 3]), usize> =
            nodes.iter().enumerate().map(|(i, n)| ((n.level, n.code), i)).collect();
        balance(&mut nodes, &mut lookup, params.max_level);

        let flags = exec.map_range(nodes.len(), |i| {
            let n = &nodes[i];
            !n.is_boundary && surface.contains(&node_box(n.level, n.code).center())
        });
        for (n, inside) in nodes.iter_mut().zip(flags) {
            n.inside = inside;
        }

        Ok(Self::assemble(params, root, surface.content_hash(), nodes))
    }

    fn assemble(params: GridParams, root: Aabb, mesh_hash: [u8; 32], nodes: Vec<Node>) -> Self {
        let lookup: HashMap<(u8, [u32; 3]), usize> =
            nodes.iter().enumerate().map(|(i, n)| ((n.level, n.code), i)).collect();
        let mut levels: Vec<Level> = Vec::with_capacity(params.max_level as usize + 1);
        let mut prev_index: Vec<Option<usize>> = Vec::new();
        for l in 0..=params.max_level {
            let mut index = vec![None; nodes.len()];
            let mut cells = Vec::new();
            let mut coarse = Vec::new();
            for (i, n) in nodes.iter().enumerate() {
                let in_view = n.level == l || (n.level < l && n.is_leaf());
                if !in_view || !(n.is_boundary || n.inside) {
                    continue;
                }
                index[i] = Some(cells.len());
                let size = 1.0 / f64::from(1u32 << n.level);
                let unit_center = Vector3::new(
                    (n.code[0] as f64 + 0.5) * size,
                    (n.code[1] as f64 + 0.5) * size,
                    (n.code[2] as f64 + 0.5) * size,
                );
                cells.push(Cell {
                    node: i,
                    level: n.level,
                    is_boundary: n.is_boundary,
                    unit_center,
                    unit_size: size,
                });
                coarse.push(if l == 0 {
                    None
                } else if n.level < l {
                    prev_index[i]
                } else {
                    n.parent.and_then(|p| prev_index[p])
                });
            }
            let mut edges = Vec::new();
            for (ci, cell) in cells.iter().enumerate() {
                let n = &nodes[cell.node];
                let dim = 1u32 << n.level;
                for axis in 0..3 {
                    for positive in [false, true] {
                        let mut code = n.code;
                        if positive {
                            if code[axis] + 1 >= dim {
                                continue;
                            }
                            code[axis] += 1;
                        } else {
                            if code[axis] == 0 {
                                continue;
                            }
                            code[axis] -= 1;
                        }
                        let m = covering(&lookup, n.level, code);
                        // Same-size pairs are emitted once, from the lower
                        // cell; mixed pairs from the finer side.
                        let emit = match nodes[m].level.cmp(&n.level) {
                            std::cmp::Ordering::Less => true,
                            std::cmp::Ordering::Equal => positive,
                            std::cmp::Ordering::Greater => false,
                        };
                        if !emit {
                            continue;
                        }
                        if let Some(cj) = index[m] {
                            let face = cell.unit_size * cell.unit_size;
                            let dist = (cells[cj].unit_center - cell.unit_center).norm();
                            let (i, j) = (ci.min(cj), ci.max(cj));
                            edges.push(Edge { i, j, weight: face / dist });
                        }
                    }
                }
            }
            edges.sort_by_key(|e| (e.i, e.j));
            levels.push(Level { cells, edges, coarse });
            prev_index = index;
        }
        GridHierarchy {
            params,
            root,
            mesh_hash,
            nodes,
            levels,
        }
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn degree(&self) -> Degree {
        self.params.degree
    }

    pub fn max_level(&self) -> u8 {
        self.params.max_level
    }

    pub fn root(&self) -> &Aabb {
        &self.root
    }

    pub fn root_side(&self) -> f64 {
        self.root.extent().x
    }

    pub fn mesh_hash(&self) -> &[u8; 32] {
        &self.mesh_hash
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> Result<&Level> {
        self.levels
            .get(l)
            .ok_or_else(|| Error::invalid(format!("level {l} out of range 0..={}", self.max_level())))
    }

    /// Box of a node in model units.
    pub fn node_box(&self, i: usize) -> Aabb {
        let n = &self.nodes[i];
        code_box(&self.root, self.root_side(), n.level, n.code)
    }

    pub fn cell_box(&self, level: usize, i: usize) -> Aabb {
        self.node_box(self.levels[level].cells[i].node)
    }

    pub fn penalty(&self, node: usize) -> Option<&PackedPenalty> {
        self.nodes[node].penalty.as_ref()
    }

    /// Leaves in the finest level.
    pub fn leaf_cells(&self) -> &[Cell] {
        &self.levels[self.max_level() as usize].cells
    }

    /// Children inherit the value of the coarse cell containing them. Cells
    /// with no coarse counterpart get `fallback`.
    pub fn prolong(&self, fine_level: usize, coarse: &[DVector<f64>], fallback: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        if fine_level == 0 || fine_level > self.max_level() as usize {
            return Err(Error::invalid(format!("cannot prolong to level {fine_level}")));
        }
        let prev = &self.levels[fine_level - 1];
        if coarse.len() != prev.len() {
            return Err(Error::invalid(format!(
                "level {} has {} cells, got {} values",
                fine_level - 1,
                prev.len(),
                coarse.len()
            )));
        }
        let fine = &self.levels[fine_level];
        Ok((0..fine.len())
            .map(|i| fine.coarse[i].map_or_else(|| fallback.clone(), |c| coarse[c].clone()))
            .collect())
    }

    /// Averages fine values into the coarse cells containing them.
    pub fn restrict(&self, fine_level: usize, fine: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        if fine_level == 0 || fine_level > self.max_level() as usize {
            return Err(Error::invalid(format!("cannot restrict from level {fine_level}")));
        }
        let lv = &self.levels[fine_level];
        if fine.len() != lv.len() {
            return Err(Error::invalid(format!(
                "level {fine_level} has {} cells, got {} values",
                lv.len(),
                fine.len()
            )));
        }
        let dim = self.degree().dim();
        let prev = &self.levels[fine_level - 1];
        let mut sum = vec![DVector::zeros(dim); prev.len()];
        let mut count = vec![0usize; prev.len()];
        for (i, v) in fine.iter().enumerate() {
            if let Some(c) = lv.coarse[i] {
                sum[c] += v;
                count[c] += 1;
            }
        }
        for (s, &c) in sum.iter_mut().zip(&count) {
            if c > 0 {
                *s /= c as f64;
            }
        }
        Ok(sum)
    }

    /// Largest level difference across any face adjacency of the finest
    /// level's complete leaf set (inside, outside and boundary).
    pub fn max_level_jump(&self) -> u8 {
        let lookup: HashMap<(u8, [u32; 3]), usize> =
            self.nodes.iter().enumerate().map(|(i, n)| ((n.level, n.code), i)).collect();
        let mut worst = 0;
        for n in self.nodes.iter().filter(|n| n.is_leaf()) {
            let dim = 1u32 << n.level;
            for axis in 0..3 {
                for delta in [-1i64, 1] {
                    let c = n.code[axis] as i64 + delta;
                    if c < 0 || c >= dim as i64 {
                        continue;
                    }
                    let mut code = n.code;
                    code[axis] = c as u32;
                    let m = covering(&lookup, n.level, code);
                    worst = worst.max(n.level - self.nodes[m].level);
                }
            }
        }
        worst
    }

    /// Content digest of the cache encoding, hex.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `SBCF` cache encoding (little-endian, version 1).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        self.write_to(&mut w).expect("writing to memory");
        w
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_u32::<LittleEndian>(CACHE_VERSION)?;
        w.write_u8(self.params.degree.into())?;
        w.write_u8(u8::from(self.params.shift))?;
        w.write_u8(self.params.max_level)?;
        w.write_f64::<LittleEndian>(self.params.padding)?;
        for v in [self.root.min, self.root.max] {
            for c in v.iter() {
                w.write_f64::<LittleEndian>(*c)?;
            }
        }
        w.write_all(&self.mesh_hash)?;
        w.write_u64::<LittleEndian>(self.nodes.len() as u64)?;
        for n in &self.nodes {
            w.write_u8(n.level)?;
            for c in n.code {
                w.write_u32::<LittleEndian>(c)?;
            }
            w.write_u32::<LittleEndian>(n.parent.map_or(NONE, |p| p as u32))?;
            w.write_u32::<LittleEndian>(n.first_child.map_or(NONE, |p| p as u32))?;
            w.write_u8(u8::from(n.is_boundary) | (u8::from(n.inside) << 1))?;
            w.write_f64::<LittleEndian>(n.area)?;
            match &n.penalty {
                Some(p) => {
                    w.write_u32::<LittleEndian>(p.data().len() as u32)?;
                    for x in p.data() {
                        w.write_f64::<LittleEndian>(*x)?;
                    }
                }
                None => w.write_u32::<LittleEndian>(0)?,
            }
        }
        Ok(())
    }

    /// Decodes a cache without checking it against any mesh.
    pub fn from_bytes(bytes: &[u8], execution: Execution) -> Result<Self> {
        let bad = |e: std::io::Error| Error::Cache(format!("truncated or malformed cache: {e}"));
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Cache("not an SBCF file".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(bad)?;
        if version != CACHE_VERSION {
            return Err(Error::Cache(format!("unsupported cache version {version}")));
        }
        let degree = Degree::try_from(r.read_u8().map_err(bad)?)?;
        let shift = r.read_u8().map_err(bad)? != 0;
        let max_level = r.read_u8().map_err(bad)?;
        let padding = r.read_f64::<LittleEndian>().map_err(bad)?;
        let mut corners = [0.0; 6];
        for c in &mut corners {
            *c = r.read_f64::<LittleEndian>().map_err(bad)?;
        }
        let mut mesh_hash = [0u8; 32];
        r.read_exact(&mut mesh_hash).map_err(bad)?;
        let params = GridParams {
            max_level,
            padding,
            degree,
            shift,
            execution,
        };
        params.validate().map_err(|e| Error::Cache(e.to_string()))?;
        let count = r.read_u64::<LittleEndian>().map_err(bad)? as usize;
        if count > bytes.len() {
            return Err(Error::Cache(format!("implausible node count {count}")));
        }
        let opt = |v: u32| (v != NONE).then_some(v as usize);
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            let level = r.read_u8().map_err(bad)?;
            let mut code = [0u32; 3];
            for c in &mut code {
                *c = r.read_u32::<LittleEndian>().map_err(bad)?;
            }
            let parent = opt(r.read_u32::<LittleEndian>().map_err(bad)?);
            let first_child = opt(r.read_u32::<LittleEndian>().map_err(bad)?);
            let flags = r.read_u8().map_err(bad)?;
            let area = r.read_f64::<LittleEndian>().map_err(bad)?;
            let len = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
            let penalty = if len == 0 {
                None
            } else {
                let mut data = vec![0.0; len];
                r.read_f64_into::<LittleEndian>(&mut data).map_err(bad)?;
                Some(PackedPenalty::from_raw(degree, data)?)
            };
            if parent.is_some_and(|p| p >= count) || first_child.is_some_and(|c| c + 8 > count) {
                return Err(Error::Cache("node link out of range".into()));
            }
            nodes.push(Node {
                level,
                code,
                parent,
                first_child,
                is_boundary: flags & 1 != 0,
                inside: flags & 2 != 0,
                area,
                penalty,
            });
        }
        if nodes.iter().any(|n| n.is_boundary != n.penalty.is_some() || n.level > max_level) {
            return Err(Error::Cache("inconsistent node records".into()));
        }
        let root = Aabb::new(
            Vector3::new(corners[0], corners[1], corners[2]),
            Vector3::new(corners[3], corners[4], corners[5]),
        );
        Ok(Self::assemble(params, root, mesh_hash, nodes))
    }

    pub fn save_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_cache(path: impl AsRef<Path>, execution: Execution) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, execution)
    }

    /// Loads `path` if it was built from `surface` with `params`, otherwise
    /// builds and (re)writes it.
    pub fn build_cached(surface: &TriangleSurface, params: GridParams, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.exists() {
            match Self::read_cache(path, params.execution) {
                Ok(g) if g.matches(surface, &params) => {
                    log::info!("grid loaded from cache {}", path.display());
                    return Ok(g);
                }
                Ok(_) => log::info!("cache {} is stale, rebuilding", path.display()),
                Err(e) => log::warn!("ignoring unreadable cache {}: {e}", path.display()),
            }
        }
        let g = Self::build(surface, params)?;
        g.save_cache(path)?;
        Ok(g)
    }

    fn matches(&self, surface: &TriangleSurface, params: &GridParams) -> bool {
        self.mesh_hash == surface.content_hash()
            && self.params.max_level == params.max_level
            && self.params.degree == params.degree
            && self.params.shift == params.shift
            && self.params.padding.to_bits() == params.padding.to_bits()
    }
}

/// Box of the level-`level` cell `code`. Shared faces of neighbors are
/// bitwise identical.
fn code_box(root: &Aabb, root_side: f64, level: u8, code: [u32; 3]) -> Aabb {
    let side = root_side / f64::from(1u32 << level);
    let corner = |k: [u32; 3]| root.min + Vector3::new(k[0] as f64, k[1] as f64, k[2] as f64) * side;
    Aabb::new(corner(code), corner(code.map(|c| c + 1)))
}

/// Deepest existing node covering the level-`l` cell `code`.
fn covering(lookup: &HashMap<(u8, [u32; 3]), usize>, l: u8, code: [u32; 3]) -> usize {
    for lv in (0..=l).rev() {
        let shift = l - lv;
        if let Some(&i) = lookup.get(&(lv, code.map(|c| c >> shift))) {
            return i;
        }
    }
    unreachable!("the root covers every cell")
}

/// Splits leaves until face-adjacent leaves differ by at most one level.
fn balance(nodes: &mut Vec<Node>, lookup: &mut HashMap<(u8, [u32; 3]), usize>, max_level: u8) {
    for l in (2..=max_level).rev() {
        let leaves: Vec<usize> = (0..nodes.len())
            .filter(|&i| nodes[i].level == l && nodes[i].is_leaf())
            .collect();
        for i in leaves {
            let code = nodes[i].code;
            let dim = 1u32 << l;
            for axis in 0..3 {
                for delta in [-1i64, 1] {
                    let c = code[axis] as i64 + delta;
                    if c < 0 || c >= dim as i64 {
                        continue;
                    }
                    let mut nb = code;
                    nb[axis] = c as u32;
                    let target = nb.map(|c| c >> 1);
                    loop {
                        let m = covering(lookup, l - 1, target);
                        if nodes[m].level >= l - 1 {
                            break;
                        }
                        split(nodes, lookup, m);
                    }
                }
            }
        }
    }
}

fn split(nodes: &mut Vec<Node>, lookup: &mut HashMap<(u8, [u32; 3]), usize>, i: usize) {
    debug_assert!(!nodes[i].is_boundary && nodes[i].is_leaf());
    let first = nodes.len();
    nodes[i].first_child = Some(first);
    let (level, pc) = (nodes[i].level + 1, nodes[i].code);
    for k in 0..8 {
        let code = [0, 1, 2].map(|a| 2 * pc[a] + ((k >> a) & 1) as u32);
        lookup.insert((level, code), first + k);
        nodes.push(Node {
            level,
            code,
            parent: Some(i),
            first_child: None,
            is_boundary: false,
            inside: false,
            area: 0.0,
            penalty: None,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(max_level: u8) -> GridParams {
        GridParams {
            max_level,
            ..GridParams::default()
        }
    }

    #[test]
    fn rejects_bad_levels() {
        let s = TriangleSurface::cube(0.5);
        assert!(GridHierarchy::build(&s, params(0)).is_err());
        assert!(GridHierarchy::build(&s, params(13)).is_err());
    }

    #[test]
    fn cube_weight_conservation_and_grading() {
        let s = TriangleSurface::cube(0.5);
        let g = GridHierarchy::build(&s, params(3)).unwrap();
        let area: f64 = g
            .leaf_cells()
            .iter()
            .filter(|c| c.is_boundary)
            .map(|c| g.penalty(c.node).unwrap().total_weight())
            .sum();
        assert!((area - 6.0).abs() < 1e-9 * 6.0);
        assert!(g.max_level_jump() <= 1);
        for lv in g.levels() {
            for e in &lv.edges {
                assert!(e.i < e.j && e.weight > 0.0);
            }
        }
    }

    #[test]
    fn cache_round_trip() {
        let s = TriangleSurface::cube(0.5);
        let g = GridHierarchy::build(&s, params(2)).unwrap();
        let back = GridHierarchy::from_bytes(&g.to_bytes(), Execution::Sequential).unwrap();
        assert_eq!(back.nodes(), g.nodes());
        assert_eq!(back.levels(), g.levels());
        assert_eq!(back.fingerprint(), g.fingerprint());
        let mut broken = g.to_bytes();
        broken[0] = b'X';
        assert!(matches!(GridHierarchy::from_bytes(&broken, Execution::Sequential), Err(Error::Cache(_))));
        assert!(GridHierarchy::from_bytes(&g.to_bytes()[..50], Execution::Sequential).is_err());
    }
}
