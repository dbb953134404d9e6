//! Frame-field optimization on one grid level, and coarse to fine.
//!
//! The energy over per-cell coefficient vectors `x_i` is
//!
//! ```text
//! E(x) = s·Σ_(i,j) a_ij ‖x_i − x_j‖² + (w / L²)·Σ_boundary P_i(x_i)
//! ```
//!
//! with face-adjacency weights `a_ij` in normalized units, root side `L`,
//! smoothness `s` and boundary weight `w`.
//!
//! The iterate always lies on the frame manifold. Each outer iteration runs
//! block-preconditioned CG on a damped second-order model of `E` in the
//! rotation increments `δ_i` of every cell, then moves each cell to
//! `Q_i·exp(δ_i)` (the projection phase). Moves that would raise `E` are
//! rejected and the damping is raised, so accepted energies never increase.
//! The CG-phase energy in the trace is `E` at the unprojected point
//! `x + T·δ` and is not monotone.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::{DVector, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::frame_repr::{embed_frame, embed_rotation, reference, FrameOrientation, FrameProjector};
use crate::grid::{Edge, GridHierarchy};
use crate::penalty::BoundaryPenalty;
use crate::sh_rotation::{Degree, HarmonicCoeffs};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub degree: Degree,
    pub boundary_weight: f64,
    pub smoothness: f64,
    /// Cap on outer iterations per level.
    pub outer_iterations: usize,
    /// Relative residual target of each CG solve.
    pub linear_tolerance: f64,
    /// Project onto the frame manifold every this many outer iterations.
    pub projection_period: usize,
    pub seed: u64,
    pub random_init: bool,
    /// Initial damping relative to each cell's diagonal.
    pub proximal: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            degree: Degree::Three,
            boundary_weight: 10.0,
            smoothness: 1.0,
            outer_iterations: 200,
            linear_tolerance: 1e-6,
            projection_period: 1,
            seed: 0,
            random_init: false,
            proximal: 0.1,
            execution: Execution::default(),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        if !(self.boundary_weight >= 0.0 && self.boundary_weight.is_finite()) {
            return Err(Error::invalid(format!(
                "boundary_weight must be ≥ 0, got {}",
                self.boundary_weight
            )));
        }
        positive("smoothness", self.smoothness)?;
        positive("linear_tolerance", self.linear_tolerance)?;
        positive("proximal", self.proximal)?;
        if self.outer_iterations == 0 || self.projection_period == 0 {
            return Err(Error::invalid("iteration counts must be ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Cg,
    Projection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub outer: usize,
    pub phase: Phase,
    pub energy: f64,
    /// Projections that raised the energy are recorded but not accepted.
    pub accepted: bool,
    pub cg_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub level: usize,
    pub cells: usize,
    pub boundary_cells: usize,
    pub trace: Vec<TraceEntry>,
    pub outer_iterations: usize,
    pub cg_iterations: usize,
    pub energy: f64,
    pub initial_energy: f64,
    /// RMS over cells of the diagonally scaled tangential energy gradient.
    pub residual: f64,
    pub initial_residual: f64,
    pub frame_residual_mean: f64,
    pub frame_residual_max: f64,
    /// Mean over boundary cells of `P_i(x_i) / area_i`.
    pub boundary_penalty_per_area: f64,
    pub converged: bool,
    pub wall_time_s: f64,
    pub reduction_order: String,
}

impl SolveReport {
    /// Energies of the initial state and every accepted projection.
    pub fn accepted_energies(&self) -> Vec<f64> {
        self.trace
            .iter()
            .filter(|t| t.phase == Phase::Projection && t.accepted)
            .map(|t| t.energy)
            .collect()
    }
}

/// Per-cell coefficients on one level, all on the frame manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub degree: Degree,
    pub level: usize,
    pub coeffs: Vec<HarmonicCoeffs>,
    pub rotations: Vec<Matrix3<f64>>,
}

impl Field {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn frames(&self) -> Vec<FrameOrientation> {
        self.rotations.iter().map(FrameOrientation::from_rotation).collect()
    }

    pub fn vectors(&self) -> Vec<DVector<f64>> {
        self.coeffs.iter().map(|c| c.vector().clone()).collect()
    }
}

#[derive(Clone, Debug)]
struct CellTerm {
    a: Vec<f64>,
    b: Vec<f64>,
    c: f64,
    area: f64,
}

/// The quadratic energy of one level: `E(x) = xᵀHx − 2gᵀx + const`.
#[derive(Clone, Debug)]
pub struct EnergyModel {
    degree: Degree,
    neighbors: Vec<Vec<(usize, f64)>>,
    edges: Vec<Edge>,
    terms: Vec<Option<CellTerm>>,
    smoothness: f64,
    exec: Execution,
}

impl EnergyModel {
    /// `boundary_scale` multiplies every penalty.
    pub fn from_parts(
        degree: Degree,
        cells: usize,
        edges: Vec<Edge>,
        penalties: Vec<Option<BoundaryPenalty>>,
        smoothness: f64,
        boundary_scale: f64,
        exec: Execution,
    ) -> Result<Self> {
        if cells == 0 {
            return Err(Error::invalid("empty unknown set"));
        }
        if penalties.len() != cells {
            return Err(Error::invalid(format!(
                "{cells} cells but {} penalty slots",
                penalties.len()
            )));
        }
        let mut neighbors = vec![Vec::new(); cells];
        for e in &edges {
            if e.i >= cells || e.j >= cells || e.i == e.j {
                return Err(Error::invalid(format!("bad edge {e:?}")));
            }
            neighbors[e.i].push((e.j, e.weight));
            neighbors[e.j].push((e.i, e.weight));
        }
        for n in &mut neighbors {
            n.sort_by_key(|&(j, _)| j);
        }
        let d = degree.dim();
        let terms = penalties
            .into_iter()
            .map(|p| {
                p.map(|p| {
                    let area = p.total_weight();
                    let p = p.scaled(boundary_scale);
                    CellTerm {
                        a: (0..d * d).map(|k| p.matrix()[(k / d, k % d)]).collect(),
                        b: if p.linear().is_empty() {
                            vec![0.0; d]
                        } else {
                            p.linear().iter().copied().collect()
                        },
                        c: p.constant(),
                        area,
                    }
                })
            })
            .collect();
        Ok(EnergyModel {
            degree,
            neighbors,
            edges,
            terms,
            smoothness,
            exec,
        })
    }

    pub fn assemble(grid: &GridHierarchy, level: usize, cfg: &SolveConfig) -> Result<Self> {
        if grid.degree() != cfg.degree {
            return Err(Error::DegreeMismatch {
                expected: cfg.degree.into(),
                actual: grid.degree().into(),
            });
        }
        let lv = grid.level(level)?;
        let penalties = lv
            .cells
            .iter()
            .map(|c| grid.penalty(c.node).map(|p| p.unpack()).transpose())
            .collect::<Result<Vec<_>>>()?;
        let scale = cfg.boundary_weight / (grid.root_side() * grid.root_side());
        Self::from_parts(
            cfg.degree,
            lv.len(),
            lv.edges.clone(),
            penalties,
            cfg.smoothness,
            scale,
            cfg.execution,
        )
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.degree.dim()
    }

    pub fn smoothness_energy(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let s = self.exec.sum_range(self.edges.len(), |k| {
            let e = &self.edges[k];
            let (xi, xj) = (&x[e.i * d..(e.i + 1) * d], &x[e.j * d..(e.j + 1) * d]);
            e.weight * xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        });
        self.smoothness * s
    }

    /// Scaled penalty of cell `i` at `xi`, zero off the boundary.
    pub fn cell_penalty(&self, i: usize, xi: &[f64]) -> f64 {
        match &self.terms[i] {
            None => 0.0,
            Some(t) => {
                let d = xi.len();
                let mut q = 0.0;
                for r in 0..d {
                    let row: f64 = (0..d).map(|c| t.a[r * d + c] * xi[c]).sum();
                    q += xi[r] * (row - 2.0 * t.b[r]);
                }
                q + t.c
            }
        }
    }

    pub fn boundary_energy(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        self.exec.sum_range(self.len(), |i| self.cell_penalty(i, &x[i * d..(i + 1) * d]))
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        self.smoothness_energy(x) + self.boundary_energy(x)
    }

    /// `H·x`.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let blocks = self.exec.map_range(self.len(), |i| {
            let xi = &x[i * d..(i + 1) * d];
            let mut out = vec![0.0; d];
            for &(j, w) in &self.neighbors[i] {
                let xj = &x[j * d..(j + 1) * d];
                for k in 0..d {
                    out[k] += self.smoothness * w * (xi[k] - xj[k]);
                }
            }
            if let Some(t) = &self.terms[i] {
                for r in 0..d {
                    out[r] += (0..d).map(|c| t.a[r * d + c] * xi[c]).sum::<f64>();
                }
            }
            out
        });
        blocks.concat()
    }

    fn linear_term(&self) -> Vec<f64> {
        let d = self.dim();
        let mut g = vec![0.0; self.len() * d];
        for (i, t) in self.terms.iter().enumerate() {
            if let Some(t) = t {
                g[i * d..(i + 1) * d].copy_from_slice(&t.b);
            }
        }
        g
    }

    /// Per-unknown diagonal of `H`.
    fn diagonal(&self) -> Vec<f64> {
        let d = self.dim();
        let mut diag = vec![0.0; self.len() * d];
        for i in 0..self.len() {
            let lap: f64 = self.neighbors[i].iter().map(|&(_, w)| w).sum::<f64>() * self.smoothness;
            for k in 0..d {
                diag[i * d + k] = lap + self.terms[i].as_ref().map_or(0.0, |t| t.a[k * d + k]);
            }
        }
        diag
    }

    /// `∇E(x) = 2(Hx − g)`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let hx = self.apply(x);
        let g = self.linear_term();
        hx.iter().zip(&g).map(|(a, b)| 2.0 * (a - b)).collect()
    }
}

/// Preconditioned CG on `K·x = rhs`, warm-started at `x`. Returns the
/// iteration count and the search direction of non-positive curvature
/// that stopped the iteration, if any.
fn pcg(
    exec: Execution,
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precondition: impl Fn(&[f64]) -> Vec<f64>,
    rhs: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> (usize, Option<Vec<f64>>) {
    let kx = apply(x);
    let mut r: Vec<f64> = rhs.iter().zip(&kx).map(|(b, k)| b - k).collect();
    let bnorm = exec.dot(rhs, rhs).sqrt();
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = exec.dot(&r, &z);
    let mut iters = 0;
    while iters < max_iter {
        let rnorm = exec.dot(&r, &r).sqrt();
        if rnorm <= tol * bnorm || rnorm == 0.0 {
            break;
        }
        let q = apply(&p);
        let pq = exec.dot(&p, &q);
        if !(pq > 0.0) {
            return (iters, Some(p));
        }
        let alpha = rz / pq;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        z = precondition(&r);
        let rz_new = exec.dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
        iters += 1;
    }
    (iters, None)
}

/// A field on the frame manifold with the fitted rotations.
#[derive(Clone)]
struct Projected {
    values: Vec<f64>,
    rotations: Vec<Matrix3<f64>>,
    signs: Vec<f64>,
}

fn project_all(degree: Degree, x: &[f64], exec: Execution) -> Result<Projected> {
    let d = degree.dim();
    let proj = FrameProjector::get(degree);
    let n = x.len() / d;
    let results = exec.map_range(n, |i| proj.project(&x[i * d..(i + 1) * d], None));
    let mut out = Projected {
        values: Vec::with_capacity(x.len()),
        rotations: Vec::with_capacity(n),
        signs: Vec::with_capacity(n),
    };
    for p in results {
        let p = p?;
        out.values.extend_from_slice(&p.embedded);
        out.rotations.push(p.rotation);
        out.signs.push(p.sign);
    }
    Ok(out)
}

/// Flips cells along BFS trees so neighbors have non-negative inner product.
fn align_signs(model: &EnergyModel, state: &mut Projected) {
    let d = model.dim();
    let n = model.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        queue.push_back(root);
        while let Some(i) = queue.pop_front() {
            for &(j, _) in &model.neighbors[i] {
                if seen[j] {
                    continue;
                }
                seen[j] = true;
                let dot: f64 = (0..d).map(|k| state.values[i * d + k] * state.values[j * d + k]).sum();
                if dot < 0.0 {
                    state.values[j * d..(j + 1) * d].iter_mut().for_each(|v| *v = -*v);
                    state.signs[j] = -state.signs[j];
                }
                queue.push_back(j);
            }
        }
    }
}

/// Sign alignment, kept only when it does not raise the energy.
fn align_if_better(model: &EnergyModel, state: &mut Projected, energy: &mut f64) {
    if model.degree != Degree::Three {
        return;
    }
    let mut flipped = state.clone();
    align_signs(model, &mut flipped);
    let e = model.energy(&flipped.values);
    if e <= *energy {
        *state = flipped;
        *energy = e;
    }
}

fn initial_values(degree: Degree, n: usize, cfg: &SolveConfig) -> Vec<f64> {
    let d = degree.dim();
    if cfg.random_init {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut out = Vec::with_capacity(n * d);
        for _ in 0..n {
            let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            out.extend(v);
        }
        out
    } else {
        reference(degree).as_slice().repeat(n)
    }
}

/// `∂²h/∂δ_k∂δ_l` of `h(δ) = sign·embed(Q·exp δ)` at `δ = 0`, stored as
/// `out[(k·3 + l)·d..]`, by central differences of the tangent basis.
fn orbit_second_derivatives(proj: &FrameProjector, q: &Matrix3<f64>, sign: f64) -> Vec<f64> {
    const EPS: f64 = 1e-4;
    let d = proj.degree().dim();
    let shifted = |l: usize, e: f64| {
        let mut axis = nalgebra::Vector3::zeros();
        axis[l] = e;
        let r = q * nalgebra::Rotation3::from_scaled_axis(axis).into_inner();
        proj.tangent_basis(&r, sign).concat()
    };
    let mut raw = vec![0.0; 9 * d];
    for l in 0..3 {
        let (p, m) = (shifted(l, EPS), shifted(l, -EPS));
        for k in 0..3 {
            for r in 0..d {
                raw[(l * 3 + k) * d + r] = (p[k * d + r] - m[k * d + r]) / (2.0 * EPS);
            }
        }
    }
    let mut out = vec![0.0; 9 * d];
    for k in 0..3 {
        for l in 0..3 {
            for r in 0..d {
                out[(k * 3 + l) * d + r] = 0.5 * (raw[(k * 3 + l) * d + r] + raw[(l * 3 + k) * d + r]);
            }
        }
    }
    out
}

/// Orbit tangent bases at every cell of a projected field.
struct Tangents {
    dim: usize,
    /// Column `k` of cell `i` is `basis[i][k·d..(k+1)·d]`.
    basis: Vec<Vec<f64>>,
    gram: Matrix3<f64>,
    /// Symmetric second derivatives `∂²h_i/∂δ_k∂δ_l`, stored as
    /// `second[i][(k·3 + l)·d..]`.
    second: Vec<Vec<f64>>,
}

impl Tangents {
    fn at(degree: Degree, state: &Projected, exec: Execution) -> Self {
        let proj = FrameProjector::get(degree);
        let d = degree.dim();
        let basis = exec.map_range(state.rotations.len(), |i| {
            proj.tangent_basis(&state.rotations[i], state.signs[i]).concat()
        });
        let second = exec.map_range(state.rotations.len(), |i| {
            orbit_second_derivatives(proj, &state.rotations[i], state.signs[i])
        });
        Tangents {
            dim: d,
            basis,
            gram: proj.tangent_gram(),
            second,
        }
    }

    /// `T·δ`.
    fn expand(&self, delta: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; self.basis.len() * d];
        for (i, t) in self.basis.iter().enumerate() {
            for k in 0..3 {
                let c = delta[3 * i + k];
                for r in 0..d {
                    out[i * d + r] += c * t[k * d + r];
                }
            }
        }
        out
    }

    /// `Tᵀ·v`.
    fn reduce(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; self.basis.len() * 3];
        for (i, t) in self.basis.iter().enumerate() {
            for k in 0..3 {
                out[3 * i + k] = (0..d).map(|r| t[k * d + r] * v[i * d + r]).sum();
            }
        }
        out
    }

    /// Per-cell `C_i[k][l] = r_iᵀ·∂²h_i/∂δ_k∂δ_l` for the ambient gradient `r`.
    fn curvature(&self, r: &[f64]) -> Vec<Matrix3<f64>> {
        let d = self.dim;
        self.second
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Matrix3::from_fn(|k, l| (0..d).map(|c| s[(k * 3 + l) * d + c] * r[i * d + c]).sum())
            })
            .collect()
    }

    fn gram_times(&self, v: &[f64]) -> [f64; 3] {
        let g = self.gram * nalgebra::Vector3::new(v[0], v[1], v[2]);
        [g.x, g.y, g.z]
    }

    /// Inverses of the diagonal blocks `T_iᵀ·H_ii·T_i + μ_i·G`.
    fn block_inverses(&self, model: &EnergyModel, mu: &[f64]) -> Vec<Matrix3<f64>> {
        let d = self.dim;
        model.exec.map_range(self.basis.len(), |i| {
            let t = &self.basis[i];
            let lap: f64 = model.neighbors[i].iter().map(|&(_, w)| w).sum::<f64>() * model.smoothness;
            let mut b = self.gram * (lap + mu[i]);
            if let Some(term) = &model.terms[i] {
                for k in 0..3 {
                    for l in 0..3 {
                        let mut acc = 0.0;
                        for r in 0..d {
                            let row: f64 = (0..d).map(|c| term.a[r * d + c] * t[l * d + c]).sum();
                            acc += t[k * d + r] * row;
                        }
                        b[(k, l)] += acc;
                    }
                }
            }
            b.try_inverse().unwrap_or_else(|| {
                Matrix3::from_diagonal(&b.diagonal().map(|x| if x > 0.0 { 1.0 / x } else { 0.0 }))
            })
        })
    }
}

struct Stats {
    residual: f64,
    frame_mean: f64,
    frame_max: f64,
    penalty_per_area: f64,
}

fn stats(model: &EnergyModel, boundary_scale: f64, state: &Projected, diag: &[f64]) -> Stats {
    let d = model.dim();
    let degree = model.degree;
    let proj = FrameProjector::get(degree);
    let grad = model.gradient(&state.values);
    let n = model.len();
    let per_cell = model.exec.map_range(n, |i| {
        let g = &grad[i * d..(i + 1) * d];
        let scale = diag[i * d..(i + 1) * d].iter().sum::<f64>() / d as f64;
        let t = proj.tangent_norm(&state.rotations[i], g) / scale.max(f64::MIN_POSITIVE);
        let f = FrameOrientation::from_rotation(&state.rotations[i]);
        let e = embed_frame(degree, &f);
        let h = &state.values[i * d..(i + 1) * d];
        let plus: f64 = e.as_slice().iter().zip(h).map(|(a, b)| (a - b) * (a - b)).sum();
        let minus: f64 = e.as_slice().iter().zip(h).map(|(a, b)| (a + b) * (a + b)).sum();
        let fr = match degree {
            Degree::Four => plus.sqrt(),
            Degree::Three => plus.min(minus).sqrt(),
        };
        (t, fr)
    });
    let residual = (per_cell.iter().map(|(t, _)| t * t).sum::<f64>() / n as f64).sqrt();
    let frame_mean = per_cell.iter().map(|(_, f)| f).sum::<f64>() / n as f64;
    let frame_max = per_cell.iter().fold(0.0f64, |m, (_, f)| m.max(*f));
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, t) in model.terms.iter().enumerate() {
        if let Some(t) = t {
            let p = model.cell_penalty(i, &state.values[i * d..(i + 1) * d]);
            if boundary_scale > 0.0 {
                total += p / (boundary_scale * t.area);
            }
            count += 1;
        }
    }
    Stats {
        residual,
        frame_mean,
        frame_max,
        penalty_per_area: if count > 0 { total / count as f64 } else { 0.0 },
    }
}

const REL_DECREASE_STOP: f64 = 1e-10;
const ENERGY_FLOOR: f64 = 1e-13;
const MIN_STIFFNESS: f64 = 1e-6;
const MAX_STIFFNESS: f64 = 1e8;
/// Largest per-cell rotation, in radians, along a negative-curvature direction.
const INITIAL_RADIUS: f64 = 0.5;
const MIN_RADIUS: f64 = 1e-6;

/// Solves one level starting from `initial` (or the configured
/// initialization when `None`).
pub fn solve_level(
    grid: &GridHierarchy,
    level: usize,
    cfg: &SolveConfig,
    initial: Option<&[DVector<f64>]>,
) -> Result<(Field, SolveReport)> {
    cfg.validate()?;
    let model = EnergyModel::assemble(grid, level, cfg)?;
    let boundary_scale = cfg.boundary_weight / (grid.root_side() * grid.root_side());
    let (field, mut report) = solve_model(&model, boundary_scale, cfg, initial)?;
    report.level = level;
    Ok((Field { level, ..field }, report))
}

/// [`solve_level`] on an explicit energy. `boundary_scale` is the factor
/// the model's penalties were built with, used to report penalty per area.
///
/// Each CG phase solves for rotation increments `δ_i` in the tangent space
/// of every cell's frame orbit, minimizing `E(y + Tδ) + Σ μ_i δ_iᵀGδ_i`
/// (block-Jacobi preconditioned). The projection step retracts each frame
/// to `Q_i·exp(δ_i)`.
pub fn solve_model(
    model: &EnergyModel,
    boundary_scale: f64,
    cfg: &SolveConfig,
    initial: Option<&[DVector<f64>]>,
) -> Result<(Field, SolveReport)> {
    cfg.validate()?;
    if cfg.degree != model.degree {
        return Err(Error::DegreeMismatch {
            expected: cfg.degree.into(),
            actual: model.degree.into(),
        });
    }
    let start = Instant::now();
    let degree = model.degree;
    let d = degree.dim();
    let n = model.len();
    let exec = cfg.execution;

    let init: Vec<f64> = match initial {
        Some(v) => {
            if v.len() != n || v.iter().any(|c| c.len() != d) {
                return Err(Error::invalid(format!(
                    "initial field must have {n} vectors of length {d}"
                )));
            }
            v.iter().flat_map(|c| c.iter().copied()).collect()
        }
        None => initial_values(degree, n, cfg),
    };
    let mut state = project_all(degree, &init, exec)?;
    let mut accepted_energy = model.energy(&state.values);
    align_if_better(model, &mut state, &mut accepted_energy);

    let diag = model.diagonal();
    let mean_diag = diag.iter().sum::<f64>() / diag.len() as f64;
    let floor = 1e-3 * mean_diag.max(f64::MIN_POSITIVE);
    let cell_mu: Vec<f64> = (0..n)
        .map(|i| cfg.proximal * (diag[i * d..(i + 1) * d].iter().sum::<f64>() / d as f64).max(floor))
        .collect();
    let linear = model.linear_term();
    let max_cg = ((10.0 * ((3 * n) as f64).sqrt()).ceil() as usize).max(10);

    let initial_stats = stats(model, boundary_scale, &state, &diag);
    let initial_energy = accepted_energy;
    let mut trace = vec![TraceEntry {
        outer: 0,
        phase: Phase::Projection,
        energy: accepted_energy,
        accepted: true,
        cg_iterations: 0,
    }];
    let mut tangents = Tangents::at(degree, &state, exec);
    let mut delta = vec![0.0; 3 * n];
    let mut stiffness = 1.0;
    let mut radius = INITIAL_RADIUS;
    let mut cg_total = 0;
    let mut converged = false;
    let mut outer = 0;

    while outer < cfg.outer_iterations {
        outer += 1;
        let mu: Vec<f64> = cell_mu.iter().map(|m| stiffness * m).collect();
        let blocks = tangents.block_inverses(model, &mu);
        // The local model works with E/2: its gradient in δ is Tᵀ(Hy − g)
        // and its Hessian TᵀHT plus the curvature of each orbit.
        let hy = model.apply(&state.values);
        let resid: Vec<f64> = linear.iter().zip(&hy).map(|(g, h)| g - h).collect();
        let neg: Vec<f64> = resid.iter().map(|v| -v).collect();
        let curvature = tangents.curvature(&neg);
        let rhs = tangents.reduce(&resid);
        let hessian = |v: &[f64]| {
            let mut w = tangents.reduce(&model.apply(&tangents.expand(v)));
            for i in 0..n {
                let vi = nalgebra::Vector3::new(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
                let cv = curvature[i] * vi;
                for k in 0..3 {
                    w[3 * i + k] += cv[k];
                }
            }
            w
        };
        let damped = |v: &[f64]| {
            let mut w = hessian(v);
            for i in 0..n {
                let gv = tangents.gram_times(&v[3 * i..3 * i + 3]);
                for k in 0..3 {
                    w[3 * i + k] += mu[i] * gv[k];
                }
            }
            w
        };
        let precondition = |r: &[f64]| {
            let mut z = vec![0.0; r.len()];
            for i in 0..n {
                let v = blocks[i] * nalgebra::Vector3::new(r[3 * i], r[3 * i + 1], r[3 * i + 2]);
                z[3 * i..3 * i + 3].copy_from_slice(v.as_slice());
            }
            z
        };
        let (iters, indefinite) = pcg(exec, damped, precondition, &rhs, &mut delta, cfg.linear_tolerance, max_cg);
        cg_total += iters;
        let step = tangents.expand(&delta);
        let x: Vec<f64> = state.values.iter().zip(&step).map(|(y, s)| y + s).collect();
        trace.push(TraceEntry {
            outer,
            phase: Phase::Cg,
            energy: model.energy(&x),
            accepted: true,
            cg_iterations: iters,
        });
        if let Some(p) = &indefinite {
            // Follow the direction of negative curvature downhill, with the
            // largest per-cell rotation capped at `radius`.
            let kd = damped(&delta);
            let slope: f64 = p.iter().zip(rhs.iter().zip(&kd)).map(|(p, (r, k))| p * (r - k)).sum();
            let sign = if slope < 0.0 { -1.0 } else { 1.0 };
            let largest = (0..n)
                .map(|i| (p[3 * i] * p[3 * i] + p[3 * i + 1] * p[3 * i + 1] + p[3 * i + 2] * p[3 * i + 2]).sqrt())
                .fold(0.0f64, f64::max);
            if largest > 0.0 {
                let t = sign * radius / largest;
                delta.iter_mut().zip(p).for_each(|(d, p)| *d += t * p);
            }
        }
        if outer % cfg.projection_period != 0 && outer != cfg.outer_iterations {
            continue;
        }
        let hd = hessian(&delta);
        let predicted = 2.0 * (exec.dot(&rhs, &delta) - 0.5 * exec.dot(&delta, &hd));
        let moved: Vec<Matrix3<f64>> = (0..n)
            .map(|i| {
                let v = nalgebra::Vector3::new(delta[3 * i], delta[3 * i + 1], delta[3 * i + 2]);
                state.rotations[i] * nalgebra::Rotation3::from_scaled_axis(v).into_inner()
            })
            .collect();
        let values = exec
            .map_range(n, |i| {
                let h = embed_rotation(degree, &moved[i]);
                h.iter().map(|v| v * state.signs[i]).collect::<Vec<f64>>()
            })
            .concat();
        let mut next = Projected {
            values,
            rotations: moved,
            signs: state.signs.clone(),
        };
        let mut energy = model.energy(&next.values);
        align_if_better(model, &mut next, &mut energy);
        let accepted = energy <= accepted_energy;
        trace.push(TraceEntry {
            outer,
            phase: Phase::Projection,
            energy,
            accepted,
            cg_iterations: 0,
        });
        if accepted {
            let decrease = accepted_energy - energy;
            let ratio = if predicted > 0.0 { decrease / predicted } else { 1.0 };
            state = next;
            tangents = Tangents::at(degree, &state, exec);
            accepted_energy = energy;
            if indefinite.is_some() {
                radius = (2.0 * radius).min(INITIAL_RADIUS);
            } else if ratio > 0.75 {
                stiffness = (stiffness / 3.0).max(MIN_STIFFNESS);
            } else if ratio < 0.25 {
                stiffness *= 2.0;
            }
            if decrease <= REL_DECREASE_STOP * accepted_energy.abs().max(ENERGY_FLOOR) {
                converged = true;
            }
        } else if indefinite.is_some() {
            radius /= 4.0;
            stiffness *= 4.0;
            if radius < MIN_RADIUS {
                converged = true;
            }
        } else {
            stiffness *= 4.0;
            if stiffness > MAX_STIFFNESS {
                // No step size we try lowers the energy.
                converged = true;
            }
        }
        delta.iter_mut().for_each(|v| *v = 0.0);
        if converged {
            break;
        }
    }

    let final_stats = stats(model, boundary_scale, &state, &diag);
    if !converged {
        log::warn!("solve stopped after {outer} outer iterations without converging");
    }
    let coeffs = state
        .values
        .chunks_exact(d)
        .map(|c| HarmonicCoeffs::new(degree, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let report = SolveReport {
        level: 0,
        cells: n,
        boundary_cells: model.terms.iter().filter(|t| t.is_some()).count(),
        trace,
        outer_iterations: outer,
        cg_iterations: cg_total,
        energy: accepted_energy,
        initial_energy,
        residual: final_stats.residual,
        initial_residual: initial_stats.residual,
        frame_residual_mean: final_stats.frame_mean,
        frame_residual_max: final_stats.frame_max,
        boundary_penalty_per_area: final_stats.penalty_per_area,
        converged,
        wall_time_s: start.elapsed().as_secs_f64(),
        reduction_order: format!(
            "{} cells in index order; sums in fixed chunks of {}",
            if exec.is_parallel() { "parallel map over" } else { "sequential loop over" },
            crate::exec::REDUCTION_CHUNK
        ),
    };
    Ok((
        Field {
            degree,
            level: 0,
            coeffs,
            rotations: state.rotations,
        },
        report,
    ))
}

/// Solves level 0 from the configured initialization, then each finer level
/// from the prolonged previous solution.
pub fn solve_coarse_to_fine(grid: &GridHierarchy, cfg: &SolveConfig) -> Result<(Field, Vec<SolveReport>)> {
    let mut reports = Vec::new();
    let (mut field, r) = solve_level(grid, 0, cfg, None)?;
    reports.push(r);
    let fallback = reference(cfg.degree).into_vector();
    for level in 1..=grid.max_level() as usize {
        let init = grid.prolong(level, &field.vectors(), &fallback)?;
        let (f, r) = solve_level(grid, level, cfg, Some(&init))?;
        field = f;
        reports.push(r);
    }
    Ok((field, reports))
}

/// Direct solve on the finest level only.
pub fn solve_flat(grid: &GridHierarchy, cfg: &SolveConfig) -> Result<(Field, SolveReport)> {
    solve_level(grid, grid.max_level() as usize, cfg, None)
}
