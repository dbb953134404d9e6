//! Frames as rotated reference harmonics, and the projection back.
//!
//! A frame with Euler angles `(α, β, γ)` embeds as
//! `h = R_x(α)·R_y(β)·R_z(γ)·h̃`. Because of how `R_y` is defined the
//! corresponding 3D rotation is `Qx(α)·Qy(−β)·Qz(γ)`;
//! [`FrameOrientation::rotation`] returns that matrix.
//!
//! Recovery fits a rotation to an arbitrary coefficient vector: seed from a
//! fixed Euler grid, then polish with Levenberg–Marquardt steps taken as
//! body-frame rotation increments (no gimbal lock in the refinement).

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::LazyLock;

use nalgebra::{DVector, Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sh_rotation::{
    generators, qx, qy, qz, rot_x, rot_y, rot_z, Degree, HarmonicCoeffs, ShLift,
};

/// Extrinsic Euler angles, composed as `R_x(α)·R_y(β)·R_z(γ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameOrientation {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

impl FrameOrientation {
    pub const IDENTITY: FrameOrientation = FrameOrientation {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
    };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        FrameOrientation {
            alpha,
            beta,
            gamma,
        }
    }

    /// Same angles wrapped into `[−π, π)`.
    pub fn canonical(self) -> Self {
        FrameOrientation {
            alpha: wrap_angle(self.alpha),
            beta: wrap_angle(self.beta),
            gamma: wrap_angle(self.gamma),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite() && self.gamma.is_finite()
    }

    /// The 3D rotation represented by [`embed_frame`] of these angles.
    pub fn rotation(&self) -> Matrix3<f64> {
        qx(self.alpha) * qy(-self.beta) * qz(self.gamma)
    }

    /// Inverse of [`FrameOrientation::rotation`], canonical angles.
    pub fn from_rotation(m: &Matrix3<f64>) -> Self {
        // m = Qx(a)·Qy(b)·Qz(c), frame β = −b
        let cb = m[(0, 0)].hypot(m[(0, 1)]);
        let b = m[(0, 2)].atan2(cb);
        let (a, c) = if cb < 1e-9 {
            (m[(2, 1)].atan2(m[(1, 1)]), 0.0)
        } else {
            ((-m[(1, 2)]).atan2(m[(2, 2)]), (-m[(0, 1)]).atan2(m[(0, 0)]))
        };
        FrameOrientation::new(a, -b, c).canonical()
    }
}

/// The axis-aligned reference harmonic `h̃`.
pub fn reference(degree: Degree) -> HarmonicCoeffs {
    let mut v = vec![0.0; degree.dim()];
    match degree {
        Degree::Four => {
            v[4] = (7.0f64 / 12.0).sqrt();
            v[8] = (5.0f64 / 12.0).sqrt();
        }
        Degree::Three => v[1] = 1.0,
    }
    HarmonicCoeffs::new(degree, v).expect("reference vector is well formed")
}

/// `R_x(α)·R_y(β)·R_z(γ)·h̃`.
pub fn embed_frame(degree: Degree, f: &FrameOrientation) -> HarmonicCoeffs {
    let rot = &(&rot_x(degree, f.alpha) * &rot_y(degree, f.beta)) * &rot_z(degree, f.gamma);
    rot.apply(&reference(degree)).expect("same degree")
}

/// The three frame axes: columns of [`FrameOrientation::rotation`].
pub fn frame_axes(f: &FrameOrientation) -> [Vector3<f64>; 3] {
    let m = f.rotation();
    [
        m.column(0).into_owned(),
        m.column(1).into_owned(),
        m.column(2).into_owned(),
    ]
}

/// The 24 rotations mapping the coordinate axes onto themselves.
pub fn octahedral_group() -> Vec<Matrix3<f64>> {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(24);
    for p in PERMS {
        for signs in 0..8u32 {
            let mut m = Matrix3::zeros();
            for (row, &col) in p.iter().enumerate() {
                m[(row, col)] = if signs >> row & 1 == 1 { -1.0 } else { 1.0 };
            }
            if m.determinant() > 0.0 {
                out.push(m);
            }
        }
    }
    out
}

/// Result of fitting a frame to a coefficient vector.
#[derive(Clone, Debug)]
pub struct Projection {
    pub rotation: Matrix3<f64>,
    /// `±1`; always `+1` for degree 4.
    pub sign: f64,
    /// `‖sign·embed − h/‖h‖‖₂`.
    pub residual: f64,
    /// `sign·embed`, the nearest manifold point (unit norm).
    pub embedded: Vec<f64>,
}

/// Seeds and constants for rotation fitting at one degree. Built once.
pub struct FrameProjector {
    degree: Degree,
    reference: Vec<f64>,
    tangents: [Vec<f64>; 3],
    gram_inv: Matrix3<f64>,
    seeds: Vec<(Matrix3<f64>, Vec<f64>)>,
}

const SEED_ALPHA: usize = 16;
const SEED_BETA: usize = 9;
const SEED_GAMMA: usize = 7;
const SEEDS_REFINED: usize = 4;
const MAX_LM_STEPS: usize = 60;

static PROJECTORS: LazyLock<[FrameProjector; 2]> =
    LazyLock::new(|| Degree::ALL.map(FrameProjector::build));

impl FrameProjector {
    pub fn get(degree: Degree) -> &'static FrameProjector {
        &PROJECTORS[match degree {
            Degree::Three => 0,
            Degree::Four => 1,
        }]
    }

    fn build(degree: Degree) -> Self {
        let h = reference(degree);
        let gens = generators(degree);
        let tangents = gens.map(|g| (g * h.vector()).as_slice().to_vec());
        let mut gram = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                gram[(i, j)] = dot(&tangents[i], &tangents[j]);
            }
        }
        let gram_inv = gram.try_inverse().expect("orbit tangent space is 3D");
        let reference = h.as_slice().to_vec();
        // γ only needs a quarter turn: R_z(π/2) maps h̃ to ±h̃.
        let mut seeds = Vec::with_capacity(SEED_ALPHA * SEED_BETA * SEED_GAMMA);
        for i in 0..SEED_ALPHA {
            let alpha = -PI + 2.0 * PI * i as f64 / SEED_ALPHA as f64;
            for j in 0..SEED_BETA {
                let beta = -FRAC_PI_2 + PI * j as f64 / (SEED_BETA - 1) as f64;
                for k in 0..SEED_GAMMA {
                    let gamma = FRAC_PI_2 * k as f64 / SEED_GAMMA as f64;
                    let q = FrameOrientation::new(alpha, beta, gamma).rotation();
                    let e = ShLift::new(degree, &q).apply(&reference);
                    seeds.push((q, e));
                }
            }
        }
        FrameProjector {
            degree,
            reference,
            tangents,
            gram_inv,
            seeds,
        }
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    pub fn seed_count(&self) -> usize {
        self.seeds.len()
    }

    fn score(&self, e: &[f64], t: &[f64]) -> f64 {
        let d = dot(e, t);
        match self.degree {
            Degree::Four => d,
            Degree::Three => d.abs(),
        }
    }

    /// Cost `‖s·e − t‖²` and the sign achieving it, for unit `e`, `t`.
    fn cost(&self, e: &[f64], t: &[f64]) -> (f64, f64) {
        let s = match self.degree {
            Degree::Four => 1.0,
            Degree::Three => {
                if dot(e, t) < 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
        };
        let c = e.iter().zip(t).map(|(a, b)| (s * a - b).powi(2)).sum();
        (c, s)
    }

    fn refine(&self, target: &[f64], start: Matrix3<f64>) -> (UnitQuaternion<f64>, f64) {
        let mut q = UnitQuaternion::from_matrix(&start);
        let eval = |q: &UnitQuaternion<f64>| {
            let lift = ShLift::new(self.degree, &q.to_rotation_matrix().into_inner());
            let e = lift.apply(&self.reference);
            let (c, s) = self.cost(&e, target);
            (lift, e, c, s)
        };
        let (mut lift, mut e, mut cost, mut sign) = eval(&q);
        let mut lambda = 1e-4;
        for _ in 0..MAX_LM_STEPS {
            if cost < 1e-30 {
                break;
            }
            // J_k = s·S(Q)·G_k·h̃; JᵀJ equals the constant tangent Gram matrix.
            let mut jtr = Vector3::zeros();
            for k in 0..3 {
                let jk = lift.apply(&self.tangents[k]);
                jtr[k] = jk
                    .iter()
                    .zip(e.iter().zip(target))
                    .map(|(j, (ei, ti))| sign * j * (sign * ei - ti))
                    .sum();
            }
            let gn_step = -(self.gram_inv * jtr);
            let mut accepted = false;
            while lambda < 1e6 {
                let step = gn_step / (1.0 + lambda);
                let trial = q * UnitQuaternion::from_scaled_axis(step);
                let (l2, e2, c2, s2) = eval(&trial);
                if c2 < cost {
                    let gain = cost - c2;
                    q = trial;
                    lift = l2;
                    e = e2;
                    sign = s2;
                    cost = c2;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if step.norm() < 1e-15 || gain < 1e-32 {
                        return (q, cost);
                    }
                    break;
                }
                lambda *= 10.0;
            }
            if !accepted {
                break;
            }
        }
        (q, cost)
    }

    /// Fits the nearest frame to `h`, optionally warm-started from `hint`.
    pub fn project(&self, h: &[f64], hint: Option<&Matrix3<f64>>) -> Result<Projection> {
        if h.len() != self.degree.dim() {
            return Err(Error::invalid(format!(
                "expected {} coefficients, got {}",
                self.degree.dim(),
                h.len()
            )));
        }
        let norm = h.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 1e-9) {
            return Err(Error::Degenerate(format!(
                "cannot recover a frame from a vector of norm {norm:e}"
            )));
        }
        let target: Vec<f64> = h.iter().map(|x| x / norm).collect();

        let mut best: Option<(UnitQuaternion<f64>, f64)> = None;
        fn consider(best: &mut Option<(UnitQuaternion<f64>, f64)>, cand: (UnitQuaternion<f64>, f64)) {
            if best.as_ref().is_none_or(|b| cand.1 < b.1) {
                *best = Some(cand);
            }
        }
        if let Some(q0) = hint {
            consider(&mut best, self.refine(&target, *q0));
        }

        let mut ranked: Vec<(f64, usize)> = self
            .seeds
            .iter()
            .enumerate()
            .map(|(i, (_, e))| (self.score(e, &target), i))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        ranked.select_nth_unstable_by(SEEDS_REFINED - 1, order);
        let top = &mut ranked[..SEEDS_REFINED];
        top.sort_by(order);
        let current = best.as_ref().map(|b| b.1);
        // A warm start that already beats the best seed needs no global search.
        let seed_cost = 2.0 - 2.0 * top[0].0;
        if current.is_none_or(|c| c > 1e-20 && seed_cost < c) {
            for &(_, i) in top.iter() {
                consider(&mut best, self.refine(&target, self.seeds[i].0));
            }
        }

        let (q, _) = best.expect("at least one candidate");
        let rotation = q.to_rotation_matrix().into_inner();
        let e = ShLift::new(self.degree, &rotation).apply(&self.reference);
        let (cost, sign) = self.cost(&e, &target);
        Ok(Projection {
            rotation,
            sign,
            residual: cost.max(0.0).sqrt(),
            embedded: e.iter().map(|x| sign * x).collect(),
        })
    }
}

impl FrameProjector {
    /// Tangent vectors `sign·lift(rotation)·G_k·h̃` of the frame orbit, the
    /// derivatives along body-frame rotation increments.
    pub fn tangent_basis(&self, rotation: &Matrix3<f64>, sign: f64) -> [Vec<f64>; 3] {
        let lift = ShLift::new(self.degree, rotation);
        self.tangents.each_ref().map(|t| {
            let mut v = lift.apply(t);
            v.iter_mut().for_each(|x| *x *= sign);
            v
        })
    }

    /// Gram matrix of [`FrameProjector::tangent_basis`], the same at every
    /// point of the orbit.
    pub fn tangent_gram(&self) -> Matrix3<f64> {
        self.gram_inv.try_inverse().expect("invertible")
    }

    /// `‖P_T g‖` where `P_T` projects onto the tangent space of the frame
    /// orbit at `sign·lift(rotation)·h̃`.
    pub fn tangent_norm(&self, rotation: &Matrix3<f64>, g: &[f64]) -> f64 {
        let lift = ShLift::new(self.degree, rotation);
        let mut c = Vector3::zeros();
        for k in 0..3 {
            c[k] = dot(&lift.apply(&self.tangents[k]), g);
        }
        c.dot(&(self.gram_inv * c)).max(0.0).sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nearest frame to `h` (up to scale, and up to sign for degree 3) and the
/// attained residual `‖±embed_frame(f) − h/‖h‖‖₂`.
pub fn recover_frame(h: &HarmonicCoeffs) -> Result<(FrameOrientation, f64)> {
    recover(h, None)
}

/// [`recover_frame`] warm-started from a nearby rotation.
pub fn recover_frame_near(h: &HarmonicCoeffs, hint: &Matrix3<f64>) -> Result<(FrameOrientation, f64)> {
    recover(h, Some(hint))
}

fn recover(h: &HarmonicCoeffs, hint: Option<&Matrix3<f64>>) -> Result<(FrameOrientation, f64)> {
    let degree = h.degree();
    let p = FrameProjector::get(degree).project(h.as_slice(), hint)?;
    let f = FrameOrientation::from_rotation(&p.rotation);
    let norm = h.norm();
    let e = embed_frame(degree, &f);
    let target = h.vector() / norm;
    let plus = (e.vector() - &target).norm();
    let residual = match degree {
        Degree::Four => plus,
        Degree::Three => plus.min((e.vector() + &target).norm()),
    };
    Ok((f, residual))
}

/// Whether two frames coincide as frames (equal embeddings, up to sign for
/// degree 3).
pub fn frames_equivalent(degree: Degree, a: &FrameOrientation, b: &FrameOrientation, tol: f64) -> bool {
    let ea = embed_frame(degree, a).into_vector();
    let eb = embed_frame(degree, b).into_vector();
    let d = (&ea - &eb).amax();
    match degree {
        Degree::Four => d < tol,
        Degree::Three => d < tol || (&ea + &eb).amax() < tol,
    }
}

/// `embed` into a flat vector, for callers working on raw slices.
pub fn embed_rotation(degree: Degree, q: &Matrix3<f64>) -> DVector<f64> {
    DVector::from_vec(ShLift::new(degree, q).apply(reference(degree).as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_vectors() {
        let h4 = reference(Degree::Four);
        assert_eq!(h4.as_slice()[4], (7.0f64 / 12.0).sqrt());
        assert_eq!(h4.as_slice()[8], (5.0f64 / 12.0).sqrt());
        assert!((h4.norm() - 1.0).abs() < 1e-15);
        assert_eq!(reference(Degree::Three).as_slice(), &[0., 1., 0., 0., 0., 0., 0.]);
    }

    #[test]
    fn embed_identity_is_reference() {
        for d in Degree::ALL {
            let e = embed_frame(d, &FrameOrientation::IDENTITY);
            assert!((e.vector() - reference(d).vector()).amax() < 1e-15);
        }
    }

    #[test]
    fn embed_z_rotation_octupole() {
        // Literal R_z(π/4) on h̃: cos(π/2)·e₂ − sin(π/2)·e₆.
        let e = embed_frame(Degree::Three, &FrameOrientation::new(0.0, 0.0, PI / 4.0));
        let want = [0., 0., 0., 0., 0., -1., 0.];
        for (a, b) in e.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn embed_z_rotation_degree4_formula() {
        let r = (5.0f64 / 12.0).sqrt();
        for &g in &[0.0, 0.3, 1.1, -2.0] {
            let e = embed_frame(Degree::Four, &FrameOrientation::new(0.0, 0.0, g));
            let mut want = vec![0.0; 9];
            want[4] = (7.0f64 / 12.0).sqrt();
            want[0] = r * (4.0 * g).sin();
            want[8] = r * (4.0 * g).cos();
            for (a, b) in e.as_slice().iter().zip(&want) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn embed_agrees_with_lift_of_rotation() {
        let f = FrameOrientation::new(0.4, -1.3, 2.1);
        for d in Degree::ALL {
            let a = embed_frame(d, &f).into_vector();
            let b = embed_rotation(d, &f.rotation());
            assert!((a - b).amax() < 1e-13);
        }
    }

    #[test]
    fn euler_round_trip() {
        for &(a, b, c) in &[(0.3, -0.2, 0.9), (3.0, 1.5, -3.1), (0.0, FRAC_PI_2, 0.7), (1.0, -FRAC_PI_2, 0.2)] {
            let f = FrameOrientation::new(a, b, c);
            let g = FrameOrientation::from_rotation(&f.rotation());
            assert!((f.rotation() - g.rotation()).amax() < 1e-9);
        }
    }

    #[test]
    fn wrap_into_canonical_range() {
        let f = FrameOrientation::new(PI, -PI, 7.0).canonical();
        assert_eq!(f.alpha, -PI);
        assert_eq!(f.beta, -PI);
        assert!((f.gamma - (7.0 - 2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn octahedral_group_has_24_rotations() {
        let g = octahedral_group();
        assert_eq!(g.len(), 24);
        for m in &g {
            assert!((m.transpose() * m - Matrix3::identity()).amax() < 1e-15);
        }
    }

    #[test]
    fn octahedral_invariance() {
        let f = FrameOrientation::new(0.7, 0.2, -1.4);
        for d in Degree::ALL {
            let base = embed_frame(d, &f).into_vector();
            for s in octahedral_group() {
                let e = embed_rotation(d, &(f.rotation() * s));
                let close = (&e - &base).amax() < 1e-10;
                let flipped = (&e + &base).amax() < 1e-10;
                match d {
                    Degree::Four => assert!(close),
                    Degree::Three => assert!(close || flipped),
                }
            }
        }
    }

    #[test]
    fn frame_axes_properties() {
        let id = frame_axes(&FrameOrientation::IDENTITY);
        assert_eq!(id, [Vector3::x(), Vector3::y(), Vector3::z()]);
        let quarter = frame_axes(&FrameOrientation::new(0.0, 0.0, FRAC_PI_2));
        assert!((quarter[0] - Vector3::y()).amax() < 1e-15);
        assert!((quarter[1] + Vector3::x()).amax() < 1e-15);
        assert!(frames_equivalent(
            Degree::Four,
            &FrameOrientation::IDENTITY,
            &FrameOrientation::new(0.0, 0.0, FRAC_PI_2),
            1e-12
        ));
        let m = FrameOrientation::new(0.1, 0.2, 0.3).rotation();
        assert!((m.transpose() * m - Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn recover_on_manifold() {
        let f = FrameOrientation::new(0.3, -0.2, 0.9);
        let h = embed_frame(Degree::Four, &f);
        let (g, r) = recover_frame(&h).unwrap();
        assert!(r < 1e-8, "residual {r}");
        assert!(frames_equivalent(Degree::Four, &f, &g, 1e-8));
    }

    #[test]
    fn recover_scaled_reference_octupole() {
        let h = reference(Degree::Three).scaled(5.0);
        let (g, r) = recover_frame(&h).unwrap();
        assert!(r < 1e-8);
        assert!(frames_equivalent(Degree::Three, &g, &FrameOrientation::IDENTITY, 1e-8));
        let (g2, _) = recover_frame(&reference(Degree::Three).scaled(-2.0)).unwrap();
        assert!(frames_equivalent(Degree::Three, &g2, &FrameOrientation::IDENTITY, 1e-8));
    }

    #[test]
    fn recover_rejects_zero() {
        let h = HarmonicCoeffs::zeros(Degree::Four);
        assert!(matches!(recover_frame(&h), Err(Error::Degenerate(_))));
    }

    #[test]
    fn projector_seed_grid_size() {
        assert_eq!(FrameProjector::get(Degree::Four).seed_count(), 1008);
    }

    #[test]
    fn warm_start_is_used() {
        let f = FrameOrientation::new(1.0, 0.5, -0.3);
        let h = embed_frame(Degree::Four, &f);
        let p = FrameProjector::get(Degree::Four)
            .project(h.as_slice(), Some(&FrameOrientation::new(1.01, 0.49, -0.31).rotation()))
            .unwrap();
        assert!(p.residual < 1e-10);
    }
}
