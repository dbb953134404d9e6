//! Rotation operators on degree-3 and degree-4 real spherical-harmonic
//! coefficient vectors.
//!
//! Coefficient index `i` carries order `m = i - degree`, so `Y_{d,-d}` comes
//! first. In this basis (real harmonics without the Condon–Shortley phase)
//! `rot_z(γ)` is the lift of the active 3D rotation about +z by `γ`,
//! `rot_x(α)` the lift of the rotation about +x by `α`, and
//! `rot_y(β) = X·R_z(β)·Xᵀ` the lift of the rotation about +y by **`-β`**.
//! [`lift`] hides this when starting from an ordinary 3×3 rotation.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::ops::Mul;
use std::sync::LazyLock;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Harmonic degree of the frame representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Degree {
    /// Octupoles, 7 coefficients.
    Three,
    /// 9 coefficients.
    Four,
}

impl Degree {
    pub const ALL: [Degree; 2] = [Degree::Three, Degree::Four];

    pub fn order(self) -> usize {
        match self {
            Degree::Three => 3,
            Degree::Four => 4,
        }
    }

    /// Length of a coefficient vector, `2·degree + 1`.
    pub fn dim(self) -> usize {
        2 * self.order() + 1
    }
}

impl TryFrom<u8> for Degree {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            3 => Ok(Degree::Three),
            4 => Ok(Degree::Four),
            other => Err(Error::invalid(format!(
                "unsupported harmonic degree {other} (expected 3 or 4)"
            ))),
        }
    }
}

impl TryFrom<u32> for Degree {
    type Error = Error;

    fn try_from(value: u32) -> Result<Self> {
        u8::try_from(value)
            .map_err(|_| Error::invalid(format!("unsupported harmonic degree {value}")))
            .and_then(Degree::try_from)
    }
}

impl From<Degree> for u8 {
    fn from(d: Degree) -> u8 {
        d.order() as u8
    }
}

impl fmt::Display for Degree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.order())
    }
}

/// A direction on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitVector3(Vector3<f64>);

impl UnitVector3 {
    pub const NORM_TOLERANCE: f64 = 1e-12;

    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::from_vector(Vector3::new(x, y, z))
    }

    /// Accepts `v` only if it is already unit length.
    pub fn from_vector(v: Vector3<f64>) -> Result<Self> {
        let n2 = v.norm_squared();
        if !n2.is_finite() || (n2 - 1.0).abs() > Self::NORM_TOLERANCE {
            return Err(Error::invalid(format!(
                "vector {v:?} is not unit length (|v|² = {n2})"
            )));
        }
        Ok(UnitVector3(v))
    }

    pub fn normalize(v: Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(Error::Degenerate(format!("cannot normalize {v:?}")));
        }
        Ok(UnitVector3(v / n))
    }

    pub fn x_axis() -> Self {
        UnitVector3(Vector3::x())
    }

    pub fn y_axis() -> Self {
        UnitVector3(Vector3::y())
    }

    pub fn z_axis() -> Self {
        UnitVector3(Vector3::z())
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Vector3<f64> {
        self.0
    }
}

impl std::ops::Neg for UnitVector3 {
    type Output = UnitVector3;

    fn neg(self) -> UnitVector3 {
        UnitVector3(-self.0)
    }
}

/// Coefficients of a real spherical harmonic of degree 3 or 4.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicCoeffs {
    degree: Degree,
    coeffs: DVector<f64>,
}

impl HarmonicCoeffs {
    pub fn new(degree: Degree, coeffs: Vec<f64>) -> Result<Self> {
        Self::from_vector(degree, DVector::from_vec(coeffs))
    }

    pub fn from_vector(degree: Degree, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.len() != degree.dim() {
            return Err(Error::invalid(format!(
                "degree {degree} needs {} coefficients, got {}",
                degree.dim(),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite harmonic coefficient"));
        }
        Ok(HarmonicCoeffs { degree, coeffs })
    }

    pub fn zeros(degree: Degree) -> Self {
        HarmonicCoeffs {
            degree,
            coeffs: DVector::zeros(degree.dim()),
        }
    }

    /// The `i`-th standard basis vector.
    pub fn basis(degree: Degree, i: usize) -> Self {
        let mut h = Self::zeros(degree);
        h.coeffs[i] = 1.0;
        h
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    pub fn as_slice(&self) -> &[f64] {
        self.coeffs.as_slice()
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.coeffs
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }

    pub fn dot(&self, other: &HarmonicCoeffs) -> f64 {
        self.coeffs.dot(&other.coeffs)
    }

    pub fn scaled(&self, s: f64) -> HarmonicCoeffs {
        HarmonicCoeffs {
            degree: self.degree,
            coeffs: &self.coeffs * s,
        }
    }
}

/// An orthogonal operator on coefficient space induced by a 3D rotation.
#[derive(Clone, Debug, PartialEq)]
pub struct SHRotation {
    degree: Degree,
    matrix: DMatrix<f64>,
}

impl SHRotation {
    pub fn identity(degree: Degree) -> Self {
        SHRotation {
            degree,
            matrix: DMatrix::identity(degree.dim(), degree.dim()),
        }
    }

    pub(crate) fn from_matrix(degree: Degree, matrix: DMatrix<f64>) -> Self {
        debug_assert_eq!(matrix.nrows(), degree.dim());
        SHRotation { degree, matrix }
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn transpose(&self) -> SHRotation {
        SHRotation {
            degree: self.degree,
            matrix: self.matrix.transpose(),
        }
    }

    pub fn apply(&self, h: &HarmonicCoeffs) -> Result<HarmonicCoeffs> {
        check_degree(self.degree, h.degree)?;
        Ok(HarmonicCoeffs {
            degree: self.degree,
            coeffs: &self.matrix * &h.coeffs,
        })
    }

    /// `‖MᵀM − I‖∞`.
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.degree.dim();
        (self.matrix.transpose() * &self.matrix - DMatrix::<f64>::identity(n, n)).amax()
    }
}

impl Mul<&SHRotation> for &SHRotation {
    type Output = SHRotation;

    fn mul(self, rhs: &SHRotation) -> SHRotation {
        assert_eq!(self.degree, rhs.degree, "composing rotations of different degree");
        SHRotation {
            degree: self.degree,
            matrix: &self.matrix * &rhs.matrix,
        }
    }
}

impl Mul for SHRotation {
    type Output = SHRotation;

    fn mul(self, rhs: SHRotation) -> SHRotation {
        &self * &rhs
    }
}

pub(crate) fn check_degree(expected: Degree, actual: Degree) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DegreeMismatch {
            expected: expected.into(),
            actual: actual.into(),
        })
    }
}

fn rz_matrix(degree: Degree, gamma: f64) -> DMatrix<f64> {
    let d = degree.order();
    let mut m = DMatrix::zeros(degree.dim(), degree.dim());
    m[(d, d)] = 1.0;
    for k in 1..=d {
        let (s, c) = (k as f64 * gamma).sin_cos();
        let (neg, pos) = (d - k, d + k);
        m[(neg, neg)] = c;
        m[(neg, pos)] = s;
        m[(pos, neg)] = -s;
        m[(pos, pos)] = c;
    }
    m
}

/// Applies `R_z(γ)` to `v` in place without forming the matrix.
pub(crate) fn rz_apply(degree: Degree, gamma: f64, v: &mut [f64]) {
    let d = degree.order();
    for k in 1..=d {
        let (s, c) = (k as f64 * gamma).sin_cos();
        let (neg, pos) = (d - k, d + k);
        let (a, b) = (v[neg], v[pos]);
        v[neg] = c * a + s * b;
        v[pos] = c * b - s * a;
    }
}

fn quarter_x_matrix(degree: Degree) -> DMatrix<f64> {
    let s = f64::sqrt;
    match degree {
        Degree::Three => {
            #[rustfmt::skip]
            let rows = [
                0.0,       0.0,  0.0,       s(10.0), 0.0,       -s(6.0),   0.0,
                0.0,      -4.0,  0.0,       0.0,     0.0,        0.0,      0.0,
                0.0,       0.0,  0.0,       s(6.0),  0.0,        s(10.0),  0.0,
               -s(10.0),   0.0, -s(6.0),    0.0,     0.0,        0.0,      0.0,
                0.0,       0.0,  0.0,       0.0,    -1.0,        0.0,     -s(15.0),
                s(6.0),    0.0, -s(10.0),   0.0,     0.0,        0.0,      0.0,
                0.0,       0.0,  0.0,       0.0,    -s(15.0),    0.0,      1.0,
            ];
            DMatrix::from_row_slice(7, 7, &rows) / 4.0
        }
        Degree::Four => {
            let (r2, r5, r7, r14, r35) = (s(2.0), s(5.0), s(7.0), s(14.0), s(35.0));
            #[rustfmt::skip]
            let rows = [
                0.0,        0.0,       0.0,        0.0,      0.0,      2.0 * r14, 0.0,      -2.0 * r2,  0.0,
                0.0,       -6.0,       0.0,        2.0 * r7, 0.0,      0.0,       0.0,       0.0,       0.0,
                0.0,        0.0,       0.0,        0.0,      0.0,      2.0 * r2,  0.0,       2.0 * r14, 0.0,
                0.0,        2.0 * r7,  0.0,        6.0,      0.0,      0.0,       0.0,       0.0,       0.0,
                0.0,        0.0,       0.0,        0.0,      3.0,      0.0,       2.0 * r5,  0.0,       r35,
               -2.0 * r14,  0.0,      -2.0 * r2,   0.0,      0.0,      0.0,       0.0,       0.0,       0.0,
                0.0,        0.0,       0.0,        0.0,      2.0 * r5, 0.0,       4.0,       0.0,      -2.0 * r7,
                2.0 * r2,   0.0,      -2.0 * r14,  0.0,      0.0,      0.0,       0.0,       0.0,       0.0,
                0.0,        0.0,       0.0,        0.0,      r35,      0.0,      -2.0 * r7,  0.0,       1.0,
            ];
            DMatrix::from_row_slice(9, 9, &rows) / 8.0
        }
    }
}

struct Constants {
    quarter_x: DMatrix<f64>,
    quarter_y: DMatrix<f64>,
}

static CONSTANTS: LazyLock<[Constants; 2]> = LazyLock::new(|| {
    Degree::ALL.map(|d| {
        let x = quarter_x_matrix(d);
        let quarter_y = &x * rz_matrix(d, FRAC_PI_2) * x.transpose();
        Constants {
            quarter_x: x,
            quarter_y,
        }
    })
});

fn constants(degree: Degree) -> &'static Constants {
    &CONSTANTS[match degree {
        Degree::Three => 0,
        Degree::Four => 1,
    }]
}

/// `R_z(γ)`: block-diagonal cos kγ / sin kγ rotation.
pub fn rot_z(degree: Degree, gamma: f64) -> SHRotation {
    SHRotation::from_matrix(degree, rz_matrix(degree, gamma))
}

/// The constant `R_x(π/2)` matrix (1/4-scaled 7×7 for degree 3, 1/8-scaled
/// 9×9 for degree 4).
pub fn rot_x_quarter(degree: Degree) -> SHRotation {
    SHRotation::from_matrix(degree, constants(degree).quarter_x.clone())
}

/// `R_y(β) = R_x(π/2) · R_z(β) · R_x(π/2)ᵀ`.
pub fn rot_y(degree: Degree, beta: f64) -> SHRotation {
    let x = &constants(degree).quarter_x;
    SHRotation::from_matrix(degree, x * rz_matrix(degree, beta) * x.transpose())
}

/// `R_x(α) = R_y(π/2)ᵀ · R_z(α) · R_y(π/2)`.
pub fn rot_x(degree: Degree, alpha: f64) -> SHRotation {
    let y = &constants(degree).quarter_y;
    SHRotation::from_matrix(degree, y.transpose() * rz_matrix(degree, alpha) * y)
}

/// SH operator of a rotation taking +z to `n`.
///
/// Built as `R_z(φ)·R_y(−θ)` with `θ = acos n_z`, `φ = atan2(n_y, n_x)`; the
/// sign on `θ` compensates for `R_y(β)` lifting the 3D rotation by `−β`.
/// For `n_z < −1 + 1e-9` the exact `R_x(π)` is returned.
pub fn rot_z_to_n(degree: Degree, n: &UnitVector3) -> SHRotation {
    let v = n.as_vector();
    if v.z < -1.0 + 1e-9 {
        return rot_x(degree, std::f64::consts::PI);
    }
    let theta = v.z.clamp(-1.0, 1.0).acos();
    let phi = v.y.atan2(v.x);
    &rot_z(degree, phi) * &rot_y(degree, -theta)
}

/// Elementary 3D rotations (active, right-handed).
pub fn qx(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn qy(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn qz(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Precomputed lift of a 3D rotation, applicable to vectors without forming
/// the 7×7/9×9 matrix.
#[derive(Clone, Copy, Debug)]
pub struct ShLift {
    degree: Degree,
    // Q = Qz(a)·Qy(b)·Qz(c)·P, with P = Qx(π/2) when `pre_x`, else identity.
    a: f64,
    b: f64,
    c: f64,
    pre_x: bool,
}

impl ShLift {
    pub fn new(degree: Degree, q: &Matrix3<f64>) -> Self {
        // ZYZ angles lose precision near b ∈ {0, π}; factor out a quarter turn
        // about x so the decomposed rotation stays away from that.
        let pre_x = q[(2, 2)].abs() > 0.9;
        let m = if pre_x { q * qx(-FRAC_PI_2) } else { *q };
        let b = m[(2, 2)].clamp(-1.0, 1.0).acos();
        let a = m[(1, 2)].atan2(m[(0, 2)]);
        let c = m[(2, 1)].atan2(-m[(2, 0)]);
        ShLift {
            degree,
            a,
            b,
            c,
            pre_x,
        }
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    /// `v ← lift(Q)·v`.
    pub fn apply_in_place(&self, v: &mut [f64]) {
        let consts = constants(self.degree);
        let x = &consts.quarter_x;
        let n = self.degree.dim();
        let mut tmp = [0.0f64; 9];
        if self.pre_x {
            matvec(x, v, &mut tmp[..n]);
            v.copy_from_slice(&tmp[..n]);
        }
        rz_apply(self.degree, self.c, v);
        // R_y(−b) = X · R_z(−b) · Xᵀ
        matvec_t(x, v, &mut tmp[..n]);
        rz_apply(self.degree, -self.b, &mut tmp[..n]);
        matvec(x, &tmp[..n], v);
        rz_apply(self.degree, self.a, v);
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.apply_in_place(&mut out);
        out
    }

    pub fn rotation(&self) -> SHRotation {
        let d = self.degree;
        let mut m = &(&rot_z(d, self.a) * &rot_y(d, -self.b)) * &rot_z(d, self.c);
        if self.pre_x {
            m = &m * &rot_x_quarter(d);
        }
        m
    }
}

fn matvec(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..n {
            acc += m[(i, j)] * v[j];
        }
        *o = acc;
    }
}

fn matvec_t(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..n {
            acc += m[(j, i)] * v[j];
        }
        *o = acc;
    }
}

/// SH operator induced by an arbitrary 3D rotation matrix.
pub fn lift(degree: Degree, q: &Matrix3<f64>) -> SHRotation {
    ShLift::new(degree, q).rotation()
}

/// Infinitesimal generators `d/dt lift(exp(t·[e_k]×))` at `t = 0` for the
/// x, y and z axes.
pub fn generators(degree: Degree) -> [DMatrix<f64>; 3] {
    let d = degree.order();
    let n = degree.dim();
    let mut gz = DMatrix::zeros(n, n);
    for k in 1..=d {
        gz[(d - k, d + k)] = k as f64;
        gz[(d + k, d - k)] = -(k as f64);
    }
    let consts = constants(degree);
    let (x, y) = (&consts.quarter_x, &consts.quarter_y);
    let gx = y.transpose() * &gz * y;
    // R_y(β) lifts Qy(−β)
    let gy = -(x * &gz * x.transpose());
    [gx, gy, gz]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn degree_parsing() {
        assert_eq!(Degree::try_from(3u8).unwrap(), Degree::Three);
        assert_eq!(Degree::try_from(4u32).unwrap(), Degree::Four);
        assert!(matches!(Degree::try_from(5u8), Err(Error::InvalidArgument(_))));
        assert!(Degree::try_from(300u32).is_err());
        assert_eq!(Degree::Three.dim(), 7);
        assert_eq!(Degree::Four.dim(), 9);
    }

    #[test]
    fn rot_z_zero_is_identity() {
        for d in Degree::ALL {
            assert_eq!(rot_z(d, 0.0), SHRotation::identity(d));
        }
    }

    #[test]
    fn rot_z_on_reference_octupole() {
        // Column 1 of the literal R_z(γ): (0, cos 2γ, 0, 0, 0, −sin 2γ, 0).
        let g = 0.37;
        let h = rot_z(Degree::Three, g)
            .apply(&HarmonicCoeffs::basis(Degree::Three, 1))
            .unwrap();
        let want = [0.0, (2.0 * g).cos(), 0.0, 0.0, 0.0, -(2.0 * g).sin(), 0.0];
        for (a, b) in h.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rot_z_quarter_pi_on_degree4_reference() {
        let r = (7.0f64 / 12.0).sqrt();
        let q = (5.0f64 / 12.0).sqrt();
        let h = HarmonicCoeffs::new(Degree::Four, vec![0., 0., 0., 0., r, 0., 0., 0., q]).unwrap();
        let out = rot_z(Degree::Four, PI / 4.0).apply(&h).unwrap();
        let want = [0., 0., 0., 0., r, 0., 0., 0., -q];
        for (a, b) in out.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn quarter_turn_literal_entries() {
        let x3 = rot_x_quarter(Degree::Three);
        assert!((x3.matrix()[(0, 3)] - 10f64.sqrt() / 4.0).abs() < 1e-15);
        assert_eq!(x3.matrix()[(1, 1)], -1.0);
        let x4 = rot_x_quarter(Degree::Four);
        assert!((x4.matrix()[(4, 4)] - 3.0 / 8.0).abs() < 1e-15);
        assert!((x4.matrix()[(4, 8)] - 35f64.sqrt() / 8.0).abs() < 1e-15);
        for d in Degree::ALL {
            let x = rot_x_quarter(d);
            assert!(x.orthogonality_error() < 1e-15);
            assert!((x.matrix().determinant() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rot_x_half_pi_matches_literal_constant() {
        for d in Degree::ALL {
            let diff = max_diff(rot_x(d, FRAC_PI_2).matrix(), rot_x_quarter(d).matrix());
            assert!(diff < 1e-12, "degree {d}: {diff}");
        }
    }

    #[test]
    fn zero_angles_are_identity() {
        for d in Degree::ALL {
            let id = DMatrix::identity(d.dim(), d.dim());
            assert!(max_diff(rot_y(d, 0.0).matrix(), &id) < 1e-15);
            assert!(max_diff(rot_x(d, 0.0).matrix(), &id) < 1e-15);
        }
    }

    #[test]
    fn z_to_n_special_cases() {
        for d in Degree::ALL {
            let id = DMatrix::identity(d.dim(), d.dim());
            assert!(max_diff(rot_z_to_n(d, &UnitVector3::z_axis()).matrix(), &id) < 1e-15);
            let down = UnitVector3::new(0.0, 0.0, -1.0).unwrap();
            assert!(max_diff(rot_z_to_n(d, &down).matrix(), rot_x(d, PI).matrix()) < 1e-12);
        }
    }

    #[test]
    fn lift_matches_elementary_rotations() {
        for d in Degree::ALL {
            for &t in &[0.0, 0.3, -1.2, 2.9, FRAC_PI_2] {
                assert!(max_diff(lift(d, &qz(t)).matrix(), rot_z(d, t).matrix()) < 1e-12);
                assert!(max_diff(lift(d, &qx(t)).matrix(), rot_x(d, t).matrix()) < 1e-12);
                assert!(max_diff(lift(d, &qy(t)).matrix(), rot_y(d, -t).matrix()) < 1e-12);
            }
        }
    }

    #[test]
    fn lift_apply_matches_matrix() {
        let q = qx(0.4) * qy(-1.1) * qz(2.2);
        for d in Degree::ALL {
            let l = ShLift::new(d, &q);
            let v: Vec<f64> = (0..d.dim()).map(|i| (i as f64 * 0.7).sin()).collect();
            let fast = l.apply(&v);
            let slow = l.rotation().matrix() * DVector::from_column_slice(&v);
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn generators_are_derivatives() {
        let eps = 1e-6;
        for d in Degree::ALL {
            let [gx, gy, gz] = generators(d);
            for (g, q) in [(gx, qx as fn(f64) -> Matrix3<f64>), (gy, qy), (gz, qz)] {
                let fd = (lift(d, &q(eps)).matrix() - lift(d, &q(-eps)).matrix()) / (2.0 * eps);
                assert!(max_diff(&fd, &g) < 1e-7);
            }
        }
    }

    #[test]
    fn unit_vector_validation() {
        assert!(UnitVector3::new(1.0, 1.0, 0.0).is_err());
        assert!(UnitVector3::new(f64::NAN, 0.0, 0.0).is_err());
        assert!(UnitVector3::normalize(Vector3::zeros()).is_err());
        let n = UnitVector3::normalize(Vector3::new(1.0, 2.0, 3.0)).unwrap();
        assert!((n.as_vector().norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coefficient_validation() {
        assert!(HarmonicCoeffs::new(Degree::Three, vec![0.0; 9]).is_err());
        assert!(HarmonicCoeffs::new(Degree::Four, vec![f64::INFINITY; 9]).is_err());
        let r = rot_z(Degree::Four, 0.1);
        let h = HarmonicCoeffs::zeros(Degree::Three);
        assert!(matches!(r.apply(&h), Err(Error::DegreeMismatch { .. })));
    }
}
