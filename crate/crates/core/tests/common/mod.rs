//! Fixtures shared by the integration suites: literal reference matrices
//! and small numeric helpers.

#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::Rng;
use specfield::sh_rotation::{qx, qy, qz};

fn s(x: f64) -> f64 {
    x.sqrt()
}

/// Literal degree-3 `R_x(π/2)`, entries as `(row, col, value)`.
pub fn literal_quarter_x3() -> DMatrix<f64> {
    let entries = [
        (0, 3, s(10.0)),
        (0, 5, -s(6.0)),
        (1, 1, -4.0),
        (2, 3, s(6.0)),
        (2, 5, s(10.0)),
        (3, 0, -s(10.0)),
        (3, 2, -s(6.0)),
        (4, 4, -1.0),
        (4, 6, -s(15.0)),
        (5, 0, s(6.0)),
        (5, 2, -s(10.0)),
        (6, 4, -s(15.0)),
        (6, 6, 1.0),
    ];
    sparse(7, &entries) / 4.0
}

/// Literal degree-4 `R_x(π/2)`.
pub fn literal_quarter_x4() -> DMatrix<f64> {
    let entries = [
        (0, 5, 2.0 * s(14.0)),
        (0, 7, -2.0 * s(2.0)),
        (1, 1, -6.0),
        (1, 3, 2.0 * s(7.0)),
        (2, 5, 2.0 * s(2.0)),
        (2, 7, 2.0 * s(14.0)),
        (3, 1, 2.0 * s(7.0)),
        (3, 3, 6.0),
        (4, 4, 3.0),
        (4, 6, 2.0 * s(5.0)),
        (4, 8, s(35.0)),
        (5, 0, -2.0 * s(14.0)),
        (5, 2, -2.0 * s(2.0)),
        (6, 4, 2.0 * s(5.0)),
        (6, 6, 4.0),
        (6, 8, -2.0 * s(7.0)),
        (7, 0, 2.0 * s(2.0)),
        (7, 2, -2.0 * s(14.0)),
        (8, 4, s(35.0)),
        (8, 6, -2.0 * s(7.0)),
        (8, 8, 1.0),
    ];
    sparse(9, &entries) / 8.0
}

/// Literal three-axis ("cube") accumulated matrix, degree 3.
pub fn literal_cube() -> DMatrix<f64> {
    let r = s(15.0) / 8.0;
    let entries = [
        (0, 0, 21.0 / 8.0),
        (0, 2, r),
        (2, 0, r),
        (2, 2, 19.0 / 8.0),
        (3, 3, 3.0),
        (4, 4, 19.0 / 8.0),
        (4, 6, -r),
        (6, 4, -r),
        (5, 5, 2.0),
        (6, 6, 21.0 / 8.0),
    ];
    sparse(7, &entries)
}

/// Literal y-axis cylinder average, degree 3.
pub fn literal_cylinder() -> DMatrix<f64> {
    let r = s(15.0);
    let entries = [
        (0, 0, 13.0 / 16.0),
        (0, 2, r / 16.0),
        (2, 0, r / 16.0),
        (1, 1, 0.5),
        (2, 2, 11.0 / 16.0),
        (3, 3, 49.0 / 64.0),
        (3, 5, -r / 64.0),
        (5, 3, -r / 64.0),
        (4, 4, 103.0 / 128.0),
        (4, 6, -r / 128.0),
        (6, 4, -r / 128.0),
        (5, 5, 47.0 / 64.0),
        (6, 6, 89.0 / 128.0),
    ];
    sparse(7, &entries)
}

pub const LITERAL_CUBE_EIGENVALUES: [f64; 7] = [0.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0];
pub const LITERAL_CYLINDER_EIGENVALUES: [f64; 7] =
    [0.5, 0.5, 11.0 / 16.0, 11.0 / 16.0, 13.0 / 16.0, 13.0 / 16.0, 1.0];

fn sparse(n: usize, entries: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for &(r, c, v) in entries {
        m[(r, c)] = v;
    }
    m
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// Uniform random rotation from a random unit quaternion.
pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n2: f64 = q.iter().map(|x| x * x).sum();
        if n2 > 1e-4 && n2 <= 1.0 {
            let q = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
            return nalgebra::UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
        }
    }
}

pub fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// The rotation `Qx(α)·Qy(−β)·Qz(γ)` built from elementary matrices.
pub fn euler_rotation(alpha: f64, beta: f64, gamma: f64) -> Matrix3<f64> {
    qx(alpha) * qy(-beta) * qz(gamma)
}

/// Smallest angle, in radians, between `a` and `b·g` over the octahedral
/// group `g`.
pub fn octahedral_distance(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    specfield::frame_repr::octahedral_group()
        .iter()
        .map(|g| {
            let r = a.transpose() * b * g;
            ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
        })
        .fold(f64::INFINITY, f64::min)
}
