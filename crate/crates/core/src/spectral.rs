//! Spectra of accumulated penalty matrices.
//!
//! The three reference configurations, all for octupoles:
//!
//! * cube: three orthogonal unit-weight axis constraints, eigenvalues
//!   `{0, 2, 2, 2, 3, 3, 3}` with null space `Span{h̃}`;
//! * cylinder: normals averaged around an axis, eigenvalues
//!   `{1/2, 1/2, 11/16, 11/16, 13/16, 13/16, 1}`; after the shift the null
//!   space is the rotation family of `h̃` about the axis;
//! * sphere: normals averaged over S², giving `(5/7)·I`.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::penalty::{accumulate, single_constraint, BoundaryPenalty};
use crate::quadrature::{gauss_legendre_on, SphereRule};
use crate::sh_rotation::{rot_z_to_n, Degree, UnitVector3};

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_OFF_TOLERANCE: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralReport {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
    /// Number of eigenvalues below `tolerance`.
    pub null_space_dim: usize,
    pub tolerance: f64,
}

impl SpectralReport {
    pub fn eigenvector(&self, i: usize) -> DVector<f64> {
        self.eigenvectors.column(i).into_owned()
    }

    /// Orthonormal basis of the near-kernel, as columns.
    pub fn null_space(&self) -> DMatrix<f64> {
        self.eigenvectors.columns(0, self.null_space_dim).into_owned()
    }

    /// The `k` eigenvectors with the smallest eigenvalues, as columns.
    pub fn lowest(&self, k: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(0, k).into_owned()
    }
}

impl Serialize for SpectralReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let vectors: Vec<Vec<f64>> = self
            .eigenvectors
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect();
        let mut st = s.serialize_struct("SpectralReport", 4)?;
        st.serialize_field("eigenvalues", &self.eigenvalues)?;
        st.serialize_field("eigenvectors", &vectors)?;
        st.serialize_field("null_space_dim", &self.null_space_dim)?;
        st.serialize_field("tolerance", &self.tolerance)?;
        st.end()
    }
}

/// Default null-space threshold `1e-9 · max(1, ‖A‖₂)`.
pub fn default_tolerance(spectral_norm: f64) -> f64 {
    1e-9 * spectral_norm.max(1.0)
}

/// Full eigendecomposition of a small symmetric matrix by cyclic Jacobi.
pub fn eigen_sym(a: &DMatrix<f64>) -> Result<SpectralReport> {
    let (values, vectors) = jacobi(a)?;
    let norm = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(report_from(values, vectors, default_tolerance(norm)))
}

pub fn eigen_sym_with_tolerance(a: &DMatrix<f64>, tolerance: f64) -> Result<SpectralReport> {
    let (values, vectors) = jacobi(a)?;
    Ok(report_from(values, vectors, tolerance))
}

fn report_from(values: Vec<f64>, vectors: DMatrix<f64>, tolerance: f64) -> SpectralReport {
    let null_space_dim = values.iter().filter(|&&v| v < tolerance).count();
    SpectralReport {
        eigenvalues: values,
        eigenvectors: vectors,
        null_space_dim,
        tolerance,
    }
}

fn jacobi(input: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = input.nrows();
    if input.ncols() != n {
        return Err(Error::invalid("eigen_sym needs a square matrix"));
    }
    let scale = input.amax().max(1.0);
    let asym = (input - input.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::Asymmetric(asym));
    }
    let mut a = (input + input.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let frob = a.norm().max(1.0);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
        }
        if off.sqrt() < JACOBI_OFF_TOLERANCE * frob {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    Ok((values, vectors))
}

/// Eigenvectors of `a` with eigenvalue below `tol`, as orthonormal columns.
pub fn null_space(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    Ok(eigen_sym_with_tolerance(a, tol)?.null_space())
}

/// Largest principal angle between the column spans of `u` and `v`
/// (orthonormal columns). Spaces of different dimension are `π/2` apart.
pub fn max_principal_angle(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    if u.ncols() != v.ncols() || u.nrows() != v.nrows() {
        return std::f64::consts::FRAC_PI_2;
    }
    if u.ncols() == 0 {
        return 0.0;
    }
    // σ_max((I − UUᵀ)V) = sin θ_max, accurate for small angles
    let residual = v - u * (u.transpose() * v);
    let sigma = residual
        .singular_values()
        .iter()
        .fold(0.0f64, |m, s| m.max(*s));
    sigma.min(1.0).asin()
}

/// Gram–Schmidt orthonormalization of the columns of `m`.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for j in 0..out.ncols() {
        let mut col = out.column(j).into_owned();
        for k in 0..j {
            let prev = out.column(k).into_owned();
            col -= &prev * prev.dot(&col);
        }
        let n = col.norm();
        out.set_column(j, &(col / n));
    }
    out
}

/// Three unit-weight degree-3 constraints along x, y and z.
pub fn cube_penalty() -> BoundaryPenalty {
    let ps: Vec<_> = [UnitVector3::x_axis(), UnitVector3::y_axis(), UnitVector3::z_axis()]
        .iter()
        .map(|n| single_constraint(Degree::Three, n, 1.0).expect("unit weight"))
        .collect();
    accumulate(&ps).expect("same degree")
}

/// Analytic cube matrix.
pub fn cube_matrix_exact() -> DMatrix<f64> {
    let r = 15f64.sqrt();
    let mut m = DMatrix::zeros(7, 7);
    m[(0, 0)] = 21.0 / 8.0;
    m[(0, 2)] = r / 8.0;
    m[(2, 0)] = r / 8.0;
    m[(2, 2)] = 19.0 / 8.0;
    m[(3, 3)] = 3.0;
    m[(4, 4)] = 19.0 / 8.0;
    m[(4, 6)] = -r / 8.0;
    m[(6, 4)] = -r / 8.0;
    m[(5, 5)] = 2.0;
    m[(6, 6)] = 21.0 / 8.0;
    m
}

pub const CUBE_EIGENVALUES: [f64; 7] = [0.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0];

/// Analytic y-axis cylinder average.
pub fn cylinder_matrix_exact() -> DMatrix<f64> {
    let r = 15f64.sqrt();
    let mut m = DMatrix::zeros(7, 7);
    m[(0, 0)] = 13.0 / 16.0;
    m[(0, 2)] = r / 16.0;
    m[(2, 0)] = r / 16.0;
    m[(1, 1)] = 0.5;
    m[(2, 2)] = 11.0 / 16.0;
    m[(3, 3)] = 49.0 / 64.0;
    m[(3, 5)] = -r / 64.0;
    m[(5, 3)] = -r / 64.0;
    m[(4, 4)] = 103.0 / 128.0;
    m[(4, 6)] = -r / 128.0;
    m[(6, 4)] = -r / 128.0;
    m[(5, 5)] = 47.0 / 64.0;
    m[(6, 6)] = 89.0 / 128.0;
    m
}

pub const CYLINDER_EIGENVALUES: [f64; 7] = [
    0.5,
    0.5,
    11.0 / 16.0,
    11.0 / 16.0,
    13.0 / 16.0,
    13.0 / 16.0,
    1.0,
];

pub const SPHERE_DIAGONAL: f64 = 5.0 / 7.0;

fn octupoles_only(degree: Degree, what: &str) -> Result<()> {
    match degree {
        Degree::Three => Ok(()),
        Degree::Four => Err(Error::Unsupported(format!(
            "{what} is only derived for degree-3 octupoles"
        ))),
    }
}

/// Average of `R_z(t)·B·R_z(t)ᵀ` over a full turn, in closed form: blocks of
/// different angular frequency vanish, equal-frequency 2×2 blocks keep their
/// trace and antisymmetric parts.
pub fn average_about_z(degree: Degree, b: &DMatrix<f64>) -> DMatrix<f64> {
    let d = degree.order();
    let mut out = DMatrix::zeros(degree.dim(), degree.dim());
    out[(d, d)] = b[(d, d)];
    for k in 1..=d {
        let (i, j) = (d - k, d + k);
        let tr = 0.5 * (b[(i, i)] + b[(j, j)]);
        let anti = 0.5 * (b[(i, j)] - b[(j, i)]);
        out[(i, i)] = tr;
        out[(j, j)] = tr;
        out[(i, j)] = anti;
        out[(j, i)] = -anti;
    }
    out
}

/// Mean penalty of unit normals perpendicular to `axis` (the lateral surface
/// of a cylinder), closed form.
pub fn cylinder_average(degree: Degree, axis: &UnitVector3) -> Result<BoundaryPenalty> {
    octupoles_only(degree, "the cylinder average")?;
    // In the frame taking z to the axis, the normals sweep the xy-plane.
    let lateral = single_constraint(degree, &UnitVector3::x_axis(), 1.0)?;
    let mean = average_about_z(degree, lateral.matrix());
    let c = rot_z_to_n(degree, axis);
    let m = c.matrix() * mean * c.matrix().transpose();
    BoundaryPenalty::from_matrix(degree, symmetrize(m), 1.0)
}

/// [`cylinder_average`] by Gauss–Legendre quadrature over the circle of
/// normals, each built through [`single_constraint`].
pub fn cylinder_average_quadrature(
    degree: Degree,
    axis: &UnitVector3,
    nodes: usize,
) -> Result<BoundaryPenalty> {
    octupoles_only(degree, "the cylinder average")?;
    let a = axis.as_vector();
    let helper = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = a.cross(&helper).normalize();
    let v = a.cross(&u);
    let mut acc = BoundaryPenalty::zero(degree);
    for (t, w) in gauss_legendre_on(nodes, 0.0, 2.0 * std::f64::consts::PI) {
        let n = UnitVector3::normalize(u * t.cos() + v * t.sin())?;
        acc.add_scaled(&single_constraint(degree, &n, 1.0)?, w / (2.0 * std::f64::consts::PI))?;
    }
    BoundaryPenalty::from_matrix(degree, symmetrize(acc.matrix().clone()), 1.0)
}

/// Mean penalty over all unit normals (product rule, 32 × 64 nodes).
pub fn sphere_average(degree: Degree) -> Result<BoundaryPenalty> {
    sphere_average_with(degree, 32, 64, Execution::default())
}

pub fn sphere_average_with(
    degree: Degree,
    n_theta: usize,
    n_phi: usize,
    exec: Execution,
) -> Result<BoundaryPenalty> {
    octupoles_only(degree, "the sphere average")?;
    let rule = SphereRule::product(n_theta, n_phi);
    let terms = exec.map_range(rule.len(), |i| {
        let (u, w) = rule.node(i);
        let n = UnitVector3::normalize(*u)?;
        Ok(single_constraint(degree, &n, 1.0)?.scaled(w))
    });
    let mut acc = BoundaryPenalty::zero(degree);
    for t in terms {
        let t: BoundaryPenalty = t?;
        acc.add_scaled(&t, 1.0)?;
    }
    BoundaryPenalty::from_matrix(degree, acc.matrix().clone(), 1.0)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame_repr::reference;
    use crate::sh_rotation::rot_y;

    fn report_residual(a: &DMatrix<f64>, r: &SpectralReport) -> f64 {
        let lam = DMatrix::from_diagonal(&DVector::from_vec(r.eigenvalues.clone()));
        (a * &r.eigenvectors - &r.eigenvectors * lam).amax()
    }

    #[test]
    fn identity_spectrum() {
        let r = eigen_sym(&DMatrix::identity(7, 7)).unwrap();
        assert!(r.eigenvalues.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert_eq!(r.null_space_dim, 0);
        assert_eq!(null_space(&DMatrix::identity(7, 7), 1e-9).unwrap().ncols(), 0);
    }

    #[test]
    fn rejects_asymmetric() {
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(0, 1)] = 1.0;
        assert!(matches!(eigen_sym(&m), Err(Error::Asymmetric(_))));
    }

    #[test]
    fn random_reconstruction() {
        let mut m = DMatrix::from_fn(9, 9, |i, j| ((i * 7 + j * 3) as f64).sin());
        m = &m + m.transpose();
        let r = eigen_sym(&m).unwrap();
        let lam = DMatrix::from_diagonal(&DVector::from_vec(r.eigenvalues.clone()));
        let back = &r.eigenvectors * lam * r.eigenvectors.transpose();
        assert!((back - &m).amax() < 1e-9);
        assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        assert!(report_residual(&m, &r) < 1e-9);
        let orth = r.eigenvectors.transpose() * &r.eigenvectors - DMatrix::identity(9, 9);
        assert!(orth.amax() < 1e-10);
    }

    #[test]
    fn cube_reproduces_exact_matrix() {
        let p = cube_penalty();
        assert!((p.matrix() - cube_matrix_exact()).amax() < 1e-12);
        let r = eigen_sym(p.matrix()).unwrap();
        for (a, b) in r.eigenvalues.iter().zip(CUBE_EIGENVALUES) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(r.null_space_dim, 1);
        let h = DMatrix::from_column_slice(7, 1, reference(Degree::Three).as_slice());
        assert!(max_principal_angle(&r.null_space(), &h) < 1e-6);
    }

    #[test]
    fn closed_form_cylinder() {
        let p = cylinder_average(Degree::Three, &UnitVector3::y_axis()).unwrap();
        assert!((p.matrix() - cylinder_matrix_exact()).amax() < 1e-12);
    }

    #[test]
    fn quadrature_cylinder() {
        let p = cylinder_average_quadrature(Degree::Three, &UnitVector3::y_axis(), 64).unwrap();
        assert!((p.matrix() - cylinder_matrix_exact()).amax() < 1e-10);
    }

    #[test]
    fn literal_cylinder_integrand() {
        // (1/2π)∫ I − R_y(β)p pᵀR_y(β)ᵀ − R_y(β)q qᵀR_y(β)ᵀ dβ, midpoint rule
        let steps = 64;
        let mut acc = DMatrix::<f64>::zeros(7, 7);
        for k in 0..steps {
            let beta = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / steps as f64;
            let r = rot_y(Degree::Three, beta);
            let p = r.matrix().column(1).into_owned();
            let q = r.matrix().column(5).into_owned();
            acc += DMatrix::<f64>::identity(7, 7) - &p * p.transpose() - &q * q.transpose();
        }
        acc /= steps as f64;
        assert!((acc - cylinder_matrix_exact()).amax() < 1e-12);
    }

    #[test]
    fn cylinder_axis_z_same_spectrum() {
        let pz = cylinder_average(Degree::Three, &UnitVector3::z_axis()).unwrap();
        let r = eigen_sym(pz.matrix()).unwrap();
        for (a, b) in r.eigenvalues.iter().zip(CYLINDER_EIGENVALUES) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn degree4_averages_unsupported() {
        assert!(matches!(
            cylinder_average(Degree::Four, &UnitVector3::y_axis()),
            Err(Error::Unsupported(_))
        ));
        assert!(sphere_average(Degree::Four).is_err());
    }

    #[test]
    fn sphere_is_isotropic() {
        let p = sphere_average(Degree::Three).unwrap();
        let want = DMatrix::<f64>::identity(7, 7) * SPHERE_DIAGONAL;
        assert!((p.matrix() - want).amax() < 1e-8);
        let coarse = sphere_average_with(Degree::Three, 16, 32, Execution::Sequential).unwrap();
        assert!((coarse.matrix() - p.matrix()).amax() < 1e-6);
        assert!(p.spectral_shift().unwrap().matrix().amax() < 1e-8);
    }

    #[test]
    fn principal_angles() {
        let u = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let v = DMatrix::from_column_slice(3, 1, &[0.6f64.cos(), 0.6f64.sin(), 0.0]);
        assert!((max_principal_angle(&u, &v) - 0.6).abs() < 1e-12);
        let w = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(max_principal_angle(&u, &w), std::f64::consts::FRAC_PI_2);
    }
}
