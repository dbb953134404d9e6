//! Real spherical harmonics of degree 3 and 4 on the unit sphere, in the
//! ordering and phase convention the rotation matrices assume.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::sh_rotation::{Degree, HarmonicCoeffs};

/// Values of `Y_{d,-d} … Y_{d,d}` at the unit direction `u`.
pub fn eval_basis(degree: Degree, u: &Vector3<f64>) -> Vec<f64> {
    let (x, y, z) = (u.x, u.y, u.z);
    let s = f64::sqrt;
    match degree {
        Degree::Three => vec![
            s(35.0 / (2.0 * PI)) / 4.0 * y * (3.0 * x * x - y * y),
            s(105.0 / PI) / 2.0 * x * y * z,
            s(21.0 / (2.0 * PI)) / 4.0 * y * (5.0 * z * z - 1.0),
            s(7.0 / PI) / 4.0 * (5.0 * z * z * z - 3.0 * z),
            s(21.0 / (2.0 * PI)) / 4.0 * x * (5.0 * z * z - 1.0),
            s(105.0 / PI) / 4.0 * (x * x - y * y) * z,
            s(35.0 / (2.0 * PI)) / 4.0 * x * (x * x - 3.0 * y * y),
        ],
        Degree::Four => {
            let (x2, y2, z2) = (x * x, y * y, z * z);
            vec![
                0.75 * s(35.0 / PI) * x * y * (x2 - y2),
                0.75 * s(35.0 / (2.0 * PI)) * y * z * (3.0 * x2 - y2),
                0.75 * s(5.0 / PI) * x * y * (7.0 * z2 - 1.0),
                0.75 * s(5.0 / (2.0 * PI)) * y * z * (7.0 * z2 - 3.0),
                3.0 / 16.0 * s(1.0 / PI) * (35.0 * z2 * z2 - 30.0 * z2 + 3.0),
                0.75 * s(5.0 / (2.0 * PI)) * x * z * (7.0 * z2 - 3.0),
                3.0 / 8.0 * s(5.0 / PI) * (x2 - y2) * (7.0 * z2 - 1.0),
                0.75 * s(35.0 / (2.0 * PI)) * x * z * (x2 - 3.0 * y2),
                3.0 / 16.0 * s(35.0 / PI) * (x2 * (x2 - 3.0 * y2) - y2 * (3.0 * x2 - y2)),
            ]
        }
    }
}

/// The harmonic `Σ h_i Y_i` evaluated at `u`.
pub fn eval(h: &HarmonicCoeffs, u: &Vector3<f64>) -> f64 {
    eval_basis(h.degree(), u)
        .iter()
        .zip(h.as_slice())
        .map(|(y, c)| y * c)
        .sum()
}

/// Samples `h` on a latitude/longitude grid: rows of `(θ, φ, value)`.
pub fn sample_sphere(h: &HarmonicCoeffs, n_theta: usize, n_phi: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for i in 0..n_theta {
        let theta = PI * (i as f64 + 0.5) / n_theta as f64;
        for j in 0..n_phi {
            let phi = 2.0 * PI * j as f64 / n_phi as f64;
            let u = Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            out.push([theta, phi, eval(h, &u)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::SphereRule;
    use crate::sh_rotation::{qx, qy, qz, rot_x, rot_x_quarter, rot_y, rot_z};

    #[test]
    fn basis_is_orthonormal() {
        let rule = SphereRule::product(16, 32);
        for d in Degree::ALL {
            let n = d.dim();
            let mut gram = vec![0.0; n * n];
            for (u, w) in rule.nodes() {
                let y = eval_basis(d, u);
                for i in 0..n {
                    for j in 0..n {
                        gram[i * n + j] += 4.0 * PI * w * y[i] * y[j];
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[i * n + j] - want).abs() < 1e-12);
                }
            }
        }
    }

    // (R h)(u) = h(Qᵀ u) for the 3D rotation Q that R lifts.
    fn check_lift(r: &crate::SHRotation, q: &nalgebra::Matrix3<f64>) {
        let d = r.degree();
        let h = HarmonicCoeffs::new(d, (0..d.dim()).map(|i| (1.3 * i as f64).cos()).collect())
            .unwrap();
        let rh = r.apply(&h).unwrap();
        for k in 0..40 {
            let t = k as f64 * 0.61;
            let u = Vector3::new(t.sin() * (2.3 * t).cos(), t.sin() * (2.3 * t).sin(), t.cos());
            assert!((eval(&rh, &u) - eval(&h, &(q.transpose() * u))).abs() < 1e-12);
        }
    }

    #[test]
    fn literal_matrices_rotate_functions() {
        for d in Degree::ALL {
            check_lift(&rot_z(d, 0.7), &qz(0.7));
            check_lift(&rot_x_quarter(d), &qx(std::f64::consts::FRAC_PI_2));
            check_lift(&rot_x(d, -0.4), &qx(-0.4));
            check_lift(&rot_y(d, 0.9), &qy(-0.9));
        }
    }

    #[test]
    fn reference_degree4_is_cubic() {
        let h = crate::reference(Degree::Four);
        let a = eval(&h, &Vector3::x());
        assert!((eval(&h, &Vector3::y()) - a).abs() < 1e-12);
        assert!((eval(&h, &Vector3::z()) - a).abs() < 1e-12);
        assert_eq!(sample_sphere(&h, 4, 8).len(), 32);
    }
}
