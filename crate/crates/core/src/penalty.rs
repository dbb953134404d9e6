//! Quadratic boundary-alignment penalties.
//!
//! For a normal `n` with `p_n`, `q_n` (and `b_n` for degree 4) obtained by
//! rotating the z-aligned manifold basis to `n`:
//!
//! * degree 4: `E_n(h) = hᵀ(I − p_n p_nᵀ − q_n q_nᵀ)h − 2 b_nᵀh + b_nᵀb_n`
//! * degree 3: `E_n(h) = hᵀ(I − p_n p_nᵀ − q_n q_nᵀ)h`
//!
//! Weighted sums of such penalties are again of this form, so any number of
//! constraints on one frame is stored as one `(A, b, c)` triple.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sh_rotation::{check_degree, rot_z_to_n, Degree, HarmonicCoeffs, UnitVector3};
use crate::spectral;

/// Index of `p_z`, `q_z` in coefficient space (the `Y_{d,∓k}` pair spanning
/// the z-rotation orbit of `h̃`), and of the fixed part `b_z` for degree 4.
fn manifold_slots(degree: Degree) -> (usize, usize) {
    match degree {
        Degree::Four => (0, 8),
        Degree::Three => (1, 5),
    }
}

const DEGREE4_FIXED_SLOT: usize = 4;

/// `b_nᵀb_n` for a unit-weight degree-4 constraint.
pub const DEGREE4_CONSTANT: f64 = 7.0 / 12.0;

/// Eigenvalues at or below this are treated as already zero by
/// [`BoundaryPenalty::spectral_shift`].
pub const SHIFT_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPenalty {
    degree: Degree,
    a: DMatrix<f64>,
    /// Empty for degree 3.
    b: DVector<f64>,
    c: f64,
    total_weight: f64,
}

impl BoundaryPenalty {
    pub fn zero(degree: Degree) -> Self {
        let n = degree.dim();
        let blen = match degree {
            Degree::Four => n,
            Degree::Three => 0,
        };
        BoundaryPenalty {
            degree,
            a: DMatrix::zeros(n, n),
            b: DVector::zeros(blen),
            c: 0.0,
            total_weight: 0.0,
        }
    }

    /// A homogeneous penalty `hᵀAh` with the given symmetric matrix.
    pub fn from_matrix(degree: Degree, a: DMatrix<f64>, total_weight: f64) -> Result<Self> {
        let n = degree.dim();
        if a.shape() != (n, n) {
            return Err(Error::invalid(format!("expected a {n}×{n} matrix")));
        }
        let asym = (&a - a.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::Asymmetric(asym));
        }
        let mut p = BoundaryPenalty::zero(degree);
        p.a = (&a + a.transpose()) * 0.5;
        p.total_weight = total_weight;
        Ok(p)
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Linear coefficient `b` (length 0 for degree 3).
    pub fn linear(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn is_homogeneous(&self) -> bool {
        self.degree == Degree::Three
    }

    /// `hᵀAh − 2bᵀh + c`.
    pub fn evaluate(&self, h: &HarmonicCoeffs) -> Result<f64> {
        check_degree(self.degree, h.degree())?;
        Ok(self.evaluate_slice(h.as_slice()))
    }

    pub(crate) fn evaluate_slice(&self, h: &[f64]) -> f64 {
        let n = self.degree.dim();
        let mut quad = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.a[(i, j)] * h[j];
            }
            quad += h[i] * row;
        }
        let lin: f64 = self.b.iter().zip(h).map(|(b, x)| b * x).sum();
        quad - 2.0 * lin + self.c
    }

    /// `self += s·other`, entrywise (keeps `A` exactly symmetric).
    pub fn add_scaled(&mut self, other: &BoundaryPenalty, s: f64) -> Result<()> {
        check_degree(self.degree, other.degree)?;
        self.a.zip_apply(&other.a, |x, y| *x += s * y);
        self.b.zip_apply(&other.b, |x, y| *x += s * y);
        self.c += s * other.c;
        self.total_weight += s * other.total_weight;
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> BoundaryPenalty {
        BoundaryPenalty {
            degree: self.degree,
            a: &self.a * s,
            b: &self.b * s,
            c: self.c * s,
            total_weight: self.total_weight * s,
        }
    }

    /// `A ← A − λ_min(A)·I` for homogeneous (degree-3) penalties.
    ///
    /// Forms whose smallest eigenvalue is already `≤ 1e-12` are returned
    /// unchanged. The total weight is kept.
    pub fn spectral_shift(&self) -> Result<BoundaryPenalty> {
        if !self.is_homogeneous() {
            return Err(Error::Unsupported(
                "spectral shift is defined for homogeneous degree-3 penalties only".into(),
            ));
        }
        let report = spectral::eigen_sym(&self.a)?;
        let lambda_min = report.eigenvalues[0];
        let mut out = self.clone();
        if lambda_min > SHIFT_THRESHOLD {
            for i in 0..self.degree.dim() {
                out.a[(i, i)] -= lambda_min;
            }
        }
        Ok(out)
    }

    pub fn pack(&self) -> PackedPenalty {
        let n = self.degree.dim();
        let mut data = Vec::with_capacity(PackedPenalty::len_for(self.degree));
        for i in 0..n {
            for j in i..n {
                data.push(self.a[(i, j)]);
            }
        }
        if self.degree == Degree::Four {
            data.extend(self.b.iter().copied());
            data.push(self.c);
        }
        data.push(self.total_weight);
        PackedPenalty {
            degree: self.degree,
            data,
        }
    }
}

/// Weighted constraint aligning a frame axis with the unit normal `n`.
pub fn single_constraint(degree: Degree, n: &UnitVector3, weight: f64) -> Result<BoundaryPenalty> {
    if !(weight > 0.0) || !weight.is_finite() {
        return Err(Error::invalid(format!("constraint weight must be positive, got {weight}")));
    }
    let r = rot_z_to_n(degree, n);
    let m = r.matrix();
    let (ip, iq) = manifold_slots(degree);
    let dim = degree.dim();
    let mut out = BoundaryPenalty::zero(degree);
    for i in 0..dim {
        for j in i..dim {
            let delta = if i == j { 1.0 } else { 0.0 };
            let v = weight * (delta - m[(i, ip)] * m[(j, ip)] - m[(i, iq)] * m[(j, iq)]);
            out.a[(i, j)] = v;
            out.a[(j, i)] = v;
        }
    }
    if degree == Degree::Four {
        let scale = DEGREE4_CONSTANT.sqrt();
        for i in 0..dim {
            out.b[i] = weight * scale * m[(i, DEGREE4_FIXED_SLOT)];
        }
        out.c = weight * DEGREE4_CONSTANT;
    }
    out.total_weight = weight;
    Ok(out)
}

/// Componentwise sum of same-degree penalties.
pub fn accumulate(ps: &[BoundaryPenalty]) -> Result<BoundaryPenalty> {
    let first = ps
        .first()
        .ok_or_else(|| Error::invalid("cannot accumulate an empty list of penalties"))?;
    let mut acc = first.clone();
    for p in &ps[1..] {
        acc.add_scaled(p, 1.0)?;
    }
    Ok(acc)
}

/// Upper triangle of `A` row by row, then `b` and `c` for degree 4, then the
/// total weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackedPenalty {
    degree: Degree,
    data: Vec<f64>,
}

impl PackedPenalty {
    /// Reals describing the quadratic form: 28 for degree 3, 45 + 9 + 1 for
    /// degree 4.
    pub fn payload_len(degree: Degree) -> usize {
        let n = degree.dim();
        let tri = n * (n + 1) / 2;
        match degree {
            Degree::Three => tri,
            Degree::Four => tri + n + 1,
        }
    }

    /// Payload plus the trailing total weight.
    pub fn len_for(degree: Degree) -> usize {
        Self::payload_len(degree) + 1
    }

    pub fn from_raw(degree: Degree, data: Vec<f64>) -> Result<Self> {
        let expected = Self::len_for(degree);
        if data.len() != expected {
            return Err(Error::MalformedPacked {
                expected,
                actual: data.len(),
            });
        }
        Ok(PackedPenalty { degree, data })
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn payload(&self) -> &[f64] {
        &self.data[..self.data.len() - 1]
    }

    pub fn total_weight(&self) -> f64 {
        *self.data.last().unwrap_or(&0.0)
    }

    pub fn unpack(&self) -> Result<BoundaryPenalty> {
        let expected = Self::len_for(self.degree);
        if self.data.len() != expected {
            return Err(Error::MalformedPacked {
                expected,
                actual: self.data.len(),
            });
        }
        let n = self.degree.dim();
        let mut p = BoundaryPenalty::zero(self.degree);
        let mut it = self.data.iter().copied();
        for i in 0..n {
            for j in i..n {
                let v = it.next().expect("length checked");
                p.a[(i, j)] = v;
                p.a[(j, i)] = v;
            }
        }
        if self.degree == Degree::Four {
            for i in 0..n {
                p.b[i] = it.next().expect("length checked");
            }
            p.c = it.next().expect("length checked");
        }
        p.total_weight = it.next().expect("length checked");
        Ok(p)
    }
}
