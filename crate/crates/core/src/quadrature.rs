//! Gauss–Legendre rules and a product rule on the unit sphere.

use std::f64::consts::PI;

use nalgebra::Vector3;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss–Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    x.into_iter()
        .zip(w)
        .map(|(x, w)| (a + half * (x + 1.0), half * w))
        .collect()
}

/// Quadrature on S² whose weights sum to 1 (it computes averages).
#[derive(Clone, Debug)]
pub struct SphereRule {
    nodes: Vec<(Vector3<f64>, f64)>,
}

impl SphereRule {
    /// Gauss–Legendre in `cos θ` times the trapezoid rule in `φ`. Exact for
    /// polynomials of degree `< min(2·n_theta, n_phi)`.
    pub fn product(n_theta: usize, n_phi: usize) -> Self {
        let (xs, ws) = gauss_legendre(n_theta);
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        for (z, w) in xs.into_iter().zip(ws) {
            let r = (1.0 - z * z).max(0.0).sqrt();
            for j in 0..n_phi {
                let phi = 2.0 * PI * j as f64 / n_phi as f64;
                let u = Vector3::new(r * phi.cos(), r * phi.sin(), z);
                nodes.push((u, 0.5 * w / n_phi as f64));
            }
        }
        SphereRule { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&Vector3<f64>, f64)> {
        self.nodes.iter().map(|(u, w)| (u, *w))
    }

    pub fn node(&self, i: usize) -> (&Vector3<f64>, f64) {
        let (u, w) = &self.nodes[i];
        (u, *w)
    }
}
