//! Triangle ∩ box clipping.

use nalgebra::Vector3;

/// Fragments smaller than this fraction of a cell face are dropped.
pub const FRAGMENT_AREA_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Aabb { min, max }
    }

    pub fn cube(center: Vector3<f64>, side: f64) -> Self {
        let h = Vector3::repeat(side / 2.0);
        Aabb::new(center - h, center + h)
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) / 2.0
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    /// Octant `k`: bit 0 selects the upper x half, bit 1 y, bit 2 z.
    pub fn octant(&self, k: usize) -> Aabb {
        let c = self.center();
        let mut min = self.min;
        let mut max = c;
        for axis in 0..3 {
            if k & (1 << axis) != 0 {
                min[axis] = c[axis];
                max[axis] = self.max[axis];
            }
        }
        Aabb::new(min, max)
    }

    /// Closed-box overlap.
    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= other.max[a] && other.min[a] <= self.max[a])
    }

    pub fn of_triangle(t: &[Vector3<f64>; 3]) -> Aabb {
        Aabb::new(t[0].inf(&t[1]).inf(&t[2]), t[0].sup(&t[1]).sup(&t[2]))
    }

    fn smallest_face_area(&self) -> f64 {
        let e = self.extent();
        (e.x * e.y).min(e.y * e.z).min(e.x * e.z)
    }
}

/// Sutherland–Hodgman clip of a convex polygon against the six slabs.
pub fn clip_polygon(poly: &[Vector3<f64>], b: &Aabb) -> Vec<Vector3<f64>> {
    let mut current = poly.to_vec();
    for axis in 0..3 {
        for (bound, keep_above) in [(b.min[axis], true), (b.max[axis], false)] {
            if current.is_empty() {
                return current;
            }
            let inside = |p: &Vector3<f64>| {
                if keep_above {
                    p[axis] >= bound
                } else {
                    p[axis] <= bound
                }
            };
            let mut next = Vec::with_capacity(current.len() + 1);
            for i in 0..current.len() {
                let p = current[i];
                let q = current[(i + 1) % current.len()];
                let (pin, qin) = (inside(&p), inside(&q));
                if pin {
                    next.push(p);
                }
                if pin != qin {
                    let t = (bound - p[axis]) / (q[axis] - p[axis]);
                    let mut x = p + (q - p) * t;
                    x[axis] = bound;
                    next.push(x);
                }
            }
            current = next;
        }
    }
    current
}

/// Area of a planar polygon.
pub fn polygon_area(poly: &[Vector3<f64>]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = Vector3::zeros();
    for i in 1..poly.len() - 1 {
        s += (poly[i] - poly[0]).cross(&(poly[i + 1] - poly[0]));
    }
    0.5 * s.norm()
}

/// Area of `tri ∩ b` as counted for that cell.
///
/// Boxes are treated as half-open: a fragment lying flat in one of the
/// upper faces belongs to the neighbor above, so shared faces are never
/// counted twice. Slivers below [`FRAGMENT_AREA_FLOOR`] give zero.
pub fn fragment_area(tri: &[Vector3<f64>; 3], b: &Aabb) -> f64 {
    let poly = clip_polygon(tri, b);
    if poly.len() < 3 {
        return 0.0;
    }
    let e = b.extent();
    for axis in 0..3 {
        let tol = 1e-12 * e[axis];
        if poly.iter().all(|p| (p[axis] - b.max[axis]).abs() <= tol) {
            return 0.0;
        }
    }
    let area = polygon_area(&poly);
    if area < FRAGMENT_AREA_FLOOR * b.smallest_face_area() {
        0.0
    } else {
        area
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Aabb {
        Aabb::new(Vector3::zeros(), Vector3::repeat(1.0))
    }

    #[test]
    fn inside_triangle_untouched() {
        let t = [
            Vector3::new(0.1, 0.1, 0.5),
            Vector3::new(0.9, 0.1, 0.5),
            Vector3::new(0.1, 0.9, 0.5),
        ];
        assert!((fragment_area(&t, &unit()) - 0.32).abs() < 1e-15);
    }

    #[test]
    fn octants_partition_area() {
        let t = [
            Vector3::new(-0.3, 0.2, 0.1),
            Vector3::new(1.4, 0.6, 0.8),
            Vector3::new(0.3, 1.1, 0.4),
        ];
        let big = Aabb::new(Vector3::repeat(-1.0), Vector3::repeat(2.0));
        let whole = fragment_area(&t, &big);
        let full = polygon_area(&t);
        assert!((whole - full).abs() < 1e-14);
        let parts: f64 = (0..8).map(|k| fragment_area(&t, &big.octant(k))).sum();
        assert!((parts - whole).abs() < 1e-12);
    }

    #[test]
    fn shared_face_counted_once() {
        // Flat in the plane x = 0.5, the boundary between two octants.
        let t = [
            Vector3::new(0.5, 0.1, 0.1),
            Vector3::new(0.5, 0.4, 0.1),
            Vector3::new(0.5, 0.1, 0.4),
        ];
        let b = unit();
        let total: f64 = (0..8).map(|k| fragment_area(&t, &b.octant(k))).sum();
        assert!((total - 0.045).abs() < 1e-15);
    }

    #[test]
    fn disjoint_is_zero() {
        let t = [
            Vector3::new(2.0, 2.0, 2.0),
            Vector3::new(3.0, 2.0, 2.0),
            Vector3::new(2.0, 3.0, 2.0),
        ];
        assert_eq!(fragment_area(&t, &unit()), 0.0);
        assert!(!unit().overlaps(&Aabb::of_triangle(&t)));
    }
}
