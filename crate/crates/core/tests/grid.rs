mod common;

use nalgebra::Vector3;
use specfield::clip::Aabb;
use specfield::grid::accumulate_cell_constraints;
use specfield::{Degree, Execution, GridHierarchy, GridParams, TriangleSurface};

fn params(max_level: u8, shift: bool, execution: Execution) -> GridParams {
    GridParams { max_level, shift, execution, ..GridParams::default() }
}

#[test]
fn boundary_area_is_conserved_per_level() {
    let surface = TriangleSurface::icosphere(Vector3::new(0.1, 0.0, -0.05), 0.4, 3);
    let grid = GridHierarchy::build(&surface, params(4, true, Execution::Parallel)).unwrap();
    let total = surface.total_area();
    for level in grid.levels() {
        let area: f64 = level.cells.iter().map(|c| grid.nodes()[c.node].area).sum();
        assert!((area - total).abs() < 1e-9 * total, "{area} vs {total}");
    }
}

#[test]
fn parent_penalty_is_the_sum_of_its_children() {
    let surface = TriangleSurface::icosphere(Vector3::zeros(), 0.45, 3);
    let grid = GridHierarchy::build(&surface, params(3, false, Execution::Parallel)).unwrap();
    let nodes = grid.nodes();
    let mut checked = 0;
    for node in nodes.iter().filter(|n| n.is_boundary) {
        let (Some(first), Some(parent)) = (node.first_child, node.penalty.as_ref()) else { continue };
        let parent = parent.unpack().unwrap();
        let mut sum = parent.scaled(0.0);
        for child in &nodes[first..first + 8] {
            if let Some(p) = &child.penalty {
                sum.add_scaled(&p.unpack().unwrap(), 1.0).unwrap();
            }
        }
        let scale = parent.total_weight().max(1e-300);
        assert!(common::max_abs_diff(sum.matrix(), parent.matrix()) < 1e-10 * scale);
        assert!((sum.total_weight() - parent.total_weight()).abs() < 1e-10 * scale);
        checked += 1;
    }
    assert!(checked > 10);
}

#[test]
fn neighbouring_cells_differ_by_at_most_one_level() {
    for surface in [TriangleSurface::cube(0.5), TriangleSurface::icosphere(Vector3::zeros(), 0.5, 3)] {
        let grid = GridHierarchy::build(&surface, params(5, true, Execution::Parallel)).unwrap();
        assert!(grid.max_level_jump() <= 1);
    }
}

#[test]
fn sphere_boundary_cells_grow_about_fourfold_per_level() {
    let surface = TriangleSurface::icosphere(Vector3::zeros(), 0.5, 4);
    let grid = GridHierarchy::build(&surface, params(5, true, Execution::Parallel)).unwrap();
    let counts: Vec<usize> = grid.levels().iter().map(|l| l.boundary_count()).collect();
    for w in counts[2..].windows(2) {
        let growth = w[1] as f64 / w[0] as f64;
        assert!((3.0..=5.0).contains(&growth), "boundary counts {counts:?}");
    }
}

#[test]
fn corner_cell_sees_the_three_axis_penalty() {
    let surface = TriangleSurface::cube(0.5);
    let cell = Aabb::cube(Vector3::new(0.5, 0.5, 0.5), 0.2);
    let p = accumulate_cell_constraints(&cell, &surface, Degree::Three, false).unwrap().unpack().unwrap();
    assert!((p.total_weight() - 0.03).abs() < 1e-12);
    let normalized = p.matrix() * (3.0 / p.total_weight());
    assert!(common::max_abs_diff(&normalized, &common::literal_cube()) < 1e-10);
}

#[test]
fn cells_off_the_surface_carry_no_penalty() {
    let surface = TriangleSurface::cube(0.5);
    let inside = Aabb::cube(Vector3::zeros(), 0.3);
    assert!(accumulate_cell_constraints(&inside, &surface, Degree::Three, true).is_err());
}

#[test]
fn sequential_and_parallel_builds_agree() {
    let surface = TriangleSurface::icosphere(Vector3::zeros(), 0.5, 3);
    let a = GridHierarchy::build(&surface, params(4, true, Execution::Sequential)).unwrap();
    let b = GridHierarchy::build(&surface, params(4, true, Execution::Parallel)).unwrap();
    assert_eq!(a.nodes(), b.nodes());
    assert_eq!(a.levels(), b.levels());
    assert_eq!(a.fingerprint(), b.fingerprint());
}

#[test]
fn cache_round_trips_and_detects_staleness() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.sbcf");
    let surface = TriangleSurface::icosphere(Vector3::zeros(), 0.5, 2);
    let built = GridHierarchy::build_cached(&surface, params(3, true, Execution::Parallel), &path).unwrap();
    let loaded = GridHierarchy::read_cache(&path, Execution::Parallel).unwrap();
    assert_eq!(built, loaded);

    let deeper = GridHierarchy::build_cached(&surface, params(4, true, Execution::Parallel), &path).unwrap();
    assert_eq!(deeper.max_level(), 4);
    assert_eq!(GridHierarchy::read_cache(&path, Execution::Parallel).unwrap().max_level(), 4);

    std::fs::write(&path, b"not a cache").unwrap();
    assert!(GridHierarchy::read_cache(&path, Execution::Parallel).is_err());
    let rebuilt = GridHierarchy::build_cached(&surface, params(4, true, Execution::Parallel), &path).unwrap();
    assert_eq!(rebuilt.fingerprint(), deeper.fingerprint());
}
