use nalgebra::{DVector, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specfield::frame_repr::embed_rotation;
use specfield::grid::Edge;
use specfield::penalty::single_constraint;
use specfield::solver::{solve_coarse_to_fine, solve_flat, solve_level, solve_model, EnergyModel};
use specfield::{reference, Degree, Execution, GridHierarchy, GridParams, SolveConfig, TriangleSurface, UnitVector3};

fn grid(surface: &TriangleSurface, max_level: u8, degree: Degree) -> GridHierarchy {
    let params = GridParams { max_level, degree, ..GridParams::default() };
    GridHierarchy::build(surface, params).unwrap()
}

#[test]
fn cube_field_is_the_reference_frame_everywhere() {
    let g = grid(&TriangleSurface::cube(0.5), 3, Degree::Three);
    let (field, reports) = solve_coarse_to_fine(&g, &SolveConfig::default()).unwrap();
    let h = reference(Degree::Three).into_vector();
    for c in &field.coeffs {
        let v = c.vector();
        let err = (v - &h).amax().min((v + &h).amax());
        assert!(err < 1e-6, "coefficient error {err}");
    }
    assert!(reports.last().unwrap().energy < 1e-10);
}

#[test]
fn degree_four_cube_is_solved_too() {
    let g = grid(&TriangleSurface::cube(0.5), 2, Degree::Four);
    let cfg = SolveConfig { degree: Degree::Four, ..SolveConfig::default() };
    let (field, reports) = solve_coarse_to_fine(&g, &cfg).unwrap();
    let h = reference(Degree::Four).into_vector();
    for c in &field.coeffs {
        assert!((c.vector() - &h).amax() < 1e-6);
    }
    assert!(reports.iter().all(|r| r.converged));
}

#[test]
fn without_a_boundary_a_perturbed_field_relaxes_to_a_constant() {
    let g = grid(&TriangleSurface::icosphere(Vector3::zeros(), 0.5, 2), 3, Degree::Three);
    let cfg = SolveConfig { boundary_weight: 0.0, ..SolveConfig::default() };
    let n = g.level(3).unwrap().len();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = UnitQuaternion::from_euler_angles(0.3, -0.7, 1.1);
    let init: Vec<DVector<f64>> = (0..n)
        .map(|_| {
            let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let q = base * UnitQuaternion::from_scaled_axis(axis * 0.3);
            embed_rotation(Degree::Three, q.to_rotation_matrix().matrix())
        })
        .collect();
    let (field, report) = solve_level(&g, 3, &cfg, Some(&init)).unwrap();
    assert!(report.energy < 1e-10 * report.initial_energy, "energy {}", report.energy);
    let first = field.coeffs[0].vector();
    for c in &field.coeffs {
        let v = c.vector();
        assert!((v - first).amax().min((v + first).amax()) < 1e-4);
    }
}

#[test]
fn accepted_energies_never_increase() {
    let g = grid(&TriangleSurface::icosphere(Vector3::zeros(), 0.5, 3), 3, Degree::Three);
    for cfg in [
        SolveConfig::default(),
        SolveConfig { random_init: true, seed: 11, ..SolveConfig::default() },
        SolveConfig { boundary_weight: 1e4, ..SolveConfig::default() },
    ] {
        let (_, report) = solve_flat(&g, &cfg).unwrap();
        let e = report.accepted_energies();
        assert!(!e.is_empty());
        for w in e.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "{} then {}", w[0], w[1]);
        }
        assert!(report.energy <= report.initial_energy);
    }
}

#[test]
fn sequential_solves_are_deterministic() {
    let g = grid(&TriangleSurface::icosphere(Vector3::zeros(), 0.5, 2), 3, Degree::Three);
    let cfg = SolveConfig { random_init: true, seed: 7, execution: Execution::Sequential, ..SolveConfig::default() };
    let (a, ra) = solve_coarse_to_fine(&g, &cfg).unwrap();
    let (b, rb) = solve_coarse_to_fine(&g, &cfg).unwrap();
    assert_eq!(a.coeffs, b.coeffs);
    let cg = |r: &[specfield::SolveReport]| r.iter().map(|x| x.cg_iterations).collect::<Vec<_>>();
    assert_eq!(cg(&ra), cg(&rb));
}

#[test]
fn parallel_and_sequential_solves_agree() {
    let g = grid(&TriangleSurface::icosphere(Vector3::zeros(), 0.5, 2), 3, Degree::Three);
    let seq = SolveConfig { execution: Execution::Sequential, ..SolveConfig::default() };
    let par = SolveConfig { execution: Execution::Parallel, ..SolveConfig::default() };
    let (_, a) = solve_flat(&g, &seq).unwrap();
    let (_, b) = solve_flat(&g, &par).unwrap();
    assert!((a.energy - b.energy).abs() < 1e-6 * a.energy.max(1e-12));
}

#[test]
fn single_level_hierarchy_matches_a_level_solve() {
    let g = grid(&TriangleSurface::cube(0.5), 1, Degree::Three);
    let cfg = SolveConfig { execution: Execution::Sequential, random_init: true, seed: 2, ..SolveConfig::default() };
    let (f0, _) = solve_level(&g, 0, &cfg, None).unwrap();
    let init = g.prolong(1, &f0.vectors(), &reference(Degree::Three).into_vector()).unwrap();
    let (direct, r1) = solve_level(&g, 1, &cfg, Some(&init)).unwrap();
    let (field, reports) = solve_coarse_to_fine(&g, &cfg).unwrap();
    assert_eq!(field.coeffs, direct.coeffs);
    assert_eq!(reports[1].cg_iterations, r1.cg_iterations);
}

#[test]
fn two_opposed_constraints_are_both_met() {
    let n1 = UnitVector3::normalize(Vector3::new(1.0, 0.2, 0.0)).unwrap();
    let n2 = UnitVector3::normalize(Vector3::new(-0.2, 1.0, 0.0)).unwrap();
    let penalties = vec![
        Some(single_constraint(Degree::Three, &n1, 1.0).unwrap()),
        None,
        Some(single_constraint(Degree::Three, &n2, 1.0).unwrap()),
    ];
    let edges = vec![Edge { i: 0, j: 1, weight: 1.0 }, Edge { i: 1, j: 2, weight: 1.0 }];
    let model = EnergyModel::from_parts(Degree::Three, 3, edges, penalties, 1.0, 100.0, Execution::Sequential).unwrap();
    let cfg = SolveConfig { random_init: true, seed: 1, ..SolveConfig::default() };
    let (field, report) = solve_model(&model, 100.0, &cfg, None).unwrap();
    assert!(report.energy < 1e-10, "energy {}", report.energy);
    // n1 and n2 are orthogonal, so one frame meets both.
    let q = field.rotations[1];
    for n in [n1, n2] {
        let best = (0..3).map(|k| q.column(k).dot(n.as_vector()).abs()).fold(0.0, f64::max);
        assert!(best > 1.0 - 1e-8);
    }
}

#[test]
fn invalid_configurations_are_rejected() {
    let g = grid(&TriangleSurface::cube(0.5), 1, Degree::Three);
    for cfg in [
        SolveConfig { boundary_weight: -1.0, ..SolveConfig::default() },
        SolveConfig { smoothness: f64::NAN, ..SolveConfig::default() },
        SolveConfig { degree: Degree::Four, ..SolveConfig::default() },
    ] {
        assert!(solve_flat(&g, &cfg).is_err());
    }
}

#[test]
fn stiff_boundary_is_satisfied_on_a_sphere() {
    let g = grid(&TriangleSurface::icosphere(Vector3::zeros(), 0.5, 3), 3, Degree::Three);
    let per_area: Vec<f64> = [10.0, 1e3, 1e6]
        .iter()
        .map(|&w| {
            let cfg = SolveConfig { boundary_weight: w, ..SolveConfig::default() };
            solve_coarse_to_fine(&g, &cfg).unwrap().1.last().unwrap().boundary_penalty_per_area
        })
        .collect();
    assert!(per_area.windows(2).all(|w| w[1] < w[0]), "{per_area:?}");
    assert!(per_area[2] < 1e-3, "{per_area:?}");
}
