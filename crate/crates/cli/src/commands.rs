use std::f64::consts::FRAC_PI_4;
use std::fs;
use std::io::Write;
use std::path::Path;

use log::{info, warn};
use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use specfield::sh_rotation::rot_y;
use specfield::solver::solve_coarse_to_fine;
use specfield::spectral::{
    cube_matrix_exact, cube_penalty, cylinder_average, cylinder_matrix_exact, eigen_sym, max_principal_angle,
    orthonormalize, sphere_average, CUBE_EIGENVALUES, CYLINDER_EIGENVALUES, SPHERE_DIAGONAL,
};
use specfield::{
    reference, BoundaryPenalty, Degree, Execution, GridHierarchy, GridParams, PackedPenalty, SolveConfig,
    SolveReport, SpectralReport, TriangleSurface, UnitVector3,
};

use crate::args::{ExportArgs, ExportFormat, GenerateArgs, ReportFormat, Shape, SolveArgs, SpectralArgs, SpectralCase};
use crate::error::{CliError, Result};
use crate::field_file::{write_json, FieldFile};

pub const CACHE_FILE: &str = "grid.sbcf";
pub const FIELD_FILE: &str = "field.json";
pub const FRAMES_FILE: &str = "frames.ply";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    NotConverged,
}

#[derive(Serialize)]
struct RunReport<'a> {
    mesh: String,
    triangles: usize,
    grid_hash: String,
    max_level: u8,
    shift_applied: bool,
    config: &'a SolveConfig,
    converged: bool,
    levels: &'a [SolveReport],
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

/// Solve settings from the flags, with unset values taken from the defaults.
pub fn solve_config(args: &SolveArgs) -> Result<(SolveConfig, GridParams)> {
    let degree = Degree::try_from(args.degree)?;
    let execution = execution(args.sequential);
    let d = SolveConfig::default();
    let cfg = SolveConfig {
        degree,
        boundary_weight: args.boundary_weight.unwrap_or(d.boundary_weight),
        smoothness: args.smoothness.unwrap_or(d.smoothness),
        outer_iterations: args.iters.unwrap_or(d.outer_iterations),
        projection_period: args.proj_period.unwrap_or(d.projection_period),
        seed: args.seed.unwrap_or(d.seed),
        random_init: args.random_init,
        execution,
        ..d
    };
    cfg.validate()?;
    let params = GridParams {
        max_level: args.max_level,
        degree,
        shift: !args.no_shift,
        execution,
        ..GridParams::default()
    };
    params.validate()?;
    Ok((cfg, params))
}

pub fn solve(args: &SolveArgs) -> Result<Status> {
    if !args.input.is_file() {
        return Err(CliError::Invalid(format!("input mesh {} is not a readable file", args.input.display())));
    }
    if args.out.exists() && !args.out.is_dir() {
        return Err(CliError::Invalid(format!("output {} exists and is not a directory", args.out.display())));
    }
    let (cfg, params) = solve_config(args)?;
    let surface = TriangleSurface::load(&args.input)?;
    let open = surface.open_edge_count();
    if open > 0 {
        warn!("{}: {open} edges are not shared by exactly two triangles", args.input.display());
    }
    if params.shift && !params.shift_active() {
        warn!("the spectral shift is only defined for degree 3; degree-4 cell penalties stay unshifted");
    }

    let cache = args.out.join(CACHE_FILE);
    let use_cache = !args.no_cache;
    let grid = if use_cache && cache.exists() {
        GridHierarchy::build_cached(&surface, params, &cache)?
    } else {
        GridHierarchy::build(&surface, params)?
    };
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    if use_cache && !cache.exists() {
        grid.save_cache(&cache)?;
    }
    info!(
        "grid {}: {} levels, {} finest cells",
        grid.fingerprint(),
        grid.levels().len(),
        grid.leaf_cells().len()
    );

    let (field, reports) = solve_coarse_to_fine(&grid, &cfg)?;
    for r in &reports {
        println!(
            "level {}: {} cells ({} boundary), {} outer / {} CG iterations, energy {:.6e} -> {:.6e}{}",
            r.level,
            r.cells,
            r.boundary_cells,
            r.outer_iterations,
            r.cg_iterations,
            r.initial_energy,
            r.energy,
            if r.converged { "" } else { " (not converged)" }
        );
    }
    let converged = reports.iter().all(|r| r.converged);

    let file = FieldFile::from_field(&grid, &field)?;
    file.write_json(&args.out.join(FIELD_FILE))?;
    file.write_ply_frames(&args.out.join(FRAMES_FILE))?;
    let run = RunReport {
        mesh: args.input.display().to_string(),
        triangles: surface.len(),
        grid_hash: grid.fingerprint(),
        max_level: grid.max_level(),
        shift_applied: params.shift_active(),
        config: &cfg,
        converged,
        levels: &reports,
    };
    match args.report {
        ReportFormat::Json => write_json(&args.out.join("report.json"), &run)?,
        ReportFormat::Csv => write_report_csv(&args.out.join("report.csv"), &reports)?,
    }
    println!("wrote {}", args.out.display());
    Ok(if converged { Status::Converged } else { Status::NotConverged })
}

fn write_report_csv(path: &Path, reports: &[SolveReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
    w.write_record([
        "level",
        "cells",
        "boundary_cells",
        "outer_iterations",
        "cg_iterations",
        "initial_energy",
        "energy",
        "residual",
        "frame_residual_max",
        "boundary_penalty_per_area",
        "converged",
        "wall_time_s",
    ])
    .map_err(|e| CliError::csv(path, e))?;
    for r in reports {
        w.write_record([
            r.level.to_string(),
            r.cells.to_string(),
            r.boundary_cells.to_string(),
            r.outer_iterations.to_string(),
            r.cg_iterations.to_string(),
            r.initial_energy.to_string(),
            r.energy.to_string(),
            r.residual.to_string(),
            r.frame_residual_max.to_string(),
            r.boundary_penalty_per_area.to_string(),
            r.converged.to_string(),
            r.wall_time_s.to_string(),
        ])
        .map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// A dumped penalty: a bare symmetric matrix or a packed cell penalty.
#[derive(Deserialize)]
#[serde(untagged)]
enum Dump {
    Matrix(Vec<Vec<f64>>),
    Packed(PackedPenalty),
}

fn max_delta(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn max_eigenvalue_delta(r: &SpectralReport, expected: &[f64]) -> f64 {
    r.eigenvalues.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// `Span{h̃, R_y(π/4)·h̃}`: the reference frame spun about y.
fn y_rotation_family() -> DMatrix<f64> {
    let h = reference(Degree::Three).into_vector();
    let turned = rot_y(Degree::Three, FRAC_PI_4).matrix() * &h;
    orthonormalize(&DMatrix::from_columns(&[h, turned]))
}

fn spectral_report(case: &SpectralCase) -> Result<Value> {
    Ok(match case {
        SpectralCase::Cube => {
            let p = cube_penalty();
            let r = eigen_sym(p.matrix())?;
            let h = DMatrix::from_column_slice(7, 1, reference(Degree::Three).as_slice());
            json!({
                "case": "cube",
                "spectrum": r,
                "checks": {
                    "max_matrix_delta": max_delta(p.matrix(), &cube_matrix_exact()),
                    "max_eigenvalue_delta": max_eigenvalue_delta(&r, &CUBE_EIGENVALUES),
                    "null_space_angle": max_principal_angle(&r.null_space(), &h),
                },
            })
        }
        SpectralCase::Cylinder => {
            let p = cylinder_average(Degree::Three, &UnitVector3::y_axis())?;
            let r = eigen_sym(p.matrix())?;
            let shifted = eigen_sym(p.spectral_shift()?.matrix())?;
            json!({
                "case": "cylinder",
                "spectrum": r,
                "shifted": shifted,
                "checks": {
                    "max_matrix_delta": max_delta(p.matrix(), &cylinder_matrix_exact()),
                    "max_eigenvalue_delta": max_eigenvalue_delta(&r, &CYLINDER_EIGENVALUES),
                    "shifted_null_space_angle": max_principal_angle(&shifted.lowest(2), &y_rotation_family()),
                },
            })
        }
        SpectralCase::Sphere => {
            let p = sphere_average(Degree::Three)?;
            let r = eigen_sym(p.matrix())?;
            let target = DMatrix::identity(7, 7) * SPHERE_DIAGONAL;
            json!({
                "case": "sphere",
                "spectrum": r,
                "checks": {
                    "max_delta_from_scaled_identity": max_delta(p.matrix(), &target),
                    "shifted_max_entry": p.spectral_shift()?.matrix().abs().max(),
                },
            })
        }
        SpectralCase::Dump { path } => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let dump: Dump = serde_json::from_str(&text).map_err(|e| CliError::json(path, e))?;
            match dump {
                Dump::Matrix(rows) => {
                    let n = rows.len();
                    if n == 0 || rows.iter().any(|r| r.len() != n) {
                        return Err(CliError::Invalid(format!("{}: matrix must be square", path.display())));
                    }
                    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                    json!({ "case": "dump", "size": n, "spectrum": eigen_sym(&m)? })
                }
                Dump::Packed(packed) => {
                    let p: BoundaryPenalty = packed.unpack()?;
                    let r = eigen_sym(p.matrix())?;
                    let shifted = match p.degree() {
                        Degree::Three => Some(eigen_sym(p.spectral_shift()?.matrix())?),
                        Degree::Four => {
                            warn!("the spectral shift is only defined for degree 3");
                            None
                        }
                    };
                    json!({
                        "case": "dump",
                        "degree": p.degree(),
                        "total_weight": p.total_weight(),
                        "spectrum": r,
                        "shifted": shifted,
                    })
                }
            }
        }
    })
}

pub fn spectral(args: &SpectralArgs) -> Result<()> {
    let report = spectral_report(&args.case)?;
    match &args.out {
        Some(path) => write_json(path, &report),
        None => {
            let text = serde_json::to_string_pretty(&report).expect("JSON values serialize");
            // A closed pipe (`| head`) is not an error.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            Ok(())
        }
    }
}

pub fn export(args: &ExportArgs) -> Result<()> {
    let file = FieldFile::read(&args.field)?;
    match args.format {
        ExportFormat::Json => file.write_json(&args.out)?,
        ExportFormat::Csv => file.write_csv(&args.out)?,
        ExportFormat::PlyFrames => file.write_ply_frames(&args.out)?,
    }
    println!("wrote {} cells to {}", file.cells.len(), args.out.display());
    Ok(())
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    if !(args.size > 0.0 && args.size.is_finite()) || args.resolution == 0 {
        return Err(CliError::Invalid("size and resolution must be positive".into()));
    }
    let s = args.size;
    let surface = match args.shape {
        Shape::Cube => TriangleSurface::cube(s / 2.0),
        Shape::Sphere => TriangleSurface::icosphere(Vector3::zeros(), s / 2.0, args.resolution),
        Shape::Cylinder => TriangleSurface::cylinder(Vector3::zeros(), s / 4.0, s, 8 * args.resolution, args.resolution),
    };
    surface.write_stl(&args.out)?;
    println!("wrote {} triangles to {}", surface.len(), args.out.display());
    Ok(())
}
