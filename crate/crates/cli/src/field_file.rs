//! Versioned JSON field files and their exports.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use specfield::solver::Field;
use specfield::{frame_axes, recover_frame, Degree, FrameOrientation, GridHierarchy};

use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldFile {
    pub format_version: u32,
    pub degree: Degree,
    /// Fingerprint of the grid the field was solved on.
    pub grid_hash: String,
    pub level: usize,
    pub cells: Vec<CellRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub center: [f64; 3],
    pub level: u8,
    /// Cell side length.
    pub size: f64,
    pub coefficients: Vec<f64>,
    /// `(α, β, γ)` in radians.
    pub euler: [f64; 3],
    /// Distance from the coefficients to the nearest frame.
    pub residual: f64,
}

#[derive(Deserialize)]
struct Header {
    format_version: u32,
}

impl FieldFile {
    pub fn from_field(grid: &GridHierarchy, field: &Field) -> Result<Self> {
        let level = grid.level(field.level)?;
        let cells = level
            .cells
            .iter()
            .zip(&field.coeffs)
            .enumerate()
            .map(|(i, (cell, h))| {
                let b = grid.cell_box(field.level, i);
                let (_, residual) = recover_frame(h)?;
                let f = FrameOrientation::from_rotation(&field.rotations[i]);
                Ok(CellRecord {
                    center: b.center().into(),
                    level: cell.level,
                    size: b.extent().x,
                    coefficients: h.as_slice().to_vec(),
                    euler: [f.alpha, f.beta, f.gamma],
                    residual,
                })
            })
            .collect::<Result<_>>()?;
        Ok(FieldFile {
            format_version: FORMAT_VERSION,
            degree: field.degree,
            grid_hash: grid.fingerprint(),
            level: field.level,
            cells,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let header: Header = serde_json::from_str(&text).map_err(|e| CliError::json(path, e))?;
        if header.format_version != FORMAT_VERSION {
            return Err(CliError::Version {
                found: header.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let file: FieldFile = serde_json::from_str(&text).map_err(|e| CliError::json(path, e))?;
        let dim = file.degree.dim();
        if let Some(bad) = file.cells.iter().position(|c| c.coefficients.len() != dim) {
            return Err(CliError::Invalid(format!(
                "{}: cell {bad} has {} coefficients, expected {dim}",
                path.display(),
                file.cells[bad].coefficients.len()
            )));
        }
        Ok(file)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
        let mut header: Vec<String> = ["x", "y", "z", "level", "size", "alpha", "beta", "gamma", "residual"]
            .map(String::from)
            .to_vec();
        header.extend((0..self.degree.dim()).map(|k| format!("c{k}")));
        w.write_record(&header).map_err(|e| CliError::csv(path, e))?;
        for c in &self.cells {
            let mut row: Vec<String> = c.center.iter().map(f64::to_string).collect();
            row.push(c.level.to_string());
            row.push(c.size.to_string());
            row.extend(c.euler.iter().map(f64::to_string));
            row.push(c.residual.to_string());
            row.extend(c.coefficients.iter().map(f64::to_string));
            w.write_record(&row).map_err(|e| CliError::csv(path, e))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }

    /// ASCII PLY with three edges per cell, one per frame axis, each as long
    /// as the cell and centered on it.
    pub fn write_ply_frames(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        let n = self.cells.len();
        writeln!(out, "ply\nformat ascii 1.0").unwrap();
        writeln!(out, "element vertex {}", 6 * n).unwrap();
        writeln!(out, "property double x\nproperty double y\nproperty double z").unwrap();
        writeln!(out, "element edge {}", 3 * n).unwrap();
        writeln!(out, "property int vertex1\nproperty int vertex2\nend_header").unwrap();
        for c in &self.cells {
            let center = Vector3::from(c.center);
            let f = FrameOrientation::new(c.euler[0], c.euler[1], c.euler[2]);
            for axis in frame_axes(&f) {
                for p in [center - axis * (c.size / 2.0), center + axis * (c.size / 2.0)] {
                    writeln!(out, "{} {} {}", p.x, p.y, p.z).unwrap();
                }
            }
        }
        for k in 0..3 * n {
            writeln!(out, "{} {}", 2 * k, 2 * k + 1).unwrap();
        }
        fs::write(path, out).map_err(|e| CliError::io(path, e))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}
