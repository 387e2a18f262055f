//! Nodal field files: a header `x1,x2,<names...>` followed by one row per
//! node in grid order (x1 fastest), values in `{:.16e}` so that reading a
//! written file reproduces every value bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use fvk_core::{Displacement, Grid2D, GridField, ScalarField};
use nalgebra::Vector2;

use crate::CliError;

/// Position tolerance when matching file coordinates to grid nodes.
const NODE_TOL: f64 = 1e-12;

pub fn write_fields(path: &Path, grid: &Grid2D, columns: &[(&str, &[f64])]) -> Result<(), CliError> {
    let mut out = String::with_capacity(grid.len() * (columns.len() + 2) * 25);
    out.push_str("x1,x2");
    for (name, values) in columns {
        assert_eq!(values.len(), grid.len(), "column `{name}` does not match the grid");
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for k in 0..grid.len() {
        let (x, y) = grid.point(k);
        out.push_str(&format!("{x:.16e},{y:.16e}"));
        for (_, values) in columns {
            out.push_str(&format!(",{:.16e}", values[k]));
        }
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| CliError::io(path, e))
}

/// Columns of a field file, checked against `grid`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldTable {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl FieldTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.columns[k].as_slice())
    }
}

pub fn read_fields(path: &Path, grid: &Grid2D) -> Result<FieldTable, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_fields(&text, grid).map_err(|(line, message)| CliError::FieldFile {
        path: path.to_path_buf(),
        line,
        message,
    })
}

fn parse_fields(text: &str, grid: &Grid2D) -> Result<FieldTable, (usize, String)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (_, header) = lines.next().ok_or((1, "empty file".to_string()))?;
    let head: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if head.len() < 2 || head[0] != "x1" || head[1] != "x2" {
        return Err((1, format!("header must start with `x1,x2`, found `{header}`")));
    }
    let names = head[2..].to_vec();
    let mut columns = vec![Vec::with_capacity(grid.len()); names.len()];
    let mut k = 0;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if k == grid.len() {
            return Err((line_no, format!("more rows than the {} grid nodes", grid.len())));
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != head.len() {
            return Err((line_no, format!("expected {} cells, found {}", head.len(), cells.len())));
        }
        let mut row = Vec::with_capacity(cells.len());
        for c in cells {
            row.push(
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| (line_no, format!("not a number: `{}`", c.trim())))?,
            );
        }
        let (x, y) = grid.point(k);
        if (row[0] - x).abs() > NODE_TOL || (row[1] - y).abs() > NODE_TOL {
            return Err((
                line_no,
                format!("row is at ({}, {}) but grid node {k} is at ({x}, {y})", row[0], row[1]),
            ));
        }
        for (col, v) in columns.iter_mut().zip(&row[2..]) {
            col.push(*v);
        }
        k += 1;
    }
    if k != grid.len() {
        return Err((
            text.lines().count(),
            format!("found {k} rows, the grid has {} nodes", grid.len()),
        ));
    }
    Ok(FieldTable { names, columns })
}

pub fn write_displacement(path: &Path, d: &Displacement) -> Result<(), CliError> {
    let w1: Vec<f64> = d.w.values.iter().map(|w| w[0]).collect();
    let w2: Vec<f64> = d.w.values.iter().map(|w| w[1]).collect();
    write_fields(path, &d.grid(), &[("w1", &w1), ("w2", &w2), ("v", &d.v.values)])
}

pub fn read_displacement(path: &Path, grid: &Grid2D) -> Result<Displacement, CliError> {
    let table = read_fields(path, grid)?;
    let get = |name: &str| {
        table
            .column(name)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| CliError::FieldFile {
                path: path.to_path_buf(),
                line: 1,
                message: format!("missing column `{name}`"),
            })
    };
    let (w1, w2, v) = (get("w1")?, get("w2")?, get("v")?);
    let w = w1.iter().zip(&w2).map(|(a, b)| Vector2::new(*a, *b)).collect();
    Ok(Displacement {
        w: GridField::new(*grid, w)?,
        v: ScalarField::new(*grid, v)?,
    })
}
