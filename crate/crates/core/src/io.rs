//! CSV writers shared by solvers, diagnostics and the CLI.

use std::fmt::Write as _;

use crate::grid::SpatialGrid;
use crate::system::FieldState;

/// 17 significant digits, locale-free (`1.2345678901234567e-3`).
pub fn fmt_num(v: f64) -> String {
    // normalise negative zero
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

fn coordinate_header(grid: &SpatialGrid) -> &'static str {
    if grid.dim() == 1 {
        "x"
    } else {
        "x,y"
    }
}

fn push_row(out: &mut String, grid: &SpatialGrid, cell: usize, values: impl Iterator<Item = f64>) {
    let mut first = true;
    for c in grid.point(cell).into_iter().chain(values) {
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&fmt_num(c));
    }
    out.push('\n');
}

/// Snapshot CSV with columns `x[,y],uI_1..uI_k,uII_1..uII_m`.
pub fn snapshot_csv(grid: &SpatialGrid, state: &FieldState) -> String {
    let mut out = String::from(coordinate_header(grid));
    for i in 1..=state.u_i.len() {
        let _ = write!(out, ",uI_{i}");
    }
    for i in 1..=state.u_ii.len() {
        let _ = write!(out, ",uII_{i}");
    }
    out.push('\n');
    for cell in 0..grid.len() {
        let vals = state.u_i.iter().chain(&state.u_ii).map(|c| c[cell]);
        push_row(&mut out, grid, cell, vals);
    }
    out
}

/// Parabolic snapshot CSV with columns `x[,y],u_1..u_k`.
pub fn field_csv(grid: &SpatialGrid, fields: &[Vec<f64>]) -> String {
    let mut out = String::from(coordinate_header(grid));
    for i in 1..=fields.len() {
        let _ = write!(out, ",u_{i}");
    }
    out.push('\n');
    for cell in 0..grid.len() {
        push_row(&mut out, grid, cell, fields.iter().map(|c| c[cell]));
    }
    out
}
