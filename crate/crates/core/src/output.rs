//! CSV and VTK legacy writers. Floats use `{:.16e}` so identical states
//! give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::diagnostics::AuditReport;
use crate::scenario::SnapshotFormat;
use crate::solver::{Problem, SolverState};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Snapshot of one state as text.
pub fn snapshot_text(state: &SolverState, problem: &Problem, format: SnapshotFormat, title: &str) -> String {
    let grid = &problem.grid;
    let sat = state.saturations(problem);
    let h = state.pressures(problem);
    let mut out = String::new();
    match format {
        SnapshotFormat::Csv => {
            out.push_str("i,j,x,z,s_o,s_w,h_o,h_w,u\n");
            for k in 0..grid.n_cells() {
                let (x, z) = grid.cell_center(k);
                let vals = [x, z, sat.s_o[k], sat.s_w[k], h.h_o[k], h.h_w[k], state.u[k]];
                let vals: Vec<String> = vals.iter().map(|v| fmt_f64(*v)).collect();
                writeln!(out, "{},{},{}", k % grid.nx, k / grid.nx, vals.join(",")).unwrap();
            }
        }
        SnapshotFormat::Vtk => {
            let title = title.replace('\n', " ");
            writeln!(out, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET STRUCTURED_POINTS").unwrap();
            writeln!(out, "DIMENSIONS {} {} 2", grid.nx + 1, grid.ny + 1).unwrap();
            writeln!(out, "ORIGIN 0 0 0").unwrap();
            writeln!(out, "SPACING {} {} 1", fmt_f64(grid.dx), fmt_f64(grid.dy)).unwrap();
            writeln!(out, "CELL_DATA {}", grid.n_cells()).unwrap();
            let fields: [(&str, &[f64]); 3] = [("s_o", &sat.s_o.values), ("h_w", &h.h_w.values), ("u", &state.u.values)];
            for (name, vals) in fields {
                writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
                for v in vals {
                    writeln!(out, "{}", fmt_f64(*v)).unwrap();
                }
            }
        }
    }
    out
}

pub fn write_snapshot(
    state: &SolverState,
    problem: &Problem,
    path: &Path,
    format: SnapshotFormat,
) -> std::io::Result<()> {
    let title = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    fs::write(path, snapshot_text(state, problem, format, &title))
}

pub const SERIES_HEADER: &str = "step,t,tau,E,D,dE_dt_chain,m_o,m_w,min_s_o,max_s_o";

/// Time series of an audited trajectory; row 0 is the initial state.
pub fn series_text(report: &AuditReport) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for r in &report.records {
        let vals = [r.t, r.tau, r.energy, r.dissipation, r.de_dt_chain, r.m_o, r.m_w, r.min_s_o, r.max_s_o];
        let vals: Vec<String> = vals.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(out, "{},{}", r.step, vals.join(",")).unwrap();
    }
    out
}

pub fn violations_text(report: &AuditReport) -> String {
    let mut out = String::from("step,kind,magnitude\n");
    for v in &report.violations {
        writeln!(out, "{},{:?},{}", v.step, v.kind, fmt_f64(v.magnitude)).unwrap();
    }
    out
}
