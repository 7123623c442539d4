//! Plain-text conic-program interchange: export for external solvers and
//! solution import for cross-validation.
//!
//! The format (documented in `docs/sdp-format.md`) is line-oriented:
//!
//! ```text
//! icp 1
//! var <name> <len>              # decision blocks, in order
//! objective quadratic|linear
//! constant <r>
//! q <n values>
//! P <nnz>                       # only for quadratic objectives
//! <i> <j> <value>               # nnz entries of the symmetric P
//! cone nonneg|soc <dim> <label>
//! cone psd <side> <label>
//! G <nnz>
//! <row> <col> <value>
//! h <m values>
//! end
//! ```
//!
//! PSD blocks use the svec packing (lower triangle column-major, √2 on
//! off-diagonals), matching the in-process representation, so inner
//! products of packed vectors are trace inner products.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use inertia_core::sdp::{ConeSpec, ConicProgram, VarLayout};

use crate::CliError;

/// Serialize a program to the interchange text.
pub fn write_program(prog: &ConicProgram) -> String {
    let mut out = String::new();
    out.push_str("icp 1\n");
    for (name, range) in prog.layout.iter() {
        writeln!(out, "var {} {}", name, range.len()).unwrap();
    }
    match &prog.quadratic {
        Some(p) => {
            out.push_str("objective quadratic\n");
            writeln!(out, "constant {:.17e}", prog.constant).unwrap();
            out.push_str("q");
            for v in prog.linear.iter() {
                write!(out, " {v:.17e}").unwrap();
            }
            out.push('\n');
            let nnz: Vec<(usize, usize, f64)> = (0..p.nrows())
                .flat_map(|i| (0..p.ncols()).map(move |j| (i, j)))
                .filter(|&(i, j)| p[(i, j)] != 0.0)
                .map(|(i, j)| (i, j, p[(i, j)]))
                .collect();
            writeln!(out, "P {}", nnz.len()).unwrap();
            for (i, j, v) in nnz {
                writeln!(out, "{i} {j} {v:.17e}").unwrap();
            }
        }
        None => {
            out.push_str("objective linear\n");
            writeln!(out, "constant {:.17e}", prog.constant).unwrap();
            out.push_str("q");
            for v in prog.linear.iter() {
                write!(out, " {v:.17e}").unwrap();
            }
            out.push('\n');
        }
    }
    for block in &prog.blocks {
        match block.cone {
            ConeSpec::NonNeg(d) => writeln!(out, "cone nonneg {d} {}", block.label).unwrap(),
            ConeSpec::Soc(d) => writeln!(out, "cone soc {d} {}", block.label).unwrap(),
            ConeSpec::Psd(n) => writeln!(out, "cone psd {n} {}", block.label).unwrap(),
        }
    }
    let g = &prog.g;
    let nnz: Vec<(usize, usize, f64)> = (0..g.nrows())
        .flat_map(|i| (0..g.ncols()).map(move |j| (i, j)))
        .filter(|&(i, j)| g[(i, j)] != 0.0)
        .map(|(i, j)| (i, j, g[(i, j)]))
        .collect();
    writeln!(out, "G {}", nnz.len()).unwrap();
    for (i, j, v) in nnz {
        writeln!(out, "{i} {j} {v:.17e}").unwrap();
    }
    out.push_str("h");
    for v in prog.h.iter() {
        write!(out, " {v:.17e}").unwrap();
    }
    out.push_str("\nend\n");
    out
}

fn parse_err(line_no: usize, msg: impl Into<String>) -> CliError {
    CliError::Data(format!("icp line {line_no}: {}", msg.into()))
}

/// Parse the interchange text back into a program (used by the round-trip
/// tests and the solution comparison).
pub fn read_program(text: &str) -> Result<ConicProgram, CliError> {
    let mut lines = text.lines().enumerate().peekable();
    let (no, first) = lines.next().ok_or_else(|| parse_err(0, "empty file"))?;
    if first.trim() != "icp 1" {
        return Err(parse_err(no + 1, "expected header `icp 1`"));
    }

    let mut layout = VarLayout::new();
    let mut quadratic_entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut is_quadratic = false;
    let mut constant = 0.0;
    let mut q: Option<DVector<f64>> = None;
    let mut cones: Vec<(ConeSpec, String)> = Vec::new();
    let mut g_entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut h: Option<DVector<f64>> = None;

    while let Some((idx, raw)) = lines.next() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next().unwrap() {
            "var" => {
                let name = parts
                    .next()
                    .ok_or_else(|| parse_err(line_no, "var needs a name"))?;
                let len: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(line_no, "var needs a length"))?;
                layout
                    .push(name, len)
                    .map_err(|e| parse_err(line_no, e.to_string()))?;
            }
            "objective" => {
                is_quadratic = match parts.next() {
                    Some("quadratic") => true,
                    Some("linear") => false,
                    _ => return Err(parse_err(line_no, "objective must be quadratic|linear")),
                };
            }
            "constant" => {
                constant = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(line_no, "bad constant"))?;
            }
            "q" => {
                let vals: Result<Vec<f64>, _> = parts.map(|s| s.parse::<f64>()).collect();
                q = Some(DVector::from_vec(
                    vals.map_err(|_| parse_err(line_no, "bad q entry"))?,
                ));
            }
            "P" => {
                let count: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(line_no, "bad P count"))?;
                for _ in 0..count {
                    let (eno, entry) = lines
                        .next()
                        .ok_or_else(|| parse_err(line_no, "truncated P block"))?;
                    let mut f = entry.split_whitespace();
                    let i: usize = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(eno + 1, "bad P row"))?;
                    let j: usize = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(eno + 1, "bad P col"))?;
                    let v: f64 = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(eno + 1, "bad P value"))?;
                    quadratic_entries.push((i, j, v));
                }
            }
            "cone" => {
                let kind = parts
                    .next()
                    .ok_or_else(|| parse_err(line_no, "cone needs a kind"))?;
                let dim: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(line_no, "cone needs a dimension"))?;
                let label = parts.collect::<Vec<_>>().join(" ");
                let spec = match kind {
                    "nonneg" => ConeSpec::NonNeg(dim),
                    "soc" => ConeSpec::Soc(dim),
                    "psd" => ConeSpec::Psd(dim),
                    other => return Err(parse_err(line_no, format!("unknown cone `{other}`"))),
                };
                cones.push((spec, label));
            }
            "G" => {
                let count: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(line_no, "bad G count"))?;
                for _ in 0..count {
                    let (eno, entry) = lines
                        .next()
                        .ok_or_else(|| parse_err(line_no, "truncated G block"))?;
                    let mut f = entry.split_whitespace();
                    let i: usize = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(eno + 1, "bad G row"))?;
                    let j: usize = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(eno + 1, "bad G col"))?;
                    let v: f64 = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(eno + 1, "bad G value"))?;
                    g_entries.push((i, j, v));
                }
            }
            "h" => {
                let vals: Result<Vec<f64>, _> = parts.map(|s| s.parse::<f64>()).collect();
                h = Some(DVector::from_vec(
                    vals.map_err(|_| parse_err(line_no, "bad h entry"))?,
                ));
            }
            "end" => break,
            other => return Err(parse_err(line_no, format!("unknown directive `{other}`"))),
        }
    }

    let n = layout.len();
    let mut prog = ConicProgram::new(layout);
    let q = q.ok_or_else(|| parse_err(0, "missing q line"))?;
    if q.len() != n {
        return Err(parse_err(0, format!("q has {} entries, expected {n}", q.len())));
    }
    if is_quadratic {
        let mut p = DMatrix::zeros(n, n);
        for (i, j, v) in quadratic_entries {
            if i >= n || j >= n {
                return Err(parse_err(0, "P entry out of range"));
            }
            p[(i, j)] = v;
        }
        prog.set_quadratic_objective(p, q, constant)
            .map_err(|e| parse_err(0, e.to_string()))?;
    } else {
        prog.set_linear_objective(q, constant);
    }

    let h = h.ok_or_else(|| parse_err(0, "missing h line"))?;
    let total: usize = cones.iter().map(|(c, _)| c.dim()).sum();
    if h.len() != total {
        return Err(parse_err(
            0,
            format!("h has {} entries, cones need {total}", h.len()),
        ));
    }
    let mut g = DMatrix::zeros(total, n);
    for (i, j, v) in g_entries {
        if i >= total || j >= n {
            return Err(parse_err(0, "G entry out of range"));
        }
        g[(i, j)] = v;
    }
    let mut at = 0usize;
    for (spec, label) in cones {
        let d = spec.dim();
        prog.add_block(
            spec,
            label,
            g.rows(at, d).into_owned(),
            h.rows(at, d).into_owned(),
        )
        .map_err(|e| parse_err(0, e.to_string()))?;
        at += d;
    }
    Ok(prog)
}

/// Parse an external solution file: `icp-solution 1` followed by
/// `x <n values>`.
pub fn read_solution(text: &str) -> Result<DVector<f64>, CliError> {
    let mut x = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if idx == 0 {
            if line != "icp-solution 1" {
                return Err(parse_err(1, "expected header `icp-solution 1`"));
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("x ") {
            let vals: Result<Vec<f64>, _> =
                rest.split_whitespace().map(|s| s.parse::<f64>()).collect();
            x = Some(DVector::from_vec(
                vals.map_err(|_| parse_err(idx + 1, "bad x entry"))?,
            ));
        }
    }
    x.ok_or_else(|| parse_err(0, "missing x line"))
}

/// Serialize a solution vector for external comparison.
pub fn write_solution(x: &DVector<f64>) -> String {
    let mut out = String::from("icp-solution 1\nx");
    for v in x.iter() {
        write!(out, " {v:.17e}").unwrap();
    }
    out.push('\n');
    out
}

/// Feasibility/objective summary of a candidate point against a program.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SolutionComparison {
    /// Objective at the candidate.
    pub objective: f64,
    /// Worst cone violation of `h - Gx` (nonnegative, 0 = feasible).
    pub worst_cone_violation: f64,
    /// Per-block minimum slack (negative = violated).
    pub block_slacks: Vec<(String, f64)>,
}

/// Evaluate an external solution against a program.
pub fn compare_solution(prog: &ConicProgram, x: &DVector<f64>) -> Result<SolutionComparison, CliError> {
    if x.len() != prog.n_vars() {
        return Err(CliError::Data(format!(
            "solution has {} entries, program has {} variables",
            x.len(),
            prog.n_vars()
        )));
    }
    let s = &prog.h - &prog.g * x;
    let mut slacks = Vec::new();
    let mut worst: f64 = 0.0;
    let mut at = 0usize;
    for block in &prog.blocks {
        let d = block.cone.dim();
        let sb = s.rows(at, d);
        let min_slack = match block.cone {
            ConeSpec::NonNeg(_) => sb.iter().copied().fold(f64::INFINITY, f64::min),
            ConeSpec::Soc(_) => {
                let tail: f64 = sb.iter().skip(1).map(|v| v * v).sum::<f64>().sqrt();
                sb[0] - tail
            }
            ConeSpec::Psd(nn) => {
                let m = inertia_core::sdp::smat(sb.as_slice(), nn);
                m.symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            }
        };
        worst = worst.max((-min_slack).max(0.0));
        slacks.push((block.label.clone(), min_slack));
        at += d;
    }
    Ok(SolutionComparison {
        objective: prog.objective_at(x),
        worst_cone_violation: worst,
        block_slacks: slacks,
    })
}
