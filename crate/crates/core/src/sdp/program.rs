//! Conic program representation.
//!
//! Problems are stored in the inequality form
//!
//! ```text
//! minimize    ½ xᵀP x + qᵀx + r          (P omitted for linear objectives)
//! subject to  h - G x ∈ K
//! ```
//!
//! where `K` is a product of nonnegative-orthant, second-order, and
//! positive-semidefinite cone blocks. PSD blocks use the scaled-vector
//! (svec) packing of symmetric matrices so that inner products of packed
//! vectors equal trace inner products of the matrices.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{DMatrix, DVector};

/// Errors from program assembly.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProgramError {
    /// Two decision blocks share a name.
    #[error("decision block `{0}` declared twice")]
    DuplicateBlock(String),
    /// A constraint block's rows do not match its cone dimension.
    #[error("constraint `{label}` has {rows} rows but the cone needs {expected}")]
    BlockDimension {
        /// Constraint label.
        label: String,
        /// Supplied row count.
        rows: usize,
        /// Required row count.
        expected: usize,
    },
    /// A constraint block's columns do not match the decision dimension.
    #[error("constraint `{label}` has {cols} columns but the program has {expected} variables")]
    BlockColumns {
        /// Constraint label.
        label: String,
        /// Supplied column count.
        cols: usize,
        /// Required column count.
        expected: usize,
    },
    /// The quadratic term has the wrong shape.
    #[error("quadratic objective must be {n}×{n}, got {rows}×{cols}")]
    QuadraticShape {
        /// Decision dimension.
        n: usize,
        /// Supplied rows.
        rows: usize,
        /// Supplied columns.
        cols: usize,
    },
    /// A second-order cone needs dimension at least 2.
    #[error("second-order cone dimension must be ≥ 2, got {0}")]
    SocDimension(usize),
}

/// One cone factor of the product cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeSpec {
    /// Componentwise nonnegativity of the given dimension.
    NonNeg(usize),
    /// Second-order cone `{(s₀, s̄) : s₀ ≥ ‖s̄‖}` of the given total dimension.
    Soc(usize),
    /// Positive semidefinite cone of `n × n` symmetric matrices (svec packed).
    Psd(usize),
}

impl ConeSpec {
    /// Packed dimension of the cone.
    pub fn dim(&self) -> usize {
        match *self {
            ConeSpec::NonNeg(d) => d,
            ConeSpec::Soc(d) => d,
            ConeSpec::Psd(n) => svec_dim(n),
        }
    }

    /// Contribution to the cone degree (the ν in `μ = sᵀz / ν`).
    pub fn degree(&self) -> usize {
        match *self {
            ConeSpec::NonNeg(d) => d,
            ConeSpec::Soc(_) => 1,
            ConeSpec::Psd(n) => n,
        }
    }
}

/// Packed dimension of an `n × n` symmetric matrix.
pub fn svec_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

const SQRT2: f64 = core::f64::consts::SQRT_2;

/// Pack a symmetric matrix into svec order (lower triangle, column-major,
/// off-diagonal entries scaled by √2).
pub fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut out = DVector::zeros(svec_dim(n));
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            out[k] = if i == j { m[(i, j)] } else { SQRT2 * m[(i, j)] };
            k += 1;
        }
    }
    out
}

/// Unpack an svec vector into the full symmetric matrix.
pub fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    debug_assert_eq!(v.len(), svec_dim(n));
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            if i == j {
                m[(i, j)] = v[k];
            } else {
                let val = v[k] / SQRT2;
                m[(i, j)] = val;
                m[(j, i)] = val;
            }
            k += 1;
        }
    }
    m
}

/// Named layout of the decision vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarLayout {
    names: Vec<(String, Range<usize>)>,
    len: usize,
}

impl VarLayout {
    /// Empty layout.
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a named block of the given length, returning its index range.
    /// A name may appear only once.
    pub fn push(&mut self, name: impl Into<String>, len: usize) -> Result<Range<usize>, ProgramError> {
        let name = name.into();
        if self.names.iter().any(|(n, _)| *n == name) {
            return Err(ProgramError::DuplicateBlock(name));
        }
        let range = self.len..self.len + len;
        self.names.push((name, range.clone()));
        self.len += len;
        Ok(range)
    }

    /// Look a block up by name.
    pub fn get(&self, name: &str) -> Option<Range<usize>> {
        self.names
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
    }

    /// Total decision dimension.
    pub fn len(&self) -> usize {
        self.len
    }

    /// Whether the layout is empty.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Iterate over `(name, range)` pairs in declaration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, Range<usize>)> {
        self.names.iter().map(|(n, r)| (n.as_str(), r.clone()))
    }
}

/// One cone block of the constraint `h - G x ∈ K`, with a label used in
/// diagnostics ("body2/pseudo-inertia", "friction", ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBlock {
    /// Cone of this block.
    pub cone: ConeSpec,
    /// Diagnostic label.
    pub label: String,
}

/// A conic optimization problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    /// Decision-vector layout.
    pub layout: VarLayout,
    /// Optional quadratic objective term `P` (symmetric PSD).
    pub quadratic: Option<DMatrix<f64>>,
    /// Linear objective term `q`.
    pub linear: DVector<f64>,
    /// Objective constant `r`.
    pub constant: f64,
    /// Stacked constraint matrix `G`.
    pub g: DMatrix<f64>,
    /// Stacked offset `h`.
    pub h: DVector<f64>,
    /// Cone blocks in row order.
    pub blocks: Vec<ConstraintBlock>,
}

impl ConicProgram {
    /// New program with zero objective and no constraints.
    pub fn new(layout: VarLayout) -> Self {
        let n = layout.len();
        ConicProgram {
            layout,
            quadratic: None,
            linear: DVector::zeros(n),
            constant: 0.0,
            g: DMatrix::zeros(0, n),
            h: DVector::zeros(0),
            blocks: Vec::new(),
        }
    }

    /// Number of decision variables.
    pub fn n_vars(&self) -> usize {
        self.layout.len()
    }

    /// Total packed cone dimension.
    pub fn cone_dim(&self) -> usize {
        self.g.nrows()
    }

    /// Set the objective `½ xᵀP x + qᵀx + r`.
    pub fn set_quadratic_objective(
        &mut self,
        p: DMatrix<f64>,
        q: DVector<f64>,
        r: f64,
    ) -> Result<(), ProgramError> {
        let n = self.n_vars();
        if p.nrows() != n || p.ncols() != n {
            return Err(ProgramError::QuadraticShape {
                n,
                rows: p.nrows(),
                cols: p.ncols(),
            });
        }
        self.quadratic = Some(p);
        self.linear = q;
        self.constant = r;
        Ok(())
    }

    /// Set a purely linear objective `qᵀx + r`.
    pub fn set_linear_objective(&mut self, q: DVector<f64>, r: f64) {
        self.quadratic = None;
        self.linear = q;
        self.constant = r;
    }

    /// Append one cone block with its rows of `G` and `h`.
    pub fn add_block(
        &mut self,
        cone: ConeSpec,
        label: impl Into<String>,
        g_rows: DMatrix<f64>,
        h_rows: DVector<f64>,
    ) -> Result<(), ProgramError> {
        let label = label.into();
        if let ConeSpec::Soc(d) = cone {
            if d < 2 {
                return Err(ProgramError::SocDimension(d));
            }
        }
        let dim = cone.dim();
        if g_rows.nrows() != dim || h_rows.len() != dim {
            return Err(ProgramError::BlockDimension {
                label,
                rows: g_rows.nrows(),
                expected: dim,
            });
        }
        if g_rows.ncols() != self.n_vars() {
            return Err(ProgramError::BlockColumns {
                label,
                cols: g_rows.ncols(),
                expected: self.n_vars(),
            });
        }
        let old_rows = self.g.nrows();
        let mut g = DMatrix::zeros(old_rows + dim, self.n_vars());
        g.rows_mut(0, old_rows).copy_from(&self.g);
        g.rows_mut(old_rows, dim).copy_from(&g_rows);
        self.g = g;
        let mut h = DVector::zeros(old_rows + dim);
        h.rows_mut(0, old_rows).copy_from(&self.h);
        h.rows_mut(old_rows, dim).copy_from(&h_rows);
        self.h = h;
        self.blocks.push(ConstraintBlock { cone, label });
        Ok(())
    }

    /// Objective value at a point.
    pub fn objective_at(&self, x: &DVector<f64>) -> f64 {
        let mut v = self.linear.dot(x) + self.constant;
        if let Some(p) = &self.quadratic {
            v += 0.5 * x.dot(&(p * x));
        }
        v
    }

    /// Block ranges in row order.
    pub fn block_ranges(&self) -> Vec<(ConeSpec, Range<usize>)> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut at = 0;
        for b in &self.blocks {
            let d = b.cone.dim();
            out.push((b.cone, at..at + d));
            at += d;
        }
        out
    }

    /// Total cone degree.
    pub fn degree(&self) -> usize {
        self.blocks.iter().map(|b| b.cone.degree()).sum()
    }
}

/// Solver outcome classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    /// Converged to the requested tolerances with certified residuals.
    Optimal,
    /// Primal infeasibility certificate found.
    Infeasible,
    /// Iteration limit reached before convergence.
    MaxIter,
    /// Numerical breakdown (reported, never silent).
    Numerical,
}

/// Solver result.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Solution {
    /// Outcome status.
    pub status: SolveStatus,
    /// Decision vector (meaningful for `Optimal`; best iterate otherwise).
    #[serde(with = "crate::serde_dvector")]
    pub x: DVector<f64>,
    /// Objective value at `x` (including the constant term).
    pub objective: f64,
    /// Relative primal residual.
    pub primal_residual: f64,
    /// Relative dual residual.
    pub dual_residual: f64,
    /// Absolute complementarity gap.
    pub gap: f64,
    /// Gap relative to the objective scale.
    pub relative_gap: f64,
    /// Interior-point iterations used.
    pub iterations: usize,
    /// Wall-clock seconds (only with the `std` feature).
    pub wall_time: Option<f64>,
    /// Human-readable diagnostic, set for non-optimal outcomes.
    pub diagnostic: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn svec_round_trip_preserves_inner_products() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.5, -1.0, 4.0]);
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, -1.0, 0.7, 0.0, 0.7, 2.0]);
        let va = svec(&a);
        let vb = svec(&b);
        assert_abs_diff_eq!(va.dot(&vb), (a.clone() * b.clone()).trace(), epsilon = 1e-14);
        let back = smat(va.as_slice(), 3);
        assert_abs_diff_eq!((back - a).abs().max(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn layout_rejects_duplicates() {
        let mut layout = VarLayout::new();
        let r = layout.push("pi0", 10).unwrap();
        assert_eq!(r, 0..10);
        assert!(matches!(
            layout.push("pi0", 10),
            Err(ProgramError::DuplicateBlock(_))
        ));
        assert_eq!(layout.get("pi0"), Some(0..10));
        assert_eq!(layout.len(), 10);
    }

    #[test]
    fn add_block_validates_dimensions() {
        let mut layout = VarLayout::new();
        layout.push("x", 2).unwrap();
        let mut prog = ConicProgram::new(layout);
        let err = prog.add_block(
            ConeSpec::NonNeg(3),
            "bounds",
            DMatrix::zeros(2, 2),
            DVector::zeros(2),
        );
        assert!(matches!(err, Err(ProgramError::BlockDimension { .. })));
        assert!(prog
            .add_block(
                ConeSpec::NonNeg(2),
                "bounds",
                DMatrix::zeros(2, 2),
                DVector::zeros(2)
            )
            .is_ok());
        assert_eq!(prog.cone_dim(), 2);
        assert!(matches!(
            prog.add_block(ConeSpec::Soc(1), "soc", DMatrix::zeros(1, 2), DVector::zeros(1)),
            Err(ProgramError::SocDimension(1))
        ));
    }

    #[test]
    fn degree_counts_cones() {
        let mut layout = VarLayout::new();
        layout.push("x", 1).unwrap();
        let mut prog = ConicProgram::new(layout);
        prog.add_block(ConeSpec::NonNeg(3), "l", DMatrix::zeros(3, 1), DVector::zeros(3))
            .unwrap();
        prog.add_block(ConeSpec::Soc(4), "q", DMatrix::zeros(4, 1), DVector::zeros(4))
            .unwrap();
        prog.add_block(
            ConeSpec::Psd(4),
            "s",
            DMatrix::zeros(10, 1),
            DVector::zeros(10),
        )
        .unwrap();
        assert_eq!(prog.degree(), 3 + 1 + 4);
        assert_eq!(prog.cone_dim(), 3 + 4 + 10);
    }
}
