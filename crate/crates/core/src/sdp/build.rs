//! Assembly of the constrained identification problem.
//!
//! The data enters through Gram matrices (`Σ ỸᵀỸ`, `Σ Ỹᵀτ`, `Σ τᵀτ`) so the
//! solver cost is independent of the sample count; `Ỹ` stacks the inertial
//! regressor with the friction columns of every friction-enabled joint. The
//! least-squares objective can be encoded either directly as a quadratic
//! (default) or as a second-order-cone epigraph on the stacked residual;
//! both give the same optimum.
//!
//! Constraint levels are cumulative, so the feasible sets are nested by
//! construction and optimal objectives are monotone across levels:
//!
//! - `semi`: spatial inertia positive definite per body;
//! - `full`: adds pseudo-inertia positive definite per body;
//! - `full+com`: adds the center-of-mass ellipsoid LMI per body;
//! - `full+ellipsoid`: adds the density-realizability trace inequality.
//!
//! Strict inequalities are realized as `⪰ δ·1` with `δ` scaled by the prior
//! mass; the margin used is echoed in the built program's labels and in the
//! identification report.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

#[allow(unused_imports)]
use num_traits::Float;

use crate::consistency::{com_lmi_basis, trace_coefficients, Ellipsoid};
use crate::model::{KinematicModel, ModelError};
use crate::regressor::{regressor, sign_deadband, TrajectorySample};
use crate::spatial::{pseudo_inertia_basis, spatial_inertia_basis};

use super::program::{svec, svec_dim, ConeSpec, ConicProgram, ProgramError};
use super::solver::SolverOptions;

/// Errors from identification-problem assembly.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    /// No samples were provided.
    #[error("identification needs at least one sample")]
    EmptyData,
    /// The constraint level needs one bounding ellipsoid per body.
    #[error("constraint level `{level}` needs {expected} per-body ellipsoids, found {found}")]
    MissingEllipsoids {
        /// Requested level.
        level: ConstraintLevel,
        /// Required count (number of bodies).
        expected: usize,
        /// Supplied count.
        found: usize,
    },
    /// A sample did not match the model dimensions.
    #[error(transparent)]
    Model(#[from] ModelError),
    /// Internal program-assembly failure.
    #[error(transparent)]
    Program(#[from] ProgramError),
    /// The prior vector has the wrong length.
    #[error("prior has length {found}, expected {expected}")]
    PriorLength {
        /// Supplied length.
        found: usize,
        /// Required length (`10 · n_b`).
        expected: usize,
    },
}

/// Physical-consistency constraint levels, cumulative and nested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum ConstraintLevel {
    /// Plain (regularized) least squares.
    #[serde(rename = "none")]
    Unconstrained,
    /// Positive definite spatial inertia per body.
    #[serde(rename = "semi")]
    Semi,
    /// Positive definite pseudo-inertia per body.
    #[serde(rename = "full")]
    Full,
    /// Center of mass constrained to the per-body ellipsoid.
    #[serde(rename = "full+com")]
    FullCom,
    /// Density realizability on the per-body ellipsoid.
    #[serde(rename = "full+ellipsoid")]
    FullEllipsoid,
}

impl ConstraintLevel {
    /// All levels, loosest to tightest.
    pub const ALL: [ConstraintLevel; 5] = [
        ConstraintLevel::Unconstrained,
        ConstraintLevel::Semi,
        ConstraintLevel::Full,
        ConstraintLevel::FullCom,
        ConstraintLevel::FullEllipsoid,
    ];

    /// Canonical name (`none`, `semi`, `full`, `full+com`, `full+ellipsoid`).
    pub fn as_str(&self) -> &'static str {
        match self {
            ConstraintLevel::Unconstrained => "none",
            ConstraintLevel::Semi => "semi",
            ConstraintLevel::Full => "full",
            ConstraintLevel::FullCom => "full+com",
            ConstraintLevel::FullEllipsoid => "full+ellipsoid",
        }
    }

    /// Parse a canonical name.
    pub fn parse(s: &str) -> Option<ConstraintLevel> {
        Self::ALL.iter().copied().find(|l| l.as_str() == s)
    }

    /// Whether this level needs per-body bounding ellipsoids.
    pub fn requires_ellipsoids(&self) -> bool {
        matches!(self, ConstraintLevel::FullCom | ConstraintLevel::FullEllipsoid)
    }
}

impl core::fmt::Display for ConstraintLevel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the least-squares term enters the conic program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ObjectiveEncoding {
    /// Quadratic objective handled directly in the KKT system (default).
    #[serde(rename = "quadratic")]
    Quadratic,
    /// Second-order-cone epigraph on the stacked residual.
    #[serde(rename = "epigraph")]
    Epigraph,
}

/// Options of the identification problem.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationOptions {
    /// Constraint level.
    pub level: ConstraintLevel,
    /// Regularization weight `w_π` on `‖π - π̂‖²`.
    pub regularization: f64,
    /// Prior `π̂` (flat, `10 · n_b`); zeros when absent.
    pub prior: Option<DVector<f64>>,
    /// Per-body bounding ellipsoids (required for `full+com` and
    /// `full+ellipsoid`).
    pub ellipsoids: Vec<Ellipsoid>,
    /// Constrain friction coefficients to be nonnegative.
    pub friction_nonneg: bool,
    /// Coulomb sign deadband on the joint velocity (rad/s).
    pub coulomb_deadband: f64,
    /// Absolute margin δ realizing strict LMIs; `None` selects
    /// `1e-10 · max(1, prior mass)`.
    pub strict_margin: Option<f64>,
    /// Objective encoding.
    pub encoding: ObjectiveEncoding,
    /// Interior-point settings.
    pub solver: SolverOptions,
}

impl Default for IdentificationOptions {
    fn default() -> Self {
        IdentificationOptions {
            level: ConstraintLevel::Full,
            regularization: 1e-6,
            prior: None,
            ellipsoids: Vec::new(),
            friction_nonneg: true,
            coulomb_deadband: 1e-3,
            strict_margin: None,
            encoding: ObjectiveEncoding::Quadratic,
            solver: SolverOptions::default(),
        }
    }
}

impl IdentificationOptions {
    /// The strict-inequality margin actually used for a given prior.
    pub fn effective_margin(&self) -> f64 {
        self.strict_margin.unwrap_or_else(|| {
            let prior_mass: f64 = self
                .prior
                .as_ref()
                .map(|p| p.as_slice().chunks(10).map(|b| b[0]).sum())
                .unwrap_or(0.0);
            1e-10 * prior_mass.max(1.0)
        })
    }
}

/// Compressed least-squares data: Gram matrix, cross term, and squared norm
/// of the measurements, accumulated over samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GramData {
    /// `Σ ỸᵀỸ` over samples.
    pub xtx: DMatrix<f64>,
    /// `Σ Ỹᵀτ` over samples.
    pub xty: DVector<f64>,
    /// `Σ τᵀτ` over samples.
    pub tau_sq: f64,
    /// Samples accumulated.
    pub n_samples: usize,
    n_bodies: usize,
    friction_slots: Vec<usize>,
}

impl GramData {
    /// Empty accumulator for a model.
    pub fn new(model: &KinematicModel) -> Self {
        let friction_slots: Vec<usize> = model
            .friction_joints()
            .iter()
            .enumerate()
            .filter_map(|(j, &on)| on.then_some(j))
            .collect();
        let nx = 10 * model.n_bodies() + 2 * friction_slots.len();
        GramData {
            xtx: DMatrix::zeros(nx, nx),
            xty: DVector::zeros(nx),
            tau_sq: 0.0,
            n_samples: 0,
            n_bodies: model.n_bodies(),
            friction_slots,
        }
    }

    /// Decision dimension (`10 n_b` plus two friction coefficients per
    /// friction-enabled joint).
    pub fn n_vars(&self) -> usize {
        self.xty.len()
    }

    /// Friction-enabled joints in slot order.
    pub fn friction_slots(&self) -> &[usize] {
        &self.friction_slots
    }

    /// Accumulate one sample.
    pub fn add_sample(
        &mut self,
        model: &KinematicModel,
        sample: &TrajectorySample,
        deadband: f64,
    ) -> Result<(), ModelError> {
        let y = regressor(model, &sample.q, &sample.vel, &sample.acc)?;
        let nj = model.n_joints();
        let nf = self.friction_slots.len();
        let nx = self.n_vars();
        let mut ytilde = DMatrix::zeros(nj, nx);
        ytilde.columns_mut(0, 10 * self.n_bodies).copy_from(&y);
        let signs = sign_deadband(&sample.vel, deadband);
        for (k, &j) in self.friction_slots.iter().enumerate() {
            ytilde[(j, 10 * self.n_bodies + k)] = sample.vel[j];
            ytilde[(j, 10 * self.n_bodies + nf + k)] = signs[j];
        }
        self.xtx += ytilde.transpose() * &ytilde;
        self.xty += ytilde.transpose() * &sample.tau;
        self.tau_sq += sample.tau.dot(&sample.tau);
        self.n_samples += 1;
        Ok(())
    }

    /// Accumulate a batch of samples.
    pub fn assemble(
        model: &KinematicModel,
        samples: &[TrajectorySample],
        deadband: f64,
    ) -> Result<Self, BuildError> {
        if samples.is_empty() {
            return Err(BuildError::EmptyData);
        }
        let mut gram = GramData::new(model);
        for s in samples {
            gram.add_sample(model, s, deadband)?;
        }
        Ok(gram)
    }
}

fn attach_consistency_constraints(
    prog: &mut ConicProgram,
    model: &KinematicModel,
    opts: &IdentificationOptions,
    delta: f64,
) -> Result<(), BuildError> {
    let nb = model.n_bodies();
    let n = prog.n_vars();
    if opts.level.requires_ellipsoids() && opts.ellipsoids.len() != nb {
        return Err(BuildError::MissingEllipsoids {
            level: opts.level,
            expected: nb,
            found: opts.ellipsoids.len(),
        });
    }
    let spatial_basis = spatial_inertia_basis();
    let pseudo_basis = pseudo_inertia_basis();
    for i in 0..nb {
        let col0 = 10 * i;
        if opts.level >= ConstraintLevel::Semi {
            let dim = svec_dim(6);
            let mut g = DMatrix::zeros(dim, n);
            for k in 0..10 {
                let col = svec(&DMatrix::from_column_slice(6, 6, spatial_basis[k].as_slice()));
                g.column_mut(col0 + k).copy_from(&(-col));
            }
            let h = -delta * svec(&DMatrix::identity(6, 6));
            prog.add_block(ConeSpec::Psd(6), format!("body{i}/spatial-inertia"), g, h)?;
        }
        if opts.level >= ConstraintLevel::Full {
            let dim = svec_dim(4);
            let mut g = DMatrix::zeros(dim, n);
            for k in 0..10 {
                let col = svec(&DMatrix::from_column_slice(4, 4, pseudo_basis[k].as_slice()));
                g.column_mut(col0 + k).copy_from(&(-col));
            }
            let h = -delta * svec(&DMatrix::identity(4, 4));
            prog.add_block(ConeSpec::Psd(4), format!("body{i}/pseudo-inertia"), g, h)?;
        }
        if opts.level >= ConstraintLevel::FullCom {
            let basis = com_lmi_basis(&opts.ellipsoids[i]);
            let dim = svec_dim(4);
            let mut g = DMatrix::zeros(dim, n);
            for k in 0..10 {
                let col = svec(&DMatrix::from_column_slice(4, 4, basis[k].as_slice()));
                g.column_mut(col0 + k).copy_from(&(-col));
            }
            prog.add_block(
                ConeSpec::Psd(4),
                format!("body{i}/com-ellipsoid"),
                g,
                DVector::zeros(dim),
            )?;
        }
        if opts.level >= ConstraintLevel::FullEllipsoid {
            let coeffs = trace_coefficients(&opts.ellipsoids[i].homogeneous());
            let mut g = DMatrix::zeros(1, n);
            for k in 0..10 {
                g[(0, col0 + k)] = -coeffs[k];
            }
            prog.add_block(
                ConeSpec::NonNeg(1),
                format!("body{i}/trace"),
                g,
                DVector::zeros(1),
            )?;
        }
    }
    Ok(())
}

fn attach_friction_bounds(
    prog: &mut ConicProgram,
    n_friction: usize,
    offset: usize,
) -> Result<(), BuildError> {
    if n_friction == 0 {
        return Ok(());
    }
    let n = prog.n_vars();
    let dim = 2 * n_friction;
    let mut g = DMatrix::zeros(dim, n);
    for k in 0..dim {
        g[(k, offset + k)] = -1.0;
    }
    prog.add_block(
        ConeSpec::NonNeg(dim),
        "friction/nonneg",
        g,
        DVector::zeros(dim),
    )?;
    Ok(())
}

// Total quadratic data of the objective in the ½ xᵀPx + qᵀx + r convention:
// mean squared residual plus the regularizer.
fn objective_data(
    gram: &GramData,
    opts: &IdentificationOptions,
    nx: usize,
) -> Result<(DMatrix<f64>, DVector<f64>, f64), BuildError> {
    let n_pi = 10 * gram.n_bodies;
    let inv_n = 1.0 / gram.n_samples as f64;
    let mut p = 2.0 * inv_n * &gram.xtx;
    let mut q = -2.0 * inv_n * &gram.xty;
    let mut r = inv_n * gram.tau_sq;
    if opts.regularization > 0.0 {
        let prior = match &opts.prior {
            Some(v) => {
                if v.len() != n_pi {
                    return Err(BuildError::PriorLength {
                        found: v.len(),
                        expected: n_pi,
                    });
                }
                v.clone()
            }
            None => DVector::zeros(n_pi),
        };
        for k in 0..n_pi {
            p[(k, k)] += 2.0 * opts.regularization;
            q[k] -= 2.0 * opts.regularization * prior[k];
        }
        r += opts.regularization * prior.dot(&prior);
    }
    debug_assert_eq!(p.nrows(), nx);
    Ok((p, q, r))
}

/// Build the constrained identification problem from raw samples.
pub fn build_identification(
    model: &KinematicModel,
    samples: &[TrajectorySample],
    opts: &IdentificationOptions,
) -> Result<ConicProgram, BuildError> {
    let gram = GramData::assemble(model, samples, opts.coulomb_deadband)?;
    build_from_gram(model, &gram, opts)
}

/// Build the identification problem from pre-accumulated Gram data.
pub fn build_from_gram(
    model: &KinematicModel,
    gram: &GramData,
    opts: &IdentificationOptions,
) -> Result<ConicProgram, BuildError> {
    if gram.n_samples == 0 {
        return Err(BuildError::EmptyData);
    }
    let nb = model.n_bodies();
    let nf = gram.friction_slots.len();
    let nx = gram.n_vars();

    let mut layout = super::program::VarLayout::new();
    for i in 0..nb {
        layout.push(format!("body{i}"), 10)?;
    }
    let friction_offset = layout.len();
    if nf > 0 {
        layout.push("viscous", nf)?;
        layout.push("coulomb", nf)?;
    }

    let (p, q, r) = objective_data(gram, opts, nx)?;

    let mut prog = match opts.encoding {
        ObjectiveEncoding::Quadratic => {
            let mut prog = ConicProgram::new(layout);
            prog.set_quadratic_objective(p, q, r)?;
            prog
        }
        ObjectiveEncoding::Epigraph => {
            // Factor the quadratic as ‖L x - l‖² + c0 through a truncated
            // eigendecomposition of P/2 (the cross term q is always in the
            // range of the Gram data, so l exists).
            let eig = nalgebra::linalg::SymmetricEigen::new(0.5 * &p);
            let max_eig = eig.eigenvalues.amax();
            let keep: Vec<usize> = (0..nx)
                .filter(|&k| eig.eigenvalues[k] > 1e-14 * max_eig.max(1.0))
                .collect();
            let rank = keep.len();
            let mut l_mat = DMatrix::zeros(rank, nx);
            let mut l_vec = DVector::zeros(rank);
            for (row, &k) in keep.iter().enumerate() {
                let scale = eig.eigenvalues[k].sqrt();
                for c in 0..nx {
                    l_mat[(row, c)] = scale * eig.eigenvectors[(c, k)];
                }
                // l = -E^{-1/2} Vᵀ q / 2.
                let vq: f64 = (0..nx).map(|c| eig.eigenvectors[(c, k)] * q[c]).sum();
                l_vec[row] = -vq / (2.0 * scale);
            }
            let c0 = r - l_vec.dot(&l_vec);

            let mut layout = layout;
            let t_range = layout.push("residual_bound", 1)?;
            let t_col = t_range.start;
            let mut prog = ConicProgram::new(layout);
            let mut c = DVector::zeros(nx + 1);
            c[t_col] = 1.0;
            prog.set_linear_objective(c, c0);

            // ‖L x - l‖² ≤ t as the cone (t+1, 2(Lx - l), t-1).
            let dim = rank + 2;
            let mut g = DMatrix::zeros(dim, nx + 1);
            let mut h = DVector::zeros(dim);
            g[(0, t_col)] = -1.0;
            h[0] = 1.0;
            for row in 0..rank {
                for col in 0..nx {
                    g[(1 + row, col)] = -2.0 * l_mat[(row, col)];
                }
                h[1 + row] = -2.0 * l_vec[row];
            }
            g[(dim - 1, t_col)] = -1.0;
            h[dim - 1] = -1.0;
            prog.add_block(ConeSpec::Soc(dim), "residual/epigraph", g, h)?;
            prog
        }
    };

    let delta = opts.effective_margin();
    attach_consistency_constraints(&mut prog, model, opts, delta)?;
    if opts.friction_nonneg {
        attach_friction_bounds(&mut prog, nf, friction_offset)?;
    }
    Ok(prog)
}

/// Projection constraint specification for [`project_to_consistent`].
#[derive(Debug, Clone)]
pub struct ProjectionSpec {
    /// Constraint level to project onto.
    pub level: ConstraintLevel,
    /// Per-body ellipsoids when the level needs them.
    pub ellipsoids: Vec<Ellipsoid>,
    /// Strictness margin (0 projects onto the closed cone).
    pub margin: f64,
    /// Solver settings.
    pub solver: SolverOptions,
}

impl Default for ProjectionSpec {
    fn default() -> Self {
        ProjectionSpec {
            level: ConstraintLevel::Full,
            ellipsoids: Vec::new(),
            margin: 0.0,
            solver: SolverOptions::default(),
        }
    }
}

/// Project inertial parameters onto the requested consistency set, body by
/// body: `min ‖π - π₀‖²` subject to the level's constraints. The bodies are
/// independent, so each gets its own small conic solve.
pub fn project_to_consistent(
    bodies: &[crate::spatial::InertialParams],
    spec: &ProjectionSpec,
) -> Result<(Vec<crate::spatial::InertialParams>, Vec<super::program::Solution>), BuildError> {
    if spec.level.requires_ellipsoids() && spec.ellipsoids.len() != bodies.len() {
        return Err(BuildError::MissingEllipsoids {
            level: spec.level,
            expected: bodies.len(),
            found: spec.ellipsoids.len(),
        });
    }
    let spatial_basis = spatial_inertia_basis();
    let pseudo_basis = pseudo_inertia_basis();
    let mut out = Vec::with_capacity(bodies.len());
    let mut sols = Vec::with_capacity(bodies.len());
    for (i, body) in bodies.iter().enumerate() {
        let target = body.to_vector();
        let mut layout = super::program::VarLayout::new();
        layout.push("pi", 10)?;
        let mut prog = ConicProgram::new(layout);
        let q = DVector::from_fn(10, |k, _| -2.0 * target[k]);
        prog.set_quadratic_objective(
            2.0 * DMatrix::identity(10, 10),
            q,
            target.dot(&target),
        )?;
        if spec.level >= ConstraintLevel::Semi {
            let dim = svec_dim(6);
            let mut g = DMatrix::zeros(dim, 10);
            for k in 0..10 {
                let col = svec(&DMatrix::from_column_slice(6, 6, spatial_basis[k].as_slice()));
                g.column_mut(k).copy_from(&(-col));
            }
            let h = -spec.margin * svec(&DMatrix::identity(6, 6));
            prog.add_block(ConeSpec::Psd(6), "spatial-inertia", g, h)?;
        }
        if spec.level >= ConstraintLevel::Full {
            let dim = svec_dim(4);
            let mut g = DMatrix::zeros(dim, 10);
            for k in 0..10 {
                let col = svec(&DMatrix::from_column_slice(4, 4, pseudo_basis[k].as_slice()));
                g.column_mut(k).copy_from(&(-col));
            }
            let h = -spec.margin * svec(&DMatrix::identity(4, 4));
            prog.add_block(ConeSpec::Psd(4), "pseudo-inertia", g, h)?;
        }
        if spec.level >= ConstraintLevel::FullCom {
            let basis = com_lmi_basis(&spec.ellipsoids[i]);
            let dim = svec_dim(4);
            let mut g = DMatrix::zeros(dim, 10);
            for k in 0..10 {
                let col = svec(&DMatrix::from_column_slice(4, 4, basis[k].as_slice()));
                g.column_mut(k).copy_from(&(-col));
            }
            prog.add_block(ConeSpec::Psd(4), "com-ellipsoid", g, DVector::zeros(dim))?;
        }
        if spec.level >= ConstraintLevel::FullEllipsoid {
            let coeffs = trace_coefficients(&spec.ellipsoids[i].homogeneous());
            let mut g = DMatrix::zeros(1, 10);
            for k in 0..10 {
                g[(0, k)] = -coeffs[k];
            }
            prog.add_block(ConeSpec::NonNeg(1), "trace", g, DVector::zeros(1))?;
        }
        let sol = super::solver::solve(&prog, &spec.solver);
        let projected = crate::spatial::InertialParams::from_slice(sol.x.as_slice());
        out.push(projected);
        sols.push(sol);
    }
    Ok((out, sols))
}

/// Nearest-point diagnostic summary: squared distance moved by the
/// projection.
pub fn projection_distance_sq(
    before: &[crate::spatial::InertialParams],
    after: &[crate::spatial::InertialParams],
) -> f64 {
    before
        .iter()
        .zip(after.iter())
        .map(|(a, b)| (a.to_vector() - b.to_vector()).norm_squared())
        .sum()
}
