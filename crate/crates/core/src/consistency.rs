//! Physical-consistency conditions on inertial parameters.
//!
//! A parameter vector is *semi-consistent* when mass is positive and the
//! rotational inertia about the center of mass is positive definite; this is
//! the positive definiteness of the 6×6 spatial inertia. It is *fully
//! consistent* when some nonnegative density produces the parameters, which
//! is positive definiteness of the 4×4 pseudo-inertia — equivalently, the
//! density-weighted covariance is positive semidefinite, equivalently the
//! principal moments satisfy the triangle inequalities. When the body is
//! additionally known to live inside an ellipsoid, realizability tightens to
//! a single linear trace inequality on the pseudo-inertia, and every
//! realizable parameter vector is reproduced exactly by four point masses
//! inside the ellipsoid.
//!
//! All checks here are independent of the optimizer and double as the
//! verification path for identified parameters.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

#[allow(unused_imports)]
use num_traits::Float;

use crate::spatial::{second_moment_from_rot_inertia, InertialParams, SymMat3};

/// Errors from consistency operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConsistencyError {
    /// Shape matrix is not positive definite enough to describe an ellipsoid.
    #[error("shape matrix is not positive definite (min eig {min_eig:.3e}, max eig {max_eig:.3e})")]
    NotAnEllipsoid {
        /// Smallest eigenvalue of the candidate shape matrix.
        min_eig: f64,
        /// Largest eigenvalue of the candidate shape matrix.
        max_eig: f64,
    },
    /// Center-of-mass quantities were requested with non-positive mass.
    #[error("mass must be positive, got {0}")]
    NonPositiveMass(f64),
    /// The operation requires strictly consistent parameters.
    #[error("parameters are not strictly consistent (min eig of pseudo-inertia {min_eig:.3e})")]
    NotStrictlyConsistent {
        /// Smallest eigenvalue of the pseudo-inertia.
        min_eig: f64,
    },
    /// The parameters are not realizable on the requested ellipsoid.
    #[error("parameters are not density realizable on the ellipsoid (trace {trace:.3e})")]
    NotRealizableOnEllipsoid {
        /// Value of `Tr(J Q)`.
        trace: f64,
    },
    /// The constrained four-point refinement did not converge.
    #[error("four-point refinement failed: {0}")]
    RefinementFailed(String),
    /// A union check was requested with no ellipsoids.
    #[error("ellipsoid list is empty")]
    EmptyEllipsoidList,
    /// The union-decomposition solver failed.
    #[error("union decomposition solver failed: {0}")]
    SolverFailure(String),
}

/// Scale-aware tolerance for definiteness verdicts:
/// `1e-10 · max(1, max|λ|)`. Used with `λ_min ≥ tol` for strict cones and
/// `λ_min ≥ -tol` for closed cones.
pub fn scaled_psd_tol(eigenvalues: &[f64]) -> f64 {
    let scale = eigenvalues.iter().fold(0.0f64, |a, &e| a.max(e.abs()));
    1e-10 * scale.max(1.0)
}

/// Outcome of a definiteness check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeCheck {
    /// Whether the (strict) cone condition holds.
    pub satisfied: bool,
    /// Smallest eigenvalue of the checked matrix.
    pub min_eig: f64,
    /// Tolerance actually applied.
    pub tol: f64,
}

/// Semi-consistency: positive definiteness of the 6×6 spatial inertia.
///
/// `tol` is the absolute strictness threshold; `None` selects the
/// scale-aware policy of [`scaled_psd_tol`].
pub fn check_semi_consistent(p: &InertialParams, tol: Option<f64>) -> ConeCheck {
    let m = p.spatial_inertia().0;
    let mut eig: [f64; 6] = m.symmetric_eigen().eigenvalues.into();
    eig.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    let tol = tol.unwrap_or_else(|| scaled_psd_tol(&eig));
    ConeCheck {
        satisfied: eig[0] > tol,
        min_eig: eig[0],
        tol,
    }
}

/// Full physical consistency: positive definiteness of the 4×4
/// pseudo-inertia.
pub fn check_fully_consistent(p: &InertialParams, tol: Option<f64>) -> ConeCheck {
    let eig = p.pseudo_inertia().eigenvalues_sorted();
    let tol = tol.unwrap_or_else(|| scaled_psd_tol(&eig));
    ConeCheck {
        satisfied: eig[0] > tol,
        min_eig: eig[0],
        tol,
    }
}

/// Triangle-inequality margins `(J1+J2+J3) - 2 J_i` on the principal moments
/// of the center-of-mass rotational inertia, ordered by ascending `J_i`.
/// All margins nonnegative is equivalent to the covariance being PSD.
pub fn triangle_margins(i_com: &SymMat3) -> Vector3<f64> {
    let ev = i_com.eigenvalues_sorted();
    let sum = ev.x + ev.y + ev.z;
    Vector3::new(sum - 2.0 * ev.x, sum - 2.0 * ev.y, sum - 2.0 * ev.z)
}

/// Independent route to full consistency through the principal moments:
/// positive mass, positive definite center-of-mass inertia, and strict
/// triangle inequalities. Agrees with [`check_fully_consistent`] everywhere
/// outside the tolerance band; used as the cross-check oracle.
pub fn check_consistent_principal_moments(p: &InertialParams, tol: Option<f64>) -> bool {
    if p.mass <= tol.unwrap_or(0.0).max(0.0) || p.mass <= 0.0 {
        return false;
    }
    let i_com = match p.rot_inertia_about_com() {
        Ok(i) => i,
        Err(_) => return false,
    };
    let ev: [f64; 3] = i_com.eigenvalues_sorted().into();
    let tol = tol.unwrap_or_else(|| scaled_psd_tol(&ev));
    if ev[0] <= tol {
        return false;
    }
    let margins = triangle_margins(&i_com);
    margins.iter().all(|&m| m > tol)
}

/// Principal-axis summary of the mass distribution: the ellipsoid with the
/// same second moments, semi-axes `sqrt(μ_i / m)` along the covariance
/// eigenvectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEllipsoid {
    /// Center of mass (m).
    pub center: Vector3<f64>,
    /// Principal axes as unit columns, ascending by semi-axis length.
    pub axes: Matrix3<f64>,
    /// Semi-axis lengths `sqrt(μ_i / m)` (m); degenerate axes report 0.
    pub semi_axis_lengths: Vector3<f64>,
}

/// Compute the covariance ellipsoid of a parameter vector.
///
/// Requires positive mass; small negative covariance eigenvalues (within the
/// scaled tolerance) are clamped to zero, anything more negative is an error
/// because the distribution has no covariance interpretation.
pub fn covariance_ellipsoid(p: &InertialParams) -> Result<CovarianceEllipsoid, ConsistencyError> {
    if p.mass <= 0.0 {
        return Err(ConsistencyError::NonPositiveMass(p.mass));
    }
    let i_com = p
        .rot_inertia_about_com()
        .map_err(|_| ConsistencyError::NonPositiveMass(p.mass))?;
    let sigma_com = second_moment_from_rot_inertia(&i_com);
    let (mu, axes) = sigma_com.eigen_sorted();
    let ev: [f64; 3] = mu.into();
    let tol = scaled_psd_tol(&ev);
    if ev[0] < -tol {
        return Err(ConsistencyError::NotStrictlyConsistent { min_eig: ev[0] });
    }
    let lengths = Vector3::new(
        (ev[0].max(0.0) / p.mass).sqrt(),
        (ev[1].max(0.0) / p.mass).sqrt(),
        (ev[2].max(0.0) / p.mass).sqrt(),
    );
    Ok(CovarianceEllipsoid {
        center: p.first_moment / p.mass,
        axes,
        semi_axis_lengths: lengths,
    })
}

/// Bounding ellipsoid `{x : (x - c)^T Q_s^{-1} (x - c) ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: Vector3<f64>,
    shape: SymMat3,
    // Cached eigen-decomposition of the shape matrix (ascending).
    principal_values: Vector3<f64>,
    principal_axes: Matrix3<f64>,
}

impl Ellipsoid {
    /// Validated constructor. The shape matrix must be positive definite
    /// (minimum eigenvalue above `1e-12` of the maximum).
    pub fn new(center: Vector3<f64>, shape: SymMat3) -> Result<Self, ConsistencyError> {
        let (vals, axes) = shape.eigen_sorted();
        if !(vals[0] > 1e-12 * vals[2].max(0.0)) || !vals[0].is_finite() || vals[0] <= 0.0 {
            return Err(ConsistencyError::NotAnEllipsoid {
                min_eig: vals[0],
                max_eig: vals[2],
            });
        }
        Ok(Ellipsoid {
            center,
            shape,
            principal_values: vals,
            principal_axes: axes,
        })
    }

    /// Ellipsoid from semi-axis lengths and an orientation whose columns are
    /// the axis directions: `Q_s = R diag(a_i²) R^T`.
    pub fn from_semi_axes(
        center: Vector3<f64>,
        semi_axes: Vector3<f64>,
        rotation: Matrix3<f64>,
    ) -> Result<Self, ConsistencyError> {
        let d = Matrix3::from_diagonal(&semi_axes.map(|a| a * a));
        Ellipsoid::new(
            center,
            SymMat3::from_matrix(&(rotation * d * rotation.transpose())),
        )
    }

    /// Sphere of the given radius.
    pub fn sphere(center: Vector3<f64>, radius: f64) -> Result<Self, ConsistencyError> {
        Ellipsoid::new(center, SymMat3::scaled_identity(radius * radius))
    }

    /// Center.
    pub fn center(&self) -> Vector3<f64> {
        self.center
    }

    /// Shape matrix `Q_s` (m²).
    pub fn shape(&self) -> SymMat3 {
        self.shape
    }

    /// Semi-axis lengths, ascending.
    pub fn semi_axes(&self) -> Vector3<f64> {
        self.principal_values.map(|v| v.sqrt())
    }

    /// Principal axes as unit columns, matching [`Ellipsoid::semi_axes`].
    pub fn axes(&self) -> Matrix3<f64> {
        self.principal_axes
    }

    /// Inverse shape matrix, computed through the eigen-decomposition.
    pub fn shape_inv(&self) -> Matrix3<f64> {
        let d = Matrix3::from_diagonal(&self.principal_values.map(|v| 1.0 / v));
        self.principal_axes * d * self.principal_axes.transpose()
    }

    /// Square root of the shape matrix (maps the unit ball onto the
    /// ellipsoid around its center).
    pub fn shape_sqrt(&self) -> Matrix3<f64> {
        let d = Matrix3::from_diagonal(&self.principal_values.map(|v| v.sqrt()));
        self.principal_axes * d * self.principal_axes.transpose()
    }

    /// Squared Mahalanobis distance `(x - c)^T Q_s^{-1} (x - c)`;
    /// `≤ 1` inside.
    pub fn mahalanobis_sq(&self, x: &Vector3<f64>) -> f64 {
        let d = x - self.center;
        (self.shape_inv() * d).dot(&d)
    }

    /// Containment test with absolute tolerance on the Mahalanobis value.
    pub fn contains(&self, x: &Vector3<f64>, tol: f64) -> bool {
        self.mahalanobis_sq(x) <= 1.0 + tol
    }

    /// Point on the boundary in the direction `dir` from the center.
    pub fn boundary_point(&self, dir: &Vector3<f64>) -> Vector3<f64> {
        let u = dir.normalize();
        let scale = (self.shape_inv() * u).dot(&u).sqrt();
        self.center + u / scale
    }

    /// Homogeneous 4×4 form of the ellipsoid.
    pub fn homogeneous(&self) -> HomogeneousEllipsoid {
        let qinv = self.shape_inv();
        let qc = qinv * self.center;
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-qinv));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&qc);
        m.fixed_view_mut::<1, 3>(3, 0).copy_from(&qc.transpose());
        m[(3, 3)] = 1.0 - qc.dot(&self.center);
        HomogeneousEllipsoid(m)
    }
}

/// Homogeneous ellipsoid matrix `Q` with `[x; 1]^T Q [x; 1] ≥ 0` exactly on
/// the ellipsoid (positive inside, zero on the boundary).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousEllipsoid(pub Matrix4<f64>);

impl HomogeneousEllipsoid {
    /// Evaluate the quadratic form at a point.
    pub fn value(&self, x: &Vector3<f64>) -> f64 {
        let xh = nalgebra::Vector4::new(x.x, x.y, x.z, 1.0);
        (self.0 * xh).dot(&xh)
    }
}

/// Center-of-mass membership LMI for a bounding ellipsoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComLmi {
    /// The 4×4 matrix `C(π)`.
    pub matrix: Matrix4<f64>,
    /// Smallest eigenvalue of `C(π)`.
    pub min_eig: f64,
    /// `λ_min ≥ -tol` verdict (closed cone).
    pub feasible: bool,
}

/// Build `C(π) = [m, h^T - m x_s^T; h - m x_s, m Q_s]` and test `C ⪰ 0`.
/// For positive mass this is equivalent to the center of mass lying inside
/// the ellipsoid.
pub fn com_ellipsoid_lmi(p: &InertialParams, e: &Ellipsoid) -> ComLmi {
    let d = p.first_moment - p.mass * e.center();
    let mut m = Matrix4::zeros();
    m[(0, 0)] = p.mass;
    m.fixed_view_mut::<1, 3>(0, 1).copy_from(&d.transpose());
    m.fixed_view_mut::<3, 1>(1, 0).copy_from(&d);
    m.fixed_view_mut::<3, 3>(1, 1)
        .copy_from(&(p.mass * e.shape().matrix()));
    let mut eig: [f64; 4] = m.symmetric_eigen().eigenvalues.into();
    eig.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    let tol = scaled_psd_tol(&eig);
    ComLmi {
        matrix: m,
        min_eig: eig[0],
        feasible: eig[0] >= -tol,
    }
}

/// Basis matrices of the center-of-mass LMI: `C(π) = Σ_k π_k B_k`.
/// Only the mass and first-moment entries contribute.
pub fn com_lmi_basis(e: &Ellipsoid) -> [Matrix4<f64>; 10] {
    let mut basis = [Matrix4::zeros(); 10];
    // Mass entry.
    let mut bm = Matrix4::zeros();
    bm[(0, 0)] = 1.0;
    bm.fixed_view_mut::<1, 3>(0, 1)
        .copy_from(&(-e.center().transpose()));
    bm.fixed_view_mut::<3, 1>(1, 0).copy_from(&(-e.center()));
    bm.fixed_view_mut::<3, 3>(1, 1).copy_from(&e.shape().matrix());
    basis[0] = bm;
    // First-moment entries.
    for k in 0..3 {
        let mut b = Matrix4::zeros();
        b[(0, 1 + k)] = 1.0;
        b[(1 + k, 0)] = 1.0;
        basis[1 + k] = b;
    }
    basis
}

/// Verdict of the ellipsoid density-realizability test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizabilityCheck {
    /// Smallest eigenvalue of the pseudo-inertia.
    pub j_min_eig: f64,
    /// Strict positive definiteness of the pseudo-inertia.
    pub j_positive_definite: bool,
    /// Value of `Tr(J(π) Q)`.
    pub trace: f64,
    /// `Tr(J Q) ≥ 0` within the closed tolerance.
    pub trace_nonnegative: bool,
    /// Both conditions hold.
    pub realizable: bool,
}

/// Density realizability on an ellipsoid: `J(π) ≻ 0` and `Tr(J(π) Q) ≥ 0`.
pub fn check_realizable_on_ellipsoid(
    p: &InertialParams,
    q: &HomogeneousEllipsoid,
    tol: Option<f64>,
) -> RealizabilityCheck {
    let j = p.pseudo_inertia();
    let eig = j.eigenvalues_sorted();
    let tol = tol.unwrap_or_else(|| scaled_psd_tol(&eig));
    let trace = (j.0 * q.0).trace();
    let j_pd = eig[0] > tol;
    let trace_ok = trace >= -tol;
    RealizabilityCheck {
        j_min_eig: eig[0],
        j_positive_definite: j_pd,
        trace,
        trace_nonnegative: trace_ok,
        realizable: j_pd && trace_ok,
    }
}

/// One point mass of a discrete realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMass {
    /// Mass (kg), positive.
    pub mass: f64,
    /// Position (m).
    pub position: Vector3<f64>,
}

/// A finite set of point masses realizing a parameter vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointMassSet(pub Vec<PointMass>);

impl PointMassSet {
    /// Aggregate inertial parameters: `m = Σ m_k`, `h = Σ m_k x_k`,
    /// `Σ = Σ m_k x_k x_k^T` (converted back to rotational inertia).
    pub fn params(&self) -> InertialParams {
        let mut mass = 0.0;
        let mut h = Vector3::zeros();
        let mut sigma = Matrix3::zeros();
        for pm in &self.0 {
            mass += pm.mass;
            h += pm.mass * pm.position;
            sigma += pm.mass * pm.position * pm.position.transpose();
        }
        InertialParams {
            mass,
            first_moment: h,
            rot_inertia: crate::spatial::rot_inertia_from_second_moment(&SymMat3::from_matrix(
                &sigma,
            )),
        }
    }
}

/// Discrete-moment aggregation of a point-mass set (free-function form).
pub fn params_from_point_masses(set: &PointMassSet) -> InertialParams {
    set.params()
}

// Tetrahedron vertex signs: sum to zero and Σ v v^T = 4·1.
const TETRA_VERTICES: [[f64; 3]; 4] = [
    [1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
];

/// Exact four-point construction: masses `m/4` at `c + U D^{1/2} O v_k` with
/// `U D U^T` the eigen-decomposition of the mass-normalized covariance, `v_k`
/// the tetrahedron vertices, and `O` a rotation. Moments match exactly for
/// any rotation `O`.
fn tetrahedron_points(
    p: &InertialParams,
    rotation: &Matrix3<f64>,
) -> Result<PointMassSet, ConsistencyError> {
    let full = check_fully_consistent(p, None);
    if !full.satisfied {
        return Err(ConsistencyError::NotStrictlyConsistent {
            min_eig: full.min_eig,
        });
    }
    let c = p.first_moment / p.mass;
    let i_com = p.rot_inertia_about_com().expect("mass checked positive");
    let sigma_com = second_moment_from_rot_inertia(&i_com).scale(1.0 / p.mass);
    let (d, u) = sigma_com.eigen_sorted();
    let spread = u * Matrix3::from_diagonal(&d.map(|v| v.max(0.0).sqrt())) * rotation;
    let mut points = Vec::with_capacity(4);
    for v in TETRA_VERTICES {
        points.push(PointMass {
            mass: 0.25 * p.mass,
            position: c + spread * Vector3::from(v),
        });
    }
    Ok(PointMassSet(points))
}

fn max_mahalanobis(set: &PointMassSet, e: &Ellipsoid) -> f64 {
    set.0
        .iter()
        .map(|pm| e.mahalanobis_sq(&pm.position))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Search over tetrahedron orientations for one whose points stay inside the
/// ellipsoid. Moments stay exact for every orientation, so this is a free
/// deterministic improvement before the general refinement.
fn orientation_search(p: &InertialParams, e: &Ellipsoid) -> Result<PointMassSet, PointMassSet> {
    let mut best_rot = Matrix3::identity();
    let mut best_set = tetrahedron_points(p, &best_rot).expect("caller checked consistency");
    let mut best_val = max_mahalanobis(&best_set, e);
    if best_val <= 1.0 + 1e-12 {
        return Ok(best_set);
    }
    let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
    let mut step = 0.7f64;
    for _ in 0..60 {
        let mut improved = false;
        for axis in &axes {
            for sign in [1.0, -1.0] {
                let cand_rot = best_rot
                    * crate::spatial::RigidTransform::rotation_about(axis, sign * step).rotation;
                let cand = tetrahedron_points(p, &cand_rot).expect("consistency unchanged");
                let val = max_mahalanobis(&cand, e);
                if val < best_val {
                    best_val = val;
                    best_rot = cand_rot;
                    best_set = cand;
                    improved = true;
                }
            }
        }
        if best_val <= 1.0 + 1e-12 {
            return Ok(best_set);
        }
        if !improved {
            step *= 0.5;
            if step < 1e-4 {
                break;
            }
        }
    }
    Err(best_set)
}

/// Moment residual of a candidate against the target (m, h, Σ), stacked as a
/// 10-vector, plus the Jacobian with respect to the 16 unknowns
/// `[m_1..m_4, x_1, .., x_4]`.
fn moment_residual(
    set: &PointMassSet,
    target: &InertialParams,
) -> (nalgebra::SVector<f64, 10>, nalgebra::SMatrix<f64, 10, 16>) {
    let agg = set.params();
    let diff = agg.to_vector() - target.to_vector();
    // Convert the rotational-inertia part of the difference to the
    // second-moment basis (the moments the points control directly).
    let mut r = nalgebra::SVector::<f64, 10>::zeros();
    r[0] = diff[0];
    for k in 0..3 {
        r[1 + k] = diff[1 + k];
    }
    let d_sigma = second_moment_from_rot_inertia(&SymMat3([
        diff[4], diff[5], diff[6], diff[7], diff[8], diff[9],
    ]));
    for k in 0..6 {
        r[4 + k] = d_sigma.0[k];
    }

    let mut jac = nalgebra::SMatrix::<f64, 10, 16>::zeros();
    for (k, pm) in set.0.iter().enumerate() {
        let x = pm.position;
        // ∂/∂m_k
        jac[(0, k)] = 1.0;
        jac[(1, k)] = x.x;
        jac[(2, k)] = x.y;
        jac[(3, k)] = x.z;
        jac[(4, k)] = x.x * x.x;
        jac[(5, k)] = x.x * x.y;
        jac[(6, k)] = x.x * x.z;
        jac[(7, k)] = x.y * x.y;
        jac[(8, k)] = x.y * x.z;
        jac[(9, k)] = x.z * x.z;
        // ∂/∂x_k (columns 4 + 3k .. 4 + 3k + 2), Σ rows in the order
        // xx, xy, xz, yy, yz, zz.
        let base = 4 + 3 * k;
        let m = pm.mass;
        jac[(1, base)] = m;
        jac[(2, base + 1)] = m;
        jac[(3, base + 2)] = m;
        jac[(4, base)] = 2.0 * m * x.x;
        jac[(5, base)] = m * x.y;
        jac[(5, base + 1)] = m * x.x;
        jac[(6, base)] = m * x.z;
        jac[(6, base + 2)] = m * x.x;
        jac[(7, base + 1)] = 2.0 * m * x.y;
        jac[(8, base + 1)] = m * x.z;
        jac[(8, base + 2)] = m * x.y;
        jac[(9, base + 2)] = 2.0 * m * x.z;
    }
    (r, jac)
}

/// Weighted least-norm Gauss-Newton re-projection onto the moment manifold.
/// Mass and position coordinates carry different units, so the correction is
/// minimized in a scaled metric (mass deviations relative to `m/4`, position
/// deviations relative to the geometric ellipsoid radius).
fn project_moments(
    set: &mut PointMassSet,
    target: &InertialParams,
    length_scale: f64,
) -> bool {
    let scale = target.to_vector().abs().max().max(1.0);
    let mut weights = [0.0f64; 16];
    for k in 0..4 {
        weights[k] = (0.25 * target.mass).max(1e-6);
    }
    for k in 4..16 {
        weights[k] = length_scale.max(1e-6);
    }
    for _ in 0..40 {
        let (r, jac) = moment_residual(set, target);
        if r.abs().max() <= 1e-13 * scale {
            return true;
        }
        // du = W Jᵀ (J W Jᵀ)⁻¹ (-r) with W the squared weights.
        let mut jw = jac;
        for col in 0..16 {
            for row in 0..10 {
                jw[(row, col)] *= weights[col];
            }
        }
        let jjt = jw * jw.transpose();
        let Some(chol) = nalgebra::linalg::Cholesky::new(jjt) else {
            return false;
        };
        let lambda = chol.solve(&(-r));
        let du_scaled = jw.transpose() * lambda;
        for (k, pm) in set.0.iter_mut().enumerate() {
            pm.mass += weights[k] * du_scaled[k];
            let base = 4 + 3 * k;
            pm.position += Vector3::new(
                weights[base] * du_scaled[base],
                weights[base + 1] * du_scaled[base + 1],
                weights[base + 2] * du_scaled[base + 2],
            );
        }
    }
    let (r, _) = moment_residual(set, target);
    r.abs().max() <= 1e-11 * scale
}

// Pull-and-reproject loop for one fixed moment target. Points outside the
// ellipsoid are pulled slightly inside the boundary, then the exact moments
// are restored; success means every point is contained.
fn refine_at_target(
    set: &mut PointMassSet,
    target: &InertialParams,
    e: &Ellipsoid,
    iters: usize,
) -> bool {
    let mass_floor = 1e-8 * target.mass;
    let qinv = e.shape_inv();
    let length_scale = e.semi_axes().iter().product::<f64>().powf(1.0 / 3.0);
    let mut rate = 0.5f64;
    for iter in 0..iters {
        for pm in set.0.iter_mut() {
            let d = pm.position - e.center();
            let maha = (qinv * d).dot(&d);
            if maha > 1.0 {
                // Aim slightly inside the boundary to leave room for the
                // moment re-projection push-back; gentle, because
                // near-boundary configurations have little room to spare.
                let shrink = (0.9995 / maha).sqrt();
                let t = rate.min(1.0);
                pm.position = e.center() + d * (1.0 - t + t * shrink);
            }
            if pm.mass < mass_floor {
                pm.mass = mass_floor;
            }
        }
        // Moments are restored before any success verdict, so a contained
        // seed cannot short-circuit with mismatched cross moments.
        if !project_moments(set, target, length_scale) {
            return false;
        }
        let worst = max_mahalanobis(set, e);
        let min_mass = set.0.iter().map(|pm| pm.mass).fold(f64::INFINITY, f64::min);
        if worst <= 1.0 + 1e-11 && min_mass > 0.0 {
            return true;
        }
        if iter % 25 == 24 {
            rate *= 0.8;
        }
    }
    false
}

/// Boundary-adapted seed: three heavy points spread tangentially near the
/// center of mass plus one light point pulled radially inward. This is the
/// shape a realization must take when the center of mass sits close to the
/// ellipsoid boundary, where no equal-mass tetrahedron fits (its radial
/// extent alone exceeds the remaining room).
fn three_plus_one_seed(target: &InertialParams, e: &Ellipsoid) -> Option<PointMassSet> {
    let a_mat = e.shape_sqrt();
    let a_inv = {
        let d = Matrix3::from_diagonal(&e.semi_axes().map(|v| 1.0 / v));
        let axes = e.axes();
        axes * d * axes.transpose()
    };
    let c_world = target.first_moment / target.mass;
    let c = a_inv * (c_world - e.center());
    let r = c.norm();
    if r < 1e-9 {
        return None;
    }
    let u = c / r;
    let i_com = target.rot_inertia_about_com().ok()?;
    let cov_world = second_moment_from_rot_inertia(&i_com).scale(1.0 / target.mass);
    let cov = a_inv * cov_world.matrix() * a_inv.transpose();

    // Tangent basis.
    let pick = if u.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let v = (pick - u * u.dot(&pick)).normalize();
    let w = u.cross(&v);

    let sigma_r_sq = (u.dot(&(cov * u))).max(1e-18);
    let sigma_r = sigma_r_sq.sqrt();
    let ct = nalgebra::Matrix2::new(
        v.dot(&(cov * v)),
        v.dot(&(cov * w)),
        w.dot(&(cov * v)),
        w.dot(&(cov * w)),
    );
    let ct_eig = nalgebra::linalg::SymmetricEigen::new(ct);
    let t1 = ct_eig.eigenvalues[0].max(0.0);
    let t2 = ct_eig.eigenvalues[1].max(0.0);
    let e1 = v * ct_eig.eigenvectors[(0, 0)] + w * ct_eig.eigenvectors[(1, 0)];
    let e2 = v * ct_eig.eigenvectors[(0, 1)] + w * ct_eig.eigenvectors[(1, 1)];

    // Pick the light-point mass fraction λ minimizing the worst heavy-point
    // norm; heavy points sit at radius r + a with a = σ_r √(λ/(1-λ)).
    let mut best: Option<(f64, f64)> = None;
    for k in 0..60 {
        let lambda = 10f64.powf(-4.0 + 3.7 * k as f64 / 59.0).min(0.5);
        let a = sigma_r * (lambda / (1.0 - lambda)).sqrt();
        let b = sigma_r * ((1.0 - lambda) / lambda).sqrt();
        let tang_sq = 2.0 * t1.max(t2) / (1.0 - lambda);
        let heavy_sq = (r + a) * (r + a) + tang_sq;
        let light_sq = (r - b) * (r - b);
        let worst = heavy_sq.max(light_sq);
        if best.map(|(bw, _)| worst < bw).unwrap_or(true) {
            best = Some((worst, lambda));
        }
    }
    let (worst, lambda) = best?;
    // The theoretical floor for the worst point radius² is E‖x‖² =
    // r² + tr(cov); accept anything leaving a thin polish margin.
    if worst > 0.9998 {
        return None;
    }
    let a = sigma_r * (lambda / (1.0 - lambda)).sqrt();
    let b = sigma_r * ((1.0 - lambda) / lambda).sqrt();
    let tri = (2.0 / (1.0 - lambda)).sqrt();
    let mut points = Vec::with_capacity(4);
    for j in 0..3 {
        let theta = 2.0 * core::f64::consts::PI * j as f64 / 3.0;
        let tangential = tri * (t1.sqrt() * theta.cos() * e1 + t2.sqrt() * theta.sin() * e2);
        let ball = (r + a) * u + tangential;
        points.push(PointMass {
            mass: target.mass * (1.0 - lambda) / 3.0,
            position: e.center() + a_mat * ball,
        });
    }
    points.push(PointMass {
        mass: target.mass * lambda,
        position: e.center() + a_mat * ((r - b) * u),
    });
    Some(PointMassSet(points))
}

fn scaled_covariance_target(p: &InertialParams, t: f64) -> InertialParams {
    let c = p.first_moment / p.mass;
    let i_com = p.rot_inertia_about_com().expect("mass checked positive");
    let sigma = second_moment_from_rot_inertia(&i_com).scale(t);
    InertialParams::from_com_quantities(
        p.mass,
        &c,
        &crate::spatial::rot_inertia_from_second_moment(&sigma),
    )
}

/// Constrained refinement by continuation on the covariance scale.
///
/// A target with covariance `t·Σ_C` (same mass and center of mass) is
/// realizable on the ellipsoid for every `t ∈ (0, 1]` whenever the full
/// target is, and small `t` is easy to contain. The refinement walks `t`
/// up to 1, re-solving the pull/re-project subproblem from the previous
/// points at each step, and reports failure honestly if the continuation
/// stalls.
fn constrained_refinement(
    seed: PointMassSet,
    target: &InertialParams,
    e: &Ellipsoid,
) -> Result<PointMassSet, ConsistencyError> {
    // Cheapest first: refine directly at the full target.
    let mut direct = seed.clone();
    if refine_at_target(&mut direct, target, e, 150) {
        return Ok(direct);
    }

    // Boundary-adapted seed for center-of-mass-near-boundary targets.
    if let Some(mut structured) = three_plus_one_seed(target, e) {
        if refine_at_target(&mut structured, target, e, 300) {
            return Ok(structured);
        }
    }

    // Find a starting scale whose tetrahedron fits (possibly after the
    // orientation search).
    let mut t_low = 0.0;
    let mut points = seed;
    'scales: for t in [0.8, 0.6, 0.4, 0.2, 0.1, 0.05] {
        let shrunk = scaled_covariance_target(target, t);
        match orientation_search(&shrunk, e) {
            Ok(set) => {
                points = set;
                t_low = t;
                break 'scales;
            }
            Err(best) => {
                let mut cand = best;
                if refine_at_target(&mut cand, &shrunk, e, 120) {
                    points = cand;
                    t_low = t;
                    break 'scales;
                }
            }
        }
        if let Some(mut structured) = three_plus_one_seed(&shrunk, e) {
            if refine_at_target(&mut structured, &shrunk, e, 120) {
                points = structured;
                t_low = t;
                break 'scales;
            }
        }
    }
    if t_low == 0.0 {
        return Err(ConsistencyError::RefinementFailed(
            "no contained starting configuration found".into(),
        ));
    }

    let mut step = 0.1f64;
    while t_low < 1.0 {
        let t_try = (t_low + step).min(1.0);
        let shrunk = scaled_covariance_target(target, t_try);
        let mut cand = points.clone();
        if refine_at_target(&mut cand, &shrunk, e, 200) {
            points = cand;
            t_low = t_try;
            step = (step * 1.5).min(0.25);
        } else {
            step *= 0.5;
            if step < 1e-3 {
                let worst = max_mahalanobis(&points, e);
                return Err(ConsistencyError::RefinementFailed(format!(
                    "covariance continuation stalled at scale {t_low:.4} \
                     (worst Mahalanobis {worst:.6})"
                )));
            }
        }
    }
    Ok(points)
}

/// Realize strictly consistent parameters by exactly four point masses.
///
/// The default construction places equal masses on an anisotropically scaled
/// tetrahedron, matching all moments exactly. When a bounding ellipsoid is
/// given, the parameters must pass [`check_realizable_on_ellipsoid`]; if the
/// default construction leaves the ellipsoid, orientations are searched
/// (moments stay exact) and finally a constrained refinement with unequal
/// masses is attempted. Failure of the refinement is reported, never
/// silently ignored.
pub fn four_point_realization(
    p: &InertialParams,
    e: Option<&Ellipsoid>,
) -> Result<PointMassSet, ConsistencyError> {
    let Some(e) = e else {
        return tetrahedron_points(p, &Matrix3::identity());
    };
    let check = check_realizable_on_ellipsoid(p, &e.homogeneous(), None);
    if !check.j_positive_definite {
        return Err(ConsistencyError::NotStrictlyConsistent {
            min_eig: check.j_min_eig,
        });
    }
    if !check.trace_nonnegative {
        return Err(ConsistencyError::NotRealizableOnEllipsoid { trace: check.trace });
    }
    let seed = match orientation_search(p, e) {
        Ok(set) => return Ok(set),
        Err(best) => best,
    };
    let set = constrained_refinement(seed, p, e)?;
    verify_realization(&set, p, e)?;
    Ok(set)
}

fn verify_realization(
    set: &PointMassSet,
    target: &InertialParams,
    e: &Ellipsoid,
) -> Result<(), ConsistencyError> {
    let scale = target.to_vector().abs().max().max(1.0);
    let err = (set.params().to_vector() - target.to_vector()).abs().max();
    if err > 1e-9 * scale {
        return Err(ConsistencyError::RefinementFailed(format!(
            "moment mismatch {err:.3e} after refinement"
        )));
    }
    if set.0.iter().any(|pm| pm.mass <= 0.0) {
        return Err(ConsistencyError::RefinementFailed(
            "nonpositive point mass after refinement".into(),
        ));
    }
    let worst = max_mahalanobis(set, e);
    if worst > 1.0 + 1e-9 {
        return Err(ConsistencyError::RefinementFailed(format!(
            "point outside ellipsoid (Mahalanobis {worst:.6})"
        )));
    }
    Ok(())
}

/// Per-ellipsoid entries of a [`ConsistencyReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidCheck {
    /// Smallest eigenvalue of the center-of-mass LMI.
    pub com_lmi_min_eig: f64,
    /// Center-of-mass LMI feasibility.
    pub com_feasible: bool,
    /// `Tr(J Q)` for this ellipsoid.
    pub trace_value: f64,
    /// Realizability verdict (strict pseudo-inertia and nonnegative trace).
    pub realizable: bool,
}

/// Full consistency assessment of one body's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Spatial-inertia positive definiteness.
    pub semi_consistent: bool,
    /// Pseudo-inertia positive definiteness.
    pub fully_consistent: bool,
    /// Triangle margins on the principal moments (ascending eigenvalue
    /// order); `NaN` when the mass is not positive.
    pub triangle_margins: [f64; 3],
    /// Smallest eigenvalue of the spatial inertia.
    pub min_eig_spatial: f64,
    /// Smallest eigenvalue of the pseudo-inertia.
    pub min_eig_pseudo: f64,
    /// Covariance ellipsoid when defined (positive mass, PSD covariance).
    pub covariance_ellipsoid: Option<CovarianceEllipsoid>,
    /// Per-bounding-ellipsoid results.
    pub ellipsoid_checks: Vec<EllipsoidCheck>,
}

/// Assess a parameter vector against all consistency conditions and the
/// given bounding ellipsoids.
pub fn assess(p: &InertialParams, ellipsoids: &[Ellipsoid]) -> ConsistencyReport {
    let semi = check_semi_consistent(p, None);
    let full = check_fully_consistent(p, None);
    let margins = p
        .rot_inertia_about_com()
        .map(|i| triangle_margins(&i))
        .unwrap_or_else(|_| Vector3::from_element(f64::NAN));
    let cov = covariance_ellipsoid(p).ok();
    let checks = ellipsoids
        .iter()
        .map(|e| {
            let com = com_ellipsoid_lmi(p, e);
            let real = check_realizable_on_ellipsoid(p, &e.homogeneous(), None);
            EllipsoidCheck {
                com_lmi_min_eig: com.min_eig,
                com_feasible: com.feasible,
                trace_value: real.trace,
                realizable: real.realizable,
            }
        })
        .collect();
    ConsistencyReport {
        semi_consistent: semi.satisfied,
        fully_consistent: full.satisfied,
        triangle_margins: margins.into(),
        min_eig_spatial: semi.min_eig,
        min_eig_pseudo: full.min_eig,
        covariance_ellipsoid: cov,
        ellipsoid_checks: checks,
    }
}

/// Trace coefficients of `Tr(J(π) Q)` as a linear functional of the
/// parameter vector.
pub fn trace_coefficients(q: &HomogeneousEllipsoid) -> [f64; 10] {
    let basis = crate::spatial::pseudo_inertia_basis();
    let mut coeffs = [0.0; 10];
    for (k, b) in basis.iter().enumerate() {
        coeffs[k] = (b * q.0).trace();
    }
    coeffs
}

/// Result of the union-of-ellipsoids realizability test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnionCheck {
    /// Whether a valid split across the ellipsoids exists.
    pub realizable: bool,
    /// The minimum-norm split `π = Σ_j π_j` when realizable (component `j`
    /// is realizable on ellipsoid `j`, possibly degenerately).
    pub components: Option<Vec<InertialParams>>,
    /// Closed-cone per-component verification of the returned split.
    pub component_checks: Vec<RealizabilityCheck>,
    /// Whether the total is also strictly consistent (degenerate sums such
    /// as pure point-mass inputs are realizable without being strict).
    pub sum_strictly_consistent: bool,
    /// Solver diagnostic when the verdict came from a certificate.
    pub diagnostic: Option<alloc::string::String>,
}

fn union_constraints(
    prog: &mut crate::sdp::ConicProgram,
    p: &InertialParams,
    ellipsoids: &[Ellipsoid],
) -> Result<(), crate::sdp::ProgramError> {
    use crate::sdp::{svec, svec_dim, ConeSpec};
    use nalgebra::{DMatrix, DVector};

    let l = ellipsoids.len();
    let n = prog.n_vars();
    let basis = crate::spatial::pseudo_inertia_basis();
    let j_target = p.pseudo_inertia().0;
    let dim4 = svec_dim(4);

    // Component 1 is eliminated: π_1 = π - Σ_{j≥2} π_j, so its constraints
    // are affine in the remaining blocks with the total as offset.
    let mut g = DMatrix::zeros(dim4, n);
    for b in 0..l - 1 {
        for k in 0..10 {
            let col = svec(&DMatrix::from_column_slice(4, 4, basis[k].as_slice()));
            g.column_mut(10 * b + k).copy_from(&col);
        }
    }
    let h = svec(&DMatrix::from_column_slice(4, 4, j_target.as_slice()));
    prog.add_block(ConeSpec::Psd(4), "component1/pseudo-inertia", g, h)?;

    let coeffs1 = trace_coefficients(&ellipsoids[0].homogeneous());
    let mut g = DMatrix::zeros(1, n);
    for b in 0..l - 1 {
        for k in 0..10 {
            g[(0, 10 * b + k)] = coeffs1[k];
        }
    }
    let h1: f64 = coeffs1
        .iter()
        .zip(p.to_vector().iter())
        .map(|(c, v)| c * v)
        .sum();
    prog.add_block(
        ConeSpec::NonNeg(1),
        "component1/trace",
        g,
        DVector::from_vec(alloc::vec![h1]),
    )?;

    for j in 1..l {
        let b = j - 1;
        let mut g = DMatrix::zeros(dim4, n);
        for k in 0..10 {
            let col = svec(&DMatrix::from_column_slice(4, 4, basis[k].as_slice()));
            g.column_mut(10 * b + k).copy_from(&(-col));
        }
        prog.add_block(
            ConeSpec::Psd(4),
            format!("component{}/pseudo-inertia", j + 1),
            g,
            DVector::zeros(dim4),
        )?;
        let coeffs = trace_coefficients(&ellipsoids[j].homogeneous());
        let mut g = DMatrix::zeros(1, n);
        for k in 0..10 {
            g[(0, 10 * b + k)] = -coeffs[k];
        }
        prog.add_block(
            ConeSpec::NonNeg(1),
            format!("component{}/trace", j + 1),
            g,
            DVector::zeros(1),
        )?;
    }
    Ok(())
}

/// Density realizability on a union of ellipsoids.
///
/// The parameters are realizable on the union exactly when they split as
/// `π = Σ_j π_j` with each `π_j` realizable on its ellipsoid. The split is
/// found by a conic feasibility solve (component 1 eliminated, so the sum
/// constraint holds exactly); a second minimum-norm solve makes the returned
/// decomposition deterministic. Per-component conditions are closed
/// (`J ⪰ 0`): valid splits may concentrate all mass in one ellipsoid.
pub fn check_realizable_on_union(
    p: &InertialParams,
    ellipsoids: &[Ellipsoid],
) -> Result<UnionCheck, ConsistencyError> {
    use crate::sdp::{solve, ConicProgram, SolveStatus, SolverOptions, VarLayout};
    use nalgebra::{DMatrix, DVector};

    if ellipsoids.is_empty() {
        return Err(ConsistencyError::EmptyEllipsoidList);
    }
    let sum_strict = check_fully_consistent(p, None).satisfied;
    if ellipsoids.len() == 1 {
        // Exact reduction to the single-ellipsoid test.
        let check = check_realizable_on_ellipsoid(p, &ellipsoids[0].homogeneous(), None);
        return Ok(UnionCheck {
            realizable: check.realizable,
            components: check.realizable.then(|| alloc::vec![*p]),
            component_checks: alloc::vec![check],
            sum_strictly_consistent: sum_strict,
            diagnostic: None,
        });
    }

    let l = ellipsoids.len();
    let n = 10 * (l - 1);
    let mut layout = VarLayout::new();
    for j in 1..l {
        layout
            .push(format!("component{}", j + 1), 10)
            .map_err(|e| ConsistencyError::SolverFailure(alloc::format!("{e}")))?;
    }

    // Stage 1: pure feasibility with infeasibility certificates.
    let mut feas = ConicProgram::new(layout.clone());
    union_constraints(&mut feas, p, ellipsoids)
        .map_err(|e| ConsistencyError::SolverFailure(alloc::format!("{e}")))?;
    let opts = SolverOptions::default();
    let feas_sol = solve(&feas, &opts);
    match feas_sol.status {
        SolveStatus::Infeasible => {
            return Ok(UnionCheck {
                realizable: false,
                components: None,
                component_checks: Vec::new(),
                sum_strictly_consistent: sum_strict,
                diagnostic: feas_sol.diagnostic,
            });
        }
        SolveStatus::Optimal => {}
        other => {
            return Err(ConsistencyError::SolverFailure(alloc::format!(
                "feasibility stage ended with {other:?}: {}",
                feas_sol.diagnostic.unwrap_or_default()
            )));
        }
    }

    // Stage 2: minimum-norm split for a deterministic decomposition,
    // Σ_j ‖π_j‖² in the reduced variables.
    let mut prog = ConicProgram::new(layout);
    let mut p_mat = DMatrix::zeros(n, n);
    for a in 0..l - 1 {
        for b in 0..l - 1 {
            for k in 0..10 {
                p_mat[(10 * a + k, 10 * b + k)] = if a == b { 4.0 } else { 2.0 };
            }
        }
    }
    let target = p.to_vector();
    let mut q = DVector::zeros(n);
    for b in 0..l - 1 {
        for k in 0..10 {
            q[10 * b + k] = -2.0 * target[k];
        }
    }
    prog.set_quadratic_objective(p_mat, q, target.dot(&target))
        .map_err(|e| ConsistencyError::SolverFailure(alloc::format!("{e}")))?;
    union_constraints(&mut prog, p, ellipsoids)
        .map_err(|e| ConsistencyError::SolverFailure(alloc::format!("{e}")))?;
    let sol = solve(&prog, &opts);
    let x = if sol.status == SolveStatus::Optimal {
        &sol.x
    } else {
        // The feasibility point still witnesses realizability.
        &feas_sol.x
    };

    let mut components = Vec::with_capacity(l);
    let mut rest = target;
    for b in 0..l - 1 {
        let pj = InertialParams::from_slice(&x.as_slice()[10 * b..10 * b + 10]);
        rest -= pj.to_vector();
        components.push(pj);
    }
    components.insert(0, InertialParams::from_vector(&rest));
    let component_checks: Vec<RealizabilityCheck> = components
        .iter()
        .zip(ellipsoids.iter())
        .map(|(pj, e)| check_realizable_on_ellipsoid(pj, &e.homogeneous(), None))
        .collect();
    Ok(UnionCheck {
        realizable: true,
        components: Some(components),
        component_checks,
        sum_strictly_consistent: sum_strict,
        diagnostic: (sol.status != SolveStatus::Optimal).then(|| {
            alloc::format!(
                "minimum-norm stage ended with {:?}; returning the feasibility point",
                sol.status
            )
        }),
    })
}
