//! Spatial (6D) and homogeneous (4×4) rigid-body algebra and inertial
//! parameter representations.
//!
//! A body's inertial parameters are the ten numbers in which the equations of
//! motion are linear: mass `m`, first mass moment `h = m c` (with `c` the
//! center of mass), and the rotational inertia about the body-frame origin.
//! This module holds those parameters and the three matrix views of them:
//! the 6×6 spatial inertia, the 4×4 pseudo-inertia (the matrix of all density
//! moments up to second order), and the 3×3 second-moment matrix. All maps
//! are linear in the parameter vector and exactly invertible.

use core::fmt;

use nalgebra::{Matrix3, Matrix4, Matrix6, SVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

#[allow(unused_imports)]
use num_traits::Float;

/// Errors from spatial-algebra constructors and conversions.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpatialError {
    /// A rotation matrix failed the orthonormality / orientation check.
    #[error("matrix is not a rotation: |R^T R - 1| = {ortho_defect:.3e}, det = {det:.12}")]
    NotARotation {
        /// Max-norm of `R^T R - 1`.
        ortho_defect: f64,
        /// Determinant of the candidate rotation.
        det: f64,
    },
    /// An operation that derives center-of-mass quantities was given a
    /// non-positive mass.
    #[error("mass must be positive for center-of-mass quantities, got {0}")]
    NonPositiveMass(f64),
}

/// Skew-symmetric matrix `S(v)` with `S(v) y = v × y`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Symmetric 3×3 matrix stored as its six unique entries.
///
/// Storage order is `[xx, xy, xz, yy, yz, zz]`, matching the tail of the
/// flattened inertial parameter vector. Storing only the unique entries makes
/// exact symmetry a representation invariant instead of a numerical accident.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SymMat3(pub [f64; 6]);

impl SymMat3 {
    /// Zero matrix.
    pub fn zeros() -> Self {
        SymMat3([0.0; 6])
    }

    /// Identity scaled by `s`.
    pub fn scaled_identity(s: f64) -> Self {
        SymMat3([s, 0.0, 0.0, s, 0.0, s])
    }

    /// Diagonal matrix.
    pub fn from_diagonal(d: &Vector3<f64>) -> Self {
        SymMat3([d.x, 0.0, 0.0, d.y, 0.0, d.z])
    }

    /// Symmetric part of an arbitrary 3×3 matrix, `(M + M^T)/2`.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        SymMat3([
            m[(0, 0)],
            0.5 * (m[(0, 1)] + m[(1, 0)]),
            0.5 * (m[(0, 2)] + m[(2, 0)]),
            m[(1, 1)],
            0.5 * (m[(1, 2)] + m[(2, 1)]),
            m[(2, 2)],
        ])
    }

    /// Rehydrate the full matrix.
    pub fn matrix(&self) -> Matrix3<f64> {
        let [xx, xy, xz, yy, yz, zz] = self.0;
        Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz)
    }

    /// Trace.
    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[3] + self.0[5]
    }

    /// Eigenvalues in ascending order (symmetric solver, deterministic).
    pub fn eigenvalues_sorted(&self) -> Vector3<f64> {
        let mut ev: [f64; 3] = self.matrix().symmetric_eigen().eigenvalues.into();
        ev.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
        Vector3::from(ev)
    }

    /// Eigen-decomposition with eigenvalues ascending and a deterministic
    /// sign convention on the eigenvectors (largest-magnitude component
    /// positive).
    pub fn eigen_sorted(&self) -> (Vector3<f64>, Matrix3<f64>) {
        let eig = self.matrix().symmetric_eigen();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .expect("eigenvalues are finite")
        });
        let mut values = Vector3::zeros();
        let mut vectors = Matrix3::zeros();
        for (k, &idx) in order.iter().enumerate() {
            values[k] = eig.eigenvalues[idx];
            let mut v = eig.eigenvectors.column(idx).into_owned();
            let dominant = v.iamax();
            if v[dominant] < 0.0 {
                v = -v;
            }
            vectors.set_column(k, &v);
        }
        (values, vectors)
    }

    /// Entrywise linear combination `self + s * other`.
    pub fn add_scaled(&self, other: &SymMat3, s: f64) -> SymMat3 {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(other.0.iter()) {
            *o += s * r;
        }
        SymMat3(out)
    }

    /// Scale all entries.
    pub fn scale(&self, s: f64) -> SymMat3 {
        let mut out = self.0;
        for o in out.iter_mut() {
            *o *= s;
        }
        SymMat3(out)
    }
}

impl fmt::Display for SymMat3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.matrix())
    }
}

/// The ten inertial parameters of one rigid body, origin-referenced.
///
/// Flattened order is `[m, hx, hy, hz, Ixx, Ixy, Ixz, Iyy, Iyz, Izz]` with
/// `h = m c` the first mass moment and the rotational inertia taken about
/// the body-frame origin (not the center of mass). No consistency is implied
/// by the type: inconsistent vectors are representable on purpose, since the
/// identification machinery must handle them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertialParams {
    /// Mass (kg).
    pub mass: f64,
    /// First mass moment `h = m c` (kg·m).
    pub first_moment: Vector3<f64>,
    /// Rotational inertia about the body-frame origin (kg·m²).
    pub rot_inertia: SymMat3,
}

impl InertialParams {
    /// All-zero parameters.
    pub fn zeros() -> Self {
        InertialParams {
            mass: 0.0,
            first_moment: Vector3::zeros(),
            rot_inertia: SymMat3::zeros(),
        }
    }

    /// Parameters of a point mass at `position`.
    pub fn point_mass(mass: f64, position: &Vector3<f64>) -> Self {
        let c = position;
        let s = skew(c);
        InertialParams {
            mass,
            first_moment: mass * c,
            rot_inertia: SymMat3::from_matrix(&(mass * s * s.transpose())),
        }
    }

    /// Build from center-of-mass referenced quantities via the parallel axis
    /// theorem: `I_bar = I_com + m S(c) S(c)^T`, `h = m c`.
    pub fn from_com_quantities(mass: f64, com: &Vector3<f64>, inertia_about_com: &SymMat3) -> Self {
        InertialParams {
            mass,
            first_moment: mass * com,
            rot_inertia: shift_rot_inertia_to_origin(mass, com, inertia_about_com),
        }
    }

    /// Flatten to the canonical 10-vector.
    pub fn to_vector(&self) -> SVector<f64, 10> {
        let h = self.first_moment;
        let i = self.rot_inertia.0;
        SVector::<f64, 10>::from([self.mass, h.x, h.y, h.z, i[0], i[1], i[2], i[3], i[4], i[5]])
    }

    /// Rebuild from the canonical 10-vector.
    pub fn from_vector(v: &SVector<f64, 10>) -> Self {
        InertialParams {
            mass: v[0],
            first_moment: Vector3::new(v[1], v[2], v[3]),
            rot_inertia: SymMat3([v[4], v[5], v[6], v[7], v[8], v[9]]),
        }
    }

    /// Flatten from a slice of length 10 (panics otherwise).
    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), 10, "inertial parameter slice must have length 10");
        InertialParams {
            mass: v[0],
            first_moment: Vector3::new(v[1], v[2], v[3]),
            rot_inertia: SymMat3([v[4], v[5], v[6], v[7], v[8], v[9]]),
        }
    }

    /// Center of mass `c = h / m`. Errors when the mass is not positive.
    pub fn com(&self) -> Result<Vector3<f64>, SpatialError> {
        if self.mass <= 0.0 {
            return Err(SpatialError::NonPositiveMass(self.mass));
        }
        Ok(self.first_moment / self.mass)
    }

    /// Rotational inertia about the center of mass,
    /// `I_com = I_bar - m S(c) S(c)^T`. Errors when the mass is not positive.
    pub fn rot_inertia_about_com(&self) -> Result<SymMat3, SpatialError> {
        let c = self.com()?;
        Ok(shift_rot_inertia_to_com(self.mass, &c, &self.rot_inertia))
    }

    /// The 6×6 spatial inertia view.
    pub fn spatial_inertia(&self) -> SpatialInertia {
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rot_inertia.matrix());
        let sh = skew(&self.first_moment);
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&sh);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&sh.transpose());
        m.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&Matrix3::from_diagonal_element(self.mass));
        SpatialInertia(m)
    }

    /// The 4×4 pseudo-inertia view `[Σ h; h^T m]` with
    /// `Σ = Tr(I_bar)/2 · 1 - I_bar` the second-moment matrix.
    pub fn pseudo_inertia(&self) -> PseudoInertia {
        let sigma = second_moment_from_rot_inertia(&self.rot_inertia);
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&sigma.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.first_moment);
        m.fixed_view_mut::<1, 3>(3, 0)
            .copy_from(&self.first_moment.transpose());
        m[(3, 3)] = self.mass;
        PseudoInertia(m)
    }

    /// Exact inverse of [`InertialParams::pseudo_inertia`].
    pub fn from_pseudo(j: &PseudoInertia) -> Self {
        let m = j.0;
        let sigma = SymMat3([
            m[(0, 0)],
            0.5 * (m[(0, 1)] + m[(1, 0)]),
            0.5 * (m[(0, 2)] + m[(2, 0)]),
            m[(1, 1)],
            0.5 * (m[(1, 2)] + m[(2, 1)]),
            m[(2, 2)],
        ]);
        InertialParams {
            mass: m[(3, 3)],
            first_moment: Vector3::new(
                0.5 * (m[(0, 3)] + m[(3, 0)]),
                0.5 * (m[(1, 3)] + m[(3, 1)]),
                0.5 * (m[(2, 3)] + m[(3, 2)]),
            ),
            rot_inertia: rot_inertia_from_second_moment(&sigma),
        }
    }

    /// Express the parameters in another frame. `pose` maps coordinates of
    /// the current frame into the target frame (`x' = R x + p`).
    ///
    /// Implemented as the congruence `J' = T J T^T` on the pseudo-inertia
    /// with `T` the homogeneous matrix of `pose`; mass is invariant and
    /// consistency status is preserved.
    pub fn transformed(&self, pose: &RigidTransform) -> InertialParams {
        let t = pose.homogeneous();
        InertialParams::from_pseudo(&PseudoInertia(t * self.pseudo_inertia().0 * t.transpose()))
    }

    /// Kinetic energy `½ v^T I(π) v` through the spatial inertia.
    pub fn kinetic_energy_spatial(&self, v: &SpatialVelocity) -> f64 {
        let vv = v.to_vector();
        0.5 * vv.dot(&(self.spatial_inertia().0 * vv))
    }

    /// Kinetic energy `½ Tr(V J(π) V^T)` through the pseudo-inertia and the
    /// homogeneous velocity form. Agrees with the spatial form to roundoff.
    pub fn kinetic_energy_trace(&self, v: &SpatialVelocity) -> f64 {
        let vh = v.homogeneous();
        0.5 * (vh * self.pseudo_inertia().0 * vh.transpose()).trace()
    }
}

/// Serialized as the flat 10-element array in canonical order.
impl Serialize for InertialParams {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let v = self.to_vector();
        let arr: [f64; 10] = v.into();
        arr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for InertialParams {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let arr = <[f64; 10]>::deserialize(deserializer)?;
        Ok(InertialParams::from_slice(&arr))
    }
}

/// Second-moment matrix from rotational inertia: `Σ = Tr(I)/2 · 1 - I`.
///
/// Mutually inverse with [`rot_inertia_from_second_moment`]. The result may
/// be indefinite; that is exactly what the consistency checks detect.
pub fn second_moment_from_rot_inertia(i_bar: &SymMat3) -> SymMat3 {
    let half_tr = 0.5 * i_bar.trace();
    SymMat3([
        half_tr - i_bar.0[0],
        -i_bar.0[1],
        -i_bar.0[2],
        half_tr - i_bar.0[3],
        -i_bar.0[4],
        half_tr - i_bar.0[5],
    ])
}

/// Rotational inertia from the second-moment matrix: `I = Tr(Σ) · 1 - Σ`.
pub fn rot_inertia_from_second_moment(sigma: &SymMat3) -> SymMat3 {
    let tr = sigma.trace();
    SymMat3([
        tr - sigma.0[0],
        -sigma.0[1],
        -sigma.0[2],
        tr - sigma.0[3],
        -sigma.0[4],
        tr - sigma.0[5],
    ])
}

/// Parallel axis theorem toward the origin:
/// `I_bar = I_com + m S(c) S(c)^T`.
pub fn shift_rot_inertia_to_origin(mass: f64, com: &Vector3<f64>, i_com: &SymMat3) -> SymMat3 {
    let s = skew(com);
    SymMat3::from_matrix(&(i_com.matrix() + mass * s * s.transpose()))
}

/// Parallel axis theorem toward the center of mass:
/// `I_com = I_bar - m S(c) S(c)^T`.
pub fn shift_rot_inertia_to_com(mass: f64, com: &Vector3<f64>, i_bar: &SymMat3) -> SymMat3 {
    let s = skew(com);
    SymMat3::from_matrix(&(i_bar.matrix() - mass * s * s.transpose()))
}

/// 6×6 spatial inertia `[I_bar S(h); S(h)^T m·1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialInertia(pub Matrix6<f64>);

impl SpatialInertia {
    /// Apply to a motion vector, producing a force vector:
    /// `[I_bar ω + h × v; m v - h × ω]`.
    pub fn mul_velocity(&self, v: &SpatialVelocity) -> SpatialForce {
        let f = self.0 * v.to_vector();
        SpatialForce {
            moment: Vector3::new(f[0], f[1], f[2]),
            force: Vector3::new(f[3], f[4], f[5]),
        }
    }
}

/// 4×4 pseudo-inertia `[Σ h; h^T m]`, the matrix of all density moments up
/// to second order. Positive definiteness of this matrix is exactly physical
/// consistency of the parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoInertia(pub Matrix4<f64>);

impl PseudoInertia {
    /// Eigenvalues in ascending order.
    pub fn eigenvalues_sorted(&self) -> [f64; 4] {
        let sym = SymMat4::from_matrix(&self.0);
        sym.eigenvalues_sorted()
    }
}

/// Minimal symmetric-4×4 helper used for deterministic eigenvalue queries.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SymMat4(pub Matrix4<f64>);

impl SymMat4 {
    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        SymMat4(0.5 * (m + m.transpose()))
    }

    pub fn eigenvalues_sorted(&self) -> [f64; 4] {
        let mut ev: [f64; 4] = self.0.symmetric_eigen().eigenvalues.into();
        ev.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
        ev
    }
}

/// Spatial motion vector `[ω; v]` (angular, then linear), body or world
/// coordinates depending on context.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpatialVelocity {
    /// Angular rate (rad/s).
    pub angular: Vector3<f64>,
    /// Linear rate (m/s).
    pub linear: Vector3<f64>,
}

impl SpatialVelocity {
    /// Zero motion.
    pub fn zero() -> Self {
        Self::default()
    }

    /// Construct from parts.
    pub fn new(angular: Vector3<f64>, linear: Vector3<f64>) -> Self {
        SpatialVelocity { angular, linear }
    }

    /// Pack into a 6-vector `[ω; v]`.
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.angular.x,
            self.angular.y,
            self.angular.z,
            self.linear.x,
            self.linear.y,
            self.linear.z,
        )
    }

    /// Homogeneous form `[S(ω) v; 0 0]` in se(3).
    pub fn homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&self.angular));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.linear);
        m
    }

    /// Motion cross product `self ×ₘ other` (acts on motion vectors).
    pub fn cross_motion(&self, other: &SpatialVelocity) -> SpatialVelocity {
        SpatialVelocity {
            angular: self.angular.cross(&other.angular),
            linear: self.angular.cross(&other.linear) + self.linear.cross(&other.angular),
        }
    }

    /// Force cross product `self × f other` (acts on force vectors).
    pub fn cross_force(&self, other: &SpatialForce) -> SpatialForce {
        SpatialForce {
            moment: self.angular.cross(&other.moment) + self.linear.cross(&other.force),
            force: self.angular.cross(&other.force),
        }
    }

    /// Scale by a joint rate.
    pub fn scaled(&self, s: f64) -> SpatialVelocity {
        SpatialVelocity {
            angular: s * self.angular,
            linear: s * self.linear,
        }
    }

    /// Component-wise sum.
    pub fn add(&self, other: &SpatialVelocity) -> SpatialVelocity {
        SpatialVelocity {
            angular: self.angular + other.angular,
            linear: self.linear + other.linear,
        }
    }
}

/// Spatial force vector `[n; f]` (moment, then linear force).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpatialForce {
    /// Moment (N·m).
    pub moment: Vector3<f64>,
    /// Linear force (N).
    pub force: Vector3<f64>,
}

impl SpatialForce {
    /// Zero wrench.
    pub fn zero() -> Self {
        Self::default()
    }

    /// Pack into a 6-vector `[n; f]`.
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.moment.x,
            self.moment.y,
            self.moment.z,
            self.force.x,
            self.force.y,
            self.force.z,
        )
    }

    /// Component-wise sum.
    pub fn add(&self, other: &SpatialForce) -> SpatialForce {
        SpatialForce {
            moment: self.moment + other.moment,
            force: self.force + other.force,
        }
    }

    /// Pairing with a motion vector, `n·ω + f·v` (power when the motion is a
    /// velocity, joint torque when it is a unit joint subspace).
    pub fn dot_motion(&self, v: &SpatialVelocity) -> f64 {
        self.moment.dot(&v.angular) + self.force.dot(&v.linear)
    }
}

/// Proper rigid transform: rotation plus translation.
///
/// `transform_point` computes `x' = R x + p`; composition follows the same
/// convention, so a transform is naturally read as "pose of the child frame
/// expressed in the parent frame".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    /// Rotation matrix (child axes in parent coordinates).
    pub rotation: Matrix3<f64>,
    /// Translation (child origin in parent coordinates, m).
    pub translation: Vector3<f64>,
}

const ROTATION_TOL: f64 = 1e-12;

impl RigidTransform {
    /// Identity transform.
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validated constructor: `R` must be orthonormal with determinant +1
    /// within 1e-12.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, SpatialError> {
        let defect = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if defect > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(SpatialError::NotARotation {
                ortho_defect: defect,
                det,
            });
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    /// Pure translation.
    pub fn translation(p: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: p,
        }
    }

    /// Rotation about a unit axis by `angle` (Rodrigues), no translation.
    pub fn rotation_about(axis: &Vector3<f64>, angle: f64) -> Self {
        let s = skew(axis);
        let rotation =
            Matrix3::identity() + angle.sin() * s + (1.0 - angle.cos()) * (s * s);
        RigidTransform {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    /// Composition: `(self ∘ other)(x) = self(other(x))`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Inverse transform.
    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Apply to a point: `R x + p`.
    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    /// Homogeneous 4×4 matrix `[R p; 0 1]`.
    pub fn homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// 6×6 spatial motion transform `[R 0; S(p)R R]` mapping child-frame
    /// motion coordinates to parent-frame coordinates.
    pub fn motion_matrix(&self) -> Matrix6<f64> {
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(skew(&self.translation) * self.rotation));
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.rotation);
        m
    }

    /// Map a motion vector from child coordinates to parent coordinates.
    pub fn transform_motion(&self, v: &SpatialVelocity) -> SpatialVelocity {
        let angular = self.rotation * v.angular;
        SpatialVelocity {
            angular,
            linear: self.rotation * v.linear + self.translation.cross(&angular),
        }
    }

    /// Map a motion vector from parent coordinates to child coordinates.
    pub fn inv_transform_motion(&self, v: &SpatialVelocity) -> SpatialVelocity {
        let rt = self.rotation.transpose();
        SpatialVelocity {
            angular: rt * v.angular,
            linear: rt * (v.linear - self.translation.cross(&v.angular)),
        }
    }

    /// Map a force vector from child coordinates to parent coordinates.
    pub fn transform_force(&self, f: &SpatialForce) -> SpatialForce {
        let force = self.rotation * f.force;
        SpatialForce {
            moment: self.rotation * f.moment + self.translation.cross(&force),
            force,
        }
    }
}

/// Kinetic energy evaluation routes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyForm {
    /// `½ v^T I(π) v` via the 6×6 spatial inertia.
    Spatial,
    /// `½ Tr(V J(π) V^T)` via the 4×4 pseudo-inertia.
    Trace,
}

/// Kinetic energy of a body with parameters `p` moving at `v`, evaluated by
/// the requested route. The two routes agree to roundoff and serve as a
/// cross-validation identity.
pub fn kinetic_energy(p: &InertialParams, v: &SpatialVelocity, form: EnergyForm) -> f64 {
    match form {
        EnergyForm::Spatial => p.kinetic_energy_spatial(v),
        EnergyForm::Trace => p.kinetic_energy_trace(v),
    }
}

/// Basis matrices `A_k` of the pseudo-inertia map: `J(π) = Σ_k π_k A_k`.
///
/// Used to assemble LMI constraints on the parameter vector.
pub fn pseudo_inertia_basis() -> [Matrix4<f64>; 10] {
    let mut basis = [Matrix4::zeros(); 10];
    for (k, b) in basis.iter_mut().enumerate() {
        let mut e = SVector::<f64, 10>::zeros();
        e[k] = 1.0;
        *b = InertialParams::from_vector(&e).pseudo_inertia().0;
    }
    basis
}

/// Basis matrices of the spatial-inertia map: `I(π) = Σ_k π_k B_k`.
pub fn spatial_inertia_basis() -> [Matrix6<f64>; 10] {
    let mut basis = [Matrix6::zeros(); 10];
    for (k, b) in basis.iter_mut().enumerate() {
        let mut e = SVector::<f64, 10>::zeros();
        e[k] = 1.0;
        *b = InertialParams::from_vector(&e).spatial_inertia().0;
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_vec3(rng: &mut StdRng) -> Vector3<f64> {
        Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
    }

    fn random_params(rng: &mut StdRng) -> InertialParams {
        let mut v = SVector::<f64, 10>::zeros();
        for i in 0..10 {
            v[i] = rng.gen_range(-3.0..3.0);
        }
        InertialParams::from_vector(&v)
    }

    fn random_rotation(rng: &mut StdRng) -> Matrix3<f64> {
        let axis = random_vec3(rng).normalize();
        let angle = rng.gen_range(-3.0..3.0);
        RigidTransform::rotation_about(&axis, angle).rotation
    }

    #[test]
    fn skew_unit_x() {
        let s = skew(&Vector3::new(1.0, 0.0, 0.0));
        let expected = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_eq!(s, expected);
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
    }

    #[test]
    fn skew_matches_cross_product() {
        let mut rng = StdRng::seed_from_u64(1);
        for _ in 0..100 {
            let v = random_vec3(&mut rng);
            let y = random_vec3(&mut rng);
            let err = (skew(&v) * y - v.cross(&y)).abs().max();
            assert!(err <= 1e-15, "err = {err}");
            assert_abs_diff_eq!(skew(&v) + skew(&v).transpose(), Matrix3::zeros());
        }
    }

    #[test]
    fn spatial_inertia_sphere() {
        // Solid sphere with I_com = 0.8·1 (e.g. m = 2, r = 1 since 2/5·m·r² = 0.8).
        let p = InertialParams::from_slice(&[1.0, 0.0, 0.0, 0.0, 0.8, 0.0, 0.0, 0.8, 0.0, 0.8]);
        let i = p.spatial_inertia().0;
        let mut expected = Matrix6::zeros();
        expected
            .fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(0.8 * Matrix3::identity()));
        expected
            .fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&Matrix3::identity());
        assert_abs_diff_eq!(i, expected, epsilon = 1e-15);

        assert_eq!(InertialParams::zeros().spatial_inertia().0, Matrix6::zeros());
    }

    #[test]
    fn spatial_inertia_point_mass_offsets() {
        let p = InertialParams::point_mass(1.0, &Vector3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(p.first_moment, Vector3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(
            p.rot_inertia.matrix(),
            Matrix3::from_diagonal(&Vector3::new(0.0, 1.0, 1.0)),
            epsilon = 1e-15
        );
        let i = p.spatial_inertia().0;
        let sh = skew(&p.first_moment);
        assert_abs_diff_eq!(i.fixed_view::<3, 3>(0, 3).into_owned(), sh);
    }

    #[test]
    fn pseudo_inertia_point_masses_and_box() {
        // Point mass at the origin: only the mass moment survives.
        let p = InertialParams::point_mass(1.0, &Vector3::zeros());
        let j = p.pseudo_inertia().0;
        let mut expected = Matrix4::zeros();
        expected[(3, 3)] = 1.0;
        assert_abs_diff_eq!(j, expected, epsilon = 1e-15);

        // Point mass at (1,0,0): Σ = diag(1,0,0).
        let p = InertialParams::point_mass(1.0, &Vector3::new(1.0, 0.0, 0.0));
        let j = p.pseudo_inertia().0;
        #[rustfmt::skip]
        let expected = Matrix4::new(
            1.0, 0.0, 0.0, 1.0,
            0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
            1.0, 0.0, 0.0, 1.0,
        );
        assert_abs_diff_eq!(j, expected, epsilon = 1e-15);

        // Uniform box, m = 12, full dimensions (1,2,3), frame at the CoM:
        // I_com = diag(13,10,5) ⇒ Σ = diag(1,4,9) = (m/12)·diag(a²,b²,c²).
        let p = InertialParams::from_com_quantities(
            12.0,
            &Vector3::zeros(),
            &SymMat3::from_diagonal(&Vector3::new(13.0, 10.0, 5.0)),
        );
        let j = p.pseudo_inertia().0;
        assert_abs_diff_eq!(
            j.fixed_view::<3, 3>(0, 0).into_owned(),
            Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 9.0)),
            epsilon = 1e-12
        );
        assert_relative_eq!(j[(3, 3)], 12.0);
    }

    #[test]
    fn second_moment_examples() {
        let s = second_moment_from_rot_inertia(&SymMat3::from_diagonal(&Vector3::new(
            0.8, 0.8, 0.8,
        )));
        assert_abs_diff_eq!(
            s.matrix(),
            Matrix3::from_diagonal_element(0.4),
            epsilon = 1e-15
        );

        let s = second_moment_from_rot_inertia(&SymMat3::from_diagonal(&Vector3::new(
            13.0, 10.0, 5.0,
        )));
        assert_abs_diff_eq!(
            s.matrix(),
            Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 9.0)),
            epsilon = 1e-15
        );

        // Triangle-violating inertia produces an indefinite second moment.
        let s = second_moment_from_rot_inertia(&SymMat3::from_diagonal(&Vector3::new(
            5.0, 1.0, 1.0,
        )));
        assert_abs_diff_eq!(
            s.matrix(),
            Matrix3::from_diagonal(&Vector3::new(-1.5, 2.5, 2.5)),
            epsilon = 1e-15
        );
    }

    #[test]
    fn second_moment_round_trip() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..200 {
            let i = random_params(&mut rng).rot_inertia;
            let back = rot_inertia_from_second_moment(&second_moment_from_rot_inertia(&i));
            for k in 0..6 {
                assert_abs_diff_eq!(back.0[k], i.0[k], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn parallel_axis_examples() {
        // Point mass: I_com = 0 shifts to diag(0,1,1) at c = (1,0,0).
        let i = shift_rot_inertia_to_origin(1.0, &Vector3::new(1.0, 0.0, 0.0), &SymMat3::zeros());
        assert_abs_diff_eq!(
            i.matrix(),
            Matrix3::from_diagonal(&Vector3::new(0.0, 1.0, 1.0)),
            epsilon = 1e-15
        );

        // Solid sphere m = 2, r = 1 shifted to c = (0,0,1).
        let i = shift_rot_inertia_to_origin(
            2.0,
            &Vector3::new(0.0, 0.0, 1.0),
            &SymMat3::scaled_identity(0.8),
        );
        assert_abs_diff_eq!(
            i.matrix(),
            Matrix3::from_diagonal(&Vector3::new(2.8, 2.8, 0.8)),
            epsilon = 1e-14
        );
    }

    #[test]
    fn parallel_axis_round_trip() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..200 {
            let mass = rng.gen_range(0.1..5.0);
            let com = random_vec3(&mut rng);
            let i_com = random_params(&mut rng).rot_inertia;
            let i_bar = shift_rot_inertia_to_origin(mass, &com, &i_com);
            let back = shift_rot_inertia_to_com(mass, &com, &i_bar);
            let scale = i_com.matrix().abs().max().max(1.0);
            assert!((back.matrix() - i_com.matrix()).abs().max() <= 1e-12 * scale);
        }
    }

    #[test]
    fn com_requires_positive_mass() {
        let p = InertialParams::zeros();
        assert_eq!(p.com(), Err(SpatialError::NonPositiveMass(0.0)));
        assert!(p.rot_inertia_about_com().is_err());
    }

    #[test]
    fn pseudo_round_trip_and_trace_relation() {
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..200 {
            let p = random_params(&mut rng);
            let j = p.pseudo_inertia();
            let back = InertialParams::from_pseudo(&j);
            assert!((back.to_vector() - p.to_vector()).abs().max() <= 1e-14);
            // Tr(Σ) = Tr(I_bar)/2 exactly.
            let sigma_tr = j.0[(0, 0)] + j.0[(1, 1)] + j.0[(2, 2)];
            let scale = p.rot_inertia.matrix().abs().max().max(1.0);
            assert_abs_diff_eq!(sigma_tr, 0.5 * p.rot_inertia.trace(), epsilon = 1e-14 * scale);
        }
    }

    #[test]
    fn inertia_maps_are_linear() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..50 {
            let a = random_params(&mut rng);
            let b = random_params(&mut rng);
            let s = rng.gen_range(-2.0..2.0);
            let combo = InertialParams::from_vector(&(a.to_vector() + s * b.to_vector()));
            let lhs = combo.spatial_inertia().0;
            let rhs = a.spatial_inertia().0 + s * b.spatial_inertia().0;
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
            let lhs = combo.pseudo_inertia().0;
            let rhs = a.pseudo_inertia().0 + s * b.pseudo_inertia().0;
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn eigenvalue_relations_between_inertia_and_second_moment() {
        // μ of Σ_com and J of I_com share eigenvectors and satisfy
        // J1 = μ2 + μ3 (cyclically).
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..100 {
            let i_com = random_params(&mut rng).rot_inertia;
            let sigma = second_moment_from_rot_inertia(&i_com);
            let (mu, u) = sigma.eigen_sorted();
            // Shared eigenvectors: U diagonalizes I_com as well.
            let d = u.transpose() * i_com.matrix() * u;
            let off = (d - Matrix3::from_diagonal(&d.diagonal())).abs().max();
            let scale = i_com.matrix().abs().max().max(1.0);
            assert!(off <= 1e-9 * scale, "off-diagonal {off}");
            // Eigenvalue pairing (I_com eigenvalue for eigenvector k is the
            // sum of the other two μ).
            for k in 0..3 {
                let expected = mu[(k + 1) % 3] + mu[(k + 2) % 3];
                assert_abs_diff_eq!(d[(k, k)], expected, epsilon = 1e-9 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn transform_identity_and_translation() {
        let mut rng = StdRng::seed_from_u64(7);
        let p = random_params(&mut rng);
        let moved = p.transformed(&RigidTransform::identity());
        assert!((moved.to_vector() - p.to_vector()).abs().max() <= 1e-15);

        // Translating a point mass moves h = m c accordingly, mass fixed.
        let pm = InertialParams::point_mass(2.0, &Vector3::new(0.5, 0.0, 0.0));
        let shift = Vector3::new(0.0, 1.0, 0.0);
        let moved = pm.transformed(&RigidTransform::translation(shift));
        assert_relative_eq!(moved.mass, 2.0);
        assert_abs_diff_eq!(
            moved.first_moment,
            2.0 * Vector3::new(0.5, 1.0, 0.0),
            epsilon = 1e-14
        );
    }

    #[test]
    fn transform_composition_law() {
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..50 {
            let t1 = RigidTransform { rotation: random_rotation(&mut rng), translation: random_vec3(&mut rng) };
            let t2 = RigidTransform { rotation: random_rotation(&mut rng), translation: random_vec3(&mut rng) };
            let p = random_params(&mut rng);
            let a = p.transformed(&t2).transformed(&t1);
            let b = p.transformed(&t1.compose(&t2));
            assert!((a.to_vector() - b.to_vector()).abs().max() <= 1e-11);
        }
    }

    #[test]
    fn kinetic_energy_is_frame_invariant() {
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..100 {
            let p = random_params(&mut rng);
            let v = SpatialVelocity::new(random_vec3(&mut rng), random_vec3(&mut rng));
            let t = RigidTransform { rotation: random_rotation(&mut rng), translation: random_vec3(&mut rng) };
            // Transform parameters and velocity consistently (motion transform
            // maps child coordinates to parent coordinates).
            let p2 = p.transformed(&t);
            let v2 = t.transform_motion(&v);
            let e1 = p.kinetic_energy_spatial(&v);
            let e2 = p2.kinetic_energy_spatial(&v2);
            assert_abs_diff_eq!(e1, e2, epsilon = 1e-10 * e1.abs().max(1.0));
        }
    }

    #[test]
    fn kinetic_energy_forms_agree() {
        // Zero velocity and a pure spin about z with I_zz = 5.
        let p = InertialParams::from_slice(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.0]);
        let v = SpatialVelocity::new(Vector3::new(0.0, 0.0, 1.0), Vector3::zeros());
        assert_relative_eq!(kinetic_energy(&p, &v, EnergyForm::Spatial), 2.5);
        assert_relative_eq!(kinetic_energy(&p, &v, EnergyForm::Trace), 2.5);
        assert_eq!(
            kinetic_energy(&p, &SpatialVelocity::zero(), EnergyForm::Spatial),
            0.0
        );

        let mut rng = StdRng::seed_from_u64(10);
        for _ in 0..1000 {
            let p = random_params(&mut rng);
            let v = SpatialVelocity::new(random_vec3(&mut rng), random_vec3(&mut rng));
            let spatial = p.kinetic_energy_spatial(&v);
            let trace = p.kinetic_energy_trace(&v);
            assert!(
                (spatial - trace).abs() <= 1e-12 * spatial.abs().max(1.0),
                "spatial {spatial} vs trace {trace}"
            );
        }
    }

    #[test]
    fn rotation_validation() {
        let bad = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(bad, Vector3::zeros()).is_err());
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(reflection, Vector3::zeros()).is_err());
        assert!(RigidTransform::new(Matrix3::identity(), Vector3::zeros()).is_ok());
    }

    #[test]
    fn motion_matrix_matches_transform_motion() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let t = RigidTransform { rotation: random_rotation(&mut rng), translation: random_vec3(&mut rng) };
            let v = SpatialVelocity::new(random_vec3(&mut rng), random_vec3(&mut rng));
            let direct = t.transform_motion(&v).to_vector();
            let via_matrix = t.motion_matrix() * v.to_vector();
            assert_abs_diff_eq!(direct, via_matrix, epsilon = 1e-13);
            let back = t.inv_transform_motion(&t.transform_motion(&v));
            assert_abs_diff_eq!(back.to_vector(), v.to_vector(), epsilon = 1e-13);
        }
    }

    #[test]
    fn basis_matrices_reconstruct_maps() {
        let mut rng = StdRng::seed_from_u64(12);
        let jb = pseudo_inertia_basis();
        let ib = spatial_inertia_basis();
        for _ in 0..20 {
            let p = random_params(&mut rng);
            let v = p.to_vector();
            let mut j = Matrix4::zeros();
            let mut i = Matrix6::zeros();
            for k in 0..10 {
                j += v[k] * jb[k];
                i += v[k] * ib[k];
            }
            assert_abs_diff_eq!(j, p.pseudo_inertia().0, epsilon = 1e-13);
            assert_abs_diff_eq!(i, p.spatial_inertia().0, epsilon = 1e-13);
        }
    }

    #[test]
    fn params_serialize_as_flat_array() {
        let p = InertialParams::from_slice(&[1.5, 0.1, 0.2, 0.3, 1.0, 0.0, 0.0, 2.0, 0.0, 3.0]);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "[1.5,0.1,0.2,0.3,1.0,0.0,0.0,2.0,0.0,3.0]");
        let back: InertialParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
