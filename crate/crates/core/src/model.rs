//! Fixed-base kinematic tree description: links, geared rotors, joint
//! friction flags, and forward kinematics.
//!
//! Bodies are stored in topological order (every parent precedes its
//! children); the base is the world and does not appear in the list. Each
//! link carries one revolute joint; each rotor is rigidly mounted on the
//! stator link of its driven joint and spins at `gear_ratio` times the joint
//! rate about its own axis, with acceleration scaled the same way.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DVector, Vector3};

#[allow(unused_imports)]
use num_traits::Float;

use crate::spatial::{InertialParams, RigidTransform, SpatialVelocity};

/// A single violation found while validating a model.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    /// The body list is empty.
    #[error("model has no bodies")]
    Empty,
    /// A parent reference does not precede the body (or points at itself).
    #[error("body {body} ({name}) has parent {parent} which does not precede it")]
    ParentOrder {
        /// Offending body index.
        body: usize,
        /// Offending body name.
        name: String,
        /// Referenced parent index.
        parent: usize,
    },
    /// A joint axis is not unit length.
    #[error("body {body} ({name}) joint axis has norm {norm:.12}, expected 1 within 1e-10")]
    NonUnitAxis {
        /// Offending body index.
        body: usize,
        /// Offending body name.
        name: String,
        /// Norm of the supplied axis.
        norm: f64,
    },
    /// A rotor gear ratio is not positive.
    #[error("rotor {body} ({name}) has non-positive gear ratio {ratio}")]
    BadGearRatio {
        /// Offending body index.
        body: usize,
        /// Offending body name.
        name: String,
        /// Supplied ratio.
        ratio: f64,
    },
    /// A rotor references a joint that does not exist.
    #[error("rotor {body} ({name}) drives joint {joint}, but the model has {n_joints} joints")]
    BadDrivenJoint {
        /// Offending body index.
        body: usize,
        /// Offending body name.
        name: String,
        /// Referenced joint.
        joint: usize,
        /// Number of joints in the model.
        n_joints: usize,
    },
    /// A rotor is not mounted on the parent link of its driven joint.
    #[error(
        "rotor {body} ({name}) must be mounted on the parent link of joint {joint} \
         (expected parent {expected:?}, found {found:?})"
    )]
    RotorMount {
        /// Offending body index.
        body: usize,
        /// Offending body name.
        name: String,
        /// Driven joint index.
        joint: usize,
        /// Required parent (the stator link), `None` for the world.
        expected: Option<usize>,
        /// Supplied parent.
        found: Option<usize>,
    },
    /// Link joint indices must cover `0..n_joints` exactly once.
    #[error("joint index {joint} is used by more than one link, or joint coverage has gaps")]
    JointCoverage {
        /// The duplicated or missing joint index.
        joint: usize,
    },
    /// The friction-flag list does not match the joint count.
    #[error("friction flag list has length {found}, expected {expected}")]
    FrictionFlags {
        /// Supplied length.
        found: usize,
        /// Required length.
        expected: usize,
    },
    /// Gravity vector has non-finite entries.
    #[error("gravity vector has non-finite entries")]
    BadGravity,
    /// Runtime dimension mismatch between a state vector and the model.
    #[error("state vector has length {found}, expected {expected}")]
    DimensionMismatch {
        /// Supplied length.
        found: usize,
        /// Required length.
        expected: usize,
    },
}

/// What a body is: a link driven by its own joint, or a geared rotor.
#[derive(Debug, Clone, PartialEq)]
pub enum BodyKind {
    /// A link connected to its parent by revolute joint `joint`.
    Link {
        /// Actuated joint index in `0..n_joints`.
        joint: usize,
    },
    /// A motor rotor spinning at `gear_ratio` times the rate of
    /// `driven_joint` about its own axis.
    Rotor {
        /// Gearbox reduction ratio (rotor turns per joint turn), positive.
        gear_ratio: f64,
        /// The actuated joint the rotor drives.
        driven_joint: usize,
    },
}

/// One body of the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    /// Human-readable name (unique names are recommended, not enforced).
    pub name: String,
    /// Parent body index; `None` means the fixed world base.
    pub parent: Option<usize>,
    /// Fixed transform placing the joint frame in the parent frame.
    pub mount: RigidTransform,
    /// Unit joint axis in body coordinates.
    pub axis: Vector3<f64>,
    /// Link or rotor role.
    pub kind: BodyKind,
}

impl Body {
    /// The actuated joint this body's motion depends on.
    pub fn joint(&self) -> usize {
        match self.kind {
            BodyKind::Link { joint } => joint,
            BodyKind::Rotor { driven_joint, .. } => driven_joint,
        }
    }

    /// Body angle/rate/acceleration per unit of the joint coordinate:
    /// 1 for links, the gear ratio for rotors.
    pub fn rate_multiplier(&self) -> f64 {
        match self.kind {
            BodyKind::Link { .. } => 1.0,
            BodyKind::Rotor { gear_ratio, .. } => gear_ratio,
        }
    }

    /// Whether this body is a rotor.
    pub fn is_rotor(&self) -> bool {
        matches!(self.kind, BodyKind::Rotor { .. })
    }
}

/// Diagonal joint friction coefficients.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrictionParams {
    /// Viscous coefficients (N·m·s/rad), one per actuated joint.
    #[serde(with = "crate::serde_dvector")]
    pub viscous: DVector<f64>,
    /// Coulomb coefficients (N·m), one per actuated joint.
    #[serde(with = "crate::serde_dvector")]
    pub coulomb: DVector<f64>,
}

impl FrictionParams {
    /// Zero friction for `n` joints.
    pub fn zeros(n: usize) -> Self {
        FrictionParams {
            viscous: DVector::zeros(n),
            coulomb: DVector::zeros(n),
        }
    }
}

/// Full decision vector of the identification problem: per-body inertial
/// parameters plus joint friction.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamVector {
    /// Inertial parameters, one entry per body in model order.
    pub bodies: Vec<InertialParams>,
    /// Joint friction coefficients.
    pub friction: FrictionParams,
}

impl ParamVector {
    /// Flatten the inertial part to `10 · n_b` values in body order.
    pub fn flat_inertial(&self) -> DVector<f64> {
        let mut out = DVector::zeros(10 * self.bodies.len());
        for (i, p) in self.bodies.iter().enumerate() {
            out.rows_mut(10 * i, 10).copy_from(&p.to_vector());
        }
        out
    }

    /// Rebuild from a flat inertial vector and friction block.
    pub fn from_flat(inertial: &DVector<f64>, friction: FrictionParams) -> Self {
        assert_eq!(inertial.len() % 10, 0, "inertial vector length must be 10·n_b");
        let bodies = inertial
            .as_slice()
            .chunks(10)
            .map(InertialParams::from_slice)
            .collect();
        ParamVector { bodies, friction }
    }
}

/// A validated fixed-base kinematic tree.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicModel {
    bodies: Vec<Body>,
    gravity: Vector3<f64>,
    n_joints: usize,
    friction_joints: Vec<bool>,
}

/// Standard gravity used when a model does not specify one.
pub const DEFAULT_GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);

impl KinematicModel {
    /// Validate and build a model. Every violation found is reported, not
    /// just the first.
    pub fn new(
        bodies: Vec<Body>,
        gravity: Vector3<f64>,
        friction_joints: Option<Vec<bool>>,
    ) -> Result<Self, Vec<ModelError>> {
        let mut errors = Vec::new();
        if bodies.is_empty() {
            errors.push(ModelError::Empty);
        }
        if !(gravity.x.is_finite() && gravity.y.is_finite() && gravity.z.is_finite()) {
            errors.push(ModelError::BadGravity);
        }

        let n_joints = bodies.iter().filter(|b| !b.is_rotor()).count();
        let mut joint_owner: Vec<Option<usize>> = vec![None; n_joints];

        for (i, b) in bodies.iter().enumerate() {
            if let Some(p) = b.parent {
                if p >= i {
                    errors.push(ModelError::ParentOrder {
                        body: i,
                        name: b.name.clone(),
                        parent: p,
                    });
                }
            }
            let norm = b.axis.norm();
            if (norm - 1.0).abs() > 1e-10 {
                errors.push(ModelError::NonUnitAxis {
                    body: i,
                    name: b.name.clone(),
                    norm,
                });
            }
            match b.kind {
                BodyKind::Link { joint } => {
                    if joint >= n_joints {
                        errors.push(ModelError::JointCoverage { joint });
                    } else if let Some(_prev) = joint_owner[joint] {
                        errors.push(ModelError::JointCoverage { joint });
                    } else {
                        joint_owner[joint] = Some(i);
                    }
                }
                BodyKind::Rotor {
                    gear_ratio,
                    driven_joint,
                } => {
                    if gear_ratio <= 0.0 {
                        errors.push(ModelError::BadGearRatio {
                            body: i,
                            name: b.name.clone(),
                            ratio: gear_ratio,
                        });
                    }
                    if driven_joint >= n_joints {
                        errors.push(ModelError::BadDrivenJoint {
                            body: i,
                            name: b.name.clone(),
                            joint: driven_joint,
                            n_joints,
                        });
                    }
                }
            }
        }

        // Rotor mounting requires the joint owners, hence a second pass.
        for (i, b) in bodies.iter().enumerate() {
            if let BodyKind::Rotor { driven_joint, .. } = b.kind {
                if driven_joint < n_joints {
                    if let Some(link) = joint_owner[driven_joint] {
                        let expected = bodies[link].parent;
                        if b.parent != expected {
                            errors.push(ModelError::RotorMount {
                                body: i,
                                name: b.name.clone(),
                                joint: driven_joint,
                                expected,
                                found: b.parent,
                            });
                        }
                    }
                }
            }
        }
        for (joint, owner) in joint_owner.iter().enumerate() {
            if owner.is_none() {
                errors.push(ModelError::JointCoverage { joint });
            }
        }

        let friction_joints = match friction_joints {
            Some(flags) => {
                if flags.len() != n_joints {
                    errors.push(ModelError::FrictionFlags {
                        found: flags.len(),
                        expected: n_joints,
                    });
                }
                flags
            }
            None => vec![true; n_joints],
        };

        if errors.is_empty() {
            Ok(KinematicModel {
                bodies,
                gravity,
                n_joints,
                friction_joints,
            })
        } else {
            Err(errors)
        }
    }

    /// Bodies in topological order.
    pub fn bodies(&self) -> &[Body] {
        &self.bodies
    }

    /// Number of bodies (links plus rotors).
    pub fn n_bodies(&self) -> usize {
        self.bodies.len()
    }

    /// Number of actuated joints.
    pub fn n_joints(&self) -> usize {
        self.n_joints
    }

    /// Gravity vector (m/s²).
    pub fn gravity(&self) -> Vector3<f64> {
        self.gravity
    }

    /// Same model with a different gravity vector.
    pub fn with_gravity(mut self, gravity: Vector3<f64>) -> Self {
        self.gravity = gravity;
        self
    }

    /// Which joints carry friction terms.
    pub fn friction_joints(&self) -> &[bool] {
        &self.friction_joints
    }

    /// Joint-frame pose of body `i` in its parent frame at configuration `q`.
    pub fn body_pose_in_parent(&self, i: usize, q: &DVector<f64>) -> RigidTransform {
        let b = &self.bodies[i];
        let angle = b.rate_multiplier() * q[b.joint()];
        b.mount
            .compose(&RigidTransform::rotation_about(&b.axis, angle))
    }

    /// Forward kinematics: world pose of every body plus the body-frame
    /// motion subspace (the spatial velocity per unit joint rate, already
    /// scaled by the gear ratio for rotors).
    pub fn forward_kinematics(&self, q: &DVector<f64>) -> Result<Kinematics, ModelError> {
        if q.len() != self.n_joints {
            return Err(ModelError::DimensionMismatch {
                found: q.len(),
                expected: self.n_joints,
            });
        }
        let mut poses: Vec<RigidTransform> = Vec::with_capacity(self.bodies.len());
        let mut subspaces = Vec::with_capacity(self.bodies.len());
        for (i, b) in self.bodies.iter().enumerate() {
            let local = self.body_pose_in_parent(i, q);
            let world = match b.parent {
                Some(p) => poses[p].compose(&local),
                None => local,
            };
            poses.push(world);
            subspaces.push(SpatialVelocity::new(
                b.rate_multiplier() * b.axis,
                Vector3::zeros(),
            ));
        }
        Ok(Kinematics { poses, subspaces })
    }

    /// Body-frame spatial velocity of every body for state `(q, v)`.
    pub fn body_velocities(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<Vec<SpatialVelocity>, ModelError> {
        if q.len() != self.n_joints || v.len() != self.n_joints {
            return Err(ModelError::DimensionMismatch {
                found: q.len().min(v.len()),
                expected: self.n_joints,
            });
        }
        let mut vels: Vec<SpatialVelocity> = Vec::with_capacity(self.bodies.len());
        for (i, b) in self.bodies.iter().enumerate() {
            let local = self.body_pose_in_parent(i, q);
            let from_parent = match b.parent {
                Some(p) => local.inv_transform_motion(&vels[p]),
                None => SpatialVelocity::zero(),
            };
            let own = SpatialVelocity::new(b.rate_multiplier() * v[b.joint()] * b.axis, Vector3::zeros());
            vels.push(from_parent.add(&own));
        }
        Ok(vels)
    }
}

/// Forward-kinematics result.
#[derive(Debug, Clone)]
pub struct Kinematics {
    /// World pose of each body.
    pub poses: Vec<RigidTransform>,
    /// Body-frame motion subspace of each body per unit of its joint rate,
    /// gear-scaled for rotors.
    pub subspaces: Vec<SpatialVelocity>,
}
