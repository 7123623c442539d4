//! Inverse dynamics via the recursive Newton-Euler algorithm and assembly of
//! the inertial-parameter and friction regressors.
//!
//! Inverse dynamics computes the generalized forces of the fixed-base tree
//! directly; the regressor `Y` is the matrix with `Y π` equal to those forces
//! for every parameter vector. Gravity is handled by accelerating the base at
//! minus gravity, so gravity terms appear linearly in the same columns as the
//! inertial terms. Two regressor assemblies are provided: a column-wise
//! reference (one Newton-Euler backward pass per unit parameter vector) and a
//! fused single-sweep assembly; they agree to roundoff and the fused path is
//! the default.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector3};

#[allow(unused_imports)]
use num_traits::Float;

use crate::model::{KinematicModel, ModelError, ParamVector};
use crate::spatial::{InertialParams, RigidTransform, SpatialForce, SpatialVelocity};

/// One time-stamped sample of a trajectory, with measured torques.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrajectorySample {
    /// Time (s).
    pub t: f64,
    /// Joint positions (rad).
    #[serde(with = "crate::serde_dvector")]
    pub q: DVector<f64>,
    /// Joint velocities (rad/s).
    #[serde(with = "crate::serde_dvector")]
    pub vel: DVector<f64>,
    /// Joint accelerations (rad/s²).
    #[serde(with = "crate::serde_dvector")]
    pub acc: DVector<f64>,
    /// Measured joint torques (N·m).
    #[serde(with = "crate::serde_dvector")]
    pub tau: DVector<f64>,
}

/// Per-sample regressor data: inertial columns plus friction columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorBlock {
    /// Inertial regressor, `n_j × 10 n_b`.
    pub y: DMatrix<f64>,
    /// Diagonal of the viscous friction columns (the joint velocities).
    pub viscous_diag: DVector<f64>,
    /// Diagonal of the Coulomb friction columns (deadbanded velocity signs).
    pub coulomb_diag: DVector<f64>,
}

/// Velocity sign with a deadband: `sign(v_i)` when `|v_i| > deadband`,
/// zero otherwise. The sign of Coulomb friction cannot be trusted when the
/// joint is essentially stationary.
pub fn sign_deadband(vel: &DVector<f64>, deadband: f64) -> DVector<f64> {
    vel.map(|v| {
        if v > deadband {
            1.0
        } else if v < -deadband {
            -1.0
        } else {
            0.0
        }
    })
}

/// Friction regressor columns `(Y_v, Y_c) = (diag(ν), diag(sign_ε(ν)))`
/// in matrix form.
pub fn friction_columns(vel: &DVector<f64>, deadband: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = vel.len();
    let mut yv = DMatrix::zeros(n, n);
    let mut yc = DMatrix::zeros(n, n);
    let signs = sign_deadband(vel, deadband);
    for i in 0..n {
        yv[(i, i)] = vel[i];
        yc[(i, i)] = signs[i];
    }
    (yv, yc)
}

// Per-body kinematic sweep shared by inverse dynamics and the regressor.
struct BodyKinematics {
    pose_in_parent: Vec<RigidTransform>,
    subspace: Vec<SpatialVelocity>,
    velocity: Vec<SpatialVelocity>,
    acceleration: Vec<SpatialVelocity>,
}

fn forward_sweep(
    model: &KinematicModel,
    q: &DVector<f64>,
    vel: &DVector<f64>,
    acc: &DVector<f64>,
) -> Result<BodyKinematics, ModelError> {
    let nj = model.n_joints();
    if q.len() != nj || vel.len() != nj || acc.len() != nj {
        return Err(ModelError::DimensionMismatch {
            found: q.len().min(vel.len()).min(acc.len()),
            expected: nj,
        });
    }
    let nb = model.n_bodies();
    let mut kin = BodyKinematics {
        pose_in_parent: Vec::with_capacity(nb),
        subspace: Vec::with_capacity(nb),
        velocity: Vec::with_capacity(nb),
        acceleration: Vec::with_capacity(nb),
    };
    // Gravity enters as a base acceleration of -g (world frame).
    let base_acc = SpatialVelocity::new(Vector3::zeros(), -model.gravity());
    for (i, b) in model.bodies().iter().enumerate() {
        let pose = model.body_pose_in_parent(i, q);
        let j = b.joint();
        let s = SpatialVelocity::new(b.rate_multiplier() * b.axis, Vector3::zeros());
        let v_parent = match b.parent {
            Some(p) => pose.inv_transform_motion(&kin.velocity[p]),
            None => SpatialVelocity::zero(),
        };
        let v = v_parent.add(&s.scaled(vel[j]));
        let a_parent = match b.parent {
            Some(p) => pose.inv_transform_motion(&kin.acceleration[p]),
            None => pose.inv_transform_motion(&base_acc),
        };
        let a = a_parent
            .add(&s.scaled(acc[j]))
            .add(&v.cross_motion(&s.scaled(vel[j])));
        kin.pose_in_parent.push(pose);
        kin.subspace.push(s);
        kin.velocity.push(v);
        kin.acceleration.push(a);
    }
    Ok(kin)
}

fn backward_sweep(
    model: &KinematicModel,
    kin: &BodyKinematics,
    params: &[InertialParams],
) -> DVector<f64> {
    let nb = model.n_bodies();
    let mut forces: Vec<SpatialForce> = Vec::with_capacity(nb);
    for i in 0..nb {
        let inertia = params[i].spatial_inertia();
        let f = inertia
            .mul_velocity(&kin.acceleration[i])
            .add(&kin.velocity[i].cross_force(&inertia.mul_velocity(&kin.velocity[i])));
        forces.push(f);
    }
    let mut tau = DVector::zeros(model.n_joints());
    for i in (0..nb).rev() {
        let b = &model.bodies()[i];
        tau[b.joint()] += forces[i].dot_motion(&kin.subspace[i]);
        if let Some(p) = b.parent {
            let transmitted = kin.pose_in_parent[i].transform_force(&forces[i]);
            forces[p] = forces[p].add(&transmitted);
        }
    }
    tau
}

/// Inverse dynamics of the fixed-base tree: the generalized forces required
/// to realize `(q, vel, acc)` under gravity, with rotor contributions
/// projected through their gear ratios onto the driven joints.
pub fn inverse_dynamics(
    model: &KinematicModel,
    q: &DVector<f64>,
    vel: &DVector<f64>,
    acc: &DVector<f64>,
    params: &[InertialParams],
) -> Result<DVector<f64>, ModelError> {
    assert_eq!(
        params.len(),
        model.n_bodies(),
        "one parameter set per body required"
    );
    let kin = forward_sweep(model, q, vel, acc)?;
    Ok(backward_sweep(model, &kin, params))
}

/// Model torque including friction: `Y π + B ν + B_c sign_ε(ν)`, evaluated
/// through inverse dynamics rather than an explicit regressor.
pub fn predict_torque(
    model: &KinematicModel,
    params: &ParamVector,
    q: &DVector<f64>,
    vel: &DVector<f64>,
    acc: &DVector<f64>,
    deadband: f64,
) -> Result<DVector<f64>, ModelError> {
    let mut tau = inverse_dynamics(model, q, vel, acc, &params.bodies)?;
    let signs = sign_deadband(vel, deadband);
    for j in 0..model.n_joints() {
        if model.friction_joints()[j] {
            tau[j] += params.friction.viscous[j] * vel[j] + params.friction.coulomb[j] * signs[j];
        }
    }
    Ok(tau)
}

/// Reference regressor: column `10 i + k` is one backward Newton-Euler pass
/// with the unit parameter vector `e_k` on body `i` and zeros elsewhere.
pub fn regressor_columnwise(
    model: &KinematicModel,
    q: &DVector<f64>,
    vel: &DVector<f64>,
    acc: &DVector<f64>,
) -> Result<DMatrix<f64>, ModelError> {
    let kin = forward_sweep(model, q, vel, acc)?;
    let nb = model.n_bodies();
    let mut unit = alloc::vec![InertialParams::zeros(); nb];
    let mut y = DMatrix::zeros(model.n_joints(), 10 * nb);
    for i in 0..nb {
        for k in 0..10 {
            let mut e = SVector::<f64, 10>::zeros();
            e[k] = 1.0;
            unit[i] = InertialParams::from_vector(&e);
            let col = backward_sweep(model, &kin, &unit);
            y.column_mut(10 * i + k).copy_from(&col);
            unit[i] = InertialParams::zeros();
        }
    }
    Ok(y)
}

// Force of body i as a linear map of its own ten parameters:
// f_i = K(v_i, a_i) π_i, columns built from unit parameter vectors.
fn body_force_map(v: &SpatialVelocity, a: &SpatialVelocity) -> SMatrix<f64, 6, 10> {
    let mut k = SMatrix::<f64, 6, 10>::zeros();
    for col in 0..10 {
        let mut e = SVector::<f64, 10>::zeros();
        e[col] = 1.0;
        let inertia = InertialParams::from_vector(&e).spatial_inertia();
        let f = inertia
            .mul_velocity(a)
            .add(&v.cross_force(&inertia.mul_velocity(v)));
        k.set_column(col, &f.to_vector());
    }
    k
}

/// Fused regressor assembly: one forward sweep, then each body's 6×10 force
/// map is propagated up the tree and projected onto every ancestor joint.
/// Agrees with [`regressor_columnwise`] to roundoff.
pub fn regressor(
    model: &KinematicModel,
    q: &DVector<f64>,
    vel: &DVector<f64>,
    acc: &DVector<f64>,
) -> Result<DMatrix<f64>, ModelError> {
    let kin = forward_sweep(model, q, vel, acc)?;
    let nb = model.n_bodies();
    let mut y = DMatrix::zeros(model.n_joints(), 10 * nb);
    for i in 0..nb {
        let mut block = body_force_map(&kin.velocity[i], &kin.acceleration[i]);
        let mut at = i;
        loop {
            let b = &model.bodies()[at];
            let s = kin.subspace[at].to_vector();
            let row = s.transpose() * block;
            for k in 0..10 {
                y[(b.joint(), 10 * i + k)] += row[k];
            }
            match b.parent {
                Some(p) => {
                    // Transform the force map into the parent frame.
                    let pose = &kin.pose_in_parent[at];
                    for k in 0..10 {
                        let col = block.column(k);
                        let f = SpatialForce {
                            moment: Vector3::new(col[0], col[1], col[2]),
                            force: Vector3::new(col[3], col[4], col[5]),
                        };
                        block.set_column(k, &pose.transform_force(&f).to_vector());
                    }
                    at = p;
                }
                None => break,
            }
        }
    }
    Ok(y)
}

/// Assemble the full regressor block for one sample.
pub fn regressor_block(
    model: &KinematicModel,
    q: &DVector<f64>,
    vel: &DVector<f64>,
    acc: &DVector<f64>,
    deadband: f64,
) -> Result<RegressorBlock, ModelError> {
    Ok(RegressorBlock {
        y: regressor(model, q, vel, acc)?,
        viscous_diag: vel.clone(),
        coulomb_diag: sign_deadband(vel, deadband),
    })
}

/// Total kinetic energy of the tree at state `(q, v)`.
pub fn kinetic_energy(
    model: &KinematicModel,
    params: &[InertialParams],
    q: &DVector<f64>,
    vel: &DVector<f64>,
) -> Result<f64, ModelError> {
    let vels = model.body_velocities(q, vel)?;
    Ok(vels
        .iter()
        .zip(params.iter())
        .map(|(v, p)| p.kinetic_energy_spatial(v))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Body, BodyKind, DEFAULT_GRAVITY};
    use alloc::vec;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn dvec(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn pendulum_about_z() -> KinematicModel {
        KinematicModel::new(
            vec![Body {
                name: "arm".into(),
                parent: None,
                mount: RigidTransform::identity(),
                axis: Vector3::z(),
                kind: BodyKind::Link { joint: 0 },
            }],
            DEFAULT_GRAVITY,
            None,
        )
        .unwrap()
    }

    fn random_vec3(rng: &mut StdRng, s: f64) -> Vector3<f64> {
        Vector3::new(
            rng.gen_range(-s..s),
            rng.gen_range(-s..s),
            rng.gen_range(-s..s),
        )
    }

    pub(crate) fn random_chain(rng: &mut StdRng, n_links: usize, with_rotors: bool) -> KinematicModel {
        let mut bodies = Vec::new();
        let mut joint = 0usize;
        for l in 0..n_links {
            let parent = if l == 0 { None } else { Some(bodies.len() - 1) };
            let axis_raw = random_vec3(rng, 1.0);
            let axis = if axis_raw.norm() < 1e-3 {
                Vector3::z()
            } else {
                axis_raw.normalize()
            };
            let mount_rot = RigidTransform::rotation_about(
                &random_vec3(rng, 1.0).normalize(),
                rng.gen_range(-2.0..2.0),
            );
            let mount = RigidTransform::translation(random_vec3(rng, 0.4)).compose(&mount_rot);
            // Note: deliberately track indices so rotors interleave.
            let link_parent = parent;
            bodies.push(Body {
                name: alloc::format!("link{l}"),
                parent: link_parent,
                mount,
                axis,
                kind: BodyKind::Link { joint },
            });
            if with_rotors && rng.gen_bool(0.7) {
                let raxis = random_vec3(rng, 1.0);
                let raxis = if raxis.norm() < 1e-3 {
                    Vector3::x()
                } else {
                    raxis.normalize()
                };
                bodies.push(Body {
                    name: alloc::format!("rotor{l}"),
                    parent: link_parent,
                    mount: RigidTransform::translation(random_vec3(rng, 0.1)),
                    axis: raxis,
                    kind: BodyKind::Rotor {
                        gear_ratio: rng.gen_range(2.0..15.0),
                        driven_joint: joint,
                    },
                });
            }
            joint += 1;
        }
        KinematicModel::new(bodies, DEFAULT_GRAVITY, None).unwrap()
    }

    pub(crate) fn random_params(rng: &mut StdRng, nb: usize) -> Vec<InertialParams> {
        (0..nb)
            .map(|_| {
                let mut v = SVector::<f64, 10>::zeros();
                for k in 0..10 {
                    v[k] = rng.gen_range(-1.5..1.5);
                }
                InertialParams::from_vector(&v)
            })
            .collect()
    }

    #[test]
    fn pendulum_axis_parallel_gravity() {
        // Gravity along the joint axis produces no gravity torque; only the
        // inertia about the axis reacts to acceleration.
        let model = pendulum_about_z();
        let p = InertialParams::from_slice(&[1.0, 0.2, 0.1, 0.0, 0.3, 0.0, 0.0, 0.3, 0.0, 0.7]);
        let tau = inverse_dynamics(
            &model,
            &dvec(&[0.4]),
            &dvec(&[0.0]),
            &dvec(&[2.0]),
            &[p],
        )
        .unwrap();
        assert_relative_eq!(tau[0], 0.7 * 2.0, max_relative = 1e-12);
    }

    #[test]
    fn pendulum_static_gravity_moment() {
        // Gravity (0,-g,0), static: τ = g (h_x cos q − h_y sin q).
        let g = 9.81;
        let model = pendulum_about_z().with_gravity(Vector3::new(0.0, -g, 0.0));
        let p = InertialParams::from_slice(&[2.0, 0.3, -0.1, 0.2, 0.5, 0.0, 0.0, 0.5, 0.0, 0.4]);
        for q in [0.0, 0.3, 1.2, -2.0] {
            let tau = inverse_dynamics(&model, &dvec(&[q]), &dvec(&[0.0]), &dvec(&[0.0]), &[p])
                .unwrap();
            let expected = g * (0.3 * q.cos() - (-0.1) * q.sin());
            assert_relative_eq!(tau[0], expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn regressor_matches_inverse_dynamics() {
        let mut rng = StdRng::seed_from_u64(40);
        for trial in 0..50 {
            let n_links = 1 + trial % 3;
            let model = random_chain(&mut rng, n_links, true);
            let nj = model.n_joints();
            let q = DVector::from_fn(nj, |_, _| rng.gen_range(-2.0..2.0));
            let vel = DVector::from_fn(nj, |_, _| rng.gen_range(-3.0..3.0));
            let acc = DVector::from_fn(nj, |_, _| rng.gen_range(-5.0..5.0));
            let params = random_params(&mut rng, model.n_bodies());

            let y = regressor(&model, &q, &vel, &acc).unwrap();
            let mut flat = DVector::zeros(10 * model.n_bodies());
            for (i, p) in params.iter().enumerate() {
                flat.rows_mut(10 * i, 10).copy_from(&p.to_vector());
            }
            let via_y = &y * &flat;
            let direct = inverse_dynamics(&model, &q, &vel, &acc, &params).unwrap();
            let scale = 1.0 + direct.norm();
            assert!(
                (via_y - &direct).norm() <= 1e-10 * scale,
                "regressor mismatch on trial {trial}"
            );
        }
    }

    #[test]
    fn fused_and_columnwise_regressors_agree() {
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..20 {
            let model = random_chain(&mut rng, 3, true);
            let nj = model.n_joints();
            let q = DVector::from_fn(nj, |_, _| rng.gen_range(-2.0..2.0));
            let vel = DVector::from_fn(nj, |_, _| rng.gen_range(-3.0..3.0));
            let acc = DVector::from_fn(nj, |_, _| rng.gen_range(-5.0..5.0));
            let a = regressor(&model, &q, &vel, &acc).unwrap();
            let b = regressor_columnwise(&model, &q, &vel, &acc).unwrap();
            let scale = b.abs().max().max(1.0);
            assert!((a - b).abs().max() <= 1e-12 * scale);
        }
    }

    #[test]
    fn zero_params_zero_torque_and_static_gravity_column() {
        let mut rng = StdRng::seed_from_u64(42);
        let model = random_chain(&mut rng, 2, false);
        let nj = model.n_joints();
        let q = DVector::from_fn(nj, |_, _| rng.gen_range(-1.0..1.0));
        let zeros = DVector::zeros(nj);
        let params = random_params(&mut rng, model.n_bodies());

        let y = regressor(&model, &q, &zeros, &zeros).unwrap();
        let tau0 = inverse_dynamics(&model, &q, &zeros, &zeros, &vec![
            InertialParams::zeros();
            model.n_bodies()
        ])
        .unwrap();
        assert_abs_diff_eq!(tau0.norm(), 0.0, epsilon = 1e-15);

        // Static state: Y π equals the pure gravity torque.
        let mut flat = DVector::zeros(10 * model.n_bodies());
        for (i, p) in params.iter().enumerate() {
            flat.rows_mut(10 * i, 10).copy_from(&p.to_vector());
        }
        let gravity_torque = inverse_dynamics(&model, &q, &zeros, &zeros, &params).unwrap();
        assert_abs_diff_eq!((&y * flat - gravity_torque).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn friction_column_examples() {
        let s = sign_deadband(&dvec(&[0.5, -2.0, 0.0]), 1e-3);
        assert_eq!(s.as_slice(), &[1.0, -1.0, 0.0]);

        let inside = sign_deadband(&dvec(&[5e-4, -9e-4]), 1e-3);
        assert_eq!(inside.as_slice(), &[0.0, 0.0]);

        let (yv, yc) = friction_columns(&dvec(&[0.5, -2.0, 0.0]), 1e-3);
        assert_eq!(yv[(0, 0)], 0.5);
        assert_eq!(yc[(1, 1)], -1.0);
        assert_eq!(yc[(2, 2)], 0.0);
    }

    #[test]
    fn friction_assembly_matches_direct_formula() {
        let mut rng = StdRng::seed_from_u64(43);
        let model = random_chain(&mut rng, 3, true);
        let nj = model.n_joints();
        let q = DVector::from_fn(nj, |_, _| rng.gen_range(-1.0..1.0));
        let vel = DVector::from_fn(nj, |_, _| rng.gen_range(-2.0..2.0));
        let acc = DVector::from_fn(nj, |_, _| rng.gen_range(-2.0..2.0));
        let bodies = random_params(&mut rng, model.n_bodies());
        let friction = crate::model::FrictionParams {
            viscous: DVector::from_fn(nj, |_, _| rng.gen_range(0.0..0.5)),
            coulomb: DVector::from_fn(nj, |_, _| rng.gen_range(0.0..2.0)),
        };
        let pv = ParamVector {
            bodies: bodies.clone(),
            friction: friction.clone(),
        };
        let eps = 1e-3;
        let predicted = predict_torque(&model, &pv, &q, &vel, &acc, eps).unwrap();

        let block = regressor_block(&model, &q, &vel, &acc, eps).unwrap();
        let mut flat = DVector::zeros(10 * model.n_bodies());
        for (i, p) in bodies.iter().enumerate() {
            flat.rows_mut(10 * i, 10).copy_from(&p.to_vector());
        }
        let mut manual = &block.y * flat;
        for j in 0..nj {
            manual[j] += friction.viscous[j] * block.viscous_diag[j]
                + friction.coulomb[j] * block.coulomb_diag[j];
        }
        assert_abs_diff_eq!((predicted - manual).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn rotor_reflects_inertia_through_gear_ratio_squared() {
        // One joint about z plus a rotor with purely axial inertia about z:
        // the joint-space inertia becomes I_link + ratio²·I_rotor.
        let ratio = 10.6;
        let i_rotor = 5e-4;
        let i_link = 0.35;
        let bodies = vec![
            Body {
                name: "link".into(),
                parent: None,
                mount: RigidTransform::identity(),
                axis: Vector3::z(),
                kind: BodyKind::Link { joint: 0 },
            },
            Body {
                name: "rotor".into(),
                parent: None,
                mount: RigidTransform::translation(Vector3::new(0.05, 0.0, 0.0)),
                axis: Vector3::z(),
                kind: BodyKind::Rotor {
                    gear_ratio: ratio,
                    driven_joint: 0,
                },
            },
        ];
        let model = KinematicModel::new(bodies, Vector3::zeros(), None).unwrap();
        let link = InertialParams::from_slice(&[
            1.0, 0.0, 0.0, 0.0, 0.2, 0.0, 0.0, 0.2, 0.0, i_link,
        ]);
        // Rotor axisymmetric about z and centered on its own frame.
        let rotor = InertialParams::from_slice(&[
            0.3, 0.0, 0.0, 0.0, 3e-4, 0.0, 0.0, 3e-4, 0.0, i_rotor,
        ]);
        let tau = inverse_dynamics(
            &model,
            &dvec(&[0.7]),
            &dvec(&[0.0]),
            &dvec(&[1.0]),
            &[link, rotor],
        )
        .unwrap();
        assert_relative_eq!(tau[0], i_link + ratio * ratio * i_rotor, max_relative = 1e-10);
    }

    #[test]
    fn power_balance_matches_energy_rate() {
        // With gravity off, ν^T (H ν̇ + C ν) equals d/dt of the kinetic
        // energy, checked by central differences along the induced flow.
        let mut rng = StdRng::seed_from_u64(44);
        for _ in 0..10 {
            let model = random_chain(&mut rng, 3, true).with_gravity(Vector3::zeros());
            let nj = model.n_joints();
            let q = DVector::from_fn(nj, |_, _| rng.gen_range(-1.5..1.5));
            let vel = DVector::from_fn(nj, |_, _| rng.gen_range(-2.0..2.0));
            let acc = DVector::from_fn(nj, |_, _| rng.gen_range(-3.0..3.0));
            // Physical parameters keep the energy well-scaled.
            let params: Vec<InertialParams> = (0..model.n_bodies())
                .map(|_| {
                    let mut set = crate::consistency::PointMassSet::default();
                    for _ in 0..4 {
                        set.0.push(crate::consistency::PointMass {
                            mass: rng.gen_range(0.1..1.0),
                            position: random_vec3(&mut rng, 0.3),
                        });
                    }
                    set.params()
                })
                .collect();
            let tau = inverse_dynamics(&model, &q, &vel, &acc, &params).unwrap();
            let power: f64 = tau.dot(&vel);

            let h = 1e-6;
            let q_f = &q + h * &vel;
            let v_f = &vel + h * &acc;
            let q_b = &q - h * &vel;
            let v_b = &vel - h * &acc;
            let e_f = kinetic_energy(&model, &params, &q_f, &v_f).unwrap();
            let e_b = kinetic_energy(&model, &params, &q_b, &v_b).unwrap();
            let rate = (e_f - e_b) / (2.0 * h);
            assert_relative_eq!(power, rate, max_relative = 1e-5, epsilon = 1e-7);
        }
    }
}
