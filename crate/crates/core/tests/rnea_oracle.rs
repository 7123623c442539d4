//! Independent oracle for inverse dynamics: finite differences of the
//! Lagrangian.
//!
//! The generalized force is `τ_j = d/dt (∂L/∂ν_j) - ∂L/∂q_j` with
//! `L = T - V`. Both derivatives are evaluated numerically from energies
//! only — kinetic energy through body velocities, potential energy through
//! world-frame centers of mass — so the oracle never touches the
//! Newton-Euler recursion it checks.

use nalgebra::{DVector, SVector, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use inertia_core::model::{Body, BodyKind, KinematicModel, DEFAULT_GRAVITY};
use inertia_core::regressor::inverse_dynamics;
use inertia_core::spatial::{InertialParams, RigidTransform};

fn random_vec3(rng: &mut StdRng, s: f64) -> Vector3<f64> {
    Vector3::new(
        rng.gen_range(-s..s),
        rng.gen_range(-s..s),
        rng.gen_range(-s..s),
    )
}

fn random_unit(rng: &mut StdRng) -> Vector3<f64> {
    loop {
        let v = random_vec3(rng, 1.0);
        if v.norm() > 1e-3 {
            return v.normalize();
        }
    }
}

fn chain(rng: &mut StdRng, n_links: usize, with_rotor: bool) -> KinematicModel {
    let mut bodies = Vec::new();
    for l in 0..n_links {
        let parent = if l == 0 { None } else { Some(bodies.len() - 1) };
        let mount = RigidTransform::translation(random_vec3(rng, 0.3)).compose(
            &RigidTransform::rotation_about(&random_unit(rng), rng.gen_range(-2.0..2.0)),
        );
        bodies.push(Body {
            name: format!("link{l}"),
            parent,
            mount,
            axis: random_unit(rng),
            kind: BodyKind::Link { joint: l },
        });
        if with_rotor && l == 0 {
            bodies.push(Body {
                name: "rotor0".into(),
                parent,
                mount: RigidTransform::translation(random_vec3(rng, 0.1)),
                axis: random_unit(rng),
                kind: BodyKind::Rotor {
                    gear_ratio: rng.gen_range(4.0..12.0),
                    driven_joint: 0,
                },
            });
        }
    }
    KinematicModel::new(bodies, DEFAULT_GRAVITY, None).unwrap()
}

// Physically consistent random parameters keep the energies well scaled.
fn physical_params(rng: &mut StdRng, nb: usize) -> Vec<InertialParams> {
    (0..nb)
        .map(|_| {
            let mut set = inertia_core::consistency::PointMassSet::default();
            for _ in 0..4 {
                set.0.push(inertia_core::consistency::PointMass {
                    mass: rng.gen_range(0.1..1.2),
                    position: random_vec3(rng, 0.25),
                });
            }
            set.params()
        })
        .collect()
}

fn lagrangian(
    model: &KinematicModel,
    params: &[InertialParams],
    q: &DVector<f64>,
    vel: &DVector<f64>,
) -> f64 {
    let vels = model.body_velocities(q, vel).unwrap();
    let kinetic: f64 = vels
        .iter()
        .zip(params.iter())
        .map(|(v, p)| p.kinetic_energy_spatial(v))
        .sum();
    let kin = model.forward_kinematics(q).unwrap();
    let g = model.gravity();
    let potential: f64 = kin
        .poses
        .iter()
        .zip(params.iter())
        .map(|(pose, p)| {
            // m g · c_world with h = m c in body coordinates.
            let first_moment_world =
                pose.rotation * p.first_moment + p.mass * pose.translation;
            -g.dot(&first_moment_world)
        })
        .sum();
    kinetic - potential
}

fn lagrangian_torques(
    model: &KinematicModel,
    params: &[InertialParams],
    q: &DVector<f64>,
    vel: &DVector<f64>,
    acc: &DVector<f64>,
) -> DVector<f64> {
    let nj = model.n_joints();
    let h = 1e-4;
    let eps = 1e-4;
    // Generalized momentum p(q, ν) = ∂L/∂ν by central differences.
    let momentum = |q: &DVector<f64>, vel: &DVector<f64>| {
        DVector::from_fn(nj, |j, _| {
            let mut vp = vel.clone();
            let mut vm = vel.clone();
            vp[j] += h;
            vm[j] -= h;
            (lagrangian(model, params, q, &vp) - lagrangian(model, params, q, &vm)) / (2.0 * h)
        })
    };
    // d/dt of the momentum along the trajectory flow.
    let q_f = q + eps * vel;
    let v_f = vel + eps * acc;
    let q_b = q - eps * vel;
    let v_b = vel - eps * acc;
    let dp_dt = (momentum(&q_f, &v_f) - momentum(&q_b, &v_b)) / (2.0 * eps);
    // ∂L/∂q by central differences.
    let dl_dq = DVector::from_fn(nj, |j, _| {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[j] += h;
        qm[j] -= h;
        (lagrangian(model, params, &qp, vel) - lagrangian(model, params, &qm, vel)) / (2.0 * h)
    });
    dp_dt - dl_dq
}

#[test]
fn newton_euler_matches_lagrangian_oracle_two_links() {
    let mut rng = StdRng::seed_from_u64(71);
    for trial in 0..20 {
        let model = chain(&mut rng, 2, false);
        let params = physical_params(&mut rng, model.n_bodies());
        let nj = model.n_joints();
        let q = DVector::from_fn(nj, |_, _| rng.gen_range(-2.0..2.0));
        let vel = DVector::from_fn(nj, |_, _| rng.gen_range(-2.0..2.0));
        let acc = DVector::from_fn(nj, |_, _| rng.gen_range(-3.0..3.0));
        let rnea = inverse_dynamics(&model, &q, &vel, &acc, &params).unwrap();
        let oracle = lagrangian_torques(&model, &params, &q, &vel, &acc);
        let err = (&rnea - &oracle).norm() / (1.0 + rnea.norm());
        assert!(err <= 1e-6, "trial {trial}: oracle mismatch {err}");
    }
}

#[test]
fn newton_euler_matches_lagrangian_oracle_with_rotor() {
    let mut rng = StdRng::seed_from_u64(72);
    for trial in 0..10 {
        let model = chain(&mut rng, 3, true);
        let params = physical_params(&mut rng, model.n_bodies());
        let nj = model.n_joints();
        let q = DVector::from_fn(nj, |_, _| rng.gen_range(-2.0..2.0));
        let vel = DVector::from_fn(nj, |_, _| rng.gen_range(-1.5..1.5));
        let acc = DVector::from_fn(nj, |_, _| rng.gen_range(-2.0..2.0));
        let rnea = inverse_dynamics(&model, &q, &vel, &acc, &params).unwrap();
        let oracle = lagrangian_torques(&model, &params, &q, &vel, &acc);
        let err = (&rnea - &oracle).norm() / (1.0 + rnea.norm());
        assert!(err <= 1e-6, "trial {trial}: oracle mismatch {err}");
    }
}

#[test]
fn static_case_matches_potential_gradient() {
    // ν = ν̇ = 0 reduces the oracle to ∂V/∂q; exercised on arbitrary raw
    // parameter vectors (consistency plays no role in the identity).
    let mut rng = StdRng::seed_from_u64(73);
    let model = chain(&mut rng, 3, false);
    let nj = model.n_joints();
    let params: Vec<InertialParams> = (0..model.n_bodies())
        .map(|_| {
            let mut v = SVector::<f64, 10>::zeros();
            for k in 0..10 {
                v[k] = rng.gen_range(-1.0..1.0);
            }
            InertialParams::from_vector(&v)
        })
        .collect();
    let zeros = DVector::zeros(nj);
    for _ in 0..10 {
        let q = DVector::from_fn(nj, |_, _| rng.gen_range(-2.5..2.5));
        let rnea = inverse_dynamics(&model, &q, &zeros, &zeros, &params).unwrap();
        let oracle = lagrangian_torques(&model, &params, &q, &zeros, &zeros);
        let err = (&rnea - &oracle).norm() / (1.0 + rnea.norm());
        assert!(err <= 1e-6, "static oracle mismatch {err}");
    }
}
