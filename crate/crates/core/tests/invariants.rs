//! Property tests for the representation invariants that everything else
//! leans on: exact round trips of the parameter encodings and invariance of
//! the consistency verdicts under frame changes and scaling.

use nalgebra::{SVector, Vector3};
use proptest::prelude::*;

use inertia_core::consistency::{check_fully_consistent, check_semi_consistent};
use inertia_core::spatial::{
    rot_inertia_from_second_moment, second_moment_from_rot_inertia, InertialParams,
    RigidTransform, SymMat3,
};

fn params_strategy() -> impl Strategy<Value = InertialParams> {
    prop::array::uniform10(-5.0f64..5.0).prop_map(|arr| {
        let v = SVector::<f64, 10>::from(arr);
        InertialParams::from_vector(&v)
    })
}

fn rotation_strategy() -> impl Strategy<Value = RigidTransform> {
    (
        prop::array::uniform3(-1.0f64..1.0),
        -3.0f64..3.0,
        prop::array::uniform3(-2.0f64..2.0),
    )
        .prop_filter_map("degenerate axis", |(axis, angle, trans)| {
            let axis = Vector3::from(axis);
            if axis.norm() < 1e-2 {
                return None;
            }
            Some(
                RigidTransform::rotation_about(&axis.normalize(), angle)
                    .compose(&RigidTransform::translation(Vector3::from(trans))),
            )
        })
}

proptest! {
    #[test]
    fn flatten_unflatten_is_a_bijection(p in params_strategy()) {
        let v = p.to_vector();
        let back = InertialParams::from_vector(&v);
        prop_assert_eq!(back, p);
        prop_assert_eq!(back.to_vector(), v);
    }

    #[test]
    fn pseudo_inertia_round_trips_exactly(p in params_strategy()) {
        let back = InertialParams::from_pseudo(&p.pseudo_inertia());
        prop_assert!((back.to_vector() - p.to_vector()).abs().max() <= 1e-14);
    }

    #[test]
    fn second_moment_maps_are_mutually_inverse(entries in prop::array::uniform6(-5.0f64..5.0)) {
        let i = SymMat3(entries);
        let sigma = second_moment_from_rot_inertia(&i);
        let back = rot_inertia_from_second_moment(&sigma);
        let scale = entries.iter().fold(1.0f64, |a, e| a.max(e.abs()));
        for k in 0..6 {
            prop_assert!((back.0[k] - i.0[k]).abs() <= 1e-14 * scale);
        }
    }

    #[test]
    fn consistency_verdicts_are_frame_invariant(
        p in params_strategy(),
        t in rotation_strategy(),
    ) {
        let moved = p.transformed(&t);
        // Verdicts at tolerance zero away from the roundoff band.
        let eigs = p.pseudo_inertia().eigenvalues_sorted();
        prop_assume!(eigs[0].abs() > 1e-7 * eigs[3].abs().max(1.0));
        prop_assert_eq!(
            check_fully_consistent(&p, Some(0.0)).satisfied,
            check_fully_consistent(&moved, Some(0.0)).satisfied
        );
    }

    #[test]
    fn consistency_verdicts_scale_invariantly(
        p in params_strategy(),
        alpha in 1e-3f64..1e3,
    ) {
        let eigs = p.pseudo_inertia().eigenvalues_sorted();
        prop_assume!(eigs[0].abs() > 1e-7 * eigs[3].abs().max(1.0));
        let scaled = InertialParams::from_vector(&(alpha * p.to_vector()));
        prop_assert_eq!(
            check_fully_consistent(&p, Some(0.0)).satisfied,
            check_fully_consistent(&scaled, Some(0.0)).satisfied
        );
        prop_assert_eq!(
            check_semi_consistent(&p, Some(0.0)).satisfied,
            check_semi_consistent(&scaled, Some(0.0)).satisfied
        );
    }
}
