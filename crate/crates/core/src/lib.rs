//! Physically consistent inertial parameter identification for fixed-base
//! kinematic trees.
//!
//! The crate identifies the ten inertial parameters of every rigid body in a
//! tree (mass, first mass moment, rotational inertia about the body origin),
//! together with geared-rotor inertias and joint friction coefficients, from
//! trajectory data. The identification problem is a constrained least-squares
//! problem whose physical-consistency constraints are linear matrix
//! inequalities on the parameter vector, so the whole problem is a conic
//! program solved to global optimality by the in-repo interior-point solver.
//!
//! Module overview:
//! - [`spatial`]: 6D spatial algebra, inertial parameter representations, and
//!   the conversions among them (spatial inertia, pseudo-inertia, second
//!   moments, parallel-axis shifts, kinetic energy identities).
//! - [`consistency`]: every consistency condition — semi-consistency, full
//!   consistency, covariance ellipsoids, center-of-mass LMIs, density
//!   realizability on ellipsoids and unions, four-point-mass realizations.
//! - [`model`]: fixed-base kinematic tree description (links, geared rotors,
//!   friction flags) and forward kinematics.
//! - [`regressor`]: recursive Newton-Euler inverse dynamics and the
//!   inertial/friction regressor assembly.
//! - [`sdp`]: conic program representation, the primal-dual interior-point
//!   solver, and the identification problem builder.
//! - [`pipeline`]: signal conditioning, synthetic data generation, fit
//!   metrics, and learning-curve experiments.
//!
//! The crate is `no_std`-compatible (with `alloc`); the default `std` feature
//! enables wall-clock timings in solver statistics.

#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_docs)]

extern crate alloc;

pub mod consistency;
pub mod model;
pub mod pipeline;
pub mod regressor;
pub mod sdp;
pub mod spatial;

/// Serde adapters for dynamically sized nalgebra vectors (serialized as a
/// plain sequence of numbers).
pub(crate) mod serde_dvector {
    use alloc::vec::Vec;
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, serializer: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<DVector<f64>, D::Error> {
        let data = Vec::<f64>::deserialize(deserializer)?;
        Ok(DVector::from_vec(data))
    }
}
