//! Data conditioning, synthetic experiments, fit metrics, and learning
//! curves.
//!
//! Velocities and accelerations come from the logged positions by default:
//! a zero-phase second-order Butterworth low-pass (forward and backward)
//! followed by central differences, with filter warm-up trimmed from both
//! ends. A flag-equivalent path trusts logged derivatives instead, which is
//! what noiseless synthetic studies use.
//!
//! Synthetic trajectories are analytic multi-sines on the joint rates, so
//! positions and accelerations are exact closed forms and torque noise is
//! the only stochastic element; a fixed seed reproduces the dataset
//! bit-identically.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

#[allow(unused_imports)]
use num_traits::Float;

use crate::consistency::ConsistencyReport;
use crate::model::{FrictionParams, KinematicModel, ModelError, ParamVector};
use crate::regressor::{predict_torque, TrajectorySample};
use crate::sdp::{
    build_from_gram, BuildError, ConstraintLevel, GramData, IdentificationOptions, Solution,
    SolveStatus,
};

/// Errors from the data pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    /// Time stamps must increase strictly.
    #[error("time is not strictly increasing at row {row}")]
    NonMonotonicTime {
        /// First offending row.
        row: usize,
    },
    /// Sampling must be uniform within 1% jitter.
    #[error("sampling interval at row {row} is {dt:.6e} s, nominal {nominal:.6e} s (>1% jitter)")]
    IrregularSampling {
        /// Offending row.
        row: usize,
        /// Observed interval.
        dt: f64,
        /// Nominal interval.
        nominal: f64,
    },
    /// The log is too short for the requested conditioning.
    #[error("log has {len} samples, conditioning needs at least {needed}")]
    TooShort {
        /// Samples available.
        len: usize,
        /// Samples required.
        needed: usize,
    },
    /// Logged derivatives were requested but are absent.
    #[error("log does not carry velocity/acceleration columns")]
    MissingDerivatives,
    /// A non-finite value appeared in the log.
    #[error("non-finite value at row {row}")]
    NonFinite {
        /// Offending row.
        row: usize,
    },
    /// Excitation specification invalid.
    #[error("invalid excitation: {0}")]
    BadExcitation(&'static str),
    /// Dimension mismatch against the model.
    #[error(transparent)]
    Model(#[from] ModelError),
    /// Identification assembly failure inside a pipeline experiment.
    #[error(transparent)]
    Build(#[from] BuildError),
    /// Learning-curve sizes must be positive and within the training set.
    #[error("training size {size} invalid for {available} available samples")]
    BadCurveSize {
        /// Requested size.
        size: usize,
        /// Samples available.
        available: usize,
    },
}

/// A raw time series of joint positions and torques, optionally with logged
/// derivatives. Rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLog {
    /// Time stamps (s), strictly increasing, uniformly spaced within 1%.
    pub times: Vec<f64>,
    /// Joint positions (rad), `n_samples × n_joints`.
    pub q: DMatrix<f64>,
    /// Joint torques (N·m), `n_samples × n_joints`.
    pub tau: DMatrix<f64>,
    /// Logged joint velocities (rad/s), if any.
    pub vel: Option<DMatrix<f64>>,
    /// Logged joint accelerations (rad/s²), if any.
    pub acc: Option<DMatrix<f64>>,
}

impl RawLog {
    /// Number of samples.
    pub fn n_samples(&self) -> usize {
        self.times.len()
    }

    /// Number of joints.
    pub fn n_joints(&self) -> usize {
        self.q.ncols()
    }

    /// Validate the invariants and return the nominal sampling interval.
    pub fn validate(&self) -> Result<f64, PipelineError> {
        if self.times.len() < 2 {
            return Err(PipelineError::TooShort {
                len: self.times.len(),
                needed: 2,
            });
        }
        let nominal = (self.times[self.times.len() - 1] - self.times[0])
            / (self.times.len() - 1) as f64;
        for i in 1..self.times.len() {
            let dt = self.times[i] - self.times[i - 1];
            if dt <= 0.0 {
                return Err(PipelineError::NonMonotonicTime { row: i });
            }
            if (dt - nominal).abs() > 0.01 * nominal {
                return Err(PipelineError::IrregularSampling {
                    row: i,
                    dt,
                    nominal,
                });
            }
        }
        for i in 0..self.n_samples() {
            let finite = self.times[i].is_finite()
                && self.q.row(i).iter().all(|v| v.is_finite())
                && self.tau.row(i).iter().all(|v| v.is_finite());
            if !finite {
                return Err(PipelineError::NonFinite { row: i });
            }
        }
        Ok(nominal)
    }

    fn sample_at(&self, i: usize, vel: DVector<f64>, acc: DVector<f64>) -> TrajectorySample {
        TrajectorySample {
            t: self.times[i],
            q: self.q.row(i).transpose(),
            vel,
            acc,
            tau: self.tau.row(i).transpose(),
        }
    }
}

// Second-order Butterworth low-pass coefficients via the bilinear transform,
// normalized so a0 = 1: (b0, b1, b2, a1, a2).
fn butterworth2(cutoff_hz: f64, sample_rate_hz: f64) -> (f64, f64, f64, f64, f64) {
    let k = (core::f64::consts::PI * cutoff_hz / sample_rate_hz).tan();
    let sqrt2 = core::f64::consts::SQRT_2;
    let norm = 1.0 + sqrt2 * k + k * k;
    let b0 = k * k / norm;
    (
        b0,
        2.0 * b0,
        b0,
        2.0 * (k * k - 1.0) / norm,
        (1.0 - sqrt2 * k + k * k) / norm,
    )
}

// One pass of the biquad with steady-state initialization, so constant
// inputs produce exactly constant outputs from the first sample.
fn biquad_pass(x: &[f64], coeffs: (f64, f64, f64, f64, f64)) -> Vec<f64> {
    let (b0, b1, b2, a1, a2) = coeffs;
    let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
    let x0 = x[0];
    let mut z1 = (dc - b0) * x0;
    let mut z2 = (b2 - a2 * dc) * x0;
    let mut out = Vec::with_capacity(x.len());
    for &xi in x {
        let y = b0 * xi + z1;
        z1 = b1 * xi - a1 * y + z2;
        z2 = b2 * xi - a2 * y;
        out.push(y);
    }
    out
}

// Zero-phase filtering: forward pass, then backward pass.
fn filtfilt(x: &[f64], coeffs: (f64, f64, f64, f64, f64)) -> Vec<f64> {
    let forward = biquad_pass(x, coeffs);
    let mut reversed: Vec<f64> = forward.into_iter().rev().collect();
    reversed = biquad_pass(&reversed, coeffs);
    reversed.reverse();
    reversed
}

/// Conditioned samples plus what the conditioning did.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioned {
    /// Samples with derivatives from filtered positions.
    pub samples: Vec<TrajectorySample>,
    /// Samples trimmed from each end (filter warm-up plus differencing).
    pub trimmed_per_side: usize,
    /// Low-pass cutoff used (Hz).
    pub cutoff_hz: f64,
}

/// Derive velocities and accelerations from positions: zero-phase low-pass
/// on `q`, then central differences. Endpoints are trimmed (the trim length
/// is reported) because the filter transient and one-sided differences are
/// not trustworthy there.
pub fn differentiate_filter(log: &RawLog, cutoff_hz: f64) -> Result<Conditioned, PipelineError> {
    let dt = log.validate()?;
    let fs = 1.0 / dt;
    let trim = (3.0 * fs / cutoff_hz).ceil() as usize + 1;
    let n = log.n_samples();
    if n < 2 * trim + 3 {
        return Err(PipelineError::TooShort {
            len: n,
            needed: 2 * trim + 3,
        });
    }
    let coeffs = butterworth2(cutoff_hz, fs);
    let nj = log.n_joints();
    let mut filtered = DMatrix::zeros(n, nj);
    for j in 0..nj {
        let col: Vec<f64> = (0..n).map(|i| log.q[(i, j)]).collect();
        let f = filtfilt(&col, coeffs);
        for i in 0..n {
            filtered[(i, j)] = f[i];
        }
    }
    let mut samples = Vec::with_capacity(n - 2 * trim);
    for i in trim..n - trim {
        let mut vel = DVector::zeros(nj);
        let mut acc = DVector::zeros(nj);
        for j in 0..nj {
            vel[j] = (filtered[(i + 1, j)] - filtered[(i - 1, j)]) / (2.0 * dt);
            acc[j] =
                (filtered[(i + 1, j)] - 2.0 * filtered[(i, j)] + filtered[(i - 1, j)]) / (dt * dt);
        }
        let mut s = log.sample_at(i, vel, acc);
        // Positions also come from the filtered signal.
        s.q = filtered.row(i).transpose();
        samples.push(s);
    }
    Ok(Conditioned {
        samples,
        trimmed_per_side: trim,
        cutoff_hz,
    })
}

/// Use the logged velocities and accelerations directly.
pub fn trust_logged(log: &RawLog) -> Result<Vec<TrajectorySample>, PipelineError> {
    log.validate()?;
    let (vel, acc) = match (&log.vel, &log.acc) {
        (Some(v), Some(a)) => (v, a),
        _ => return Err(PipelineError::MissingDerivatives),
    };
    Ok((0..log.n_samples())
        .map(|i| log.sample_at(i, vel.row(i).transpose(), acc.row(i).transpose()))
        .collect())
}

/// One sinusoidal term of a joint-rate excitation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tone {
    /// Rate amplitude (rad/s).
    pub amplitude: f64,
    /// Angular frequency (rad/s).
    pub angular_frequency: f64,
    /// Phase (rad).
    pub phase: f64,
}

/// Analytic multi-sine excitation on the joint rates. Positions are the
/// closed-form integrals, so no numerical integration enters synthetic data.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExcitationSpec {
    /// Duration (s).
    pub duration: f64,
    /// Initial joint positions (rad).
    #[serde(with = "crate::serde_dvector")]
    pub start: DVector<f64>,
    /// Per-joint tone lists.
    pub tones: Vec<Vec<Tone>>,
}

impl ExcitationSpec {
    /// The swing preset: the two rate waveforms used to drive the leg
    /// (amplitudes 12 and 3.4 rad/s at 1.63 and 0.265 rad/s), alternated
    /// across joints with phase offsets to decorrelate same-frequency channels.
    pub fn leg_swing(n_joints: usize, duration: f64) -> ExcitationSpec {
        let mut tones = Vec::with_capacity(n_joints);
        for j in 0..n_joints {
            let phase = j as f64 * core::f64::consts::PI / 5.0;
            let tone = if j % 2 == 0 {
                Tone {
                    amplitude: 12.0,
                    angular_frequency: 1.63,
                    phase,
                }
            } else {
                Tone {
                    amplitude: 3.4,
                    angular_frequency: 0.265,
                    phase,
                }
            };
            // A second incommensurate tone enriches the excitation without
            // raising the rate bound above the primary amplitude.
            let secondary = Tone {
                amplitude: 0.25 * tone.amplitude,
                angular_frequency: 2.7183 * tone.angular_frequency,
                phase: phase + 0.9,
            };
            let primary = Tone {
                amplitude: 0.75 * tone.amplitude,
                ..tone
            };
            tones.push(alloc::vec![primary, secondary]);
        }
        ExcitationSpec {
            duration,
            start: DVector::zeros(n_joints),
            tones,
        }
    }

    /// Validate amplitudes, frequencies, and dimensions.
    pub fn validate(&self, n_joints: usize) -> Result<(), PipelineError> {
        if self.duration <= 0.0 {
            return Err(PipelineError::BadExcitation("duration must be positive"));
        }
        if self.tones.len() != n_joints || self.start.len() != n_joints {
            return Err(PipelineError::BadExcitation(
                "tone/start dimensions must match the joint count",
            ));
        }
        for tones in &self.tones {
            for t in tones {
                if t.angular_frequency <= 0.0 {
                    return Err(PipelineError::BadExcitation("frequencies must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Exact state at time `t`: positions, rates, accelerations.
    pub fn state_at(&self, t: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let nj = self.tones.len();
        let mut q = self.start.clone();
        let mut vel = DVector::zeros(nj);
        let mut acc = DVector::zeros(nj);
        for (j, tones) in self.tones.iter().enumerate() {
            for tone in tones {
                let (a, w, ph) = (tone.amplitude, tone.angular_frequency, tone.phase);
                q[j] += a / w * (ph.cos() - (w * t + ph).cos());
                vel[j] += a * (w * t + ph).sin();
                acc[j] += a * w * (w * t + ph).cos();
            }
        }
        (q, vel, acc)
    }
}

/// A synthetic dataset with its noise-free torques kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    /// The log as an estimator would see it (exact kinematics, noisy τ).
    pub log: RawLog,
    /// Noise-free torques for diagnostics.
    pub clean_tau: DMatrix<f64>,
}

/// Generate a synthetic dataset from ground-truth parameters.
///
/// Kinematics are analytic; `τ = inverse dynamics + friction + N(0, σ²)`
/// with a fixed seed, so identical inputs give bit-identical data. The
/// Coulomb term uses the exact velocity sign (the deadband is an estimator
/// choice, not a property of the plant).
pub fn generate_synthetic(
    model: &KinematicModel,
    truth: &ParamVector,
    excitation: &ExcitationSpec,
    sample_rate_hz: f64,
    noise_std: f64,
    seed: u64,
) -> Result<Synthetic, PipelineError> {
    excitation.validate(model.n_joints())?;
    if sample_rate_hz <= 0.0 {
        return Err(PipelineError::BadExcitation("sample rate must be positive"));
    }
    let dt = 1.0 / sample_rate_hz;
    let n = (excitation.duration * sample_rate_hz).floor() as usize + 1;
    let nj = model.n_joints();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut times = Vec::with_capacity(n);
    let mut q = DMatrix::zeros(n, nj);
    let mut vel = DMatrix::zeros(n, nj);
    let mut acc = DMatrix::zeros(n, nj);
    let mut tau = DMatrix::zeros(n, nj);
    let mut clean = DMatrix::zeros(n, nj);
    for i in 0..n {
        let t = i as f64 * dt;
        let (qi, vi, ai) = excitation.state_at(t);
        let torque = predict_torque(model, truth, &qi, &vi, &ai, 0.0)?;
        times.push(t);
        for j in 0..nj {
            q[(i, j)] = qi[j];
            vel[(i, j)] = vi[j];
            acc[(i, j)] = ai[j];
            clean[(i, j)] = torque[j];
            tau[(i, j)] = torque[j]
                + if noise_std > 0.0 {
                    noise_std * normal.sample(&mut rng)
                } else {
                    0.0
                };
        }
    }
    Ok(Synthetic {
        log: RawLog {
            times,
            q,
            tau,
            vel: Some(vel),
            acc: Some(acc),
        },
        clean_tau: clean,
    })
}

/// Torque-prediction error metrics.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitMetrics {
    /// RMS error per joint (N·m).
    #[serde(with = "crate::serde_dvector")]
    pub per_joint_rms: DVector<f64>,
    /// RMS over all joints and samples (N·m).
    pub overall_rms: f64,
    /// Samples evaluated.
    pub n_samples: usize,
}

/// Residual RMS of `τ - (Y π + B ν + B_c sign_ε(ν))` over a dataset.
pub fn evaluate(
    model: &KinematicModel,
    params: &ParamVector,
    samples: &[TrajectorySample],
    deadband: f64,
) -> Result<FitMetrics, ModelError> {
    let nj = model.n_joints();
    let mut sq = DVector::zeros(nj);
    for s in samples {
        let pred = predict_torque(model, params, &s.q, &s.vel, &s.acc, deadband)?;
        for j in 0..nj {
            let r = s.tau[j] - pred[j];
            sq[j] += r * r;
        }
    }
    let n = samples.len().max(1) as f64;
    let per_joint_rms = sq.map(|v: f64| (v / n).sqrt());
    let overall_rms = (sq.sum() / (n * nj as f64)).sqrt();
    Ok(FitMetrics {
        per_joint_rms,
        overall_rms,
        n_samples: samples.len(),
    })
}

/// Identification outcome: the parameter estimate plus solver evidence.
#[derive(Debug, Clone)]
pub struct Identified {
    /// Estimated inertial and friction parameters.
    pub params: ParamVector,
    /// Solver result for the identification program.
    pub solution: Solution,
}

/// Build, solve, and unpack the identification problem.
pub fn identify(
    model: &KinematicModel,
    samples: &[TrajectorySample],
    opts: &IdentificationOptions,
) -> Result<Identified, BuildError> {
    let gram = GramData::assemble(model, samples, opts.coulomb_deadband)?;
    identify_from_gram(model, &gram, opts)
}

/// Identification from pre-accumulated Gram data.
pub fn identify_from_gram(
    model: &KinematicModel,
    gram: &GramData,
    opts: &IdentificationOptions,
) -> Result<Identified, BuildError> {
    let prog = build_from_gram(model, gram, opts)?;
    let solution = crate::sdp::solve(&prog, &opts.solver);
    let nb = model.n_bodies();
    let bodies = (0..nb)
        .map(|i| crate::spatial::InertialParams::from_slice(&solution.x.as_slice()[10 * i..10 * i + 10]))
        .collect();
    let mut friction = FrictionParams::zeros(model.n_joints());
    for (k, &j) in gram.friction_slots().iter().enumerate() {
        friction.viscous[j] = solution.x[10 * nb + k];
        friction.coulomb[j] = solution.x[10 * nb + gram.friction_slots().len() + k];
    }
    Ok(Identified {
        params: ParamVector { bodies, friction },
        solution,
    })
}

/// Summary of a solver run for reports.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverSummary {
    /// Termination status.
    pub status: SolveStatus,
    /// Iterations used.
    pub iterations: usize,
    /// Final complementarity gap.
    pub gap: f64,
    /// Final relative primal residual.
    pub primal_residual: f64,
    /// Final relative dual residual.
    pub dual_residual: f64,
    /// Objective value (mean squared residual plus regularizer).
    pub objective: f64,
    /// Wall-clock seconds, when measured.
    pub wall_time: Option<f64>,
}

impl From<&Solution> for SolverSummary {
    fn from(s: &Solution) -> Self {
        SolverSummary {
            status: s.status,
            iterations: s.iterations,
            gap: s.gap,
            primal_residual: s.primal_residual,
            dual_residual: s.dual_residual,
            objective: s.objective,
            wall_time: s.wall_time,
        }
    }
}

/// Full identification report: fit quality, solver evidence, identified
/// friction, and per-body consistency assessments.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitReport {
    /// Constraint level used.
    pub level: ConstraintLevel,
    /// Regularization weight used.
    pub regularization: f64,
    /// Strict-inequality margin used.
    pub strict_margin: f64,
    /// Coulomb deadband used (rad/s).
    pub coulomb_deadband: f64,
    /// Training sample count.
    pub n_train: usize,
    /// Validation metrics.
    pub validation: FitMetrics,
    /// Training metrics.
    pub training: FitMetrics,
    /// Solver evidence.
    pub solver: SolverSummary,
    /// Identified friction coefficients.
    pub friction: FrictionParams,
    /// Per-body consistency assessment of the identified parameters.
    pub consistency: Vec<ConsistencyReport>,
}

/// One learning-curve entry.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CurveRow {
    /// Constraint level of the fit.
    pub level: ConstraintLevel,
    /// Training samples used.
    pub n_samples: usize,
    /// Held-out RMS per joint (N·m).
    pub per_joint_rms: Vec<f64>,
    /// Held-out overall RMS (N·m).
    pub overall_rms: f64,
    /// Solver status of the fit.
    pub status: SolveStatus,
    /// Optimal objective value.
    pub objective: f64,
}

/// Fit on growing prefixes of the training set at several constraint levels
/// and evaluate each fit on the held-out block. Gram data accumulates
/// incrementally over the sorted sizes, so the cost is one regressor pass
/// over the training prefix per level.
pub fn learning_curve(
    model: &KinematicModel,
    train: &[TrajectorySample],
    holdout: &[TrajectorySample],
    levels: &[ConstraintLevel],
    sizes: &[usize],
    base: &IdentificationOptions,
) -> Result<Vec<CurveRow>, PipelineError> {
    let mut sorted_sizes: Vec<usize> = sizes.to_vec();
    sorted_sizes.sort_unstable();
    sorted_sizes.dedup();
    for &s in &sorted_sizes {
        if s == 0 || s > train.len() {
            return Err(PipelineError::BadCurveSize {
                size: s,
                available: train.len(),
            });
        }
    }
    let mut rows = Vec::with_capacity(levels.len() * sorted_sizes.len());
    for &level in levels {
        let mut opts = base.clone();
        opts.level = level;
        let mut gram = GramData::new(model);
        let mut consumed = 0usize;
        for &size in &sorted_sizes {
            for s in &train[consumed..size] {
                gram.add_sample(model, s, opts.coulomb_deadband)?;
            }
            consumed = size;
            let identified = identify_from_gram(model, &gram, &opts)?;
            let metrics = evaluate(model, &identified.params, holdout, opts.coulomb_deadband)?;
            rows.push(CurveRow {
                level,
                n_samples: size,
                per_joint_rms: metrics.per_joint_rms.as_slice().to_vec(),
                overall_rms: metrics.overall_rms,
                status: identified.solution.status,
                objective: identified.solution.objective,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Body, BodyKind, DEFAULT_GRAVITY};
    use crate::spatial::{InertialParams, RigidTransform, SymMat3};
    use alloc::vec;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::Vector3;

    fn pendulum() -> KinematicModel {
        KinematicModel::new(
            vec![Body {
                name: "arm".into(),
                parent: None,
                mount: RigidTransform::identity(),
                axis: Vector3::y(),
                kind: BodyKind::Link { joint: 0 },
            }],
            DEFAULT_GRAVITY,
            None,
        )
        .unwrap()
    }

    fn pendulum_truth() -> ParamVector {
        ParamVector {
            bodies: vec![InertialParams::from_com_quantities(
                0.8,
                &Vector3::new(0.0, 0.0, -0.12),
                &SymMat3::from_diagonal(&Vector3::new(0.011, 0.012, 0.002)),
            )],
            friction: FrictionParams {
                viscous: DVector::from_vec(vec![0.06]),
                coulomb: DVector::from_vec(vec![0.4]),
            },
        }
    }

    fn sine_log(n: usize, dt: f64) -> RawLog {
        let times: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let q = DMatrix::from_fn(n, 1, |i, _| (2.0 * core::f64::consts::PI * times[i]).sin());
        RawLog {
            times,
            q: q.clone(),
            tau: DMatrix::zeros(n, 1),
            vel: None,
            acc: None,
        }
    }

    #[test]
    fn validate_rejects_bad_time_grids() {
        let mut log = sine_log(100, 1e-3);
        assert!(log.validate().is_ok());
        log.times[50] = log.times[49];
        assert!(matches!(
            log.validate(),
            Err(PipelineError::NonMonotonicTime { row: 50 })
        ));
        let mut log = sine_log(100, 1e-3);
        log.times[50] += 2e-4;
        assert!(matches!(
            log.validate(),
            Err(PipelineError::IrregularSampling { .. })
        ));
    }

    #[test]
    fn differentiation_matches_analytic_derivative() {
        // q = sin(2πt) at 1 kHz, 50 Hz cutoff: the rate must match
        // 2π cos(2πt) to 1e-3 RMS away from the trimmed ends.
        let log = sine_log(3000, 1e-3);
        let cond = differentiate_filter(&log, 50.0).unwrap();
        assert!(cond.trimmed_per_side >= 30);
        let mut sq = 0.0;
        for s in &cond.samples {
            let expected = 2.0 * core::f64::consts::PI * (2.0 * core::f64::consts::PI * s.t).cos();
            sq += (s.vel[0] - expected) * (s.vel[0] - expected);
        }
        let rms = (sq / cond.samples.len() as f64).sqrt();
        assert!(rms <= 1e-3, "velocity RMS error {rms}");
    }

    #[test]
    fn constant_position_gives_zero_rates() {
        let n = 500;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * 1e-3).collect();
        let log = RawLog {
            times,
            q: DMatrix::from_element(n, 2, 0.7),
            tau: DMatrix::zeros(n, 2),
            vel: None,
            acc: None,
        };
        let cond = differentiate_filter(&log, 50.0).unwrap();
        for s in &cond.samples {
            assert_abs_diff_eq!(s.vel.norm(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(s.acc.norm(), 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(s.q[0], 0.7, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_phase_property_on_pure_sine() {
        // The filtered fundamental must show no phase lag: the filtered
        // signal's zero crossing stays within 1e-3 rad of the input's.
        let log = sine_log(4000, 1e-3);
        let cond = differentiate_filter(&log, 50.0).unwrap();
        let omega = 2.0 * core::f64::consts::PI;
        for s in cond.samples.iter().step_by(37) {
            let expected = (omega * s.t).sin();
            // Amplitude attenuation at 1 Hz with fc = 50 Hz is ~1e-6, so a
            // phase shift would dominate any mismatch.
            assert_abs_diff_eq!(s.q[0], expected, epsilon = 1e-3 * omega);
        }
    }

    #[test]
    fn filtered_derivatives_beat_raw_differences_under_noise() {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 4000;
        let dt = 1e-3;
        let mut log = sine_log(n, dt);
        for i in 0..n {
            log.q[(i, 0)] += 1e-4 * rng.gen_range(-1.0..1.0);
        }
        let cond = differentiate_filter(&log, 50.0).unwrap();
        let omega = 2.0 * core::f64::consts::PI;
        let mut filt_sq = 0.0;
        let mut raw_sq = 0.0;
        for (k, s) in cond.samples.iter().enumerate() {
            let i = k + cond.trimmed_per_side;
            let expected = -omega * omega * (omega * s.t).sin();
            filt_sq += (s.acc[0] - expected).powi(2);
            let raw = (log.q[(i + 1, 0)] - 2.0 * log.q[(i, 0)] + log.q[(i - 1, 0)]) / (dt * dt);
            raw_sq += (raw - expected).powi(2);
        }
        assert!(
            filt_sq < 1e-3 * raw_sq,
            "filtering must beat raw differencing: {filt_sq} vs {raw_sq}"
        );
    }

    #[test]
    fn synthetic_is_deterministic_and_exact() {
        let model = pendulum();
        let truth = pendulum_truth();
        let exc = ExcitationSpec::leg_swing(1, 2.0);
        let a = generate_synthetic(&model, &truth, &exc, 1000.0, 0.3, 17).unwrap();
        let b = generate_synthetic(&model, &truth, &exc, 1000.0, 0.3, 17).unwrap();
        assert_eq!(a.log.q, b.log.q);
        assert_eq!(a.log.tau, b.log.tau);
        let c = generate_synthetic(&model, &truth, &exc, 1000.0, 0.3, 18).unwrap();
        assert_ne!(a.log.tau, c.log.tau);

        // Noise-free columns equal the exact inverse dynamics with true
        // friction; rates stay bounded by the preset amplitude.
        assert!(a
            .log
            .vel
            .as_ref()
            .unwrap()
            .iter()
            .all(|v| v.abs() <= 12.0 + 1e-9));
        let clean = generate_synthetic(&model, &truth, &exc, 1000.0, 0.0, 17).unwrap();
        assert_eq!(clean.log.tau, clean.clean_tau);
        assert_eq!(clean.log.validate().is_ok(), true);
    }

    #[test]
    fn noiseless_identification_recovers_torques() {
        let model = pendulum();
        let truth = pendulum_truth();
        let exc = ExcitationSpec::leg_swing(1, 4.0);
        let data = generate_synthetic(&model, &truth, &exc, 500.0, 0.0, 3).unwrap();
        let samples = trust_logged(&data.log).unwrap();
        let (train, holdout) = samples.split_at(samples.len() / 2);
        let opts = IdentificationOptions {
            level: ConstraintLevel::Full,
            regularization: 0.0,
            ..Default::default()
        };
        let identified = identify(&model, train, &opts).unwrap();
        assert_eq!(identified.solution.status, SolveStatus::Optimal);
        let metrics = evaluate(&model, &identified.params, holdout, opts.coulomb_deadband).unwrap();
        assert!(
            metrics.overall_rms <= 1e-6,
            "held-out RMS {}",
            metrics.overall_rms
        );
        // Friction recovered too (it is identifiable on this fixture).
        assert_relative_eq!(
            identified.params.friction.viscous[0],
            0.06,
            max_relative = 1e-3
        );
        assert_relative_eq!(
            identified.params.friction.coulomb[0],
            0.4,
            max_relative = 1e-3
        );
    }

    #[test]
    fn evaluate_perfect_params_zero_rms() {
        let model = pendulum();
        let truth = pendulum_truth();
        let exc = ExcitationSpec::leg_swing(1, 1.0);
        let data = generate_synthetic(&model, &truth, &exc, 200.0, 0.0, 5).unwrap();
        let samples = trust_logged(&data.log).unwrap();
        let metrics = evaluate(&model, &truth, &samples, 0.0).unwrap();
        assert_abs_diff_eq!(metrics.overall_rms, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn noise_floor_matches_injected_sigma() {
        let model = pendulum();
        let truth = pendulum_truth();
        let exc = ExcitationSpec::leg_swing(1, 2.0);
        let sigma = 0.5;
        let data = generate_synthetic(&model, &truth, &exc, 1000.0, sigma, 11).unwrap();
        let samples = trust_logged(&data.log).unwrap();
        // With true parameters the residual is exactly the injected noise.
        let metrics = evaluate(&model, &truth, &samples, 0.0).unwrap();
        assert!(metrics.overall_rms >= 0.45 && metrics.overall_rms <= 0.55);
    }

    #[test]
    fn learning_curve_rows_are_ordered_and_converge() {
        let model = pendulum();
        let truth = pendulum_truth();
        let exc = ExcitationSpec::leg_swing(1, 4.0);
        let data = generate_synthetic(&model, &truth, &exc, 500.0, 0.2, 23).unwrap();
        let samples = trust_logged(&data.log).unwrap();
        let (train, holdout) = samples.split_at(samples.len() / 2);
        let levels = [ConstraintLevel::Unconstrained, ConstraintLevel::Full];
        let sizes = [50usize, 1000];
        let rows = learning_curve(
            &model,
            train,
            holdout,
            &levels,
            &sizes,
            &IdentificationOptions::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].level, ConstraintLevel::Unconstrained);
        assert_eq!(rows[0].n_samples, 50);
        assert_eq!(rows[3].level, ConstraintLevel::Full);
        // At the large size both levels sit near the noise floor.
        for row in rows.iter().filter(|r| r.n_samples == 1000) {
            assert!(
                (row.overall_rms - 0.2).abs() <= 0.05,
                "rms {} far from floor",
                row.overall_rms
            );
        }
        // Constraint monotonicity of the optimal objectives.
        let obj_none = rows
            .iter()
            .find(|r| r.level == ConstraintLevel::Unconstrained && r.n_samples == 1000)
            .unwrap()
            .objective;
        let obj_full = rows
            .iter()
            .find(|r| r.level == ConstraintLevel::Full && r.n_samples == 1000)
            .unwrap()
            .objective;
        assert!(obj_none <= obj_full + 1e-6 * obj_full.abs().max(1.0));

        assert!(matches!(
            learning_curve(&model, train, holdout, &levels, &[0], &Default::default()),
            Err(PipelineError::BadCurveSize { .. })
        ));

        // A single (level, size) pair gives a one-row table whose metrics
        // equal a direct identify-then-evaluate run.
        let opts = IdentificationOptions::default();
        let one = learning_curve(
            &model,
            train,
            holdout,
            &[ConstraintLevel::Full],
            &[500],
            &opts,
        )
        .unwrap();
        assert_eq!(one.len(), 1);
        let direct = identify(&model, &train[..500], &opts).unwrap();
        let metrics = evaluate(&model, &direct.params, holdout, opts.coulomb_deadband).unwrap();
        assert_relative_eq!(one[0].overall_rms, metrics.overall_rms, max_relative = 1e-12);
    }

    #[test]
    fn split_is_disjoint_in_time() {
        let model = pendulum();
        let truth = pendulum_truth();
        let exc = ExcitationSpec::leg_swing(1, 1.0);
        let data = generate_synthetic(&model, &truth, &exc, 400.0, 0.0, 2).unwrap();
        let samples = trust_logged(&data.log).unwrap();
        let (train, holdout) = samples.split_at(samples.len() / 2);
        let t_max_train = train.last().unwrap().t;
        let t_min_holdout = holdout.first().unwrap().t;
        assert!(t_max_train < t_min_holdout);
    }
}
