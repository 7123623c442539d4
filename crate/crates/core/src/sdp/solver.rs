//! Primal-dual interior-point solver over the product cone.
//!
//! Two drivers share the cone kernels:
//!
//! - quadratic objectives run an infeasible-start path-following method with
//!   Nesterov-Todd scaling and Mehrotra predictor-corrector steps (the
//!   least-squares identification problems take this route, so the strongly
//!   convex part is handled by the KKT system directly instead of through a
//!   degenerate epigraph cone);
//! - linear objectives run the same machinery on the homogeneous self-dual
//!   embedding, which produces certificates of infeasibility instead of
//!   diverging.
//!
//! Per-iteration cost is one dense Cholesky factorization of the reduced
//! KKT matrix `P + Gᵀ H⁻¹ G`; the cone blocks in this problem family are
//! tiny (4×4 and 6×6 PSD blocks, one second-order block), so problem
//! assembly dominates, not the solve.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

#[allow(unused_imports)]
use num_traits::Float;

use super::cones::ConeSystem;
use super::program::{ConicProgram, Solution, SolveStatus};

/// Interior-point termination thresholds and limits.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Iteration cap.
    pub max_iter: usize,
    /// Relative primal/dual residual target.
    pub feas_tol: f64,
    /// Relative complementarity-gap target.
    pub rel_gap_tol: f64,
    /// Absolute complementarity-gap target (disjunctive with the relative
    /// one).
    pub abs_gap_tol: f64,
    /// Fraction of the boundary step taken (0 < step_scale < 1).
    pub step_scale: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 200,
            feas_tol: 1e-8,
            rel_gap_tol: 1e-8,
            abs_gap_tol: 1e-10,
            step_scale: 0.99,
        }
    }
}

/// Solve a conic program.
///
/// Dispatches on the objective: quadratic objectives use the primal-dual
/// path-following driver; linear objectives use the homogeneous self-dual
/// embedding. A quadratic solve that fails to converge is followed by a
/// feasibility probe of its constraint system so that infeasible inputs are
/// reported as such rather than as numerical failures.
pub fn solve(prog: &ConicProgram, opts: &SolverOptions) -> Solution {
    #[cfg(feature = "std")]
    let started = std::time::Instant::now();

    #[cfg_attr(not(feature = "std"), allow(unused_mut))]
    let mut sol = if prog.cone_dim() == 0 {
        solve_unconstrained(prog)
    } else if prog.quadratic.is_some() {
        let mut sol = solve_qp(prog, opts);
        if matches!(sol.status, SolveStatus::MaxIter | SolveStatus::Numerical) {
            // The constraint system alone decides feasibility; probe it.
            let mut probe = prog.clone();
            probe.set_linear_objective(DVector::zeros(prog.n_vars()), 0.0);
            let feas = solve_selfdual(&probe, opts);
            if feas.status == SolveStatus::Infeasible {
                sol.status = SolveStatus::Infeasible;
                sol.diagnostic = feas.diagnostic;
            }
        }
        sol
    } else {
        solve_selfdual(prog, opts)
    };

    #[cfg(feature = "std")]
    {
        sol.wall_time = Some(started.elapsed().as_secs_f64());
    }
    sol
}

fn make_solution(
    prog: &ConicProgram,
    status: SolveStatus,
    x: DVector<f64>,
    pres: f64,
    dres: f64,
    gap: f64,
    relgap: f64,
    iterations: usize,
    diagnostic: Option<String>,
) -> Solution {
    let objective = prog.objective_at(&x);
    Solution {
        status,
        x,
        objective,
        primal_residual: pres,
        dual_residual: dres,
        gap,
        relative_gap: relgap,
        iterations,
        wall_time: None,
        diagnostic,
    }
}

// Cholesky with a scaled ridge retry; the ridge only kicks in when roundoff
// makes an (analytically PSD) KKT matrix indefinite.
fn factor_spd(m: &DMatrix<f64>) -> Option<nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = nalgebra::linalg::Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.diagonal().amax().max(1.0);
    let mut ridged = m.clone();
    for i in 0..m.nrows() {
        ridged[(i, i)] += 1e-12 * scale;
    }
    nalgebra::linalg::Cholesky::new(ridged)
}

fn solve_unconstrained(prog: &ConicProgram) -> Solution {
    let n = prog.n_vars();
    match &prog.quadratic {
        Some(p) => match factor_spd(p) {
            Some(chol) => {
                let x = chol.solve(&(-&prog.linear));
                let dres = (p * &x + &prog.linear).norm() / prog.linear.norm().max(1.0);
                make_solution(prog, SolveStatus::Optimal, x, 0.0, dres, 0.0, 0.0, 0, None)
            }
            None => make_solution(
                prog,
                SolveStatus::Numerical,
                DVector::zeros(n),
                0.0,
                f64::INFINITY,
                0.0,
                0.0,
                0,
                Some(
                    "unconstrained normal equations are singular \
                     (rank-deficient data with zero regularization)"
                        .into(),
                ),
            ),
        },
        None => {
            if prog.linear.norm() == 0.0 {
                make_solution(prog, SolveStatus::Optimal, DVector::zeros(n), 0.0, 0.0, 0.0, 0.0, 0, None)
            } else {
                make_solution(
                    prog,
                    SolveStatus::Numerical,
                    DVector::zeros(n),
                    0.0,
                    f64::INFINITY,
                    0.0,
                    0.0,
                    0,
                    Some("linear objective with no constraints is unbounded".into()),
                )
            }
        }
    }
}

// Fraction of the dual-variable mass carried by each constraint family, used
// to name the families driving an infeasibility certificate.
fn certificate_families(prog: &ConicProgram, z: &DVector<f64>) -> String {
    let mut shares: Vec<(String, f64)> = Vec::new();
    let mut at = 0usize;
    for b in &prog.blocks {
        let d = b.cone.dim();
        let mass: f64 = z.as_slice()[at..at + d].iter().map(|v| v.abs()).sum();
        at += d;
        if let Some(entry) = shares.iter_mut().find(|(l, _)| *l == b.label) {
            entry.1 += mass;
        } else {
            shares.push((b.label.clone(), mass));
        }
    }
    let total: f64 = shares.iter().map(|(_, m)| m).sum::<f64>().max(1e-300);
    shares.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite certificate mass"));
    let mut out = String::new();
    for (label, mass) in shares.iter().take(3) {
        if mass / total < 0.05 {
            break;
        }
        if !out.is_empty() {
            out.push_str(", ");
        }
        out.push_str(&format!("{} ({:.0}%)", label, 100.0 * mass / total));
    }
    out
}

/// Infeasible-start primal-dual path following for quadratic objectives.
fn solve_qp(prog: &ConicProgram, opts: &SolverOptions) -> Solution {
    let n = prog.n_vars();
    let g = &prog.g;
    let h = &prog.h;
    let q = &prog.linear;
    let p = prog
        .quadratic
        .clone()
        .unwrap_or_else(|| DMatrix::zeros(n, n));
    let cones = ConeSystem::new(&prog.blocks);

    // Initialization: one KKT solve with identity scaling.
    let m0 = &p + g.transpose() * g;
    let Some(chol0) = factor_spd(&m0) else {
        return make_solution(
            prog,
            SolveStatus::Numerical,
            DVector::zeros(n),
            f64::INFINITY,
            f64::INFINITY,
            f64::INFINITY,
            f64::INFINITY,
            0,
            Some("initialization KKT matrix is singular".into()),
        );
    };
    let mut x = chol0.solve(&(g.transpose() * h - q));
    let z0 = g * &x - h;
    let mut s = -&z0;
    cones.shift_into_interior(&mut s);
    let mut z = z0;
    cones.shift_into_interior(&mut z);

    let h_scale = h.norm().max(1.0);
    let q_scale = q.norm().max(1.0);

    let mut best_diag: Option<String> = None;
    for iter in 0..opts.max_iter {
        let resx = &p * &x + q + g.transpose() * &z;
        let resz = g * &x + &s - h;
        let gap = s.dot(&z);
        let pres = resz.norm() / h_scale;
        let dres = resx.norm() / q_scale;
        let pobj = 0.5 * x.dot(&(&p * &x)) + q.dot(&x);
        let relgap = gap / pobj.abs().max(1.0);

        if pres <= opts.feas_tol
            && dres <= opts.feas_tol
            && (gap <= opts.abs_gap_tol || relgap <= opts.rel_gap_tol)
        {
            return make_solution(
                prog,
                SolveStatus::Optimal,
                x,
                pres,
                dres,
                gap,
                relgap,
                iter,
                None,
            );
        }

        let Ok(scal) = cones.scalings(&s, &z) else {
            best_diag = Some("Nesterov-Todd scaling breakdown (iterate left the cone)".into());
            return make_solution(
                prog,
                SolveStatus::Numerical,
                x,
                pres,
                dres,
                gap,
                relgap,
                iter,
                best_diag,
            );
        };
        let mu = gap / cones.degree;

        let g_hinv = cones.apply_h_inv_mat(&scal, g);
        let m = &p + g.transpose() * &g_hinv;
        let Some(kkt) = factor_spd(&m) else {
            return make_solution(
                prog,
                SolveStatus::Numerical,
                x,
                pres,
                dres,
                gap,
                relgap,
                iter,
                Some("reduced KKT factorization failed".into()),
            );
        };

        // Newton system with explicit right-hand sides:
        //   P Δx + Gᵀ Δz = r1
        //   G Δx + Δs    = r2
        //   λ ∘ (W Δz + W⁻ᵀ Δs) = r4
        let newton = |r1: &DVector<f64>, r2: &DVector<f64>, r4: &DVector<f64>| {
            let v = cones.apply_wt(&scal, &cones.lambda_solve(&scal, r4));
            let rhs = r1 + g.transpose() * cones.apply_h_inv(&scal, &(r2 - &v));
            let dx = kkt.solve(&rhs);
            let dz = cones.apply_h_inv(&scal, &(g * &dx - r2 + &v));
            let ds = r2 - g * &dx;
            (dx, dz, ds)
        };
        // One pass of iterative refinement keeps the recovered directions
        // accurate once the scaling becomes ill-conditioned near the
        // solution.
        let solve_dir = |d: &DVector<f64>| {
            let r1 = -&resx;
            let r2 = -&resz;
            let r4 = -d;
            let (mut dx, mut dz, mut ds) = newton(&r1, &r2, &r4);
            for _ in 0..2 {
                let e1 = &r1 - (&p * &dx + g.transpose() * &dz);
                let e2 = &r2 - (g * &dx + &ds);
                let e4 = &r4
                    - cones.jordan_mul(
                        &scal.lambda,
                        &(cones.apply_w(&scal, &dz) + cones.apply_w_inv_t(&scal, &ds)),
                    );
                let (cx, cz, cs) = newton(&e1, &e2, &e4);
                dx += cx;
                dz += cz;
                ds += cs;
            }
            (dx, dz, ds)
        };

        // Predictor.
        let d_aff = cones.jordan_mul(&scal.lambda, &scal.lambda);
        let (_dx_a, dz_a, ds_a) = solve_dir(&d_aff);
        let ds_scaled_a = cones.apply_w_inv_t(&scal, &ds_a);
        let dz_scaled_a = cones.apply_w(&scal, &dz_a);
        let alpha_aff = cones
            .max_step(&scal, &ds_scaled_a)
            .min(cones.max_step(&scal, &dz_scaled_a))
            .min(1.0);
        let gap_aff = (&s + alpha_aff * &ds_a).dot(&(&z + alpha_aff * &dz_a));
        let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let e = cones.identity();
        let d_comb =
            &d_aff + cones.jordan_mul(&ds_scaled_a, &dz_scaled_a) - (sigma * mu) * e;
        let (dx, dz, ds) = solve_dir(&d_comb);
        let ds_scaled = cones.apply_w_inv_t(&scal, &ds);
        let dz_scaled = cones.apply_w(&scal, &dz);
        let alpha_max = cones
            .max_step(&scal, &ds_scaled)
            .min(cones.max_step(&scal, &dz_scaled));
        let alpha = (opts.step_scale * alpha_max).min(1.0);
        if !alpha.is_finite() || alpha <= 1e-14 {
            return make_solution(
                prog,
                SolveStatus::Numerical,
                x,
                pres,
                dres,
                gap,
                relgap,
                iter,
                Some(format!("step length collapsed to {alpha:.3e}")),
            );
        }

        x += alpha * &dx;
        s += alpha * &ds;
        z += alpha * &dz;
    }

    let resx = &p * &x + q + g.transpose() * &z;
    let resz = g * &x + &s - h;
    let gap = s.dot(&z);
    make_solution(
        prog,
        SolveStatus::MaxIter,
        x,
        resz.norm() / h_scale,
        resx.norm() / q_scale,
        gap,
        f64::INFINITY,
        opts.max_iter,
        best_diag.or(Some("iteration limit reached".into())),
    )
}

/// Homogeneous self-dual embedding for linear objectives. Produces either an
/// optimal point or an infeasibility certificate.
fn solve_selfdual(prog: &ConicProgram, opts: &SolverOptions) -> Solution {
    let n = prog.n_vars();
    let g = &prog.g;
    let h = &prog.h;
    let c = &prog.linear;
    let cones = ConeSystem::new(&prog.blocks);

    let mut x = DVector::zeros(n);
    let mut s = cones.identity();
    let mut z = cones.identity();
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;

    let h_scale = h.norm().max(1.0);
    let c_scale = c.norm().max(1.0);

    for iter in 0..opts.max_iter {
        // Residuals of the embedding.
        let rx = g.transpose() * &z + c * tau;
        let rz = g * &x + &s - h * tau;
        let rtau = c.dot(&x) + h.dot(&z) + kappa;
        let gap = s.dot(&z);

        // Normalized convergence measures.
        let pres = (g * &x / tau + &s / tau - h).norm() / h_scale;
        let dres = (g.transpose() * &z / tau + c).norm() / c_scale;
        let pobj = c.dot(&x) / tau;
        let gap_hat = gap / (tau * tau);
        let relgap = gap_hat / pobj.abs().max(1.0);

        if pres <= opts.feas_tol
            && dres <= opts.feas_tol
            && (gap_hat <= opts.abs_gap_tol || relgap <= opts.rel_gap_tol)
        {
            return make_solution(
                prog,
                SolveStatus::Optimal,
                &x / tau,
                pres,
                dres,
                gap_hat,
                relgap,
                iter,
                None,
            );
        }

        // Certificates. A Farkas point z with Gᵀz ≈ 0, hᵀz < 0 certifies
        // primal infeasibility; x with Gx + s ≈ 0, cᵀx < 0 certifies an
        // unbounded objective.
        let hz = h.dot(&z);
        if hz < 0.0 {
            let zn = &z / -hz;
            if (g.transpose() * &zn).norm() <= opts.feas_tol * c_scale {
                let families = certificate_families(prog, &zn);
                return make_solution(
                    prog,
                    SolveStatus::Infeasible,
                    &x / tau.max(1e-300),
                    pres,
                    dres,
                    gap_hat,
                    relgap,
                    iter,
                    Some(format!(
                        "primal infeasibility certificate; active constraint families: {families}"
                    )),
                );
            }
        }
        let cx = c.dot(&x);
        if cx < 0.0 {
            let xn = &x / -cx;
            let sn = &s / -cx;
            if (g * &xn + &sn).norm() <= opts.feas_tol * h_scale {
                return make_solution(
                    prog,
                    SolveStatus::Numerical,
                    &x / tau.max(1e-300),
                    pres,
                    dres,
                    gap_hat,
                    relgap,
                    iter,
                    Some("objective unbounded below (dual infeasibility certificate)".into()),
                );
            }
        }

        let Ok(scal) = cones.scalings(&s, &z) else {
            return make_solution(
                prog,
                SolveStatus::Numerical,
                &x / tau,
                pres,
                dres,
                gap_hat,
                relgap,
                iter,
                Some("Nesterov-Todd scaling breakdown (iterate left the cone)".into()),
            );
        };
        let mu = (gap + tau * kappa) / (cones.degree + 1.0);

        let g_hinv = cones.apply_h_inv_mat(&scal, g);
        let m = g.transpose() * &g_hinv;
        let Some(kkt) = factor_spd(&m) else {
            return make_solution(
                prog,
                SolveStatus::Numerical,
                &x / tau,
                pres,
                dres,
                gap_hat,
                relgap,
                iter,
                Some("reduced KKT factorization failed".into()),
            );
        };
        let u2 = kkt.solve(&(g.transpose() * cones.apply_h_inv(&scal, h) - c));

        // Newton system of the embedding with explicit right-hand sides:
        //   Gᵀ Δz + c Δτ            = r1
        //   G Δx + Δs - h Δτ        = r2
        //   cᵀΔx + hᵀΔz + Δκ        = r3
        //   λ ∘ (W Δz + W⁻ᵀ Δs)     = r4
        //   κ Δτ + τ Δκ             = r5
        let newton = |r1: &DVector<f64>,
                      r2: &DVector<f64>,
                      r3: f64,
                      r4: &DVector<f64>,
                      r5: f64| {
            let v = cones.apply_wt(&scal, &cones.lambda_solve(&scal, r4));
            let hhi = |vec: &DVector<f64>| h.dot(&cones.apply_h_inv(&scal, vec));
            let u1 = kkt.solve(&(r1 + g.transpose() * cones.apply_h_inv(&scal, &(r2 - &v))));
            let denom = c.dot(&u2) + hhi(&(g * &u2 - h)) - kappa / tau;
            let numer = r3 - c.dot(&u1) - hhi(&(g * &u1 + &v - r2)) - r5 / tau;
            let dtau = numer / denom;
            let dx = &u1 + dtau * &u2;
            let dz = cones.apply_h_inv(&scal, &(g * &dx - h * dtau + &v - r2));
            let ds = r2 - g * &dx + h * dtau;
            let dkappa = (r5 - kappa * dtau) / tau;
            (dx, dz, ds, dtau, dkappa)
        };
        let solve_dir = |d_s: &DVector<f64>, d_kappa: f64, eta: f64| {
            let r1 = -eta * &rx;
            let r2 = -eta * &rz;
            let r3 = -eta * rtau;
            let r4 = -d_s;
            let r5 = -d_kappa;
            let (mut dx, mut dz, mut ds, mut dtau, mut dkappa) =
                newton(&r1, &r2, r3, &r4, r5);
            for _ in 0..2 {
                let e1 = &r1 - (g.transpose() * &dz + c * dtau);
                let e2 = &r2 - (g * &dx + &ds - h * dtau);
                let e3 = r3 - (c.dot(&dx) + h.dot(&dz) + dkappa);
                let e4 = &r4
                    - cones.jordan_mul(
                        &scal.lambda,
                        &(cones.apply_w(&scal, &dz) + cones.apply_w_inv_t(&scal, &ds)),
                    );
                let e5 = r5 - (kappa * dtau + tau * dkappa);
                let (cx, cz, cs, ctau, ckappa) = newton(&e1, &e2, e3, &e4, e5);
                dx += cx;
                dz += cz;
                ds += cs;
                dtau += ctau;
                dkappa += ckappa;
            }
            (dx, dz, ds, dtau, dkappa)
        };

        let step_bound = |ds: &DVector<f64>, dz: &DVector<f64>, dtau: f64, dkappa: f64| {
            let mut a = cones
                .max_step(&scal, &cones.apply_w_inv_t(&scal, ds))
                .min(cones.max_step(&scal, &cones.apply_w(&scal, dz)));
            if dtau < 0.0 {
                a = a.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-kappa / dkappa);
            }
            a
        };

        // Predictor.
        let d_aff = cones.jordan_mul(&scal.lambda, &scal.lambda);
        let (_dx_a, dz_a, ds_a, dtau_a, dkappa_a) = solve_dir(&d_aff, tau * kappa, 1.0);
        let alpha_aff = step_bound(&ds_a, &dz_a, dtau_a, dkappa_a).min(1.0);
        let gap_aff = (&s + alpha_aff * &ds_a).dot(&(&z + alpha_aff * &dz_a))
            + (tau + alpha_aff * dtau_a) * (kappa + alpha_aff * dkappa_a);
        let sigma = (gap_aff / (gap + tau * kappa)).clamp(0.0, 1.0).powi(3);

        // Corrector: residuals weighted by 1 - σ on the central path of the
        // embedding.
        let e = cones.identity();
        let ds_scaled_a = cones.apply_w_inv_t(&scal, &ds_a);
        let dz_scaled_a = cones.apply_w(&scal, &dz_a);
        let d_comb = &d_aff + cones.jordan_mul(&ds_scaled_a, &dz_scaled_a) - (sigma * mu) * e;
        let d_kappa_comb = tau * kappa + dtau_a * dkappa_a - sigma * mu;
        let (dx, dz, ds, dtau, dkappa) = solve_dir(&d_comb, d_kappa_comb, 1.0 - sigma);

        let alpha = (opts.step_scale * step_bound(&ds, &dz, dtau, dkappa)).min(1.0);
        if !alpha.is_finite() || alpha <= 1e-14 {
            return make_solution(
                prog,
                SolveStatus::Numerical,
                &x / tau,
                pres,
                dres,
                gap_hat,
                relgap,
                iter,
                Some(format!("step length collapsed to {alpha:.3e}")),
            );
        }

        x += alpha * &dx;
        s += alpha * &ds;
        z += alpha * &dz;
        tau += alpha * dtau;
        kappa += alpha * dkappa;
        #[cfg(feature = "std")]
        if std::env::var("INERTIA_IPM_TRACE").is_ok() {
            std::eprintln!(
                "it {iter}: pres {pres:.2e} dres {dres:.2e} gap {gap_hat:.2e} tau {tau:.3e} kappa {kappa:.3e} sigma {sigma:.2e} alpha {alpha:.3e} slack_s {:.2e} slack_z {:.2e}",
                cones.min_slack(&s), cones.min_slack(&z)
            );
        }
    }

    let pres = (g * &x / tau + &s / tau - h).norm() / h_scale;
    let dres = (g.transpose() * &z / tau + c).norm() / c_scale;
    let gap_hat = s.dot(&z) / (tau * tau);
    make_solution(
        prog,
        SolveStatus::MaxIter,
        &x / tau,
        pres,
        dres,
        gap_hat,
        f64::INFINITY,
        opts.max_iter,
        Some("iteration limit reached".into()),
    )
}
