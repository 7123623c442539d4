//! Cone kernels for the interior-point solver.
//!
//! Everything the path-following iteration needs from the product cone:
//! identity elements, interior measures, Nesterov-Todd scalings, the
//! Jordan-algebra products and inverses in scaled space, and maximum step
//! lengths to the cone boundary. All operations act on packed vectors with
//! the block structure of the program's constraint blocks.

use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{DMatrix, DVector};

#[allow(unused_imports)]
use num_traits::Float;

use super::program::{smat, svec, ConeSpec, ConstraintBlock};

/// Nesterov-Todd scaling of one cone block.
#[derive(Debug, Clone)]
pub(crate) enum Scaling {
    NonNeg {
        w: DVector<f64>,
    },
    Soc {
        eta: f64,
        // Unit-hyperbolic point: w0² - ‖w̄‖² = 1.
        w: DVector<f64>,
    },
    Psd {
        r: DMatrix<f64>,
        rti: DMatrix<f64>,
        n: usize,
    },
}

/// Scalings for every block plus the common scaled point λ = W z = W^{-T} s.
#[derive(Debug, Clone)]
pub(crate) struct ScalingSet {
    pub blocks: Vec<Scaling>,
    pub lambda: DVector<f64>,
}

/// Numerical failure while computing a scaling (iterate left the cone).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ScalingError;

/// Product-cone workspace: block specs with their packed ranges.
#[derive(Debug, Clone)]
pub(crate) struct ConeSystem {
    pub blocks: Vec<(ConeSpec, Range<usize>)>,
    pub dim: usize,
    pub degree: f64,
}

fn jordan_det_soc(v: &[f64]) -> f64 {
    let barsq: f64 = v[1..].iter().map(|x| x * x).sum();
    v[0] * v[0] - barsq
}

// Smallest positive root of a·α² + b·α + c (c > 0), or +inf when the
// quadratic never crosses zero for α > 0.
fn smallest_positive_root(a: f64, b: f64, c: f64) -> f64 {
    let disc = b * b - 4.0 * a * c;
    if a.abs() < 1e-300 {
        if b < 0.0 {
            return -c / b;
        }
        return f64::INFINITY;
    }
    if disc < 0.0 {
        if a > 0.0 {
            return f64::INFINITY;
        }
        // c > 0 and a < 0 force real roots, so disc < 0 cannot happen here;
        // treat roundoff as a tangent point.
        return -b / (2.0 * a);
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let (r1, r2) = (q / a, c / q);
    let mut best = f64::INFINITY;
    for r in [r1, r2] {
        if r > 0.0 && r < best {
            best = r;
        }
    }
    best
}

impl ConeSystem {
    pub fn new(blocks: &[ConstraintBlock]) -> Self {
        let mut ranges = Vec::with_capacity(blocks.len());
        let mut at = 0usize;
        let mut degree = 0usize;
        for b in blocks {
            let d = b.cone.dim();
            ranges.push((b.cone, at..at + d));
            at += d;
            degree += b.cone.degree();
        }
        ConeSystem {
            blocks: ranges,
            dim: at,
            degree: degree as f64,
        }
    }

    /// Identity element of the product cone.
    pub fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim);
        for (cone, range) in &self.blocks {
            match cone {
                ConeSpec::NonNeg(_) => e.rows_mut(range.start, range.len()).fill(1.0),
                ConeSpec::Soc(_) => e[range.start] = 1.0,
                ConeSpec::Psd(n) => {
                    let eye = svec(&DMatrix::identity(*n, *n));
                    e.rows_mut(range.start, range.len()).copy_from(&eye);
                }
            }
        }
        e
    }

    /// Blockwise interior measure: positive iff strictly inside the cone.
    pub fn min_slack(&self, v: &DVector<f64>) -> f64 {
        let mut min = f64::INFINITY;
        for (cone, range) in &self.blocks {
            let block = &v.as_slice()[range.clone()];
            let m = match cone {
                ConeSpec::NonNeg(_) => block.iter().copied().fold(f64::INFINITY, f64::min),
                ConeSpec::Soc(_) => {
                    let barnorm: f64 = block[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
                    block[0] - barnorm
                }
                ConeSpec::Psd(n) => {
                    let m = smat(block, *n);
                    m.symmetric_eigen()
                        .eigenvalues
                        .iter()
                        .copied()
                        .fold(f64::INFINITY, f64::min)
                }
            };
            min = min.min(m);
        }
        min
    }

    /// Shift a candidate into the interior the way the initialization step
    /// does: if the point is not comfortably interior, add `(1 + α) e`.
    pub fn shift_into_interior(&self, v: &mut DVector<f64>) {
        let alpha = -self.min_slack(v);
        if alpha >= -1e-8 {
            let e = self.identity();
            *v += (1.0 + alpha) * e;
        }
    }

    /// Nesterov-Todd scalings for a strictly interior primal-dual pair.
    pub fn scalings(&self, s: &DVector<f64>, z: &DVector<f64>) -> Result<ScalingSet, ScalingError> {
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut lambda = DVector::zeros(self.dim);
        for (cone, range) in &self.blocks {
            let sb = &s.as_slice()[range.clone()];
            let zb = &z.as_slice()[range.clone()];
            match cone {
                ConeSpec::NonNeg(d) => {
                    let mut w = DVector::zeros(*d);
                    for i in 0..*d {
                        if sb[i] <= 0.0 || zb[i] <= 0.0 {
                            return Err(ScalingError);
                        }
                        w[i] = (sb[i] / zb[i]).sqrt();
                        lambda[range.start + i] = (sb[i] * zb[i]).sqrt();
                    }
                    blocks.push(Scaling::NonNeg { w });
                }
                ConeSpec::Soc(d) => {
                    let dets = jordan_det_soc(sb);
                    let detz = jordan_det_soc(zb);
                    if dets <= 0.0 || detz <= 0.0 || sb[0] <= 0.0 || zb[0] <= 0.0 {
                        return Err(ScalingError);
                    }
                    let aa = dets.sqrt();
                    let bb = detz.sqrt();
                    let eta = (aa / bb).sqrt();
                    // Normalized points and the unit-hyperbolic midpoint.
                    let mut w = DVector::zeros(*d);
                    let mut sdz = 0.0;
                    for i in 0..*d {
                        sdz += sb[i] / aa * (zb[i] / bb);
                    }
                    let gamma = ((1.0 + sdz).max(0.0) / 2.0).sqrt();
                    if !(gamma > 0.0) {
                        return Err(ScalingError);
                    }
                    w[0] = (sb[0] / aa + zb[0] / bb) / (2.0 * gamma);
                    for i in 1..*d {
                        w[i] = (sb[i] / aa - zb[i] / bb) / (2.0 * gamma);
                    }
                    let scaling = Scaling::Soc { eta, w };
                    let lam = apply_w_block(&scaling, zb);
                    lambda
                        .rows_mut(range.start, *d)
                        .copy_from(&lam);
                    blocks.push(scaling);
                }
                ConeSpec::Psd(n) => {
                    let smatx = smat(sb, *n);
                    let zmat = smat(zb, *n);
                    let ls = match nalgebra::linalg::Cholesky::new(smatx) {
                        Some(c) => c.l(),
                        None => return Err(ScalingError),
                    };
                    let lz = match nalgebra::linalg::Cholesky::new(zmat) {
                        Some(c) => c.l(),
                        None => return Err(ScalingError),
                    };
                    let svd = (lz.transpose() * &ls).svd(true, true);
                    let u = svd.u.as_ref().ok_or(ScalingError)?;
                    let vt = svd.v_t.as_ref().ok_or(ScalingError)?;
                    let mut inv_sqrt = DVector::zeros(*n);
                    for i in 0..*n {
                        let sv = svd.singular_values[i];
                        if sv <= 0.0 {
                            return Err(ScalingError);
                        }
                        inv_sqrt[i] = 1.0 / sv.sqrt();
                        // λ block is the diagonal of singular values.
                    }
                    let r = &ls * vt.transpose() * DMatrix::from_diagonal(&inv_sqrt);
                    let rti = &lz * u * DMatrix::from_diagonal(&inv_sqrt);
                    let mut lam_mat = DMatrix::zeros(*n, *n);
                    for i in 0..*n {
                        lam_mat[(i, i)] = svd.singular_values[i];
                    }
                    lambda
                        .rows_mut(range.start, range.len())
                        .copy_from(&svec(&lam_mat));
                    blocks.push(Scaling::Psd {
                        r,
                        rti,
                        n: *n,
                    });
                }
            }
        }
        Ok(ScalingSet { blocks, lambda })
    }

    fn map_blocks(
        &self,
        scal: &ScalingSet,
        v: &DVector<f64>,
        f: impl Fn(&Scaling, &[f64]) -> DVector<f64>,
    ) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for ((_, range), sc) in self.blocks.iter().zip(scal.blocks.iter()) {
            let block = &v.as_slice()[range.clone()];
            out.rows_mut(range.start, range.len()).copy_from(&f(sc, block));
        }
        out
    }

    /// `W v` (maps dual-side vectors into scaled space).
    pub fn apply_w(&self, scal: &ScalingSet, v: &DVector<f64>) -> DVector<f64> {
        self.map_blocks(scal, v, apply_w_block)
    }

    /// `W^T v` (adjoint, maps scaled vectors back to the primal side).
    pub fn apply_wt(&self, scal: &ScalingSet, v: &DVector<f64>) -> DVector<f64> {
        self.map_blocks(scal, v, apply_wt_block)
    }

    /// `W^{-T} v` (maps primal-side vectors into scaled space).
    pub fn apply_w_inv_t(&self, scal: &ScalingSet, v: &DVector<f64>) -> DVector<f64> {
        self.map_blocks(scal, v, apply_w_inv_t_block)
    }

    /// `H^{-1} v = W^{-1} W^{-T} v`.
    pub fn apply_h_inv(&self, scal: &ScalingSet, v: &DVector<f64>) -> DVector<f64> {
        self.map_blocks(scal, v, apply_h_inv_block)
    }

    /// `H^{-1}` applied to every column of a matrix.
    pub fn apply_h_inv_mat(&self, scal: &ScalingSet, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for c in 0..m.ncols() {
            let col = DVector::from_column_slice(m.column(c).as_slice());
            out.set_column(c, &self.apply_h_inv(scal, &col));
        }
        out
    }

    /// Jordan product `a ∘ b` blockwise.
    pub fn jordan_mul(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for (cone, range) in &self.blocks {
            let ab = &a.as_slice()[range.clone()];
            let bb = &b.as_slice()[range.clone()];
            let prod = match cone {
                ConeSpec::NonNeg(d) => {
                    DVector::from_fn(*d, |i, _| ab[i] * bb[i])
                }
                ConeSpec::Soc(d) => {
                    let mut p = DVector::zeros(*d);
                    p[0] = ab.iter().zip(bb.iter()).map(|(x, y)| x * y).sum();
                    for i in 1..*d {
                        p[i] = ab[0] * bb[i] + bb[0] * ab[i];
                    }
                    p
                }
                ConeSpec::Psd(n) => {
                    let am = smat(ab, *n);
                    let bm = smat(bb, *n);
                    svec(&(0.5 * (&am * &bm + &bm * &am)))
                }
            };
            out.rows_mut(range.start, range.len()).copy_from(&prod);
        }
        out
    }

    /// Solve `λ ∘ u = d` for `u`, with λ the scaled point of `scal`.
    pub fn lambda_solve(&self, scal: &ScalingSet, d: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for (cone, range) in &self.blocks {
            let lam = &scal.lambda.as_slice()[range.clone()];
            let db = &d.as_slice()[range.clone()];
            let sol = match cone {
                ConeSpec::NonNeg(dd) => DVector::from_fn(*dd, |i, _| db[i] / lam[i]),
                ConeSpec::Soc(dd) => {
                    let det = jordan_det_soc(lam);
                    let lbar_d: f64 = lam[1..].iter().zip(db[1..].iter()).map(|(x, y)| x * y).sum();
                    let u0 = (lam[0] * db[0] - lbar_d) / det;
                    let mut u = DVector::zeros(*dd);
                    u[0] = u0;
                    for i in 1..*dd {
                        u[i] = (db[i] - u0 * lam[i]) / lam[0];
                    }
                    u
                }
                ConeSpec::Psd(n) => {
                    // λ is diagonal in the scaled frame.
                    let lmat = smat(lam, *n);
                    let dmat = smat(db, *n);
                    let mut umat = DMatrix::zeros(*n, *n);
                    for i in 0..*n {
                        for j in 0..*n {
                            umat[(i, j)] = 2.0 * dmat[(i, j)] / (lmat[(i, i)] + lmat[(j, j)]);
                        }
                    }
                    svec(&umat)
                }
            };
            out.rows_mut(range.start, range.len()).copy_from(&sol);
        }
        out
    }

    /// Maximum step `α` with `λ + α Δ` in the cone, for a scaled direction.
    pub fn max_step(&self, scal: &ScalingSet, delta: &DVector<f64>) -> f64 {
        let mut step = f64::INFINITY;
        for (cone, range) in &self.blocks {
            let lam = &scal.lambda.as_slice()[range.clone()];
            let db = &delta.as_slice()[range.clone()];
            let s = match cone {
                ConeSpec::NonNeg(dd) => {
                    let mut s = f64::INFINITY;
                    for i in 0..*dd {
                        if db[i] < 0.0 {
                            s = s.min(-lam[i] / db[i]);
                        }
                    }
                    s
                }
                ConeSpec::Soc(dd) => {
                    let a = jordan_det_soc(db);
                    let mut b = 2.0 * lam[0] * db[0];
                    for i in 1..*dd {
                        b -= 2.0 * lam[i] * db[i];
                    }
                    let c = jordan_det_soc(lam);
                    let mut s = smallest_positive_root(a, b, c);
                    if db[0] < 0.0 {
                        s = s.min(-lam[0] / db[0]);
                    }
                    s
                }
                ConeSpec::Psd(n) => {
                    // λ diagonal: step bound from eigenvalues of
                    // Λ^{-1/2} Δ Λ^{-1/2}.
                    let lmat = smat(lam, *n);
                    let dmat = smat(db, *n);
                    let mut scaled = DMatrix::zeros(*n, *n);
                    for i in 0..*n {
                        for j in 0..*n {
                            scaled[(i, j)] =
                                dmat[(i, j)] / (lmat[(i, i)] * lmat[(j, j)]).sqrt();
                        }
                    }
                    let min_eig = scaled
                        .symmetric_eigen()
                        .eigenvalues
                        .iter()
                        .copied()
                        .fold(f64::INFINITY, f64::min);
                    if min_eig >= 0.0 {
                        f64::INFINITY
                    } else {
                        1.0 / (-min_eig)
                    }
                }
            };
            step = step.min(s);
        }
        step
    }
}

fn apply_w_block(sc: &Scaling, v: &[f64]) -> DVector<f64> {
    match sc {
        Scaling::NonNeg { w } => DVector::from_fn(v.len(), |i, _| w[i] * v[i]),
        Scaling::Soc { eta, w } => hyperbolic_householder(w, v, *eta, 1.0),
        Scaling::Psd { r, n, .. } => {
            let m = smat(v, *n);
            svec(&(r.transpose() * m * r))
        }
    }
}

fn apply_wt_block(sc: &Scaling, v: &[f64]) -> DVector<f64> {
    match sc {
        // W is symmetric for the orthant and second-order cones.
        Scaling::NonNeg { .. } | Scaling::Soc { .. } => apply_w_block(sc, v),
        Scaling::Psd { r, n, .. } => {
            let m = smat(v, *n);
            svec(&(r * m * r.transpose()))
        }
    }
}

fn apply_w_inv_t_block(sc: &Scaling, v: &[f64]) -> DVector<f64> {
    match sc {
        Scaling::NonNeg { w } => DVector::from_fn(v.len(), |i, _| v[i] / w[i]),
        Scaling::Soc { eta, w } => {
            // W^{-1} = η^{-1} H(J w): negate the tail of w.
            let mut jw = DVector::from_column_slice(w.as_slice());
            for i in 1..jw.len() {
                jw[i] = -jw[i];
            }
            hyperbolic_householder(&jw, v, 1.0 / *eta, 1.0)
        }
        Scaling::Psd { rti, n, .. } => {
            let m = smat(v, *n);
            svec(&(rti.transpose() * m * rti))
        }
    }
}

fn apply_h_inv_block(sc: &Scaling, v: &[f64]) -> DVector<f64> {
    match sc {
        Scaling::NonNeg { w } => DVector::from_fn(v.len(), |i, _| v[i] / (w[i] * w[i])),
        Scaling::Soc { .. } => {
            let first = apply_w_inv_t_block(sc, v);
            apply_w_inv_t_block(sc, first.as_slice())
        }
        Scaling::Psd { rti, n, .. } => {
            let t_inv = rti * rti.transpose();
            let m = smat(v, *n);
            svec(&(&t_inv * m * &t_inv))
        }
    }
}

// η · H(w) v with H(w) = [w0 w̄ᵀ; w̄ I + w̄ w̄ᵀ/(1+w0)] for unit-hyperbolic w.
fn hyperbolic_householder(w: &DVector<f64>, v: &[f64], eta: f64, _sign: f64) -> DVector<f64> {
    let d = v.len();
    let mut out = DVector::zeros(d);
    let w0 = w[0];
    let mut wbar_v = 0.0;
    for i in 1..d {
        wbar_v += w[i] * v[i];
    }
    out[0] = eta * (w0 * v[0] + wbar_v);
    let coeff = v[0] + wbar_v / (1.0 + w0);
    for i in 1..d {
        out[i] = eta * (v[i] + coeff * w[i]);
    }
    out
}
