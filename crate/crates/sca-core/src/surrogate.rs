//! Strongly convex subproblem builders and solvers.
//!
//! Each iteration linearizes the network (not the loss) at the current
//! weights and solves the resulting convex problem exactly. For the squared
//! loss this is a quadratic with matrix `A = (rho/L) J^T J` — a rank-`L`
//! outer-product (Levenberg–Marquardt style) curvature estimate — solved in
//! closed form, with a Woodbury low-rank path selected automatically when
//! the parameter count is much larger than the batch. Sparsity penalties go
//! through FISTA; the cross-entropy case through damped Newton or proximal
//! gradient.
//!
//! Convention: the quadratic path follows the printed update
//! `(A + (lambda + tau) I)^{-1} (b + tau w_n)`, which is the literal
//! subproblem with an `l2` penalty of `lambda * |w|^2` (no 1/2). The
//! elastic-net and logistic paths use the literal `(1/2)|w|^2` forms; see
//! the builder docs.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2, Cholesky, Mat};
use crate::math;
use crate::nn::{JacobianWrt, MiniBatch, MlpModel};
use crate::objective::{Groups, NeighborGraph};

/// How uneven `Q` versus `L` must be before the low-rank path is chosen.
pub const LOW_RANK_RATIO: usize = 4;

const FISTA_MAX_ITERS: usize = 5000;
const FISTA_STEP_TOL: f64 = 1e-10;
const EIG_SAFETY: f64 = 1.05;
const NEWTON_GRAD_TOL: f64 = 1e-8;
const NEWTON_MAX_ITERS: usize = 100;
const PROX_MAX_ITERS: usize = 100_000;
const LINE_SEARCH_MAX_HALVINGS: usize = 50;

/// The quadratic coefficient `A`, dense or in factored low-rank form
/// `A = scale * jac^T jac`.
#[derive(Debug, Clone)]
pub enum QuadPart {
    Dense(Mat),
    LowRank { jac: Mat, scale: f64 },
}

impl QuadPart {
    pub fn dim(&self) -> usize {
        match self {
            QuadPart::Dense(a) => a.rows(),
            QuadPart::LowRank { jac, .. } => jac.cols(),
        }
    }

    /// `A v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        match self {
            QuadPart::Dense(a) => a.matvec(v),
            QuadPart::LowRank { jac, scale } => {
                let jv = jac.matvec(v);
                let mut out = jac.t_matvec(&jv);
                for x in &mut out {
                    *x *= *scale;
                }
                out
            }
        }
    }

    /// Materializes `A` as a dense symmetric matrix.
    pub fn to_dense(&self) -> Mat {
        match self {
            QuadPart::Dense(a) => a.clone(),
            QuadPart::LowRank { jac, scale } => {
                let mut g = jac.gram();
                g.scale(*scale);
                g
            }
        }
    }

    pub fn dense(&self) -> Option<&Mat> {
        match self {
            QuadPart::Dense(a) => Some(a),
            QuadPart::LowRank { .. } => None,
        }
    }

    pub fn low_rank(&self) -> Option<(&Mat, f64)> {
        match self {
            QuadPart::Dense(_) => None,
            QuadPart::LowRank { jac, scale } => Some((jac, *scale)),
        }
    }

    /// Power-iteration estimate of the largest eigenvalue; errors if the
    /// operator shows negative curvature.
    pub fn max_eigenvalue_estimate(&self) -> Result<f64> {
        crate::linalg::power_iteration_max_eig(|v| self.matvec(v), self.dim(), 500)
    }
}

/// Quadratic subproblem `min_w w^T (A + (lambda + tau) I) w
/// - 2 (b + tau w_n)^T w` from one linearized mini-batch.
#[derive(Debug, Clone)]
pub struct RidgeSurrogate {
    pub quad: QuadPart,
    pub b: Vec<f64>,
    pub lambda: f64,
    pub tau: f64,
    pub anchor: Vec<f64>,
}

impl RidgeSurrogate {
    pub fn from_parts(
        quad: QuadPart,
        b: Vec<f64>,
        lambda: f64,
        tau: f64,
        anchor: Vec<f64>,
    ) -> Result<RidgeSurrogate> {
        if quad.dim() != b.len() || b.len() != anchor.len() {
            return Err(Error::ShapeMismatch {
                what: "ridge surrogate",
                expected: quad.dim(),
                actual: b.len(),
            });
        }
        if lambda < 0.0 || tau < 0.0 || !(lambda + tau > 0.0) {
            return Err(Error::NotStronglyConvex);
        }
        Ok(RidgeSurrogate {
            quad,
            b,
            lambda,
            tau,
            anchor,
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Value of the solved quadratic (constants dropped).
    pub fn objective_value(&self, w: &[f64]) -> f64 {
        let c = self.lambda + self.tau;
        let aw = self.quad.matvec(w);
        let mut v = dot(w, &aw) + c * dot(w, w) - 2.0 * dot(&self.b, w);
        v -= 2.0 * self.tau * dot(&self.anchor, w);
        v
    }

    /// Gradient of the solved quadratic.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let c = self.lambda + self.tau;
        let mut g = self.quad.matvec(w);
        for i in 0..g.len() {
            g[i] = 2.0 * (g[i] + c * w[i] - self.b[i] - self.tau * self.anchor[i]);
        }
        g
    }

    /// Adds `weight` times a quadratic-plus-linear penalty (densifying the
    /// quadratic part if needed).
    pub fn augment_with_manifold(&mut self, terms: &ManifoldTerms, weight: f64) {
        let mut dense = self.quad.to_dense();
        dense.add_scaled(&terms.quad, weight);
        self.quad = QuadPart::Dense(dense);
        axpy(weight, &terms.lin, &mut self.b);
    }
}

/// Evaluates the model and its per-sample weight Jacobian on a batch, so
/// that `vals[i] + jac[i] . (w - w_n)` is the first-order model of sample
/// `i`'s output at the current weights.
pub fn linearize_model(
    model: &MlpModel,
    batch: &MiniBatch,
    wrt: JacobianWrt,
) -> Result<(Vec<f64>, Mat)> {
    crate::nn::jacobian_with_outputs(model, batch, wrt)
}

/// Builds the quadratic surrogate for the squared loss:
/// `A = (rho/L) sum_i J_i J_i^T`,
/// `r_i = y_i - f_i + J_i . w_n`,
/// `b = (rho/L) sum_i J_i r_i - ((1 - rho)/2) d`.
///
/// The low-rank representation is kept when `Q > 4 L`.
#[allow(clippy::too_many_arguments)]
pub fn build_ridge(
    jac: &Mat,
    f_vals: &[f64],
    targets: &[f64],
    d: &[f64],
    rho: f64,
    lambda: f64,
    tau: f64,
    anchor: &[f64],
) -> Result<RidgeSurrogate> {
    let l = jac.rows();
    let q = jac.cols();
    if f_vals.len() != l || targets.len() != l {
        return Err(Error::ShapeMismatch {
            what: "ridge batch arrays",
            expected: l,
            actual: f_vals.len().max(targets.len()),
        });
    }
    if d.len() != q || anchor.len() != q {
        return Err(Error::ShapeMismatch {
            what: "ridge weight arrays",
            expected: q,
            actual: d.len().min(anchor.len()),
        });
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidParameter {
            what: "rho must lie in (0, 1]",
        });
    }
    if lambda < 0.0 || tau < 0.0 || !(lambda + tau > 0.0) {
        return Err(Error::NotStronglyConvex);
    }
    let beta = rho / l as f64;
    let mut residuals = vec![0.0; l];
    for i in 0..l {
        let r = targets[i] - f_vals[i] + dot(jac.row(i), anchor);
        if !r.is_finite() {
            return Err(Error::NonFinite {
                what: "surrogate residual",
                sample: i,
            });
        }
        residuals[i] = r;
    }
    let mut b = jac.t_matvec(&residuals);
    for x in &mut b {
        *x *= beta;
    }
    axpy(-(1.0 - rho) / 2.0, d, &mut b);
    let quad = if q > LOW_RANK_RATIO * l {
        QuadPart::LowRank {
            jac: jac.clone(),
            scale: beta,
        }
    } else {
        let mut a = jac.gram();
        a.scale(beta);
        QuadPart::Dense(a)
    };
    Ok(RidgeSurrogate {
        quad,
        b,
        lambda,
        tau,
        anchor: anchor.to_vec(),
    })
}

/// Factored solver for `(A + c I) x = rhs` reused across refinement passes
/// (dense Cholesky, or the Woodbury identity on the low-rank form).
pub(crate) struct ShiftedSolver<'a> {
    quad: &'a QuadPart,
    c: f64,
    factor: Cholesky,
}

impl<'a> ShiftedSolver<'a> {
    pub(crate) fn prepare(quad: &'a QuadPart, c: f64) -> Result<ShiftedSolver<'a>> {
        if !(c > 0.0) {
            return Err(Error::NotStronglyConvex);
        }
        let factor = match quad {
            QuadPart::Dense(a) => {
                let mut m = a.clone();
                m.add_scaled_identity(c);
                Cholesky::new(&m)?
            }
            QuadPart::LowRank { jac, scale } => {
                let mut s = jac.outer_gram();
                s.scale(*scale);
                s.add_scaled_identity(c);
                Cholesky::new(&s)?
            }
        };
        Ok(ShiftedSolver {
            quad,
            c,
            factor,
        })
    }

    pub(crate) fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self.quad {
            QuadPart::Dense(_) => self.factor.solve(rhs),
            QuadPart::LowRank { jac, scale } => {
                // (c I + s J^T J)^-1 = (1/c)(I - s J^T (c I + s J J^T)^-1 J)
                let jr = jac.matvec(rhs);
                let inner = self.factor.solve(&jr);
                let corr = jac.t_matvec(&inner);
                let mut x = rhs.to_vec();
                for i in 0..x.len() {
                    x[i] = (x[i] - scale * corr[i]) / self.c;
                }
                x
            }
        }
    }

    /// Solves and then polishes with iterative refinement until the residual
    /// is far below the stationarity contract.
    pub(crate) fn solve_refined(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = self.solve(rhs);
        let target = 1e-12 * (1.0 + norm2(rhs));
        for _ in 0..3 {
            let ax = self.quad.matvec(&x);
            let mut r = rhs.to_vec();
            for i in 0..r.len() {
                r[i] -= ax[i] + self.c * x[i];
            }
            if norm2(&r) <= target {
                break;
            }
            let dx = self.solve(&r);
            for i in 0..x.len() {
                x[i] += dx[i];
            }
        }
        x
    }
}

/// Closed-form minimizer `(A + (lambda + tau) I)^{-1} (b + tau w_n)` via a
/// symmetric positive definite factorization.
pub fn solve_ridge(s: &RidgeSurrogate) -> Result<Vec<f64>> {
    let c = s.lambda + s.tau;
    let solver = ShiftedSolver::prepare(&s.quad, c)?;
    let mut rhs = s.b.clone();
    axpy(s.tau, &s.anchor, &mut rhs);
    Ok(solver.solve_refined(&rhs))
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Minimizes `w^T (A + (tau + l2_shift) I) w - 2 (b + tau w_n)^T w
/// + l1_weight * r1(w)` by FISTA, where `r1` is the `l1` norm or the
/// weighted group norm when `groups` is given. The proximal step produces
/// exact zeros. Step size is `1 / Lip` with the Lipschitz constant taken
/// from a safety-factored power-iteration estimate of `A`'s top eigenvalue.
pub fn solve_l1_fista(
    quad: &QuadPart,
    b: &[f64],
    anchor: &[f64],
    tau: f64,
    l1_weight: f64,
    l2_shift: f64,
    groups: Option<&Groups>,
) -> Result<Vec<f64>> {
    let q = quad.dim();
    if b.len() != q || anchor.len() != q {
        return Err(Error::ShapeMismatch {
            what: "fista arrays",
            expected: q,
            actual: b.len().min(anchor.len()),
        });
    }
    if let Some(g) = groups {
        g.validate_partition(q)?;
    }
    let shift = tau + l2_shift;
    let eig = quad.max_eigenvalue_estimate()?;
    let lip = 2.0 * (EIG_SAFETY * eig + shift);
    if !(lip > 0.0) {
        return Err(Error::NotStronglyConvex);
    }
    let step = 1.0 / lip;

    let mut lin = b.to_vec();
    axpy(tau, anchor, &mut lin);
    let grad = |w: &[f64]| -> Vec<f64> {
        let mut g = quad.matvec(w);
        for i in 0..q {
            g[i] = 2.0 * (g[i] + shift * w[i] - lin[i]);
        }
        g
    };
    let prox = |v: &mut [f64], t: f64| match groups {
        None => {
            for x in v.iter_mut() {
                *x = soft_threshold(*x, t * l1_weight);
            }
        }
        Some(g) => {
            for (p, set) in g.sets().iter().enumerate() {
                let mut s = 0.0;
                for &i in set {
                    s += v[i] * v[i];
                }
                let norm = math::sqrt(s);
                let thr = t * l1_weight * g.weight(p);
                if norm <= thr {
                    for &i in set {
                        v[i] = 0.0;
                    }
                } else {
                    let scale = 1.0 - thr / norm;
                    for &i in set {
                        v[i] *= scale;
                    }
                }
            }
        }
    };

    let mut x = anchor.to_vec();
    let mut y = x.clone();
    let mut t_acc = 1.0;
    for _ in 0..FISTA_MAX_ITERS {
        let g = grad(&y);
        let mut x_new = y.clone();
        axpy(-step, &g, &mut x_new);
        prox(&mut x_new, step);
        let t_new = 0.5 * (1.0 + math::sqrt(1.0 + 4.0 * t_acc * t_acc));
        let momentum = (t_acc - 1.0) / t_new;
        let mut change: f64 = 0.0;
        for i in 0..q {
            let diff = x_new[i] - x[i];
            change = change.max(diff.abs());
            y[i] = x_new[i] + momentum * diff;
        }
        x = x_new;
        t_acc = t_new;
        if change < FISTA_STEP_TOL {
            break;
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogisticPenalty {
    L2,
    L1,
}

/// Subproblem for the cross-entropy loss: the pre-squash output is
/// linearized, the sigmoid and the loss are kept intact, so the problem is
/// an `L`-sample logistic regression over `Q` weights plus the usual linear
/// history term and damping.
#[derive(Debug, Clone)]
pub struct LogisticSurrogate {
    /// Pre-squash outputs at the anchor, one per sample.
    pub z0: Vec<f64>,
    /// Jacobian of the pre-squash output, `L x Q`.
    pub jl: Mat,
    pub targets: Vec<f64>,
    pub rho: f64,
    pub lambda: f64,
    pub tau: f64,
    pub d: Vec<f64>,
    pub anchor: Vec<f64>,
    pub penalty: LogisticPenalty,
}

impl LogisticSurrogate {
    fn logits(&self, w: &[f64]) -> Vec<f64> {
        let dw = crate::linalg::sub(w, &self.anchor);
        let mut z = self.jl.matvec(&dw);
        for (zi, z0) in z.iter_mut().zip(&self.z0) {
            *zi += z0;
        }
        z
    }

    /// Smooth part of the subproblem: data term, the `l2` penalty when
    /// selected (`lambda * (1/2)|w|^2`), the history term, and the damping.
    pub fn smooth_value(&self, w: &[f64]) -> f64 {
        let l = self.z0.len() as f64;
        let z = self.logits(w);
        let mut v = 0.0;
        for (zi, y) in z.iter().zip(&self.targets) {
            v += math::softplus(-zi) + (1.0 - y) * zi;
        }
        v *= self.rho / l;
        if self.penalty == LogisticPenalty::L2 {
            v += self.lambda * 0.5 * dot(w, w);
        }
        let dw = crate::linalg::sub(w, &self.anchor);
        v += (1.0 - self.rho) * dot(&self.d, &dw);
        v += self.tau * dot(&dw, &dw);
        v
    }

    /// Full subproblem value, including the `l1` term when selected.
    pub fn value(&self, w: &[f64]) -> f64 {
        let mut v = self.smooth_value(w);
        if self.penalty == LogisticPenalty::L1 {
            v += self.lambda * w.iter().map(|x| x.abs()).sum::<f64>();
        }
        v
    }

    /// Gradient of [`LogisticSurrogate::smooth_value`].
    pub fn smooth_gradient(&self, w: &[f64]) -> Vec<f64> {
        let l = self.z0.len() as f64;
        let z = self.logits(w);
        let mut coeff = vec![0.0; z.len()];
        for i in 0..z.len() {
            coeff[i] = (math::sigmoid(z[i]) - self.targets[i]) * self.rho / l;
        }
        let mut g = self.jl.t_matvec(&coeff);
        if self.penalty == LogisticPenalty::L2 {
            axpy(self.lambda, w, &mut g);
        }
        axpy(1.0 - self.rho, &self.d, &mut g);
        for i in 0..g.len() {
            g[i] += 2.0 * self.tau * (w[i] - self.anchor[i]);
        }
        g
    }
}

/// Linearizes the pre-squash output and packs the logistic subproblem.
pub fn build_logistic(
    model: &MlpModel,
    batch: &MiniBatch,
    d: &[f64],
    rho: f64,
    lambda: f64,
    tau: f64,
    penalty: LogisticPenalty,
) -> Result<LogisticSurrogate> {
    crate::objective::LossKind::CrossEntropy.check_head(model.head())?;
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidParameter {
            what: "rho must lie in (0, 1]",
        });
    }
    if batch.targets.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidParameter {
            what: "cross-entropy targets must be 0 or 1",
        });
    }
    match penalty {
        LogisticPenalty::L2 => {
            if lambda < 0.0 || tau < 0.0 || !(lambda + tau > 0.0) {
                return Err(Error::NotStronglyConvex);
            }
        }
        LogisticPenalty::L1 => {
            if !(tau > 0.0) {
                return Err(Error::NotStronglyConvex);
            }
        }
    }
    let (z0, jl) = linearize_model(model, batch, JacobianWrt::PreSquash)?;
    if d.len() != jl.cols() {
        return Err(Error::ShapeMismatch {
            what: "gradient-average vector",
            expected: jl.cols(),
            actual: d.len(),
        });
    }
    Ok(LogisticSurrogate {
        z0,
        jl,
        targets: batch.targets.clone(),
        rho,
        lambda,
        tau,
        d: d.to_vec(),
        anchor: model.weights().to_vec(),
        penalty,
    })
}

/// Solves the logistic subproblem: damped Newton with backtracking for the
/// `l2` penalty (Hessian `(rho/L) J^T D J + (lambda + 2 tau) I`, assembled
/// densely or applied through the Woodbury identity when `Q > 4 L`);
/// proximal gradient with soft thresholding for `l1`. Returns once the
/// gradient (or prox-mapped gradient) norm is at most `1e-8`.
pub fn solve_logistic(s: &LogisticSurrogate) -> Result<Vec<f64>> {
    match s.penalty {
        LogisticPenalty::L2 => solve_logistic_newton(s),
        LogisticPenalty::L1 => solve_logistic_prox(s),
    }
}

fn solve_logistic_newton(s: &LogisticSurrogate) -> Result<Vec<f64>> {
    let q = s.anchor.len();
    let l = s.z0.len();
    let c = s.lambda + 2.0 * s.tau;
    if !(c > 0.0) {
        return Err(Error::NotStronglyConvex);
    }
    let mut w = s.anchor.clone();
    for _ in 0..NEWTON_MAX_ITERS {
        let g = s.smooth_gradient(&w);
        if norm2(&g) <= NEWTON_GRAD_TOL {
            return Ok(w);
        }
        // rows of V are sqrt((rho/L) sigma'(z_i)) * JL_i, so the Hessian is
        // V^T V + c I
        let z = s.logits(&w);
        let mut v = Mat::zeros(l, q);
        for i in 0..l {
            let sig = math::sigmoid(z[i]);
            let scale = math::sqrt(s.rho / l as f64 * sig * (1.0 - sig));
            let dst = v.row_mut(i);
            for (t, &jv) in s.jl.row(i).iter().enumerate() {
                dst[t] = scale * jv;
            }
        }
        let quad = if q > LOW_RANK_RATIO * l {
            QuadPart::LowRank { jac: v, scale: 1.0 }
        } else {
            QuadPart::Dense(v.gram())
        };
        let solver = ShiftedSolver::prepare(&quad, c)?;
        let mut p = solver.solve(&g);
        for x in &mut p {
            *x = -*x;
        }
        let slope = dot(&g, &p);
        let f0 = s.smooth_value(&w);
        // once the expected decrease drops below the fp resolution of the
        // objective, the sufficient-decrease test is pure rounding noise
        let noise_floor = 4.0 * f64::EPSILON * (1.0 + f0.abs());
        let mut t = 1.0;
        let mut halvings = 0;
        loop {
            let mut trial = w.clone();
            axpy(t, &p, &mut trial);
            let expected = 0.25 * t * slope;
            if s.smooth_value(&trial) <= f0 + expected || -expected <= noise_floor {
                w = trial;
                break;
            }
            t *= 0.5;
            halvings += 1;
            if halvings > LINE_SEARCH_MAX_HALVINGS {
                return Err(Error::LineSearchFailed);
            }
        }
    }
    let g = s.smooth_gradient(&w);
    if norm2(&g) <= NEWTON_GRAD_TOL {
        Ok(w)
    } else {
        Err(Error::SolverStalled {
            what: "logistic Newton solver",
        })
    }
}

fn solve_logistic_prox(s: &LogisticSurrogate) -> Result<Vec<f64>> {
    let l = s.z0.len();
    // data Hessian is bounded by (rho / 4L) * lambda_max(JL^T JL)
    let eig = crate::linalg::power_iteration_max_eig(
        |v| {
            let jv = s.jl.matvec(v);
            s.jl.t_matvec(&jv)
        },
        s.anchor.len(),
        500,
    )?;
    let lip = EIG_SAFETY * (s.rho / (4.0 * l as f64)) * eig + 2.0 * s.tau;
    if !(lip > 0.0) {
        return Err(Error::NotStronglyConvex);
    }
    let step = 1.0 / lip;
    let mut w = s.anchor.clone();
    for _ in 0..PROX_MAX_ITERS {
        let g = s.smooth_gradient(&w);
        let mut w_new = w.clone();
        axpy(-step, &g, &mut w_new);
        for x in w_new.iter_mut() {
            *x = soft_threshold(*x, step * s.lambda);
        }
        let mut residual = 0.0;
        for i in 0..w.len() {
            let r = (w[i] - w_new[i]) / step;
            residual += r * r;
        }
        w = w_new;
        if math::sqrt(residual) <= NEWTON_GRAD_TOL {
            return Ok(w);
        }
    }
    Err(Error::SolverStalled {
        what: "logistic proximal-gradient solver",
    })
}

/// Quadratic-plus-linear expansion of the linearized manifold penalty:
/// `value_at(w) = w^T quad w - 2 lin^T w + constant`.
#[derive(Debug, Clone)]
pub struct ManifoldTerms {
    pub quad: Mat,
    pub lin: Vec<f64>,
    pub constant: f64,
}

impl ManifoldTerms {
    pub fn value_at(&self, w: &[f64]) -> f64 {
        let aw = self.quad.matvec(w);
        dot(w, &aw) - 2.0 * dot(&self.lin, w) + self.constant
    }

    pub fn gradient_at(&self, w: &[f64]) -> Vec<f64> {
        let mut g = self.quad.matvec(w);
        for i in 0..g.len() {
            g[i] = 2.0 * (g[i] - self.lin[i]);
        }
        g
    }
}

/// Linearizes the manifold penalty around the model's current weights over
/// the batch: each neighbor pair `(i, j)` contributes
/// `(q_ij / k) ((f_i - f_j) + (J_i - J_j)^T (w - w_n))^2`, which expands to
/// a PSD quadratic term and a linear term that add onto any quadratic
/// surrogate. Neighbor outputs and Jacobians outside the batch are computed
/// on demand (`L*k` extra sweeps).
pub fn manifold_terms(
    model: &MlpModel,
    batch: &MiniBatch,
    all_inputs: &Mat,
    graph: &NeighborGraph,
) -> Result<ManifoldTerms> {
    let q = model.param_count();
    let anchor = model.weights();
    let inv_k = 1.0 / graph.k() as f64;
    let mut cache: BTreeMap<usize, (f64, Vec<f64>)> = BTreeMap::new();
    let eval = |idx: usize,
                    cache: &mut BTreeMap<usize, (f64, Vec<f64>)>|
     -> Result<(f64, Vec<f64>)> {
        if let Some(hit) = cache.get(&idx) {
            return Ok(hit.clone());
        }
        if idx >= all_inputs.rows() {
            return Err(Error::MissingNeighbor {
                sample: idx,
                neighbor: idx,
            });
        }
        let (f, grad) =
            crate::nn::output_and_gradient(model, all_inputs.row(idx), JacobianWrt::FullOutput)?;
        cache.insert(idx, (f, grad.clone()));
        Ok((f, grad))
    };
    let mut quad = Mat::zeros(q, q);
    let mut lin = vec![0.0; q];
    let mut constant = 0.0;
    for &i in &batch.indices {
        if i >= graph.len() {
            return Err(Error::MissingNeighbor {
                sample: i,
                neighbor: i,
            });
        }
        let (fi, ji) = eval(i, &mut cache)?;
        for &(j, weight) in graph.edges_of(i) {
            let (fj, jj) = eval(j, &mut cache)?;
            let coef = inv_k * weight;
            let jd: Vec<f64> = ji.iter().zip(&jj).map(|(a, b)| a - b).collect();
            let c0 = (fi - fj) - dot(&jd, anchor);
            for (r, &jr) in jd.iter().enumerate() {
                if jr == 0.0 {
                    continue;
                }
                let row = quad.row_mut(r);
                for (s_idx, &js) in jd.iter().enumerate() {
                    row[s_idx] += coef * jr * js;
                }
            }
            axpy(-coef * c0, &jd, &mut lin);
            constant += coef * c0 * c0;
        }
    }
    Ok(ManifoldTerms {
        quad,
        lin,
        constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{MlpModel, OutputHead, Topology};

    fn batch_1d(xs: &[f64], ys: &[f64]) -> MiniBatch {
        MiniBatch::new(
            (0..xs.len()).collect(),
            Mat::from_vec(xs.len(), 1, xs.to_vec()).unwrap(),
            ys.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn zero_jacobian_build() {
        let jac = Mat::zeros(2, 3);
        let d = alloc::vec![1.0, 2.0, 3.0];
        let s = build_ridge(
            &jac,
            &[0.0, 0.0],
            &[1.0, -1.0],
            &d,
            0.5,
            1e-2,
            0.0,
            &[0.0, 0.0, 0.0],
        )
        .unwrap();
        let a = s.quad.to_dense();
        assert!(a.data().iter().all(|&v| v == 0.0));
        for i in 0..3 {
            assert!((s.b[i] + 0.25 * d[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn rho_one_drops_history_term() {
        let jac = Mat::from_vec(1, 2, alloc::vec![1.0, 2.0]).unwrap();
        let d = alloc::vec![100.0, -100.0];
        let s = build_ridge(&jac, &[0.3], &[0.5], &d, 1.0, 1e-2, 0.0, &[0.0, 0.0]).unwrap();
        // b = J^T r with r = 0.5 - 0.3 = 0.2
        assert!((s.b[0] - 0.2).abs() < 1e-15);
        assert!((s.b[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn build_rejects_vanishing_penalties() {
        let jac = Mat::zeros(1, 2);
        let err = build_ridge(
            &jac,
            &[0.0],
            &[0.0],
            &[0.0, 0.0],
            0.5,
            0.0,
            0.0,
            &[0.0, 0.0],
        );
        assert!(matches!(err, Err(Error::NotStronglyConvex)));
    }

    #[test]
    fn scalar_ridge_solution() {
        let s = RidgeSurrogate::from_parts(
            QuadPart::Dense(Mat::from_vec(1, 1, alloc::vec![2.0]).unwrap()),
            alloc::vec![3.0],
            1.0,
            0.0,
            alloc::vec![0.0],
        )
        .unwrap();
        let w = solve_ridge(&s).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_reduces_to_b_over_lambda() {
        let s = RidgeSurrogate::from_parts(
            QuadPart::Dense(Mat::zeros(3, 3)),
            alloc::vec![1.0, -2.0, 0.5],
            0.25,
            0.0,
            alloc::vec![0.0; 3],
        )
        .unwrap();
        let w = solve_ridge(&s).unwrap();
        assert!((w[0] - 4.0).abs() < 1e-13);
        assert!((w[1] + 8.0).abs() < 1e-13);
        assert!((w[2] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn dense_and_low_rank_paths_agree() {
        // Q = 9 > 4 * L with L = 2 picks the low-rank path; force density
        // through from_parts to compare.
        let jac = Mat::from_vec(
            2,
            9,
            (0..18).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.4).collect(),
        )
        .unwrap();
        let f_vals = [0.2, -0.1];
        let targets = [1.0, 0.5];
        let d: Vec<f64> = (0..9).map(|i| (i as f64) / 9.0 - 0.5).collect();
        let anchor: Vec<f64> = (0..9).map(|i| (i as f64) * 0.05).collect();
        let s = build_ridge(&jac, &f_vals, &targets, &d, 0.7, 1e-3, 1e-2, &anchor).unwrap();
        assert!(s.quad.low_rank().is_some());
        let dense = RidgeSurrogate::from_parts(
            QuadPart::Dense(s.quad.to_dense()),
            s.b.clone(),
            s.lambda,
            s.tau,
            s.anchor.clone(),
        )
        .unwrap();
        let w1 = solve_ridge(&s).unwrap();
        let w2 = solve_ridge(&dense).unwrap();
        for i in 0..9 {
            assert!((w1[i] - w2[i]).abs() < 1e-10, "{} vs {}", w1[i], w2[i]);
        }
    }

    #[test]
    fn fista_scalar_threshold_dominates() {
        let quad = QuadPart::Dense(Mat::from_vec(1, 1, alloc::vec![1.0]).unwrap());
        let w = solve_l1_fista(&quad, &[1.0], &[0.5], 0.0, 3.0, 0.0, None).unwrap();
        assert_eq!(w[0], 0.0); // exact zero, not just small
    }

    #[test]
    fn fista_scalar_interior_solution() {
        let quad = QuadPart::Dense(Mat::from_vec(1, 1, alloc::vec![1.0]).unwrap());
        let w = solve_l1_fista(&quad, &[1.0], &[0.0], 0.0, 1.0, 0.0, None).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-9, "{}", w[0]);
    }

    #[test]
    fn fista_with_zero_l1_matches_ridge() {
        let jac = Mat::from_vec(2, 3, alloc::vec![0.4, -0.2, 0.6, 0.1, 0.9, -0.5]).unwrap();
        let d = alloc::vec![0.3, -0.1, 0.2];
        let anchor = alloc::vec![0.05, -0.02, 0.1];
        let s = build_ridge(&jac, &[0.1, 0.2], &[0.5, -0.5], &d, 0.8, 0.0, 0.5, &anchor).unwrap();
        let via_ridge = solve_ridge(&s).unwrap();
        let via_fista =
            solve_l1_fista(&s.quad, &s.b, &s.anchor, s.tau, 0.0, 0.0, None).unwrap();
        for i in 0..3 {
            assert!((via_ridge[i] - via_fista[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn linearization_is_exact_at_anchor_and_for_affine_models() {
        let topo = Topology::new(alloc::vec![1, 1]).unwrap();
        let model = MlpModel::new(topo, OutputHead::Identity, alloc::vec![2.0, -0.5]).unwrap();
        let batch = batch_1d(&[0.3, -0.7], &[0.0, 0.0]);
        let (f_vals, jac) = linearize_model(&model, &batch, JacobianWrt::FullOutput).unwrap();
        // exact at the anchor
        assert!((f_vals[0] - (2.0 * 0.3 - 0.5)).abs() < 1e-15);
        // affine model: linearization reproduces f everywhere
        let w_new = [1.0, 1.0];
        let dw = [w_new[0] - 2.0, w_new[1] + 0.5];
        let lin = f_vals[1] + dot(jac.row(1), &dw);
        let direct = 1.0 * -0.7 + 1.0;
        assert!((lin - direct).abs() < 1e-14);
    }

    #[test]
    fn logistic_symmetric_batch_solves_to_zero() {
        let q = 3;
        let jl = Mat::from_vec(
            4,
            q,
            alloc::vec![
                0.5, -0.2, 0.3, // (y=1, +J)
                -0.5, 0.2, -0.3, // (y=1, -J)
                0.1, 0.4, -0.6, // (y=0, +J')
                -0.1, -0.4, 0.6, // (y=0, -J')
            ],
        )
        .unwrap();
        let s = LogisticSurrogate {
            z0: alloc::vec![0.0; 4],
            jl,
            targets: alloc::vec![1.0, 1.0, 0.0, 0.0],
            rho: 0.9,
            lambda: 0.1,
            tau: 0.0,
            d: alloc::vec![0.0; q],
            anchor: alloc::vec![0.0; q],
            penalty: LogisticPenalty::L2,
        };
        let w = solve_logistic(&s).unwrap();
        assert!(norm2(&w) < 1e-7, "|w| = {}", norm2(&w));
    }

    #[test]
    fn logistic_zero_jacobian_closed_form() {
        let q = 2;
        let rho = 0.6;
        let lambda = 0.8;
        let tau = 0.3;
        let d = alloc::vec![0.5, -1.0];
        let anchor = alloc::vec![0.2, 0.4];
        let s = LogisticSurrogate {
            z0: alloc::vec![0.0; 3],
            jl: Mat::zeros(3, q),
            targets: alloc::vec![1.0, 0.0, 1.0],
            rho,
            lambda,
            tau,
            d: d.clone(),
            anchor: anchor.clone(),
            penalty: LogisticPenalty::L2,
        };
        let w = solve_logistic(&s).unwrap();
        for i in 0..q {
            let expected = (2.0 * tau * anchor[i] - (1.0 - rho) * d[i]) / (lambda + 2.0 * tau);
            assert!((w[i] - expected).abs() < 1e-8, "{} vs {expected}", w[i]);
        }
        // same minimizer through the quadratic path with lambda halved
        // (that path's l2 convention is lambda * |w|^2)
        let ridge = RidgeSurrogate::from_parts(
            QuadPart::Dense(Mat::zeros(q, q)),
            {
                let mut b = alloc::vec![0.0; q];
                axpy(-(1.0 - rho) / 2.0, &d, &mut b);
                b
            },
            lambda / 2.0,
            tau,
            anchor.clone(),
        )
        .unwrap();
        let w_ridge = solve_ridge(&ridge).unwrap();
        for i in 0..q {
            assert!((w[i] - w_ridge[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn manifold_identical_pair_contributes_nothing() {
        let topo = Topology::new(alloc::vec![2, 3, 1]).unwrap();
        let model = MlpModel::glorot(topo, OutputHead::Identity, 5);
        // two identical points, k = 1
        let inputs = Mat::from_vec(2, 2, alloc::vec![0.1, -0.2, 0.1, -0.2]).unwrap();
        let graph = crate::objective::build_knn_graph(&inputs, 1, 1.0).unwrap();
        let batch = MiniBatch::new(
            alloc::vec![0, 1],
            inputs.clone(),
            alloc::vec![0.0, 0.0],
        )
        .unwrap();
        let terms = manifold_terms(&model, &batch, &inputs, &graph).unwrap();
        assert!(terms.quad.data().iter().all(|&v| v == 0.0));
        assert!(terms.lin.iter().all(|&v| v == 0.0));
        assert_eq!(terms.constant, 0.0);
    }
}
