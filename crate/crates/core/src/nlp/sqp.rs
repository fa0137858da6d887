//! Line-search SQP with exact Hessians and an ℓ1 merit function.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::qp::{solve_qp, LinRow, QpSolution, QpStatus};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpRow, LpStatus};
use crate::reformulate::Nlp;

/// Smallest tolerance the solver will attempt.
pub const TOL_FLOOR: f64 = 1e-10;

const MAX_RECOVERIES: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NlpStatus {
    KktPoint,
    Unbounded,
    IterLimit,
    LineSearchFail,
}

/// Multipliers for `∇f + Σ λ∇c + Σ μ∇e − lower + upper = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub ineq: Vec<f64>,
    pub eq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Multipliers {
    pub fn zeros(p: &Nlp) -> Self {
        Multipliers {
            ineq: vec![0.0; p.ineq.len()],
            eq: vec![0.0; p.eq.len()],
            lower: vec![0.0; p.num_vars],
            upper: vec![0.0; p.num_vars],
        }
    }
}

/// ∞-norm residuals of the KKT system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
    pub sign: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.feasibility)
            .max(self.complementarity)
            .max(self.sign)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

/// Gradient of the Lagrangian.
pub fn lagrangian_gradient(p: &Nlp, point: &[f64], mult: &Multipliers) -> Vec<f64> {
    let mut g = vec![0.0; p.num_vars];
    p.objective.add_grad_to(point, 1.0, &mut g);
    for (c, &l) in p.ineq.iter().zip(&mult.ineq) {
        c.func.add_grad_to(point, l, &mut g);
    }
    for (c, &l) in p.eq.iter().zip(&mult.eq) {
        c.func.add_grad_to(point, l, &mut g);
    }
    for (k, gk) in g.iter_mut().enumerate() {
        *gk += mult.upper[k] - mult.lower[k];
    }
    g
}

pub fn kkt_residual(p: &Nlp, point: &[f64], mult: &Multipliers) -> Result<KktResidual> {
    p.check_point(point)?;
    if mult.ineq.len() != p.ineq.len() {
        return Err(Error::dim(
            "inequality multipliers",
            p.ineq.len(),
            mult.ineq.len(),
        ));
    }
    if mult.eq.len() != p.eq.len() {
        return Err(Error::dim(
            "equality multipliers",
            p.eq.len(),
            mult.eq.len(),
        ));
    }
    if mult.lower.len() != p.num_vars || mult.upper.len() != p.num_vars {
        return Err(Error::dim(
            "bound multipliers",
            p.num_vars,
            mult.lower.len(),
        ));
    }
    let stationarity = lagrangian_gradient(p, point, mult)
        .iter()
        .fold(0.0, |m: f64, v| m.max(v.abs()));
    let feasibility = p.max_violation(point);
    let mut complementarity: f64 = 0.0;
    let mut sign: f64 = 0.0;
    for (c, &l) in p.ineq.iter().zip(&mult.ineq) {
        complementarity = complementarity.max((l * c.func.value(point)).abs());
        sign = sign.max(-l);
    }
    for k in 0..p.num_vars {
        let (lo, hi) = (p.lower[k], p.upper[k]);
        let (ml, mu) = (mult.lower[k], mult.upper[k]);
        if ml != 0.0 {
            complementarity = complementarity.max(if lo.is_finite() {
                (ml * (point[k] - lo)).abs()
            } else {
                ml.abs()
            });
        }
        if mu != 0.0 {
            complementarity = complementarity.max(if hi.is_finite() {
                (mu * (hi - point[k])).abs()
            } else {
                mu.abs()
            });
        }
        sign = sign.max(-ml).max(-mu);
    }
    Ok(KktResidual {
        stationarity,
        feasibility,
        complementarity,
        sign: sign.max(0.0),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct NlpOptions {
    /// Requested KKT tolerance; values below [`TOL_FLOOR`] are raised to it.
    pub tol: f64,
    pub max_iter: usize,
    /// Objective level that, reached at a nearly feasible iterate, signals
    /// unboundedness.
    pub divergence_floor: f64,
    pub divergence_feas: f64,
    /// Objective level below which iterates are projected onto the feasible
    /// set to record a [`NlpSolution::divergence_witness`].
    pub witness_level: f64,
    pub armijo: f64,
    pub min_step: f64,
}

impl Default for NlpOptions {
    fn default() -> Self {
        NlpOptions {
            tol: 1e-8,
            max_iter: 200,
            divergence_floor: -1e8,
            divergence_feas: 1e-3,
            witness_level: -1e6,
            armijo: 1e-4,
            min_step: 1e-12,
        }
    }
}

/// One accepted (or final rejected) SQP step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub objective: f64,
    pub violation: f64,
    pub penalty: f64,
    pub merit_before: f64,
    pub merit_after: f64,
    pub step: f64,
    pub alpha: f64,
    pub shift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlpSolution {
    pub status: NlpStatus,
    pub point: Vec<f64>,
    pub objective: f64,
    pub multipliers: Multipliers,
    pub kkt: KktResidual,
    pub iterations: usize,
    /// Tolerance as requested by the caller.
    pub requested_tol: f64,
    /// Tolerance actually used.
    pub tol: f64,
    pub trace: Vec<TraceEntry>,
    /// First restored iterate with objective below `witness_level` and
    /// absolute violation at most `divergence_feas`.
    pub divergence_witness: Option<Vec<f64>>,
}

pub fn solve_nlp(p: &Nlp, start: &[f64], tol: f64) -> Result<NlpSolution> {
    solve_nlp_with(
        p,
        start,
        &NlpOptions {
            tol,
            ..NlpOptions::default()
        },
    )
}

struct Eval {
    f: f64,
    grad: Vec<f64>,
    c: Vec<f64>,
    e: Vec<f64>,
    jc: Vec<Vec<f64>>,
    je: Vec<Vec<f64>>,
}

fn evaluate(p: &Nlp, w: &[f64]) -> Eval {
    let n = p.num_vars;
    let grad_of = |f: &crate::poly::PolyFunction| {
        let mut g = vec![0.0; n];
        f.add_grad_to(w, 1.0, &mut g);
        g
    };
    Eval {
        f: p.objective.value(w),
        grad: grad_of(&p.objective),
        c: p.ineq.iter().map(|c| c.func.value(w)).collect(),
        e: p.eq.iter().map(|c| c.func.value(w)).collect(),
        jc: p.ineq.iter().map(|c| grad_of(&c.func)).collect(),
        je: p.eq.iter().map(|c| grad_of(&c.func)).collect(),
    }
}

/// Weighted ℓ1 violation with one weight per inequality row, then per
/// equality row.
fn weighted_violation(c: &[f64], e: &[f64], rho: &[f64]) -> f64 {
    let (ri, re) = rho.split_at(c.len());
    c.iter().zip(ri).map(|(v, r)| r * v.max(0.0)).sum::<f64>()
        + e.iter().zip(re).map(|(v, r)| r * v.abs()).sum::<f64>()
}

fn merit(p: &Nlp, w: &[f64], rho: &[f64]) -> f64 {
    let f = p.objective.value(w);
    let c: Vec<f64> = p.ineq.iter().map(|c| c.func.value(w)).collect();
    let e: Vec<f64> = p.eq.iter().map(|c| c.func.value(w)).collect();
    let v = f + weighted_violation(&c, &e, rho);
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// The linearized subproblem at one iterate.
struct Subproblem {
    g: DMatrix<f64>,
    grad: Vec<f64>,
    /// Rows `−∇c_i·d ≥ c_i − shift_i`.
    ineq_rows: Vec<LinRow>,
    /// Rows `∇e_j·d = −e_j + shift_j`.
    eq_rows: Vec<LinRow>,
    /// Each row is divided by its largest coefficient; these are the divisors.
    ineq_scale: Vec<f64>,
    eq_scale: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Subproblem {
    fn solve(&self) -> QpSolution {
        let n = self.grad.len();
        let mut ineq = self.ineq_rows.clone();
        for k in 0..n {
            if self.lo[k].is_finite() {
                let mut a = vec![0.0; n];
                a[k] = 1.0;
                ineq.push(LinRow::new(a, self.lo[k]));
            }
            if self.hi[k].is_finite() {
                let mut a = vec![0.0; n];
                a[k] = -1.0;
                ineq.push(LinRow::new(a, -self.hi[k]));
            }
        }
        solve_qp(&self.g, &self.grad, &self.eq_rows, &ineq)
    }

    /// Minimizes the ℓ1 violation of the linearization over the box; returns
    /// the per-row violations that remain.
    fn elastic_shifts(&self) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let n = self.grad.len();
        let ni = self.ineq_rows.len();
        let ne = self.eq_rows.len();
        let nv = n + ni + 2 * ne;
        let mut c = vec![0.0; nv];
        for v in &mut c[n..] {
            *v = 1.0;
        }
        let mut lp = LpProblem::new(c);
        lp.lower[..n].copy_from_slice(&self.lo);
        lp.upper[..n].copy_from_slice(&self.hi);
        for v in &mut lp.lower[n..] {
            *v = 0.0;
        }
        for (i, row) in self.ineq_rows.iter().enumerate() {
            // a·d ≥ b − s  ⇔  −a·d − s ≤ −b
            let mut a: Vec<f64> = row.a.iter().map(|v| -v).collect();
            a.resize(nv, 0.0);
            a[n + i] = -1.0;
            lp.push(LpRow::le(a, -row.b));
        }
        for (j, row) in self.eq_rows.iter().enumerate() {
            let mut a = row.a.clone();
            a.resize(nv, 0.0);
            a[n + ni + 2 * j] = -1.0;
            a[n + ni + 2 * j + 1] = 1.0;
            lp.push(LpRow::eq(a, row.b));
        }
        let sol = solve_lp(&lp).ok()?;
        if sol.status != LpStatus::Optimal {
            return None;
        }
        let si = sol.x[n..n + ni].iter().map(|v| v.max(0.0)).collect();
        let se = (0..ne)
            .map(|j| sol.x[n + ni + 2 * j] - sol.x[n + ni + 2 * j + 1])
            .collect();
        Some((si, se, sol.objective.max(0.0)))
    }
}

/// Lagrangian Hessian made positive definite for the subproblem.
///
/// The shift `τ` is zero when the Hessian reduced to the null space of the
/// working-set gradients is positive definite and otherwise mirrors its most
/// negative eigenvalue; the
/// remaining directions are convexified with `σ JᵀJ`, which leaves the
/// equality-constrained subproblem unchanged. Falls back to a full shift of
/// the Hessian when no moderate `σ` works. Returns the matrix and `τ`.
fn convexified_hessian(
    p: &Nlp,
    w: &[f64],
    mult: &Multipliers,
    working: &[Vec<f64>],
    scale: &[f64],
) -> (DMatrix<f64>, f64, DMatrix<f64>) {
    let n = p.num_vars;
    let floor = 1e-8;
    let mut h = DMatrix::zeros(n, n);
    p.objective.add_hess_to(w, 1.0, &mut h);
    for (c, &l) in p.ineq.iter().zip(&mult.ineq) {
        c.func.add_hess_to(w, l, &mut h);
    }
    for (c, &l) in p.eq.iter().zip(&mult.eq) {
        c.func.add_hess_to(w, l, &mut h);
    }
    if h.iter().any(|v| !v.is_finite()) {
        return (DMatrix::identity(n, n), 1.0, DMatrix::identity(n, n));
    }
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] *= scale[i] * scale[j];
        }
    }
    let shifted = |m: &DMatrix<f64>, by: f64| {
        let mut out = m.clone();
        for k in 0..n {
            out[(k, k)] += by;
        }
        out
    };
    if Cholesky::new(shifted(&h, -floor)).is_some() {
        return (h.clone(), 0.0, h);
    }

    let rows: Vec<&Vec<f64>> = working.iter().filter(|r| norm_inf(r) > 0.0).collect();
    if !rows.is_empty() && rows.len() < 4 * n {
        let mut j = DMatrix::zeros(rows.len(), n);
        for (i, r) in rows.iter().enumerate() {
            let norm = r
                .iter()
                .zip(scale)
                .map(|(v, s)| (v * s).powi(2))
                .sum::<f64>()
                .sqrt();
            for k in 0..n {
                j[(i, k)] = r[k] * scale[k] / norm;
            }
        }
        let jtj = j.transpose() * &j;
        let eig = SymmetricEigen::new(jtj.clone());
        let null: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] <= 1e-10).collect();
        let tau = if null.is_empty() {
            0.0
        } else {
            let z = DMatrix::from_fn(n, null.len(), |r, c| eig.eigenvectors[(r, null[c])]);
            let reduced = z.transpose() * &h * &z;
            let red_min = SymmetricEigen::new(reduced)
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |m, &v| m.min(v));
            if red_min > 0.0 {
                0.0
            } else {
                -2.0 * red_min + 1e-14 * (1.0 + h.amax())
            }
        };
        let base = shifted(&h, tau);
        let mut sigma = 1.0 + h.amax();
        for _ in 0..9 {
            let g = &base + &jtj * sigma;
            if Cholesky::new(g.clone()).is_some() {
                return (g, tau, h);
            }
            sigma *= 10.0;
        }
    }

    let (g, tau) = full_shift(&h, floor);
    (g, tau, h)
}

/// `h + τI` with `τ` lifting the smallest eigenvalue of `h` to `floor`.
fn full_shift(h: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, f64) {
    let min_eig = SymmetricEigen::new(h.clone())
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v));
    let tau = if min_eig.is_finite() {
        (floor - min_eig).max(0.0)
    } else {
        1.0
    };
    let mut g = h.clone();
    for k in 0..h.nrows() {
        g[(k, k)] += tau;
    }
    (g, tau)
}

/// Gradients of the equality rows, the nearly active inequality rows and the
/// active bounds at `w`.
fn working_set(p: &Nlp, w: &[f64], ev: &Eval) -> Vec<Vec<f64>> {
    let n = p.num_vars;
    let mut rows: Vec<Vec<f64>> = ev.je.clone();
    for (a, &c) in ev.jc.iter().zip(&ev.c) {
        if c >= -1e-6 {
            rows.push(a.clone());
        }
    }
    for k in 0..n {
        if w[k] <= p.lower[k] || w[k] >= p.upper[k] {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            rows.push(e);
        }
    }
    rows
}

pub fn solve_nlp_with(p: &Nlp, start: &[f64], opts: &NlpOptions) -> Result<NlpSolution> {
    p.check_point(start)?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("NLP start point".into()));
    }
    let tol = opts.tol.max(TOL_FLOOR);
    let n = p.num_vars;
    let mut w: Vec<f64> = start
        .iter()
        .zip(p.lower.iter().zip(&p.upper))
        .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
        .collect();
    let mut mult = Multipliers::zeros(p);
    let mut rho = vec![1.0; p.ineq.len() + p.eq.len()];
    // Box trust region, relative to the magnitude of each coordinate.
    let mut radius: f64 = 1e2;
    // Consecutive failed line searches answered by a smaller box or a
    // restoration step.
    let mut recoveries = 0;
    let mut trace = Vec::new();
    let mut witness: Option<Vec<f64>> = None;

    let finish = |status,
                  w: Vec<f64>,
                  mult: Multipliers,
                  iterations,
                  trace,
                  witness|
     -> Result<NlpSolution> {
        let kkt = kkt_residual(p, &w, &mult)?;
        Ok(NlpSolution {
            status,
            objective: p.objective.value(&w),
            point: w,
            multipliers: mult,
            kkt,
            iterations,
            requested_tol: opts.tol,
            tol,
            trace,
            divergence_witness: witness,
        })
    };

    for iter in 0..opts.max_iter {
        let ev = evaluate(p, &w);
        if !ev.f.is_finite() {
            return finish(NlpStatus::LineSearchFail, w, mult, iter, trace, witness);
        }
        let viol = p.max_violation(&w);
        if witness.is_none() && ev.f < opts.witness_level {
            witness = restore(p, &w, opts.divergence_feas)
                .filter(|r| p.objective.value(r) < opts.witness_level);
        }
        if ev.f < opts.divergence_floor && p.scaled_violation(&w) <= opts.divergence_feas {
            return finish(NlpStatus::Unbounded, w, mult, iter, trace, witness);
        }

        // The subproblem is posed in the variables d / scale.
        let scale: Vec<f64> = w.iter().map(|v| v.abs().max(1.0)).collect();
        let scaled = |a: &[f64], sign: f64| -> Vec<f64> {
            a.iter().zip(&scale).map(|(v, s)| sign * v * s).collect()
        };
        let (g, mut shift, h_scaled) =
            convexified_hessian(p, &w, &mult, &working_set(p, &w, &ev), &scale);
        let boxw: Vec<f64> = w.iter().map(|v| radius * (1.0 + v.abs())).collect();
        let lo: Vec<f64> = (0..n)
            .map(|k| (p.lower[k] - w[k]).max(-boxw[k]) / scale[k])
            .collect();
        let hi: Vec<f64> = (0..n)
            .map(|k| (p.upper[k] - w[k]).min(boxw[k]) / scale[k])
            .collect();
        let normalized = |a: Vec<f64>, b: f64| -> (LinRow, f64) {
            let k = norm_inf(&a);
            let k = if k > 0.0 { k } else { 1.0 };
            (LinRow::new(a.iter().map(|v| v / k).collect(), b / k), k)
        };
        let (ineq_rows, ineq_scale): (Vec<_>, Vec<_>) = ev
            .jc
            .iter()
            .zip(&ev.c)
            .map(|(a, &c)| normalized(scaled(a, -1.0), c))
            .unzip();
        let (eq_rows, eq_scale): (Vec<_>, Vec<_>) = ev
            .je
            .iter()
            .zip(&ev.e)
            .map(|(a, &e)| normalized(scaled(a, 1.0), -e))
            .unzip();
        let mut sub = Subproblem {
            g,
            grad: scaled(&ev.grad, 1.0),
            ineq_rows,
            eq_rows,
            ineq_scale,
            eq_scale,
            lo,
            hi,
        };

        let mut qp = sub.solve();
        if qp.status == QpStatus::Failure {
            // Numerical trouble in the dual active-set method: fall back to a
            // well-conditioned full shift.
            let (g, tau) = full_shift(&h_scaled, 1e-8 * (1.0 + h_scaled.amax()));
            sub.g = g;
            shift = tau;
            qp = sub.solve();
        }
        if qp.status != QpStatus::Optimal {
            if let Some((si, se, _)) = sub.elastic_shifts() {
                for (row, s) in sub.ineq_rows.iter_mut().zip(&si) {
                    row.b -= s + 1e-12 * (1.0 + row.b.abs());
                }
                for (row, s) in sub.eq_rows.iter_mut().zip(&se) {
                    row.b += s;
                }
                qp = sub.solve();
            }
        }
        if qp.status != QpStatus::Optimal {
            // The dual active-set method can misjudge a consistent system
            // when G is badly conditioned; regularize and retry.
            let g0 = sub.g.clone();
            let big = g0.amax().max(1.0);
            for delta in [1e-6 * big, 1e-3 * big, big] {
                sub.g = &g0 + DMatrix::identity(n, n) * delta;
                qp = sub.solve();
                if qp.status == QpStatus::Optimal {
                    shift += delta;
                    break;
                }
            }
        }
        if qp.status != QpStatus::Optimal {
            return finish(NlpStatus::LineSearchFail, w, mult, iter, trace, witness);
        }
        let d: Vec<f64> = qp.x.iter().zip(&scale).map(|(v, s)| v * s).collect();

        // Multipliers of the subproblem; box rows count only where they are
        // the true variable bounds.
        let ni = p.ineq.len();
        let mut new_mult = Multipliers {
            ineq: qp.ineq_mult[..ni]
                .iter()
                .zip(&sub.ineq_scale)
                .map(|(v, k)| v / k)
                .collect(),
            eq: qp
                .eq_mult
                .iter()
                .zip(&sub.eq_scale)
                .map(|(v, k)| -v / k)
                .collect(),
            lower: vec![0.0; n],
            upper: vec![0.0; n],
        };
        let mut k_row = ni;
        for k in 0..n {
            if sub.lo[k].is_finite() {
                if p.lower[k] - w[k] >= -boxw[k] {
                    new_mult.lower[k] = qp.ineq_mult[k_row] / scale[k];
                }
                k_row += 1;
            }
            if sub.hi[k].is_finite() {
                if p.upper[k] - w[k] <= boxw[k] {
                    new_mult.upper[k] = qp.ineq_mult[k_row] / scale[k];
                }
                k_row += 1;
            }
        }

        let res = kkt_residual(p, &w, &new_mult)?;
        if res.within(tol) {
            return finish(NlpStatus::KktPoint, w, new_mult, iter, trace, witness);
        }

        // Per-row weights, allowed to decrease (Powell's rule).
        for (r, l) in rho.iter_mut().zip(new_mult.ineq.iter().chain(&new_mult.eq)) {
            let need = 1.1 * l.abs() + 1e-12;
            *r = need.max(0.5 * (*r + need));
        }
        let v0 = weighted_violation(&ev.c, &ev.e, &rho);
        let phi0 = ev.f + v0;
        let lin_c: Vec<f64> =
            ev.c.iter()
                .zip(&ev.jc)
                .map(|(c, a)| c + dot(a, &d))
                .collect();
        let lin_e: Vec<f64> =
            ev.e.iter()
                .zip(&ev.je)
                .map(|(e, a)| e + dot(a, &d))
                .collect();
        let slope = dot(&ev.grad, &d) + weighted_violation(&lin_c, &lin_e, &rho) - v0;
        let dnorm = norm_inf(&d);

        let accept = |phi: f64, alpha: f64| {
            phi.is_finite()
                && phi <= phi0 + opts.armijo * alpha * slope.min(0.0) + 1e-15 * phi0.abs()
        };

        let mut alpha = 1.0;
        let mut step_to: Option<Vec<f64>> = None;
        let trial = |w: &[f64], d: &[f64], a: f64| -> Vec<f64> {
            w.iter()
                .zip(d)
                .zip(p.lower.iter().zip(&p.upper))
                .map(|((wi, di), (&lo, &hi))| (wi + a * di).clamp(lo, hi))
                .collect()
        };
        let full = trial(&w, &d, 1.0);
        let phi_full = merit(p, &full, &rho);
        if accept(phi_full, 1.0) {
            step_to = Some(full);
        } else if let Some(wc) = second_order_correction(p, &w, &qp.x, &scale, &sub) {
            let phi_c = merit(p, &wc, &rho);
            if accept(phi_c, 1.0) {
                step_to = Some(wc);
            }
        }
        if step_to.is_none() {
            alpha = 0.5;
            while alpha * dnorm > opts.min_step * (1.0 + norm_inf(&w)) && alpha > 1e-20 {
                let wt = trial(&w, &d, alpha);
                if accept(merit(p, &wt, &rho), alpha) {
                    step_to = Some(wt);
                    break;
                }
                alpha *= 0.5;
            }
        }
        let scaled_d = d
            .iter()
            .zip(&boxw)
            .fold(0.0, |m: f64, (di, b)| m.max(di.abs() / b))
            * radius;
        if step_to.is_none() && recoveries < MAX_RECOVERIES {
            recoveries += 1;
            if scaled_d > 1e-8 && recoveries <= MAX_RECOVERIES / 2 {
                radius = (0.1 * scaled_d.min(radius)).max(1e-10);
                continue;
            }
            if viol > tol {
                let projected = project(p, &w, 0.0);
                if p.max_violation(&projected) < 0.5 * viol {
                    w = projected;
                    radius = radius.max(1e-3);
                    continue;
                }
            }
        }
        let Some(next) = step_to else {
            trace.push(TraceEntry {
                iter,
                objective: ev.f,
                violation: viol,
                penalty: norm_inf(&rho),
                merit_before: phi0,
                merit_after: phi0,
                step: 0.0,
                alpha: 0.0,
                shift,
            });
            return finish(NlpStatus::LineSearchFail, w, new_mult, iter, trace, witness);
        };
        let merit_after = merit(p, &next, &rho);
        let step = next
            .iter()
            .zip(&w)
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
        trace.push(TraceEntry {
            iter,
            objective: ev.f,
            violation: viol,
            penalty: norm_inf(&rho),
            merit_before: phi0,
            merit_after,
            step,
            alpha,
            shift,
        });
        recoveries = 0;
        let hit_box = scaled_d >= 0.99 * radius;
        if alpha >= 1.0 && hit_box {
            radius = (radius * 4.0).min(1e12);
        } else if alpha < 1.0 {
            radius = (2.0 * alpha * scaled_d).max(1e-3);
        }
        w = next;
        mult = new_mult;
    }
    finish(NlpStatus::IterLimit, w, mult, opts.max_iter, trace, witness)
}

/// [`project`] from `start`, kept only if it ends within `tol`.
fn restore(p: &Nlp, start: &[f64], tol: f64) -> Option<Vec<f64>> {
    let w = project(p, start, 1e-3 * tol);
    (p.max_violation(&w) <= tol).then_some(w)
}

/// Gauss-Newton projection onto the constraints: minimum-norm corrections on
/// the equality rows and the violated inequality rows, clipped to the bounds.
/// Stops at violation `target` or when a correction stops helping.
fn project(p: &Nlp, start: &[f64], target: f64) -> Vec<f64> {
    let mut w = start.to_vec();
    for _ in 0..30 {
        let viol = p.max_violation(&w);
        if viol <= target {
            break;
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        for c in &p.eq {
            let Ok(g) = c.func.grad(&w) else { return w };
            rows.push(g);
            rhs.push(-c.func.value(&w));
        }
        for c in &p.ineq {
            let v = c.func.value(&w);
            if v > 0.0 {
                let Ok(g) = c.func.grad(&w) else { return w };
                rows.push(g);
                rhs.push(-v);
            }
        }
        if rows.is_empty() {
            break;
        }
        let r = rows.len();
        let mut gram = DMatrix::zeros(r, r);
        for i in 0..r {
            for j in 0..=i {
                let v: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let ridge = 1e-14 * (0..r).map(|i| gram[(i, i)]).fold(1.0, f64::max);
        for i in 0..r {
            gram[(i, i)] += ridge;
        }
        let Some(chol) = gram.cholesky() else { break };
        let y = chol.solve(&DVector::from_vec(rhs));
        let mut next = w.clone();
        for (row, yi) in rows.iter().zip(y.iter()) {
            for (wk, a) in next.iter_mut().zip(row) {
                *wk += yi * a;
            }
        }
        for (k, v) in next.iter_mut().enumerate() {
            *v = v.clamp(p.lower[k], p.upper[k]);
        }
        if !(p.max_violation(&next) < viol) {
            break;
        }
        w = next;
    }
    w
}

/// Re-solves the subproblem with constraint values taken at `w + d`; `d_scaled`
/// is the step in scaled variables.
fn second_order_correction(
    p: &Nlp,
    w: &[f64],
    d: &[f64],
    scale: &[f64],
    sub: &Subproblem,
) -> Option<Vec<f64>> {
    let wd: Vec<f64> = w
        .iter()
        .zip(d.iter().zip(scale))
        .map(|(a, (b, s))| a + b * s)
        .collect();
    let mut soc = Subproblem {
        g: sub.g.clone(),
        grad: sub.grad.clone(),
        ineq_rows: sub.ineq_rows.clone(),
        eq_rows: sub.eq_rows.clone(),
        ineq_scale: sub.ineq_scale.clone(),
        eq_scale: sub.eq_scale.clone(),
        lo: sub.lo.clone(),
        hi: sub.hi.clone(),
    };
    for ((row, c), k) in soc.ineq_rows.iter_mut().zip(&p.ineq).zip(&sub.ineq_scale) {
        // −a·d̂ ≥ c(w+d) − (−a)·d
        row.b = c.func.value(&wd) / k + dot(&row.a, d);
    }
    for ((row, c), k) in soc.eq_rows.iter_mut().zip(&p.eq).zip(&sub.eq_scale) {
        row.b = -(c.func.value(&wd) / k - dot(&row.a, d));
    }
    let qp = soc.solve();
    if qp.status != QpStatus::Optimal {
        return None;
    }
    Some(
        w.iter()
            .zip(qp.x.iter().zip(scale))
            .zip(p.lower.iter().zip(&p.upper))
            .map(|((wi, (di, s)), (&lo, &hi))| (wi + di * s).clamp(lo, hi))
            .collect(),
    )
}
