//! Dense bounded revised simplex.
//!
//! Every row `a·x (≤|=|≥) b` receives a slack `s` with `a·x + s = b`, whose
//! bounds encode the relation. Phase 1 adds signed artificials only on rows
//! the initial slack cannot absorb. The basis inverse is kept explicitly and
//! refactorized periodically.
//!
//! Dual convention: row duals `y` satisfy `reduced_cost = c − Aᵀy`, so for a
//! minimization a binding `≤` row has `y ≤ 0`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpRow {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LpRow {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        LpRow {
            coeffs,
            relation,
            rhs,
        }
    }

    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self::new(coeffs, Relation::Le, rhs)
    }

    pub fn eq(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self::new(coeffs, Relation::Eq, rhs)
    }

    pub fn ge(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self::new(coeffs, Relation::Ge, rhs)
    }

    fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let r = self.activity(x) - self.rhs;
        match self.relation {
            Relation::Le => r.max(0.0),
            Relation::Ge => (-r).max(0.0),
            Relation::Eq => r.abs(),
        }
    }

    fn slack_bounds(&self) -> (f64, f64) {
        match self.relation {
            Relation::Le => (0.0, f64::INFINITY),
            Relation::Ge => (f64::NEG_INFINITY, 0.0),
            Relation::Eq => (0.0, 0.0),
        }
    }
}

/// `min cᵀx` subject to rows and `lower ≤ x ≤ upper`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    /// Problem with all variables free and no rows.
    pub fn new(c: Vec<f64>) -> Self {
        let n = c.len();
        LpProblem {
            c,
            rows: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn push(&mut self, row: LpRow) {
        self.rows.push(row);
    }

    fn validate(&self) -> Result<()> {
        let n = self.c.len();
        if n == 0 {
            return Err(Error::InvalidParameter(
                "LP needs at least one variable".into(),
            ));
        }
        if self.lower.len() != n {
            return Err(Error::dim("LP lower bounds", n, self.lower.len()));
        }
        if self.upper.len() != n {
            return Err(Error::dim("LP upper bounds", n, self.upper.len()));
        }
        if self.c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LP objective".into()));
        }
        for (j, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(Error::NonFinite(format!("LP bound of variable {j}")));
            }
            if lo > hi {
                return Err(Error::InvalidParameter(format!(
                    "LP bounds of variable {j} are inverted: {lo} > {hi}"
                )));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(Error::dim(format!("LP row {i}"), n, row.coeffs.len()));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("LP row {i}")));
            }
        }
        Ok(())
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Dual objective `yᵀb + Σ_j (lo_j max(d_j,0) + hi_j min(d_j,0))` with
    /// `d = c − Aᵀy`. Returns `-∞` when `y` is not dual feasible for an
    /// unbounded side.
    pub fn dual_objective(&self, y: &[f64]) -> f64 {
        let mut d = self.c.clone();
        for (row, &yi) in self.rows.iter().zip(y) {
            for (dj, a) in d.iter_mut().zip(&row.coeffs) {
                *dj -= a * yi;
            }
        }
        let mut value: f64 = self.rows.iter().zip(y).map(|(r, yi)| r.rhs * yi).sum();
        value += bound_terms(&d, &self.lower, &self.upper, 1e-9);
        for (row, &yi) in self.rows.iter().zip(y) {
            let (lo, hi) = row.slack_bounds();
            value += bound_terms(&[-yi], &[lo], &[hi], 1e-9);
        }
        value
    }
}

/// `Σ min over [lo, hi] of d_j w_j`, with `|d_j| ≤ zero_tol` treated as zero.
fn bound_terms(d: &[f64], lower: &[f64], upper: &[f64], zero_tol: f64) -> f64 {
    let mut total = 0.0;
    for ((&dj, &lo), &hi) in d.iter().zip(lower).zip(upper) {
        if dj > zero_tol {
            total += if lo.is_finite() {
                lo * dj
            } else {
                f64::NEG_INFINITY
            };
        } else if dj < -zero_tol {
            total += if hi.is_finite() {
                hi * dj
            } else {
                f64::NEG_INFINITY
            };
        }
    }
    total
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpOptions {
    pub feas_tol: f64,
    pub pivot_tol: f64,
    pub opt_tol: f64,
    /// Degenerate pivots tolerated before switching to Bland's rule.
    pub bland_after: usize,
    pub refactor_every: usize,
    pub max_iter: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            feas_tol: 1e-9,
            pivot_tol: 1e-10,
            opt_tol: 1e-9,
            bland_after: 1000,
            refactor_every: 50,
            max_iter: 50_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Row duals, `c − Aᵀy` convention.
    pub duals: Vec<f64>,
    /// `c − Aᵀy` for the structural variables.
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Farkas-style proof that a system has no solution.
///
/// For every `w` within the bounds, `yᵀ(Aw + s) ≤ −Σ min(d_j w_j)`, yet the
/// rows require `yᵀ(Aw + s) = yᵀb`; a positive `margin` is the contradiction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarkasCertificate {
    pub y: Vec<f64>,
    pub margin: f64,
}

impl FarkasCertificate {
    /// Recomputes the margin from the raw data.
    pub fn recompute_margin(&self, rows: &[LpRow], lower: &[f64], upper: &[f64]) -> f64 {
        let p = LpProblem {
            c: vec![0.0; lower.len()],
            rows: rows.to_vec(),
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        };
        p.dual_objective(&self.y)
    }

    pub fn verify(&self, rows: &[LpRow], lower: &[f64], upper: &[f64], tol: f64) -> bool {
        let m = self.recompute_margin(rows, lower, upper);
        m.is_finite() && m > tol
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    Infeasible(FarkasCertificate),
    NumericalFailure,
}

pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    solve_lp_with(p, &LpOptions::default())
}

pub fn solve_lp_with(p: &LpProblem, opts: &LpOptions) -> Result<LpSolution> {
    p.validate()?;
    let n = p.num_vars();
    let mut s = Simplex::new(p, opts);
    let fail = |iterations| LpSolution {
        status: LpStatus::NumericalFailure,
        x: vec![f64::NAN; n],
        duals: vec![f64::NAN; p.rows.len()],
        reduced_costs: vec![f64::NAN; n],
        objective: f64::NAN,
        iterations,
    };

    match s.phase_one() {
        PhaseOneResult::Feasible => {}
        PhaseOneResult::Infeasible(_) => {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: s.x[..n].to_vec(),
                duals: vec![0.0; p.rows.len()],
                reduced_costs: vec![0.0; n],
                objective: f64::NAN,
                iterations: s.iterations,
            })
        }
        PhaseOneResult::Failure => return Ok(fail(s.iterations)),
    }

    let mut cost = vec![0.0; s.ncols];
    cost[..n].copy_from_slice(&p.c);
    match s.run(&cost) {
        Outcome::Optimal => {}
        Outcome::Unbounded => {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                x: s.x[..n].to_vec(),
                duals: vec![0.0; p.rows.len()],
                reduced_costs: vec![0.0; n],
                objective: f64::NEG_INFINITY,
                iterations: s.iterations,
            })
        }
        Outcome::Failure => return Ok(fail(s.iterations)),
    }
    let y = s.duals(&cost);
    let reduced_costs = (0..n).map(|j| cost[j] - s.dot_col(&y, j)).collect();
    let x = s.x[..n].to_vec();
    let objective = p.c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        duals: y,
        reduced_costs,
        objective,
        iterations: s.iterations,
    })
}

/// Phase 1 only: any point satisfying `rows` and the bounds, or a certificate
/// that none exists.
pub fn feasible_point(rows: &[LpRow], lower: &[f64], upper: &[f64]) -> Result<Feasibility> {
    let p = LpProblem {
        c: vec![0.0; lower.len()],
        rows: rows.to_vec(),
        lower: lower.to_vec(),
        upper: upper.to_vec(),
    };
    p.validate()?;
    let opts = LpOptions::default();
    let mut s = Simplex::new(&p, &opts);
    Ok(match s.phase_one() {
        PhaseOneResult::Feasible => Feasibility::Feasible(s.x[..p.num_vars()].to_vec()),
        PhaseOneResult::Infeasible(y) => {
            let mut cert = FarkasCertificate { y, margin: 0.0 };
            cert.margin = cert.recompute_margin(rows, lower, upper);
            Feasibility::Infeasible(cert)
        }
        PhaseOneResult::Failure => Feasibility::NumericalFailure,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Zero,
}

enum Outcome {
    Optimal,
    Unbounded,
    Failure,
}

enum PhaseOneResult {
    Feasible,
    Infeasible(Vec<f64>),
    Failure,
}

struct Simplex<'a> {
    opts: &'a LpOptions,
    m: usize,
    ncols: usize,
    /// Dense columns of `[A | I | artificials]`.
    cols: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    artificials: Vec<usize>,
    iterations: usize,
}

impl<'a> Simplex<'a> {
    fn new(p: &LpProblem, opts: &'a LpOptions) -> Self {
        let n = p.num_vars();
        let m = p.rows.len();
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|j| p.rows.iter().map(|r| r.coeffs[j]).collect())
            .collect();
        let mut lo = p.lower.clone();
        let mut hi = p.upper.clone();
        let mut x = vec![0.0; n];
        let mut state = vec![VarState::Zero; n];
        for j in 0..n {
            if lo[j].is_finite() {
                x[j] = lo[j];
                state[j] = VarState::AtLower;
            } else if hi[j].is_finite() {
                x[j] = hi[j];
                state[j] = VarState::AtUpper;
            }
        }
        let rhs: Vec<f64> = p.rows.iter().map(|r| r.rhs).collect();
        let mut basis = Vec::with_capacity(m);
        let mut art_rows = Vec::new();
        for (i, row) in p.rows.iter().enumerate() {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            cols.push(e);
            let (slo, shi) = row.slack_bounds();
            lo.push(slo);
            hi.push(shi);
            let res = row.rhs - row.activity(&x);
            if res >= slo && res <= shi {
                x.push(res);
                state.push(VarState::Basic);
                basis.push(n + i);
            } else {
                let at = if slo.is_finite() { slo } else { shi };
                x.push(at);
                state.push(if at == slo {
                    VarState::AtLower
                } else {
                    VarState::AtUpper
                });
                basis.push(usize::MAX);
                art_rows.push((i, res - at));
            }
        }
        let mut artificials = Vec::new();
        for (i, r) in art_rows {
            let sign = if r >= 0.0 { 1.0 } else { -1.0 };
            let mut e = vec![0.0; m];
            e[i] = sign;
            let j = cols.len();
            cols.push(e);
            lo.push(0.0);
            hi.push(f64::INFINITY);
            x.push(r.abs());
            state.push(VarState::Basic);
            basis[i] = j;
            artificials.push(j);
        }
        let ncols = cols.len();
        let mut binv = DMatrix::identity(m, m);
        for &j in &artificials {
            let i = cols[j].iter().position(|&v| v != 0.0).unwrap_or(0);
            binv[(i, i)] = cols[j][i];
        }
        Simplex {
            opts,
            m,
            ncols,
            cols,
            rhs,
            lo,
            hi,
            x,
            state,
            basis,
            binv,
            artificials,
            iterations: 0,
        }
    }

    fn phase_one(&mut self) -> PhaseOneResult {
        if self.artificials.is_empty() {
            return PhaseOneResult::Feasible;
        }
        let mut cost = vec![0.0; self.ncols];
        for &j in &self.artificials {
            cost[j] = 1.0;
        }
        match self.run(&cost) {
            Outcome::Optimal => {}
            Outcome::Unbounded | Outcome::Failure => return PhaseOneResult::Failure,
        }
        let infeas: f64 = self.artificials.iter().map(|&j| self.x[j]).sum();
        let scale = self.rhs.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        if infeas > self.opts.feas_tol * scale {
            return PhaseOneResult::Infeasible(self.duals(&cost));
        }
        for &j in &self.artificials.clone() {
            self.hi[j] = 0.0;
            if self.state[j] != VarState::Basic {
                self.x[j] = 0.0;
                self.state[j] = VarState::AtLower;
            }
        }
        PhaseOneResult::Feasible
    }

    fn dot_col(&self, y: &[f64], j: usize) -> f64 {
        self.cols[j].iter().zip(y).map(|(a, b)| a * b).sum()
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for (k, &bj) in self.basis.iter().enumerate() {
            let cb = cost[bj];
            if cb != 0.0 {
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi += cb * self.binv[(k, i)];
                }
            }
        }
        y
    }

    fn refactor(&mut self) -> bool {
        let m = self.m;
        if m == 0 {
            return true;
        }
        let mut b = DMatrix::zeros(m, m);
        for (k, &j) in self.basis.iter().enumerate() {
            for i in 0..m {
                b[(i, k)] = self.cols[j][i];
            }
        }
        match b.try_inverse() {
            Some(inv) if inv.iter().all(|v| v.is_finite()) => {
                self.binv = inv;
                true
            }
            _ => false,
        }
    }

    fn recompute_basic_values(&mut self) {
        let mut r = self.rhs.clone();
        for j in 0..self.ncols {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                for (ri, a) in r.iter_mut().zip(&self.cols[j]) {
                    *ri -= a * self.x[j];
                }
            }
        }
        for k in 0..self.m {
            let v: f64 = (0..self.m).map(|i| self.binv[(k, i)] * r[i]).sum();
            self.x[self.basis[k]] = v;
        }
    }

    fn run(&mut self, cost: &[f64]) -> Outcome {
        let opts = self.opts;
        let mut degenerate = 0usize;
        let mut bland = false;
        let mut since_refactor = 0usize;
        let mut alpha = vec![0.0; self.m];
        loop {
            if since_refactor >= opts.refactor_every {
                if !self.refactor() {
                    return Outcome::Failure;
                }
                self.recompute_basic_values();
                since_refactor = 0;
            }
            if self.iterations >= opts.max_iter {
                return Outcome::Failure;
            }
            let y = self.duals(cost);

            // Pricing.
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.ncols {
                let st = self.state[j];
                if st == VarState::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let d = cost[j] - self.dot_col(&y, j);
                let eligible = match st {
                    VarState::AtLower => d < -opts.opt_tol,
                    VarState::AtUpper => d > opts.opt_tol,
                    VarState::Zero => d.abs() > opts.opt_tol,
                    VarState::Basic => false,
                };
                if !eligible {
                    continue;
                }
                match entering {
                    None => entering = Some((j, d)),
                    Some((_, best)) if !bland && d.abs() > best.abs() => entering = Some((j, d)),
                    _ => {}
                }
                if bland {
                    break;
                }
            }
            let Some((q, dq)) = entering else {
                if !self.refactor() {
                    return Outcome::Failure;
                }
                self.recompute_basic_values();
                return Outcome::Optimal;
            };
            let dir = if dq < 0.0 { 1.0 } else { -1.0 };

            for (k, a) in alpha.iter_mut().enumerate() {
                *a = (0..self.m)
                    .map(|i| self.binv[(k, i)] * self.cols[q][i])
                    .sum();
            }

            // Ratio test: basic k moves at rate −dir·alpha_k.
            let mut theta = f64::INFINITY;
            let mut leave: Option<(usize, f64)> = None;
            for k in 0..self.m {
                let a = alpha[k];
                if a.abs() <= opts.pivot_tol {
                    continue;
                }
                let bj = self.basis[k];
                let rate = -dir * a;
                let (limit, bound) = if rate < 0.0 {
                    if !self.lo[bj].is_finite() {
                        continue;
                    }
                    (((self.x[bj] - self.lo[bj]).max(0.0)) / -rate, self.lo[bj])
                } else {
                    if !self.hi[bj].is_finite() {
                        continue;
                    }
                    (((self.hi[bj] - self.x[bj]).max(0.0)) / rate, self.hi[bj])
                };
                let better = match leave {
                    None => true,
                    Some((kk, _)) => {
                        let tie = (limit - theta).abs() <= 1e-12 * (1.0 + theta.abs());
                        if tie {
                            if bland {
                                bj < self.basis[kk]
                            } else {
                                a.abs() > alpha[kk].abs()
                            }
                        } else {
                            limit < theta
                        }
                    }
                };
                if better {
                    theta = limit;
                    leave = Some((k, bound));
                }
            }
            let span = self.hi[q] - self.lo[q];
            let flip = span.is_finite() && span <= theta;
            if flip {
                theta = span;
            }
            if !theta.is_finite() {
                return Outcome::Unbounded;
            }

            self.iterations += 1;
            if theta <= 1e-12 {
                degenerate += 1;
                if degenerate >= opts.bland_after {
                    bland = true;
                }
            }
            self.x[q] += dir * theta;
            for k in 0..self.m {
                let bj = self.basis[k];
                self.x[bj] -= dir * theta * alpha[k];
            }

            if flip {
                if dir > 0.0 {
                    self.x[q] = self.hi[q];
                    self.state[q] = VarState::AtUpper;
                } else {
                    self.x[q] = self.lo[q];
                    self.state[q] = VarState::AtLower;
                }
                continue;
            }

            let (r, bound) = leave.expect("finite ratio implies a leaving row");
            let out = self.basis[r];
            self.x[out] = bound;
            self.state[out] = if bound == self.lo[out] {
                VarState::AtLower
            } else {
                VarState::AtUpper
            };
            self.state[q] = VarState::Basic;
            self.basis[r] = q;

            let piv = alpha[r];
            for i in 0..self.m {
                self.binv[(r, i)] /= piv;
            }
            for k in 0..self.m {
                if k != r && alpha[k] != 0.0 {
                    let f = alpha[k];
                    for i in 0..self.m {
                        let v = self.binv[(r, i)];
                        self.binv[(k, i)] -= f * v;
                    }
                }
            }
            since_refactor += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn check_optimal_contract(p: &LpProblem, s: &LpSolution) {
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(
            p.max_violation(&s.x) <= 1e-9,
            "primal {}",
            p.max_violation(&s.x)
        );
        let dual = p.dual_objective(&s.duals);
        assert!(
            (dual - s.objective).abs() <= 1e-8 * (1.0 + s.objective.abs()),
            "dual {dual} primal {}",
            s.objective
        );
    }

    #[test]
    fn bounded_maximization() {
        let mut p = LpProblem::new(vec![-1.0]);
        p.push(LpRow::le(vec![1.0], 1.0));
        p.push(LpRow::ge(vec![1.0], 0.0));
        let s = solve_lp(&p).unwrap();
        check_optimal_contract(&p, &s);
        assert_relative_eq!(s.x[0], 1.0);
        assert_relative_eq!(s.objective, -1.0);
        assert_relative_eq!(s.duals[0], -1.0);
    }

    #[test]
    fn infeasible_rows() {
        let mut p = LpProblem::new(vec![0.0]);
        p.push(LpRow::le(vec![1.0], -1.0));
        p.push(LpRow::ge(vec![1.0], 0.0));
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn free_variable_unbounded() {
        let p = LpProblem::new(vec![-1.0]);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn bound_flip_and_box() {
        let mut p = LpProblem::new(vec![-1.0, -2.0]);
        p.lower = vec![0.0, 0.0];
        p.upper = vec![3.0, 1.0];
        p.push(LpRow::le(vec![1.0, 1.0], 3.5));
        let s = solve_lp(&p).unwrap();
        check_optimal_contract(&p, &s);
        assert_relative_eq!(s.objective, -4.5, epsilon = 1e-12);
    }

    #[test]
    fn equality_rows_and_free_vars() {
        // min x + y s.t. x - y = 1, x + y >= 3, x free, y >= 0
        let mut p = LpProblem::new(vec![1.0, 1.0]);
        p.lower[1] = 0.0;
        p.push(LpRow::eq(vec![1.0, -1.0], 1.0));
        p.push(LpRow::ge(vec![1.0, 1.0], 3.0));
        let s = solve_lp(&p).unwrap();
        check_optimal_contract(&p, &s);
        assert_relative_eq!(s.objective, 3.0, epsilon = 1e-12);
        assert_relative_eq!(s.x[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_malformed() {
        let mut p = LpProblem::new(vec![1.0, 1.0]);
        p.push(LpRow::le(vec![1.0], 1.0));
        assert!(solve_lp(&p).is_err());
        let p = LpProblem::new(vec![]);
        assert!(solve_lp(&p).is_err());
        let mut p = LpProblem::new(vec![f64::NAN]);
        p.lower[0] = 0.0;
        assert!(solve_lp(&p).is_err());
    }

    #[test]
    fn feasible_point_singleton() {
        let rows = vec![LpRow::eq(vec![1.0], 1.0)];
        match feasible_point(&rows, &[f64::NEG_INFINITY], &[f64::INFINITY]).unwrap() {
            Feasibility::Feasible(x) => assert_relative_eq!(x[0], 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn farkas_certificate_verifies() {
        let rows = vec![
            LpRow::ge(vec![1.0, 1.0], 5.0),
            LpRow::le(vec![1.0, 0.0], 1.0),
        ];
        let lo = [0.0, 0.0];
        let hi = [10.0, 2.0];
        match feasible_point(&rows, &lo, &hi).unwrap() {
            Feasibility::Infeasible(c) => {
                assert!(c.verify(&rows, &lo, &hi, 1e-9));
                assert_relative_eq!(c.margin, 2.0, epsilon = 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling instance.
        let mut p = LpProblem::new(vec![-0.75, 150.0, -0.02, 6.0]);
        p.lower = vec![0.0; 4];
        p.push(LpRow::le(vec![0.25, -60.0, -0.04, 9.0], 0.0));
        p.push(LpRow::le(vec![0.5, -90.0, -0.02, 3.0], 0.0));
        p.push(LpRow::le(vec![0.0, 0.0, 1.0, 0.0], 1.0));
        let s = solve_lp(&p).unwrap();
        check_optimal_contract(&p, &s);
        assert_relative_eq!(s.objective, -0.05, epsilon = 1e-10);
    }

    #[test]
    fn bland_mode_reaches_same_optimum() {
        let mut p = LpProblem::new(vec![-0.75, 150.0, -0.02, 6.0]);
        p.lower = vec![0.0; 4];
        p.push(LpRow::le(vec![0.25, -60.0, -0.04, 9.0], 0.0));
        p.push(LpRow::le(vec![0.5, -90.0, -0.02, 3.0], 0.0));
        p.push(LpRow::le(vec![0.0, 0.0, 1.0, 0.0], 1.0));
        let opts = LpOptions {
            bland_after: 0,
            ..LpOptions::default()
        };
        let s = solve_lp_with(&p, &opts).unwrap();
        check_optimal_contract(&p, &s);
        assert_relative_eq!(s.objective, -0.05, epsilon = 1e-10);
    }

    #[test]
    fn deterministic_output() {
        let mut p = LpProblem::new(vec![1.0, -2.0, 0.5]);
        p.lower = vec![-1.0, -1.0, -1.0];
        p.upper = vec![2.0, 2.0, 2.0];
        p.push(LpRow::le(vec![1.0, 1.0, 1.0], 1.0));
        p.push(LpRow::ge(vec![1.0, -1.0, 0.0], -2.0));
        let a = solve_lp(&p).unwrap();
        let b = solve_lp(&p).unwrap();
        assert_eq!(a, b);
    }
}
