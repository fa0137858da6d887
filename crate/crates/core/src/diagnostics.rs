//! Feasibility metric, constraint-qualification checks and stationarity
//! certificates.

use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpRow, LpStatus};
use crate::model::{BilevelProgram, LinearBilevel, LowerStatus};
use crate::nlp::{kkt_residual, lagrangian_gradient, Multipliers};
use crate::poly::PolyFunction;
use crate::reformulate::{build_mdp, build_mpcc, BlockName, Nlp, RowKind};

/// Breakdown of the bilevel infeasibility measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    pub upper_violation: f64,
    pub lower_feasibility_violation: f64,
    pub bound_violation: f64,
    /// `|f(x, y) − V(x)|`.
    pub optimality_gap: f64,
    pub total: f64,
    /// Set when `V(x)` is not finite (lower level infeasible or unsolved).
    pub value_undefined: bool,
}

impl InfeasibilityReport {
    fn assemble(upper: f64, lower: f64, bound: f64, gap: Option<f64>) -> Self {
        match gap {
            Some(gap) => InfeasibilityReport {
                upper_violation: upper,
                lower_feasibility_violation: lower,
                bound_violation: bound,
                optimality_gap: gap,
                total: upper + lower + bound + gap,
                value_undefined: false,
            },
            None => InfeasibilityReport {
                upper_violation: upper,
                lower_feasibility_violation: lower,
                bound_violation: bound,
                optimality_gap: f64::INFINITY,
                total: f64::INFINITY,
                value_undefined: true,
            },
        }
    }
}

fn positive_norm(values: impl IntoIterator<Item = f64>) -> f64 {
    values
        .into_iter()
        .map(|v| v.max(0.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Infeasibility of `(x, y)` for a linear bilevel program.
pub fn infeasibility(lin: &LinearBilevel, x: &[f64], y: &[f64]) -> Result<InfeasibilityReport> {
    if x.len() != lin.n() {
        return Err(Error::dim("upper-level point", lin.n(), x.len()));
    }
    if y.len() != lin.m() {
        return Err(Error::dim("lower-level point", lin.m(), y.len()));
    }
    let upper = positive_norm((0..lin.l()).map(|i| dot(&lin.a1[i], x) - lin.b1[i]));
    let lower = positive_norm(
        (0..lin.p()).map(|i| dot(&lin.a2[i], x) + dot(&lin.b2_mat[i], y) - lin.b2[i]),
    );
    let bound = positive_norm((0..lin.m()).map(|j| y[j] - lin.bu[j]))
        + positive_norm((0..lin.m()).map(|j| lin.bl[j] - y[j]));
    let v = lin.lower_solve(x)?;
    let gap = (v.status == LowerStatus::Optimal).then(|| (dot(&lin.d2, y) - v.value).abs());
    Ok(InfeasibilityReport::assemble(upper, lower, bound, gap))
}

/// The same measure for a general program. `V(x)` comes from
/// [`BilevelProgram::lower_solve`], which is only a local value when the lower
/// level is nonconvex.
pub fn general_infeasibility(
    bp: &BilevelProgram,
    x: &[f64],
    y: &[f64],
) -> Result<InfeasibilityReport> {
    if x.len() != bp.n {
        return Err(Error::dim("upper-level point", bp.n, x.len()));
    }
    if y.len() != bp.m {
        return Err(Error::dim("lower-level point", bp.m, y.len()));
    }
    let w = bp.join(x, y);
    let upper = positive_norm(
        bp.omega_ineq
            .iter()
            .map(|c| c.value(&w))
            .chain(bp.omega_eq.iter().map(|c| c.value(&w).abs())),
    );
    let lower = positive_norm(
        bp.g.iter()
            .map(|c| c.value(&w))
            .chain(bp.h.iter().map(|c| c.value(&w).abs())),
    );
    let v = bp.lower_solve(x)?;
    let gap = (v.status == LowerStatus::Optimal && v.value.is_finite())
        .then(|| (bp.lower_obj.value(&w) - v.value).abs());
    Ok(InfeasibilityReport::assemble(upper, lower, 0.0, gap))
}

/// Tolerance used to decide whether a row or bound is active.
pub const ACTIVE_TOL: f64 = 1e-6;
/// Largest residual accepted for a returned certificate.
pub const CERT_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateKind {
    MfcqDirection,
    MfcqFailAbnormal,
    SStationary,
    KktMultipliers,
    NotKkt,
}

/// Multipliers of the S-stationarity system, named after the lower-level
/// blocks. `lambda_u` pairs with `u ≥ 0` and `lambda_l` with `∇_y L = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SMultipliers {
    pub omega_ineq: Vec<f64>,
    pub omega_eq: Vec<f64>,
    pub lambda_g: Vec<f64>,
    pub lambda_h: Vec<f64>,
    pub lambda_u: Vec<f64>,
    pub lambda_l: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    /// MFCQ direction `d`.
    pub direction: Option<Vec<f64>>,
    /// `min −dᵀ∇c_i` over active inequalities; `None` when none is active.
    pub margin: Option<f64>,
    /// Multipliers in the row layout of the checked problem.
    pub multipliers: Option<Multipliers>,
    pub s_multipliers: Option<SMultipliers>,
    /// Residual of the defining system at the returned vectors.
    pub residual: f64,
    /// Optimal ℓ1 stationarity gap of the multiplier search, when one ran.
    pub phase1_gap: Option<f64>,
}

impl Certificate {
    fn bare(kind: CertificateKind, residual: f64) -> Self {
        Certificate {
            kind,
            direction: None,
            margin: None,
            multipliers: None,
            s_multipliers: None,
            residual,
            phase1_gap: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn require_feasible(p: &Nlp, point: &[f64]) -> Result<()> {
    p.check_point(point)?;
    let violation = p.max_violation(point);
    if !(violation <= ACTIVE_TOL) {
        return Err(Error::InfeasiblePoint {
            violation,
            tolerance: ACTIVE_TOL,
        });
    }
    Ok(())
}

/// A multiplier attached to one row or bound of an [`Nlp`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Ineq(usize),
    Eq(usize),
    Lower(usize),
    Upper(usize),
}

struct Column {
    slot: Slot,
    grad: Vec<f64>,
    free: bool,
}

fn unit(n: usize, k: usize, s: f64) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[k] = s;
    e
}

fn bound_active_lower(p: &Nlp, point: &[f64], k: usize) -> bool {
    p.lower[k].is_finite() && point[k] - p.lower[k] <= ACTIVE_TOL
}

fn bound_active_upper(p: &Nlp, point: &[f64], k: usize) -> bool {
    p.upper[k].is_finite() && p.upper[k] - point[k] <= ACTIVE_TOL
}

/// Columns of the active constraints: equality rows (free), inequality rows
/// with `c ≥ −ACTIVE_TOL` and active bounds (nonnegative). Bound gradients
/// carry the sign of `lo − w ≤ 0` and `w − hi ≤ 0`.
fn active_columns(p: &Nlp, point: &[f64]) -> Vec<Column> {
    let n = p.num_vars;
    let mut cols = Vec::new();
    for (j, c) in p.eq.iter().enumerate() {
        cols.push(Column {
            slot: Slot::Eq(j),
            grad: c.func.grad(point).expect("checked dimension"),
            free: true,
        });
    }
    for (i, c) in p.ineq.iter().enumerate() {
        if c.func.value(point) >= -ACTIVE_TOL {
            cols.push(Column {
                slot: Slot::Ineq(i),
                grad: c.func.grad(point).expect("checked dimension"),
                free: false,
            });
        }
    }
    for k in 0..n {
        if bound_active_lower(p, point, k) {
            cols.push(Column {
                slot: Slot::Lower(k),
                grad: unit(n, k, -1.0),
                free: false,
            });
        }
        if bound_active_upper(p, point, k) {
            cols.push(Column {
                slot: Slot::Upper(k),
                grad: unit(n, k, 1.0),
                free: false,
            });
        }
    }
    cols
}

fn to_multipliers(p: &Nlp, cols: &[Column], values: &[f64]) -> Multipliers {
    let mut m = Multipliers::zeros(p);
    for (c, &v) in cols.iter().zip(values) {
        match c.slot {
            Slot::Ineq(i) => m.ineq[i] = v,
            Slot::Eq(j) => m.eq[j] = v,
            Slot::Lower(k) => m.lower[k] = v,
            Slot::Upper(k) => m.upper[k] = v,
        }
    }
    m
}

/// `min ‖r‖₁` s.t. `Σ_k λ_k a_k + r = rhs`, with `λ_k ≥ 0` unless free and,
/// if `normalize` is set, `Σ_{k nonneg} λ_k = 1`. Returns `(λ, optimal ‖r‖₁)`.
fn l1_multiplier_lp(
    n: usize,
    rhs: &[f64],
    cols: &[Column],
    normalize: bool,
) -> Result<Option<(Vec<f64>, f64)>> {
    let nc = cols.len();
    let nv = nc + 2 * n;
    let mut c = vec![0.0; nv];
    for v in c.iter_mut().skip(nc) {
        *v = 1.0;
    }
    let mut lp = LpProblem::new(c);
    for (k, col) in cols.iter().enumerate() {
        if !col.free {
            lp.lower[k] = 0.0;
        }
    }
    for v in nc..nv {
        lp.lower[v] = 0.0;
    }
    for i in 0..n {
        let mut row = vec![0.0; nv];
        for (k, col) in cols.iter().enumerate() {
            row[k] = col.grad[i];
        }
        row[nc + i] = 1.0;
        row[nc + n + i] = -1.0;
        lp.push(LpRow::eq(row, rhs[i]));
    }
    if normalize {
        let mut row = vec![0.0; nv];
        for (k, col) in cols.iter().enumerate() {
            if !col.free {
                row[k] = 1.0;
            }
        }
        lp.push(LpRow::eq(row, 1.0));
    }
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(Some((sol.x[..nc].to_vec(), sol.objective.max(0.0)))),
        LpStatus::Infeasible => Ok(None),
        _ => Err(Error::Structure(format!(
            "multiplier LP ended with status {:?}",
            sol.status
        ))),
    }
}

/// Numerical rank by Gaussian elimination with complete pivoting; entries
/// below `1e−8 · max|entry|` count as zero.
pub fn numerical_rank(rows: &[Vec<f64>]) -> usize {
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let r = a.len();
    if r == 0 {
        return 0;
    }
    let c = a[0].len();
    let scale = a.iter().flatten().fold(0.0, |m: f64, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let drop = 1e-8 * scale;
    let mut cols: Vec<usize> = (0..c).collect();
    let mut rank = 0;
    while rank < r.min(c) {
        let mut best = (0.0, 0, 0);
        for (i, row) in a.iter().enumerate().skip(rank) {
            for (jj, &j) in cols.iter().enumerate().skip(rank) {
                if row[j].abs() > best.0 {
                    best = (row[j].abs(), i, jj);
                }
            }
        }
        if best.0 <= drop {
            break;
        }
        a.swap(rank, best.1);
        cols.swap(rank, best.2);
        let pc = cols[rank];
        let pivot = a[rank][pc];
        for i in (rank + 1)..r {
            let f = a[i][pc] / pivot;
            if f != 0.0 {
                for &j in &cols[rank..] {
                    a[i][j] -= f * a[rank][j];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Residual of the Fritz-John system with zero objective weight: the
/// combination norm, sign violations and complementarity products. Returns
/// `+∞` for the zero tuple, which is never abnormal.
pub fn abnormal_residual(p: &Nlp, point: &[f64], mult: &Multipliers) -> Result<f64> {
    let zero = PolyFunction::zero(p.num_vars);
    let mut shadow = p.clone();
    shadow.objective = zero;
    let r = kkt_residual(&shadow, point, mult)?;
    let size = norm_inf(&mult.ineq)
        .max(norm_inf(&mult.eq))
        .max(norm_inf(&mult.lower))
        .max(norm_inf(&mult.upper));
    if size == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(r.stationarity.max(r.complementarity).max(r.sign))
}

fn abnormal_from_eq(p: &Nlp, point: &[f64], cols: &[Column], mu: &[f64]) -> Result<Certificate> {
    let values: Vec<f64> = cols
        .iter()
        .scan(0, |j, c| {
            Some(if c.free {
                *j += 1;
                mu[*j - 1]
            } else {
                0.0
            })
        })
        .collect();
    let mult = to_multipliers(p, cols, &values);
    let residual = abnormal_residual(p, point, &mult)?;
    Ok(Certificate {
        multipliers: Some(mult),
        ..Certificate::bare(CertificateKind::MfcqFailAbnormal, residual)
    })
}

/// MFCQ at a feasible point: full row rank of the equality gradients and a
/// direction strictly decreasing every active inequality, or an abnormal
/// multiplier proving failure.
pub fn check_mfcq(p: &Nlp, point: &[f64]) -> Result<Certificate> {
    require_feasible(p, point)?;
    let n = p.num_vars;
    let cols = active_columns(p, point);
    let eq_grads: Vec<Vec<f64>> = cols
        .iter()
        .filter(|c| c.free)
        .map(|c| c.grad.clone())
        .collect();
    let q = eq_grads.len();
    let norms: Vec<f64> = eq_grads.iter().map(|g| dot(g, g).sqrt()).collect();
    if let Some(j) = norms.iter().position(|&v| v == 0.0) {
        let mut mu = vec![0.0; q];
        mu[j] = 1.0;
        return abnormal_from_eq(p, point, &cols, &mu);
    }
    let unit_grads: Vec<Vec<f64>> = eq_grads
        .iter()
        .zip(&norms)
        .map(|(g, s)| g.iter().map(|v| v / s).collect())
        .collect();
    if numerical_rank(&unit_grads) < q {
        let mut gram = DMatrix::zeros(q, q);
        for i in 0..q {
            for j in 0..q {
                gram[(i, j)] = dot(&unit_grads[i], &unit_grads[j]);
            }
        }
        let eig = SymmetricEigen::new(gram);
        let kmin = eig.eigenvalues.imin();
        let mu: Vec<f64> = eig
            .eigenvectors
            .column(kmin)
            .iter()
            .zip(&norms)
            .map(|(m, s)| m / s)
            .collect();
        let top = norm_inf(&mu);
        let mu: Vec<f64> = mu.iter().map(|m| m / top).collect();
        return abnormal_from_eq(p, point, &cols, &mu);
    }
    let ineq_cols: Vec<&Column> = cols.iter().filter(|c| !c.free).collect();
    if ineq_cols.is_empty() {
        return Ok(Certificate {
            direction: Some(vec![0.0; n]),
            ..Certificate::bare(CertificateKind::MfcqDirection, 0.0)
        });
    }
    // max s  s.t.  ∇e·d = 0, ∇c·d + s ≤ 0 (active), ‖d‖∞ ≤ 1
    let mut obj = vec![0.0; n + 1];
    obj[n] = -1.0;
    let mut lp = LpProblem::new(obj);
    for k in 0..n {
        lp.lower[k] = -1.0;
        lp.upper[k] = 1.0;
    }
    lp.lower[n] = 0.0;
    for c in &cols {
        let mut row = c.grad.clone();
        if c.free {
            row.push(0.0);
            lp.push(LpRow::eq(row, 0.0));
        } else {
            row.push(1.0);
            lp.push(LpRow::le(row, 0.0));
        }
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Structure(format!(
            "MFCQ direction LP ended with status {:?}",
            sol.status
        )));
    }
    if sol.x[n] > 1e-8 {
        let d = sol.x[..n].to_vec();
        let residual = eq_grads
            .iter()
            .fold(0.0, |m: f64, g| m.max(dot(g, &d).abs()));
        let margin = ineq_cols
            .iter()
            .fold(f64::INFINITY, |m: f64, c| m.min(-dot(&c.grad, &d)));
        return Ok(Certificate {
            direction: Some(d),
            margin: Some(margin),
            ..Certificate::bare(CertificateKind::MfcqDirection, residual)
        });
    }
    let rhs = vec![0.0; n];
    let (values, gap) = l1_multiplier_lp(n, &rhs, &cols, true)?
        .ok_or_else(|| Error::Structure("abnormal multiplier LP is infeasible".into()))?;
    let mult = to_multipliers(p, &cols, &values);
    let residual = abnormal_residual(p, point, &mult)?;
    Ok(Certificate {
        multipliers: Some(mult),
        phase1_gap: Some(gap),
        ..Certificate::bare(CertificateKind::MfcqFailAbnormal, residual)
    })
}

fn objective_grad(p: &Nlp, point: &[f64]) -> Vec<f64> {
    p.objective.grad(point).expect("checked dimension")
}

/// Stationarity residual, sign violations and support violations of KKT
/// multipliers whose active set is read off the point with [`ACTIVE_TOL`].
pub fn kkt_certificate_residual(p: &Nlp, point: &[f64], mult: &Multipliers) -> Result<f64> {
    let r = kkt_residual(p, point, mult)?;
    let mut worst = r.stationarity.max(r.sign);
    for (c, &l) in p.ineq.iter().zip(&mult.ineq) {
        if l != 0.0 && c.func.value(point) < -ACTIVE_TOL {
            worst = worst.max(l.abs());
        }
    }
    for k in 0..p.num_vars {
        if mult.lower[k] != 0.0 && !bound_active_lower(p, point, k) {
            worst = worst.max(mult.lower[k].abs());
        }
        if mult.upper[k] != 0.0 && !bound_active_upper(p, point, k) {
            worst = worst.max(mult.upper[k].abs());
        }
    }
    Ok(worst)
}

/// KKT multipliers at a feasible point, found by an ℓ1 stationarity LP over
/// the active set. `KktMultipliers` when the optimal gap is at most
/// `1e−7 · max(1, ‖∇f‖∞)`, otherwise `NotKkt` carrying the gap.
pub fn check_kkt(p: &Nlp, point: &[f64]) -> Result<Certificate> {
    require_feasible(p, point)?;
    let grad = objective_grad(p, point);
    let cols = active_columns(p, point);
    let rhs: Vec<f64> = grad.iter().map(|v| -v).collect();
    let (values, gap) = l1_multiplier_lp(p.num_vars, &rhs, &cols, false)?
        .ok_or_else(|| Error::Structure("stationarity LP is infeasible".into()))?;
    let mult = to_multipliers(p, &cols, &values);
    let residual = kkt_certificate_residual(p, point, &mult)?;
    let kind = if gap <= CERT_TOL * norm_inf(&grad).max(1.0) {
        CertificateKind::KktMultipliers
    } else {
        CertificateKind::NotKkt
    };
    Ok(Certificate {
        multipliers: Some(mult),
        phase1_gap: Some(gap),
        ..Certificate::bare(kind, residual)
    })
}

/// Index-set classification of one complementarity pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairClass {
    /// `g_i = 0 < u_i`.
    ZeroPlus,
    /// `g_i < 0 = u_i`.
    MinusZero,
    /// `g_i = 0 = u_i`.
    ZeroZero,
}

fn classify(g: f64, u: f64) -> PairClass {
    match (g < -ACTIVE_TOL, u > ACTIVE_TOL) {
        (false, true) => PairClass::ZeroPlus,
        (true, false) => PairClass::MinusZero,
        (false, false) => PairClass::ZeroZero,
        // Only reachable within the feasibility tolerance; both multipliers
        // are then pinned to zero.
        (true, true) => PairClass::MinusZero,
    }
}

/// Locates the rows of a complementarity reformulation.
struct MpccLayout {
    g_rows: Vec<usize>,
    u_range: Range<usize>,
}

fn mpcc_layout(mpcc: &Nlp) -> Result<MpccLayout> {
    let u_range = mpcc
        .block(BlockName::U)
        .ok_or_else(|| Error::Structure("problem has no multiplier block u".into()))?;
    if mpcc.block(BlockName::Z).is_some() {
        return Err(Error::Structure(
            "expected the complementarity reformulation, found a dual one".into(),
        ));
    }
    let mut g_rows = vec![usize::MAX; u_range.len()];
    for (r, c) in mpcc.ineq.iter().enumerate() {
        if let RowKind::LowerIneq(i) = c.kind {
            g_rows[i] = r;
        }
    }
    if g_rows.contains(&usize::MAX) {
        return Err(Error::Structure(
            "missing lower-level inequality rows".into(),
        ));
    }
    Ok(MpccLayout { g_rows, u_range })
}

/// Pair classes `(I_{0+}, I_{−0}, I_{00})` at a point.
fn pair_classes(mpcc: &Nlp, point: &[f64], layout: &MpccLayout) -> Vec<PairClass> {
    layout
        .g_rows
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            classify(
                mpcc.ineq[r].func.value(point),
                point[layout.u_range.start + i],
            )
        })
        .collect()
}

/// Columns of the S-stationarity system: every row except the
/// complementarity row, with the lower-level pair signs set by the index
/// sets and the `u ≥ 0` multiplier playing `λ^u`.
fn s_columns(mpcc: &Nlp, point: &[f64], layout: &MpccLayout) -> Vec<Column> {
    let n = mpcc.num_vars;
    let classes = pair_classes(mpcc, point, layout);
    let mut g_class = vec![None; mpcc.ineq.len()];
    for (i, &r) in layout.g_rows.iter().enumerate() {
        g_class[r] = Some(classes[i]);
    }
    let mut cols = Vec::new();
    for (j, c) in mpcc.eq.iter().enumerate() {
        if c.kind == RowKind::Complementarity {
            continue;
        }
        cols.push(Column {
            slot: Slot::Eq(j),
            grad: c.func.grad(point).expect("checked dimension"),
            free: true,
        });
    }
    for (i, c) in mpcc.ineq.iter().enumerate() {
        if c.kind == RowKind::Complementarity {
            continue;
        }
        let (include, free) = match g_class[i] {
            Some(PairClass::MinusZero) => (false, false),
            Some(PairClass::ZeroPlus) => (true, true),
            Some(PairClass::ZeroZero) => (true, false),
            None => (c.func.value(point) >= -ACTIVE_TOL, false),
        };
        if include {
            cols.push(Column {
                slot: Slot::Ineq(i),
                grad: c.func.grad(point).expect("checked dimension"),
                free,
            });
        }
    }
    for k in 0..n {
        if layout.u_range.contains(&k) {
            let class = classes[k - layout.u_range.start];
            if class != PairClass::ZeroPlus {
                cols.push(Column {
                    slot: Slot::Lower(k),
                    grad: unit(n, k, -1.0),
                    free: class == PairClass::MinusZero,
                });
            }
            continue;
        }
        if bound_active_lower(mpcc, point, k) {
            cols.push(Column {
                slot: Slot::Lower(k),
                grad: unit(n, k, -1.0),
                free: false,
            });
        }
        if bound_active_upper(mpcc, point, k) {
            cols.push(Column {
                slot: Slot::Upper(k),
                grad: unit(n, k, 1.0),
                free: false,
            });
        }
    }
    cols
}

fn split_s_multipliers(mpcc: &Nlp, layout: &MpccLayout, mult: &Multipliers) -> SMultipliers {
    let mut s = SMultipliers {
        omega_ineq: Vec::new(),
        omega_eq: Vec::new(),
        lambda_g: vec![0.0; layout.g_rows.len()],
        lambda_h: Vec::new(),
        lambda_u: mult.lower[layout.u_range.clone()].to_vec(),
        lambda_l: Vec::new(),
    };
    for (c, &l) in mpcc.ineq.iter().zip(&mult.ineq) {
        match c.kind {
            RowKind::Omega => s.omega_ineq.push(l),
            RowKind::LowerIneq(i) => s.lambda_g[i] = l,
            _ => {}
        }
    }
    for (c, &l) in mpcc.eq.iter().zip(&mult.eq) {
        match c.kind {
            RowKind::Omega => s.omega_eq.push(l),
            RowKind::LowerEq(_) => s.lambda_h.push(l),
            RowKind::LowerStationarity(_) => s.lambda_l.push(l),
            _ => {}
        }
    }
    s
}

fn join_s_multipliers(mpcc: &Nlp, layout: &MpccLayout, s: &SMultipliers) -> Result<Multipliers> {
    let count = |pred: &dyn Fn(RowKind) -> bool, rows: &[crate::reformulate::Constraint]| {
        rows.iter().filter(|c| pred(c.kind)).count()
    };
    let checks = [
        (
            "Ω inequality multipliers",
            count(&|k| k == RowKind::Omega, &mpcc.ineq),
            s.omega_ineq.len(),
        ),
        (
            "Ω equality multipliers",
            count(&|k| k == RowKind::Omega, &mpcc.eq),
            s.omega_eq.len(),
        ),
        ("λ^g", layout.g_rows.len(), s.lambda_g.len()),
        (
            "λ^h",
            count(&|k| matches!(k, RowKind::LowerEq(_)), &mpcc.eq),
            s.lambda_h.len(),
        ),
        ("λ^u", layout.u_range.len(), s.lambda_u.len()),
        (
            "λ^L",
            count(&|k| matches!(k, RowKind::LowerStationarity(_)), &mpcc.eq),
            s.lambda_l.len(),
        ),
    ];
    for (what, expected, got) in checks {
        if expected != got {
            return Err(Error::dim(what, expected, got));
        }
    }
    let mut m = Multipliers::zeros(mpcc);
    let (mut oi, mut oe, mut h, mut l) = (0, 0, 0, 0);
    for (r, c) in mpcc.ineq.iter().enumerate() {
        match c.kind {
            RowKind::Omega => {
                m.ineq[r] = s.omega_ineq[oi];
                oi += 1;
            }
            RowKind::LowerIneq(i) => m.ineq[r] = s.lambda_g[i],
            _ => {}
        }
    }
    for (r, c) in mpcc.eq.iter().enumerate() {
        match c.kind {
            RowKind::Omega => {
                m.eq[r] = s.omega_eq[oe];
                oe += 1;
            }
            RowKind::LowerEq(_) => {
                m.eq[r] = s.lambda_h[h];
                h += 1;
            }
            RowKind::LowerStationarity(_) => {
                m.eq[r] = s.lambda_l[l];
                l += 1;
            }
            _ => {}
        }
    }
    for (k, &v) in layout.u_range.clone().zip(&s.lambda_u) {
        m.lower[k] = v;
    }
    Ok(m)
}

/// Residual of the S-stationarity system at `point` for the given
/// multipliers: stationarity of the reformulation without its
/// complementarity row, plus violations of the sign rules of the index sets
/// and of the Ω rows.
pub fn s_stationarity_residual(mpcc: &Nlp, point: &[f64], s: &SMultipliers) -> Result<f64> {
    mpcc.check_point(point)?;
    let layout = mpcc_layout(mpcc)?;
    let mult = join_s_multipliers(mpcc, &layout, s)?;
    let mut g = lagrangian_gradient(mpcc, point, &mult);
    // The complementarity row carries no multiplier.
    for (c, &l) in mpcc.eq.iter().zip(&mult.eq) {
        if c.kind == RowKind::Complementarity && l != 0.0 {
            c.func.add_grad_to(point, -l, &mut g);
        }
    }
    let mut worst = norm_inf(&g);
    let classes = pair_classes(mpcc, point, &layout);
    for (i, class) in classes.iter().enumerate() {
        let (lg, lu) = (s.lambda_g[i], s.lambda_u[i]);
        let v = match class {
            PairClass::MinusZero => lg.abs(),
            PairClass::ZeroPlus => lu.abs(),
            PairClass::ZeroZero => (-lg).max(-lu).max(0.0),
        };
        worst = worst.max(v);
    }
    let mut oi = 0;
    for c in &mpcc.ineq {
        if c.kind == RowKind::Omega {
            let l = s.omega_ineq[oi];
            oi += 1;
            worst = worst.max(-l);
            if c.func.value(point) < -ACTIVE_TOL {
                worst = worst.max(l.abs());
            }
        }
    }
    Ok(worst.max(0.0))
}

/// S-stationarity of a feasible point of the complementarity reformulation.
/// Ω multipliers enter the system like any other constraint.
pub fn check_s_stationary(mpcc: &Nlp, point: &[f64]) -> Result<Certificate> {
    let layout = mpcc_layout(mpcc)?;
    require_feasible(mpcc, point)?;
    let grad = objective_grad(mpcc, point);
    let cols = s_columns(mpcc, point, &layout);
    let rhs: Vec<f64> = grad.iter().map(|v| -v).collect();
    let (values, gap) = l1_multiplier_lp(mpcc.num_vars, &rhs, &cols, false)?
        .ok_or_else(|| Error::Structure("S-stationarity LP is infeasible".into()))?;
    let mult = to_multipliers(mpcc, &cols, &values);
    let s = split_s_multipliers(mpcc, &layout, &mult);
    let residual = s_stationarity_residual(mpcc, point, &s)?;
    let kind = if gap <= CERT_TOL * norm_inf(&grad).max(1.0) {
        CertificateKind::SStationary
    } else {
        CertificateKind::NotKkt
    };
    Ok(Certificate {
        s_multipliers: Some(s),
        phase1_gap: Some(gap),
        ..Certificate::bare(kind, residual)
    })
}

/// The abnormal multiplier of a Mond-Weir point with `z = y`: weight 1 on
/// both value rows, `u` on `g`, `v` on `h`, zero on the dual stationarity
/// rows and `−g(x, y)` on `u ≥ 0`.
pub fn mdp_abnormal_witness(mdp: &Nlp, point: &[f64]) -> Result<Multipliers> {
    mdp.check_point(point)?;
    let u = mdp.slice(point, BlockName::U);
    let v = mdp.slice(point, BlockName::V);
    let u_range = mdp
        .block(BlockName::U)
        .ok_or_else(|| Error::Structure("problem has no multiplier block u".into()))?;
    let mut m = Multipliers::zeros(mdp);
    let mut found = (false, false);
    for (r, c) in mdp.ineq.iter().enumerate() {
        match c.kind {
            RowKind::ValueGap => {
                m.ineq[r] = 1.0;
                found.0 = true;
            }
            RowKind::DualSign => {
                m.ineq[r] = 1.0;
                found.1 = true;
            }
            RowKind::LowerIneq(i) => {
                m.ineq[r] = u[i];
                m.lower[u_range.start + i] = -c.func.value(point);
            }
            _ => {}
        }
    }
    for (r, c) in mdp.eq.iter().enumerate() {
        if let RowKind::LowerEq(j) = c.kind {
            m.eq[r] = v[j];
        }
    }
    if found != (true, true) {
        return Err(Error::Structure(
            "expected the Mond-Weir reformulation with both value rows".into(),
        ));
    }
    Ok(m)
}

/// Maps Mond-Weir KKT multipliers at a point with `z = y` to S-stationarity
/// multipliers of the complementarity reformulation,
/// `λ^g = η^g − γu`, `λ^h = η^h − γv`, `λ^u = η^u + γg(x, y)`, `λ^L = β`,
/// and re-verifies the S-system.
pub fn check_kkt_transfer(
    bp: &BilevelProgram,
    mdp_cert: &Certificate,
    point: &[f64],
) -> Result<Certificate> {
    let mdp = build_mdp(bp)?;
    let mpcc = build_mpcc(bp)?;
    mdp.check_point(point)?;
    let mult = match (mdp_cert.kind, &mdp_cert.multipliers) {
        (CertificateKind::KktMultipliers, Some(m)) => m,
        _ => {
            return Err(Error::Structure(
                "transfer needs a KKT certificate with multipliers".into(),
            ))
        }
    };
    let y = mdp.slice(point, BlockName::Y);
    let z = mdp.slice(point, BlockName::Z);
    let gap = y
        .iter()
        .zip(z)
        .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
    if gap > 1e-8 {
        return Err(Error::Structure(format!(
            "transfer needs z = y, found ‖z − y‖∞ = {gap:.3e}"
        )));
    }
    let x = mdp.slice(point, BlockName::X);
    let u = mdp.slice(point, BlockName::U);
    let v = mdp.slice(point, BlockName::V);
    let u_range = mdp.block(BlockName::U).expect("Mond-Weir layout");
    let gamma = mdp
        .ineq_index(RowKind::DualSign)
        .map(|r| mult.ineq[r])
        .unwrap_or(0.0);
    let w = bp.join(x, y);
    let mut s = SMultipliers {
        omega_ineq: Vec::new(),
        omega_eq: Vec::new(),
        lambda_g: vec![0.0; bp.p()],
        lambda_h: vec![0.0; bp.q()],
        lambda_u: vec![0.0; bp.p()],
        lambda_l: vec![0.0; bp.m],
    };
    for (c, &l) in mdp.ineq.iter().zip(&mult.ineq) {
        match c.kind {
            RowKind::Omega => s.omega_ineq.push(l),
            RowKind::LowerIneq(i) => s.lambda_g[i] = l - gamma * u[i],
            _ => {}
        }
    }
    for (c, &l) in mdp.eq.iter().zip(&mult.eq) {
        match c.kind {
            RowKind::Omega => s.omega_eq.push(l),
            RowKind::LowerEq(j) => s.lambda_h[j] = l - gamma * v[j],
            RowKind::DualStationarity(k) => s.lambda_l[k] = l,
            _ => {}
        }
    }
    for i in 0..bp.p() {
        s.lambda_u[i] = mult.lower[u_range.start + i] + gamma * bp.g[i].value(&w);
    }
    let mut mp = Vec::with_capacity(mpcc.num_vars);
    mp.extend_from_slice(x);
    mp.extend_from_slice(y);
    mp.extend_from_slice(u);
    mp.extend_from_slice(v);
    let residual = s_stationarity_residual(&mpcc, &mp, &s)?;
    let scale = norm_inf(&objective_grad(&mpcc, &mp)).max(1.0);
    if !(residual <= CERT_TOL * scale) {
        return Err(Error::MappingResidual {
            residual,
            tolerance: CERT_TOL * scale,
        });
    }
    Ok(Certificate {
        s_multipliers: Some(s),
        ..Certificate::bare(CertificateKind::SStationary, residual)
    })
}

/// Recomputes the residual of a certificate from the problem data alone.
/// `None` for `NotKkt`, whose evidence is the LP gap rather than a vector.
pub fn verify_certificate(p: &Nlp, point: &[f64], cert: &Certificate) -> Result<Option<f64>> {
    p.check_point(point)?;
    let missing = || Error::Structure(format!("{:?} certificate is incomplete", cert.kind));
    Ok(match cert.kind {
        CertificateKind::MfcqDirection => {
            let d = cert.direction.as_ref().ok_or_else(missing)?;
            if d.len() != p.num_vars {
                return Err(Error::dim("MFCQ direction", p.num_vars, d.len()));
            }
            let mut worst: f64 = 0.0;
            let mut margin = f64::INFINITY;
            for c in active_columns(p, point) {
                let s = dot(&c.grad, d);
                if c.free {
                    worst = worst.max(s.abs());
                } else {
                    margin = margin.min(-s);
                }
            }
            if margin.is_finite() && margin <= 1e-8 {
                worst = f64::INFINITY;
            }
            Some(worst)
        }
        CertificateKind::MfcqFailAbnormal => {
            let m = cert.multipliers.as_ref().ok_or_else(missing)?;
            Some(abnormal_residual(p, point, m)?)
        }
        CertificateKind::KktMultipliers => {
            let m = cert.multipliers.as_ref().ok_or_else(missing)?;
            Some(kkt_certificate_residual(p, point, m)?)
        }
        CertificateKind::SStationary => {
            let s = cert.s_multipliers.as_ref().ok_or_else(missing)?;
            Some(s_stationarity_residual(p, point, s)?)
        }
        CertificateKind::NotKkt => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::fixtures::{mfcq_example, motivating_example, stationarity_gap_example};
    use crate::nlp::{solve_nlp, NlpStatus};
    use approx::assert_relative_eq;

    fn tiny_linear() -> LinearBilevel {
        // min x − y, 0 ≤ x ≤ 1; y ∈ argmin { y : y ≥ x − 1 (as −y + x ≤ 1), −5 ≤ y ≤ 5 }
        LinearBilevel {
            c1: vec![1.0],
            c2: vec![-1.0],
            a1: vec![vec![1.0], vec![-1.0]],
            b1: vec![1.0, 0.0],
            d2: vec![1.0],
            a2: vec![vec![1.0]],
            b2_mat: vec![vec![-1.0]],
            b2: vec![1.0],
            bl: vec![-5.0],
            bu: vec![5.0],
        }
    }

    #[test]
    fn infeasibility_zero_at_lower_solution() {
        let lin = tiny_linear();
        let y = lin.lower_solve(&[0.5]).unwrap().y;
        let r = infeasibility(&lin, &[0.5], &y).unwrap();
        assert!(r.total <= 1e-9);
        assert!(!r.value_undefined);
    }

    #[test]
    fn infeasibility_gap_only() {
        let lin = tiny_linear();
        // V(0.5) = −0.5 at y = −0.5; y = −0.25 is lower-feasible.
        let r = infeasibility(&lin, &[0.5], &[-0.25]).unwrap();
        assert_relative_eq!(r.total, 0.25, epsilon = 1e-12);
        assert_relative_eq!(r.optimality_gap, 0.25, epsilon = 1e-12);
        assert_eq!(
            r.upper_violation + r.lower_feasibility_violation + r.bound_violation,
            0.0
        );
    }

    #[test]
    fn infeasibility_undefined_value() {
        let mut lin = tiny_linear();
        lin.bl = vec![-5.0];
        lin.bu = vec![-4.0];
        lin.b2 = vec![-10.0];
        let r = infeasibility(&lin, &[0.0], &[-4.5]).unwrap();
        assert!(r.value_undefined);
        assert_eq!(r.total, f64::INFINITY);
    }

    #[test]
    fn infeasibility_dimension_check() {
        let lin = tiny_linear();
        assert!(matches!(
            infeasibility(&lin, &[0.0, 1.0], &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rank_by_complete_pivoting() {
        assert_eq!(numerical_rank(&[]), 0);
        assert_eq!(numerical_rank(&[vec![1.0, 2.0], vec![2.0, 4.0]]), 1);
        assert_eq!(numerical_rank(&[vec![1.0, 0.0], vec![0.0, 1e-3]]), 2);
        assert_eq!(numerical_rank(&[vec![1.0, 0.0], vec![0.0, 1e-12]]), 1);
    }

    #[test]
    fn mfcq_at_documented_point() {
        let ex = mfcq_example();
        let mdp = build_mdp(&ex.program).unwrap();
        let w = [-1.0, 1.0, -2.0, 9.0];
        let cert = check_mfcq(&mdp, &w).unwrap();
        assert_eq!(cert.kind, CertificateKind::MfcqDirection);
        assert!(cert.residual <= 1e-8);
        assert!(cert.margin.unwrap() > 1e-8);
        assert!(verify_certificate(&mdp, &w, &cert).unwrap().unwrap() <= 1e-8);
        // The published direction.
        let d = [1.0, 0.0, 1.0, -12.0];
        let a1 = mdp.eq[mdp.eq_index(RowKind::DualStationarity(0)).unwrap()]
            .func
            .grad(&w)
            .unwrap();
        let b1 = mdp.ineq[mdp.ineq_index(RowKind::ValueGap).unwrap()]
            .func
            .grad(&w)
            .unwrap();
        let b2 = mdp.ineq[1].func.grad(&w).unwrap();
        assert!(dot(&d, &a1).abs() <= 1e-10);
        assert!(dot(&d, &b1) <= -8.9);
        assert!(dot(&d, &b2) <= -0.9);
    }

    #[test]
    fn mfcq_fails_on_mdp_with_z_equal_y() {
        let ex = motivating_example();
        let mdp = build_mdp(&ex.program).unwrap();
        let w = [1.0, 1.0, 1.0, 4.0];
        let cert = check_mfcq(&mdp, &w).unwrap();
        assert_eq!(cert.kind, CertificateKind::MfcqFailAbnormal);
        assert!(cert.residual <= 1e-8);
        let witness = mdp_abnormal_witness(&mdp, &w).unwrap();
        assert!(abnormal_residual(&mdp, &w, &witness).unwrap() <= 1e-8);
    }

    #[test]
    fn mfcq_vacuous_without_constraints() {
        let f = PolyFunction::from_terms(2, vec![(1.0, vec![(0, 2)])]).unwrap();
        let p = Nlp::generic(f);
        let cert = check_mfcq(&p, &[0.3, -1.0]).unwrap();
        assert_eq!(cert.kind, CertificateKind::MfcqDirection);
        assert_eq!(cert.direction, Some(vec![0.0, 0.0]));
    }

    #[test]
    fn mfcq_rejects_infeasible_point() {
        let ex = mfcq_example();
        let mdp = build_mdp(&ex.program).unwrap();
        assert!(matches!(
            check_mfcq(&mdp, &[5.0, 1.0, -2.0, 9.0]),
            Err(Error::InfeasiblePoint { .. })
        ));
    }

    #[test]
    fn s_stationary_at_documented_point() {
        let ex = stationarity_gap_example();
        let mpcc = build_mpcc(&ex.program).unwrap();
        let w = [0.0, 1.0, 0.0, 0.0];
        let cert = check_s_stationary(&mpcc, &w).unwrap();
        assert_eq!(cert.kind, CertificateKind::SStationary);
        assert!(cert.residual <= CERT_TOL);
        let s = cert.s_multipliers.as_ref().unwrap();
        assert_relative_eq!(s.lambda_l[0], 6.0, epsilon = 1e-9);
        assert!(verify_certificate(&mpcc, &w, &cert).unwrap().unwrap() <= CERT_TOL);
    }

    #[test]
    fn flipped_objective_is_not_s_stationary() {
        let ex = stationarity_gap_example();
        let mut mpcc = build_mpcc(&ex.program).unwrap();
        mpcc.objective = mpcc.objective.neg();
        let cert = check_s_stationary(&mpcc, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(cert.kind, CertificateKind::NotKkt);
        assert!(cert.phase1_gap.unwrap() >= 1.0);
    }

    #[test]
    fn s_stationary_with_zero_gradient() {
        // Upper objective (x − y)² at x = y = 0 with lower level min y² s.t. −y − 1 ≤ 0.
        let f = PolyFunction::from_terms(
            2,
            vec![
                (1.0, vec![(0, 2)]),
                (-2.0, vec![(0, 1), (1, 1)]),
                (1.0, vec![(1, 2)]),
            ],
        )
        .unwrap();
        let bp = BilevelProgram::new(
            1,
            1,
            f,
            vec![],
            vec![],
            PolyFunction::from_terms(2, vec![(1.0, vec![(1, 2)])]).unwrap(),
            vec![PolyFunction::affine(&[0.0, -1.0], -1.0).unwrap()],
            vec![],
        )
        .unwrap();
        let mpcc = build_mpcc(&bp).unwrap();
        let cert = check_s_stationary(&mpcc, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(cert.kind, CertificateKind::SStationary);
        let s = cert.s_multipliers.unwrap();
        assert!(norm_inf(&s.lambda_l) <= 1e-12 && norm_inf(&s.lambda_u) <= 1e-12);
    }

    #[test]
    fn mdp_documented_point_not_kkt() {
        let ex = stationarity_gap_example();
        let mdp = build_mdp(&ex.program).unwrap();
        let cert = check_kkt(&mdp, &[0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(cert.kind, CertificateKind::NotKkt);
        assert!(cert.phase1_gap.unwrap() >= 1.0);
        assert_eq!(
            verify_certificate(&mdp, &[0.0, 1.0, 1.0, 0.0, 0.0], &cert).unwrap(),
            None
        );
    }

    #[test]
    fn kkt_agrees_with_solver() {
        let ex = mfcq_example();
        let mdp = build_mdp(&ex.program).unwrap();
        let s = solve_nlp(&mdp, &[-0.5, 1.0, -1.5, 5.0], 1e-10).unwrap();
        assert_eq!(s.status, NlpStatus::KktPoint);
        let cert = check_kkt(&mdp, &s.point).unwrap();
        assert_eq!(cert.kind, CertificateKind::KktMultipliers);
        assert!(cert.residual <= CERT_TOL);
    }

    #[test]
    fn transfer_rejects_wrong_certificate() {
        let ex = stationarity_gap_example();
        let mdp = build_mdp(&ex.program).unwrap();
        let w = [0.0, 1.0, 1.0, 0.0, 0.0];
        let cert = check_kkt(&mdp, &w).unwrap();
        assert!(check_kkt_transfer(&ex.program, &cert, &w).is_err());
    }

    #[test]
    fn transfer_with_zero_gamma_keeps_multipliers() {
        // Lower level min (y − x)² unconstrained except y ≤ 10; upper (x − 1)² + (y − 1)².
        let bp = BilevelProgram::new(
            1,
            1,
            PolyFunction::from_terms(
                2,
                vec![
                    (1.0, vec![(0, 2)]),
                    (-2.0, vec![(0, 1)]),
                    (1.0, vec![(1, 2)]),
                    (-2.0, vec![(1, 1)]),
                    (2.0, vec![]),
                ],
            )
            .unwrap(),
            vec![],
            vec![],
            PolyFunction::from_terms(
                2,
                vec![
                    (1.0, vec![(1, 2)]),
                    (-2.0, vec![(0, 1), (1, 1)]),
                    (1.0, vec![(0, 2)]),
                ],
            )
            .unwrap(),
            vec![PolyFunction::affine(&[0.0, 1.0], -10.0).unwrap()],
            vec![],
        )
        .unwrap();
        let mdp = build_mdp(&bp).unwrap();
        let w = [1.0, 1.0, 1.0, 0.0];
        let cert = check_kkt(&mdp, &w).unwrap();
        assert_eq!(cert.kind, CertificateKind::KktMultipliers);
        let mult = cert.multipliers.clone().unwrap();
        let gamma = mult.ineq[mdp.ineq_index(RowKind::DualSign).unwrap()];
        let s = check_kkt_transfer(&bp, &cert, &w).unwrap();
        assert_eq!(s.kind, CertificateKind::SStationary);
        if gamma == 0.0 {
            let sm = s.s_multipliers.unwrap();
            assert_eq!(
                sm.lambda_g[0],
                mult.ineq[mdp.ineq_index(RowKind::LowerIneq(0)).unwrap()]
            );
            assert_eq!(sm.lambda_u[0], mult.lower[3]);
        }
    }

    #[test]
    fn certificate_json_round_trip() {
        let ex = stationarity_gap_example();
        let mpcc = build_mpcc(&ex.program).unwrap();
        let cert = check_s_stationary(&mpcc, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        let back: Certificate = serde_json::from_str(&cert.to_json()).unwrap();
        assert_eq!(back, cert);
    }
}
