//! Bilevel program representations.
//!
//! Variables are ordered `(x | y)`: the upper-level block `x ∈ ℝⁿ` first, the
//! lower-level block `y ∈ ℝᵐ` second.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpRow, LpStatus};
use crate::nlp::{solve_nlp, NlpStatus};
use crate::poly::{PolyFunction, Term};
use crate::reformulate::Nlp;

/// `min_{x,y} F(x,y)` s.t. `(x,y) ∈ Ω`, `y ∈ argmin { f(x,·) : g ≤ 0, h = 0 }`.
#[derive(Clone, Debug, PartialEq)]
pub struct BilevelProgram {
    pub n: usize,
    pub m: usize,
    pub upper_obj: PolyFunction,
    pub omega_ineq: Vec<PolyFunction>,
    pub omega_eq: Vec<PolyFunction>,
    pub lower_obj: PolyFunction,
    pub g: Vec<PolyFunction>,
    pub h: Vec<PolyFunction>,
}

impl BilevelProgram {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        m: usize,
        upper_obj: PolyFunction,
        omega_ineq: Vec<PolyFunction>,
        omega_eq: Vec<PolyFunction>,
        lower_obj: PolyFunction,
        g: Vec<PolyFunction>,
        h: Vec<PolyFunction>,
    ) -> Result<Self> {
        let bp = BilevelProgram {
            n,
            m,
            upper_obj,
            omega_ineq,
            omega_eq,
            lower_obj,
            g,
            h,
        };
        bp.validate()?;
        Ok(bp)
    }

    pub fn num_vars(&self) -> usize {
        self.n + self.m
    }

    pub fn p(&self) -> usize {
        self.g.len()
    }

    pub fn q(&self) -> usize {
        self.h.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::instance(
                "m",
                "lower level needs at least one variable",
            ));
        }
        let nv = self.num_vars();
        let check = |field: &str, f: &PolyFunction| {
            if f.num_vars() != nv {
                Err(Error::instance(
                    field,
                    format!(
                        "declared over {} variables, expected n+m = {nv}",
                        f.num_vars()
                    ),
                ))
            } else {
                Ok(())
            }
        };
        check("F", &self.upper_obj)?;
        check("f", &self.lower_obj)?;
        for (i, c) in self.omega_ineq.iter().enumerate() {
            check(&format!("omega_ineq[{i}]"), c)?;
        }
        for (i, c) in self.omega_eq.iter().enumerate() {
            check(&format!("omega_eq[{i}]"), c)?;
        }
        for (i, c) in self.g.iter().enumerate() {
            check(&format!("g[{i}]"), c)?;
        }
        for (i, c) in self.h.iter().enumerate() {
            check(&format!("h[{i}]"), c)?;
        }
        Ok(())
    }

    pub fn join(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.num_vars());
        w.extend_from_slice(x);
        w.extend_from_slice(y);
        w
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::dim("upper-level point", self.n, x.len()));
        }
        Ok(())
    }

    /// Largest violation of the `Ω` rows at `(x, y)`.
    pub fn omega_violation(&self, x: &[f64], y: &[f64]) -> f64 {
        let w = self.join(x, y);
        let a = self.omega_ineq.iter().map(|c| c.value(&w).max(0.0));
        let b = self.omega_eq.iter().map(|c| c.value(&w).abs());
        a.chain(b).fold(0.0, f64::max)
    }

    /// Largest violation of the lower-level constraints at `(x, y)`.
    pub fn lower_violation(&self, x: &[f64], y: &[f64]) -> f64 {
        let w = self.join(x, y);
        let a = self.g.iter().map(|c| c.value(&w).max(0.0));
        let b = self.h.iter().map(|c| c.value(&w).abs());
        a.chain(b).fold(0.0, f64::max)
    }

    /// The lower-level problem at fixed `x`, as an NLP over `y`.
    pub fn lower_problem(&self, x: &[f64]) -> Result<Nlp> {
        self.check_x(x)?;
        let fixed: Vec<Option<f64>> = x
            .iter()
            .map(|&v| Some(v))
            .chain(std::iter::repeat_n(None, self.m))
            .collect();
        let sub = |f: &PolyFunction| f.substitute(&fixed);
        let mut nlp = Nlp::generic(sub(&self.lower_obj)?);
        for c in &self.g {
            nlp.push_ineq_generic(sub(c)?)?;
        }
        for c in &self.h {
            nlp.push_eq_generic(sub(c)?)?;
        }
        Ok(nlp)
    }

    /// Solves the lower level at fixed `x`.
    ///
    /// Uses the simplex method when the lower level is affine in `y`, otherwise
    /// the SQP solver started from `y = 0` (a local solution).
    pub fn lower_solve(&self, x: &[f64]) -> Result<LowerSolution> {
        let lower = self.lower_problem(x)?;
        let affine = lower.objective.is_affine()
            && lower.ineq.iter().all(|c| c.func.is_affine())
            && lower.eq.iter().all(|c| c.func.is_affine());
        if affine {
            return Ok(solve_affine_lower(&lower));
        }
        let sol = solve_nlp(&lower, &vec![0.0; self.m], 1e-9)?;
        let status = match sol.status {
            NlpStatus::KktPoint => LowerStatus::Optimal,
            NlpStatus::Unbounded => LowerStatus::Unbounded,
            _ => LowerStatus::NotSolved,
        };
        let value = lower.objective.value(&sol.point);
        Ok(LowerSolution {
            status,
            y: sol.point,
            u: sol.multipliers.ineq,
            v: sol.multipliers.eq,
            value,
        })
    }
}

fn solve_affine_lower(lower: &Nlp) -> LowerSolution {
    let m = lower.num_vars;
    let (c, _) = lower.objective.affine_parts().expect("affine objective");
    let mut lp = LpProblem::new(c);
    for row in &lower.ineq {
        let (a, k) = row.func.affine_parts().expect("affine row");
        lp.push(LpRow::le(a, -k));
    }
    for row in &lower.eq {
        let (a, k) = row.func.affine_parts().expect("affine row");
        lp.push(LpRow::eq(a, -k));
    }
    let p = lower.ineq.len();
    let (status, y, duals) = match solve_lp(&lp) {
        Ok(sol) => {
            let status = match sol.status {
                LpStatus::Optimal => LowerStatus::Optimal,
                LpStatus::Infeasible => LowerStatus::Infeasible,
                LpStatus::Unbounded => LowerStatus::Unbounded,
                LpStatus::NumericalFailure => LowerStatus::NotSolved,
            };
            (status, sol.x, sol.duals)
        }
        Err(_) => (
            LowerStatus::NotSolved,
            vec![0.0; m],
            vec![0.0; lp.rows.len()],
        ),
    };
    finish_lower(lower, status, y, duals, p)
}

fn finish_lower(
    lower: &Nlp,
    status: LowerStatus,
    y: Vec<f64>,
    duals: Vec<f64>,
    p: usize,
) -> LowerSolution {
    if status != LowerStatus::Optimal {
        let value = if status == LowerStatus::Infeasible {
            f64::INFINITY
        } else if status == LowerStatus::Unbounded {
            f64::NEG_INFINITY
        } else {
            f64::NAN
        };
        return LowerSolution {
            status,
            y: vec![0.0; lower.num_vars],
            u: vec![0.0; p],
            v: vec![0.0; lower.eq.len()],
            value,
        };
    }
    let u = duals[..p].iter().map(|d| (-d).max(0.0)).collect();
    let v = duals[p..].iter().map(|d| -d).collect();
    let value = lower.objective.value(&y);
    LowerSolution {
        status,
        y,
        u,
        v,
        value,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LowerStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NotSolved,
}

/// Lower-level solution with multipliers `u` (for `g`) and `v` (for `h`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerSolution {
    pub status: LowerStatus,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `f(x, y*)`, `+∞` when infeasible.
    pub value: f64,
}

/// Linear bilevel program
///
/// ```text
/// min c1ᵀx + c2ᵀy  s.t. A1 x ≤ b1,
///     y ∈ argmin { d2ᵀy : A2 x + B2 y ≤ b2, bl ≤ y ≤ bu }.
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearBilevel {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    #[serde(rename = "A1")]
    pub a1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub d2: Vec<f64>,
    #[serde(rename = "A2")]
    pub a2: Vec<Vec<f64>>,
    #[serde(rename = "B2")]
    pub b2_mat: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
    pub bl: Vec<f64>,
    pub bu: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LinearBilevel {
    pub fn n(&self) -> usize {
        self.c1.len()
    }

    pub fn m(&self) -> usize {
        self.c2.len()
    }

    pub fn l(&self) -> usize {
        self.b1.len()
    }

    pub fn p(&self) -> usize {
        self.b2.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m, l, p) = (self.n(), self.m(), self.l(), self.p());
        if n == 0 {
            return Err(Error::instance(
                "c1",
                "upper level needs at least one variable",
            ));
        }
        if m == 0 {
            return Err(Error::instance(
                "c2",
                "lower level needs at least one variable",
            ));
        }
        let vec_len = |field: &str, v: &[f64], len: usize| -> Result<()> {
            if v.len() != len {
                return Err(Error::instance(
                    field,
                    format!("expected length {len}, got {}", v.len()),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::instance(field, "entries must be finite"));
            }
            Ok(())
        };
        let mat = |field: &str, a: &[Vec<f64>], rows: usize, cols: usize| -> Result<()> {
            if a.len() != rows {
                return Err(Error::instance(
                    field,
                    format!("expected {rows} rows, got {}", a.len()),
                ));
            }
            for (i, r) in a.iter().enumerate() {
                vec_len(&format!("{field}[{i}]"), r, cols)?;
            }
            Ok(())
        };
        vec_len("c1", &self.c1, n)?;
        vec_len("c2", &self.c2, m)?;
        mat("A1", &self.a1, l, n)?;
        vec_len("b1", &self.b1, l)?;
        vec_len("d2", &self.d2, m)?;
        mat("A2", &self.a2, p, n)?;
        mat("B2", &self.b2_mat, p, m)?;
        vec_len("b2", &self.b2, p)?;
        vec_len("bl", &self.bl, m)?;
        vec_len("bu", &self.bu, m)?;
        if let Some(j) = (0..m).find(|&j| self.bl[j] > self.bu[j]) {
            return Err(Error::instance(
                "bl",
                format!("bl[{j}] = {} exceeds bu[{j}] = {}", self.bl[j], self.bu[j]),
            ));
        }
        Ok(())
    }

    pub fn upper_objective(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(&self.c1, x) + dot(&self.c2, y)
    }

    /// The lower-level LP at fixed `x`, with the box as variable bounds.
    pub fn lower_lp(&self, x: &[f64]) -> Result<LpProblem> {
        if x.len() != self.n() {
            return Err(Error::dim("upper-level point", self.n(), x.len()));
        }
        let mut lp = LpProblem::new(self.d2.clone());
        lp.lower = self.bl.clone();
        lp.upper = self.bu.clone();
        for i in 0..self.p() {
            lp.push(LpRow::le(
                self.b2_mat[i].clone(),
                self.b2[i] - dot(&self.a2[i], x),
            ));
        }
        Ok(lp)
    }

    /// Lower-level solve with multipliers ordered as in [`Self::to_general`]:
    /// `u = (u1 for A2x+B2y ≤ b2, u2 for y ≤ bu, u3 for bl ≤ y)`.
    pub fn lower_solve(&self, x: &[f64]) -> Result<LowerSolution> {
        let lp = self.lower_lp(x)?;
        let (m, p) = (self.m(), self.p());
        let sol = solve_lp(&lp)?;
        let status = match sol.status {
            LpStatus::Optimal => LowerStatus::Optimal,
            LpStatus::Infeasible => LowerStatus::Infeasible,
            LpStatus::Unbounded => LowerStatus::Unbounded,
            LpStatus::NumericalFailure => LowerStatus::NotSolved,
        };
        if status != LowerStatus::Optimal {
            return Ok(LowerSolution {
                status,
                y: vec![0.0; m],
                u: vec![0.0; p + 2 * m],
                v: Vec::new(),
                value: if status == LowerStatus::Infeasible {
                    f64::INFINITY
                } else {
                    f64::NAN
                },
            });
        }
        let mut u: Vec<f64> = sol.duals.iter().map(|d| (-d).max(0.0)).collect();
        u.extend(sol.reduced_costs.iter().map(|d| (-d).max(0.0)));
        u.extend(sol.reduced_costs.iter().map(|d| d.max(0.0)));
        Ok(LowerSolution {
            status,
            value: sol.objective,
            y: sol.x,
            u,
            v: Vec::new(),
        })
    }

    /// Lifts into the general form. The lower constraints become
    /// `[A2x + B2y − b2; y − bu; bl − y] ≤ 0`.
    pub fn to_general(&self) -> BilevelProgram {
        let (n, m) = (self.n(), self.m());
        let nv = n + m;
        let affine = |cx: &[f64], cy: &[f64], k: f64| {
            let mut coeffs = Vec::with_capacity(nv);
            coeffs.extend_from_slice(cx);
            coeffs.extend_from_slice(cy);
            PolyFunction::affine(&coeffs, k).expect("finite affine data")
        };
        let zx = vec![0.0; n];
        let zy = vec![0.0; m];
        let upper_obj = affine(&self.c1, &self.c2, 0.0);
        let omega_ineq = (0..self.l())
            .map(|i| affine(&self.a1[i], &zy, -self.b1[i]))
            .collect();
        let lower_obj = affine(&zx, &self.d2, 0.0);
        let mut g: Vec<PolyFunction> = (0..self.p())
            .map(|i| affine(&self.a2[i], &self.b2_mat[i], -self.b2[i]))
            .collect();
        for j in 0..m {
            let mut e = zy.clone();
            e[j] = 1.0;
            g.push(affine(&zx, &e, -self.bu[j]));
        }
        for j in 0..m {
            let mut e = zy.clone();
            e[j] = -1.0;
            g.push(affine(&zx, &e, self.bl[j]));
        }
        BilevelProgram {
            n,
            m,
            upper_obj,
            omega_ineq,
            omega_eq: Vec::new(),
            lower_obj,
            g,
            h: Vec::new(),
        }
    }
}

/// `V(x)`: the lower-level optimal value, `+∞` when the lower level is
/// infeasible and NaN on numerical failure.
pub fn value_function(lin: &LinearBilevel, x: &[f64]) -> Result<f64> {
    Ok(lin.lower_solve(x)?.value)
}

/// An instance file: `{"type": "linear", ...}` or `{"type": "general", ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Instance {
    Linear(LinearBilevel),
    General(GeneralRepr),
}

/// JSON layout of a general program; polynomials are term lists over `(x|y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralRepr {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "F")]
    pub upper_obj: Vec<Term>,
    #[serde(default)]
    pub omega_ineq: Vec<Vec<Term>>,
    #[serde(default)]
    pub omega_eq: Vec<Vec<Term>>,
    pub f: Vec<Term>,
    #[serde(default)]
    pub g: Vec<Vec<Term>>,
    #[serde(default)]
    pub h: Vec<Vec<Term>>,
}

impl From<&BilevelProgram> for GeneralRepr {
    fn from(bp: &BilevelProgram) -> Self {
        let list = |v: &[PolyFunction]| v.iter().map(|p| p.to_term_list()).collect();
        GeneralRepr {
            n: bp.n,
            m: bp.m,
            upper_obj: bp.upper_obj.to_term_list(),
            omega_ineq: list(&bp.omega_ineq),
            omega_eq: list(&bp.omega_eq),
            f: bp.lower_obj.to_term_list(),
            g: list(&bp.g),
            h: list(&bp.h),
        }
    }
}

impl TryFrom<&GeneralRepr> for BilevelProgram {
    type Error = Error;

    fn try_from(r: &GeneralRepr) -> Result<Self> {
        let nv = r.n + r.m;
        let one = |field: &str, t: &[Term]| {
            PolyFunction::from_term_list(nv, t).map_err(|e| Error::instance(field, e.to_string()))
        };
        let many = |field: &str, ts: &[Vec<Term>]| {
            ts.iter()
                .enumerate()
                .map(|(i, t)| one(&format!("{field}[{i}]"), t))
                .collect::<Result<Vec<_>>>()
        };
        BilevelProgram::new(
            r.n,
            r.m,
            one("F", &r.upper_obj)?,
            many("omega_ineq", &r.omega_ineq)?,
            many("omega_eq", &r.omega_eq)?,
            one("f", &r.f)?,
            many("g", &r.g)?,
            many("h", &r.h)?,
        )
    }
}

impl Instance {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut doc: serde_json::Value = crate::error::parse_json(text)?;
        let obj = doc
            .as_object_mut()
            .ok_or_else(|| Error::instance("<document>", "expected a JSON object"))?;
        let inst = match obj.remove("type").as_ref().and_then(|t| t.as_str()) {
            Some("linear") => Instance::Linear(crate::error::parse_value(&doc)?),
            Some("general") => Instance::General(crate::error::parse_value(&doc)?),
            Some(other) => {
                return Err(Error::instance(
                    "type",
                    format!("unknown instance type `{other}` (expected linear or general)"),
                ))
            }
            None => return Err(Error::instance("type", "missing string field `type`")),
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Instance::Linear(l) => l.validate(),
            Instance::General(g) => BilevelProgram::try_from(g).map(|_| ()),
        }
    }

    pub fn program(&self) -> Result<BilevelProgram> {
        match self {
            Instance::Linear(l) => Ok(l.to_general()),
            Instance::General(g) => BilevelProgram::try_from(g),
        }
    }

    pub fn linear(&self) -> Option<&LinearBilevel> {
        match self {
            Instance::Linear(l) => Some(l),
            Instance::General(_) => None,
        }
    }
}
