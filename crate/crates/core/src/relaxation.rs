//! Outer relaxation loop: warm start from the lower level, solve the relaxed
//! problem, test termination, shrink `t`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{general_infeasibility, infeasibility, InfeasibilityReport};
use crate::error::{Error, Result};
use crate::lp::{feasible_point, Feasibility, LpRow};
use crate::model::{BilevelProgram, LinearBilevel, LowerSolution, LowerStatus};
use crate::nlp::{solve_nlp, KktResidual, NlpStatus};
use crate::poly::PolyFunction;
use crate::reformulate::{build_base, build_relaxed, BlockName, Nlp, RelaxationScheme};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxationParams {
    pub t0: f64,
    pub sigma: f64,
    pub eps_r: f64,
    pub eps_sqp: f64,
    pub max_outer: usize,
}

impl Default for RelaxationParams {
    fn default() -> Self {
        RelaxationParams {
            t0: 0.1,
            sigma: 0.5,
            eps_r: 1e-8,
            eps_sqp: 1e-16,
            max_outer: 40,
        }
    }
}

impl RelaxationParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidParameter(format!("{what} = {v}")));
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return bad("t0 must be positive and finite, got t0", self.t0);
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return bad("sigma must lie in (0, 1), got sigma", self.sigma);
        }
        if !(self.eps_r > 0.0 && self.eps_r.is_finite()) {
            return bad("eps_r must be positive and finite, got eps_r", self.eps_r);
        }
        if !(self.eps_sqp > 0.0 && self.eps_sqp.is_finite()) {
            return bad(
                "eps_sqp must be positive and finite, got eps_sqp",
                self.eps_sqp,
            );
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidParameter(
                "max_outer must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Outer iterations needed for `t` to reach `eps_r` from `t0`, plus one.
    pub fn outer_bound(&self) -> usize {
        if self.t0 <= self.eps_r {
            return 1;
        }
        ((self.eps_r / self.t0).ln() / self.sigma.ln()).ceil() as usize + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalReason {
    CriterionMet,
    TMin,
    Unbounded,
    IterLimit,
}

/// Where the inner solve of an outer iteration started.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WarmStart {
    LowerLevel,
    Zeros,
    Previous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterIteration {
    pub k: usize,
    pub t: f64,
    pub warm_start: WarmStart,
    pub status: NlpStatus,
    pub objective: f64,
    pub inner_iterations: usize,
    /// Seconds.
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub scheme: RelaxationScheme,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Option<Vec<f64>>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Full iterate in the layout of the reformulation.
    pub point: Vec<f64>,
    pub objective: f64,
    pub infeasibility: InfeasibilityReport,
    /// KKT residual of the last relaxed problem.
    pub kkt: KktResidual,
    /// Constraint violation of the final iterate for the unrelaxed problem.
    pub base_violation: f64,
    pub trace: Vec<OuterIteration>,
    pub reason: TerminalReason,
    /// Total wall time in seconds.
    pub time: f64,
}

/// Residual of the scheme's stopping test at `w`.
pub fn termination_residual(
    bp: &BilevelProgram,
    scheme: RelaxationScheme,
    w: &[f64],
) -> Result<f64> {
    let (n, m, p, q) = (bp.n, bp.m, bp.p(), bp.q());
    let expected = n + m + if scheme.has_z() { m } else { 0 } + p + q;
    if w.len() != expected {
        return Err(Error::dim("relaxation iterate", expected, w.len()));
    }
    let x = &w[..n];
    let y = &w[n..n + m];
    let rest = &w[n + m..];
    let (z, u, v) = if scheme.has_z() {
        (&rest[..m], &rest[m..m + p], &rest[m + p..])
    } else {
        (y, &rest[..p], &rest[p..])
    };
    let xy = bp.join(x, y);
    let xz = bp.join(x, z);
    let pairing = |at: &[f64]| -> f64 { dot_eval(&bp.g, u, at) + dot_eval(&bp.h, v, at) };
    let value_gap = bp.lower_obj.value(&xy) - bp.lower_obj.value(&xz);
    Ok(match scheme {
        RelaxationScheme::Mdp1 => value_gap.abs(),
        RelaxationScheme::Mdp2 => pairing(&xz).abs(),
        RelaxationScheme::Mdp3 => value_gap.abs().max(pairing(&xz).abs()),
        RelaxationScheme::WdpT => value_gap - pairing(&xz),
        RelaxationScheme::MpccT => pairing(&xy).abs(),
    })
}

fn dot_eval(funcs: &[PolyFunction], weights: &[f64], at: &[f64]) -> f64 {
    funcs
        .iter()
        .zip(weights)
        .map(|(f, w)| w * f.value(at))
        .sum()
}

/// True when `t_k ≤ eps_r` or the scheme's residual test holds at `w`.
pub fn termination_met(
    bp: &BilevelProgram,
    scheme: RelaxationScheme,
    w: &[f64],
    t_k: f64,
    eps_r: f64,
) -> Result<bool> {
    let r = termination_residual(bp, scheme, w)?;
    Ok(t_k <= eps_r || r <= eps_r)
}

/// A point `x` with `(x, y)` satisfying the upper constraints for some `y`.
///
/// Affine constraints go through phase 1 of the simplex method; otherwise the
/// SQP solver minimizes zero subject to them from the origin.
pub fn initial_upper_point(bp: &BilevelProgram) -> Result<Vec<f64>> {
    let nv = bp.num_vars();
    let affine = bp
        .omega_ineq
        .iter()
        .chain(&bp.omega_eq)
        .all(|c| c.is_affine());
    if affine {
        let mut rows = Vec::new();
        for c in &bp.omega_ineq {
            let (a, k) = c.affine_parts().expect("affine row");
            rows.push(LpRow::le(a, -k));
        }
        for c in &bp.omega_eq {
            let (a, k) = c.affine_parts().expect("affine row");
            rows.push(LpRow::eq(a, -k));
        }
        return match feasible_point(
            &rows,
            &vec![f64::NEG_INFINITY; nv],
            &vec![f64::INFINITY; nv],
        )? {
            Feasibility::Feasible(w) => Ok(w[..bp.n].to_vec()),
            Feasibility::Infeasible(_) => Err(Error::Structure(
                "upper-level constraints are infeasible".into(),
            )),
            Feasibility::NumericalFailure => Err(Error::Structure(
                "phase 1 failed on the upper-level constraints".into(),
            )),
        };
    }
    let mut p = Nlp::generic(PolyFunction::zero(nv));
    for c in &bp.omega_ineq {
        p.push_ineq_generic(c.clone())?;
    }
    for c in &bp.omega_eq {
        p.push_eq_generic(c.clone())?;
    }
    let sol = solve_nlp(&p, &vec![0.0; nv], 1e-9)?;
    let viol = p.max_violation(&sol.point);
    if viol > 1e-8 {
        return Err(Error::InfeasiblePoint {
            violation: viol,
            tolerance: 1e-8,
        });
    }
    Ok(sol.point[..bp.n].to_vec())
}

/// Runs the relaxation loop on a general program.
pub fn run(
    bp: &BilevelProgram,
    scheme: RelaxationScheme,
    params: &RelaxationParams,
    x0: Option<&[f64]>,
) -> Result<SolveReport> {
    bp.validate()?;
    let x0 = match x0 {
        Some(x) => x.to_vec(),
        None => initial_upper_point(bp)?,
    };
    drive(bp, scheme, params, x0, &|x| bp.lower_solve(x), &|x, y| {
        general_infeasibility(bp, x, y)
    })
}

/// Runs the relaxation loop on a linear program, using the simplex method for
/// the lower level and the linear infeasibility measure.
pub fn run_linear(
    lin: &LinearBilevel,
    scheme: RelaxationScheme,
    params: &RelaxationParams,
    x0: Option<&[f64]>,
) -> Result<SolveReport> {
    lin.validate()?;
    let bp = lin.to_general();
    let x0 = match x0 {
        Some(x) => {
            if x.len() != lin.n() {
                return Err(Error::dim("initial point", lin.n(), x.len()));
            }
            let viol = (0..lin.l())
                .map(|i| lin.a1[i].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - lin.b1[i])
                .fold(0.0, f64::max);
            if viol > 1e-9 {
                return Err(Error::InfeasiblePoint {
                    violation: viol,
                    tolerance: 1e-9,
                });
            }
            x.to_vec()
        }
        None => initial_upper_point(&bp)?,
    };
    drive(&bp, scheme, params, x0, &|x| lin.lower_solve(x), &|x, y| {
        infeasibility(lin, x, y)
    })
}

type LowerFn<'a> = &'a dyn Fn(&[f64]) -> Result<LowerSolution>;
type InfeasFn<'a> = &'a dyn Fn(&[f64], &[f64]) -> Result<InfeasibilityReport>;

fn assemble(nlp: &Nlp, x: &[f64], y: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; nlp.num_vars];
    let mut put = |name: BlockName, vals: &[f64]| {
        if let Some(r) = nlp.block(name) {
            w[r].copy_from_slice(vals);
        }
    };
    put(BlockName::X, x);
    put(BlockName::Y, y);
    put(BlockName::Z, y);
    put(BlockName::U, u);
    put(BlockName::V, v);
    w
}

fn drive(
    bp: &BilevelProgram,
    scheme: RelaxationScheme,
    params: &RelaxationParams,
    x0: Vec<f64>,
    lower: LowerFn,
    infeas: InfeasFn,
) -> Result<SolveReport> {
    params.validate()?;
    if x0.len() != bp.n {
        return Err(Error::dim("initial point", bp.n, x0.len()));
    }
    let started = Instant::now();
    let (m, p, q) = (bp.m, bp.p(), bp.q());
    let mut x_tilde = x0;
    let mut t = params.t0;
    let mut trace = Vec::new();
    let mut last: Option<(Vec<f64>, f64, KktResidual)> = None;
    let mut reason = TerminalReason::IterLimit;

    for k in 0..params.max_outer {
        let outer_start = Instant::now();
        let nlp = build_relaxed(bp, scheme, t)?;
        let ls = lower(&x_tilde)?;
        let (start, warm_start) = if ls.status == LowerStatus::Optimal {
            (
                assemble(&nlp, &x_tilde, &ls.y, &ls.u, &ls.v),
                WarmStart::LowerLevel,
            )
        } else {
            match &last {
                Some((w, _, _)) => (w.clone(), WarmStart::Previous),
                None => (
                    assemble(&nlp, &x_tilde, &vec![0.0; m], &vec![0.0; p], &vec![0.0; q]),
                    WarmStart::Zeros,
                ),
            }
        };
        let sol = solve_nlp(&nlp, &start, params.eps_sqp)?;
        trace.push(OuterIteration {
            k,
            t,
            warm_start,
            status: sol.status,
            objective: sol.objective,
            inner_iterations: sol.iterations,
            time: outer_start.elapsed().as_secs_f64(),
        });
        last = Some((sol.point.clone(), sol.objective, sol.kkt));
        if sol.status == NlpStatus::Unbounded {
            reason = TerminalReason::Unbounded;
            break;
        }
        if termination_residual(bp, scheme, &sol.point)? <= params.eps_r {
            reason = TerminalReason::CriterionMet;
            break;
        }
        if t <= params.eps_r {
            reason = TerminalReason::TMin;
            break;
        }
        x_tilde = sol.point[..bp.n].to_vec();
        t = (params.sigma * t).max(params.eps_r);
    }

    let (point, objective, kkt) = last.expect("at least one outer iteration");
    let base = build_base(bp, scheme)?;
    let base_violation = base.max_violation(&point);
    let block = |name| base.slice(&point, name).to_vec();
    let x = block(BlockName::X);
    let y = block(BlockName::Y);
    let z = scheme.has_z().then(|| block(BlockName::Z));
    let infeasibility = if point.iter().all(|v| v.is_finite()) {
        infeas(&x, &y)?
    } else {
        InfeasibilityReport {
            upper_violation: f64::INFINITY,
            lower_feasibility_violation: f64::INFINITY,
            bound_violation: f64::INFINITY,
            optimality_gap: f64::INFINITY,
            total: f64::INFINITY,
            value_undefined: true,
        }
    };
    Ok(SolveReport {
        scheme,
        u: block(BlockName::U),
        v: block(BlockName::V),
        x,
        y,
        z,
        objective,
        infeasibility,
        kkt,
        base_violation,
        trace,
        reason,
        time: started.elapsed().as_secs_f64(),
        point,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::fixtures::{motivating_example, unique_optimum_example};

    #[test]
    fn default_parameters() {
        let p = RelaxationParams::default();
        assert_eq!((p.t0, p.sigma, p.eps_r, p.max_outer), (0.1, 0.5, 1e-8, 40));
        assert!(p.validate().is_ok());
        assert_eq!(p.outer_bound(), 25);
    }

    #[test]
    fn parameter_validation() {
        let base = RelaxationParams::default();
        for bad in [
            RelaxationParams { t0: 0.0, ..base },
            RelaxationParams { sigma: 1.0, ..base },
            RelaxationParams { sigma: 0.0, ..base },
            RelaxationParams {
                eps_r: -1.0,
                ..base
            },
            RelaxationParams {
                eps_sqp: f64::NAN,
                ..base
            },
            RelaxationParams {
                max_outer: 0,
                ..base
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn small_t_always_terminates() {
        let ex = motivating_example();
        let w = [0.3, -2.0, 5.0, 1.0];
        assert!(termination_met(&ex.program, RelaxationScheme::Mdp1, &w, 1e-9, 1e-8).unwrap());
        assert!(!termination_met(&ex.program, RelaxationScheme::Mdp1, &w, 0.1, 1e-8).unwrap());
    }

    #[test]
    fn equal_lower_values_terminate_mdp1() {
        let ex = motivating_example();
        let w = [0.5, 0.7, 0.7, 9.0];
        assert!(termination_met(&ex.program, RelaxationScheme::Mdp1, &w, 0.1, 1e-8).unwrap());
    }

    #[test]
    fn small_pairing_terminates_mdp2() {
        // u·(x − z) = −5e−9
        let ex = motivating_example();
        let w = [0.0, 3.0, 1e-9, 5.0];
        let r = termination_residual(&ex.program, RelaxationScheme::Mdp2, &w).unwrap();
        assert!((r - 5e-9).abs() < 1e-20);
        assert!(termination_met(&ex.program, RelaxationScheme::Mdp2, &w, 0.1, 1e-8).unwrap());
    }

    #[test]
    fn dimension_check() {
        let ex = motivating_example();
        assert!(termination_residual(&ex.program, RelaxationScheme::Mdp1, &[0.0; 3]).is_err());
        assert!(termination_residual(&ex.program, RelaxationScheme::MpccT, &[0.0; 3]).is_ok());
    }

    #[test]
    fn cubic_example_mdp1() {
        let ex = motivating_example();
        let r = run(
            &ex.program,
            RelaxationScheme::Mdp1,
            &RelaxationParams::default(),
            None,
        )
        .unwrap();
        assert!((r.objective + 2.0).abs() < 1e-4, "{r:?}");
        for (a, b) in r.point.iter().zip([1.0, 1.0, 1.0, 4.0]) {
            assert!((a - b).abs() < 1e-3, "{:?}", r.point);
        }
        for w in r.trace.windows(2) {
            assert!(w[1].t < w[0].t || w[1].t == 1e-8);
            assert_eq!(w[1].t, (0.5 * w[0].t).max(1e-8));
        }
        assert!(r.trace.len() <= RelaxationParams::default().outer_bound());
    }

    #[test]
    fn mfcq_example_mdp1_reports() {
        let ex = unique_optimum_example();
        let r = run(
            &ex.program,
            RelaxationScheme::Mdp1,
            &RelaxationParams::default(),
            None,
        )
        .unwrap();
        assert!(r.objective.is_finite());
        assert!(!r.trace.is_empty());
    }
}
