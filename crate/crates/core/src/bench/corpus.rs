//! Checks the documented facts of the worked examples.

use serde::Serialize;

use crate::bench::fixtures::{worked_examples, Expectation, WorkedExample};
use crate::diagnostics::{check_kkt, check_mfcq, check_s_stationary, CertificateKind, ACTIVE_TOL};
use crate::error::Result;
use crate::nlp::{solve_nlp, NlpStatus};
use crate::reformulate::{build_mdp, build_mpcc, build_wdp, Nlp, RelaxationScheme};
use crate::relaxation::{run, RelaxationParams};

/// Objective tolerance of an optimum check.
pub const VALUE_TOL: f64 = 1e-4;
/// Distance tolerance of an optimum check.
pub const POINT_TOL: f64 = 1e-3;
/// Start of the Wolfe divergence check: `(0, k, −k, 3k² + 1)` with `k = 2`.
pub const WDP_START: [f64; 4] = [0.0, 2.0, -2.0, 13.0];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExampleOutcome {
    pub name: String,
    pub checks: Vec<CheckOutcome>,
}

impl ExampleOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Largest `|dᵀ∇e|` over equality rows and largest `dᵀ∇c` over active
/// inequality rows and bounds.
pub fn direction_signs(p: &Nlp, point: &[f64], d: &[f64]) -> Result<(f64, f64)> {
    let mut eq: f64 = 0.0;
    for c in &p.eq {
        eq = eq.max(dot(&c.func.grad(point)?, d).abs());
    }
    let mut ineq = f64::NEG_INFINITY;
    for c in &p.ineq {
        if c.func.value(point) >= -ACTIVE_TOL {
            ineq = ineq.max(dot(&c.func.grad(point)?, d));
        }
    }
    for k in 0..p.num_vars {
        if p.lower[k].is_finite() && point[k] - p.lower[k] <= ACTIVE_TOL {
            ineq = ineq.max(-d[k]);
        }
        if p.upper[k].is_finite() && p.upper[k] - point[k] <= ACTIVE_TOL {
            ineq = ineq.max(d[k]);
        }
    }
    Ok((eq, ineq))
}

fn check(label: &str, outcome: Result<(bool, String)>) -> CheckOutcome {
    match outcome {
        Ok((passed, detail)) => CheckOutcome {
            label: label.to_string(),
            passed,
            detail,
        },
        Err(e) => CheckOutcome {
            label: label.to_string(),
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn expectation(ex: &WorkedExample, e: &Expectation, params: &RelaxationParams) -> CheckOutcome {
    let bp = &ex.program;
    match e {
        Expectation::MdpOptimum { value, .. } => check(
            "Mond-Weir relaxation reaches the optimum",
            (|| {
                let r = run(bp, RelaxationScheme::Mdp2, params, None)?;
                let mut xy = r.x.clone();
                xy.extend_from_slice(&r.y);
                let mut opt = ex.optimum.x.clone();
                opt.extend_from_slice(&ex.optimum.y);
                let dv = (r.objective - value).abs();
                let dp = dist_inf(&xy, &opt);
                Ok((
                    dv <= VALUE_TOL && dp <= POINT_TOL,
                    format!(
                        "objective {:.6} (target {value}), |(x,y) − opt| = {dp:.2e}, {:?}",
                        r.objective, r.reason
                    ),
                ))
            })(),
        ),
        Expectation::WdpUnbounded => check(
            "Wolfe reformulation is unbounded",
            (|| {
                let wdp = build_wdp(bp)?;
                let s = solve_nlp(&wdp, &WDP_START, params.eps_sqp)?;
                let witness = s
                    .divergence_witness
                    .as_ref()
                    .map(|w| (wdp.objective.value(w), wdp.max_violation(w)));
                let ok = s.status == NlpStatus::Unbounded
                    && witness.is_some_and(|(f, v)| f < -1e6 && v <= 1e-3);
                Ok((
                    ok,
                    format!(
                        "{:?} at objective {:.3e}; feasible witness {:?}",
                        s.status, s.objective, witness
                    ),
                ))
            })(),
        ),
        Expectation::MdpMfcq { point, direction } => check(
            "MFCQ holds for the Mond-Weir reformulation",
            (|| {
                let mdp = build_mdp(bp)?;
                let cert = check_mfcq(&mdp, point)?;
                let (eq, ineq) = direction_signs(&mdp, point, direction)?;
                Ok((
                    cert.kind == CertificateKind::MfcqDirection && eq <= 1e-10 && ineq < 0.0,
                    format!(
                        "{:?}, margin {:?}; published direction: max |dᵀ∇h| = {eq:.1e}, max dᵀ∇g = {ineq}",
                        cert.kind, cert.margin
                    ),
                ))
            })(),
        ),
        Expectation::MpccSStationary { point } => check(
            "S-stationary for the complementarity reformulation",
            (|| {
                let cert = check_s_stationary(&build_mpcc(bp)?, point)?;
                Ok((
                    cert.kind == CertificateKind::SStationary,
                    format!("{:?}, residual {:.1e}", cert.kind, cert.residual),
                ))
            })(),
        ),
        Expectation::MdpNotKkt { point } => check(
            "not a KKT point of the Mond-Weir reformulation",
            (|| {
                let cert = check_kkt(&build_mdp(bp)?, point)?;
                let gap = cert.phase1_gap.unwrap_or(0.0);
                Ok((
                    cert.kind == CertificateKind::NotKkt && gap >= 1.0,
                    format!("{:?}, stationarity gap {gap}", cert.kind),
                ))
            })(),
        ),
    }
}

pub fn verify_example(ex: &WorkedExample, params: &RelaxationParams) -> ExampleOutcome {
    ExampleOutcome {
        name: ex.name.to_string(),
        checks: ex
            .expected
            .iter()
            .map(|e| expectation(ex, e, params))
            .collect(),
    }
}

pub fn verify_corpus(params: &RelaxationParams) -> Vec<ExampleOutcome> {
    worked_examples()
        .iter()
        .map(|ex| verify_example(ex, params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_example_passes_with_defaults() {
        for out in verify_corpus(&RelaxationParams::default()) {
            assert!(out.passed(), "{out:#?}");
        }
    }
}
