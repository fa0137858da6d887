#![allow(dead_code)]

use bilevel_core::lp::{solve_lp, LpProblem, LpRow, LpStatus};
use bilevel_core::poly::PolyFunction;
use bilevel_core::reformulate::Nlp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Feasible, box-bounded LP `min cᵀx` s.t. `Ax ≤ b`, `−3 ≤ x ≤ 3`, with a
/// strictly feasible point inside the box.
pub fn random_lp(seed: u64, max_vars: usize) -> LpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_vars);
    let r = rng.gen_range(1..=max_vars);
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut p = LpProblem::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    p.lower = vec![-3.0; n];
    p.upper = vec![3.0; n];
    for _ in 0..r {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = a.iter().zip(&x0).map(|(p, q)| p * q).sum::<f64>() + rng.gen_range(0.1..1.0);
        p.push(LpRow::le(a, b));
    }
    p
}

pub fn lp_as_nlp(p: &LpProblem) -> Nlp {
    let mut nlp = Nlp::generic(PolyFunction::affine(&p.c, 0.0).unwrap());
    for r in &p.rows {
        nlp.push_ineq_generic(PolyFunction::affine(&r.coeffs, -r.rhs).unwrap())
            .unwrap();
    }
    nlp.lower = p.lower.clone();
    nlp.upper = p.upper.clone();
    nlp
}

pub fn lp_optimum(p: &LpProblem) -> f64 {
    let s = solve_lp(p).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    s.objective
}

use bilevel_core::gen::{gen_linear, Dims};
use bilevel_core::model::{LinearBilevel, LowerSolution, LowerStatus};
use bilevel_core::nlp::solve_nlp;
use bilevel_core::reformulate::build_mond_weir_dual;

/// Starts for the Mond-Weir dual of `p`: the origin, two seeded random
/// points and the LP optimum with its multipliers mapped to the dual layout.
pub fn mond_weir_starts(p: &LpProblem, seed: u64) -> Vec<Vec<f64>> {
    let dual = build_mond_weir_dual(&lp_as_nlp(p)).unwrap();
    let nv = dual.num_vars;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![vec![0.0; nv]];
    for _ in 0..2 {
        let n = p.num_vars();
        starts.push(
            (0..nv)
                .map(|k| {
                    if k < n {
                        rng.gen_range(-3.0..3.0)
                    } else {
                        rng.gen_range(0.0..1.0)
                    }
                })
                .collect(),
        );
    }
    let s = solve_lp(p).unwrap();
    let mut w = s.x.clone();
    w.extend(s.duals.iter().map(|y| (-y).max(0.0)));
    for (k, rc) in s.reduced_costs.iter().enumerate() {
        if p.lower[k].is_finite() {
            w.push(rc.max(0.0));
        }
    }
    for (k, rc) in s.reduced_costs.iter().enumerate() {
        if p.upper[k].is_finite() {
            w.push((-rc).max(0.0));
        }
    }
    starts.push(w);
    starts
}

/// Local Mond-Weir dual solutions of an LP: `(value, violation)` from each
/// start of [`mond_weir_starts`].
pub fn mond_weir_values(p: &LpProblem, seed: u64) -> Vec<(f64, f64)> {
    let dual = build_mond_weir_dual(&lp_as_nlp(p)).unwrap();
    mond_weir_starts(p, seed)
        .iter()
        .map(|w| {
            let sol = solve_nlp(&dual, w, 1e-10).unwrap();
            (-sol.objective, dual.max_violation(&sol.point))
        })
        .collect()
}

/// Violation below which a dual iterate counts as feasible.
pub const DUAL_FEAS: f64 = 1e-8;

/// Best dual value over feasible local solutions, and the largest value
/// among them (for the weak duality check).
pub fn mond_weir_optimum(p: &LpProblem, seed: u64) -> Option<f64> {
    mond_weir_values(p, seed)
        .into_iter()
        .filter(|(_, v)| *v <= DUAL_FEAS)
        .map(|(d, _)| d)
        .reduce(f64::max)
}

/// Upper-level point satisfying `Ω` with a solvable lower level, drawn by
/// rejection from `[−r, r]ⁿ`.
pub fn admissible_x(lin: &LinearBilevel, seed: u64, r: f64) -> Option<(Vec<f64>, LowerSolution)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..200 {
        let x: Vec<f64> = (0..lin.n()).map(|_| rng.gen_range(-r..r)).collect();
        let omega = lin
            .a1
            .iter()
            .zip(&lin.b1)
            .all(|(a, b)| a.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= *b);
        if !omega {
            continue;
        }
        let low = lin.lower_solve(&x).unwrap();
        if low.status == LowerStatus::Optimal {
            return Some((x, low));
        }
    }
    None
}

pub fn small_instance(seed: u64) -> LinearBilevel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let dims = Dims::new(
        rng.gen_range(1..=3),
        rng.gen_range(1..=3),
        rng.gen_range(1..=3),
        rng.gen_range(1..=3),
    );
    gen_linear(dims, 0.5, seed).unwrap()
}

/// `(x | y | z | u)` in the dual layout.
pub fn dual_point(x: &[f64], y: &[f64], z: &[f64], u: &[f64]) -> Vec<f64> {
    [x, y, z, u].concat()
}

/// `(x | y | u)` in the complementarity layout.
pub fn mpcc_point(x: &[f64], y: &[f64], u: &[f64]) -> Vec<f64> {
    [x, y, u].concat()
}
