use bilevel_core::lp::{feasible_point, solve_lp, Feasibility, LpProblem, LpRow, LpStatus};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Box-bounded LP with `≤` rows through a known interior point, so it is
/// feasible and bounded.
fn bounded_lp() -> impl Strategy<Value = LpProblem> {
    (1..4usize, 0..5usize).prop_flat_map(|(n, r)| {
        (
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec((prop::collection::vec(-1.0..1.0f64, n), 0.0..1.0f64), r),
            prop::collection::vec(-0.5..0.5f64, n),
        )
            .prop_map(move |(c, rows, x0)| {
                let mut p = LpProblem::new(c);
                p.lower = vec![-2.0; n];
                p.upper = vec![2.0; n];
                for (a, slack) in rows {
                    let b = a.iter().zip(&x0).map(|(ai, xi)| ai * xi).sum::<f64>() + slack;
                    p.push(LpRow::le(a, b));
                }
                p
            })
    })
}

/// Brute-force optimum over all vertices of `{Ax ≤ b, lo ≤ x ≤ hi}`.
fn vertex_oracle(p: &LpProblem) -> f64 {
    let n = p.num_vars();
    let mut faces: Vec<(Vec<f64>, f64)> =
        p.rows.iter().map(|r| (r.coeffs.clone(), r.rhs)).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        faces.push((e.clone(), p.upper[j]));
        e[j] = -1.0;
        faces.push((e, -p.lower[j]));
    }
    let mut best = f64::INFINITY;
    let k = faces.len();
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a = DMatrix::from_fn(n, n, |i, j| faces[idx[i]].0[j]);
        let b = DVector::from_fn(n, |i, _| faces[idx[i]].1);
        if let Some(x) = a.lu().solve(&b) {
            let feasible = faces.iter().all(|(row, rhs)| {
                row.iter().zip(x.iter()).map(|(r, v)| r * v).sum::<f64>() <= rhs + 1e-9
            });
            if feasible && x.iter().all(|v| v.is_finite()) {
                let obj: f64 = p.c.iter().zip(x.iter()).map(|(c, v)| c * v).sum();
                best = best.min(obj);
            }
        }
        // next combination
        let mut i = n;
        while i > 0 && idx[i - 1] == k - n + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        idx[i - 1] += 1;
        for j in i..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn optimum_matches_vertex_enumeration(p in bounded_lp()) {
        let s = solve_lp(&p).unwrap();
        prop_assert_eq!(s.status, LpStatus::Optimal);
        let oracle = vertex_oracle(&p);
        prop_assert!((s.objective - oracle).abs() <= 1e-7 * (1.0 + oracle.abs()), "{} vs {}", s.objective, oracle);
        prop_assert!(p.max_violation(&s.x) <= 1e-9);
    }

    #[test]
    fn strong_duality_on_optimal(p in bounded_lp()) {
        let s = solve_lp(&p).unwrap();
        prop_assert_eq!(s.status, LpStatus::Optimal);
        let d = p.dual_objective(&s.duals);
        prop_assert!((s.objective - d).abs() <= 1e-8 * (1.0 + s.objective.abs()), "{} vs {d}", s.objective);
        for (r, y) in p.rows.iter().zip(&s.duals) {
            // `≤` rows carry nonpositive duals in the `c − Aᵀy` convention
            prop_assert!(*y <= 1e-9);
            prop_assert!((y * (r.rhs - r.coeffs.iter().zip(&s.x).map(|(a, x)| a * x).sum::<f64>())).abs() <= 1e-9);
        }
    }

    #[test]
    fn solves_are_bitwise_deterministic(p in bounded_lp()) {
        let a = solve_lp(&p).unwrap();
        let b = solve_lp(&p).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn shifted_infeasible_system_has_farkas_certificate(p in bounded_lp()) {
        let n = p.num_vars();
        let mut rows = p.rows.clone();
        // Σx ≥ 2n + 1 cannot hold on the box [−2, 2]ⁿ
        rows.push(LpRow::ge(vec![1.0; n], 2.0 * n as f64 + 1.0));
        match feasible_point(&rows, &p.lower, &p.upper).unwrap() {
            Feasibility::Infeasible(cert) => prop_assert!(cert.verify(&rows, &p.lower, &p.upper, 1e-9)),
            other => prop_assert!(false, "expected infeasible, got {other:?}"),
        }
    }
}

#[test]
fn free_variable_ray_is_unbounded() {
    let mut p = LpProblem::new(vec![-1.0, 0.0]);
    p.push(LpRow::le(vec![1.0, -1.0], 1.0));
    assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
}

#[test]
fn equality_rows_are_respected() {
    // min x + 2y s.t. x + y = 1, x − y ≤ 0.5, x, y ≥ 0  → x = 0.75, y = 0.25
    let mut p = LpProblem::new(vec![1.0, 2.0]);
    p.lower = vec![0.0, 0.0];
    p.push(LpRow::eq(vec![1.0, 1.0], 1.0));
    p.push(LpRow::le(vec![1.0, -1.0], 0.5));
    let s = solve_lp(&p).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.x[0] - 0.75).abs() < 1e-12 && (s.x[1] - 0.25).abs() < 1e-12);
    assert!((s.objective - 1.25).abs() < 1e-12);
}
