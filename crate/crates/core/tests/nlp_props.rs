use bilevel_core::nlp::{kkt_residual, solve_nlp, NlpStatus};
use bilevel_core::poly::PolyFunction;
use bilevel_core::reformulate::Nlp;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[derive(Clone, Debug)]
struct Qp {
    q: DMatrix<f64>,
    c: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

/// Strictly convex QP `½xᵀQx + cᵀx` with `≤` rows through a known point.
fn convex_qp() -> impl Strategy<Value = Qp> {
    (1..4usize, 1..5usize).prop_flat_map(|(n, r)| {
        (
            prop::collection::vec(-1.0..1.0f64, n * n),
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec((prop::collection::vec(-1.0..1.0f64, n), 0.0..1.0f64), r),
            prop::collection::vec(-1.0..1.0f64, n),
        )
            .prop_map(move |(m, c, rows, x0)| {
                let m = DMatrix::from_vec(n, n, m);
                let q = m.transpose() * &m + DMatrix::identity(n, n) * 0.1;
                let (a, b) = rows
                    .into_iter()
                    .map(|(a, s)| {
                        let b = a.iter().zip(&x0).map(|(p, q)| p * q).sum::<f64>() + s;
                        (a, b)
                    })
                    .unzip();
                Qp { q, c, a, b }
            })
    })
}

fn to_nlp(qp: &Qp) -> Nlp {
    let n = qp.c.len();
    let mut terms = Vec::new();
    for i in 0..n {
        terms.push((qp.c[i], vec![(i, 1)]));
        terms.push((0.5 * qp.q[(i, i)], vec![(i, 2)]));
        for j in i + 1..n {
            terms.push((qp.q[(i, j)], vec![(i, 1), (j, 1)]));
        }
    }
    let mut p = Nlp::generic(PolyFunction::from_terms(n, terms).unwrap());
    for (a, b) in qp.a.iter().zip(&qp.b) {
        p.push_ineq_generic(PolyFunction::affine(a, -b).unwrap())
            .unwrap();
    }
    p
}

fn objective(qp: &Qp, x: &DVector<f64>) -> f64 {
    0.5 * (x.transpose() * &qp.q * x)[(0, 0)]
        + qp.c.iter().zip(x.iter()).map(|(c, v)| c * v).sum::<f64>()
}

/// Enumerates active sets and keeps the pattern whose KKT system has a
/// feasible primal and nonnegative multipliers.
fn active_set_oracle(qp: &Qp) -> f64 {
    let n = qp.c.len();
    let r = qp.a.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << r) {
        let act: Vec<usize> = (0..r).filter(|i| mask & (1 << i) != 0).collect();
        let k = act.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.q);
        for i in 0..n {
            rhs[i] = -qp.c[i];
        }
        for (j, &row) in act.iter().enumerate() {
            for i in 0..n {
                kkt[(n + j, i)] = qp.a[row][i];
                kkt[(i, n + j)] = qp.a[row][i];
            }
            rhs[n + j] = qp.b[row];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let x = sol.rows(0, n).into_owned();
        let feasible =
            qp.a.iter()
                .zip(&qp.b)
                .all(|(a, b)| a.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() <= b + 1e-9);
        let dual_ok = (0..k).all(|j| sol[n + j] >= -1e-9);
        if feasible && dual_ok {
            best = best.min(objective(qp, &x));
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn convex_qp_matches_active_set_oracle(qp in convex_qp()) {
        let p = to_nlp(&qp);
        let s = solve_nlp(&p, &vec![0.0; qp.c.len()], 1e-10).unwrap();
        prop_assert_eq!(s.status, NlpStatus::KktPoint);
        let oracle = active_set_oracle(&qp);
        prop_assert!((s.objective - oracle).abs() <= 1e-6 * (1.0 + oracle.abs()), "{} vs {oracle}", s.objective);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn kkt_points_reverify(qp in convex_qp(), start in prop::collection::vec(-3.0..3.0f64, 3)) {
        let p = to_nlp(&qp);
        let s = solve_nlp(&p, &start[..qp.c.len()], 1e-9).unwrap();
        if s.status == NlpStatus::KktPoint {
            let res = kkt_residual(&p, &s.point, &s.multipliers).unwrap();
            prop_assert!(res.within(s.tol), "{res:?}");
        }
    }

    #[test]
    fn merit_never_increases_on_accepted_steps(qp in convex_qp(), start in prop::collection::vec(-3.0..3.0f64, 3)) {
        let p = to_nlp(&qp);
        let s = solve_nlp(&p, &start[..qp.c.len()], 1e-9).unwrap();
        for t in &s.trace {
            prop_assert!(t.merit_after <= t.merit_before + 1e-12 * (1.0 + t.merit_before.abs()), "{t:?}");
        }
    }
}

fn nonconvex_nlp() -> Nlp {
    // min x0⁴ − 2x0² + x1²  s.t. x0 + x1 ≥ −3,  x0 x1 ≤ 2
    let f = PolyFunction::from_terms(
        2,
        [
            (1.0, vec![(0, 4)]),
            (-2.0, vec![(0, 2)]),
            (1.0, vec![(1, 2)]),
        ],
    )
    .unwrap();
    let mut p = Nlp::generic(f);
    p.push_ineq_generic(PolyFunction::affine(&[-1.0, -1.0], -3.0).unwrap())
        .unwrap();
    p.push_ineq_generic(
        PolyFunction::from_terms(2, [(1.0, vec![(0, 1), (1, 1)]), (-2.0, vec![])]).unwrap(),
    )
    .unwrap();
    p
}

#[test]
fn nonconvex_descent_reaches_a_local_minimum() {
    let p = nonconvex_nlp();
    for start in [[0.3, 1.0], [-0.2, -0.5], [2.0, 2.0]] {
        let s = solve_nlp(&p, &start, 1e-10).unwrap();
        assert_eq!(s.status, NlpStatus::KktPoint, "{start:?}");
        assert!(
            (s.objective + 1.0).abs() < 1e-8,
            "{start:?}: {}",
            s.objective
        );
        assert!((s.point[0].abs() - 1.0).abs() < 1e-6 && s.point[1].abs() < 1e-6);
    }
}

#[test]
fn tolerance_below_floor_is_raised_and_recorded() {
    let s = solve_nlp(&nonconvex_nlp(), &[0.5, 0.5], 1e-16).unwrap();
    assert_eq!(s.requested_tol, 1e-16);
    assert_eq!(s.tol, 1e-10);
}

#[test]
fn unbounded_cubic_is_reported() {
    // min x³ with x ≥ −∞
    let p = Nlp::generic(PolyFunction::from_terms(1, [(1.0, vec![(0, 3)])]).unwrap());
    let s = solve_nlp(&p, &[-1.0], 1e-8).unwrap();
    assert_eq!(s.status, NlpStatus::Unbounded);
    assert!(s.objective < -1e8);
}
