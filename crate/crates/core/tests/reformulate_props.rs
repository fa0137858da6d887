mod common;

use bilevel_core::model::{value_function, LinearBilevel};
use bilevel_core::reformulate::{build_mdp, build_mpcc, build_wdp, BlockName, RowKind};
use common::*;
use proptest::prelude::*;

fn tiny() -> LinearBilevel {
    // min x + 2y s.t. x ≤ 3;  y ∈ argmin { −y : x + y ≤ 2, −10 ≤ y ≤ 10 }
    LinearBilevel {
        c1: vec![1.0],
        c2: vec![2.0],
        a1: vec![vec![1.0]],
        b1: vec![3.0],
        d2: vec![-1.0],
        a2: vec![vec![1.0]],
        b2_mat: vec![vec![1.0]],
        b2: vec![2.0],
        bl: vec![-10.0],
        bu: vec![10.0],
    }
}

#[test]
fn mpcc_rows_match_hand_computation() {
    let bp = tiny().to_general();
    let nlp = build_mpcc(&bp).unwrap();
    assert_eq!(nlp.num_vars, 5);
    assert_eq!(nlp.block(BlockName::U), Some(2..5));
    let w = [1.0, 0.5, 2.0, 0.1, 0.3];
    assert_eq!(nlp.objective.value(&w), 2.0);
    let ineq = |k| nlp.ineq[nlp.ineq_index(k).unwrap()].func.value(&w);
    let eq = |k| nlp.eq[nlp.eq_index(k).unwrap()].func.value(&w);
    assert_eq!(ineq(RowKind::Omega), -2.0);
    assert_eq!(ineq(RowKind::LowerIneq(0)), -0.5);
    assert_eq!(ineq(RowKind::LowerIneq(1)), -9.5);
    assert_eq!(ineq(RowKind::LowerIneq(2)), -10.5);
    assert!((eq(RowKind::Complementarity) - (-5.1)).abs() < 1e-15);
    assert!((eq(RowKind::LowerStationarity(0)) - 0.8).abs() < 1e-15);
    assert_eq!(nlp.lower[2..], [0.0; 3]);
}

#[test]
fn dual_rows_match_hand_computation() {
    let bp = tiny().to_general();
    let w = [1.0, 0.5, -1.0, 2.0, 0.1, 0.3];
    let mdp = build_mdp(&bp).unwrap();
    let ineq = |k| mdp.ineq[mdp.ineq_index(k).unwrap()].func.value(&w);
    assert_eq!(mdp.block(BlockName::Z), Some(2..3));
    assert_eq!(ineq(RowKind::ValueGap), -1.5);
    assert!((ineq(RowKind::DualSign) - 7.8).abs() < 1e-14);
    let st = mdp.eq[mdp.eq_index(RowKind::DualStationarity(0)).unwrap()]
        .func
        .value(&w);
    assert!((st - 0.8).abs() < 1e-15);
    let wdp = build_wdp(&bp).unwrap();
    let wolfe = wdp.ineq[wdp.ineq_index(RowKind::WolfeDual).unwrap()]
        .func
        .value(&w);
    assert!((wolfe - 6.3).abs() < 1e-14);
    assert!(wdp.ineq_index(RowKind::ValueGap).is_none());
    assert!(mdp.ineq_index(RowKind::WolfeDual).is_none());
}

#[test]
fn mond_weir_duality_on_random_lps() {
    for seed in 0..50 {
        let p = random_lp(seed, 8);
        let primal = lp_optimum(&p);
        for (k, (dual, viol)) in mond_weir_values(&p, seed).into_iter().enumerate() {
            if viol <= DUAL_FEAS {
                assert!(
                    dual <= primal + 1e-6,
                    "seed {seed} start {k}: weak duality {dual} > {primal}"
                );
            }
        }
        let best = mond_weir_optimum(&p, seed).expect("some start ends dual feasible");
        assert!(
            (best - primal).abs() <= 1e-6,
            "seed {seed}: gap {}",
            primal - best
        );
    }
}

#[test]
fn lp_multipliers_give_a_feasible_dual_point_of_equal_value() {
    for seed in 0..50 {
        let p = random_lp(seed, 8);
        let dual = bilevel_core::reformulate::build_mond_weir_dual(&lp_as_nlp(&p)).unwrap();
        let w = mond_weir_starts(&p, seed).pop().unwrap();
        assert!(dual.max_violation(&w) <= 1e-9, "seed {seed}");
        assert!((-dual.objective.value(&w) - lp_optimum(&p)).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mdp_feasible_points_are_wdp_feasible_and_lower_optimal(
        seed in 0u64..10_000,
        dir in prop::collection::vec(-1.0..1.0f64, 3),
        step in 0.0..5.0f64,
    ) {
        let lin = small_instance(seed);
        let Some((x, low)) = admissible_x(&lin, seed, 1.0) else { return Ok(()) };
        let m = lin.m();
        // z = y* + s·d with d ⟂ d2 keeps the dual rows satisfied
        let mut d: Vec<f64> = dir[..m].to_vec();
        let dd: f64 = lin.d2.iter().map(|v| v * v).sum();
        if dd > 0.0 {
            let proj = d.iter().zip(&lin.d2).map(|(a, b)| a * b).sum::<f64>() / dd;
            for (di, ci) in d.iter_mut().zip(&lin.d2) {
                *di -= proj * ci;
            }
        }
        let z: Vec<f64> = low.y.iter().zip(&d).map(|(y, d)| y + step * d).collect();
        let bp = lin.to_general();
        let w = dual_point(&x, &low.y, &z, &low.u);
        let mdp = build_mdp(&bp).unwrap();
        let viol = mdp.max_violation(&w);
        prop_assert!(viol <= 1e-8, "MDP violation {viol}");

        let wdp = build_wdp(&bp).unwrap();
        let wolfe = wdp.ineq[wdp.ineq_index(RowKind::WolfeDual).unwrap()].func.value(&w);
        prop_assert!(wolfe <= 1e-10 + 1e-8, "Wolfe row {wolfe}");

        let y_obj: f64 = lin.d2.iter().zip(&low.y).map(|(a, b)| a * b).sum();
        let v = value_function(&lin, &x).unwrap();
        prop_assert!(y_obj - v <= 1e-6);
    }
}
