mod common;

use bilevel_core::diagnostics::infeasibility;
use bilevel_core::gen::{gen_linear, oracle_global, Dims, OracleResult, BOX};
use common::admissible_x;
use proptest::prelude::*;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn upper_value(lin: &bilevel_core::model::LinearBilevel, x: &[f64], y: &[f64]) -> f64 {
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    d(&lin.c1, x) + d(&lin.c2, y)
}

#[test]
fn shapes_and_box() {
    let lin = gen_linear(Dims::new(4, 3, 5, 2), 0.7, 11).unwrap();
    assert_eq!((lin.n(), lin.l(), lin.m(), lin.p()), (4, 3, 5, 2));
    assert!(lin.a1.iter().all(|r| r.len() == 4));
    assert!(lin.a2.iter().all(|r| r.len() == 4));
    assert!(lin.b2_mat.iter().all(|r| r.len() == 5));
    assert!(lin.bl.iter().all(|v| *v == -BOX) && lin.bu.iter().all(|v| *v == BOX));
    let entries = lin
        .c1
        .iter()
        .chain(lin.a1.iter().flatten())
        .chain(lin.b2_mat.iter().flatten());
    assert!(entries.clone().all(|v| v.abs() < 1.0));
}

#[test]
fn density_matches_fraction_of_nonzeros() {
    for density in [0.2, 0.5, 0.9] {
        let lin = gen_linear(Dims::new(40, 40, 40, 40), density, 5).unwrap();
        let all: Vec<f64> = lin
            .a1
            .iter()
            .chain(&lin.a2)
            .chain(&lin.b2_mat)
            .flatten()
            .copied()
            .collect();
        let frac = all.iter().filter(|v| **v != 0.0).count() as f64 / all.len() as f64;
        let sd = (density * (1.0 - density) / all.len() as f64).sqrt();
        assert!(
            (frac - density).abs() < 4.0 * sd,
            "density {density}: {frac}"
        );
    }
}

#[test]
fn invalid_arguments_are_rejected() {
    assert!(gen_linear(Dims::new(0, 1, 1, 1), 0.5, 0).is_err());
    assert!(gen_linear(Dims::new(1, 1, 1, 1), 0.0, 0).is_err());
    assert!(gen_linear(Dims::new(1, 1, 1, 1), 1.5, 0).is_err());
}

#[test]
fn oracle_is_independent_of_thread_count() {
    for seed in 0..6 {
        let lin = gen_linear(Dims::new(2, 3, 3, 3), 0.5, seed).unwrap();
        let a = in_pool(1, || oracle_global(&lin).unwrap());
        let b = in_pool(4, || oracle_global(&lin).unwrap());
        assert_eq!(a, b, "seed {seed}");
        let again = in_pool(3, || gen_linear(Dims::new(2, 3, 3, 3), 0.5, seed).unwrap());
        assert_eq!(lin, again);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn generation_is_a_function_of_the_seed(seed in any::<u64>(), n in 1usize..5, m in 1usize..5) {
        let a = gen_linear(Dims::new(n, 2, m, 2), 0.6, seed).unwrap();
        let b = gen_linear(Dims::new(n, 2, m, 2), 0.6, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn oracle_point_is_feasible_and_no_worse_than_samples(seed in 0u64..5_000) {
        let lin = gen_linear(Dims::new(2, 2, 2, 2), 0.6, seed).unwrap();
        let OracleResult::Optimal { value, x, y, .. } = oracle_global(&lin).unwrap() else {
            return Ok(());
        };
        let rep = infeasibility(&lin, &x, &y).unwrap();
        prop_assert!(rep.total <= 1e-7, "{rep:?}");
        prop_assert!((upper_value(&lin, &x, &y) - value).abs() <= 1e-7);
        for k in 0..8 {
            if let Some((xs, low)) = admissible_x(&lin, seed * 31 + k, 20.0) {
                prop_assert!(value <= upper_value(&lin, &xs, &low.y) + 1e-7);
            }
        }
    }
}
