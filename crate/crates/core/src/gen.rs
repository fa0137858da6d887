//! Seeded random linear bilevel instances and a brute-force global oracle.
//!
//! Every matrix and vector is drawn from its own ChaCha8 stream of the same
//! seed, in the order `c1, c2, A1, b1, d2, A2, B2, b2` (streams 0 to 7), so
//! changing one shape leaves the other blocks' draws intact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpRow, LpStatus};
use crate::model::LinearBilevel;

/// Box on the lower-level variables.
pub const BOX: f64 = 10.0;
/// Largest number of lower-level constraints `p + 2m` the oracle enumerates.
pub const MAX_PAIRS: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub l: usize,
    pub m: usize,
    pub p: usize,
}

impl Dims {
    pub fn new(n: usize, l: usize, m: usize, p: usize) -> Self {
        Dims { n, l, m, p }
    }
}

#[derive(Clone, Copy, Debug)]
enum Stream {
    C1 = 0,
    C2,
    A1,
    B1,
    D2,
    A2,
    B2Mat,
    B2,
}

fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

fn entry(rng: &mut ChaCha8Rng, density: f64) -> f64 {
    // Both draws happen unconditionally so the stream position depends only
    // on the entry index.
    let keep = rng.gen::<f64>() < density;
    let value = rng.gen_range(-1.0..1.0);
    if keep {
        value
    } else {
        0.0
    }
}

fn vector(seed: u64, s: Stream, len: usize, density: f64) -> Vec<f64> {
    let mut rng = stream(seed, s);
    (0..len).map(|_| entry(&mut rng, density)).collect()
}

fn matrix(seed: u64, s: Stream, rows: usize, cols: usize, density: f64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, s);
    (0..rows)
        .map(|_| (0..cols).map(|_| entry(&mut rng, density)).collect())
        .collect()
}

/// Random instance with `A1 ∈ ℝ^{l×n}`, `A2 ∈ ℝ^{p×n}`, `B2 ∈ ℝ^{p×m}`.
/// Entries are nonzero with probability `density` and then uniform on
/// `(−1, 1)`; the lower box is `[−10, 10]^m`. Zero rows are kept.
pub fn gen_linear(dims: Dims, density: f64, seed: u64) -> Result<LinearBilevel> {
    let Dims { n, l, m, p } = dims;
    for (name, v) in [("n", n), ("l", l), ("m", m), ("p", p)] {
        if v == 0 {
            return Err(Error::InvalidParameter(format!(
                "dimension {name} must be ≥ 1"
            )));
        }
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "density must lie in (0, 1], got {density}"
        )));
    }
    Ok(LinearBilevel {
        c1: vector(seed, Stream::C1, n, density),
        c2: vector(seed, Stream::C2, m, density),
        a1: matrix(seed, Stream::A1, l, n, density),
        b1: vector(seed, Stream::B1, l, density),
        d2: vector(seed, Stream::D2, m, density),
        a2: matrix(seed, Stream::A2, p, n, density),
        b2_mat: matrix(seed, Stream::B2Mat, p, m, density),
        b2: vector(seed, Stream::B2, p, density),
        bl: vec![-BOX; m],
        bu: vec![BOX; m],
    })
}

/// Outcome of the enumeration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OracleResult {
    Optimal {
        value: f64,
        x: Vec<f64>,
        y: Vec<f64>,
        /// Bit `i` set when lower constraint `i` is forced active.
        pattern: u32,
    },
    Infeasible,
    Unbounded,
}

impl OracleResult {
    pub fn value(&self) -> f64 {
        match self {
            OracleResult::Optimal { value, .. } => *value,
            OracleResult::Infeasible => f64::INFINITY,
            OracleResult::Unbounded => f64::NEG_INFINITY,
        }
    }
}

enum PatternOutcome {
    Point(f64, Vec<f64>),
    Infeasible,
    Unbounded,
}

/// The upper LP for one active-set pattern of the lower-level KKT system.
/// Variables are `(x, y, u)` with `u` ordered as the general-form rows
/// `[A2x + B2y − b2; y − bu; bl − y]`.
fn pattern_lp(lin: &LinearBilevel, pattern: u32) -> LpProblem {
    let (n, m, l, p) = (lin.n(), lin.m(), lin.l(), lin.p());
    let k = p + 2 * m;
    let nv = n + m + k;
    let mut c = vec![0.0; nv];
    c[..n].copy_from_slice(&lin.c1);
    c[n..n + m].copy_from_slice(&lin.c2);
    let mut lp = LpProblem::new(c);
    for j in 0..k {
        let on = pattern >> j & 1 == 1;
        lp.lower[n + m + j] = 0.0;
        lp.upper[n + m + j] = if on { f64::INFINITY } else { 0.0 };
    }
    for i in 0..l {
        let mut row = vec![0.0; nv];
        row[..n].copy_from_slice(&lin.a1[i]);
        lp.push(LpRow::le(row, lin.b1[i]));
    }
    let relation = |j: usize| {
        if pattern >> j & 1 == 1 {
            crate::lp::Relation::Eq
        } else {
            crate::lp::Relation::Le
        }
    };
    for i in 0..p {
        let mut row = vec![0.0; nv];
        row[..n].copy_from_slice(&lin.a2[i]);
        row[n..n + m].copy_from_slice(&lin.b2_mat[i]);
        lp.push(LpRow::new(row, relation(i), lin.b2[i]));
    }
    for j in 0..m {
        let mut row = vec![0.0; nv];
        row[n + j] = 1.0;
        lp.push(LpRow::new(row, relation(p + j), lin.bu[j]));
        let mut row = vec![0.0; nv];
        row[n + j] = -1.0;
        lp.push(LpRow::new(row, relation(p + m + j), -lin.bl[j]));
    }
    // d2 + B2ᵀu1 + u2 − u3 = 0
    for j in 0..m {
        let mut row = vec![0.0; nv];
        for i in 0..p {
            row[n + m + i] = lin.b2_mat[i][j];
        }
        row[n + m + p + j] = 1.0;
        row[n + m + p + m + j] = -1.0;
        lp.push(LpRow::eq(row, -lin.d2[j]));
    }
    lp
}

fn solve_pattern(lin: &LinearBilevel, pattern: u32) -> Result<PatternOutcome> {
    let sol = solve_lp(&pattern_lp(lin, pattern))?;
    Ok(match sol.status {
        LpStatus::Optimal => PatternOutcome::Point(sol.objective, sol.x),
        LpStatus::Unbounded => PatternOutcome::Unbounded,
        LpStatus::Infeasible => PatternOutcome::Infeasible,
        LpStatus::NumericalFailure => {
            return Err(Error::Structure(format!(
                "oracle LP failed on pattern {pattern:#b}"
            )))
        }
    })
}

/// Global optimum of a small linear bilevel program by enumerating every
/// active-set pattern of the lower-level KKT system. Ties in value go to the
/// lexicographically smallest pattern, so the result does not depend on the
/// thread count.
pub fn oracle_global(lin: &LinearBilevel) -> Result<OracleResult> {
    lin.validate()?;
    let pairs = lin.p() + 2 * lin.m();
    if pairs > MAX_PAIRS {
        return Err(Error::EnumerationBound {
            pairs,
            max: MAX_PAIRS,
        });
    }
    let outcomes: Vec<(u32, PatternOutcome)> = (0..1u32 << pairs)
        .into_par_iter()
        .map(|pat| solve_pattern(lin, pat).map(|o| (pat, o)))
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, u32, Vec<f64>)> = None;
    for (pat, outcome) in outcomes {
        match outcome {
            PatternOutcome::Unbounded => return Ok(OracleResult::Unbounded),
            PatternOutcome::Infeasible => {}
            PatternOutcome::Point(v, w) => {
                if best.as_ref().is_none_or(|(bv, _, _)| v < *bv) {
                    best = Some((v, pat, w));
                }
            }
        }
    }
    Ok(match best {
        None => OracleResult::Infeasible,
        Some((value, pattern, w)) => {
            let (n, m) = (lin.n(), lin.m());
            OracleResult::Optimal {
                value,
                x: w[..n].to_vec(),
                y: w[n..n + m].to_vec(),
                pattern,
            }
        }
    })
}
