//! The four worked examples with their known solutions.

use serde::{Deserialize, Serialize};

use crate::model::BilevelProgram;
use crate::poly::PolyFunction;

/// A bilevel program with its documented optimum.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkedExample {
    pub name: &'static str,
    pub program: BilevelProgram,
    pub optimum: Optimum,
    pub expected: Vec<Expectation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub value: f64,
}

/// Documented facts attached to an example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Expectation {
    /// Globally optimal point `(x, y, z, u)` of the Mond-Weir reformulation.
    MdpOptimum { point: Vec<f64>, value: f64 },
    /// The Wolfe reformulation has optimal value −∞; the sequence
    /// `(0, k, −k, 3k² + 1)` is feasible.
    WdpUnbounded,
    /// MFCQ holds for the Mond-Weir reformulation at `point`, witnessed by `d`.
    MdpMfcq {
        point: Vec<f64>,
        direction: Vec<f64>,
    },
    /// `point` is S-stationary for the complementarity reformulation.
    MpccSStationary { point: Vec<f64> },
    /// `point` is feasible but not a KKT point of the Mond-Weir reformulation.
    MdpNotKkt { point: Vec<f64> },
}

fn poly(terms: Vec<(f64, Vec<(usize, u32)>)>) -> PolyFunction {
    PolyFunction::from_terms(2, terms).expect("fixture polynomial")
}

const X: usize = 0;
const Y: usize = 1;

/// `min −x − y` s.t. `x ≤ 1`, `y ∈ argmin { y³ + y : y ≥ x }`.
pub fn motivating_example() -> WorkedExample {
    let program = BilevelProgram::new(
        1,
        1,
        poly(vec![(-1.0, vec![(X, 1)]), (-1.0, vec![(Y, 1)])]),
        vec![poly(vec![(1.0, vec![(X, 1)]), (-1.0, vec![])])],
        vec![],
        poly(vec![(1.0, vec![(Y, 3)]), (1.0, vec![(Y, 1)])]),
        vec![poly(vec![(1.0, vec![(X, 1)]), (-1.0, vec![(Y, 1)])])],
        vec![],
    )
    .expect("fixture program");
    WorkedExample {
        name: "cubic follower (MDP equivalent, WDP unbounded)",
        program,
        optimum: Optimum {
            x: vec![1.0],
            y: vec![1.0],
            value: -2.0,
        },
        expected: vec![
            Expectation::MdpOptimum {
                point: vec![1.0, 1.0, 1.0, 4.0],
                value: -2.0,
            },
            Expectation::WdpUnbounded,
        ],
    }
}

/// `min 2x − y` s.t. `x ≥ 0`, `y ∈ argmin { y³ : y ≥ x }`.
pub fn unique_optimum_example() -> WorkedExample {
    let program = BilevelProgram::new(
        1,
        1,
        poly(vec![(2.0, vec![(X, 1)]), (-1.0, vec![(Y, 1)])]),
        vec![poly(vec![(-1.0, vec![(X, 1)])])],
        vec![],
        poly(vec![(1.0, vec![(Y, 3)])]),
        vec![poly(vec![(1.0, vec![(X, 1)]), (-1.0, vec![(Y, 1)])])],
        vec![],
    )
    .expect("fixture program");
    WorkedExample {
        name: "non-pseudoconvex follower",
        program,
        optimum: Optimum {
            x: vec![0.0],
            y: vec![0.0],
            value: 0.0,
        },
        expected: vec![Expectation::MdpOptimum {
            point: vec![0.0, 0.0, 0.0, 0.0],
            value: 0.0,
        }],
    }
}

/// `min (x + y)²` s.t. `x ∈ [−1, 1]`, `y ∈ argmin { y³ − 3y : y ≥ x }`.
pub fn mfcq_example() -> WorkedExample {
    let program = BilevelProgram::new(
        1,
        1,
        poly(vec![
            (1.0, vec![(X, 2)]),
            (2.0, vec![(X, 1), (Y, 1)]),
            (1.0, vec![(Y, 2)]),
        ]),
        vec![
            poly(vec![(1.0, vec![(X, 1)]), (-1.0, vec![])]),
            poly(vec![(-1.0, vec![(X, 1)]), (-1.0, vec![])]),
        ],
        vec![],
        poly(vec![(1.0, vec![(Y, 3)]), (-3.0, vec![(Y, 1)])]),
        vec![poly(vec![(1.0, vec![(X, 1)]), (-1.0, vec![(Y, 1)])])],
        vec![],
    )
    .expect("fixture program");
    WorkedExample {
        name: "MFCQ at a Mond-Weir feasible point",
        program,
        optimum: Optimum {
            x: vec![-1.0],
            y: vec![1.0],
            value: 0.0,
        },
        expected: vec![
            Expectation::MdpOptimum {
                point: vec![-1.0, 1.0, -2.0, 9.0],
                value: 0.0,
            },
            Expectation::MdpMfcq {
                point: vec![-1.0, 1.0, -2.0, 9.0],
                direction: vec![1.0, 0.0, 1.0, -12.0],
            },
        ],
    }
}

/// `min x² − (2y + 1)²` s.t. `x ≤ 0`,
/// `y ∈ argmin { (y − 1)² : 3x − y − 3 ≤ 0, x + y − 1 ≤ 0 }`.
pub fn stationarity_gap_example() -> WorkedExample {
    let program = BilevelProgram::new(
        1,
        1,
        poly(vec![
            (1.0, vec![(X, 2)]),
            (-4.0, vec![(Y, 2)]),
            (-4.0, vec![(Y, 1)]),
            (-1.0, vec![]),
        ]),
        vec![poly(vec![(1.0, vec![(X, 1)])])],
        vec![],
        poly(vec![
            (1.0, vec![(Y, 2)]),
            (-2.0, vec![(Y, 1)]),
            (1.0, vec![]),
        ]),
        vec![
            poly(vec![
                (3.0, vec![(X, 1)]),
                (-1.0, vec![(Y, 1)]),
                (-3.0, vec![]),
            ]),
            poly(vec![
                (1.0, vec![(X, 1)]),
                (1.0, vec![(Y, 1)]),
                (-1.0, vec![]),
            ]),
        ],
        vec![],
    )
    .expect("fixture program");
    WorkedExample {
        name: "S-stationary but not KKT for Mond-Weir",
        program,
        optimum: Optimum {
            x: vec![0.0],
            y: vec![1.0],
            value: -9.0,
        },
        expected: vec![
            Expectation::MpccSStationary {
                point: vec![0.0, 1.0, 0.0, 0.0],
            },
            Expectation::MdpNotKkt {
                point: vec![0.0, 1.0, 1.0, 0.0, 0.0],
            },
        ],
    }
}

/// All four examples in order.
pub fn worked_examples() -> Vec<WorkedExample> {
    vec![
        motivating_example(),
        unique_optimum_example(),
        mfcq_example(),
        stationarity_gap_example(),
    ]
}
