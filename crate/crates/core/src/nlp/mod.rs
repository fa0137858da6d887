//! Local NLP solver for the reformulated problems.

pub mod qp;
mod sqp;

pub use sqp::{
    kkt_residual, lagrangian_gradient, solve_nlp, solve_nlp_with, KktResidual, Multipliers,
    NlpOptions, NlpSolution, NlpStatus, TraceEntry, TOL_FLOOR,
};
