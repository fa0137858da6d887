//! Bilevel programming toolkit.
//!
//! Builds the MPCC, Wolfe-dual and Mond-Weir-dual single-level
//! reformulations of a bilevel program, solves them with a relaxation loop on
//! top of dense LP and SQP solvers, and checks stationarity and constraint
//! qualifications with verifiable certificates.

pub mod bench;
pub mod diagnostics;
pub mod error;
pub mod gen;
pub mod lp;
pub mod model;
pub mod nlp;
pub mod poly;
pub mod reformulate;
pub mod relaxation;

pub use diagnostics::{Certificate, CertificateKind, InfeasibilityReport};
pub use error::{Error, Result};
pub use gen::{gen_linear, oracle_global, Dims, OracleResult};
pub use model::{BilevelProgram, LinearBilevel};
pub use nlp::{solve_nlp, NlpSolution, NlpStatus};
pub use poly::PolyFunction;
pub use reformulate::{build_mdp, build_mpcc, build_wdp, Nlp, RelaxationScheme};
pub use relaxation::{run, run_linear, RelaxationParams, SolveReport, TerminalReason};
