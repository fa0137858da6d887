//! Experiment orchestration and the worked-example corpus.

pub mod corpus;
pub mod fixtures;
pub mod suite;

pub use fixtures::{worked_examples, WorkedExample};
pub use suite::{
    run_suite, summarize, SchemeSummary, SuiteConfig, SuiteRow, SuiteTable, Summary,
    DEFAULT_FEAS_TOL, DEFAULT_OBJ_TOL,
};
