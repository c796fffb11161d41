//! Scenario-driven front end: load a TOML scenario, run one command family
//! and write deterministic CSV/JSON artifacts with a run report.

// Guards such as `!(dt > 0.0)` are negated on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod raw;
pub mod run;
pub mod scenario;

pub use run::{exit, exit_code, run, run_digest, CheckResult, RunError, RunReport, REPORT_FILE};
pub use scenario::{
    load_scenario, load_scenario_with, parse_scenario, Command, Diagnostic, LoadError, Overrides, Scenario,
    DEFAULT_TOLERANCE,
};
