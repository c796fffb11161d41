//! Simulation and analysis of interactive games.
//!
//! The crate covers differential interactive systems with ε-represented
//! feedbacks ([`game`]), their verbalization into windowed dialogues
//! ([`verbalization`]), comment recursions and tactical operators
//! ([`tactics`]), a-posteriori prediction and filtering ([`prediction`]) and
//! representative dynamics on matrix tuples constrained to algebra
//! representations ([`algebra`]).

// Guards such as `!(dt > 0.0)` are negated on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod error;
pub mod export;
pub mod expr;
pub mod game;
pub mod prediction;
pub mod tactics;
pub mod verbalization;

pub use error::{Error, Result};
pub use expr::{Bindings, Expr, ExprError, Scope, VarKind};
pub use game::{
    associated_ordinary_game, check_indeterminate_invariants, coalition_simulate, simulate, Coalition,
    Direction, EpsilonProcess, EpsilonSource, FeedbackCoupling, InteractiveSystem, InvariantDrift, Owner, Player,
    PureControlPolicy, Schedule, Signal, SlowControl, StageTrace, StateTrajectory, StateVector,
};
pub use algebra::{
    admissible_check, equivalence_partition, integrate_repdyn, relation_residual, run_tactical_repdyn,
    solve_inverse_problem, weyl_eval, AlgebraClass, AlgebraClassRegistry, AlgebraPresentation, CMatrix,
    ClassDynamics, ClassInterval, ControlSchedule, InverseOptions, InverseProblem, InverseSolution, MatrixTuple,
    NcPoly, RepDynSpec, RepDynTrajectory, SymbolTerm, TacticalRepDyn, TacticalRepDynRun,
};
pub use prediction::{
    filter_trace, fit_feedback, interactivize_by_prediction, predict, strategic_pipeline, unravel_by_filtering,
    FeedbackFamily, FilterSpec, FitTarget, PrognosisReport, StrategicConfig, Unraveling,
};
pub use tactics::{
    is_tactical_extension, run_commented_game, tactical_interaction, tactical_synthesis, CommentRule, CommentSpace,
    CommentValue, CommentedGame, CommentedRun, DialecticalObject, InteractionTerm, SynthesisRule, TransitionEntry,
};
pub use verbalization::{
    detect_partition, fit_recurrence, simulate_dialogue, verbalize, verify_recurrence, CellComplex, Dialogue,
    RecurrenceMap, Verbalization, WindowFunctional, WindowRecord,
};
