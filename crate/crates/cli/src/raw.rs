//! Serde mirror of the scenario file. Expression sources and labels keep
//! their byte spans so validation can point at them.

use serde::Deserialize;
use toml::Spanned;

pub type Text = Spanned<String>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub schema: Spanned<i64>,
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    pub run: Spanned<RawRun>,
    pub system: Option<Spanned<RawSystem>>,
    pub slow: Option<Spanned<RawSlow>>,
    pub simulate: Option<RawSimulate>,
    pub verbalization: Option<Spanned<RawVerbalization>>,
    pub dialogue: Option<Spanned<RawDialogue>>,
    pub tactics: Option<Spanned<RawTactics>>,
    pub predict: Option<Spanned<RawPredict>>,
    pub algebra: Option<Spanned<RawAlgebra>>,
    pub repdyn: Option<Spanned<RawRepDyn>>,
    pub invert: Option<Spanned<RawInvert>>,
    #[serde(default)]
    pub checks: Vec<RawCheck>,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRun {
    #[serde(default)]
    pub t0: f64,
    pub t1: Spanned<f64>,
    pub dt: Spanned<f64>,
    /// Explicit window boundaries.
    pub windows: Option<Spanned<Vec<f64>>>,
    /// Uniform window width.
    pub window: Option<Spanned<f64>>,
    /// Windows from the cell transitions of the ε trace.
    #[serde(default)]
    pub partition: bool,
    pub seed: Option<u64>,
    pub tolerance: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSystem {
    pub initial: Vec<f64>,
    pub dynamics: Vec<Text>,
    #[serde(default)]
    pub lambda_dim: usize,
    #[serde(default)]
    pub omega_dim: usize,
    #[serde(default)]
    pub players: Vec<Spanned<RawPlayer>>,
    #[serde(default)]
    pub coalitions: Vec<Spanned<RawCoalition>>,
    #[serde(default)]
    pub invariants: Vec<Text>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPlayer {
    pub policy: Vec<Text>,
    pub coupling: Vec<Text>,
    pub epsilon: Vec<Text>,
    /// `forward` (default) or `inverse`.
    pub direction: Option<Text>,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCoalition {
    pub members: Spanned<Vec<usize>>,
    pub coupling: Vec<Text>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSlow {
    pub continuous: Option<Vec<Text>>,
    pub discrete: Option<Vec<RawSlowPoint>>,
    /// `external` (default), `player:<k>` or `coalition:<k>,<k>,…`.
    pub owner: Option<Text>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSlowPoint {
    pub step: usize,
    pub value: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSimulate {
    /// Also replay the recorded ε through the associated ordinary game.
    #[serde(default)]
    pub replay: bool,
    /// Route control slots through the coalition couplings.
    #[serde(default)]
    pub coalitions: bool,
    #[serde(default)]
    pub invariant_tolerance: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFunctional {
    pub kind: Text,
    pub of: Text,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawVerbalization {
    #[serde(default)]
    pub omega: Vec<RawFunctional>,
    #[serde(default)]
    pub v: Vec<RawFunctional>,
    pub complex: Option<Spanned<RawComplex>>,
    pub recurrence: Option<Spanned<RawRecurrence>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawComplex {
    pub bounds: Vec<[f64; 2]>,
    pub cells: Vec<RawCell>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCell {
    pub label: String,
    pub predicate: Text,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecurrence {
    /// Closed-form map; when absent an affine map is fitted.
    pub declared: Option<Vec<Text>>,
    /// Trailing windows kept out of the fit and used for verification.
    #[serde(default)]
    pub holdout: usize,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDialogue {
    pub initial: Vec<f64>,
    pub dynamics: Vec<Text>,
    #[serde(default)]
    pub players: Vec<Spanned<RawPlayer>>,
    pub state: Vec<RawFunctional>,
    #[serde(default)]
    pub control: Vec<RawFunctional>,
    pub step_map: Vec<Text>,
    pub initial_state: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTactics {
    /// `run` (default), `interaction` or `synthesis`.
    pub mode: Option<Text>,
    pub games: Vec<Spanned<RawGame>>,
    pub interaction: Option<Spanned<RawInteraction>>,
    pub synthesis: Option<Spanned<RawSynthesis>>,
    /// Check synthesis form 1 as an extension of game 1's own rule.
    #[serde(default)]
    pub extension: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGame {
    pub system: Spanned<RawSystem>,
    #[serde(default)]
    pub omega: Vec<RawFunctional>,
    #[serde(default)]
    pub v: Vec<RawFunctional>,
    pub rule: Vec<Text>,
    /// Initial comment for a vector comment space.
    pub theta: Option<Vec<f64>>,
    /// Initial class for a labeled comment space.
    pub class: Option<Text>,
    pub eta: Option<Vec<f64>>,
    /// Admissible labels; defaults to the algebra classes.
    pub classes: Option<Vec<String>>,
    #[serde(default)]
    pub dialect: Vec<RawDialect>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInteraction {
    pub t12: Option<Vec<Text>>,
    pub t21: Option<Vec<Text>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSynthesis {
    /// Build the forms from the interaction terms instead.
    #[serde(default)]
    pub from_interaction: bool,
    #[serde(default)]
    pub forms: Vec<Vec<Text>>,
    #[serde(default)]
    pub masks: Vec<Spanned<Vec<usize>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDialect {
    pub label: String,
    #[serde(default)]
    pub table: Vec<RawEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEntry {
    pub from: Text,
    pub trigger: Text,
    pub to: Text,
    pub eta_update: Vec<Text>,
    #[serde(default)]
    pub embedding: Vec<Text>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPredict {
    /// `rolling`, `unravel` or `pipeline`.
    pub mode: Text,
    pub horizon: Option<f64>,
    #[serde(default)]
    pub assumed: Vec<RawAssumed>,
    pub family: Option<RawFamily>,
    pub filter: Option<Spanned<RawFilter>>,
    /// Pure controls over `t` that the filter should recover.
    pub reference: Option<Vec<Text>>,
    /// Fraction of samples dropped at each end when comparing with the
    /// reference.
    pub margin: Option<f64>,
    #[serde(default)]
    pub assumed_eps: Vec<Vec<Text>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAssumed {
    pub player: Spanned<usize>,
    pub policy: Vec<Text>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFamily {
    pub model: Text,
    pub initial: Vec<f64>,
    /// `control:<k>` or `pure:<k>`.
    pub target: Text,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFilter {
    pub cutoff: Option<f64>,
    pub frequencies: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAlgebra {
    pub classes: Vec<Spanned<RawClass>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawClass {
    pub label: Text,
    pub presentations: Vec<Spanned<RawPresentation>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPresentation {
    pub generators: usize,
    #[serde(default)]
    pub relations: Vec<Text>,
    #[serde(default)]
    pub commutative: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRepDyn {
    pub class: Text,
    pub dimension: usize,
    pub initial: Vec<RawMatrix>,
    #[serde(default)]
    pub constants: Vec<RawMatrix>,
    #[serde(default)]
    pub inputs: Vec<Text>,
    #[serde(default)]
    pub coefficients: Vec<Text>,
    pub dynamics: Vec<Spanned<RawClassDynamics>>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub max_correction: Option<f64>,
    /// Initial η of the labeled comment.
    #[serde(default)]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub rule: Vec<Text>,
    /// Present (even empty) selects the tactical run.
    pub dialect: Option<Vec<RawDialect>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawClassDynamics {
    pub class: Text,
    pub symbols: Vec<Vec<RawTerm>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTerm {
    pub scale: Option<Text>,
    pub poly: Text,
}

/// A complex matrix: rows of entries, a real diagonal, or 1-based unit
/// entries `[i, j, value]` (empty for zero).
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum RawMatrix {
    Rows(Vec<Vec<RawScalar>>),
    Diag {
        diag: Vec<f64>,
    },
    Units {
        units: Vec<(usize, usize, f64)>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum RawScalar {
    Real(f64),
    Complex([f64; 2]),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInvert {
    pub field: Vec<Text>,
    #[serde(default)]
    pub inputs: Vec<Text>,
    pub initial: Vec<f64>,
    pub dimension: Option<usize>,
    pub slot: Option<usize>,
    #[serde(default)]
    pub lift_constants: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCheck {
    pub metric: Text,
    pub max: Option<f64>,
    pub min: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    /// Sample stride of the matrix-tuple JSON export.
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Also write JSON copies of the CSV exports.
    #[serde(default)]
    pub json: bool,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput {
            stride: default_stride(),
            json: false,
        }
    }
}

fn default_stride() -> usize {
    100
}
