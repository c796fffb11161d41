//! Scenario loading: parse the TOML file, resolve every reference and build
//! the core objects, collecting all problems in one pass.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use tactica::algebra::{DEFAULT_MAX_CORRECTION, DEFAULT_MAX_ITERATIONS};
use tactica::verbalization::{FunctionalKind, IntentionField};
use tactica::{
    AlgebraClass, AlgebraClassRegistry, AlgebraPresentation, CMatrix, CellComplex, ClassDynamics, CommentRule,
    CommentSpace, CommentValue, CommentedGame, ControlSchedule, DialecticalObject, Dialogue, Direction,
    EpsilonProcess, EpsilonSource, Error, Expr, FeedbackCoupling, FeedbackFamily, FilterSpec, FitTarget, InteractionTerm,
    InteractiveSystem, InverseOptions, InverseProblem, NcPoly, Owner, Player, PureControlPolicy, RecurrenceMap,
    RepDynSpec, Schedule, Signal, SlowControl, SymbolTerm, SynthesisRule, TacticalRepDyn, TransitionEntry, VarKind,
    Verbalization, WindowFunctional,
};
use toml::Spanned;

use crate::raw::*;

pub const SCHEMA_VERSION: i64 = 1;
/// Tolerance used when neither the scenario nor the caller sets one.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// One problem found while loading, located in the scenario source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based.
    pub line: Option<usize>,
    /// 1-based, in characters.
    pub column: Option<usize>,
    /// Dotted path of the offending item.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, "{l}:{c}: ")?;
        }
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadError {
    pub file: PathBuf,
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.diagnostics.len();
        writeln!(f, "{}: {n} error{}", self.file.display(), if n == 1 { "" } else { "s" })?;
        for d in &self.diagnostics {
            writeln!(f, "{}:{d}", self.file.display())?;
        }
        Ok(())
    }
}

impl std::error::Error for LoadError {}

/// Caller-side values that replace scenario or built-in defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    /// Replaces `run.dt`.
    pub dt: Option<f64>,
    /// Replaces `run.seed`.
    pub seed: Option<u64>,
    /// Default tolerance when the scenario does not set `run.tolerance`.
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Simulate,
    Verbalize,
    Tactics,
    Predict,
    Repdyn,
    Invert,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Simulate,
        Command::Verbalize,
        Command::Tactics,
        Command::Predict,
        Command::Repdyn,
        Command::Invert,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Verbalize => "verbalize",
            Command::Tactics => "tactics",
            Command::Predict => "predict",
            Command::Repdyn => "repdyn",
            Command::Invert => "invert",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    None,
    Explicit(Vec<f64>),
    /// Uniform windows of this width; the last one ends at `t1`.
    Uniform(f64),
    /// Cell transitions of the ε trace.
    Partition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub grid: GridSpec,
    pub seed: u64,
    pub tolerance: f64,
}

impl RunParams {
    /// Window boundaries for explicit and uniform grids.
    pub fn window_grid(&self) -> Option<Vec<f64>> {
        match &self.grid {
            GridSpec::Explicit(g) => Some(g.clone()),
            GridSpec::Uniform(w) => {
                let n = ((self.t1 - self.t0) / w - 1e-9).ceil().max(1.0) as usize;
                let mut g: Vec<f64> = (0..n).map(|k| self.t0 + k as f64 * w).collect();
                g.push(self.t1);
                Some(g)
            }
            GridSpec::None | GridSpec::Partition => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SystemPlan {
    pub system: InteractiveSystem,
    pub slow: Option<SlowControl>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateOptions {
    pub replay: bool,
    pub coalitions: bool,
    pub invariant_tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct RecurrencePlan {
    pub declared: Option<RecurrenceMap>,
    pub holdout: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct VerbalizationPlan {
    pub spec: Verbalization,
    pub recurrence: Option<RecurrencePlan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TacticsMode {
    Run,
    Interaction,
    Synthesis,
}

#[derive(Debug, Clone)]
pub struct TacticsPlan {
    pub mode: TacticsMode,
    pub games: Vec<CommentedGame>,
    pub t12: Option<InteractionTerm>,
    pub t21: Option<InteractionTerm>,
    pub synthesis: Option<SynthesisRule>,
    /// Check synthesis form 1 as an extension of game 1's rule.
    pub extension: bool,
}

#[derive(Debug, Clone)]
pub enum PredictPlan {
    Rolling {
        horizon: f64,
        assumed: Vec<(usize, Signal)>,
        family: Option<(FeedbackFamily, usize)>,
    },
    Unravel {
        filter: FilterSpec,
        family: Option<(FeedbackFamily, FitTarget)>,
        reference: Option<Vec<Expr>>,
        margin: f64,
    },
    Pipeline {
        assumed_eps: Vec<Signal>,
        short_horizon: f64,
    },
}

#[derive(Debug, Clone)]
pub enum RepDynPlan {
    Plain(RepDynSpec),
    Tactical(Box<TacticalRepDyn>),
}

#[derive(Debug, Clone)]
pub struct InvertPlan {
    pub problem: InverseProblem,
    pub options: InverseOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub metric: String,
    pub max: Option<f64>,
    pub min: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputOptions {
    pub stride: usize,
    pub json: bool,
}

/// A fully validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub path: PathBuf,
    pub name: String,
    pub description: Option<String>,
    /// Raw file contents, for the run digest.
    pub bytes: Vec<u8>,
    pub params: RunParams,
    pub system: Option<SystemPlan>,
    pub simulate: SimulateOptions,
    pub verbalization: Option<VerbalizationPlan>,
    pub dialogue: Option<Dialogue>,
    pub tactics: Option<TacticsPlan>,
    pub predict: Option<PredictPlan>,
    pub repdyn: Option<RepDynPlan>,
    pub invert: Option<InvertPlan>,
    pub checks: Vec<Check>,
    pub output: OutputOptions,
}

impl Scenario {
    /// Commands whose required sections are present.
    pub fn supported(&self) -> Vec<Command> {
        Command::ALL
            .into_iter()
            .filter(|c| match c {
                Command::Simulate => self.system.is_some(),
                Command::Verbalize => {
                    (self.system.is_some() && self.verbalization.is_some()) || self.dialogue.is_some()
                }
                Command::Tactics => self.tactics.is_some(),
                Command::Predict => self.system.is_some() && self.predict.is_some(),
                Command::Repdyn => self.repdyn.is_some(),
                Command::Invert => self.invert.is_some(),
            })
            .collect()
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, LoadError> {
    load_scenario_with(path, &Overrides::default())
}

pub fn load_scenario_with(path: &Path, overrides: &Overrides) -> Result<Scenario, LoadError> {
    let fail = |diagnostics| LoadError {
        file: path.to_path_buf(),
        diagnostics,
    };
    let bytes = std::fs::read(path).map_err(|e| {
        fail(vec![Diagnostic {
            line: None,
            column: None,
            path: String::new(),
            message: format!("cannot read scenario: {e}"),
        }])
    })?;
    parse_scenario(path, bytes, overrides).map_err(fail)
}

/// Validate scenario text that is already in memory.
pub fn parse_scenario(path: &Path, bytes: Vec<u8>, overrides: &Overrides) -> Result<Scenario, Vec<Diagnostic>> {
    let source = String::from_utf8(bytes.clone()).map_err(|e| {
        vec![Diagnostic {
            line: None,
            column: None,
            path: String::new(),
            message: format!("scenario is not UTF-8: {e}"),
        }]
    })?;
    let mut ctx = Ctx {
        source: &source,
        diags: Vec::new(),
    };
    let raw: RawScenario = match toml::from_str(&source) {
        Ok(r) => r,
        Err(e) => {
            ctx.push(e.span(), "", e.message().trim_end().to_string());
            return Err(ctx.diags);
        }
    };
    let scenario = ctx.scenario(raw, path, bytes, overrides);
    match scenario {
        Some(s) if ctx.diags.is_empty() => Ok(s),
        _ => Err(ctx.diags),
    }
}

fn sources(list: &[Text]) -> Vec<&str> {
    list.iter().map(|t| t.get_ref().as_str()).collect()
}

struct Ctx<'a> {
    source: &'a str,
    diags: Vec<Diagnostic>,
}

impl Ctx<'_> {
    fn location(&self, offset: usize) -> (usize, usize) {
        let offset = offset.min(self.source.len());
        let before = &self.source[..offset];
        let line = before.matches('\n').count() + 1;
        let line_start = before.rfind('\n').map_or(0, |i| i + 1);
        (line, self.source[line_start..offset].chars().count() + 1)
    }

    fn push(&mut self, span: Option<Range<usize>>, path: &str, message: String) {
        let (line, column) = match span {
            Some(s) => {
                let (l, c) = self.location(s.start);
                (Some(l), Some(c))
            }
            None => (None, None),
        };
        self.diags.push(Diagnostic {
            line,
            column,
            path: path.to_string(),
            message,
        });
    }

    /// Offset of the `column`-th character inside a quoted string value.
    fn inner_offset(&self, text: &Text, column: usize) -> usize {
        let start = text.span().start + 1;
        let body = self.source.get(start..text.span().end).unwrap_or("");
        start + body.char_indices().nth(column.saturating_sub(1)).map_or(0, |(b, _)| b)
    }

    fn expr(&mut self, text: &Text, path: &str) -> Option<Expr> {
        match Expr::parse(text.get_ref()) {
            Ok(e) => Some(e),
            Err(e) => {
                let at = self.inner_offset(text, e.column);
                self.push(Some(at..at), path, e.to_string());
                None
            }
        }
    }

    /// Parse every entry, reporting each failure.
    fn exprs(&mut self, list: &[Text], path: &str) -> Option<Vec<Expr>> {
        let parsed: Vec<Option<Expr>> = list
            .iter()
            .enumerate()
            .map(|(i, t)| self.expr(t, &format!("{path}[{i}]")))
            .collect();
        parsed.into_iter().collect()
    }

    fn poly(&mut self, text: &Text, path: &str) -> Option<NcPoly> {
        match NcPoly::parse(text.get_ref()) {
            Ok(p) => Some(p),
            Err(e) => {
                self.push(Some(text.span()), path, e.to_string());
                None
            }
        }
    }

    /// Report a core validation failure; expression errors are located at
    /// the matching source among `texts`.
    fn core<T>(&mut self, r: tactica::Result<T>, path: &str, span: Range<usize>, texts: &[&Text]) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(Error::Expr(e)) => {
                match texts.iter().find(|t| *t.get_ref() == e.source_text) {
                    Some(t) => {
                        let at = self.inner_offset(t, e.column);
                        self.push(Some(at..at), path, e.to_string());
                    }
                    None => self.push(Some(span), path, e.to_string()),
                }
                None
            }
            Err(e) => {
                self.push(Some(span), path, e.to_string());
                None
            }
        }
    }

    fn label(&mut self, text: &Text, known: &[String], what: &str, path: &str) -> bool {
        if known.iter().any(|k| k == text.get_ref()) {
            return true;
        }
        self.push(
            Some(text.span()),
            path,
            format!("undefined {what} label `{}` (declared: {})", text.get_ref(), list_or_none(known)),
        );
        false
    }

    fn scenario(&mut self, raw: RawScenario, path: &Path, bytes: Vec<u8>, ov: &Overrides) -> Option<Scenario> {
        if *raw.schema.get_ref() != SCHEMA_VERSION {
            self.push(
                Some(raw.schema.span()),
                "schema",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", raw.schema.get_ref()),
            );
        }
        let params = self.run(&raw.run, ov);
        let class_labels: Vec<String> = raw
            .algebra
            .as_ref()
            .map(|a| a.get_ref().classes.iter().map(|c| c.get_ref().label.get_ref().clone()).collect())
            .unwrap_or_default();

        let slow = raw.slow.as_ref().and_then(|s| self.slow(s, raw.system.as_ref()));
        let system = raw.system.as_ref().and_then(|s| {
            let lambda = slow.as_ref().map(SlowControl::dim);
            self.system(s, "system", lambda)
        });
        let simulate = raw.simulate.unwrap_or_default();
        let simulate = SimulateOptions {
            replay: simulate.replay,
            coalitions: simulate.coalitions,
            invariant_tolerance: simulate.invariant_tolerance.unwrap_or(params.tolerance),
        };
        if simulate.coalitions && raw.system.as_ref().is_some_and(|s| s.get_ref().coalitions.is_empty()) {
            self.push(None, "simulate.coalitions", "no coalitions are declared".into());
        }
        let verbalization = raw
            .verbalization
            .as_ref()
            .and_then(|v| self.verbalization(v, params.tolerance));
        if raw.verbalization.is_some() && raw.system.is_none() {
            self.push(None, "verbalization", "verbalization needs a [system] section".into());
        }
        if params.grid == GridSpec::Partition
            && !raw
                .verbalization
                .as_ref()
                .is_some_and(|v| v.get_ref().complex.is_some())
        {
            self.push(
                Some(raw.run.span()),
                "run.partition",
                "partition windows need a cell complex in [verbalization]".into(),
            );
        }
        let dialogue = raw.dialogue.as_ref().and_then(|d| self.dialogue(d));
        let tactics = raw.tactics.as_ref().and_then(|t| self.tactics(t, &class_labels));
        // Prediction horizons default to the first verbalization window.
        let window = params.window_grid().and_then(|g| g.get(1).map(|t| t - g[0]));
        let predict = raw.predict.as_ref().and_then(|p| self.predict(p, raw.system.as_ref(), window));
        if raw.predict.is_some() && raw.system.is_none() {
            self.push(None, "predict", "prediction needs a [system] section".into());
        }
        let registry = raw.algebra.as_ref().and_then(|a| self.algebra(a));
        let repdyn = match (&raw.repdyn, &raw.algebra) {
            (Some(r), Some(_)) => registry
                .as_ref()
                .and_then(|reg| self.repdyn(r, reg, &class_labels, params.tolerance)),
            (Some(r), None) => {
                self.push(Some(r.span()), "repdyn", "representative dynamics need an [algebra] section".into());
                None
            }
            _ => None,
        };
        let invert = raw.invert.as_ref().and_then(|i| self.invert(i, params.seed));

        let needs_grid = raw.verbalization.is_some()
            || raw.dialogue.is_some()
            || raw.tactics.is_some()
            || raw.repdyn.as_ref().is_some_and(|r| r.get_ref().dialect.is_some());
        if needs_grid && params.grid == GridSpec::None {
            self.push(
                Some(raw.run.span()),
                "run",
                "windowed commands need `windows`, `window` or `partition`".into(),
            );
        }
        let checks = raw
            .checks
            .iter()
            .enumerate()
            .filter_map(|(i, c)| {
                if c.max.is_none() && c.min.is_none() {
                    self.push(Some(c.metric.span()), &format!("checks[{i}]"), "a check needs `max` or `min`".into());
                    return None;
                }
                Some(Check {
                    metric: c.metric.get_ref().clone(),
                    max: c.max,
                    min: c.min,
                })
            })
            .collect();
        if raw.output.stride == 0 {
            self.push(None, "output.stride", "stride must be positive".into());
        }
        Some(Scenario {
            path: path.to_path_buf(),
            name: raw.name,
            description: raw.description,
            bytes,
            params,
            system: system.map(|system| SystemPlan { system, slow }),
            simulate,
            verbalization,
            dialogue,
            tactics,
            predict,
            repdyn,
            invert,
            checks,
            output: OutputOptions {
                stride: raw.output.stride,
                json: raw.output.json,
            },
        })
    }

    fn run(&mut self, raw: &Spanned<RawRun>, ov: &Overrides) -> RunParams {
        let r = raw.get_ref();
        let (t0, t1) = (r.t0, *r.t1.get_ref());
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            self.push(Some(r.t1.span()), "run.t1", format!("empty time interval [{t0}, {t1}]"));
        }
        let dt = ov.dt.unwrap_or(*r.dt.get_ref());
        if !(dt.is_finite() && dt > 0.0) {
            self.push(Some(r.dt.span()), "run.dt", format!("step must be positive, got {dt}"));
        }
        let declared = usize::from(r.windows.is_some()) + usize::from(r.window.is_some()) + usize::from(r.partition);
        if declared > 1 {
            self.push(
                Some(raw.span()),
                "run",
                "choose one of `windows`, `window` and `partition`".into(),
            );
        }
        let grid = if let Some(w) = &r.windows {
            let g = w.get_ref();
            let tol = 1e-9 * (1.0 + t0.abs().max(t1.abs()));
            if g.len() < 2 || g.windows(2).any(|p| !(p[1] > p[0])) {
                self.push(Some(w.span()), "run.windows", "boundaries must be strictly increasing, at least two".into());
            } else if (g[0] - t0).abs() > tol || (g[g.len() - 1] - t1).abs() > tol {
                self.push(Some(w.span()), "run.windows", format!("boundaries must start at {t0} and end at {t1}"));
            }
            GridSpec::Explicit(g.clone())
        } else if let Some(w) = &r.window {
            if !(*w.get_ref() > 0.0) {
                self.push(Some(w.span()), "run.window", "window width must be positive".into());
            }
            GridSpec::Uniform(*w.get_ref())
        } else if r.partition {
            GridSpec::Partition
        } else {
            GridSpec::None
        };
        let tolerance = r
            .tolerance
            .as_ref()
            .map(|t| *t.get_ref())
            .or(ov.tolerance)
            .unwrap_or(DEFAULT_TOLERANCE);
        if !(tolerance.is_finite() && tolerance >= 0.0) {
            let span = r.tolerance.as_ref().map(Spanned::span);
            self.push(span, "run.tolerance", format!("tolerance must be non-negative, got {tolerance}"));
        }
        RunParams {
            t0,
            t1,
            dt,
            grid,
            seed: ov.seed.or(r.seed).unwrap_or(0),
            tolerance,
        }
    }

    fn player(&mut self, raw: &Spanned<RawPlayer>, path: &str) -> Option<Player> {
        let p = raw.get_ref();
        let policy = self.exprs(&p.policy, &format!("{path}.policy"));
        let coupling = self.exprs(&p.coupling, &format!("{path}.coupling"));
        let epsilon = self.exprs(&p.epsilon, &format!("{path}.epsilon"));
        let direction = match p.direction.as_ref().map(|d| d.get_ref().as_str()) {
            None | Some("forward") => Some(Direction::Forward),
            Some("inverse") => Some(Direction::Inverse),
            Some(other) => {
                self.push(
                    p.direction.as_ref().map(Spanned::span),
                    &format!("{path}.direction"),
                    format!("unknown direction `{other}` (expected forward or inverse)"),
                );
                None
            }
        };
        let (form, direction) = (coupling?, direction?);
        let derivative_order = u8::from(form.iter().any(|e| e.references(VarKind::DPhi)));
        Some(Player {
            policy: PureControlPolicy {
                player: 0,
                signal: Signal::Expr(policy?),
                description: p.description.clone(),
            },
            coupling: FeedbackCoupling {
                form,
                derivative_order,
                direction,
            },
            epsilon: EpsilonProcess {
                source: EpsilonSource::Law(epsilon?),
                ground_truth: true,
            },
        })
    }

    fn system(&mut self, raw: &Spanned<RawSystem>, path: &str, lambda_dim: Option<usize>) -> Option<InteractiveSystem> {
        let r = raw.get_ref();
        let before = self.diags.len();
        let dynamics = self.exprs(&r.dynamics, &format!("{path}.dynamics"));
        let invariants = self.exprs(&r.invariants, &format!("{path}.invariants"));
        let players: Vec<Option<Player>> = r
            .players
            .iter()
            .enumerate()
            .map(|(i, p)| self.player(p, &format!("{path}.players[{i}]")))
            .collect();
        let n = r.players.len();
        let mut coalitions = Vec::new();
        for (i, c) in r.coalitions.iter().enumerate() {
            let c = c.get_ref();
            let cpath = format!("{path}.coalitions[{i}]");
            for &m in c.members.get_ref() {
                if m == 0 || m > n {
                    self.push(
                        Some(c.members.span()),
                        &format!("{cpath}.members"),
                        format!("member {m} is not a declared player (1..={n})"),
                    );
                }
            }
            if c.members.get_ref().is_empty() {
                self.push(Some(c.members.span()), &format!("{cpath}.members"), "coalition has no members".into());
            }
            coalitions.push(self.exprs(&c.coupling, &format!("{cpath}.coupling")));
        }
        if self.diags.len() > before {
            return None;
        }
        let mut sys = InteractiveSystem {
            dim: r.initial.len(),
            initial: r.initial.clone(),
            dynamics: dynamics?,
            players: Vec::new(),
            coalitions: Vec::new(),
            invariants: invariants?,
            lambda_dim: if r.lambda_dim > 0 { r.lambda_dim } else { lambda_dim.unwrap_or(0) },
            omega_dim: r.omega_dim,
        };
        for p in players {
            sys = sys.with_player(p?);
        }
        for c in &r.coalitions {
            let c = c.get_ref();
            sys = sys.with_coalition(c.members.get_ref().clone(), &sources(&c.coupling)).ok()?;
        }
        let texts: Vec<&Text> = r
            .dynamics
            .iter()
            .chain(&r.invariants)
            .chain(r.players.iter().flat_map(|p| {
                let p = p.get_ref();
                p.policy.iter().chain(&p.coupling).chain(&p.epsilon)
            }))
            .chain(r.coalitions.iter().flat_map(|c| c.get_ref().coupling.iter()))
            .collect();
        self.core(sys.check(), path, raw.span(), &texts)?;
        Some(sys)
    }

    fn slow(&mut self, raw: &Spanned<RawSlow>, system: Option<&Spanned<RawSystem>>) -> Option<SlowControl> {
        let r = raw.get_ref();
        let schedule = match (&r.continuous, &r.discrete) {
            (Some(c), None) => Schedule::Continuous(self.exprs(c, "slow.continuous")?),
            (None, Some(d)) => Schedule::Discrete(d.iter().map(|p| (p.step, p.value.clone())).collect()),
            _ => {
                self.push(Some(raw.span()), "slow", "declare exactly one of `continuous` and `discrete`".into());
                return None;
            }
        };
        let players = system.map_or(0, |s| s.get_ref().players.len());
        let owner = match &r.owner {
            None => Owner::External,
            Some(t) => match parse_owner(t.get_ref(), players) {
                Ok(o) => o,
                Err(msg) => {
                    self.push(Some(t.span()), "slow.owner", msg);
                    return None;
                }
            },
        };
        let slow = SlowControl { schedule, owner };
        self.core(slow.validate(), "slow", raw.span(), &r.continuous.iter().flatten().collect::<Vec<_>>())?;
        Some(slow)
    }

    fn functionals(&mut self, list: &[RawFunctional], path: &str) -> Option<Vec<WindowFunctional>> {
        let built: Vec<Option<WindowFunctional>> = list
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let kind = FunctionalKind::parse(f.kind.get_ref());
                if kind.is_none() {
                    self.push(
                        Some(f.kind.span()),
                        &format!("{path}[{i}].kind"),
                        format!(
                            "unknown functional kind `{}` (expected mean, integral, endpoint or quadratic_moment)",
                            f.kind.get_ref()
                        ),
                    );
                }
                let integrand = self.expr(&f.of, &format!("{path}[{i}].of"));
                Some(WindowFunctional {
                    kind: kind?,
                    integrand: integrand?,
                })
            })
            .collect();
        built.into_iter().collect()
    }

    fn verbalization(&mut self, raw: &Spanned<RawVerbalization>, tolerance: f64) -> Option<VerbalizationPlan> {
        let r = raw.get_ref();
        let omega = self.functionals(&r.omega, "verbalization.omega");
        let v = self.functionals(&r.v, "verbalization.v");
        let complex = match &r.complex {
            None => Some(None),
            Some(c) => {
                let cr = c.get_ref();
                let preds = cr
                    .cells
                    .iter()
                    .enumerate()
                    .map(|(i, cell)| self.expr(&cell.predicate, &format!("verbalization.complex.cells[{i}].predicate")))
                    .collect::<Vec<_>>();
                if preds.iter().all(Option::is_some) {
                    let cells: Vec<(&str, &str)> = cr
                        .cells
                        .iter()
                        .map(|cell| (cell.label.as_str(), cell.predicate.get_ref().as_str()))
                        .collect();
                    let bounds = cr.bounds.iter().map(|b| (b[0], b[1])).collect();
                    let texts: Vec<&Text> = cr.cells.iter().map(|c| &c.predicate).collect();
                    self.core(CellComplex::new(bounds, &cells), "verbalization.complex", c.span(), &texts)
                        .map(Some)
                } else {
                    None
                }
            }
        };
        let recurrence = match &r.recurrence {
            None => Some(None),
            Some(rec) => {
                let rr = rec.get_ref();
                let declared = match &rr.declared {
                    None => Some(None),
                    Some(d) => self
                        .exprs(d, "verbalization.recurrence.declared")
                        .map(|e| Some(RecurrenceMap::Declared(e))),
                };
                if rr.declared.is_some() && rr.holdout > 0 {
                    self.push(
                        Some(rec.span()),
                        "verbalization.recurrence.holdout",
                        "held-out windows apply to fitted maps only".into(),
                    );
                }
                declared.map(|declared| {
                    Some(RecurrencePlan {
                        declared,
                        holdout: rr.holdout,
                        tolerance: rr.tolerance.unwrap_or(tolerance),
                    })
                })
            }
        };
        Some(VerbalizationPlan {
            spec: Verbalization {
                omega: omega?,
                v: v?,
                complex: complex?,
            },
            recurrence: recurrence?,
        })
    }

    fn dialogue(&mut self, raw: &Spanned<RawDialogue>) -> Option<Dialogue> {
        let r = raw.get_ref();
        let dynamics = self.exprs(&r.dynamics, "dialogue.dynamics");
        let players: Vec<Option<Player>> = r
            .players
            .iter()
            .enumerate()
            .map(|(i, p)| self.player(p, &format!("dialogue.players[{i}]")))
            .collect();
        let state = self.functionals(&r.state, "dialogue.state");
        let control = self.functionals(&r.control, "dialogue.control");
        let step_map = self.exprs(&r.step_map, "dialogue.step_map");
        if r.step_map.len() != r.state.len() || r.initial_state.len() != r.state.len() {
            self.push(
                Some(raw.span()),
                "dialogue",
                format!(
                    "{} state functionals, {} step-map components and {} initial states must agree",
                    r.state.len(),
                    r.step_map.len(),
                    r.initial_state.len()
                ),
            );
            return None;
        }
        let players = players
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                p.map(|mut p| {
                    p.policy.player = i + 1;
                    p
                })
            })
            .collect::<Option<Vec<_>>>();
        Some(Dialogue {
            field: IntentionField {
                initial: r.initial.clone(),
                dynamics: dynamics?,
            },
            players: players?,
            state_functionals: state?,
            control_functionals: control?,
            step_map: step_map?,
            initial_state: r.initial_state.clone(),
        })
    }

    fn dialect(&mut self, list: &[RawDialect], classes: &[String], path: &str) -> Option<Vec<DialecticalObject>> {
        let mut out = Vec::new();
        let mut ok = true;
        for (i, d) in list.iter().enumerate() {
            let mut table = Vec::new();
            for (j, e) in d.table.iter().enumerate() {
                let epath = format!("{path}[{i}].table[{j}]");
                let from = self.label(&e.from, classes, "class", &format!("{epath}.from"));
                let to = self.label(&e.to, classes, "class", &format!("{epath}.to"));
                let trigger = self.expr(&e.trigger, &format!("{epath}.trigger"));
                let eta = self.exprs(&e.eta_update, &format!("{epath}.eta_update"));
                let embedding: Vec<Option<()>> = e
                    .embedding
                    .iter()
                    .enumerate()
                    .map(|(k, p)| self.poly(p, &format!("{epath}.embedding[{k}]")).map(|_| ()))
                    .collect();
                match (from && to, trigger, eta, embedding.iter().all(Option::is_some)) {
                    (true, Some(trigger), Some(eta_update), true) => table.push(TransitionEntry {
                        from: e.from.get_ref().clone(),
                        trigger,
                        to: e.to.get_ref().clone(),
                        eta_update,
                        embedding: e.embedding.iter().map(|p| p.get_ref().clone()).collect(),
                    }),
                    _ => ok = false,
                }
            }
            out.push(DialecticalObject {
                label: d.label.clone(),
                table,
            });
        }
        ok.then_some(out)
    }

    fn tactics(&mut self, raw: &Spanned<RawTactics>, algebra_labels: &[String]) -> Option<TacticsPlan> {
        let r = raw.get_ref();
        let mode = match r.mode.as_ref().map(|m| m.get_ref().as_str()) {
            None | Some("run") => TacticsMode::Run,
            Some("interaction") => TacticsMode::Interaction,
            Some("synthesis") => TacticsMode::Synthesis,
            Some(other) => {
                self.push(
                    r.mode.as_ref().map(Spanned::span),
                    "tactics.mode",
                    format!("unknown mode `{other}` (expected run, interaction or synthesis)"),
                );
                return None;
            }
        };
        let games: Vec<Option<CommentedGame>> = r
            .games
            .iter()
            .enumerate()
            .map(|(i, g)| self.game(g, algebra_labels, &format!("tactics.games[{i}]")))
            .collect();
        if r.games.is_empty() {
            self.push(Some(raw.span()), "tactics.games", "no games declared".into());
        }
        let pair = r.games.len() == 2;
        if mode == TacticsMode::Interaction && !pair {
            self.push(Some(raw.span()), "tactics", "interaction couples exactly two games".into());
        }
        let (t12, t21) = match &r.interaction {
            None => (Some(None), Some(None)),
            Some(i) => {
                let ir = i.get_ref();
                let term = |ctx: &mut Self, t: &Option<Vec<Text>>, p: &str| match t {
                    None => Some(None),
                    Some(list) => ctx.exprs(list, p).map(|form| Some(InteractionTerm { form })),
                };
                (
                    term(self, &ir.t12, "tactics.interaction.t12"),
                    term(self, &ir.t21, "tactics.interaction.t21"),
                )
            }
        };
        let games: Option<Vec<CommentedGame>> = games.into_iter().collect();
        let (games, t12, t21) = (games?, t12?, t21?);
        let zero = |k: usize| games.get(k).map(|g: &CommentedGame| InteractionTerm::zero(g.space.dim()));
        let t12 = t12.or_else(|| zero(0));
        let t21 = t21.or_else(|| zero(1));
        let synthesis = match &r.synthesis {
            None => None,
            Some(s) => {
                let sr = s.get_ref();
                if sr.from_interaction {
                    if !pair {
                        self.push(Some(s.span()), "tactics.synthesis", "from_interaction needs two games".into());
                        return None;
                    }
                    Some(SynthesisRule::from_interaction(
                        &games[0].rule,
                        &games[1].rule,
                        t12.as_ref()?,
                        t21.as_ref()?,
                    ))
                } else {
                    let forms: Vec<Option<Vec<Expr>>> = sr
                        .forms
                        .iter()
                        .enumerate()
                        .map(|(j, f)| self.exprs(f, &format!("tactics.synthesis.forms[{j}]")))
                        .collect();
                    let forms: Vec<Vec<Expr>> = forms.into_iter().collect::<Option<_>>()?;
                    let rule = SynthesisRule {
                        forms,
                        masks: sr.masks.iter().map(|m| m.get_ref().clone()).collect(),
                    };
                    let dims: Vec<[usize; 3]> = games
                        .iter()
                        .map(|g| [g.space.dim(), g.verbalization.omega.len(), g.verbalization.v.len()])
                        .collect();
                    let texts: Vec<&Text> = sr.forms.iter().flatten().collect();
                    self.core(rule.validate(&dims), "tactics.synthesis", s.span(), &texts)?;
                    Some(rule)
                }
            }
        };
        if mode == TacticsMode::Synthesis && synthesis.is_none() {
            self.push(Some(raw.span()), "tactics.synthesis", "synthesis mode needs a [tactics.synthesis] table".into());
        }
        if r.extension && synthesis.is_none() {
            self.push(Some(raw.span()), "tactics.extension", "extension checks need a synthesis rule".into());
        }
        Some(TacticsPlan {
            mode,
            games,
            t12,
            t21,
            synthesis,
            extension: r.extension,
        })
    }

    fn game(&mut self, raw: &Spanned<RawGame>, algebra_labels: &[String], path: &str) -> Option<CommentedGame> {
        let g = raw.get_ref();
        let before = self.diags.len();
        let (space, initial) = match (&g.theta, &g.class) {
            (Some(theta), None) => (CommentSpace::Vector(theta.len()), CommentValue::vector(theta.clone())),
            (None, Some(class)) => {
                let classes = g.classes.clone().unwrap_or_else(|| algebra_labels.to_vec());
                self.label(class, &classes, "class", &format!("{path}.class"));
                let eta = g.eta.clone().unwrap_or_default();
                (
                    CommentSpace::Labeled {
                        classes,
                        eta_dim: eta.len(),
                    },
                    CommentValue::labeled(class.get_ref(), eta),
                )
            }
            _ => {
                self.push(Some(raw.span()), path, "declare exactly one of `theta` and `class`".into());
                return None;
            }
        };
        let classes = match &space {
            CommentSpace::Labeled { classes, .. } => classes.clone(),
            CommentSpace::Vector(_) => Vec::new(),
        };
        let dialect = self.dialect(&g.dialect, &classes, &format!("{path}.dialect"));
        let system = self.system(&g.system, &format!("{path}.system"), Some(space.dim()));
        let omega = self.functionals(&g.omega, &format!("{path}.omega"));
        let v = self.functionals(&g.v, &format!("{path}.v"));
        let rule = self.exprs(&g.rule, &format!("{path}.rule"));
        if self.diags.len() > before {
            return None;
        }
        let game = CommentedGame {
            system: system?,
            verbalization: Verbalization {
                omega: omega?,
                v: v?,
                complex: None,
            },
            space,
            rule: CommentRule { update: rule? },
            initial,
            dialect: dialect?,
        };
        let texts: Vec<&Text> = g
            .rule
            .iter()
            .chain(g.dialect.iter().flat_map(|d| d.table.iter().flat_map(|e| std::iter::once(&e.trigger).chain(&e.eta_update))))
            .collect();
        self.core(game.validate(), path, raw.span(), &texts)?;
        Some(game)
    }

    fn family(&mut self, raw: &RawFamily, path: &str) -> Option<(FeedbackFamily, FitTarget)> {
        let model = self.expr(&raw.model, &format!("{path}.model"));
        let target = match parse_target(raw.target.get_ref()) {
            Some(t) => Some(t),
            None => {
                self.push(
                    Some(raw.target.span()),
                    &format!("{path}.target"),
                    format!("unknown fit target `{}` (expected control:<k> or pure:<k>)", raw.target.get_ref()),
                );
                None
            }
        };
        Some((
            FeedbackFamily {
                model: model?,
                initial: raw.initial.clone(),
            },
            target?,
        ))
    }

    fn predict(
        &mut self,
        raw: &Spanned<RawPredict>,
        system: Option<&Spanned<RawSystem>>,
        window: Option<f64>,
    ) -> Option<PredictPlan> {
        let r = raw.get_ref();
        let players = system.map_or(0, |s| s.get_ref().players.len());
        let family = r.family.as_ref().map(|f| self.family(f, "predict.family"));
        match r.mode.get_ref().as_str() {
            "rolling" => {
                let Some(horizon) = r.horizon.or(window) else {
                    self.push(
                        Some(raw.span()),
                        "predict.horizon",
                        "rolling predictions need a horizon or a window grid".into(),
                    );
                    return None;
                };
                let mut assumed = Vec::new();
                for (i, a) in r.assumed.iter().enumerate() {
                    let p = *a.player.get_ref();
                    if p == 0 || p > players {
                        self.push(
                            Some(a.player.span()),
                            &format!("predict.assumed[{i}].player"),
                            format!("player {p} is not declared (1..={players})"),
                        );
                    }
                    if let Some(e) = self.exprs(&a.policy, &format!("predict.assumed[{i}].policy")) {
                        assumed.push((p, Signal::Expr(e)));
                    }
                }
                let family = match family {
                    None => None,
                    Some(None) => return None,
                    Some(Some((fam, FitTarget::Control(k)))) => Some((fam, k)),
                    Some(Some((_, FitTarget::Pure(_)))) => {
                        let span = r.family.as_ref().map(|f| f.target.span());
                        self.push(span, "predict.family.target", "rolling fits target realized controls".into());
                        return None;
                    }
                };
                (assumed.len() == r.assumed.len()).then_some(PredictPlan::Rolling {
                    horizon,
                    assumed,
                    family,
                })
            }
            "unravel" => {
                let filter = match r.filter.as_ref().map(|f| (f.get_ref(), f.span())) {
                    Some((RawFilter { cutoff: Some(c), frequencies: None }, _)) => Some(FilterSpec::LowPass { cutoff: *c }),
                    Some((RawFilter { cutoff: None, frequencies: Some(f) }, _)) => {
                        Some(FilterSpec::Band { frequencies: f.clone() })
                    }
                    Some((_, span)) => {
                        self.push(Some(span), "predict.filter", "declare exactly one of `cutoff` and `frequencies`".into());
                        None
                    }
                    None => {
                        self.push(Some(raw.span()), "predict.filter", "unraveling needs a filter".into());
                        None
                    }
                };
                let reference = match &r.reference {
                    None => Some(None),
                    Some(list) => self.exprs(list, "predict.reference").map(Some),
                };
                let margin = r.margin.unwrap_or(0.05);
                if !(0.0..0.5).contains(&margin) {
                    self.push(Some(raw.span()), "predict.margin", format!("margin {margin} outside [0, 0.5)"));
                }
                let family = match family {
                    None => Some(None),
                    Some(f) => f.map(Some),
                };
                Some(PredictPlan::Unravel {
                    filter: filter?,
                    family: family?,
                    reference: reference?,
                    margin,
                })
            }
            "pipeline" => {
                let eps: Vec<Option<Signal>> = r
                    .assumed_eps
                    .iter()
                    .enumerate()
                    .map(|(i, e)| self.exprs(e, &format!("predict.assumed_eps[{i}]")).map(Signal::Expr))
                    .collect();
                if r.assumed_eps.len() != players {
                    self.push(
                        Some(raw.span()),
                        "predict.assumed_eps",
                        format!("{} assumed epsilon signals for {players} players", r.assumed_eps.len()),
                    );
                }
                Some(PredictPlan::Pipeline {
                    assumed_eps: eps.into_iter().collect::<Option<_>>()?,
                    short_horizon: r.horizon.or(window).unwrap_or(0.0),
                })
            }
            other => {
                self.push(
                    Some(r.mode.span()),
                    "predict.mode",
                    format!("unknown mode `{other}` (expected rolling, unravel or pipeline)"),
                );
                None
            }
        }
    }

    fn algebra(&mut self, raw: &Spanned<RawAlgebra>) -> Option<AlgebraClassRegistry> {
        let mut classes = Vec::new();
        let mut ok = true;
        for (i, c) in raw.get_ref().classes.iter().enumerate() {
            let cr = c.get_ref();
            let label = cr.label.get_ref();
            let mut presentations = Vec::new();
            for (j, p) in cr.presentations.iter().enumerate() {
                let pr = p.get_ref();
                let path = format!("algebra.classes[{i}].presentations[{j}]");
                if pr.commutative && !pr.relations.is_empty() {
                    self.push(Some(p.span()), &path, "commutative presentations take no relations".into());
                    ok = false;
                    continue;
                }
                let built = if pr.commutative {
                    Some(AlgebraPresentation::commutative(label, pr.generators))
                } else {
                    let polys: Vec<Option<NcPoly>> = pr
                        .relations
                        .iter()
                        .enumerate()
                        .map(|(k, t)| self.poly(t, &format!("{path}.relations[{k}]")))
                        .collect();
                    polys.into_iter().collect::<Option<Vec<_>>>().map(|relations| AlgebraPresentation {
                        label: label.clone(),
                        generators: pr.generators,
                        relations,
                    })
                };
                match built.and_then(|b| self.core(b.validate().map(|_| b.clone()), &path, p.span(), &[])) {
                    Some(b) => presentations.push(b),
                    None => ok = false,
                }
            }
            classes.push(AlgebraClass {
                label: label.clone(),
                presentations,
            });
        }
        if !ok {
            return None;
        }
        self.core(AlgebraClassRegistry::new(classes), "algebra", raw.span(), &[])
    }

    fn matrix(&mut self, raw: &RawMatrix, n: usize, path: &str) -> Option<CMatrix> {
        let mut m = CMatrix::zeros(n, n);
        let bad = |ctx: &mut Self, msg: String| {
            ctx.push(None, path, msg);
            None
        };
        match raw {
            RawMatrix::Rows(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return bad(self, format!("expected {n} rows of {n} entries"));
                }
                for (i, row) in rows.iter().enumerate() {
                    for (j, x) in row.iter().enumerate() {
                        m[(i, j)] = match *x {
                            RawScalar::Real(re) => re.into(),
                            RawScalar::Complex([re, im]) => num_complex::Complex64::new(re, im),
                        };
                    }
                }
            }
            RawMatrix::Diag { diag } => {
                if diag.len() != n {
                    return bad(self, format!("expected {n} diagonal entries, got {}", diag.len()));
                }
                for (i, x) in diag.iter().enumerate() {
                    m[(i, i)] = (*x).into();
                }
            }
            RawMatrix::Units { units } => {
                for &(i, j, x) in units {
                    if i == 0 || j == 0 || i > n || j > n {
                        return bad(self, format!("unit entry ({i}, {j}) outside 1..={n}"));
                    }
                    m[(i - 1, j - 1)] += x;
                }
            }
        }
        Some(m)
    }

    fn symbols(&mut self, raw: &[Vec<RawTerm>], path: &str) -> Option<Vec<Vec<SymbolTerm>>> {
        let one = Expr::constant(1.0);
        let built: Vec<Option<Vec<SymbolTerm>>> = raw
            .iter()
            .enumerate()
            .map(|(i, terms)| {
                let terms: Vec<Option<SymbolTerm>> = terms
                    .iter()
                    .enumerate()
                    .map(|(k, t)| {
                        let tpath = format!("{path}[{i}][{k}]");
                        let scale = match &t.scale {
                            Some(s) => self.expr(s, &format!("{tpath}.scale")),
                            None => Some(one.clone()),
                        };
                        let poly = self.poly(&t.poly, &format!("{tpath}.poly"));
                        Some(SymbolTerm {
                            scale: scale?,
                            poly: poly?,
                        })
                    })
                    .collect();
                terms.into_iter().collect()
            })
            .collect();
        built.into_iter().collect()
    }

    fn repdyn(
        &mut self,
        raw: &Spanned<RawRepDyn>,
        registry: &AlgebraClassRegistry,
        labels: &[String],
        tolerance: f64,
    ) -> Option<RepDynPlan> {
        let r = raw.get_ref();
        let before = self.diags.len();
        let n = r.dimension;
        let class_ok = self.label(&r.class, labels, "class", "repdyn.class");
        let initial: Vec<Option<CMatrix>> = r
            .initial
            .iter()
            .enumerate()
            .map(|(i, m)| self.matrix(m, n, &format!("repdyn.initial[{i}]")))
            .collect();
        let constants: Vec<Option<CMatrix>> = r
            .constants
            .iter()
            .enumerate()
            .map(|(i, m)| self.matrix(m, n, &format!("repdyn.constants[{i}]")))
            .collect();
        let inputs = self.exprs(&r.inputs, "repdyn.inputs");
        let coefficients = self.exprs(&r.coefficients, "repdyn.coefficients");
        let mut dynamics = Vec::new();
        for (i, d) in r.dynamics.iter().enumerate() {
            let dr = d.get_ref();
            let path = format!("repdyn.dynamics[{i}]");
            self.label(&dr.class, labels, "class", &format!("{path}.class"));
            if let Some(symbols) = self.symbols(&dr.symbols, &format!("{path}.symbols")) {
                dynamics.push(ClassDynamics {
                    class: dr.class.get_ref().clone(),
                    symbols,
                });
            }
        }
        let m = r.initial.len();
        if class_ok && registry.get(r.class.get_ref()).and_then(|c| c.presentation_for(m)).is_none() {
            self.push(
                Some(r.class.span()),
                "repdyn.class",
                format!("class `{}` has no presentation with {m} generators", r.class.get_ref()),
            );
        }
        let dialect = r.dialect.as_ref().map(|d| self.dialect(d, labels, "repdyn.dialect"));
        if self.diags.len() > before {
            return None;
        }
        let initial: Vec<CMatrix> = initial.into_iter().collect::<Option<_>>()?;
        let constants: Vec<CMatrix> = constants.into_iter().collect::<Option<_>>()?;
        let controls = ControlSchedule {
            inputs: inputs?,
            coefficients: coefficients?,
        };
        let tolerance = r.tolerance.unwrap_or(tolerance);
        let max_iterations = r.max_iterations.unwrap_or(DEFAULT_MAX_ITERATIONS);
        let max_correction = r.max_correction.unwrap_or(DEFAULT_MAX_CORRECTION);
        let texts: Vec<&Text> = r
            .inputs
            .iter()
            .chain(&r.coefficients)
            .chain(&r.rule)
            .chain(r.dynamics.iter().flat_map(|d| d.get_ref().symbols.iter().flatten().filter_map(|t| t.scale.as_ref())))
            .collect();
        match dialect {
            None => {
                if !r.rule.is_empty() || !r.eta.is_empty() {
                    self.push(Some(raw.span()), "repdyn", "comment rules need a `dialect` list".into());
                    return None;
                }
                let matching: Vec<&ClassDynamics> = dynamics.iter().filter(|d| d.class == *r.class.get_ref()).collect();
                if matching.len() != 1 {
                    self.push(
                        Some(r.class.span()),
                        "repdyn.dynamics",
                        format!("expected one dynamics entry for class `{}`, found {}", r.class.get_ref(), matching.len()),
                    );
                    return None;
                }
                let presentation = registry.get(r.class.get_ref())?.presentation_for(m)?.clone();
                let spec = RepDynSpec {
                    symbols: matching[0].symbols.clone(),
                    constants,
                    initial,
                    presentation,
                    controls,
                    tolerance,
                    max_iterations,
                    max_correction,
                };
                self.core(spec.validate(), "repdyn", raw.span(), &texts)?;
                Some(RepDynPlan::Plain(spec))
            }
            Some(dialect) => {
                let rule = self.exprs(&r.rule, "repdyn.rule")?;
                let cfg = TacticalRepDyn {
                    registry: registry.clone(),
                    dynamics,
                    constants,
                    controls,
                    initial,
                    initial_comment: CommentValue::labeled(r.class.get_ref(), r.eta.clone()),
                    rule: CommentRule { update: rule },
                    dialect: dialect?,
                    tolerance,
                    max_iterations,
                    max_correction,
                };
                self.core(cfg.validate(), "repdyn", raw.span(), &texts)?;
                Some(RepDynPlan::Tactical(Box::new(cfg)))
            }
        }
    }

    fn invert(&mut self, raw: &Spanned<RawInvert>, seed: u64) -> Option<InvertPlan> {
        let r = raw.get_ref();
        let field = self.exprs(&r.field, "invert.field");
        let inputs = self.exprs(&r.inputs, "invert.inputs");
        let defaults = InverseOptions::default();
        let options = InverseOptions {
            dimension: r.dimension.unwrap_or(defaults.dimension),
            designated_slot: r.slot.unwrap_or(defaults.designated_slot),
            lift_constants: r.lift_constants,
            seed,
        };
        if options.designated_slot >= options.dimension {
            self.push(
                Some(raw.span()),
                "invert.slot",
                format!("slot {} outside 0..{}", options.designated_slot, options.dimension),
            );
            return None;
        }
        Some(InvertPlan {
            problem: InverseProblem {
                field: field?,
                inputs: inputs?,
                initial: r.initial.clone(),
            },
            options,
        })
    }
}

fn list_or_none(items: &[String]) -> String {
    if items.is_empty() {
        "none".into()
    } else {
        items.iter().map(|s| format!("`{s}`")).collect::<Vec<_>>().join(", ")
    }
}

fn parse_index(s: &str) -> Option<usize> {
    s.trim().parse().ok()
}

fn parse_target(s: &str) -> Option<FitTarget> {
    let (kind, k) = s.split_once(':')?;
    let k = parse_index(k)?;
    match kind.trim() {
        "control" => Some(FitTarget::Control(k)),
        "pure" => Some(FitTarget::Pure(k)),
        _ => None,
    }
}

fn parse_owner(s: &str, players: usize) -> Result<Owner, String> {
    let check = |k: usize| {
        if k == 0 || k > players {
            Err(format!("player {k} is not declared (1..={players})"))
        } else {
            Ok(k)
        }
    };
    let malformed = || format!("unknown owner `{s}` (expected external, player:<k> or coalition:<k>,<k>,…)");
    match s.split_once(':') {
        None if s.trim() == "external" => Ok(Owner::External),
        Some(("player", k)) => Ok(Owner::Player(check(parse_index(k).ok_or_else(malformed)?)?)),
        Some(("coalition", ks)) => {
            let members = ks
                .split(',')
                .map(|k| parse_index(k).ok_or_else(malformed).and_then(check))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Owner::Coalition(members))
        }
        _ => Err(malformed()),
    }
}
