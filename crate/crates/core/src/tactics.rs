//! Comment streams over verbalized games and the tactical operators.
//!
//! A commented game feeds its comment `θ_{n-1}` into window `n` as the
//! parameter λ, and after the window computes `θ_n` from
//! `(θ_{n-1}, ω_n, v_n)`. With a dialectical object present the comment is a
//! (class, η) pair and the object's transition table may move it to a new
//! class. Interaction adds cross terms between two games; synthesis replaces
//! every update by a form over the masked arguments of all games.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{config, Error, Result};
use crate::expr::{Bindings, Expr, Scope, VarKind, VarRef};
use crate::game::{InteractiveSystem, Params, StateTrajectory};
use crate::verbalization::{Verbalization, WindowRecord, WindowRunner};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommentSpace {
    Vector(usize),
    /// `(class label, η)` pairs; `classes` is the registry of admissible labels.
    Labeled { classes: Vec<String>, eta_dim: usize },
}

impl CommentSpace {
    pub fn dim(&self) -> usize {
        match self {
            CommentSpace::Vector(d) => *d,
            CommentSpace::Labeled { eta_dim, .. } => *eta_dim,
        }
    }
}

/// A comment: a real vector, or η together with a class label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommentValue {
    pub class: Option<String>,
    pub values: Vec<f64>,
}

impl CommentValue {
    pub fn vector(values: Vec<f64>) -> Self {
        CommentValue { class: None, values }
    }

    pub fn labeled(class: &str, eta: Vec<f64>) -> Self {
        CommentValue {
            class: Some(class.to_string()),
            values: eta,
        }
    }

    fn check(&self, space: &CommentSpace) -> Result<()> {
        if self.values.len() != space.dim() {
            return Err(config(format!(
                "comment has {} components but the comment space has {}",
                self.values.len(),
                space.dim()
            )));
        }
        match (space, &self.class) {
            (CommentSpace::Vector(_), None) => Ok(()),
            (CommentSpace::Labeled { classes, .. }, Some(c)) if classes.contains(c) => Ok(()),
            (CommentSpace::Labeled { .. }, Some(c)) => Err(config(format!("class `{c}` is not registered"))),
            _ => Err(config("comment kind does not match the comment space")),
        }
    }
}

/// Comment update `θ_n = Θ(θ_{n-1}, ω_n, v_n)`, over `theta`, `omega`, `v`
/// and `t` (end of window `n`).
#[derive(Debug, Clone)]
pub struct CommentRule {
    pub update: Vec<Expr>,
}

impl CommentRule {
    pub fn parse(sources: &[&str]) -> Result<Self> {
        Ok(CommentRule {
            update: sources.iter().map(|s| Expr::parse(s)).collect::<Result<_, _>>()?,
        })
    }

    pub(crate) fn check(&self, dim: usize, omega_dim: usize, v_dim: usize) -> Result<()> {
        if self.update.len() != dim {
            return Err(config(format!(
                "comment rule has {} components but the comment space has {dim}",
                self.update.len()
            )));
        }
        let scope = Scope::new()
            .time()
            .var(VarKind::Theta, dim)
            .var(VarKind::Omega, omega_dim)
            .var(VarKind::V, v_dim);
        for e in &self.update {
            e.check(&scope)?;
        }
        Ok(())
    }

    fn apply(&self, theta: &[f64], omega: &[f64], v: &[f64], t: f64) -> Vec<f64> {
        let env = Bindings::new(t)
            .with(VarKind::Theta, theta)
            .with(VarKind::Omega, omega)
            .with(VarKind::V, v);
        self.update.iter().map(|e| e.eval(&env)).collect()
    }
}

/// One row of a dialectical transition table.
#[derive(Debug, Clone)]
pub struct TransitionEntry {
    pub from: String,
    /// Predicate over `eta`, `omega`, `v` and `diag`; nonzero fires.
    pub trigger: Expr,
    pub to: String,
    /// New η over `eta`, `omega`, `v` and `diag`.
    pub eta_update: Vec<Expr>,
    /// Noncommutative polynomial sources defining the generators added by
    /// the transition, in order. Empty outside representative dynamics.
    pub embedding: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DialecticalObject {
    pub label: String,
    pub table: Vec<TransitionEntry>,
}

impl DialecticalObject {
    pub fn validate(&self, classes: &[String], eta_dim: usize, omega_dim: usize, v_dim: usize, diag_dim: usize) -> Result<()> {
        let scope = Scope::new()
            .var(VarKind::Eta, eta_dim)
            .var(VarKind::Omega, omega_dim)
            .var(VarKind::V, v_dim)
            .var(VarKind::Diag, diag_dim);
        let mut keys = HashSet::new();
        for e in &self.table {
            if !keys.insert((e.from.as_str(), e.trigger.source())) {
                return Err(config(format!(
                    "dialectical object `{}` repeats the key ({}, {})",
                    self.label,
                    e.from,
                    e.trigger.source()
                )));
            }
            for c in [&e.from, &e.to] {
                if !classes.contains(c) {
                    return Err(config(format!(
                        "dialectical object `{}` references unregistered class `{c}`",
                        self.label
                    )));
                }
            }
            if e.eta_update.len() != eta_dim {
                return Err(config(format!(
                    "dialectical object `{}`: eta update has {} components, expected {eta_dim}",
                    self.label,
                    e.eta_update.len()
                )));
            }
            e.trigger.check(&scope)?;
            for u in &e.eta_update {
                u.check(&scope)?;
            }
        }
        Ok(())
    }

    /// First table entry leaving `class` whose trigger fires.
    pub fn fire(&self, class: &str, eta: &[f64], omega: &[f64], v: &[f64], diag: &[f64]) -> Option<(&TransitionEntry, Vec<f64>)> {
        let env = Bindings::new(0.0)
            .with(VarKind::Eta, eta)
            .with(VarKind::Omega, omega)
            .with(VarKind::V, v)
            .with(VarKind::Diag, diag);
        self.table
            .iter()
            .find(|e| e.from == class && e.trigger.eval(&env) != 0.0)
            .map(|e| (e, e.eta_update.iter().map(|u| u.eval(&env)).collect()))
    }
}

/// `δ_n` of a dialect stream; a stream shorter than the run repeats its last
/// object.
pub fn dialect_at(stream: &[DialecticalObject], n: usize) -> Option<&DialecticalObject> {
    stream.get(n.saturating_sub(1).min(stream.len().saturating_sub(1)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommentState {
    pub n: usize,
    pub value: CommentValue,
    /// Label of the dialectical object used to produce this comment.
    pub delta_label: Option<String>,
}

/// One step of the comment recursion.
pub fn next_comment(
    rule: &CommentRule,
    prev: &CommentValue,
    delta: Option<&DialecticalObject>,
    omega: &[f64],
    v: &[f64],
    t: f64,
    diag: &[f64],
) -> CommentValue {
    if let (Some(d), Some(class)) = (delta, &prev.class) {
        if let Some((entry, eta)) = d.fire(class, &prev.values, omega, v, diag) {
            return CommentValue::labeled(&entry.to, eta);
        }
    }
    CommentValue {
        class: prev.class.clone(),
        values: rule.apply(&prev.values, omega, v, t),
    }
}

/// Comment stream `θ_0, …, θ_N` over given window data. `θ_n` reads only
/// the data of windows `1..=n`.
pub fn comment_stream(
    rule: &CommentRule,
    initial: &CommentValue,
    dialect: &[DialecticalObject],
    windows: &[WindowRecord],
) -> Vec<CommentState> {
    let mut out = vec![CommentState {
        n: 0,
        value: initial.clone(),
        delta_label: None,
    }];
    for w in windows {
        let delta = dialect_at(dialect, w.n);
        let value = next_comment(rule, &out.last().unwrap().value, delta, &w.omega, &w.v, w.t_end, &[]);
        out.push(CommentState {
            n: w.n,
            value,
            delta_label: delta.map(|d| d.label.clone()),
        });
    }
    out
}

/// Verbalizable game whose parameter λ is its own comment.
#[derive(Debug, Clone)]
pub struct CommentedGame {
    pub system: InteractiveSystem,
    pub verbalization: Verbalization,
    pub space: CommentSpace,
    pub rule: CommentRule,
    pub initial: CommentValue,
    pub dialect: Vec<DialecticalObject>,
}

impl CommentedGame {
    pub fn validate(&self) -> Result<()> {
        let dim = self.space.dim();
        if self.system.lambda_dim != dim {
            return Err(config(format!(
                "comment space has dimension {dim} but the game reads lambda of dimension {}",
                self.system.lambda_dim
            )));
        }
        let (dw, dv) = (self.verbalization.omega.len(), self.verbalization.v.len());
        if self.system.omega_dim != 0 && self.system.omega_dim != dw {
            return Err(config(format!(
                "game reads omega of dimension {} but {dw} window functionals are declared",
                self.system.omega_dim
            )));
        }
        self.initial.check(&self.space)?;
        self.rule.check(dim, dw, dv)?;
        match &self.space {
            CommentSpace::Vector(_) if !self.dialect.is_empty() => {
                Err(config("dialectical objects need a labeled comment space"))
            }
            CommentSpace::Vector(_) => Ok(()),
            CommentSpace::Labeled { classes, eta_dim } => {
                for d in &self.dialect {
                    d.validate(classes, *eta_dim, dw, dv, 0)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CommentedRun {
    pub trajectory: StateTrajectory,
    pub windows: Vec<WindowRecord>,
    /// `θ_0, θ_1, …, θ_N`.
    pub comments: Vec<CommentState>,
}

/// Step several commented games window by window on a shared grid. After
/// every window `update` maps the previous comments and the new window
/// records to the next comments.
fn lockstep(
    games: &[&CommentedGame],
    grid: &[f64],
    dt: f64,
    mut update: impl FnMut(&[CommentValue], &[WindowRecord]) -> Vec<(CommentValue, Option<String>)>,
) -> Result<Vec<CommentedRun>> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(config("window grid must hold at least two strictly increasing times"));
    }
    let mut runners = Vec::with_capacity(games.len());
    for g in games {
        g.validate()?;
        runners.push(WindowRunner::new(
            &g.system,
            None,
            &g.verbalization.omega,
            &g.verbalization.v,
            dt,
        )?);
    }
    let mut comments: Vec<Vec<CommentState>> = games
        .iter()
        .map(|g| {
            vec![CommentState {
                n: 0,
                value: g.initial.clone(),
                delta_label: None,
            }]
        })
        .collect();
    let mut windows: Vec<Vec<WindowRecord>> = vec![Vec::new(); games.len()];
    let mut tags: Vec<Vec<f64>> = games.iter().map(|g| vec![0.0; g.system.omega_dim]).collect();
    for (i, w) in grid.windows(2).enumerate() {
        let mut current = Vec::with_capacity(games.len());
        for (j, runner) in runners.iter_mut().enumerate() {
            let lambda = &comments[j].last().unwrap().value.values;
            let params = Params {
                lambda: Some(lambda),
                omega: &tags[j],
            };
            let (omega, v) = runner.window(w[0], w[1], params)?;
            current.push(WindowRecord {
                n: i + 1,
                t_start: w[0],
                t_end: w[1],
                omega,
                v,
                cell_label: None,
            });
        }
        let prev: Vec<CommentValue> = comments.iter().map(|c| c.last().unwrap().value.clone()).collect();
        let next = update(&prev, &current);
        for (j, ((value, delta_label), rec)) in next.into_iter().zip(current).enumerate() {
            if games[j].system.omega_dim > 0 {
                tags[j].clone_from(&rec.omega);
            }
            comments[j].push(CommentState {
                n: i + 1,
                value,
                delta_label,
            });
            windows[j].push(rec);
        }
    }
    let t_end = *grid.last().unwrap();
    let mut out = Vec::with_capacity(games.len());
    for (j, mut runner) in runners.into_iter().enumerate() {
        let lambda = comments[j].last().unwrap().value.values.clone();
        runner.finish(
            t_end,
            Params {
                lambda: Some(&lambda),
                omega: &tags[j],
            },
        )?;
        out.push(CommentedRun {
            trajectory: runner.traj,
            windows: std::mem::take(&mut windows[j]),
            comments: std::mem::take(&mut comments[j]),
        });
    }
    Ok(out)
}

/// Run a commented game: `θ_{n-1}` is λ on window `n`, then `θ_n` follows
/// from Θ (or Θ with `δ_n`).
pub fn run_commented_game(game: &CommentedGame, grid: &[f64], dt: f64) -> Result<CommentedRun> {
    let mut runs = lockstep(&[game], grid, dt, |prev, recs| {
        let w = &recs[0];
        let delta = dialect_at(&game.dialect, w.n);
        let value = next_comment(&game.rule, &prev[0], delta, &w.omega, &w.v, w.t_end, &[]);
        vec![(value, delta.map(|d| d.label.clone()))]
    })?;
    Ok(runs.remove(0))
}

/// Additive correction over `theta` (own), `other`, `omega` and `v`.
#[derive(Debug, Clone)]
pub struct InteractionTerm {
    pub form: Vec<Expr>,
}

impl InteractionTerm {
    pub fn parse(sources: &[&str]) -> Result<Self> {
        Ok(InteractionTerm {
            form: sources.iter().map(|s| Expr::parse(s)).collect::<Result<_, _>>()?,
        })
    }

    pub fn zero(dim: usize) -> Self {
        InteractionTerm {
            form: vec![Expr::constant(0.0); dim],
        }
    }
}

fn vector_games(games: &[&CommentedGame]) -> Result<()> {
    for g in games {
        if !matches!(g.space, CommentSpace::Vector(_)) || !g.dialect.is_empty() {
            return Err(config("tactical operators combine games with vector comments only"));
        }
    }
    Ok(())
}

/// Two commented games whose comments are coupled by additive interaction
/// terms: `θ_{1,n} = Θ_1(θ_{1,n-1}, ω_{1,n}, v_{1,n}) + Θ̃_{12}(θ_{1,n-1}, θ_{2,n-1}, ω_{1,n}, v_{1,n})`
/// and symmetrically for game 2.
pub fn tactical_interaction(
    game1: &CommentedGame,
    game2: &CommentedGame,
    term12: &InteractionTerm,
    term21: &InteractionTerm,
    grid: &[f64],
    dt: f64,
) -> Result<(CommentedRun, CommentedRun)> {
    vector_games(&[game1, game2])?;
    let dims = [game1.space.dim(), game2.space.dim()];
    for (k, term) in [term12, term21].into_iter().enumerate() {
        let (own, other) = (dims[k], dims[1 - k]);
        let g = [game1, game2][k];
        if term.form.len() != own {
            return Err(config(format!(
                "interaction term for game {} has {} components, expected {own}",
                k + 1,
                term.form.len()
            )));
        }
        let scope = Scope::new()
            .time()
            .var(VarKind::Theta, own)
            .var(VarKind::Other, other)
            .var(VarKind::Omega, g.verbalization.omega.len())
            .var(VarKind::V, g.verbalization.v.len());
        for e in &term.form {
            e.check(&scope)?;
        }
    }
    let terms = [term12, term21];
    let mut runs = lockstep(&[game1, game2], grid, dt, |prev, recs| {
        (0..2)
            .map(|k| {
                let g = [game1, game2][k];
                let w = &recs[k];
                let base = g.rule.apply(&prev[k].values, &w.omega, &w.v, w.t_end);
                let env = Bindings::new(w.t_end)
                    .with(VarKind::Theta, &prev[k].values)
                    .with(VarKind::Other, &prev[1 - k].values)
                    .with(VarKind::Omega, &w.omega)
                    .with(VarKind::V, &w.v);
                let values = base
                    .iter()
                    .zip(&terms[k].form)
                    .map(|(b, e)| b + e.eval(&env))
                    .collect();
                (CommentValue::vector(values), None)
            })
            .collect()
    })?;
    let second = runs.pop().unwrap();
    Ok((runs.pop().unwrap(), second))
}

/// Unified comment recursion over several games. Form `j` reads
/// `thetaK`, `omegaK`, `vK` (1-based `K`) for the games listed in
/// `masks[j]`, and `t`.
#[derive(Debug, Clone)]
pub struct SynthesisRule {
    pub forms: Vec<Vec<Expr>>,
    pub masks: Vec<Vec<usize>>,
}

impl SynthesisRule {
    pub fn parse(forms: &[&[&str]], masks: Vec<Vec<usize>>) -> Result<Self> {
        Ok(SynthesisRule {
            forms: forms
                .iter()
                .map(|f| f.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>, _>>())
                .collect::<Result<_, _>>()?,
            masks,
        })
    }

    /// Synthesis rule equivalent to an interaction: form `j` is the
    /// expression tree `Θ_j + Θ̃_{j,k}` rewritten over game-suffixed
    /// variables, with masks `{1, 2}`.
    pub fn from_interaction(
        rule1: &CommentRule,
        rule2: &CommentRule,
        term12: &InteractionTerm,
        term21: &InteractionTerm,
    ) -> SynthesisRule {
        let relabel = |e: &Expr, own: usize, other: usize| {
            e.map_vars(|v| match v.kind {
                VarKind::Theta | VarKind::Omega | VarKind::V if v.game == 0 => VarRef { game: own, ..v },
                VarKind::Other => VarRef {
                    kind: VarKind::Theta,
                    game: other,
                    index: v.index,
                },
                _ => v,
            })
        };
        let form = |rule: &CommentRule, term: &InteractionTerm, own: usize, other: usize| {
            rule.update
                .iter()
                .zip(&term.form)
                .map(|(r, x)| relabel(r, own, other).plus(&relabel(x, own, other)))
                .collect()
        };
        SynthesisRule {
            forms: vec![form(rule1, term12, 1, 2), form(rule2, term21, 2, 1)],
            masks: vec![vec![1, 2], vec![1, 2]],
        }
    }

    /// Checks arity, masks and form references against per-game
    /// `(theta, omega, v)` dimensions.
    pub fn validate(&self, dims: &[[usize; 3]]) -> Result<()> {
        if self.forms.len() != dims.len() || self.masks.len() != dims.len() {
            return Err(config(format!(
                "synthesis rule has {} forms and {} masks for {} games",
                self.forms.len(),
                self.masks.len(),
                dims.len()
            )));
        }
        for (j, (form, mask)) in self.forms.iter().zip(&self.masks).enumerate() {
            if let Some(bad) = mask.iter().find(|&&k| k == 0 || k > dims.len()) {
                return Err(config(format!(
                    "mask of form {} references game {bad} outside 1..={}",
                    j + 1,
                    dims.len()
                )));
            }
            if form.len() != dims[j][0] {
                return Err(config(format!(
                    "form {} has {} components, expected {}",
                    j + 1,
                    form.len(),
                    dims[j][0]
                )));
            }
            let visible: Vec<[usize; 3]> = dims
                .iter()
                .enumerate()
                .map(|(k, d)| if mask.contains(&(k + 1)) { *d } else { [0, 0, 0] })
                .collect();
            let scope = Scope::new().time().games(visible);
            for e in form {
                e.check(&scope)?;
            }
        }
        Ok(())
    }

    fn eval(&self, j: usize, args: &[[&[f64]; 3]], t: f64) -> Vec<f64> {
        let env = Bindings::new(t).with_games(args);
        self.forms[j].iter().map(|e| e.eval(&env)).collect()
    }
}

fn game_dims(g: &CommentedGame) -> [usize; 3] {
    [g.space.dim(), g.verbalization.omega.len(), g.verbalization.v.len()]
}

/// Games stepped on a shared grid with comments produced by the synthesis
/// forms; each game's dynamics is otherwise unchanged.
pub fn tactical_synthesis(games: &[&CommentedGame], rule: &SynthesisRule, grid: &[f64], dt: f64) -> Result<Vec<CommentedRun>> {
    vector_games(games)?;
    let dims: Vec<[usize; 3]> = games.iter().map(|g| game_dims(g)).collect();
    rule.validate(&dims)?;
    lockstep(games, grid, dt, |prev, recs| {
        let args: Vec<[&[f64]; 3]> = prev
            .iter()
            .zip(recs)
            .map(|(p, w)| [&p.values[..], &w.omega[..], &w.v[..]])
            .collect();
        (0..games.len())
            .map(|j| (CommentValue::vector(rule.eval(j, &args, recs[j].t_end)), None))
            .collect()
    })
}

/// One argument tuple for the extension check: per-game `(θ, ω, v)` and `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub t: f64,
    pub games: Vec<[Vec<f64>; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtensionCheck {
    pub holds: bool,
    pub probes_checked: usize,
    /// First probe on which the forms disagree.
    pub witness: Option<Probe>,
}

const EXTENSION_TOLERANCE: f64 = 1e-12;
const RANDOM_PROBES: usize = 32;
const GRID_LIMIT: usize = 8;

/// Deterministic probe set: the `{-1, 0, 1}` grid when the total argument
/// dimension is at most 8 (otherwise the zero and signed unit probes),
/// followed by 32 seeded uniform probes on `[-1, 1]`.
pub fn default_probes(dims: &[[usize; 3]], seed: u64) -> Vec<Probe> {
    let total: usize = dims.iter().flatten().sum();
    let shape = |flat: &[f64]| {
        let mut it = flat.iter().copied();
        Probe {
            t: 0.0,
            games: dims
                .iter()
                .map(|d| d.map(|n| it.by_ref().take(n).collect::<Vec<f64>>()))
                .collect(),
        }
    };
    let mut out = Vec::new();
    if total <= GRID_LIMIT {
        for code in 0..3usize.pow(total as u32) {
            let mut c = code;
            let flat: Vec<f64> = (0..total)
                .map(|_| {
                    let x = (c % 3) as f64 - 1.0;
                    c /= 3;
                    x
                })
                .collect();
            out.push(shape(&flat));
        }
    } else {
        out.push(shape(&vec![0.0; total]));
        for k in 0..total {
            for s in [1.0, -1.0] {
                let mut flat = vec![0.0; total];
                flat[k] = s;
                out.push(shape(&flat));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_PROBES {
        let flat: Vec<f64> = (0..total).map(|_| rng.random_range(-1.0..=1.0)).collect();
        out.push(shape(&flat));
    }
    out
}

/// Whether form 1 of `synth` agrees with `original` (over `theta`, `omega`,
/// `v` of game 1) on every probe, within 1e-12 relative to magnitude 1.
pub fn is_tactical_extension(synth: &SynthesisRule, original: &CommentRule, probes: &[Probe]) -> Result<ExtensionCheck> {
    let form = synth.forms.first().ok_or_else(|| config("synthesis rule has no forms"))?;
    if form.len() != original.update.len() {
        return Ok(ExtensionCheck {
            holds: false,
            probes_checked: 0,
            witness: probes.first().cloned(),
        });
    }
    for (k, p) in probes.iter().enumerate() {
        let args: Vec<[&[f64]; 3]> = p.games.iter().map(|g| [&g[0][..], &g[1][..], &g[2][..]]).collect();
        let own = args.first().ok_or_else(|| Error::Data("probe has no games".into()))?;
        let lhs = synth.eval(0, &args, p.t);
        let rhs = original.apply(own[0], own[1], own[2], p.t);
        let agree = lhs
            .iter()
            .zip(&rhs)
            .all(|(a, b)| (a - b).abs() <= EXTENSION_TOLERANCE * 1f64.max(a.abs()).max(b.abs()));
        if !agree {
            return Ok(ExtensionCheck {
                holds: false,
                probes_checked: k + 1,
                witness: Some(p.clone()),
            });
        }
    }
    Ok(ExtensionCheck {
        holds: true,
        probes_checked: probes.len(),
        witness: None,
    })
}

/// JSON-lines record of one comment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommentRecord {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_label: Option<String>,
}

impl From<&CommentState> for CommentRecord {
    fn from(s: &CommentState) -> Self {
        let labeled = s.value.class.is_some();
        CommentRecord {
            n: s.n,
            theta: (!labeled).then(|| s.value.values.clone()),
            class_label: s.value.class.clone(),
            eta: labeled.then(|| s.value.values.clone()),
            delta_label: s.delta_label.clone(),
        }
    }
}

#[cfg(test)]
mod tests;
