//! Windowed functionals, dialogues and the verbalizability recurrence.
//!
//! A run is cut into windows `[t_{n-1}, t_n]`. On each window the state
//! functional `ω_n` and the discrete control `v_n` are computed from a small
//! library of window functionals (mean, integral, endpoint value, quadratic
//! moment) applied to closed-form integrands. Window boundaries can come from
//! a fixed grid or from the moments ε enters a new cell of a sign-condition
//! complex.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{config, Error, Result};
use crate::expr::{Bindings, Expr, Scope, VarKind};
use crate::game::{step_grid, Clock, Engine, InteractiveSystem, Params, Routing, SlowControl, Snapshot, StateTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    Mean,
    Integral,
    Endpoint,
    QuadraticMoment,
}

impl FunctionalKind {
    pub fn parse(name: &str) -> Option<FunctionalKind> {
        Some(match name {
            "mean" => FunctionalKind::Mean,
            "integral" => FunctionalKind::Integral,
            "endpoint" => FunctionalKind::Endpoint,
            "quadratic_moment" => FunctionalKind::QuadraticMoment,
            _ => return None,
        })
    }
}

/// `kind` applied to `integrand` over a window. Integrands read `t`, `phi`,
/// `dphi`, `u0`, `u`, `eps` and `lambda`.
#[derive(Debug, Clone)]
pub struct WindowFunctional {
    pub kind: FunctionalKind,
    pub integrand: Expr,
}

impl WindowFunctional {
    pub fn new(kind: FunctionalKind, integrand: &str) -> Result<Self> {
        Ok(WindowFunctional {
            kind,
            integrand: Expr::parse(integrand)?,
        })
    }

    pub fn mean(integrand: &str) -> Result<Self> {
        Self::new(FunctionalKind::Mean, integrand)
    }

    pub fn integral(integrand: &str) -> Result<Self> {
        Self::new(FunctionalKind::Integral, integrand)
    }

    pub fn endpoint(integrand: &str) -> Result<Self> {
        Self::new(FunctionalKind::Endpoint, integrand)
    }

    /// `reference` is the integrand at the window start; means integrate
    /// the offset from it so that a constant integrand has mean exactly equal
    /// to itself.
    fn rate(&self, value: f64, reference: f64) -> f64 {
        match self.kind {
            FunctionalKind::Mean => value - reference,
            FunctionalKind::Integral => value,
            FunctionalKind::QuadraticMoment => value * value,
            FunctionalKind::Endpoint => 0.0,
        }
    }

    fn finish(&self, accumulated: f64, length: f64, endpoint: f64, reference: f64) -> f64 {
        match self.kind {
            FunctionalKind::Integral => accumulated,
            FunctionalKind::Mean => reference + accumulated / length,
            FunctionalKind::QuadraticMoment => accumulated / length,
            FunctionalKind::Endpoint => endpoint,
        }
    }
}

pub(crate) fn functional_scope(system: &InteractiveSystem, routing: Routing) -> Scope {
    let routing_dim = match routing {
        Routing::Players => system.player_control_dim(),
        Routing::Coalitions => system.coalition_control_dim(),
    };
    Scope::new()
        .time()
        .var(VarKind::Phi, system.dim)
        .var(VarKind::DPhi, system.dim)
        .var(VarKind::U0, system.players.iter().map(|p| p.pure_dim()).sum())
        .var(VarKind::U, routing_dim)
        .var(VarKind::Eps, system.players.iter().map(|p| p.epsilon.dim()).sum())
        .var(VarKind::Lambda, system.lambda_dim)
}

fn integrand_env<'a>(t: f64, phi: &'a [f64], snap: &'a Snapshot) -> Bindings<'a> {
    Bindings::new(t)
        .with(VarKind::Phi, phi)
        .with(VarKind::DPhi, &snap.dphi)
        .with(VarKind::U0, &snap.u0)
        .with(VarKind::U, &snap.u)
        .with(VarKind::Eps, &snap.eps)
        .with(VarKind::Lambda, &snap.lambda)
}

/// One verbalization window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord {
    /// 1-based window number.
    pub n: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub omega: Vec<f64>,
    pub v: Vec<f64>,
    pub cell_label: Option<String>,
}

/// Integrates a system window by window, accumulating `ω` and `v`
/// functionals alongside the state.
pub(crate) struct WindowRunner<'a> {
    pub engine: Engine<'a>,
    omega: &'a [WindowFunctional],
    v: &'a [WindowFunctional],
    dt: f64,
    pub phi: Vec<f64>,
    pub step: usize,
    pub traj: StateTrajectory,
}

impl<'a> WindowRunner<'a> {
    pub fn new(
        system: &'a InteractiveSystem,
        slow: Option<&'a SlowControl>,
        omega: &'a [WindowFunctional],
        v: &'a [WindowFunctional],
        dt: f64,
    ) -> Result<Self> {
        let routing = if system.coalitions.is_empty() {
            Routing::Players
        } else {
            Routing::Coalitions
        };
        let engine = Engine::new(system, routing, slow)?;
        let scope = functional_scope(system, routing);
        for f in omega.iter().chain(v) {
            f.integrand.check(&scope)?;
        }
        if !(dt > 0.0) {
            return Err(config(format!("step must be positive, got {dt}")));
        }
        Ok(WindowRunner {
            traj: engine.new_trajectory(),
            engine,
            omega,
            v,
            dt,
            phi: system.initial.clone(),
            step: 0,
        })
    }

    /// Advance over `[a, b]`; returns `(ω_n, v_n)`.
    pub fn window(&mut self, a: f64, b: f64, params: Params) -> Result<(Vec<f64>, Vec<f64>)> {
        let times = step_grid(a, b, self.dt)?;
        let all: Vec<&WindowFunctional> = self.omega.iter().chain(self.v).collect();
        let mut acc = vec![0.0; all.len()];
        let mut snap = Snapshot::default();
        self.engine.evaluate(Clock::sample(a, self.step), &self.phi, params, &mut snap)?;
        let env = integrand_env(a, &self.phi, &snap);
        let reference: Vec<f64> = all.iter().map(|f| f.integrand.eval(&env)).collect();
        let mut rate_fn = |clock: Clock, state: &[f64], snap: &Snapshot, out: &mut Vec<f64>| {
            let env = integrand_env(clock.t, state, snap);
            out.clear();
            out.extend(all.iter().zip(&reference).map(|(f, &r)| f.rate(f.integrand.eval(&env), r)));
        };
        self.engine
            .advance(&mut self.phi, &mut acc, &times, self.step, params, &mut self.traj, &mut rate_fn)?;
        self.step += times.len() - 1;
        self.engine.evaluate(Clock::sample(b, self.step), &self.phi, params, &mut snap)?;
        let env = integrand_env(b, &self.phi, &snap);
        let values: Vec<f64> = all
            .iter()
            .zip(&acc)
            .zip(&reference)
            .map(|((f, &s), &r)| f.finish(s, b - a, f.integrand.eval(&env), r))
            .collect();
        let (omega, v) = values.split_at(self.omega.len());
        Ok((omega.to_vec(), v.to_vec()))
    }

    pub fn finish(&mut self, t: f64, params: Params) -> Result<()> {
        self.engine.finish(&self.phi, t, self.step, params, &mut self.traj)?;
        Ok(())
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(config("a window grid needs at least two points"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(config("window grid must be strictly increasing"));
    }
    Ok(())
}

/// Declared `ω`/`v` functionals and an optional cell complex for labels.
#[derive(Debug, Clone, Default)]
pub struct Verbalization {
    pub omega: Vec<WindowFunctional>,
    pub v: Vec<WindowFunctional>,
    pub complex: Option<CellComplex>,
}

/// Run `system` on the window grid and compute one record per window.
pub fn verbalize(
    system: &InteractiveSystem,
    slow: Option<&SlowControl>,
    spec: &Verbalization,
    grid: &[f64],
    dt: f64,
) -> Result<(StateTrajectory, Vec<WindowRecord>)> {
    check_grid(grid)?;
    let mut runner = WindowRunner::new(system, slow, &spec.omega, &spec.v, dt)?;
    let omega_tag = vec![0.0; system.omega_dim];
    let params = Params {
        lambda: None,
        omega: &omega_tag,
    };
    let mut records = Vec::with_capacity(grid.len() - 1);
    for (i, w) in grid.windows(2).enumerate() {
        let first = runner.traj.len();
        let (omega, v) = runner.window(w[0], w[1], params)?;
        let cell_label = match &spec.complex {
            Some(c) => {
                // Interior sample, so boundary roundoff does not pick the neighbour cell.
                let k = first + (runner.traj.len() - first) / 2;
                let idx = c
                    .locate(&runner.traj.eps[k])
                    .ok_or(Error::Domain { time: runner.traj.times[k] })?;
                Some(c.cells[idx].label.clone())
            }
            None => None,
        };
        records.push(WindowRecord {
            n: i + 1,
            t_start: w[0],
            t_end: w[1],
            omega,
            v,
            cell_label,
        });
    }
    runner.finish(*grid.last().unwrap(), params)?;
    Ok((runner.traj, records))
}

/// One cell: a conjunction of sign conditions over `eps`.
#[derive(Debug, Clone)]
pub struct Cell {
    pub label: String,
    pub predicate: Expr,
}

/// Partition of an admissible ε box into labeled sign-condition cells.
#[derive(Debug, Clone)]
pub struct CellComplex {
    pub dim: usize,
    /// Admissible box, one `(low, high)` pair per ε component.
    pub bounds: Vec<(f64, f64)>,
    pub cells: Vec<Cell>,
}

impl CellComplex {
    pub fn new(bounds: Vec<(f64, f64)>, cells: &[(&str, &str)]) -> Result<Self> {
        let complex = CellComplex {
            dim: bounds.len(),
            bounds,
            cells: cells
                .iter()
                .map(|(label, pred)| {
                    Ok(Cell {
                        label: label.to_string(),
                        predicate: Expr::parse(pred)?,
                    })
                })
                .collect::<Result<_>>()?,
        };
        complex.validate()?;
        Ok(complex)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(config("cell complex has no cells"));
        }
        if self.bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(config("cell complex box has an empty side"));
        }
        let scope = Scope::new().var(VarKind::Eps, self.dim);
        let mut labels: Vec<&str> = Vec::new();
        for c in &self.cells {
            c.predicate.check(&scope)?;
            if labels.contains(&c.label.as_str()) {
                return Err(config(format!("duplicate cell label `{}`", c.label)));
            }
            labels.push(&c.label);
        }
        Ok(())
    }

    /// Index of the unique cell containing `eps`; `None` when the point is
    /// outside the box or not covered by exactly one cell.
    pub fn locate(&self, eps: &[f64]) -> Option<usize> {
        if eps.len() != self.dim
            || eps.iter().zip(&self.bounds).any(|(x, (lo, hi))| !(x >= lo && x <= hi))
        {
            return None;
        }
        let env = Bindings::new(0.0).with(VarKind::Eps, eps);
        let mut found = None;
        for (i, c) in self.cells.iter().enumerate() {
            if c.predicate.eval(&env) != 0.0 {
                if found.is_some() {
                    return None;
                }
                found = Some(i);
            }
        }
        found
    }
}

const BISECTION_STEPS: usize = 60;

/// Times at which a sampled ε trace enters a new cell.
///
/// Each label change between consecutive samples is refined by bisection on
/// the linear interpolant; the reported time is the first interpolated point
/// outside the old cell.
pub fn detect_partition(times: &[f64], eps: &[Vec<f64>], complex: &CellComplex) -> Result<Vec<f64>> {
    if times.len() != eps.len() {
        return Err(Error::Data("times and epsilon samples differ in length".into()));
    }
    let labels = times
        .iter()
        .zip(eps)
        .map(|(&t, e)| complex.locate(e).ok_or(Error::Domain { time: t }))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    let mut probe = vec![0.0; complex.dim];
    for i in 0..labels.len().saturating_sub(1) {
        if labels[i] == labels[i + 1] {
            continue;
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            for (k, p) in probe.iter_mut().enumerate() {
                *p = eps[i][k] + mid * (eps[i + 1][k] - eps[i][k]);
            }
            if complex.locate(&probe) == Some(labels[i]) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(times[i] + hi * (times[i + 1] - times[i]));
    }
    Ok(out)
}

/// Window grid `[t0, transitions…, t1]`, dropping transitions closer than
/// `min_gap` to the previous boundary or to `t1`.
pub fn partition_grid(t0: f64, t1: f64, transitions: &[f64], min_gap: f64) -> Vec<f64> {
    let mut grid = vec![t0];
    for &t in transitions {
        if t - grid.last().unwrap() >= min_gap && t1 - t >= min_gap {
            grid.push(t);
        }
    }
    grid.push(t1);
    grid
}

/// The map `Ω` in `ω_n = Ω(ω_{n-1}, v_n)`.
#[derive(Debug, Clone)]
pub enum RecurrenceMap {
    /// Closed form over `omega` (previous ω), `v` and `t` (window start).
    Declared(Vec<Expr>),
    /// `ω_n = A ω_{n-1} + B v_n + c`.
    FittedAffine {
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DVector<f64>,
    },
}

impl RecurrenceMap {
    pub fn declared(sources: &[&str]) -> Result<Self> {
        Ok(RecurrenceMap::Declared(
            sources.iter().map(|s| Expr::parse(s)).collect::<Result<_, _>>()?,
        ))
    }

    pub fn apply(&self, prev_omega: &[f64], v: &[f64], t: f64) -> Vec<f64> {
        match self {
            RecurrenceMap::Declared(exprs) => {
                let env = Bindings::new(t).with(VarKind::Omega, prev_omega).with(VarKind::V, v);
                exprs.iter().map(|e| e.eval(&env)).collect()
            }
            RecurrenceMap::FittedAffine { a, b, c } => {
                let w = DVector::from_column_slice(prev_omega);
                let vv = DVector::from_column_slice(v);
                (a * w + b * vv + c).iter().copied().collect()
            }
        }
    }

    fn check(&self, omega_dim: usize, v_dim: usize) -> Result<()> {
        match self {
            RecurrenceMap::Declared(exprs) => {
                if exprs.len() != omega_dim {
                    return Err(config(format!(
                        "recurrence has {} components but omega has {omega_dim}",
                        exprs.len()
                    )));
                }
                let scope = Scope::new().time().var(VarKind::Omega, omega_dim).var(VarKind::V, v_dim);
                for e in exprs {
                    e.check(&scope)?;
                }
            }
            RecurrenceMap::FittedAffine { a, b, c } => {
                if a.shape() != (omega_dim, omega_dim) || b.shape() != (omega_dim, v_dim) || c.len() != omega_dim {
                    return Err(config("fitted recurrence does not match the window dimensions"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceResidual {
    pub n: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceReport {
    /// One entry per window after the first.
    pub residuals: Vec<RecurrenceResidual>,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn window_dims(windows: &[WindowRecord]) -> Result<(usize, usize)> {
    let first = windows.first().ok_or_else(|| Error::Data("no windows".into()))?;
    let dims = (first.omega.len(), first.v.len());
    if windows.iter().any(|w| (w.omega.len(), w.v.len()) != dims) {
        return Err(Error::Data("window records differ in dimension".into()));
    }
    Ok(dims)
}

/// Residual `‖ω_n − Ω(ω_{n-1}, v_n)‖` for every consecutive pair of windows.
pub fn verify_recurrence(windows: &[WindowRecord], map: &RecurrenceMap, tol: f64) -> Result<RecurrenceReport> {
    if windows.len() < 2 {
        return Err(Error::Data("verifying a recurrence needs at least two windows".into()));
    }
    let (dw, dv) = window_dims(windows)?;
    map.check(dw, dv)?;
    let residuals: Vec<RecurrenceResidual> = windows
        .windows(2)
        .map(|pair| {
            let predicted = map.apply(&pair[0].omega, &pair[1].v, pair[1].t_start);
            let residual = predicted
                .iter()
                .zip(&pair[1].omega)
                .map(|(p, w)| (p - w) * (p - w))
                .sum::<f64>()
                .sqrt();
            RecurrenceResidual { n: pair[1].n, residual }
        })
        .collect();
    let max_residual = residuals.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(RecurrenceReport {
        passed: residuals.iter().all(|r| r.residual <= tol),
        residuals,
        max_residual,
        tolerance: tol,
    })
}

#[derive(Debug, Clone)]
pub struct RecurrenceFit {
    pub map: RecurrenceMap,
    /// Frobenius norm of the training residual matrix.
    pub residual_norm: f64,
    pub rank: usize,
    pub rank_deficient: bool,
}

/// Least-squares affine recurrence `ω_n ≈ A ω_{n-1} + B v_n + c`.
///
/// Rank-deficient designs are flagged and solved with the minimum-norm
/// convention.
pub fn fit_recurrence(windows: &[WindowRecord]) -> Result<RecurrenceFit> {
    let (dw, dv) = window_dims(windows)?;
    let cols = dw + dv + 1;
    let rows = windows.len().saturating_sub(1);
    if rows < cols {
        return Err(Error::Data(format!(
            "fitting an affine recurrence needs at least {} windows, got {}",
            cols + 1,
            windows.len()
        )));
    }
    let mut x = DMatrix::zeros(rows, cols);
    let mut y = DMatrix::zeros(rows, dw);
    for (r, pair) in windows.windows(2).enumerate() {
        for (j, &w) in pair[0].omega.iter().enumerate() {
            x[(r, j)] = w;
        }
        for (j, &v) in pair[1].v.iter().enumerate() {
            x[(r, dw + j)] = v;
        }
        x[(r, cols - 1)] = 1.0;
        for (j, &w) in pair[1].omega.iter().enumerate() {
            y[(r, j)] = w;
        }
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * 1e-10 * rows.max(cols) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let theta = svd
        .solve(&y, cutoff)
        .map_err(|e| Error::Data(format!("least-squares solve failed: {e}")))?;
    let residual_norm = (&x * &theta - &y).norm();
    // theta is cols × dw; the map stores its transpose blocks.
    let t = theta.transpose();
    Ok(RecurrenceFit {
        map: RecurrenceMap::FittedAffine {
            a: t.columns(0, dw).into_owned(),
            b: t.columns(dw, dv).into_owned(),
            c: t.column(cols - 1).into_owned(),
        },
        residual_norm,
        rank,
        rank_deficient: rank < cols,
    })
}

/// Continuous intention field `dξ/dt = Ξ(ξ, u)` of a dialogue.
#[derive(Debug, Clone)]
pub struct IntentionField {
    pub initial: Vec<f64>,
    /// Over `xi`, `u` (continuous interactive controls) and `t`.
    pub dynamics: Vec<Expr>,
}

/// A discrete-time dialogue whose states and controls are window
/// functionals of a continuous intention field.
#[derive(Debug, Clone)]
pub struct Dialogue {
    pub field: IntentionField,
    /// Players with couplings and ε laws written over `xi`.
    pub players: Vec<crate::game::Player>,
    /// `φ_n` as functionals of `(ε, ξ)`.
    pub state_functionals: Vec<WindowFunctional>,
    /// `v_n` as functionals of `(u°, ξ)`.
    pub control_functionals: Vec<WindowFunctional>,
    /// Step map over `phi` (φ_{n-1}), `v` (v_n) and `xi` (ξ at window end).
    pub step_map: Vec<Expr>,
    /// Discrete state before the first window.
    pub initial_state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DialogueMismatch {
    pub n: usize,
    pub mismatch: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone)]
pub struct DialogueRun {
    /// `φ_0, φ_1, …, φ_N`.
    pub states: Vec<Vec<f64>>,
    /// `v_1, …, v_N`.
    pub controls: Vec<Vec<f64>>,
    /// Intention-field trace; its `phi` channel holds ξ.
    pub field: StateTrajectory,
    pub diagnostics: Vec<DialogueMismatch>,
    /// False when the declared step map disagrees with the functionals.
    pub consistent: bool,
}

fn xi_as_phi(e: &Expr) -> Expr {
    e.map_vars(|mut v| {
        if v.kind == VarKind::Xi {
            v.kind = VarKind::Phi;
        }
        v
    })
}

/// Integrate the intention field across `grid`, compute `φ_n` and `v_n`
/// from the declared functionals and check them against the step map.
/// Disagreement is reported in the diagnostics, not raised.
pub fn simulate_dialogue(dialogue: &Dialogue, grid: &[f64], dt: f64, tol: f64) -> Result<DialogueRun> {
    check_grid(grid)?;
    let q = dialogue.field.initial.len();
    if dialogue.field.dynamics.len() != q {
        return Err(config("intention field dynamics and initial value differ in dimension"));
    }
    for e in &dialogue.field.dynamics {
        if e.references(VarKind::Phi) {
            return Err(config("intention field dynamics must be written over xi, not phi"));
        }
    }
    let dynamics: Vec<&str> = Vec::new();
    let mut system = InteractiveSystem::new(dialogue.field.initial.clone(), &dynamics)?;
    system.dynamics = dialogue.field.dynamics.iter().map(xi_as_phi).collect();
    for p in &dialogue.players {
        let mut p = p.clone();
        p.coupling.form = p.coupling.form.iter().map(xi_as_phi).collect();
        if let crate::game::EpsilonSource::Law(exprs) = &mut p.epsilon.source {
            *exprs = exprs.iter().map(xi_as_phi).collect();
        }
        system = system.with_player(p);
    }
    let rename = |fs: &[WindowFunctional]| -> Vec<WindowFunctional> {
        fs.iter()
            .map(|f| WindowFunctional {
                kind: f.kind,
                integrand: xi_as_phi(&f.integrand),
            })
            .collect()
    };
    let states_f = rename(&dialogue.state_functionals);
    let controls_f = rename(&dialogue.control_functionals);
    let d = states_f.len();
    if dialogue.initial_state.len() != d || dialogue.step_map.len() != d {
        return Err(config("dialogue state functionals, initial state and step map differ in dimension"));
    }
    let step_scope = Scope::new()
        .var(VarKind::Phi, d)
        .var(VarKind::V, controls_f.len())
        .var(VarKind::Xi, q);
    for e in &dialogue.step_map {
        e.check(&step_scope)?;
    }

    let mut runner = WindowRunner::new(&system, None, &states_f, &controls_f, dt)?;
    let params = Params::default();
    let mut states = vec![dialogue.initial_state.clone()];
    let mut controls = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, w) in grid.windows(2).enumerate() {
        let (phi_n, v_n) = runner.window(w[0], w[1], params)?;
        let env = Bindings::new(w[1])
            .with(VarKind::Phi, states.last().unwrap())
            .with(VarKind::V, &v_n)
            .with(VarKind::Xi, &runner.phi);
        let mismatch = dialogue
            .step_map
            .iter()
            .zip(&phi_n)
            .map(|(e, x)| (e.eval(&env) - x).abs())
            .fold(0.0, f64::max);
        diagnostics.push(DialogueMismatch {
            n: i + 1,
            mismatch,
            consistent: mismatch <= tol,
        });
        states.push(phi_n);
        controls.push(v_n);
    }
    runner.finish(*grid.last().unwrap(), params)?;
    Ok(DialogueRun {
        consistent: diagnostics.iter().all(|d| d.consistent),
        states,
        controls,
        field: runner.traj,
        diagnostics,
    })
}
