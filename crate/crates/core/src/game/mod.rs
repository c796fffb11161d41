//! Differential interactive systems with ε-represented feedback couplings.
//!
//! A system `dφ/dt = Φ(φ, u_1, …, u_n; λ, ω)` is driven by interactive
//! controls `u_i = u_i(u°_i, φ, φ̇; ε_i)`, where the coupling form is known
//! and `ε_i` is a hidden process. Coalition variants route the pure controls
//! of member sets through shared couplings; the associated ordinary game
//! promotes every `ε_i` to a free control slot.

mod engine;

use std::sync::Arc;

use crate::error::{config, Error, Result};
use crate::expr::{Bindings, Expr, Scope, VarKind};

pub(crate) use engine::{step_grid, Clock, Engine, Params, Routing, Snapshot};

/// Highest derivative order a coupling may reference. Order 1 is resolved by
/// substituting the vector field for `φ̇`.
pub const MAX_DERIVATIVE_ORDER: u8 = 1;

/// State vector sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub time: f64,
    pub values: Vec<f64>,
}

/// Values of a replayed signal at every Runge–Kutta stage of a run.
///
/// Step `k` occupies slots `4k..4k+4` (stages at `t_k`, two at the midpoint,
/// `t_{k+1}`); the final sample sits at slot `4N`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTrace {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl StageTrace {
    pub fn new(dim: usize) -> Self {
        StageTrace {
            dim,
            values: Vec::new(),
        }
    }

    pub fn slots(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }

    pub(crate) fn put(&mut self, clock: Clock, v: &[f64]) {
        let slot = clock.slot();
        let needed = (slot + 1) * self.dim;
        if self.values.len() < needed {
            self.values.resize(needed, f64::NAN);
        }
        self.values[slot * self.dim..needed].copy_from_slice(v);
    }

    fn get(&self, clock: Clock) -> Option<&[f64]> {
        let slot = clock.slot();
        self.values.get(slot * self.dim..(slot + 1) * self.dim)
    }
}

/// A deterministic time signal.
#[derive(Debug, Clone)]
pub enum Signal {
    /// One closed-form expression per component, over `t` and `lambda`.
    Expr(Vec<Expr>),
    /// Exact replay of recorded stage values.
    Recorded(Arc<StageTrace>),
}

impl Signal {
    pub fn parse(sources: &[&str]) -> Result<Signal> {
        Ok(Signal::Expr(
            sources.iter().map(|s| Expr::parse(s)).collect::<Result<_, _>>()?,
        ))
    }

    pub fn zeros(dim: usize) -> Signal {
        Signal::Expr(vec![Expr::constant(0.0); dim])
    }

    pub fn dim(&self) -> usize {
        match self {
            Signal::Expr(e) => e.len(),
            Signal::Recorded(tr) => tr.dim,
        }
    }

    pub(crate) fn eval(&self, clock: Clock, lambda: &[f64], out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        match self {
            Signal::Expr(exprs) => {
                let env = Bindings::new(clock.t).with(VarKind::Lambda, lambda);
                out.extend(exprs.iter().map(|e| e.eval(&env)));
            }
            Signal::Recorded(trace) => {
                let v = trace.get(clock).ok_or_else(|| {
                    Error::Data(format!(
                        "recorded signal has no value for step {} stage {} (t = {})",
                        clock.step, clock.stage, clock.t
                    ))
                })?;
                out.extend_from_slice(v);
            }
        }
        Ok(())
    }

    fn check(&self, scope: &Scope) -> Result<()> {
        if let Signal::Expr(exprs) = self {
            for e in exprs {
                e.check(scope)?;
            }
        }
        Ok(())
    }
}

/// Independent control `u°_i` of one player.
#[derive(Debug, Clone)]
pub struct PureControlPolicy {
    /// 1-based player number.
    pub player: usize,
    pub signal: Signal,
    pub description: String,
}

#[derive(Debug, Clone)]
pub enum EpsilonSource {
    /// Hidden law `ε(u°, φ, φ̇, t)`; for inverse couplings it reads `u`
    /// instead of `u0`.
    Law(Vec<Expr>),
    /// ε promoted to an independent control (associated ordinary game).
    Free(Signal),
}

#[derive(Debug, Clone)]
pub struct EpsilonProcess {
    pub source: EpsilonSource,
    /// Simulation truth, as opposed to an estimate.
    pub ground_truth: bool,
}

impl EpsilonProcess {
    pub fn law(sources: &[&str]) -> Result<Self> {
        Ok(EpsilonProcess {
            source: EpsilonSource::Law(parse_list(sources)?),
            ground_truth: true,
        })
    }

    pub fn dim(&self) -> usize {
        match &self.source {
            EpsilonSource::Law(e) => e.len(),
            EpsilonSource::Free(s) => s.dim(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `u = u(u°, φ, …; ε)`.
    Forward,
    /// `u° = u°(u, φ, …; ε)` in closed form; the policy supplies `u`.
    Inverse,
}

#[derive(Debug, Clone)]
pub struct FeedbackCoupling {
    pub form: Vec<Expr>,
    pub derivative_order: u8,
    pub direction: Direction,
}

impl FeedbackCoupling {
    pub fn forward(sources: &[&str]) -> Result<Self> {
        let form = parse_list(sources)?;
        let derivative_order = derivative_order_of(&form);
        Ok(FeedbackCoupling {
            form,
            derivative_order,
            direction: Direction::Forward,
        })
    }

    pub fn inverse(sources: &[&str]) -> Result<Self> {
        Ok(FeedbackCoupling {
            direction: Direction::Inverse,
            ..FeedbackCoupling::forward(sources)?
        })
    }
}

fn derivative_order_of(form: &[Expr]) -> u8 {
    u8::from(form.iter().any(|e| e.references(VarKind::DPhi)))
}

fn parse_list(sources: &[&str]) -> Result<Vec<Expr>> {
    Ok(sources.iter().map(|s| Expr::parse(s)).collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone)]
pub struct Player {
    pub policy: PureControlPolicy,
    pub coupling: FeedbackCoupling,
    pub epsilon: EpsilonProcess,
}

impl Player {
    /// Forward-coupled player from expression sources.
    pub fn forward(policy: &[&str], coupling: &[&str], epsilon: &[&str]) -> Result<Player> {
        Ok(Player {
            policy: PureControlPolicy {
                player: 0,
                signal: Signal::parse(policy)?,
                description: String::new(),
            },
            coupling: FeedbackCoupling::forward(coupling)?,
            epsilon: EpsilonProcess::law(epsilon)?,
        })
    }

    /// Dimension of the pure control `u°`.
    pub fn pure_dim(&self) -> usize {
        match self.coupling.direction {
            Direction::Forward => self.policy.signal.dim(),
            Direction::Inverse => self.coupling.form.len(),
        }
    }

    /// Dimension of the interactive control `u`.
    pub fn control_dim(&self) -> usize {
        match self.coupling.direction {
            Direction::Forward => self.coupling.form.len(),
            Direction::Inverse => self.policy.signal.dim(),
        }
    }
}

/// Coalition of players sharing one interactive control `v`.
#[derive(Debug, Clone)]
pub struct Coalition {
    /// 1-based player numbers; overlap with other coalitions is allowed.
    pub members: Vec<usize>,
    /// Forward coupling reading `u0`/`eps` as the concatenation of the
    /// members' pure controls / ε values, in member order.
    pub coupling: FeedbackCoupling,
}

#[derive(Debug, Clone)]
pub enum Schedule {
    Continuous(Vec<Expr>),
    /// `(step index, value)` pairs; the value holds from its step onward.
    Discrete(Vec<(usize, Vec<f64>)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Owner {
    External,
    Player(usize),
    Coalition(Vec<usize>),
}

/// Slow control λ(t).
#[derive(Debug, Clone)]
pub struct SlowControl {
    pub schedule: Schedule,
    pub owner: Owner,
}

impl SlowControl {
    pub fn dim(&self) -> usize {
        match &self.schedule {
            Schedule::Continuous(e) => e.len(),
            Schedule::Discrete(v) => v.first().map_or(0, |(_, x)| x.len()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.schedule {
            Schedule::Continuous(exprs) => {
                let scope = Scope::new().time();
                for e in exprs {
                    e.check(&scope)?;
                }
            }
            Schedule::Discrete(points) => {
                if points.is_empty() {
                    return Err(config("discrete slow-control schedule is empty"));
                }
                if points[0].0 != 0 {
                    return Err(config("discrete slow-control schedule must start at step 0"));
                }
                let d = points[0].1.len();
                for w in points.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(config("discrete slow-control step indices must be strictly increasing"));
                    }
                }
                if points.iter().any(|(_, v)| v.len() != d) {
                    return Err(config("discrete slow-control values differ in dimension"));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn eval(&self, clock: Clock, out: &mut Vec<f64>) {
        out.clear();
        match &self.schedule {
            Schedule::Continuous(exprs) => {
                let env = Bindings::new(clock.t);
                out.extend(exprs.iter().map(|e| e.eval(&env)));
            }
            Schedule::Discrete(points) => {
                let i = points.partition_point(|(k, _)| *k <= clock.step);
                out.extend_from_slice(&points[i.saturating_sub(1)].1);
            }
        }
    }
}

/// A differential interactive system with its players.
#[derive(Debug, Clone)]
pub struct InteractiveSystem {
    pub dim: usize,
    pub initial: Vec<f64>,
    /// Vector field over `phi`, `u` (concatenated control slots), `lambda`,
    /// `omega`, `t`.
    pub dynamics: Vec<Expr>,
    pub players: Vec<Player>,
    pub coalitions: Vec<Coalition>,
    /// Conserved-quantity candidates `F_α` of the indeterminate variant.
    pub invariants: Vec<Expr>,
    /// Dimension of the parameter λ read by dynamics and couplings.
    pub lambda_dim: usize,
    /// Dimension of the window tag ω read by dynamics and couplings.
    pub omega_dim: usize,
}

impl InteractiveSystem {
    pub fn new(initial: Vec<f64>, dynamics: &[&str]) -> Result<Self> {
        Ok(InteractiveSystem {
            dim: initial.len(),
            initial,
            dynamics: parse_list(dynamics)?,
            players: Vec::new(),
            coalitions: Vec::new(),
            invariants: Vec::new(),
            lambda_dim: 0,
            omega_dim: 0,
        })
    }

    pub fn with_player(mut self, mut player: Player) -> Self {
        player.policy.player = self.players.len() + 1;
        self.players.push(player);
        self
    }

    pub fn with_coalition(mut self, members: Vec<usize>, coupling: &[&str]) -> Result<Self> {
        self.coalitions.push(Coalition {
            members,
            coupling: FeedbackCoupling::forward(coupling)?,
        });
        Ok(self)
    }

    pub fn with_lambda_dim(mut self, d: usize) -> Self {
        self.lambda_dim = d;
        self
    }

    pub fn with_omega_dim(mut self, d: usize) -> Self {
        self.omega_dim = d;
        self
    }

    pub fn with_invariant(mut self, source: &str) -> Result<Self> {
        self.invariants.push(Expr::parse(source)?);
        Ok(self)
    }

    pub fn with_epsilon_signal(mut self, player: usize, signal: Signal) -> Result<Self> {
        let p = self
            .players
            .get_mut(player.wrapping_sub(1))
            .ok_or_else(|| config(format!("player {player} does not exist")))?;
        p.epsilon = EpsilonProcess {
            source: EpsilonSource::Free(signal),
            ground_truth: true,
        };
        Ok(self)
    }

    /// Replace every player's ε by an exact replay of the recorded stage
    /// values of `run`.
    pub fn replay_epsilon(mut self, run: &StateTrajectory) -> Result<Self> {
        if run.eps_stages.len() != self.players.len() {
            return Err(config("recorded run has a different number of players"));
        }
        for (p, trace) in self.players.iter_mut().zip(&run.eps_stages) {
            p.epsilon = EpsilonProcess {
                source: EpsilonSource::Free(Signal::Recorded(Arc::new(trace.clone()))),
                ground_truth: true,
            };
        }
        Ok(self)
    }

    /// Number of independent control slots: pure controls plus ε values that
    /// have been promoted to controls.
    pub fn control_slots(&self) -> usize {
        self.players.len()
            + self
                .players
                .iter()
                .filter(|p| matches!(p.epsilon.source, EpsilonSource::Free(_)))
                .count()
    }

    pub fn player_control_dim(&self) -> usize {
        self.players.iter().map(Player::control_dim).sum()
    }

    pub fn coalition_control_dim(&self) -> usize {
        self.coalitions.iter().map(|c| c.coupling.form.len()).sum()
    }

    pub fn derivative_order(&self) -> u8 {
        let players = self.players.iter().map(|p| {
            let eps = match &p.epsilon.source {
                EpsilonSource::Law(e) => derivative_order_of(e),
                EpsilonSource::Free(_) => 0,
            };
            p.coupling.derivative_order.max(eps)
        });
        let coalitions = self.coalitions.iter().map(|c| c.coupling.derivative_order);
        players.chain(coalitions).max().unwrap_or(0)
    }

    /// Validate dimensions and expression scopes for the player routing and,
    /// when coalitions are declared, for the coalition routing.
    pub fn check(&self) -> Result<()> {
        self.validate(Routing::Players)?;
        if !self.coalitions.is_empty() {
            self.validate(Routing::Coalitions)?;
        }
        Ok(())
    }

    pub(crate) fn validate(&self, routing: Routing) -> Result<()> {
        if self.initial.len() != self.dim || self.dynamics.len() != self.dim {
            return Err(config(format!(
                "state dimension {} does not match initial state ({}) or vector field ({})",
                self.dim,
                self.initial.len(),
                self.dynamics.len()
            )));
        }
        if self.initial.iter().any(|x| !x.is_finite()) {
            return Err(config("initial state is not finite"));
        }
        if self.derivative_order() > MAX_DERIVATIVE_ORDER {
            return Err(config(format!(
                "derivative order {} exceeds the supported substitution depth {MAX_DERIVATIVE_ORDER}",
                self.derivative_order()
            )));
        }
        if routing == Routing::Coalitions && self.coalitions.is_empty() {
            return Err(config("coalition run requested but no coalitions are declared"));
        }
        let u_dim = match routing {
            Routing::Players => self.player_control_dim(),
            Routing::Coalitions => self.coalition_control_dim(),
        };
        let field_scope = Scope::new()
            .time()
            .var(VarKind::Phi, self.dim)
            .var(VarKind::U, u_dim)
            .var(VarKind::Lambda, self.lambda_dim)
            .var(VarKind::Omega, self.omega_dim);
        for e in &self.dynamics {
            e.check(&field_scope)?;
        }
        let signal_scope = Scope::new().time().var(VarKind::Lambda, self.lambda_dim);
        for (i, p) in self.players.iter().enumerate() {
            if p.policy.player != i + 1 {
                return Err(config(format!("policy of player {} carries index {}", i + 1, p.policy.player)));
            }
            p.policy.signal.check(&signal_scope)?;
            let c = &p.coupling;
            if c.derivative_order < derivative_order_of(&c.form) {
                return Err(config(format!(
                    "coupling of player {} reads dphi but declares derivative order 0",
                    i + 1
                )));
            }
            let eps_dim = p.epsilon.dim();
            let (input_kind, input_dim) = match c.direction {
                Direction::Forward => (VarKind::U0, p.policy.signal.dim()),
                Direction::Inverse => (VarKind::U, p.policy.signal.dim()),
            };
            let coupling_scope = Scope::new()
                .time()
                .var(VarKind::Phi, self.dim)
                .var(VarKind::DPhi, self.dim)
                .var(input_kind, input_dim)
                .var(VarKind::Eps, eps_dim)
                .var(VarKind::Lambda, self.lambda_dim)
                .var(VarKind::Omega, self.omega_dim);
            for e in &c.form {
                e.check(&coupling_scope)?;
            }
            match &p.epsilon.source {
                EpsilonSource::Law(exprs) => {
                    let scope = Scope::new()
                        .time()
                        .var(VarKind::Phi, self.dim)
                        .var(VarKind::DPhi, self.dim)
                        .var(input_kind, input_dim);
                    for e in exprs {
                        e.check(&scope)?;
                    }
                }
                EpsilonSource::Free(s) => s.check(&signal_scope)?,
            }
        }
        if routing == Routing::Coalitions {
            for (ci, c) in self.coalitions.iter().enumerate() {
                if c.members.is_empty() {
                    return Err(config(format!("coalition {} is empty", ci + 1)));
                }
                if let Some(bad) = c.members.iter().find(|&&m| m == 0 || m > self.players.len()) {
                    return Err(config(format!(
                        "coalition {} references player {bad} outside 1..={}",
                        ci + 1,
                        self.players.len()
                    )));
                }
                if c.coupling.direction != Direction::Forward {
                    return Err(config("coalition couplings must be forward"));
                }
                let members = c.members.iter().map(|&m| &self.players[m - 1]);
                let u0_dim: usize = members.clone().map(Player::pure_dim).sum();
                let eps_dim: usize = members.map(|p| p.epsilon.dim()).sum();
                let scope = Scope::new()
                    .time()
                    .var(VarKind::Phi, self.dim)
                    .var(VarKind::DPhi, self.dim)
                    .var(VarKind::U0, u0_dim)
                    .var(VarKind::Eps, eps_dim)
                    .var(VarKind::Lambda, self.lambda_dim)
                    .var(VarKind::Omega, self.omega_dim);
                for e in &c.coupling.form {
                    e.check(&scope)?;
                }
            }
        }
        Ok(())
    }
}

/// Samples of a run. Control channels are concatenated over players (or
/// coalitions for `u` in coalition runs).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub u0: Vec<Vec<f64>>,
    pub eps: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    /// Recorded only when some coupling reads `dphi`.
    pub dphi: Option<Vec<Vec<f64>>>,
    /// Per-player ε at every integrator stage, for exact replay.
    pub eps_stages: Vec<StageTrace>,
}

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<StateVector> {
        Some(StateVector {
            time: *self.times.last()?,
            values: self.phi.last()?.clone(),
        })
    }

    /// Max-norm distance between the state traces of two runs on the same grid.
    pub fn max_state_deviation(&self, other: &StateTrajectory) -> f64 {
        if self.times.len() != other.times.len() {
            return f64::INFINITY;
        }
        self.phi
            .iter()
            .zip(&other.phi)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Index of the sample at `t` (exact grid match within 1e-9 relative).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * (1.0 + t.abs());
        let i = self.times.partition_point(|&s| s < t - tol);
        (i < self.times.len() && (self.times[i] - t).abs() <= tol).then_some(i)
    }
}

/// Integrate the system with each player's own coupling.
pub fn simulate(
    system: &InteractiveSystem,
    slow: Option<&SlowControl>,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<StateTrajectory> {
    Engine::new(system, Routing::Players, slow)?.run(t0, t1, dt)
}

/// Integrate with control slots filled by the coalition couplings.
pub fn coalition_simulate(
    system: &InteractiveSystem,
    slow: Option<&SlowControl>,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<StateTrajectory> {
    Engine::new(system, Routing::Coalitions, slow)?.run(t0, t1, dt)
}

/// Promote every ε to an independent control slot. The returned system
/// holds zero signals in those slots; fill them with
/// [`InteractiveSystem::with_epsilon_signal`] or
/// [`InteractiveSystem::replay_epsilon`].
pub fn associated_ordinary_game(system: &InteractiveSystem) -> Result<InteractiveSystem> {
    if system.derivative_order() > 0 {
        return Err(Error::Unsupported(
            "the associated ordinary game requires derivative-free feedbacks".into(),
        ));
    }
    let mut out = system.clone();
    for p in &mut out.players {
        let dim = p.epsilon.dim();
        p.epsilon = EpsilonProcess {
            source: EpsilonSource::Free(Signal::zeros(dim)),
            ground_truth: true,
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantDrift {
    /// 0-based position of the constraint in the input list.
    pub index: usize,
    pub max_drift: f64,
    pub violated: bool,
}

/// Max drift `max_t |F_α(t) − F_α(t0)|` of each constraint over a run.
/// Constraints read `t`, `phi`, `u0`, `u`, `eps` and, when recorded, `dphi`.
pub fn check_indeterminate_invariants(
    run: &StateTrajectory,
    constraints: &[Expr],
    tolerance: f64,
) -> Result<Vec<InvariantDrift>> {
    if run.is_empty() {
        return Err(Error::Data("empty trajectory".into()));
    }
    let width = |rows: &Vec<Vec<f64>>| rows.first().map_or(0, Vec::len);
    let mut scope = Scope::new()
        .time()
        .var(VarKind::Phi, width(&run.phi))
        .var(VarKind::U0, width(&run.u0))
        .var(VarKind::U, width(&run.u))
        .var(VarKind::Eps, width(&run.eps));
    if let Some(d) = &run.dphi {
        scope = scope.var(VarKind::DPhi, width(d));
    }
    for (i, c) in constraints.iter().enumerate() {
        if c.references(VarKind::DPhi) && run.dphi.is_none() {
            return Err(config(format!("constraint {i} references derivatives that were not recorded")));
        }
        c.check(&scope)?;
    }
    let value = |c: &Expr, k: usize| {
        let mut env = Bindings::new(run.times[k])
            .with(VarKind::Phi, &run.phi[k])
            .with(VarKind::U0, &run.u0[k])
            .with(VarKind::U, &run.u[k])
            .with(VarKind::Eps, &run.eps[k]);
        if let Some(d) = &run.dphi {
            env.set(VarKind::DPhi, &d[k]);
        }
        c.eval(&env)
    };
    Ok(constraints
        .iter()
        .enumerate()
        .map(|(index, c)| {
            let f0 = value(c, 0);
            let max_drift = (0..run.len()).map(|k| (value(c, k) - f0).abs()).fold(0.0, f64::max);
            InvariantDrift {
                index,
                max_drift,
                violated: !(max_drift <= tolerance),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests;
