use crate::error::{config, Error, Result};
use crate::expr::{Bindings, VarKind};

use super::{Direction, EpsilonSource, InteractiveSystem, SlowControl, StageTrace, StateTrajectory};

/// Position of one vector-field evaluation inside the fixed-step scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Clock {
    pub t: f64,
    pub step: usize,
    /// 0 at `t_k`, 1 and 2 at the midpoint, 3 at `t_{k+1}`.
    pub stage: u8,
}

impl Clock {
    pub fn sample(t: f64, step: usize) -> Clock {
        Clock { t, step, stage: 0 }
    }

    pub fn slot(&self) -> usize {
        self.step * 4 + self.stage as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Routing {
    Players,
    Coalitions,
}

/// Sample times `t0, t0 + dt, …, t1`. When `dt` does not divide the interval
/// the last step is shortened.
pub(crate) fn step_grid(t0: f64, t1: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t0.is_finite() && t1.is_finite() && dt.is_finite()) {
        return Err(config("time interval and step must be finite"));
    }
    if t0 >= t1 {
        return Err(config(format!("empty time interval [{t0}, {t1}]")));
    }
    if dt <= 0.0 {
        return Err(config(format!("step must be positive, got {dt}")));
    }
    let n = ((t1 - t0) / dt - 1e-9).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..n).map(|k| t0 + k as f64 * dt).collect();
    times.push(t1);
    Ok(times)
}

/// Quantities produced by one evaluation of the coupling chain
/// `u° → ε → u → Φ`.
#[derive(Debug, Clone, Default)]
pub(crate) struct Snapshot {
    pub lambda: Vec<f64>,
    pub u0: Vec<f64>,
    pub eps: Vec<f64>,
    /// Control slots consumed by the vector field.
    pub u: Vec<f64>,
    pub dphi: Vec<f64>,
    player_u: Vec<f64>,
    scratch: Vec<f64>,
    member_u0: Vec<f64>,
    member_eps: Vec<f64>,
}

/// Per-run parameters that override the slow control.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Params<'a> {
    pub lambda: Option<&'a [f64]>,
    pub omega: &'a [f64],
}

pub(crate) struct Engine<'a> {
    system: &'a InteractiveSystem,
    routing: Routing,
    slow: Option<&'a SlowControl>,
    u0_offsets: Vec<usize>,
    eps_offsets: Vec<usize>,
    record_dphi: bool,
}

impl<'a> Engine<'a> {
    pub fn new(system: &'a InteractiveSystem, routing: Routing, slow: Option<&'a SlowControl>) -> Result<Self> {
        system.validate(routing)?;
        for (i, p) in system.players.iter().enumerate() {
            if matches!(p.epsilon.source, EpsilonSource::Law(_)) && !p.epsilon.ground_truth {
                return Err(config(format!(
                    "player {}: only ground-truth epsilon processes can be simulated",
                    i + 1
                )));
            }
        }
        if let Some(s) = slow {
            s.validate()?;
            if s.dim() != system.lambda_dim {
                return Err(config(format!(
                    "slow control has dimension {} but the system reads lambda of dimension {}",
                    s.dim(),
                    system.lambda_dim
                )));
            }
        }
        let mut u0_offsets = vec![0];
        let mut eps_offsets = vec![0];
        for p in &system.players {
            u0_offsets.push(u0_offsets.last().unwrap() + p.pure_dim());
            eps_offsets.push(eps_offsets.last().unwrap() + p.epsilon.dim());
        }
        Ok(Engine {
            system,
            routing,
            slow,
            u0_offsets,
            eps_offsets,
            record_dphi: system.derivative_order() > 0,
        })
    }


    /// Evaluate the coupling chain and the vector field at one stage.
    pub fn evaluate(&self, clock: Clock, phi: &[f64], params: Params, snap: &mut Snapshot) -> Result<()> {
        let sys = self.system;
        match (params.lambda, self.slow) {
            (Some(l), _) => {
                snap.lambda.clear();
                snap.lambda.extend_from_slice(l);
            }
            (None, Some(s)) => s.eval(clock, &mut snap.lambda),
            (None, None) => {
                snap.lambda.clear();
                snap.lambda.resize(sys.lambda_dim, 0.0);
            }
        }
        if snap.lambda.len() != sys.lambda_dim {
            return Err(config(format!(
                "parameter has dimension {} but the system reads lambda of dimension {}",
                snap.lambda.len(),
                sys.lambda_dim
            )));
        }
        snap.dphi.clear();
        snap.dphi.resize(sys.dim, 0.0);
        let passes = 1 + usize::from(sys.derivative_order() > 0);
        for pass in 0..passes {
            if pass > 0 {
                // Substitute the vector field for φ̇ and re-evaluate the chain.
                snap.dphi.clone_from(&snap.scratch);
            }
            self.eval_players(clock, phi, params, snap)?;
            if self.routing == Routing::Coalitions {
                self.eval_coalitions(clock, phi, params, snap);
            } else {
                snap.u.clone_from(&snap.player_u);
            }
            let env = Bindings::new(clock.t)
                .with(VarKind::Phi, phi)
                .with(VarKind::U, &snap.u)
                .with(VarKind::Lambda, &snap.lambda)
                .with(VarKind::Omega, params.omega);
            snap.scratch.clear();
            snap.scratch.extend(sys.dynamics.iter().map(|e| e.eval(&env)));
        }
        Ok(())
    }

    /// Vector field value from the last [`Engine::evaluate`] call.
    pub fn field<'s>(&self, snap: &'s Snapshot) -> &'s [f64] {
        &snap.scratch
    }

    fn eval_players(&self, clock: Clock, phi: &[f64], params: Params, snap: &mut Snapshot) -> Result<()> {
        snap.u0.clear();
        snap.eps.clear();
        snap.player_u.clear();
        let mut own = Vec::new();
        let mut eps = Vec::new();
        for p in &self.system.players {
            p.policy.signal.eval(clock, &snap.lambda, &mut own)?;
            let input_kind = match p.coupling.direction {
                Direction::Forward => VarKind::U0,
                Direction::Inverse => VarKind::U,
            };
            match &p.epsilon.source {
                EpsilonSource::Law(exprs) => {
                    let env = Bindings::new(clock.t)
                        .with(VarKind::Phi, phi)
                        .with(VarKind::DPhi, &snap.dphi)
                        .with(input_kind, &own);
                    eps.clear();
                    eps.extend(exprs.iter().map(|e| e.eval(&env)));
                }
                EpsilonSource::Free(signal) => signal.eval(clock, &snap.lambda, &mut eps)?,
            }
            let env = Bindings::new(clock.t)
                .with(VarKind::Phi, phi)
                .with(VarKind::DPhi, &snap.dphi)
                .with(input_kind, &own)
                .with(VarKind::Eps, &eps)
                .with(VarKind::Lambda, &snap.lambda)
                .with(VarKind::Omega, params.omega);
            let out = p.coupling.form.iter().map(|e| e.eval(&env));
            match p.coupling.direction {
                Direction::Forward => {
                    snap.u0.extend_from_slice(&own);
                    snap.player_u.extend(out);
                }
                Direction::Inverse => {
                    snap.u0.extend(out);
                    snap.player_u.extend_from_slice(&own);
                }
            }
            snap.eps.extend_from_slice(&eps);
        }
        Ok(())
    }

    fn eval_coalitions(&self, clock: Clock, phi: &[f64], params: Params, snap: &mut Snapshot) {
        snap.u.clear();
        for c in &self.system.coalitions {
            snap.member_u0.clear();
            snap.member_eps.clear();
            for &m in &c.members {
                let i = m - 1;
                snap.member_u0
                    .extend_from_slice(&snap.u0[self.u0_offsets[i]..self.u0_offsets[i + 1]]);
                snap.member_eps
                    .extend_from_slice(&snap.eps[self.eps_offsets[i]..self.eps_offsets[i + 1]]);
            }
            let env = Bindings::new(clock.t)
                .with(VarKind::Phi, phi)
                .with(VarKind::DPhi, &snap.dphi)
                .with(VarKind::U0, &snap.member_u0)
                .with(VarKind::Eps, &snap.member_eps)
                .with(VarKind::Lambda, &snap.lambda)
                .with(VarKind::Omega, params.omega);
            let v: Vec<f64> = c.coupling.form.iter().map(|e| e.eval(&env)).collect();
            snap.u.extend(v);
        }
    }

    pub fn new_trajectory(&self) -> StateTrajectory {
        StateTrajectory {
            dphi: self.record_dphi.then(Vec::new),
            eps_stages: self
                .system
                .players
                .iter()
                .map(|p| StageTrace::new(p.epsilon.dim()))
                .collect(),
            ..StateTrajectory::default()
        }
    }

    pub fn record(&self, traj: &mut StateTrajectory, clock: Clock, phi: &[f64], snap: &Snapshot) {
        traj.times.push(clock.t);
        traj.phi.push(phi.to_vec());
        traj.u0.push(snap.u0.clone());
        traj.eps.push(snap.eps.clone());
        traj.u.push(snap.u.clone());
        traj.lambda.push(snap.lambda.clone());
        if let Some(d) = &mut traj.dphi {
            d.push(snap.dphi.clone());
        }
    }

    fn record_stage(&self, traj: &mut StateTrajectory, clock: Clock, snap: &Snapshot) {
        for (i, trace) in traj.eps_stages.iter_mut().enumerate() {
            trace.put(clock, &snap.eps[self.eps_offsets[i]..self.eps_offsets[i + 1]]);
        }
    }

    /// Integrate over consecutive grid `times`, starting at global step
    /// `first_step`. Samples are recorded at every grid point except the
    /// last; call [`Engine::finish`] to close the trajectory. `aux` is
    /// integrated alongside the state with rates supplied by `aux_rate`.
    pub fn advance(
        &self,
        phi: &mut Vec<f64>,
        aux: &mut Vec<f64>,
        times: &[f64],
        first_step: usize,
        params: Params,
        traj: &mut StateTrajectory,
        aux_rate: &mut dyn FnMut(Clock, &[f64], &Snapshot, &mut Vec<f64>),
    ) -> Result<()> {
        let d = phi.len();
        let na = aux.len();
        let mut snap = Snapshot::default();
        let mut rate = Vec::with_capacity(na);
        let mut k = [vec![0.0; d + na], vec![0.0; d + na], vec![0.0; d + na], vec![0.0; d + na]];
        let mut probe = vec![0.0; d];
        for (j, w) in times.windows(2).enumerate() {
            let (t, h) = (w[0], w[1] - w[0]);
            let step = first_step + j;
            let offsets = [0.0, 0.5, 0.5, 1.0];
            for stage in 0..4 {
                let clock = Clock {
                    t: if stage == 3 { w[1] } else { t + offsets[stage] * h },
                    step,
                    stage: stage as u8,
                };
                let state: &[f64] = if stage == 0 {
                    phi
                } else {
                    let prev = &k[stage - 1];
                    for i in 0..d {
                        probe[i] = phi[i] + offsets[stage] * h * prev[i];
                    }
                    &probe
                };
                self.evaluate(clock, state, params, &mut snap)?;
                if stage == 0 {
                    self.record(traj, clock, phi, &snap);
                }
                self.record_stage(traj, clock, &snap);
                k[stage][..d].copy_from_slice(self.field(&snap));
                if na > 0 {
                    aux_rate(clock, state, &snap, &mut rate);
                    k[stage][d..].copy_from_slice(&rate);
                }
            }
            for i in 0..d {
                phi[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
            }
            for i in 0..na {
                aux[i] += h / 6.0 * (k[0][d + i] + 2.0 * k[1][d + i] + 2.0 * k[2][d + i] + k[3][d + i]);
            }
            if phi.iter().any(|x| !x.is_finite()) {
                return Err(Error::Divergence { last_valid_time: t });
            }
        }
        Ok(())
    }

    /// Record the closing sample at `t` (global step index `step`).
    pub fn finish(
        &self,
        phi: &[f64],
        t: f64,
        step: usize,
        params: Params,
        traj: &mut StateTrajectory,
    ) -> Result<Snapshot> {
        let clock = Clock::sample(t, step);
        let mut snap = Snapshot::default();
        self.evaluate(clock, phi, params, &mut snap)?;
        self.record(traj, clock, phi, &snap);
        self.record_stage(traj, clock, &snap);
        Ok(snap)
    }

    pub fn run(&self, t0: f64, t1: f64, dt: f64) -> Result<StateTrajectory> {
        let times = step_grid(t0, t1, dt)?;
        self.run_on(&self.system.initial, &times)
    }

    pub fn run_on(&self, initial: &[f64], times: &[f64]) -> Result<StateTrajectory> {
        let mut traj = self.new_trajectory();
        let mut phi = initial.to_vec();
        let params = Params::default();
        let omega = vec![0.0; self.system.omega_dim];
        let params = Params { omega: &omega, ..params };
        self.advance(&mut phi, &mut Vec::new(), times, 0, params, &mut traj, &mut |_, _, _, _| {})?;
        self.finish(&phi, *times.last().unwrap(), times.len() - 1, params, &mut traj)?;
        Ok(traj)
    }
}
