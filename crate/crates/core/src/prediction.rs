//! A-posteriori analysis of recorded runs.
//!
//! Short-horizon predictions restart a system from a recorded state under
//! assumed policies. Rolling predictions turn an ordinary game into an
//! interactive dataset (realized versus predicted controls). Offline spectral
//! filtering separates a pure control from the recorded one, and the
//! strategic pipeline blends long-term prognoses in the associated ordinary
//! game with re-anchored short-term ones.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{config, Error, Result};
use crate::expr::{Bindings, Expr, Scope, VarKind};
use crate::game::{
    associated_ordinary_game, step_grid, Clock, Direction, Engine, InteractiveSystem, Params, Routing, Signal,
    SlowControl, Snapshot, StateTrajectory,
};

/// Prediction made at `base_time` over `(base_time, base_time + horizon]`.
/// The trajectory starts with the recorded state at `base_time`; its `u`
/// channel holds the predicted controls.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub base_time: f64,
    pub horizon: f64,
    pub trajectory: StateTrajectory,
}

fn time_tol(t: f64) -> f64 {
    1e-9 * (1.0 + t.abs())
}

/// Integrate `assumed` from the recorded state of `truth` at `t0` over
/// `[t0, t0 + horizon]`.
pub fn predict(
    assumed: &InteractiveSystem,
    slow: Option<&SlowControl>,
    truth: &StateTrajectory,
    t0: f64,
    horizon: f64,
    dt: f64,
) -> Result<Prediction> {
    if !(horizon > 0.0) {
        return Err(config(format!("prediction horizon must be positive, got {horizon}")));
    }
    let end = *truth.times.last().ok_or_else(|| Error::Data("empty recorded run".into()))?;
    if t0 + horizon > end + time_tol(end) {
        return Err(config(format!(
            "prediction window [{t0}, {}] leaves the recorded interval ending at {end}",
            t0 + horizon
        )));
    }
    let k = truth
        .index_of(t0)
        .ok_or_else(|| config(format!("base time {t0} is not a recorded sample")))?;
    let engine = Engine::new(assumed, Routing::Players, slow)?;
    let times = step_grid(truth.times[k], truth.times[k] + horizon, dt)?;
    Ok(Prediction {
        base_time: truth.times[k],
        horizon,
        trajectory: engine.run_on(&truth.phi[k], &times)?,
    })
}

/// Predictions based at every recorded sample whose horizon fits the run.
pub fn rolling_predictions(
    assumed: &InteractiveSystem,
    slow: Option<&SlowControl>,
    truth: &StateTrajectory,
    horizon: f64,
    dt: f64,
) -> Result<Vec<Prediction>> {
    let end = *truth.times.last().ok_or_else(|| Error::Data("empty recorded run".into()))?;
    truth
        .times
        .iter()
        .take_while(|&&t| t + horizon <= end + time_tol(end))
        .map(|&t| predict(assumed, slow, truth, t, horizon, dt))
        .collect()
}

/// Replace player policies by assumed signals; `(player, signal)` with
/// 1-based player numbers.
pub fn with_assumed_policies(system: &InteractiveSystem, policies: &[(usize, Signal)]) -> Result<InteractiveSystem> {
    let mut out = system.clone();
    for (player, signal) in policies {
        let p = out
            .players
            .get_mut(player.wrapping_sub(1))
            .ok_or_else(|| config(format!("player {player} does not exist")))?;
        p.policy.signal = signal.clone();
    }
    Ok(out)
}

/// One row of the interactive dataset induced by rolling predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InducedRecord {
    pub t: f64,
    /// Realized controls `u(t)`.
    pub u: Vec<f64>,
    /// Controls predicted at `t − Δt` for time `t`, read as pure controls.
    pub u0_pred: Vec<f64>,
    /// `u − u0_pred`.
    pub deviation: Vec<f64>,
    pub phi: Vec<f64>,
    /// State predicted at `t − Δt` for time `t`.
    pub phi_pred: Vec<f64>,
    /// Finite-difference derivative of the recorded state.
    pub dphi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InducedDataset {
    pub horizon: f64,
    pub records: Vec<InducedRecord>,
}

impl InducedDataset {
    /// Regressor rows `u0_pred ++ phi ++ phi_pred ++ dphi` and the realized
    /// control component `target` as response.
    pub fn design(&self, target: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let mut rows = Vec::with_capacity(self.records.len());
        let mut ys = Vec::with_capacity(self.records.len());
        for r in &self.records {
            let y = *r
                .u
                .get(target)
                .ok_or_else(|| config(format!("control component {target} does not exist")))?;
            rows.push([&r.u0_pred[..], &r.phi, &r.phi_pred, &r.dphi].concat());
            ys.push(y);
        }
        Ok((rows, ys))
    }
}

fn finite_difference(times: &[f64], values: &[Vec<f64>], k: usize) -> Vec<f64> {
    let n = times.len();
    if n < 2 {
        return vec![0.0; values[k].len()];
    }
    let (a, b) = if k == 0 {
        (0, 1)
    } else if k == n - 1 {
        (n - 2, n - 1)
    } else {
        (k - 1, k + 1)
    };
    let h = times[b] - times[a];
    values[a].iter().zip(&values[b]).map(|(x, y)| (y - x) / h).collect()
}

/// Pair every recorded sample `t ≥ t_0 + Δt` with the prediction made at
/// `t − Δt`.
pub fn interactivize_by_prediction(truth: &StateTrajectory, predictions: &[Prediction], horizon: f64) -> Result<InducedDataset> {
    if !(horizon > 0.0) {
        return Err(config(format!("prediction horizon must be positive, got {horizon}")));
    }
    let t_first = *truth.times.first().ok_or_else(|| Error::Data("empty recorded run".into()))?;
    let mut records = Vec::new();
    for (k, &t) in truth.times.iter().enumerate() {
        let base = t - horizon;
        if base < t_first - time_tol(t_first) {
            continue;
        }
        let p = predictions
            .iter()
            .find(|p| (p.base_time - base).abs() <= time_tol(base) && (p.horizon - horizon).abs() <= time_tol(horizon))
            .ok_or_else(|| Error::Data(format!("no prediction based at t = {base} for horizon {horizon}")))?;
        let tr = &p.trajectory;
        let end = *tr.times.last().ok_or_else(|| Error::Data("empty prediction".into()))?;
        if (end - t).abs() > time_tol(t) {
            return Err(Error::Data(format!("prediction based at {base} ends at {end}, not at {t}")));
        }
        let u0_pred = tr.u.last().unwrap().clone();
        if u0_pred.len() != truth.u[k].len() {
            return Err(Error::Data("predicted and realized controls differ in dimension".into()));
        }
        records.push(InducedRecord {
            t,
            deviation: truth.u[k].iter().zip(&u0_pred).map(|(a, b)| a - b).collect(),
            u: truth.u[k].clone(),
            u0_pred,
            phi: truth.phi[k].clone(),
            phi_pred: tr.phi.last().unwrap().clone(),
            dphi: finite_difference(&truth.times, &truth.phi, k),
        });
    }
    Ok(InducedDataset { horizon, records })
}

/// Parametric family `y ≈ model(x; c)` with unknown coefficients `c`.
#[derive(Debug, Clone)]
pub struct FeedbackFamily {
    /// Over `x` (regressor row) and `c` (coefficients).
    pub model: Expr,
    pub initial: Vec<f64>,
}

impl FeedbackFamily {
    pub fn parse(model: &str, initial: Vec<f64>) -> Result<Self> {
        Ok(FeedbackFamily {
            model: Expr::parse(model)?,
            initial,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackEstimate {
    pub family: String,
    pub coefficients: Vec<f64>,
    /// Euclidean norm of the residual vector.
    pub residual_norm: f64,
    pub iterations: usize,
}

const GN_MAX_ITERATIONS: usize = 100;

fn residuals(model: &Expr, rows: &[Vec<f64>], ys: &[f64], c: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        rows.len(),
        rows.iter().zip(ys).map(|(x, y)| {
            let env = Bindings::new(0.0).with(VarKind::X, x).with(VarKind::C, c);
            y - model.eval(&env)
        }),
    )
}

/// Least-squares coefficients by Gauss–Newton with a central-difference
/// Jacobian and step halving.
pub fn fit_feedback(family: &FeedbackFamily, rows: &[Vec<f64>], ys: &[f64]) -> Result<FeedbackEstimate> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.len() != ys.len() || rows.iter().any(|r| r.len() != width) {
        return Err(Error::Data("regressor rows and responses are inconsistent".into()));
    }
    let p = family.initial.len();
    if rows.len() < p {
        return Err(Error::Data(format!("{} samples cannot determine {p} coefficients", rows.len())));
    }
    family
        .model
        .check(&Scope::new().var(VarKind::X, width).var(VarKind::C, p))?;
    let mut c = family.initial.clone();
    let mut r = residuals(&family.model, rows, ys, &c);
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(Error::Data("feedback model is not finite at the initial coefficients".into()));
    }
    let mut iterations = 0;
    while iterations < GN_MAX_ITERATIONS {
        iterations += 1;
        let mut jac = DMatrix::zeros(rows.len(), p);
        for j in 0..p {
            let h = 1e-6 * c[j].abs().max(1.0);
            let mut plus = c.clone();
            plus[j] += h;
            let mut minus = c.clone();
            minus[j] -= h;
            // r = y − f, so −∂r/∂c = ∂f/∂c.
            let d = (residuals(&family.model, rows, ys, &minus) - residuals(&family.model, rows, ys, &plus)) / (2.0 * h);
            jac.set_column(j, &d);
        }
        let step = jac
            .svd(true, true)
            .solve(&r, 1e-12)
            .map_err(|e| Error::Data(format!("Gauss–Newton solve failed: {e}")))?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = c.iter().zip(step.iter()).map(|(a, s)| a + scale * s).collect();
            let rt = residuals(&family.model, rows, ys, &trial);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct <= cost {
                let gain = cost - ct;
                c = trial;
                r = rt;
                cost = ct;
                accepted = gain > 1e-15 * cost.max(1e-300);
                break;
            }
            scale *= 0.5;
        }
        if !accepted || step.norm() * scale <= 1e-13 * (1.0 + DVector::from_column_slice(&c).norm()) {
            break;
        }
    }
    Ok(FeedbackEstimate {
        family: family.model.source().to_string(),
        coefficients: c,
        residual_norm: cost.sqrt(),
        iterations,
    })
}

/// Offline spectral filter applied to a whole recorded trace.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterSpec {
    /// Keep angular frequencies up to `cutoff` (rad per time unit).
    LowPass { cutoff: f64 },
    /// Keep only the transform bins nearest to the listed angular frequencies.
    Band { frequencies: Vec<f64> },
}

impl FilterSpec {
    pub fn validate(&self, dt: f64) -> Result<()> {
        let nyquist = std::f64::consts::PI / dt;
        let check = |w: f64, what: &str| -> Result<()> {
            if !(w.is_finite() && w >= 0.0) {
                return Err(config(format!("{what} must be a finite non-negative frequency, got {w}")));
            }
            if w > nyquist {
                return Err(config(format!("{what} {w} exceeds the Nyquist frequency {nyquist}")));
            }
            Ok(())
        };
        match self {
            FilterSpec::LowPass { cutoff } => {
                if !(*cutoff > 0.0) {
                    return Err(config(format!("cutoff must be positive, got {cutoff}")));
                }
                check(*cutoff, "cutoff")
            }
            FilterSpec::Band { frequencies } => {
                if frequencies.is_empty() {
                    return Err(config("band selection needs at least one frequency"));
                }
                frequencies.iter().try_for_each(|&w| check(w, "band frequency"))
            }
        }
    }

    fn keep(&self, n: usize, dt: f64) -> Vec<bool> {
        let bin_width = 2.0 * std::f64::consts::PI / (n as f64 * dt);
        match self {
            FilterSpec::LowPass { cutoff } => (0..n)
                .map(|k| k.min(n - k) as f64 * bin_width <= *cutoff * (1.0 + 1e-12))
                .collect(),
            FilterSpec::Band { frequencies } => {
                let mut keep = vec![false; n];
                for &w in frequencies {
                    let k = ((w / bin_width).round() as usize).min(n / 2);
                    keep[k] = true;
                    keep[(n - k) % n] = true;
                }
                keep
            }
        }
    }
}

/// Brick-wall filter of a uniformly sampled trace. Power-of-two lengths are
/// filtered as periodic; other lengths through their even reflection, which
/// keeps the filter a projection.
pub fn filter_trace(values: &[f64], dt: f64, spec: &FilterSpec) -> Result<Vec<f64>> {
    spec.validate(dt)?;
    let len = values.len();
    if len < 2 {
        return Err(Error::Data("filtering needs at least two samples".into()));
    }
    let mut buf: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    if !len.is_power_of_two() {
        buf.extend(values.iter().rev().map(|&x| Complex64::new(x, 0.0)));
    }
    let n = buf.len();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (z, keep) in buf.iter_mut().zip(spec.keep(n, dt)) {
        if !keep {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Ok(buf[..len].iter().map(|z| z.re / n as f64).collect())
}

fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::Data("filtering needs at least two samples".into()));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::Data("control trace is not uniformly sampled".into()));
    }
    Ok(dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitTarget {
    /// `u[k] ≈ model`.
    Control(usize),
    /// `u°[k] ≈ model`, with `u°` the filtered control.
    Pure(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unraveling {
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    /// Filtered controls, read as pure controls.
    pub u0: Vec<Vec<f64>>,
    /// `u − u0`.
    pub residual: Vec<Vec<f64>>,
    pub estimate: Option<FeedbackEstimate>,
}

/// Filter the recorded controls of `run` and optionally fit a feedback
/// family on rows `x = u0 ++ u ++ phi`.
pub fn unravel_by_filtering(
    run: &StateTrajectory,
    spec: &FilterSpec,
    family: Option<(&FeedbackFamily, FitTarget)>,
) -> Result<Unraveling> {
    let dt = uniform_step(&run.times)?;
    let width = run.u.first().map_or(0, Vec::len);
    let mut u0 = vec![vec![0.0; width]; run.len()];
    for j in 0..width {
        let column: Vec<f64> = run.u.iter().map(|r| r[j]).collect();
        for (row, v) in u0.iter_mut().zip(filter_trace(&column, dt, spec)?) {
            row[j] = v;
        }
    }
    let residual: Vec<Vec<f64>> = run
        .u
        .iter()
        .zip(&u0)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    let estimate = match family {
        None => None,
        Some((fam, target)) => {
            let rows: Vec<Vec<f64>> = (0..run.len())
                .map(|k| [&u0[k][..], &run.u[k], &run.phi[k]].concat())
                .collect();
            let (source, k) = match target {
                FitTarget::Control(k) => (&run.u, k),
                FitTarget::Pure(k) => (&u0, k),
            };
            if k >= width {
                return Err(config(format!("control component {k} does not exist")));
            }
            let ys: Vec<f64> = source.iter().map(|r| r[k]).collect();
            Some(fit_feedback(fam, &rows, &ys)?)
        }
    };
    Ok(Unraveling {
        times: run.times.clone(),
        u: run.u.clone(),
        u0,
        residual,
        estimate,
    })
}

/// Inputs of the strategic pipeline.
#[derive(Debug, Clone)]
pub struct StrategicConfig {
    /// ε signals assumed by the long-horizon prognosis, one per player.
    pub assumed_eps: Vec<Signal>,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    /// Short-term horizon; zero disables the short-term stage.
    pub short_horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrognosisPoint {
    pub t: f64,
    pub truth: Vec<f64>,
    pub long_term: Vec<f64>,
    pub short_term: Option<Vec<f64>>,
    pub blended: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrognosisReport {
    pub short_horizon: f64,
    pub points: Vec<PrognosisPoint>,
    /// RMS state error at the end of each short-term horizon, with the
    /// interactivity correction.
    pub one_step_error_corrected: Option<f64>,
    /// Same, restarting the long-term assumptions without correction.
    pub one_step_error_uncorrected: Option<f64>,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn rms(errors: &[f64]) -> Option<f64> {
    (!errors.is_empty()).then(|| (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

/// Long-term prognosis in the associated ordinary game under assumed ε,
/// blended with short-term predictions that restart from the recorded state
/// every horizon and carry the observed control deviation forward as an
/// interactive correction.
pub fn strategic_pipeline(
    game: &InteractiveSystem,
    slow: Option<&SlowControl>,
    cfg: &StrategicConfig,
) -> Result<PrognosisReport> {
    let mut ordinary = associated_ordinary_game(game)?;
    if cfg.assumed_eps.len() != ordinary.players.len() {
        return Err(config(format!(
            "{} assumed epsilon signals for {} players",
            cfg.assumed_eps.len(),
            ordinary.players.len()
        )));
    }
    for (i, s) in cfg.assumed_eps.iter().enumerate() {
        if matches!(s, Signal::Recorded(_)) {
            return Err(config("assumed epsilon signals must be closed-form"));
        }
        ordinary = ordinary.with_epsilon_signal(i + 1, s.clone())?;
    }
    if !(cfg.short_horizon >= 0.0) {
        return Err(config("short-term horizon must be non-negative"));
    }
    let times = step_grid(cfg.t0, cfg.t1, cfg.dt)?;
    let truth_engine = Engine::new(game, Routing::Players, slow)?;
    let truth = truth_engine.run_on(&game.initial, &times)?;
    let long_engine = Engine::new(&ordinary, Routing::Players, slow)?;
    let long = long_engine.run_on(&game.initial, &times)?;

    let mut short: Vec<Option<Vec<f64>>> = vec![None; times.len()];
    let (mut corrected, mut uncorrected) = (Vec::new(), Vec::new());
    if cfg.short_horizon > 0.0 {
        let m = (cfg.short_horizon / cfg.dt).round() as usize;
        if m == 0 || (m as f64 * cfg.dt - cfg.short_horizon).abs() > 1e-9 * cfg.short_horizon {
            return Err(config("short-term horizon must be a positive multiple of the step"));
        }
        let omega = vec![0.0; game.omega_dim];
        let params = Params { lambda: None, omega: &omega };
        let mut base = 0;
        while base + 1 < times.len() {
            let end = (base + m).min(times.len() - 1);
            let window = &times[base..=end];
            // Observed deviation of the realized controls from the assumed model.
            let mut snap = Snapshot::default();
            long_engine.evaluate(Clock::sample(times[base], base), &truth.phi[base], params, &mut snap)?;
            let deviation: Vec<f64> = truth.u[base].iter().zip(&snap.u).map(|(a, b)| a - b).collect();
            let shifted = shift_controls(&ordinary, &deviation);
            let plain = long_engine.run_on(&truth.phi[base], window)?;
            let fixed = Engine::new(&shifted, Routing::Players, slow)?.run_on(&truth.phi[base], window)?;
            for (j, k) in (base + 1..=end).enumerate() {
                short[k] = Some(fixed.phi[j + 1].clone());
            }
            corrected.push(distance(fixed.phi.last().unwrap(), &truth.phi[end]));
            uncorrected.push(distance(plain.phi.last().unwrap(), &truth.phi[end]));
            base = end;
        }
    }
    let points = times
        .iter()
        .enumerate()
        .map(|(k, &t)| PrognosisPoint {
            t,
            truth: truth.phi[k].clone(),
            long_term: long.phi[k].clone(),
            blended: short[k].clone().unwrap_or_else(|| long.phi[k].clone()),
            short_term: short[k].clone(),
        })
        .collect();
    Ok(PrognosisReport {
        short_horizon: cfg.short_horizon,
        points,
        one_step_error_corrected: rms(&corrected),
        one_step_error_uncorrected: rms(&uncorrected),
    })
}

/// Add a constant to every forward coupling output, player by player.
fn shift_controls(system: &InteractiveSystem, deviation: &[f64]) -> InteractiveSystem {
    let mut out = system.clone();
    let mut offset = 0;
    for p in &mut out.players {
        let d = p.control_dim();
        if p.coupling.direction == Direction::Forward {
            for (e, &x) in p.coupling.form.iter_mut().zip(&deviation[offset..offset + d]) {
                *e = e.plus(&Expr::constant(x));
            }
        }
        offset += d;
    }
    out
}

#[cfg(test)]
mod tests;
