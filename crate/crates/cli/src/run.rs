//! Command execution: dispatch a validated scenario to the core, write the
//! exports and the run report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tactica::export::{self, float};
use tactica::prediction::{rolling_predictions, with_assumed_policies};
use tactica::tactics::default_probes;
use tactica::verbalization::partition_grid;
use tactica::{
    associated_ordinary_game, check_indeterminate_invariants, coalition_simulate, detect_partition,
    equivalence_partition, fit_recurrence, integrate_repdyn, interactivize_by_prediction, is_tactical_extension,
    run_commented_game, run_tactical_repdyn, simulate, simulate_dialogue, solve_inverse_problem, strategic_pipeline,
    tactical_interaction, tactical_synthesis, unravel_by_filtering, verbalize, verify_recurrence, fit_feedback,
    Bindings, CommentedRun, Error, RecurrenceMap, RepDynTrajectory, SlowControl, StateTrajectory, StrategicConfig,
    InteractiveSystem,
};

use crate::scenario::{Command, GridSpec, PredictPlan, RepDynPlan, Scenario, SystemPlan, TacticsMode};

pub const REPORT_FILE: &str = "report.json";

/// Process exit status of a run.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const RUNTIME: i32 = 2;
    pub const INSOLVABLE: i32 = 3;
}

/// Exit status for a core error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Expr(_) => exit::VALIDATION,
        Error::Insolvable { .. } | Error::Stranded { .. } => exit::INSOLVABLE,
        _ => exit::RUNTIME,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub metric: String,
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Parameters {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub seed: u64,
    pub tolerance: f64,
}

/// Contents of `report.json`. Wall-clock time is deliberately absent so that
/// identical inputs give identical reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema: i64,
    pub name: String,
    pub command: String,
    /// SHA-256 of the scenario bytes, the command and the effective
    /// step, seed and tolerance.
    pub digest: String,
    pub parameters: Parameters,
    /// `ok`, `checks_failed` or `error`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub exit_code: i32,
    pub metrics: BTreeMap<String, f64>,
    pub summary: Value,
    pub checks: Vec<CheckResult>,
    /// SHA-256 of every artifact written besides the report.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug)]
pub enum RunError {
    /// Command not supported by the scenario.
    Usage(String),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Usage(m) => write!(f, "{m}"),
            RunError::Io(e) => write!(f, "cannot write artifacts: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => exit::VALIDATION,
            RunError::Io(_) => exit::RUNTIME,
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

/// Exports and numbers produced by one command.
#[derive(Default)]
struct Output {
    files: Vec<(String, Vec<u8>)>,
    metrics: BTreeMap<String, f64>,
    summary: serde_json::Map<String, Value>,
}

impl Output {
    fn file(&mut self, name: impl Into<String>, text: String) {
        self.files.push((name.into(), text.into_bytes()));
    }

    fn json(&mut self, name: impl Into<String>, value: &Value) {
        self.file(name, export::to_pretty(value));
    }

    fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    fn summary(&mut self, key: &str, value: Value) {
        self.summary.insert(key.to_string(), value);
    }

    fn vector_metrics(&mut self, prefix: &str, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            self.metric(format!("{prefix}_{i}"), *v);
        }
    }

    fn trajectory(&mut self, name: &str, traj: &StateTrajectory, json: bool) {
        self.file(format!("{name}.csv"), export::trajectory_csv(traj));
        if json {
            self.json(format!("{name}.json"), &export::trajectory_json(traj));
        }
    }
}

/// Hex SHA-256 of the run inputs.
pub fn run_digest(scenario: &Scenario, command: Command) -> String {
    let p = &scenario.params;
    let mut h = Sha256::new();
    h.update(&scenario.bytes);
    h.update([0]);
    h.update(command.name().as_bytes());
    h.update([0]);
    h.update(format!("dt={:e};seed={};tolerance={:e}", p.dt, p.seed, p.tolerance).as_bytes());
    hex::encode(h.finalize())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Run `command` and write its artifacts and `report.json` into `out`.
///
/// Core failures still produce a report with `status = "error"`; only an
/// unsupported command or an unwritable directory returns `Err`.
pub fn run(scenario: &Scenario, command: Command, out: &Path) -> Result<RunReport, RunError> {
    let supported = scenario.supported();
    if !supported.contains(&command) {
        let names: Vec<&str> = supported.iter().map(|c| c.name()).collect();
        return Err(RunError::Usage(format!(
            "scenario `{}` does not support `{}`; supported commands: {}",
            scenario.name,
            command.name(),
            if names.is_empty() { "none".to_string() } else { names.join(", ") }
        )));
    }
    std::fs::create_dir_all(out)?;
    let p = &scenario.params;
    let mut report = RunReport {
        schema: crate::scenario::SCHEMA_VERSION,
        name: scenario.name.clone(),
        command: command.name().to_string(),
        digest: run_digest(scenario, command),
        parameters: Parameters {
            t0: p.t0,
            t1: p.t1,
            dt: p.dt,
            seed: p.seed,
            tolerance: p.tolerance,
        },
        status: "ok".into(),
        error: None,
        exit_code: exit::OK,
        metrics: BTreeMap::new(),
        summary: Value::Null,
        checks: Vec::new(),
        artifacts: BTreeMap::new(),
    };
    match dispatch(scenario, command) {
        Ok(output) => {
            for (name, bytes) in &output.files {
                std::fs::write(out.join(name), bytes)?;
                report.artifacts.insert(name.clone(), sha256_hex(bytes));
            }
            report.checks = scenario
                .checks
                .iter()
                .map(|c| {
                    let value = output.metrics.get(&c.metric).copied();
                    let passed = value.is_some_and(|v| {
                        c.max.is_none_or(|m| v <= m) && c.min.is_none_or(|m| v >= m)
                    });
                    CheckResult {
                        metric: c.metric.clone(),
                        value,
                        max: c.max,
                        min: c.min,
                        passed,
                    }
                })
                .collect();
            if report.checks.iter().any(|c| !c.passed) {
                report.status = "checks_failed".into();
                report.exit_code = exit::RUNTIME;
            }
            report.metrics = output.metrics;
            report.summary = Value::Object(output.summary);
        }
        Err(e) => {
            report.status = "error".into();
            report.exit_code = exit_code(&e);
            report.error = Some(e.to_string());
        }
    }
    let text = serde_json::to_string_pretty(&report).expect("reports serialize") + "\n";
    std::fs::write(out.join(REPORT_FILE), text)?;
    Ok(report)
}

fn dispatch(sc: &Scenario, command: Command) -> tactica::Result<Output> {
    match command {
        Command::Simulate => run_simulate(sc),
        Command::Verbalize => run_verbalize(sc),
        Command::Tactics => run_tactics(sc),
        Command::Predict => run_predict(sc),
        Command::Repdyn => run_repdyn(sc),
        Command::Invert => run_invert(sc),
    }
}

fn system_plan(sc: &Scenario) -> &SystemPlan {
    sc.system.as_ref().expect("command support was checked")
}

fn integrate(
    system: &InteractiveSystem,
    slow: Option<&SlowControl>,
    coalitions: bool,
    sc: &Scenario,
) -> tactica::Result<StateTrajectory> {
    let p = &sc.params;
    if coalitions {
        coalition_simulate(system, slow, p.t0, p.t1, p.dt)
    } else {
        simulate(system, slow, p.t0, p.t1, p.dt)
    }
}

fn windows_grid(sc: &Scenario) -> tactica::Result<Vec<f64>> {
    sc.params
        .window_grid()
        .ok_or_else(|| Error::Config("this command needs `run.windows` or `run.window`".into()))
}

fn run_simulate(sc: &Scenario) -> tactica::Result<Output> {
    let plan = system_plan(sc);
    let opts = sc.simulate;
    let slow = plan.slow.as_ref();
    let traj = integrate(&plan.system, slow, opts.coalitions, sc)?;
    let mut out = Output::default();
    out.trajectory("trajectory", &traj, sc.output.json);
    out.metric("steps", traj.len().saturating_sub(1) as f64);
    if let Some(last) = traj.last_state() {
        out.metric("final_time", last.time);
        out.vector_metrics("final_phi", &last.values);
    }
    if !plan.system.invariants.is_empty() {
        let drifts = check_indeterminate_invariants(&traj, &plan.system.invariants, opts.invariant_tolerance)?;
        for d in &drifts {
            out.metric(format!("invariant_drift_{}", d.index), d.max_drift);
        }
        let rows: Vec<Value> = drifts
            .iter()
            .map(|d| json!({"index": d.index, "max_drift": d.max_drift, "violated": d.violated}))
            .collect();
        out.summary("invariants", Value::Array(rows));
    }
    if opts.replay {
        let ordinary = associated_ordinary_game(&plan.system)?.replay_epsilon(&traj)?;
        let replay = integrate(&ordinary, slow, opts.coalitions, sc)?;
        out.metric("replay_deviation", traj.max_state_deviation(&replay));
    }
    Ok(out)
}

fn run_verbalize(sc: &Scenario) -> tactica::Result<Output> {
    let mut out = Output::default();
    let p = &sc.params;
    if let (Some(plan), Some(vp)) = (&sc.system, &sc.verbalization) {
        let slow = plan.slow.as_ref();
        let grid = match (&p.grid, &vp.spec.complex) {
            (GridSpec::Partition, Some(complex)) => {
                let probe = simulate(&plan.system, slow, p.t0, p.t1, p.dt)?;
                let transitions = detect_partition(&probe.times, &probe.eps, complex)?;
                partition_grid(p.t0, p.t1, &transitions, p.dt)
            }
            _ => windows_grid(sc)?,
        };
        let (traj, windows) = verbalize(&plan.system, slow, &vp.spec, &grid, p.dt)?;
        out.trajectory("trajectory", &traj, sc.output.json);
        out.file("windows.csv", export::windows_csv(&windows));
        if sc.output.json {
            out.json("windows.json", &export::windows_json(&windows));
        }
        out.metric("windows", windows.len() as f64);
        if let Some(complex) = &vp.spec.complex {
            let transitions = detect_partition(&traj.times, &traj.eps, complex)?;
            let mut csv = String::from("k,t\n");
            for (k, t) in transitions.iter().enumerate() {
                let _ = writeln!(csv, "{k},{}", float(*t));
            }
            out.file("transitions.csv", csv);
            out.metric("transitions", transitions.len() as f64);
            out.summary("transitions", json!(transitions));
        }
        if let Some(rec) = &vp.recurrence {
            recurrence(&mut out, &windows, rec)?;
        }
    }
    if let Some(d) = &sc.dialogue {
        let grid = windows_grid(sc)?;
        let run = simulate_dialogue(d, &grid, p.dt, p.tolerance)?;
        let (ds, dv) = (d.state_functionals.len(), d.control_functionals.len());
        let mut csv = String::from("n");
        for i in 0..ds {
            let _ = write!(csv, ",phi_{i}");
        }
        for i in 0..dv {
            let _ = write!(csv, ",v_{i}");
        }
        csv.push_str(",mismatch\n");
        for (n, state) in run.states.iter().enumerate() {
            let _ = write!(csv, "{n}");
            for x in state {
                let _ = write!(csv, ",{}", float(*x));
            }
            let controls = n.checked_sub(1).and_then(|k| run.controls.get(k));
            for i in 0..dv {
                let x = controls.map_or(String::new(), |c| float(c[i]));
                let _ = write!(csv, ",{x}");
            }
            let mismatch = n
                .checked_sub(1)
                .and_then(|k| run.diagnostics.get(k))
                .map_or(String::new(), |m| float(m.mismatch));
            let _ = writeln!(csv, ",{mismatch}");
        }
        out.file("dialogue.csv", csv);
        out.metric("dialogue_consistent", f64::from(u8::from(run.consistent)));
        let worst = run.diagnostics.iter().map(|m| m.mismatch).fold(0.0, f64::max);
        out.metric("dialogue_max_mismatch", worst);
    }
    Ok(out)
}

fn recurrence(
    out: &mut Output,
    windows: &[tactica::WindowRecord],
    rec: &crate::scenario::RecurrencePlan,
) -> tactica::Result<()> {
    let report = match &rec.declared {
        Some(map) => verify_recurrence(windows, map, rec.tolerance)?,
        None => {
            if rec.holdout + 1 >= windows.len() {
                return Err(Error::Config(format!(
                    "{} held-out windows leave nothing to fit among {}",
                    rec.holdout,
                    windows.len()
                )));
            }
            let split = windows.len() - rec.holdout;
            let fit = fit_recurrence(&windows[..split])?;
            out.metric("fit_residual_norm", fit.residual_norm);
            out.metric("fit_rank", fit.rank as f64);
            if let RecurrenceMap::FittedAffine { a, b, c } = &fit.map {
                let a_rows: Vec<Vec<f64>> = (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect();
                let b_rows: Vec<Vec<f64>> = (0..b.nrows()).map(|i| (0..b.ncols()).map(|j| b[(i, j)]).collect()).collect();
                out.summary(
                    "recurrence_fit",
                    json!({
                        "a": a_rows,
                        "b": b_rows,
                        "c": c.iter().copied().collect::<Vec<f64>>(),
                        "residual_norm": fit.residual_norm,
                        "rank": fit.rank,
                        "rank_deficient": fit.rank_deficient,
                    }),
                );
                out.vector_metrics("fit_a", &a_rows.concat());
                out.vector_metrics("fit_b", &b_rows.concat());
                out.vector_metrics("fit_c", c.as_slice());
            }
            let verify_from = if rec.holdout > 0 { split - 1 } else { 0 };
            verify_recurrence(&windows[verify_from..], &fit.map, rec.tolerance)?
        }
    };
    out.metric("recurrence_max_residual", report.max_residual);
    out.metric("recurrence_passed", f64::from(u8::from(report.passed)));
    out.summary("recurrence", json!(report));
    Ok(())
}

fn comment_values(run: &CommentedRun) -> Vec<&[f64]> {
    run.comments.iter().map(|c| &c.value.values[..]).collect()
}

fn run_tactics(sc: &Scenario) -> tactica::Result<Output> {
    let plan = sc.tactics.as_ref().expect("command support was checked");
    let grid = windows_grid(sc)?;
    let dt = sc.params.dt;
    let independent = plan
        .games
        .iter()
        .map(|g| run_commented_game(g, &grid, dt))
        .collect::<tactica::Result<Vec<_>>>()?;
    let runs = match plan.mode {
        TacticsMode::Run => independent.clone(),
        TacticsMode::Interaction => {
            let (a, b) = tactical_interaction(
                &plan.games[0],
                &plan.games[1],
                plan.t12.as_ref().expect("interaction terms default to zero"),
                plan.t21.as_ref().expect("interaction terms default to zero"),
                &grid,
                dt,
            )?;
            vec![a, b]
        }
        TacticsMode::Synthesis => {
            let refs: Vec<_> = plan.games.iter().collect();
            tactical_synthesis(&refs, plan.synthesis.as_ref().expect("validated"), &grid, dt)?
        }
    };
    let mut out = Output::default();
    out.metric("windows", (grid.len() - 1) as f64);
    let mut deviation = 0.0f64;
    let mut identical = true;
    for (k, (run, base)) in runs.iter().zip(&independent).enumerate() {
        let g = k + 1;
        out.file(format!("game{g}_windows.csv"), export::windows_csv(&run.windows));
        out.file(format!("game{g}_comments.jsonl"), export::comments_jsonl(&run.comments));
        if let Some(last) = run.comments.last() {
            out.vector_metrics(&format!("game{g}_final_theta"), &last.value.values);
        }
        for (a, b) in comment_values(run).iter().zip(comment_values(base)) {
            identical &= *a == b;
            for (x, y) in a.iter().zip(b) {
                deviation = deviation.max((x - y).abs());
            }
        }
        identical &= run.comments.len() == base.comments.len()
            && run.comments.iter().zip(&base.comments).all(|(a, b)| a.value.class == b.value.class);
        let transitions = run.comments.iter().filter(|c| c.delta_label.is_some()).count();
        if transitions > 0 {
            out.metric(format!("game{g}_class_changes"), transitions as f64);
        }
    }
    out.metric("stream_deviation", deviation);
    out.metric("streams_identical", f64::from(u8::from(identical)));
    if plan.extension {
        let synth = plan.synthesis.as_ref().expect("validated");
        let dims: Vec<[usize; 3]> = plan
            .games
            .iter()
            .map(|g| [g.space.dim(), g.verbalization.omega.len(), g.verbalization.v.len()])
            .collect();
        let probes = default_probes(&dims, sc.params.seed);
        let check = is_tactical_extension(synth, &plan.games[0].rule, &probes)?;
        out.metric("extension_holds", f64::from(u8::from(check.holds)));
        out.summary("extension", json!(check));
    }
    Ok(out)
}

fn max_abs(rows: &[Vec<f64>]) -> f64 {
    rows.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn run_predict(sc: &Scenario) -> tactica::Result<Output> {
    let plan = system_plan(sc);
    let slow = plan.slow.as_ref();
    let p = &sc.params;
    let mut out = Output::default();
    match sc.predict.as_ref().expect("command support was checked") {
        PredictPlan::Rolling {
            horizon,
            assumed,
            family,
        } => {
            let truth = simulate(&plan.system, slow, p.t0, p.t1, p.dt)?;
            let assumed_sys = with_assumed_policies(&plan.system, assumed)?;
            let preds = rolling_predictions(&assumed_sys, slow, &truth, *horizon, p.dt)?;
            let data = interactivize_by_prediction(&truth, &preds, *horizon)?;
            out.trajectory("trajectory", &truth, sc.output.json);
            out.json("induced.json", &json!(data));
            out.metric("predictions", preds.len() as f64);
            out.metric("records", data.records.len() as f64);
            let deviations: Vec<Vec<f64>> = data.records.iter().map(|r| r.deviation.clone()).collect();
            out.metric("max_deviation", max_abs(&deviations));
            if let Some((fam, k)) = family {
                let (rows, ys) = data.design(*k)?;
                let est = fit_feedback(fam, &rows, &ys)?;
                out.vector_metrics("coefficient", &est.coefficients);
                out.metric("fit_residual_norm", est.residual_norm);
                out.summary("estimate", json!(est));
            }
        }
        PredictPlan::Unravel {
            filter,
            family,
            reference,
            margin,
        } => {
            let truth = simulate(&plan.system, slow, p.t0, p.t1, p.dt)?;
            let un = unravel_by_filtering(&truth, filter, family.as_ref().map(|(f, t)| (f, *t)))?;
            out.trajectory("trajectory", &truth, sc.output.json);
            let width = un.u.first().map_or(0, Vec::len);
            let mut csv = String::from("t");
            for prefix in ["u", "u0", "residual"] {
                for i in 0..width {
                    let _ = write!(csv, ",{prefix}_{i}");
                }
            }
            csv.push('\n');
            for k in 0..un.times.len() {
                csv.push_str(&float(un.times[k]));
                for row in [&un.u[k], &un.u0[k], &un.residual[k]] {
                    for x in row {
                        let _ = write!(csv, ",{}", float(*x));
                    }
                }
                csv.push('\n');
            }
            out.file("unravel.csv", csv);
            out.metric("max_residual", max_abs(&un.residual));
            if let Some(est) = &un.estimate {
                out.vector_metrics("coefficient", &est.coefficients);
                out.metric("fit_residual_norm", est.residual_norm);
                out.summary("estimate", json!(est));
            }
            if let Some(reference) = reference {
                if reference.len() != width {
                    return Err(Error::Config(format!(
                        "{} reference components for {width} controls",
                        reference.len()
                    )));
                }
                let n = un.times.len();
                let skip = (margin * n as f64).floor() as usize;
                let mut worst = 0.0f64;
                for k in skip..n.saturating_sub(skip) {
                    let env = Bindings::new(un.times[k]);
                    for (i, e) in reference.iter().enumerate() {
                        worst = worst.max((un.u0[k][i] - e.eval(&env)).abs());
                    }
                }
                out.metric("max_interior_deviation", worst);
            }
        }
        PredictPlan::Pipeline {
            assumed_eps,
            short_horizon,
        } => {
            let cfg = StrategicConfig {
                assumed_eps: assumed_eps.clone(),
                t0: p.t0,
                t1: p.t1,
                dt: p.dt,
                short_horizon: *short_horizon,
            };
            let report = strategic_pipeline(&plan.system, slow, &cfg)?;
            out.json("prognosis.json", &json!(report));
            out.metric("points", report.points.len() as f64);
            if let Some(e) = report.one_step_error_corrected {
                out.metric("one_step_error_corrected", e);
            }
            if let Some(e) = report.one_step_error_uncorrected {
                out.metric("one_step_error_uncorrected", e);
            }
            if let Some(last) = report.points.last() {
                let err = last
                    .blended
                    .iter()
                    .zip(&last.truth)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                out.metric("final_blended_error", err);
            }
        }
    }
    Ok(out)
}

fn repdyn_exports(out: &mut Output, traj: &RepDynTrajectory, stride: usize) {
    out.file("residual.csv", export::residual_csv(traj));
    out.json("tuples.json", &export::repdyn_json(traj, stride));
    out.metric("steps", traj.times.len().saturating_sub(1) as f64);
    out.metric("max_residual", traj.max_residual());
    out.metric("final_residual", traj.residuals.last().copied().unwrap_or(0.0));
}

fn run_repdyn(sc: &Scenario) -> tactica::Result<Output> {
    let p = &sc.params;
    let mut out = Output::default();
    match sc.repdyn.as_ref().expect("command support was checked") {
        RepDynPlan::Plain(spec) => {
            let traj = integrate_repdyn(spec, p.t0, p.t1, p.dt)?;
            repdyn_exports(&mut out, &traj, sc.output.stride);
        }
        RepDynPlan::Tactical(cfg) => {
            let grid = windows_grid(sc)?;
            let run = run_tactical_repdyn(cfg, &grid, p.dt)?;
            let traj = &run.trajectory;
            repdyn_exports(&mut out, traj, sc.output.stride);
            out.file("windows.csv", export::windows_csv(&run.windows));
            out.file("comments.jsonl", export::comments_jsonl(&run.comments));
            out.metric("transitions", run.transitions.len() as f64);
            let after = run.transitions.last().map_or(p.t0, |e| e.time);
            let worst_after = traj
                .times
                .iter()
                .zip(&traj.residuals)
                .filter(|(t, _)| **t >= after)
                .map(|(_, r)| *r)
                .fold(0.0, f64::max);
            out.metric("max_residual_after_transition", worst_after);
            let events: Vec<Value> = run
                .transitions
                .iter()
                .map(|e| json!({"window": e.window, "time": e.time, "from": e.from, "to": e.to, "residual": e.residual}))
                .collect();
            out.summary("transitions", Value::Array(events));
            let labels: Vec<Option<String>> = traj.labels.iter().cloned().map(Some).collect();
            let intervals = equivalence_partition(&traj.times, &labels)?;
            out.metric("class_intervals", intervals.len() as f64);
            out.summary("partition", json!(intervals));
            // Classes are compared by registry label, a stand-in for algebra equivalence.
            out.summary("equivalence", json!("registry label equality"));
            out.summary("final_class", json!(traj.labels.last()));
        }
    }
    Ok(out)
}

fn run_invert(sc: &Scenario) -> tactica::Result<Output> {
    let plan = sc.invert.as_ref().expect("command support was checked");
    let p = &sc.params;
    let sol = solve_inverse_problem(&plan.problem, plan.options, p.t0, p.t1, p.dt)?;
    let mut out = Output::default();
    let traj = &sol.trajectory;
    repdyn_exports(&mut out, traj, sc.output.stride);
    let slot = plan.options.designated_slot;
    let d = plan.problem.initial.len();
    let mut csv = String::from("t");
    for i in 0..d {
        let _ = write!(csv, ",slot_{i},reference_{i}");
    }
    csv.push('\n');
    for (k, t) in traj.times.iter().enumerate() {
        csv.push_str(&float(*t));
        for i in 0..d {
            let x = traj.tuples[k][i][(slot, slot)].re;
            let _ = write!(csv, ",{},{}", float(x), float(sol.reference[k][i]));
        }
        csv.push('\n');
    }
    out.file("slot.csv", csv);
    let v = &sol.verification;
    out.metric("slot_deviation", v.slot_deviation);
    out.metric("symbol_error", v.symbol_error);
    out.metric("probes", v.probes as f64);
    let symbols: Vec<Vec<Value>> = sol
        .symbols
        .iter()
        .map(|terms| {
            terms
                .iter()
                .map(|t| json!({"scale": t.scale.to_string(), "poly": t.poly.to_string()}))
                .collect()
        })
        .collect();
    out.summary(
        "coefficient_map",
        json!(sol.coefficient_map.iter().map(ToString::to_string).collect::<Vec<_>>()),
    );
    out.summary("symbols", json!(symbols));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{parse_scenario, Overrides};
    use std::path::Path;

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), exit::VALIDATION);
        assert_eq!(exit_code(&Error::Data("x".into())), exit::RUNTIME);
        let insolvable = Error::Insolvable {
            time: 1.0,
            residual: 1.0,
        };
        assert_eq!(exit_code(&insolvable), exit::INSOLVABLE);
        let stranded = Error::Stranded {
            class: "c".into(),
            window: 2,
        };
        assert_eq!(exit_code(&stranded), exit::INSOLVABLE);
    }

    #[test]
    fn digest_covers_bytes_command_and_parameters() {
        let text = "schema = 1\nname = \"d\"\n[run]\nt1 = 1.0\ndt = 0.1\n[system]\ninitial = [0.0]\ndynamics = [\"1\"]\n";
        let load = |t: &str, o: Overrides| parse_scenario(Path::new("d.toml"), t.as_bytes().to_vec(), &o).unwrap();
        let base = load(text, Overrides::default());
        let d = run_digest(&base, Command::Simulate);
        assert_eq!(d, run_digest(&base, Command::Simulate));
        assert_eq!(d.len(), 64);
        assert_ne!(d, run_digest(&base, Command::Verbalize));
        let reseeded = load(text, Overrides {
            seed: Some(1),
            ..Overrides::default()
        });
        assert_ne!(d, run_digest(&reseeded, Command::Simulate));
        let edited = load(&text.replace("\"1\"", "\"2\""), Overrides::default());
        assert_ne!(d, run_digest(&edited, Command::Simulate));
    }
}
