//! Constrained integration of representative dynamics `dX/dt = F(X, a(t))`
//! and its tactical variant with class transitions.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use super::{
    check_letters, check_tuple, relation_residual, weyl_eval, word_product, AlgebraClassRegistry, AlgebraPresentation,
    CMatrix, Letter, NcPoly, MAX_DEGREE,
};
use crate::error::{config, Error, Result};
use crate::expr::{Bindings, Expr, Scope, VarKind};
use crate::game::step_grid;
use crate::tactics::{dialect_at, next_comment, CommentRule, CommentState, CommentValue, DialecticalObject};
use crate::verbalization::WindowRecord;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_ITERATIONS: usize = 50;
/// Largest Frobenius displacement a projection may apply in one step.
pub const DEFAULT_MAX_CORRECTION: f64 = 1e-6;

/// Control schedule: inputs `u(t)` over `t`, then coefficients `a` over `u`
/// and `t`.
#[derive(Debug, Clone, Default)]
pub struct ControlSchedule {
    pub inputs: Vec<Expr>,
    pub coefficients: Vec<Expr>,
}

impl ControlSchedule {
    pub fn parse(inputs: &[&str], coefficients: &[&str]) -> Result<Self> {
        let p = |s: &[&str]| s.iter().map(|x| Expr::parse(x)).collect::<Result<Vec<_>, _>>();
        let c = ControlSchedule {
            inputs: p(inputs)?,
            coefficients: p(coefficients)?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.inputs {
            e.check(&Scope::new().time())?;
        }
        let scope = Scope::new().time().var(VarKind::U, self.inputs.len());
        for e in &self.coefficients {
            e.check(&scope)?;
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let env = Bindings::new(t);
        let u: Vec<f64> = self.inputs.iter().map(|e| e.eval(&env)).collect();
        let env = Bindings::new(t).with(VarKind::U, &u);
        self.coefficients.iter().map(|e| e.eval(&env)).collect()
    }
}

/// `scale(t, a) · poly(X, C)`.
#[derive(Debug, Clone)]
pub struct SymbolTerm {
    pub scale: Expr,
    pub poly: NcPoly,
}

impl SymbolTerm {
    pub fn parse(scale: &str, poly: &str) -> Result<Self> {
        Ok(SymbolTerm {
            scale: Expr::parse(scale)?,
            poly: NcPoly::parse(poly)?,
        })
    }
}

fn check_symbols(symbols: &[Vec<SymbolTerm>], m: usize, constants: usize, controls: usize) -> Result<()> {
    if symbols.len() != m {
        return Err(config(format!("{} symbol slots for {m} generators", symbols.len())));
    }
    let scope = Scope::new().time().var(VarKind::A, controls);
    for term in symbols.iter().flatten() {
        term.scale.check(&scope)?;
        check_letters(&term.poly, m, constants)?;
        if term.poly.degree() > MAX_DEGREE {
            return Err(config(format!("symbol `{}` exceeds degree {MAX_DEGREE}", term.poly.source)));
        }
    }
    Ok(())
}

/// Representative dynamics with one fixed constraint presentation.
#[derive(Debug, Clone)]
pub struct RepDynSpec {
    /// One list of terms per generator image.
    pub symbols: Vec<Vec<SymbolTerm>>,
    /// Lifted constants `C_α` for letters `c1, c2, …`.
    pub constants: Vec<CMatrix>,
    pub initial: Vec<CMatrix>,
    pub presentation: AlgebraPresentation,
    pub controls: ControlSchedule,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_correction: f64,
}

impl RepDynSpec {
    pub fn validate(&self) -> Result<()> {
        self.presentation.validate()?;
        check_tuple(&self.initial)?;
        let m = self.initial.len();
        if m != self.presentation.generators {
            return Err(config(format!(
                "initial tuple has {m} matrices but `{}` has {} generators",
                self.presentation.label, self.presentation.generators
            )));
        }
        let n = self.initial[0].nrows();
        if self.constants.iter().any(|c| c.shape() != (n, n)) {
            return Err(config("lifted constants must share the ambient dimension"));
        }
        self.controls.validate()?;
        check_symbols(&self.symbols, m, self.constants.len(), self.controls.coefficients.len())?;
        if !(self.tolerance > 0.0) || self.max_iterations == 0 || !(self.max_correction > 0.0) {
            return Err(config("projection tolerance, iteration cap and correction cap must be positive"));
        }
        let r = relation_residual(&self.presentation, &self.initial)?;
        if r > self.tolerance {
            return Err(config(format!(
                "initial tuple violates `{}` (residual {r:e} above tolerance {:e})",
                self.presentation.label, self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepDynTrajectory {
    pub times: Vec<f64>,
    pub tuples: Vec<Vec<CMatrix>>,
    pub residuals: Vec<f64>,
    /// Class (or presentation) label in force at each sample.
    pub labels: Vec<String>,
    /// Control coefficients `a(t)` at each sample.
    pub controls: Vec<Vec<f64>>,
}

impl RepDynTrajectory {
    fn push(&mut self, t: f64, xs: &[CMatrix], residual: f64, label: &str, a: Vec<f64>) {
        self.times.push(t);
        self.tuples.push(xs.to_vec());
        self.residuals.push(residual);
        self.labels.push(label.to_string());
        self.controls.push(a);
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

struct Field<'a> {
    symbols: &'a [Vec<SymbolTerm>],
    constants: &'a [CMatrix],
    controls: &'a ControlSchedule,
}

impl Field<'_> {
    fn eval(&self, t: f64, xs: &[CMatrix]) -> Result<Vec<CMatrix>> {
        let a = self.controls.eval(t);
        let env = Bindings::new(t).with(VarKind::A, &a);
        let n = xs[0].nrows();
        self.symbols
            .iter()
            .map(|slot| {
                let mut acc = CMatrix::zeros(n, n);
                for term in slot {
                    let s = term.scale.eval(&env);
                    if s != 0.0 {
                        let value = weyl_eval(&term.poly, xs, self.constants).map_err(|e| match e {
                            Error::Data(_) => Error::Divergence { last_valid_time: t },
                            other => other,
                        })?;
                        acc += value * Complex64::new(s, 0.0);
                    }
                }
                Ok(acc)
            })
            .collect()
    }

    fn rk4(&self, t: f64, h: f64, xs: &[CMatrix]) -> Result<Vec<CMatrix>> {
        let shift = |k: &[CMatrix], c: f64| -> Vec<CMatrix> {
            xs.iter().zip(k).map(|(x, d)| x + d * Complex64::new(c, 0.0)).collect()
        };
        let k1 = self.eval(t, xs)?;
        let k2 = self.eval(t + 0.5 * h, &shift(&k1, 0.5 * h))?;
        let k3 = self.eval(t + 0.5 * h, &shift(&k2, 0.5 * h))?;
        let k4 = self.eval(t + h, &shift(&k3, h))?;
        let out: Vec<CMatrix> = (0..xs.len())
            .map(|i| &xs[i] + (&k1[i] + &k2[i] * Complex64::new(2.0, 0.0) + &k3[i] * Complex64::new(2.0, 0.0) + &k4[i]) * Complex64::new(h / 6.0, 0.0))
            .collect();
        if out.iter().any(|m| m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
            return Err(Error::Divergence { last_valid_time: t });
        }
        Ok(out)
    }
}

const SINGULAR_CUTOFF: f64 = 1e-6;

struct Projection {
    tolerance: f64,
    max_iterations: usize,
    max_correction: f64,
}

impl Projection {
    /// Gauss–Newton on the stacked relation entries with the tuple entries as
    /// unknowns. `Err(residual)` when the iteration cap or the correction cap
    /// is hit.
    fn project(&self, pres: &AlgebraPresentation, xs: &mut [CMatrix]) -> Result<f64, f64> {
        let m = xs.len();
        let n = xs[0].nrows();
        let nn = n * n;
        let start: Vec<CMatrix> = xs.to_vec();
        let mut residual = relation_residual(pres, xs).unwrap_or(f64::INFINITY);
        let mut iterations = 0;
        while residual > self.tolerance {
            if iterations == self.max_iterations {
                return Err(residual);
            }
            iterations += 1;
            let rows = pres.relations.len() * nn;
            let mut jac = CMatrix::zeros(rows, m * nn);
            let mut rhs = DVector::<Complex64>::zeros(rows);
            for (r, rel) in pres.relations.iter().enumerate() {
                let value = super::relation_value(rel, xs, n);
                for (k, z) in value.iter().enumerate() {
                    rhs[r * nn + k] = *z;
                }
                for (coef, word) in &rel.terms {
                    for (p, &l) in word.iter().enumerate() {
                        let Letter::X(g) = l else { continue };
                        let pre = word_product(&word[..p], xs, &[], n);
                        let post = word_product(&word[p + 1..], xs, &[], n);
                        // d(pre · X_g · post)[i,j] / d X_g[a,b] = pre[i,a] · post[b,j].
                        for j in 0..n {
                            for i in 0..n {
                                let row = r * nn + i + j * n;
                                for b in 0..n {
                                    let pb = post[(b, j)] * coef;
                                    if pb.norm() == 0.0 {
                                        continue;
                                    }
                                    for a in 0..n {
                                        jac[(row, g * nn + a + b * n)] += pre[(i, a)] * pb;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            let svd = jac.svd(true, true);
            // Directions this weak are curvature, not correction.
            let cutoff = svd.singular_values.max() * SINGULAR_CUTOFF;
            let step = match svd.solve(&rhs, cutoff) {
                Ok(s) => s,
                Err(_) => return Err(residual),
            };
            for g in 0..m {
                for k in 0..nn {
                    xs[g][k] -= step[g * nn + k];
                }
            }
            let moved: f64 = xs.iter().zip(&start).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
            residual = relation_residual(pres, xs).unwrap_or(f64::INFINITY);
            if moved > self.max_correction || !residual.is_finite() {
                xs.clone_from_slice(&start);
                return Err(residual.max(relation_residual(pres, &start).unwrap_or(f64::INFINITY)));
            }
        }
        Ok(residual)
    }
}

/// RK4 integration with a projection onto the relation variety after every
/// step whose residual exceeds the tolerance.
pub fn integrate_repdyn(spec: &RepDynSpec, t0: f64, t1: f64, dt: f64) -> Result<RepDynTrajectory> {
    spec.validate()?;
    let times = step_grid(t0, t1, dt)?;
    let field = Field {
        symbols: &spec.symbols,
        constants: &spec.constants,
        controls: &spec.controls,
    };
    let proj = Projection {
        tolerance: spec.tolerance,
        max_iterations: spec.max_iterations,
        max_correction: spec.max_correction,
    };
    let label = &spec.presentation.label;
    let mut xs = spec.initial.clone();
    let mut traj = RepDynTrajectory {
        times: Vec::new(),
        tuples: Vec::new(),
        residuals: Vec::new(),
        labels: Vec::new(),
        controls: Vec::new(),
    };
    traj.push(t0, &xs, relation_residual(&spec.presentation, &xs)?, label, spec.controls.eval(t0));
    for w in times.windows(2) {
        let mut next = field.rk4(w[0], w[1] - w[0], &xs)?;
        let residual = proj
            .project(&spec.presentation, &mut next)
            .map_err(|residual| Error::Insolvable { time: w[1], residual })?;
        xs = next;
        traj.push(w[1], &xs, residual, label, spec.controls.eval(w[1]));
    }
    Ok(traj)
}

/// Symbol slots used while the class `class` is in force.
#[derive(Debug, Clone)]
pub struct ClassDynamics {
    pub class: String,
    pub symbols: Vec<Vec<SymbolTerm>>,
}

/// Representative dynamics whose comments are `(class, η)` pairs.
#[derive(Debug, Clone)]
pub struct TacticalRepDyn {
    pub registry: AlgebraClassRegistry,
    pub dynamics: Vec<ClassDynamics>,
    pub constants: Vec<CMatrix>,
    pub controls: ControlSchedule,
    pub initial: Vec<CMatrix>,
    /// Labeled initial comment; its class is the starting class.
    pub initial_comment: CommentValue,
    /// η update when no transition fires; reads `theta` (η), `omega`, `v`, `t`.
    pub rule: CommentRule,
    pub dialect: Vec<DialecticalObject>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_correction: f64,
}

/// Window state functional: `[max residual, ‖X‖_F at window end]`.
pub const REPDYN_OMEGA_DIM: usize = 2;
/// Diagnostics seen by triggers: `[insolvable flag, residual]`.
pub const REPDYN_DIAG_DIM: usize = 2;
const MAX_TRANSITIONS_PER_WINDOW: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionEvent {
    pub window: usize,
    pub time: f64,
    pub from: String,
    pub to: String,
    /// Residual that made the old class insolvable.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct TacticalRepDynRun {
    pub trajectory: RepDynTrajectory,
    /// `cell_label` holds the class in force at the window end.
    pub windows: Vec<WindowRecord>,
    pub comments: Vec<CommentState>,
    pub transitions: Vec<TransitionEvent>,
}

impl TacticalRepDyn {
    fn dynamics_for(&self, class: &str) -> Result<&ClassDynamics> {
        self.dynamics
            .iter()
            .find(|d| d.class == class)
            .ok_or_else(|| config(format!("no dynamics declared for class `{class}`")))
    }

    pub fn validate(&self) -> Result<()> {
        self.registry.validate()?;
        check_tuple(&self.initial)?;
        self.controls.validate()?;
        let n = self.initial.first().map_or(0, |m| m.nrows());
        if self.constants.iter().any(|c| c.shape() != (n, n)) {
            return Err(config("lifted constants must share the ambient dimension"));
        }
        let labels = self.registry.labels();
        let start = self
            .initial_comment
            .class
            .as_deref()
            .ok_or_else(|| config("the initial comment must carry a class label"))?;
        if !labels.iter().any(|l| l == start) {
            return Err(config(format!("class `{start}` is not registered")));
        }
        for d in &self.dynamics {
            let class = self
                .registry
                .get(&d.class)
                .ok_or_else(|| config(format!("dynamics declared for unregistered class `{}`", d.class)))?;
            let m = d.symbols.len();
            if class.presentation_for(m).is_none() {
                return Err(config(format!(
                    "class `{}` has no presentation with {m} generators",
                    d.class
                )));
            }
            check_symbols(&d.symbols, m, self.constants.len(), self.controls.coefficients.len())?;
        }
        let eta = self.initial_comment.values.len();
        let v_dim = self.controls.coefficients.len();
        for delta in &self.dialect {
            delta.validate(&labels, eta, REPDYN_OMEGA_DIM, v_dim, REPDYN_DIAG_DIM)?;
            for e in &delta.table {
                let from = self.dynamics_for(&e.from)?.symbols.len();
                let to = self.dynamics_for(&e.to)?.symbols.len();
                if from + e.embedding.len() != to {
                    return Err(config(format!(
                        "transition {} → {} maps {from} generators plus {} embedded to {to}",
                        e.from,
                        e.to,
                        e.embedding.len()
                    )));
                }
                for src in &e.embedding {
                    let p = NcPoly::parse(src)?;
                    check_letters(&p, from, 0)?;
                }
            }
        }
        let m0 = self.dynamics_for(start)?.symbols.len();
        if self.initial.len() != m0 {
            return Err(config(format!(
                "initial tuple has {} matrices but class `{start}` dynamics has {m0} slots",
                self.initial.len()
            )));
        }
        self.rule.check(eta, REPDYN_OMEGA_DIM, v_dim)?;
        Ok(())
    }
}

fn tuple_norm(xs: &[CMatrix]) -> f64 {
    xs.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

/// Integrate window by window under the current class. When a step becomes
/// insolvable the dialectical object of the window is consulted with
/// `diag = [1, residual]`; a firing entry switches class, appends the
/// embedded generators and retries the step. No firing entry strands the
/// run. At every window end the object is consulted again with
/// `diag = [0, max residual]`, otherwise η follows the comment rule.
pub fn run_tactical_repdyn(cfg: &TacticalRepDyn, grid: &[f64], dt: f64) -> Result<TacticalRepDynRun> {
    cfg.validate()?;
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(config("window grid must hold at least two strictly increasing times"));
    }
    let proj = Projection {
        tolerance: cfg.tolerance,
        max_iterations: cfg.max_iterations,
        max_correction: cfg.max_correction,
    };
    let mut comment = cfg.initial_comment.clone();
    let mut class = comment.class.clone().unwrap();
    let presentation = |class: &str, m: usize| -> Result<AlgebraPresentation> {
        cfg.registry
            .get(class)
            .and_then(|c| c.presentation_for(m))
            .cloned()
            .ok_or_else(|| config(format!("class `{class}` has no presentation with {m} generators")))
    };
    let mut pres = presentation(&class, cfg.initial.len())?;
    let mut xs = cfg.initial.clone();
    let r0 = relation_residual(&pres, &xs)?;
    if r0 > cfg.tolerance {
        return Err(config(format!("initial tuple violates class `{class}` (residual {r0:e})")));
    }
    let mut traj = RepDynTrajectory {
        times: Vec::new(),
        tuples: Vec::new(),
        residuals: Vec::new(),
        labels: Vec::new(),
        controls: Vec::new(),
    };
    traj.push(grid[0], &xs, r0, &class, cfg.controls.eval(grid[0]));
    let mut comments = vec![CommentState {
        n: 0,
        value: comment.clone(),
        delta_label: None,
    }];
    let mut windows = Vec::new();
    let mut transitions = Vec::new();
    for (wi, w) in grid.windows(2).enumerate() {
        let n = wi + 1;
        let delta = dialect_at(&cfg.dialect, n);
        let times = step_grid(w[0], w[1], dt)?;
        let mut max_res = traj.residuals.last().copied().unwrap_or(0.0);
        let mut control_sum = vec![0.0; cfg.controls.coefficients.len()];
        let mut steps_taken = 0usize;
        let mut fired_in_window = 0;
        let mut eta_override = None;
        for s in times.windows(2) {
            let a = cfg.controls.eval(s[0]);
            for (acc, x) in control_sum.iter_mut().zip(&a) {
                *acc += x;
            }
            steps_taken += 1;
            loop {
                let dynamics = cfg.dynamics_for(&class)?;
                let field = Field {
                    symbols: &dynamics.symbols,
                    constants: &cfg.constants,
                    controls: &cfg.controls,
                };
                let mut next = field.rk4(s[0], s[1] - s[0], &xs)?;
                match proj.project(&pres, &mut next) {
                    Ok(residual) => {
                        xs = next;
                        max_res = max_res.max(residual);
                        traj.push(s[1], &xs, residual, &class, cfg.controls.eval(s[1]));
                        break;
                    }
                    Err(residual) => {
                        let stranded = || Error::Stranded {
                            class: class.clone(),
                            window: n,
                        };
                        if fired_in_window == MAX_TRANSITIONS_PER_WINDOW {
                            return Err(stranded());
                        }
                        let omega = [max_res.max(residual), tuple_norm(&xs)];
                        let v: Vec<f64> = control_sum.iter().map(|x| x / steps_taken as f64).collect();
                        let Some((entry, eta)) =
                            delta.and_then(|d| d.fire(&class, &comment.values, &omega, &v, &[1.0, residual]))
                        else {
                            return Err(stranded());
                        };
                        let embedded: Vec<CMatrix> = entry
                            .embedding
                            .iter()
                            .map(|src| Ok(super::relation_value(&NcPoly::parse(src)?, &xs, xs[0].nrows())))
                            .collect::<Result<_>>()?;
                        xs.extend(embedded);
                        transitions.push(TransitionEvent {
                            window: n,
                            time: s[0],
                            from: class.clone(),
                            to: entry.to.clone(),
                            residual,
                        });
                        class = entry.to.clone();
                        comment = CommentValue::labeled(&class, eta.clone());
                        eta_override = Some(eta);
                        pres = presentation(&class, xs.len())?;
                        // The embedded tuple must be a representation of the new class.
                        let entry_proj = Projection {
                            max_correction: f64::INFINITY,
                            ..proj
                        };
                        let r = entry_proj
                            .project(&pres, &mut xs)
                            .map_err(|residual| Error::Insolvable { time: s[0], residual })?;
                        max_res = max_res.max(r);
                        fired_in_window += 1;
                    }
                }
            }
        }
        let v: Vec<f64> = control_sum.iter().map(|x| x / steps_taken as f64).collect();
        let omega = vec![max_res, tuple_norm(&xs)];
        let value = match eta_override {
            Some(eta) => CommentValue::labeled(&class, eta),
            None => next_comment(&cfg.rule, &comment, delta, &omega, &v, w[1], &[0.0, max_res]),
        };
        if let Some(c) = &value.class {
            if c != &class {
                class = c.clone();
                // A window-end transition keeps the tuple; the class must accept it.
                pres = presentation(&class, xs.len())?;
            }
        }
        comment = value.clone();
        windows.push(WindowRecord {
            n,
            t_start: w[0],
            t_end: w[1],
            omega,
            v,
            cell_label: Some(class.clone()),
        });
        comments.push(CommentState {
            n,
            value,
            delta_label: delta.map(|d| d.label.clone()),
        });
    }
    Ok(TacticalRepDynRun {
        trajectory: traj,
        windows,
        comments,
        transitions,
    })
}
