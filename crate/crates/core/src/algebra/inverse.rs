//! Dynamical inverse problem in the commutative-diagonal mode: given a
//! polynomial controlled system `ẋ = φ(x, u)`, build representative dynamics
//! on diagonal matrices whose symbol `f(x, a(u))` reproduces `φ`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::repdyn::{integrate_repdyn, ControlSchedule, RepDynSpec, RepDynTrajectory, SymbolTerm};
use super::{diag, AlgebraPresentation, Letter, NcPoly, DEFAULT_MAX_CORRECTION, DEFAULT_MAX_ITERATIONS,
    DEFAULT_TOLERANCE, MAX_DEGREE, MAX_DIMENSION, MAX_GENERATORS};
use crate::error::{config, Error, Result};
use crate::expr::{BinOp, Bindings, Expr, Node, Scope, VarKind};
use crate::game::step_grid;

/// `ẋ = φ(x, u)` with `u(t)` given by expressions over `t`.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    /// One expression per state component, over `x`, `u` and `t`.
    pub field: Vec<Expr>,
    pub inputs: Vec<Expr>,
    pub initial: Vec<f64>,
}

impl InverseProblem {
    pub fn parse(field: &[&str], inputs: &[&str], initial: Vec<f64>) -> Result<Self> {
        let p = |s: &[&str]| s.iter().map(|x| Expr::parse(x)).collect::<Result<Vec<_>, _>>();
        Ok(InverseProblem {
            field: p(field)?,
            inputs: p(inputs)?,
            initial,
        })
    }

    fn validate(&self) -> Result<()> {
        let d = self.initial.len();
        if d == 0 || d > MAX_GENERATORS {
            return Err(config(format!("state dimension {d} outside 1..={MAX_GENERATORS}")));
        }
        if self.field.len() != d {
            return Err(config(format!("{} field components for a {d}-dimensional state", self.field.len())));
        }
        let scope = Scope::new().time().var(VarKind::X, d).var(VarKind::U, self.inputs.len());
        for e in &self.field {
            e.check(&scope)?;
        }
        for e in &self.inputs {
            e.check(&Scope::new().time())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseOptions {
    /// Ambient matrix dimension `n`.
    pub dimension: usize,
    /// Diagonal slot that carries the original state.
    pub designated_slot: usize,
    /// Turn numeric constant terms into lifted matrices `C = value · I`.
    pub lift_constants: bool,
    pub seed: u64,
}

impl Default for InverseOptions {
    fn default() -> Self {
        InverseOptions {
            dimension: 2,
            designated_slot: 0,
            lift_constants: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseVerification {
    /// Max `|f(x, a(u)) − φ(x, u)|` over seeded probes.
    pub symbol_error: f64,
    pub probes: usize,
    /// Max deviation of the designated slot from a direct scalar run.
    pub slot_deviation: f64,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct InverseSolution {
    pub spec: RepDynSpec,
    /// Coefficient map `a(u)`: `spec.controls.coefficients`, exposed for reports.
    pub coefficient_map: Vec<Expr>,
    /// Symbol per component, as a polynomial in `x` with scales over `a`.
    pub symbols: Vec<Vec<SymbolTerm>>,
    pub verification: InverseVerification,
    pub trajectory: RepDynTrajectory,
    /// Direct scalar integration of `φ`, one state per sample.
    pub reference: Vec<Vec<f64>>,
}

type Exponents = Vec<u8>;
/// Polynomial in `x` with coefficient trees free of `x`.
type Expansion = BTreeMap<Exponents, Node>;

fn is_x_free(node: &Node) -> bool {
    match node {
        Node::Num(_) => true,
        Node::Var(v) => v.kind != VarKind::X,
        Node::Neg(a) => is_x_free(a),
        Node::Bin(_, a, b) => is_x_free(a) && is_x_free(b),
        Node::Call(_, args) => args.iter().all(is_x_free),
    }
}

fn is_numeric(node: &Node) -> bool {
    match node {
        Node::Num(_) => true,
        Node::Var(_) => false,
        Node::Neg(a) => is_numeric(a),
        Node::Bin(_, a, b) => is_numeric(a) && is_numeric(b),
        Node::Call(_, args) => args.iter().all(is_numeric),
    }
}

fn fold(node: Node) -> Node {
    if is_numeric(&node) {
        Node::Num(node.eval(&Bindings::new(0.0)))
    } else {
        node
    }
}

fn bin(op: BinOp, a: Node, b: Node) -> Node {
    fold(Node::Bin(op, Box::new(a), Box::new(b)))
}

fn add_into(acc: &mut Expansion, exps: Exponents, coef: Node) {
    match acc.remove(&exps) {
        Some(prev) => {
            acc.insert(exps, bin(BinOp::Add, prev, coef));
        }
        None => {
            acc.insert(exps, coef);
        }
    }
}

fn multiply(a: &Expansion, b: &Expansion) -> Result<Expansion> {
    let mut out = Expansion::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Exponents = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            if e.iter().map(|&k| k as usize).sum::<usize>() > MAX_DEGREE {
                return Err(Error::Unsupported(format!("field exceeds degree {MAX_DEGREE} in x")));
            }
            add_into(&mut out, e, bin(BinOp::Mul, ca.clone(), cb.clone()));
        }
    }
    Ok(out)
}

fn constant(d: usize, coef: Node) -> Expansion {
    Expansion::from([(vec![0; d], fold(coef))])
}

fn expand(node: &Node, d: usize) -> Result<Expansion> {
    if is_x_free(node) {
        return Ok(constant(d, node.clone()));
    }
    let nonpoly = || Error::Unsupported(format!("`{}` is not polynomial in x", Expr::from_node(node.clone()).source()));
    Ok(match node {
        Node::Var(v) => {
            let mut e = vec![0; d];
            e[v.index] = 1;
            Expansion::from([(e, Node::Num(1.0))])
        }
        Node::Neg(a) => expand(a, d)?
            .into_iter()
            .map(|(e, c)| (e, fold(Node::Neg(Box::new(c)))))
            .collect(),
        Node::Bin(op @ (BinOp::Add | BinOp::Sub), a, b) => {
            let mut out = expand(a, d)?;
            for (e, c) in expand(b, d)? {
                let c = if *op == BinOp::Sub { fold(Node::Neg(Box::new(c))) } else { c };
                add_into(&mut out, e, c);
            }
            out
        }
        Node::Bin(BinOp::Mul, a, b) => multiply(&expand(a, d)?, &expand(b, d)?)?,
        Node::Bin(BinOp::Div, a, b) if is_x_free(b) => expand(a, d)?
            .into_iter()
            .map(|(e, c)| (e, bin(BinOp::Div, c, (**b).clone())))
            .collect(),
        Node::Bin(BinOp::Pow, a, b) => {
            let k = match **b {
                Node::Num(k) if k >= 0.0 && k.fract() == 0.0 && k <= MAX_DEGREE as f64 => k as usize,
                _ => return Err(nonpoly()),
            };
            let base = expand(a, d)?;
            let mut out = constant(d, Node::Num(1.0));
            for _ in 0..k {
                out = multiply(&out, &base)?;
            }
            out
        }
        _ => return Err(nonpoly()),
    })
}

fn word(exps: &[u8]) -> Vec<Letter> {
    exps.iter()
        .enumerate()
        .flat_map(|(i, &k)| std::iter::repeat_n(Letter::X(i), k as usize))
        .collect()
}

fn scalar_rk4(problem: &InverseProblem, times: &[f64]) -> Vec<Vec<f64>> {
    let eval = |t: f64, x: &[f64]| -> Vec<f64> {
        let env = Bindings::new(t);
        let u: Vec<f64> = problem.inputs.iter().map(|e| e.eval(&env)).collect();
        let env = Bindings::new(t).with(VarKind::X, x).with(VarKind::U, &u);
        problem.field.iter().map(|e| e.eval(&env)).collect()
    };
    let axpy = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let mut x = problem.initial.clone();
    let mut out = vec![x.clone()];
    for w in times.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        let k1 = eval(t, &x);
        let k2 = eval(t + 0.5 * h, &axpy(&x, &k1, 0.5 * h));
        let k3 = eval(t + 0.5 * h, &axpy(&x, &k2, 0.5 * h));
        let k4 = eval(t + h, &axpy(&x, &k3, h));
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(x.clone());
    }
    out
}

/// Build the diagonal representative dynamics for `problem`, integrate it on
/// `[t0, t1]` with step `dt` and verify it against the scalar system.
pub fn solve_inverse_problem(
    problem: &InverseProblem,
    opts: InverseOptions,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<InverseSolution> {
    problem.validate()?;
    let d = problem.initial.len();
    let n = opts.dimension;
    if n == 0 || n > MAX_DIMENSION || opts.designated_slot >= n {
        return Err(config(format!(
            "dimension {n} with designated slot {} is not usable (1..={MAX_DIMENSION})",
            opts.designated_slot
        )));
    }
    let one = Complex64::new(1.0, 0.0);
    let mut coefficients: Vec<Expr> = Vec::new();
    let mut constants = Vec::new();
    let mut symbols = Vec::with_capacity(d);
    for component in &problem.field {
        let mut slot = Vec::new();
        for (exps, coef) in expand(component.node(), d)? {
            let scale = match coef {
                Node::Num(c) if c == 0.0 => continue,
                Node::Num(c) if opts.lift_constants && exps.iter().all(|&k| k == 0) => {
                    constants.push(diag(&vec![c; n]));
                    let lifted = NcPoly::from_terms(vec![(one, vec![Letter::C(constants.len() - 1)])]);
                    slot.push(SymbolTerm {
                        scale: Expr::constant(1.0),
                        poly: lifted,
                    });
                    continue;
                }
                Node::Num(c) => Expr::constant(c),
                other => {
                    let e = Expr::from_node(other);
                    let j = match coefficients.iter().position(|a| a.node() == e.node()) {
                        Some(j) => j,
                        None => {
                            coefficients.push(e);
                            coefficients.len() - 1
                        }
                    };
                    Expr::parse(&format!("a[{j}]"))?
                }
            };
            slot.push(SymbolTerm {
                scale,
                poly: NcPoly::from_terms(vec![(one, word(&exps))]),
            });
        }
        symbols.push(slot);
    }
    let initial: Vec<_> = problem.initial.iter().map(|&x| diag(&vec![x; n])).collect();
    let spec = RepDynSpec {
        symbols: symbols.clone(),
        constants,
        initial,
        presentation: AlgebraPresentation::commutative("commutative", d),
        controls: ControlSchedule {
            inputs: problem.inputs.clone(),
            coefficients: coefficients.clone(),
        },
        tolerance: DEFAULT_TOLERANCE,
        max_iterations: DEFAULT_MAX_ITERATIONS,
        max_correction: DEFAULT_MAX_CORRECTION,
    };

    let symbol_error = probe_symbols(problem, &spec, opts.seed)?;
    let trajectory = integrate_repdyn(&spec, t0, t1, dt)?;
    let reference = scalar_rk4(problem, &step_grid(t0, t1, dt)?);
    let k = opts.designated_slot;
    let slot_deviation = trajectory
        .tuples
        .iter()
        .zip(&reference)
        .flat_map(|(xs, r)| xs.iter().zip(r).map(move |(m, x)| (m[(k, k)] - Complex64::new(*x, 0.0)).norm()))
        .fold(0.0, f64::max);
    Ok(InverseSolution {
        coefficient_map: coefficients,
        symbols,
        verification: InverseVerification {
            symbol_error,
            probes: PROBES,
            slot_deviation,
            t0,
            t1,
            dt,
        },
        spec,
        trajectory,
        reference,
    })
}

const PROBES: usize = 32;

/// Evaluate the constructed symbol on `1 × 1` tuples at seeded random
/// `(x, t)` and compare with `φ`.
fn probe_symbols(problem: &InverseProblem, spec: &RepDynSpec, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = problem.initial.len();
    let mut worst: f64 = 0.0;
    for _ in 0..PROBES {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let t: f64 = rng.random_range(0.0..10.0);
        let env = Bindings::new(t);
        let u: Vec<f64> = problem.inputs.iter().map(|e| e.eval(&env)).collect();
        let env_x = Bindings::new(t).with(VarKind::X, &x).with(VarKind::U, &u);
        let a = spec.controls.eval(t);
        let env_a = Bindings::new(t).with(VarKind::A, &a);
        let xs: Vec<_> = x.iter().map(|&v| diag(&[v])).collect();
        let cs: Vec<_> = spec.constants.iter().map(|c| diag(&[c[(0, 0)].re])).collect();
        for (phi, slot) in problem.field.iter().zip(&spec.symbols) {
            let mut f = Complex64::new(0.0, 0.0);
            for term in slot {
                f += super::weyl_eval(&term.poly, &xs, &cs)?[(0, 0)] * term.scale.eval(&env_a);
            }
            worst = worst.max((f - Complex64::new(phi.eval(&env_x), 0.0)).norm());
        }
    }
    Ok(worst)
}
