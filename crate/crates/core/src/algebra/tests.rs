use num_complex::Complex64;
use proptest::prelude::*;

use super::*;
use crate::tactics::{CommentRule, CommentValue, DialecticalObject, TransitionEntry};
use crate::Expr;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn heisenberg() -> AlgebraPresentation {
    AlgebraPresentation::parse("heisenberg", 3, &["x1x2 - x2x1 - x3", "x1x3 - x3x1", "x2x3 - x3x2"]).unwrap()
}

fn heisenberg_triple() -> Vec<CMatrix> {
    vec![unit(3, 1, 2), unit(3, 2, 3), unit(3, 1, 3)]
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn degree_one_symbol_returns_the_generator() {
    let xs = heisenberg_triple();
    let p = NcPoly::parse("x2").unwrap();
    assert_eq!(weyl_eval(&p, &xs, &[]).unwrap(), xs[1]);
}

#[test]
fn symmetrized_product_of_elementary_matrices() {
    let xs = vec![unit(2, 1, 2), unit(2, 2, 1)];
    let got = weyl_eval(&NcPoly::parse("x1x2").unwrap(), &xs, &[]).unwrap();
    // E12 E21 = E11, E21 E12 = E22.
    let oracle = (&xs[0] * &xs[1] + &xs[1] * &xs[0]) * c(0.5);
    assert_eq!(got, oracle);
    assert_eq!(got, CMatrix::identity(2, 2) * c(0.5));
}

#[test]
fn commuting_diagonal_matches_pointwise_evaluation() {
    let xs = vec![diag(&[1.0, 2.0]), diag(&[3.0, 4.0])];
    let got = weyl_eval(&NcPoly::parse("x1^2 x2").unwrap(), &xs, &[]).unwrap();
    let pointwise: Vec<f64> = [(1.0, 3.0), (2.0, 4.0)].iter().map(|(a, b): &(f64, f64)| a * a * b).collect();
    assert_eq!(pointwise, vec![3.0, 16.0]);
    assert!(max_abs(&(got - diag(&pointwise))) < 1e-14);
}

#[test]
fn lifted_constants_enter_symbols() {
    let xs = vec![diag(&[2.0, 3.0])];
    let cs = vec![diag(&[0.5, 0.5])];
    let got = weyl_eval(&NcPoly::parse("c1 x1 + 2").unwrap(), &xs, &cs).unwrap();
    assert!(max_abs(&(got - diag(&[3.0, 3.5]))) < 1e-15);
    assert!(weyl_eval(&NcPoly::parse("c2").unwrap(), &xs, &cs).is_err());
    assert!(weyl_eval(&NcPoly::parse("x2").unwrap(), &xs, &cs).is_err());
}

#[test]
fn heisenberg_residuals() {
    let xs = heisenberg_triple();
    // Direct multiplication: E12 E23 = E13, E23 E12 = 0.
    assert_eq!(&xs[0] * &xs[1] - &xs[1] * &xs[0], xs[2]);
    assert_eq!(relation_residual(&heisenberg(), &xs).unwrap(), 0.0);

    let mut perturbed = xs.clone();
    perturbed[2] += unit(3, 1, 2) * c(0.1);
    // [X1, X2] − X3 = −0.1 E12, whose Frobenius norm is 0.1.
    let r = relation_residual(&heisenberg(), &perturbed).unwrap();
    assert!((r - 0.1).abs() < 1e-15);

    assert!(admissible_check(&heisenberg(), &xs, 1e-12).unwrap());
    assert!(!admissible_check(&heisenberg(), &perturbed, 1e-3).unwrap());
    let free = AlgebraPresentation::parse("free", 3, &[]).unwrap();
    assert_eq!(relation_residual(&free, &perturbed).unwrap(), 0.0);
    assert!(admissible_check(&free, &perturbed, 0.0).unwrap());
}

#[test]
fn presentation_validation() {
    assert!(AlgebraPresentation::parse("bad", 2, &["x1x3"]).is_err());
    assert!(AlgebraPresentation::parse("deep", 2, &["x1x1x2x2"]).is_err());
    assert!(AlgebraPresentation::parse("wide", 5, &[]).is_err());
    assert!(relation_residual(&heisenberg(), &heisenberg_triple()[..2]).is_err());
    let dup = AlgebraClassRegistry::new(vec![
        AlgebraClass {
            label: "a".into(),
            presentations: vec![AlgebraPresentation::commutative("a", 2)],
        },
        AlgebraClass {
            label: "a".into(),
            presentations: vec![AlgebraPresentation::commutative("a", 3)],
        },
    ]);
    assert!(dup.is_err());
    let empty = AlgebraClassRegistry::new(vec![AlgebraClass {
        label: "e".into(),
        presentations: vec![],
    }]);
    assert!(empty.is_err());
}

fn spec_with(
    pres: AlgebraPresentation,
    initial: Vec<CMatrix>,
    symbols: &[&[(&str, &str)]],
    inputs: &[&str],
    coefficients: &[&str],
) -> RepDynSpec {
    RepDynSpec {
        symbols: symbols
            .iter()
            .map(|slot| slot.iter().map(|(s, p)| SymbolTerm::parse(s, p).unwrap()).collect())
            .collect(),
        constants: vec![],
        initial,
        presentation: pres,
        controls: ControlSchedule::parse(inputs, coefficients).unwrap(),
        tolerance: DEFAULT_TOLERANCE,
        max_iterations: DEFAULT_MAX_ITERATIONS,
        max_correction: DEFAULT_MAX_CORRECTION,
    }
}

#[test]
fn frozen_dynamics_keep_the_tuple() {
    let mut xs = heisenberg_triple();
    xs[2] += unit(3, 2, 1) * c(1e-10);
    let spec = spec_with(heisenberg(), xs.clone(), &[&[], &[], &[]], &[], &[]);
    let traj = integrate_repdyn(&spec, 0.0, 1.0, 0.1).unwrap();
    assert_eq!(traj.times.len(), 11);
    assert!(traj.tuples.iter().all(|t| *t == xs));
    let r0 = traj.residuals[0];
    assert!(r0 > 0.0 && traj.residuals.iter().all(|&r| r == r0));
}

#[test]
fn initial_tuple_outside_the_variety_is_rejected() {
    let mut xs = heisenberg_triple();
    xs[2] += unit(3, 1, 2) * c(0.1);
    let spec = spec_with(heisenberg(), xs, &[&[], &[], &[]], &[], &[]);
    assert!(matches!(integrate_repdyn(&spec, 0.0, 1.0, 0.1), Err(Error::Config(_))));
}

fn scalar_rk4(f: impl Fn(&[f64]) -> Vec<f64>, x0: &[f64], t1: f64, steps: usize) -> Vec<Vec<f64>> {
    let h = t1 / steps as f64;
    let axpy = |x: &[f64], k: &[f64], s: f64| x.iter().zip(k).map(|(a, b)| a + s * b).collect::<Vec<_>>();
    let mut x = x0.to_vec();
    let mut out = vec![x.clone()];
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&axpy(&x, &k1, h / 2.0));
        let k3 = f(&axpy(&x, &k2, h / 2.0));
        let k4 = f(&axpy(&x, &k3, h));
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(x.clone());
    }
    out
}

#[test]
fn diagonal_logistic_follows_scalar_runs() {
    let a = [0.1, 0.2, 0.3];
    let b = [0.5, 0.6, 0.7];
    let spec = spec_with(
        AlgebraPresentation::commutative("commutative", 2),
        vec![diag(&a), diag(&b)],
        &[&[("1", "x1 - x1^2")], &[("1", "x2 - x1 x2")]],
        &[],
        &[],
    );
    let traj = integrate_repdyn(&spec, 0.0, 5.0, 0.01).unwrap();
    for slot in 0..3 {
        let fine = scalar_rk4(|x| vec![x[0] - x[0] * x[0], x[1] - x[0] * x[1]], &[a[slot], b[slot]], 5.0, 50_000);
        for (k, xs) in traj.tuples.iter().enumerate() {
            let want = &fine[k * 100];
            assert!((xs[0][(slot, slot)].re - want[0]).abs() < 1e-7);
            assert!((xs[1][(slot, slot)].re - want[1]).abs() < 1e-7);
        }
    }
    assert!(traj.residuals.iter().all(|&r| r <= DEFAULT_TOLERANCE));
}

#[test]
fn heisenberg_is_conserved_under_a_derivation() {
    // D(x1) = x1 + x2, D(x2) = x2 − x1, D(x3) = 2 x3 is a derivation of the
    // Heisenberg relations, so the flow stays on the variety.
    let spec = spec_with(
        heisenberg(),
        heisenberg_triple(),
        &[&[("a[0]", "x1 + x2")], &[("a[0]", "x2 - x1")], &[("a[0]", "2 x3")]],
        &["0.5*cos(t)"],
        &["u[0]"],
    );
    let traj = integrate_repdyn(&spec, 0.0, 10.0, 1e-3).unwrap();
    assert_eq!(traj.times.len(), 10_001);
    assert!(traj.max_residual() < 1e-8, "{}", traj.max_residual());
    assert!(traj.controls.iter().zip(&traj.times).all(|(a, t)| a[0] == 0.5 * t.cos()));
}

#[test]
fn projection_pulls_back_small_drift() {
    // X3 grows off the centre; projection keeps the relations within tolerance.
    let spec = spec_with(
        heisenberg(),
        heisenberg_triple(),
        &[&[], &[], &[("1e-5", "x1")]],
        &[],
        &[],
    );
    let traj = integrate_repdyn(&spec, 0.0, 1.0, 0.01).unwrap();
    assert!(traj.residuals.iter().all(|&r| r <= DEFAULT_TOLERANCE));
}

#[test]
fn forcing_off_the_variety_is_insolvable() {
    let spec = spec_with(
        heisenberg(),
        heisenberg_triple(),
        &[&[], &[], &[("1", "x1")]],
        &[],
        &[],
    );
    match integrate_repdyn(&spec, 0.0, 1.0, 0.01) {
        Err(Error::Insolvable { time, residual }) => {
            assert!((time - 0.01).abs() < 1e-15);
            assert!(residual > DEFAULT_TOLERANCE);
        }
        other => panic!("expected insolvable, got {other:?}"),
    }
}

#[test]
fn partition_cases() {
    let times = [0.0, 1.0, 2.0, 3.0, 4.0];
    let lab = |s: &[&str]| s.iter().map(|x| Some(x.to_string())).collect::<Vec<_>>();
    let one = equivalence_partition(&times, &lab(&["a"; 5])).unwrap();
    assert_eq!(
        one,
        vec![ClassInterval {
            label: "a".into(),
            start: 0.0,
            end: 4.0
        }]
    );
    let two = equivalence_partition(&times, &lab(&["a", "a", "b", "b", "b"])).unwrap();
    assert_eq!(two.len(), 2);
    assert_eq!((two[0].start, two[0].end, two[1].start, two[1].end), (0.0, 2.0, 2.0, 4.0));
    let alt = equivalence_partition(&times, &lab(&["a", "b", "a", "b", "a"])).unwrap();
    assert_eq!(alt.len(), 5);
    let mut missing = lab(&["a"; 5]);
    missing[3] = None;
    assert!(matches!(equivalence_partition(&times, &missing), Err(Error::Data(_))));
}

fn inverse(field: &[&str], inputs: &[&str], x0: f64, lift: bool) -> InverseSolution {
    let problem = InverseProblem::parse(field, inputs, vec![x0]).unwrap();
    let opts = InverseOptions {
        lift_constants: lift,
        ..Default::default()
    };
    solve_inverse_problem(&problem, opts, 0.0, 2.0, 1e-3).unwrap()
}

#[test]
fn inverse_linear_case_matches_closed_form() {
    let sol = inverse(&["u[0]*x[0]"], &["sin(t)"], 0.5, false);
    assert_eq!(sol.coefficient_map.len(), 1);
    assert_eq!(sol.symbols[0].len(), 1);
    assert_eq!(sol.symbols[0][0].poly.to_string(), NcPoly::parse("x1").unwrap().to_string());
    for (t, xs) in sol.trajectory.times.iter().zip(&sol.trajectory.tuples) {
        let exact = 0.5 * (1.0 - t.cos()).exp();
        assert!((xs[0][(0, 0)].re - exact).abs() < 1e-9);
    }
    assert!(sol.verification.symbol_error < 1e-12);
}

#[test]
fn inverse_logistic_matches_scalar_integration() {
    let sol = inverse(&["u[0]*x[0]*(1 - x[0])"], &["1 + 0.5*sin(t)"], 0.2, false);
    let mut x = 0.2;
    let h = 1e-3;
    let f = |t: f64, x: f64| (1.0 + 0.5 * t.sin()) * x * (1.0 - x);
    for (k, xs) in sol.trajectory.tuples.iter().enumerate() {
        assert!((xs[0][(0, 0)].re - x).abs() < 1e-9, "step {k}");
        assert!((xs[0][(1, 1)].re - x).abs() < 1e-9);
        let t = k as f64 * h;
        let k1 = f(t, x);
        let k2 = f(t + h / 2.0, x + h / 2.0 * k1);
        let k3 = f(t + h / 2.0, x + h / 2.0 * k2);
        let k4 = f(t + h, x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    assert!(sol.verification.slot_deviation < 1e-9);
    assert!(sol.verification.symbol_error < 1e-12);
}

#[test]
fn inverse_constant_lift() {
    let sol = inverse(&["0.3 + u[0]*x[0]"], &["-1"], 1.0, true);
    assert_eq!(sol.spec.constants.len(), 1);
    assert_eq!(sol.spec.constants[0], diag(&[0.3, 0.3]));
    // ẋ = 0.3 − x, x(0) = 1: x = 0.3 + 0.7 e^{−t}.
    for (t, xs) in sol.trajectory.times.iter().zip(&sol.trajectory.tuples) {
        assert!((xs[0][(0, 0)].re - (0.3 + 0.7 * (-t).exp())).abs() < 1e-9);
    }
    assert!(sol.verification.slot_deviation < 1e-9);
    let plain = inverse(&["0.3 + u[0]*x[0]"], &["-1"], 1.0, false);
    assert!(plain.spec.constants.is_empty());
    assert!((plain.trajectory.tuples.last().unwrap()[0][(0, 0)] - sol.trajectory.tuples.last().unwrap()[0][(0, 0)]).norm() < 1e-12);
}

#[test]
fn inverse_rejects_non_polynomial_fields() {
    for field in ["sin(x[0])", "x[0]^4", "1/x[0]", "x[0]^0.5", "x[0]*x[0]*x[0]*x[0]"] {
        let p = InverseProblem::parse(&[field], &[], vec![1.0]).unwrap();
        let r = solve_inverse_problem(&p, InverseOptions::default(), 0.0, 1.0, 0.1);
        assert!(matches!(r, Err(Error::Unsupported(_))), "{field}: {r:?}");
    }
}

fn registry() -> AlgebraClassRegistry {
    AlgebraClassRegistry::new(vec![
        AlgebraClass {
            label: "commutative".into(),
            presentations: vec![AlgebraPresentation::commutative("commutative-m2", 2)],
        },
        AlgebraClass {
            label: "heisenberg".into(),
            presentations: vec![heisenberg()],
        },
    ])
    .unwrap()
}

fn dynamics(class: &str, slots: &[&[(&str, &str)]]) -> ClassDynamics {
    ClassDynamics {
        class: class.into(),
        symbols: slots
            .iter()
            .map(|s| s.iter().map(|(a, p)| SymbolTerm::parse(a, p).unwrap()).collect())
            .collect(),
    }
}

fn breaking(table: Vec<TransitionEntry>) -> TacticalRepDyn {
    TacticalRepDyn {
        registry: registry(),
        dynamics: vec![
            dynamics("commutative", &[&[("a[0]", "c1")], &[]]),
            dynamics("heisenberg", &[&[("a[0]", "c1")], &[], &[("a[0]", "c2")]]),
        ],
        constants: vec![unit(3, 1, 2), unit(3, 1, 3)],
        controls: ControlSchedule::parse(&["0.5*(1 + tanh(50*(t - 1.25)))"], &["u[0]"]).unwrap(),
        initial: vec![CMatrix::zeros(3, 3), unit(3, 2, 3)],
        initial_comment: CommentValue::labeled("commutative", vec![0.0]),
        rule: CommentRule::parse(&["theta[0]"]).unwrap(),
        dialect: vec![DialecticalObject {
            label: "delta".into(),
            table,
        }],
        tolerance: DEFAULT_TOLERANCE,
        max_iterations: DEFAULT_MAX_ITERATIONS,
        max_correction: DEFAULT_MAX_CORRECTION,
    }
}

fn to_heisenberg() -> TransitionEntry {
    TransitionEntry {
        from: "commutative".into(),
        trigger: Expr::parse("diag[0] > 0.5").unwrap(),
        to: "heisenberg".into(),
        eta_update: vec![Expr::parse("eta[0] + 1").unwrap()],
        embedding: vec!["x1x2 - x2x1".into()],
    }
}

const GRID: [f64; 6] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5];

#[test]
fn commutativity_breaking_triggers_one_transition() {
    let run = run_tactical_repdyn(&breaking(vec![to_heisenberg()]), &GRID, 1e-3).unwrap();
    assert_eq!(run.transitions.len(), 1);
    let ev = &run.transitions[0];
    assert_eq!((ev.from.as_str(), ev.to.as_str(), ev.window), ("commutative", "heisenberg", 3));
    assert!(ev.residual > DEFAULT_TOLERANCE);
    let k = run.trajectory.times.iter().position(|&t| t > ev.time).unwrap();
    assert!(run.trajectory.labels[k..].iter().all(|l| l == "heisenberg"));
    assert!(run.trajectory.labels[..k].iter().all(|l| l == "commutative"));
    assert!(run.trajectory.residuals[k..].iter().all(|&r| r < 1e-8));
    let last = run.trajectory.tuples.last().unwrap();
    assert_eq!(last.len(), 3);
    // X3 has grown along E13 since the transition.
    assert!(last[2][(0, 2)].re > 0.1);
    let classes: Vec<_> = run.comments.iter().map(|c| c.value.class.clone().unwrap()).collect();
    assert_eq!(classes, ["commutative", "commutative", "commutative", "heisenberg", "heisenberg", "heisenberg"]);
    assert_eq!(run.comments[3].value.values, vec![1.0]);
    assert_eq!(run.comments[5].value.values, vec![1.0]);
    let intervals = equivalence_partition(
        &run.trajectory.times,
        &run.trajectory.labels.iter().cloned().map(Some).collect::<Vec<_>>(),
    )
    .unwrap();
    assert_eq!(intervals.len(), 2);
}

#[test]
fn empty_table_strands_the_class() {
    match run_tactical_repdyn(&breaking(vec![]), &GRID, 1e-3) {
        Err(Error::Stranded { class, window }) => assert_eq!((class.as_str(), window), ("commutative", 3)),
        other => panic!("expected stranded, got {:?}", other.map(|r| r.transitions)),
    }
}

#[test]
fn tangent_dynamics_never_transition() {
    let mut cfg = breaking(vec![to_heisenberg()]);
    cfg.dynamics[0] = dynamics("commutative", &[&[("a[0]", "x2")], &[("1", "x1")]]);
    cfg.initial = vec![diag(&[1.0, 2.0, 3.0]), diag(&[0.5, 0.0, -1.0])];
    let run = run_tactical_repdyn(&cfg, &GRID, 1e-2).unwrap();
    assert!(run.transitions.is_empty());
    assert_eq!(run.windows.len(), GRID.len() - 1);
    assert_eq!(run.comments.len(), GRID.len());
    assert!(run.windows.iter().all(|w| w.cell_label.as_deref() == Some("commutative")));
}

#[test]
fn class_stream_is_causal() {
    let cfg = breaking(vec![to_heisenberg()]);
    let a = run_tactical_repdyn(&cfg, &GRID, 1e-3).unwrap();
    let b = run_tactical_repdyn(&cfg, &[0.0, 0.5, 1.0, 1.5, 1.7, 3.0], 1e-3).unwrap();
    assert_eq!(a.comments[..4], b.comments[..4]);
    assert_eq!(a.windows[..3], b.windows[..3]);
}

#[test]
fn transition_table_validation() {
    let mut bad = to_heisenberg();
    bad.embedding.clear();
    assert!(run_tactical_repdyn(&breaking(vec![bad]), &GRID, 1e-3).is_err());
    let mut bad = to_heisenberg();
    bad.to = "sl2".into();
    assert!(run_tactical_repdyn(&breaking(vec![bad]), &GRID, 1e-3).is_err());
    let mut cfg = breaking(vec![]);
    cfg.initial_comment = CommentValue::vector(vec![0.0]);
    assert!(run_tactical_repdyn(&cfg, &GRID, 1e-3).is_err());
}

fn letter() -> impl Strategy<Value = Letter> {
    (0usize..3).prop_map(Letter::X)
}

fn complex_matrix(n: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n)
        .prop_map(move |v| CMatrix::from_iterator(n, n, v.into_iter().map(|(re, im)| Complex64::new(re, im))))
}

proptest! {
    #[test]
    fn weyl_is_permutation_invariant(
        xs in prop::collection::vec(complex_matrix(3), 3),
        (word, shuffled) in prop::collection::vec(letter(), 1..=3)
            .prop_flat_map(|w| (Just(w.clone()), Just(w).prop_shuffle())),
    ) {
        prop_assert_eq!(weyl_word(&word, &xs, &[], 3), weyl_word(&shuffled, &xs, &[], 3));
    }

    #[test]
    fn weyl_collapses_on_commuting_tuples(
        d in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 3),
        word in prop::collection::vec(letter(), 1..=3),
    ) {
        let xs: Vec<CMatrix> = d.iter().map(|v| diag(v)).collect();
        let got = weyl_word(&word, &xs, &[], 3);
        let plain = word_product(&word, &xs, &[], 3);
        prop_assert!(max_abs(&(got - plain)) < 1e-12);
    }

    #[test]
    fn zero_tolerance_admits_exactly_the_representations(scale in -1.0f64..1.0) {
        let mut xs = heisenberg_triple();
        xs[2] += unit(3, 1, 2) * c(scale);
        let ok = admissible_check(&heisenberg(), &xs, 0.0).unwrap();
        let all_zero = heisenberg()
            .relations
            .iter()
            .all(|r| relation_value(r, &xs, 3).iter().all(|z| *z == c(0.0)));
        prop_assert_eq!(ok, all_zero);
        prop_assert_eq!(ok, scale == 0.0);
    }

    #[test]
    fn projection_contract_holds_on_recorded_residuals(amp in 0.0f64..2.0) {
        let spec = spec_with(
            heisenberg(),
            heisenberg_triple(),
            &[&[("a[0]", "x1 + x2")], &[("a[0]", "x2 - x1")], &[("a[0]", "2 x3"), ("1e-6", "x1")]],
            &[&format!("{amp}*sin(t)")],
            &["u[0]"],
        );
        if let Ok(traj) = integrate_repdyn(&spec, 0.0, 0.5, 0.01) {
            prop_assert!(traj.residuals.iter().all(|&r| r <= DEFAULT_TOLERANCE));
        }
    }
}
