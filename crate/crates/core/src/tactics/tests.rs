use super::*;
use crate::game::{simulate, Player, Schedule, SlowControl, Owner};
use crate::verbalization::WindowFunctional;

/// `φ' = −λφ + u`, `u = u° + ε`, ω = mean of φ, v = integral of u.
fn decay_game(lambda0: f64, rule: &[&str], eps: &str) -> CommentedGame {
    let system = InteractiveSystem::new(vec![1.0], &["-lambda[0]*phi[0] + u[0]"])
        .unwrap()
        .with_player(Player::forward(&["0"], &["u0[0] + eps[0]"], &[eps]).unwrap())
        .with_lambda_dim(1);
    CommentedGame {
        system,
        verbalization: Verbalization {
            omega: vec![WindowFunctional::mean("phi[0]").unwrap()],
            v: vec![WindowFunctional::integral("u[0]").unwrap()],
            complex: None,
        },
        space: CommentSpace::Vector(1),
        rule: CommentRule::parse(rule).unwrap(),
        initial: CommentValue::vector(vec![lambda0]),
        dialect: vec![],
    }
}

fn thetas(run: &CommentedRun) -> Vec<f64> {
    run.comments.iter().map(|c| c.value.values[0]).collect()
}

fn unit_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|k| k as f64).collect()
}

#[test]
fn frozen_comment_equals_a_constant_parameter_run() {
    let game = decay_game(0.7, &["theta[0]"], "0.1*sin(t)");
    let run = run_commented_game(&game, &unit_grid(3), 0.125).unwrap();
    let slow = SlowControl {
        schedule: Schedule::Continuous(vec![Expr::constant(0.7)]),
        owner: Owner::External,
    };
    let plain = simulate(&game.system, Some(&slow), 0.0, 3.0, 0.125).unwrap();
    assert_eq!(run.trajectory.times, plain.times);
    assert_eq!(run.trajectory.phi, plain.phi);
    assert!(thetas(&run).iter().all(|&x| x == 0.7));
}

#[test]
fn accumulating_comment_is_an_arithmetic_progression() {
    let mut game = decay_game(0.0, &["theta[0] + omega[0]"], "1");
    game.verbalization.omega = vec![WindowFunctional::mean("eps[0]").unwrap()];
    let run = run_commented_game(&game, &unit_grid(5), 0.1).unwrap();
    for (n, th) in thetas(&run).iter().enumerate() {
        assert!((th - n as f64).abs() < 1e-12);
    }
    assert_eq!(run.windows.len(), 5);
}

#[test]
fn gain_scheduling_matches_window_by_window_closed_form() {
    let game = decay_game(1.0, &["theta[0] + (omega[0] > 0.5)"], "0");
    let run = run_commented_game(&game, &[0.0, 0.5, 1.0, 1.5, 2.0, 2.5], 1e-3).unwrap();
    let (mut phi, mut theta) = (1.0f64, 1.0f64);
    for (n, w) in run.windows.iter().enumerate() {
        let len = w.t_end - w.t_start;
        let mean = phi * (1.0 - (-theta * len).exp()) / (theta * len);
        assert!((w.omega[0] - mean).abs() < 1e-9, "window {}", n + 1);
        phi *= (-theta * len).exp();
        theta += if mean > 0.5 { 1.0 } else { 0.0 };
        assert_eq!(run.comments[n + 1].value.values[0], theta);
        let k = run.trajectory.index_of(w.t_end).unwrap();
        assert!((run.trajectory.phi[k][0] - phi).abs() < 1e-9);
    }
    // The schedule must actually switch somewhere for the check to bite.
    assert!(thetas(&run).windows(2).any(|w| w[1] != w[0]));
    assert!(thetas(&run).windows(2).any(|w| w[1] == w[0]));
}

#[test]
fn comment_space_mismatch_is_a_config_error() {
    let mut game = decay_game(1.0, &["theta[0]"], "0");
    game.initial = CommentValue::vector(vec![1.0, 2.0]);
    game.space = CommentSpace::Vector(2);
    assert!(matches!(run_commented_game(&game, &unit_grid(2), 0.1), Err(Error::Config(_))));
}

#[test]
fn zero_interaction_equals_uncoupled_runs() {
    let g1 = decay_game(0.5, &["0.9*theta[0] + omega[0]"], "0.1*cos(t)");
    let g2 = decay_game(1.5, &["theta[0] - 0.1*v[0]"], "0.2");
    let grid = unit_grid(4);
    let (a, b) = tactical_interaction(&g1, &g2, &InteractionTerm::zero(1), &InteractionTerm::zero(1), &grid, 0.05).unwrap();
    let a0 = run_commented_game(&g1, &grid, 0.05).unwrap();
    let b0 = run_commented_game(&g2, &grid, 0.05).unwrap();
    assert_eq!(a.comments, a0.comments);
    assert_eq!(b.comments, b0.comments);
    assert_eq!(a.trajectory, a0.trajectory);
}

#[test]
fn pure_exchange_swaps_comments() {
    let g1 = decay_game(1.0, &["0"], "0");
    let g2 = decay_game(2.0, &["0"], "0");
    let t = InteractionTerm::parse(&["other[0]"]).unwrap();
    let (a, b) = tactical_interaction(&g1, &g2, &t, &t, &unit_grid(4), 0.1).unwrap();
    assert_eq!(thetas(&a), vec![1.0, 2.0, 1.0, 2.0, 1.0]);
    assert_eq!(thetas(&b), vec![2.0, 1.0, 2.0, 1.0, 2.0]);
}

#[test]
fn linear_interaction_matches_matrix_powers() {
    let m = [[0.6, 0.3], [-0.2, 0.9]];
    let g1 = decay_game(1.0, &["0.6*theta[0]"], "0");
    let g2 = decay_game(-0.5, &["0.9*theta[0]"], "0");
    let t12 = InteractionTerm::parse(&["0.3*other[0]"]).unwrap();
    let t21 = InteractionTerm::parse(&["-0.2*other[0]"]).unwrap();
    let (a, b) = tactical_interaction(&g1, &g2, &t12, &t21, &unit_grid(6), 0.1).unwrap();
    let mut power = [[1.0, 0.0], [0.0, 1.0]];
    for n in 0..=6 {
        let x = power[0][0] * 1.0 + power[0][1] * -0.5;
        let y = power[1][0] * 1.0 + power[1][1] * -0.5;
        assert!((a.comments[n].value.values[0] - x).abs() < 1e-12);
        assert!((b.comments[n].value.values[0] - y).abs() < 1e-12);
        let mut next = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                next[i][j] = (0..2).map(|k| m[i][k] * power[k][j]).sum();
            }
        }
        power = next;
    }
}

#[test]
fn mismatched_interaction_dimension_is_rejected() {
    let g = decay_game(1.0, &["theta[0]"], "0");
    let bad = InteractionTerm::parse(&["other[0]", "0"]).unwrap();
    let err = tactical_interaction(&g, &g, &bad, &InteractionTerm::zero(1), &unit_grid(2), 0.1);
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn own_mask_synthesis_equals_independent_runs() {
    let g1 = decay_game(0.5, &["0.9*theta[0] + omega[0]"], "0.1*cos(t)");
    let g2 = decay_game(1.5, &["theta[0] - 0.1*v[0]"], "0.2");
    let rule = SynthesisRule::parse(
        &[&["0.9*theta1[0] + omega1[0]"], &["theta2[0] - 0.1*v2[0]"]],
        vec![vec![1], vec![2]],
    )
    .unwrap();
    let grid = unit_grid(3);
    let runs = tactical_synthesis(&[&g1, &g2], &rule, &grid, 0.05).unwrap();
    assert_eq!(runs[0].comments, run_commented_game(&g1, &grid, 0.05).unwrap().comments);
    assert_eq!(runs[1].comments, run_commented_game(&g2, &grid, 0.05).unwrap().comments);
}

#[test]
fn interaction_is_a_synthesis() {
    let g1 = decay_game(0.5, &["0.9*theta[0] + omega[0]"], "0.1*cos(t)");
    let g2 = decay_game(1.5, &["theta[0] - 0.1*v[0]"], "0.2");
    let t12 = InteractionTerm::parse(&["0.05*other[0]*omega[0]"]).unwrap();
    let t21 = InteractionTerm::parse(&["sin(other[0]) - theta[0]*v[0]"]).unwrap();
    let grid = unit_grid(4);
    let (a, b) = tactical_interaction(&g1, &g2, &t12, &t21, &grid, 0.05).unwrap();
    let rule = SynthesisRule::from_interaction(&g1.rule, &g2.rule, &t12, &t21);
    let runs = tactical_synthesis(&[&g1, &g2], &rule, &grid, 0.05).unwrap();
    assert_eq!(runs[0].comments, a.comments);
    assert_eq!(runs[1].comments, b.comments);
}

#[test]
fn hierarchical_synthesis_matches_forward_evaluation() {
    let g1 = decay_game(0.5, &["theta[0]"], "0");
    let g2 = decay_game(1.0, &["theta[0]"], "0.3");
    let g3 = decay_game(0.0, &["theta[0]"], "0");
    let rule = SynthesisRule::parse(
        &[&["theta1[0] + 0.1"], &["0.5*theta2[0]"], &["omega1[0] + omega2[0] + theta3[0]*theta1[0]"]],
        vec![vec![1], vec![2], vec![1, 2, 3]],
    )
    .unwrap();
    let grid = unit_grid(4);
    let runs = tactical_synthesis(&[&g1, &g2, &g3], &rule, &grid, 0.05).unwrap();
    for n in 1..=4 {
        let th1 = runs[0].comments[n - 1].value.values[0];
        let th3 = runs[2].comments[n - 1].value.values[0];
        let expected = runs[0].windows[n - 1].omega[0] + runs[1].windows[n - 1].omega[0] + th3 * th1;
        assert_eq!(runs[2].comments[n].value.values[0], expected);
    }
}

#[test]
fn mask_outside_the_game_set_is_rejected() {
    let g = decay_game(0.5, &["theta[0]"], "0");
    let rule = SynthesisRule::parse(&[&["theta1[0]"], &["theta2[0]"]], vec![vec![1], vec![3]]).unwrap();
    assert!(matches!(tactical_synthesis(&[&g, &g], &rule, &unit_grid(2), 0.1), Err(Error::Config(_))));
    let rule = SynthesisRule::parse(&[&["theta1[0]"], &["theta1[0]"]], vec![vec![1], vec![2]]).unwrap();
    assert!(matches!(tactical_synthesis(&[&g, &g], &rule, &unit_grid(2), 0.1), Err(Error::Expr(_))));
}

fn two_game_dims() -> Vec<[usize; 3]> {
    vec![[1, 1, 1], [1, 1, 1]]
}

#[test]
fn literal_copy_is_an_extension() {
    let original = CommentRule::parse(&["theta[0] + omega[0]*v[0]"]).unwrap();
    let rule = SynthesisRule::parse(&[&["theta1[0] + omega1[0]*v1[0]"], &["theta2[0]"]], vec![vec![1], vec![2]]).unwrap();
    let check = is_tactical_extension(&rule, &original, &default_probes(&two_game_dims(), 7)).unwrap();
    assert!(check.holds);
    assert_eq!(check.probes_checked, 3usize.pow(6) + 32);
}

#[test]
fn small_cross_term_breaks_the_extension() {
    let original = CommentRule::parse(&["theta[0] + omega[0]"]).unwrap();
    let rule = SynthesisRule::parse(
        &[&["theta1[0] + omega1[0] + 0.001*theta2[0]"], &["theta2[0]"]],
        vec![vec![1, 2], vec![2]],
    )
    .unwrap();
    let check = is_tactical_extension(&rule, &original, &default_probes(&two_game_dims(), 7)).unwrap();
    assert!(!check.holds);
    assert_ne!(check.witness.unwrap().games[1][0][0], 0.0);
}

#[test]
fn zero_weighted_cross_term_is_an_extension() {
    let original = CommentRule::parse(&["theta[0] + omega[0]"]).unwrap();
    let rule = SynthesisRule::parse(
        &[&["theta1[0] + omega1[0] + 0*theta2[0]"], &["theta2[0]"]],
        vec![vec![1, 2], vec![2]],
    )
    .unwrap();
    assert!(is_tactical_extension(&rule, &original, &default_probes(&two_game_dims(), 7)).unwrap().holds);
}

#[test]
fn large_argument_sets_use_unit_probes() {
    let probes = default_probes(&[[3, 3, 3]], 1);
    assert_eq!(probes.len(), 1 + 2 * 9 + 32);
    assert_eq!(probes, default_probes(&[[3, 3, 3]], 1));
}

fn labeled_game(dialect: Vec<DialecticalObject>) -> CommentedGame {
    let mut game = decay_game(1.0, &["theta[0] + 0.5"], "0");
    game.space = CommentSpace::Labeled {
        classes: vec!["calm".into(), "alert".into()],
        eta_dim: 1,
    };
    game.initial = CommentValue::labeled("calm", vec![1.0]);
    game.dialect = dialect;
    game
}

fn escalate(label: &str, threshold: f64) -> DialecticalObject {
    DialecticalObject {
        label: label.into(),
        table: vec![TransitionEntry {
            from: "calm".into(),
            trigger: Expr::parse(&format!("eta[0] >= {threshold}")).unwrap(),
            to: "alert".into(),
            eta_update: vec![Expr::parse("10*eta[0]").unwrap()],
            embedding: vec![],
        }],
    }
}

#[test]
fn dialectical_transition_changes_class_and_eta() {
    let game = labeled_game(vec![escalate("d", 2.0)]);
    let run = run_commented_game(&game, &unit_grid(4), 0.1).unwrap();
    let classes: Vec<_> = run.comments.iter().map(|c| c.value.class.clone().unwrap()).collect();
    assert_eq!(classes, ["calm", "calm", "calm", "alert", "alert"]);
    let eta: Vec<f64> = thetas(&run);
    assert_eq!(eta, vec![1.0, 1.5, 2.0, 20.0, 20.5]);
    assert!(run.comments[1..].iter().all(|c| c.delta_label.as_deref() == Some("d")));
}

#[test]
fn short_dialect_stream_repeats_its_last_object() {
    let game = labeled_game(vec![escalate("strict", 100.0), escalate("loose", 0.0)]);
    let run = run_commented_game(&game, &unit_grid(3), 0.1).unwrap();
    let labels: Vec<_> = run.comments[1..].iter().map(|c| c.delta_label.clone().unwrap()).collect();
    assert_eq!(labels, ["strict", "loose", "loose"]);
    assert_eq!(run.comments[2].value.class.as_deref(), Some("alert"));
}

#[test]
fn unregistered_class_in_a_table_is_rejected() {
    let mut d = escalate("d", 2.0);
    d.table[0].to = "panic".into();
    assert!(matches!(
        run_commented_game(&labeled_game(vec![d]), &unit_grid(2), 0.1),
        Err(Error::Config(_))
    ));
}

#[test]
fn repeated_table_key_is_rejected() {
    let mut d = escalate("d", 2.0);
    d.table.push(d.table[0].clone());
    assert!(matches!(
        run_commented_game(&labeled_game(vec![d]), &unit_grid(2), 0.1),
        Err(Error::Config(_))
    ));
}

#[test]
fn comment_records_split_vector_and_labeled_values() {
    let v = CommentRecord::from(&CommentState {
        n: 2,
        value: CommentValue::vector(vec![1.5]),
        delta_label: None,
    });
    assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"n":2,"theta":[1.5]}"#);
    let l = CommentRecord::from(&CommentState {
        n: 3,
        value: CommentValue::labeled("calm", vec![0.25]),
        delta_label: Some("d".into()),
    });
    assert_eq!(
        serde_json::to_string(&l).unwrap(),
        r#"{"n":3,"class_label":"calm","eta":[0.25],"delta_label":"d"}"#
    );
}
