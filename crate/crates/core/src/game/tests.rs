use super::*;

/// Plain scalar RK4, independent of the engine, used as a reference.
fn rk4_scalar(f: impl Fn(f64, f64) -> f64, x0: f64, t0: f64, t1: f64, dt: f64) -> Vec<(f64, f64)> {
    let n = ((t1 - t0) / dt).round() as usize;
    let mut out = vec![(t0, x0)];
    let mut x = x0;
    for k in 0..n {
        let t = t0 + k as f64 * dt;
        let k1 = f(t, x);
        let k2 = f(t + dt / 2.0, x + dt / 2.0 * k1);
        let k3 = f(t + dt / 2.0, x + dt / 2.0 * k2);
        let k4 = f(t + dt, x + dt * k3);
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push((t0 + (k + 1) as f64 * dt, x));
    }
    out
}

fn linear_decay() -> InteractiveSystem {
    InteractiveSystem::new(vec![1.0], &["u[0]"])
        .unwrap()
        .with_player(Player::forward(&["0"], &["u0[0] + eps[0] * phi[0]"], &["-1"]).unwrap())
}

fn logistic(eps: &str) -> InteractiveSystem {
    InteractiveSystem::new(vec![0.1], &["u[0] * phi[0] * (1 - phi[0])"])
        .unwrap()
        .with_player(Player::forward(&["1"], &["u0[0] + eps[0]"], &[eps]).unwrap())
}

#[test]
fn zero_field_keeps_state_constant() {
    let sys = InteractiveSystem::new(vec![0.3, -2.0], &["0", "0"])
        .unwrap()
        .with_player(Player::forward(&["sin(t)"], &["u0[0] * eps[0]"], &["phi[0]"]).unwrap());
    let run = simulate(&sys, None, 0.0, 2.0, 0.1).unwrap();
    assert_eq!(run.len(), 21);
    assert!(run.phi.iter().all(|p| p == &vec![0.3, -2.0]));
    assert_eq!(run.times[20], 2.0);
}

#[test]
fn linear_decay_matches_closed_form() {
    let run = simulate(&linear_decay(), None, 0.0, 1.0, 1e-3).unwrap();
    assert_eq!(run.len(), 1001);
    let worst = run
        .times
        .iter()
        .zip(&run.phi)
        .map(|(t, p)| (p[0] - (-t).exp()).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
    // u = u° + εφ is recorded alongside the state
    let last = run.len() - 1;
    assert_eq!(run.u[last][0], -run.phi[last][0]);
    assert_eq!(run.eps[last][0], -1.0);
}

#[test]
fn logistic_matches_fine_step_reference() {
    let run = simulate(&logistic("0"), None, 0.0, 5.0, 1e-3).unwrap();
    let reference = rk4_scalar(|_, x| x * (1.0 - x), 0.1, 0.0, 5.0, 1e-5);
    for (k, (t, p)) in run.times.iter().zip(&run.phi).enumerate().step_by(100) {
        let (tr, xr) = reference[k * 100];
        assert!((tr - t).abs() < 1e-9);
        assert!((xr - p[0]).abs() < 1e-7, "t={t}: {} vs {xr}", p[0]);
    }
}

#[test]
fn non_divisible_interval_shortens_last_step() {
    let run = simulate(&linear_decay(), None, 0.0, 1.05, 0.1).unwrap();
    assert_eq!(run.len(), 12);
    assert_eq!(*run.times.last().unwrap(), 1.05);
    assert!((run.phi.last().unwrap()[0] - (-1.05f64).exp()).abs() < 1e-6);
}

#[test]
fn bad_interval_and_step_are_rejected() {
    let sys = linear_decay();
    assert!(matches!(simulate(&sys, None, 1.0, 1.0, 0.1), Err(Error::Config(_))));
    assert!(matches!(simulate(&sys, None, 0.0, 1.0, 0.0), Err(Error::Config(_))));
    assert!(matches!(simulate(&sys, None, 0.0, 1.0, -0.1), Err(Error::Config(_))));
}

#[test]
fn divergence_reports_last_valid_time() {
    let sys = InteractiveSystem::new(vec![1.0], &["phi[0] ^ 2 * 1e3"]).unwrap();
    match simulate(&sys, None, 0.0, 1.0, 0.01) {
        Err(Error::Divergence { last_valid_time }) => assert!(last_valid_time < 1.0),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn estimated_epsilon_is_rejected() {
    let mut sys = linear_decay();
    sys.players[0].epsilon.ground_truth = false;
    assert!(matches!(simulate(&sys, None, 0.0, 1.0, 0.1), Err(Error::Config(_))));
}

#[test]
fn derivative_feedback_uses_field_substitution() {
    // u = u° + ε·φ̇ with Φ = u: the substituted φ̇ is Φ evaluated with φ̇ = 0,
    // i.e. u°, so u = (1 + ε) u°.
    let sys = InteractiveSystem::new(vec![0.0], &["u[0]"])
        .unwrap()
        .with_player(Player::forward(&["1"], &["u0[0] + eps[0] * dphi[0]"], &["0.5"]).unwrap());
    assert_eq!(sys.derivative_order(), 1);
    let run = simulate(&sys, None, 0.0, 1.0, 0.1).unwrap();
    assert!((run.phi.last().unwrap()[0] - 1.5).abs() < 1e-12);
    assert!(run.dphi.is_some());
    assert!(matches!(associated_ordinary_game(&sys), Err(Error::Unsupported(_))));

    let mut deep = sys.clone();
    deep.players[0].coupling.derivative_order = 2;
    assert!(matches!(simulate(&deep, None, 0.0, 1.0, 0.1), Err(Error::Config(_))));
}

#[test]
fn inverse_coupling_records_pure_control() {
    let sys = InteractiveSystem::new(vec![1.0], &["u[0]"]).unwrap().with_player(Player {
        policy: PureControlPolicy {
            player: 0,
            signal: Signal::parse(&["-1"]).unwrap(),
            description: "interactive control given directly".into(),
        },
        coupling: FeedbackCoupling::inverse(&["u[0] - eps[0] * phi[0]"]).unwrap(),
        epsilon: EpsilonProcess::law(&["2"]).unwrap(),
    });
    let run = simulate(&sys, None, 0.0, 1.0, 0.1).unwrap();
    for k in 0..run.len() {
        assert_eq!(run.u[k][0], -1.0);
        assert_eq!(run.u0[k][0], -1.0 - 2.0 * run.phi[k][0]);
    }
    assert!((run.phi.last().unwrap()[0]).abs() < 1e-12);
}

#[test]
fn slow_control_continuous_and_discrete() {
    let sys = InteractiveSystem::new(vec![0.0], &["lambda[0]"]).unwrap().with_lambda_dim(1);
    let cont = SlowControl {
        schedule: Schedule::Continuous(vec![Expr::parse("2 * t").unwrap()]),
        owner: Owner::External,
    };
    let run = simulate(&sys, Some(&cont), 0.0, 1.0, 0.01).unwrap();
    assert!((run.phi.last().unwrap()[0] - 1.0).abs() < 1e-12);

    let disc = SlowControl {
        schedule: Schedule::Discrete(vec![(0, vec![1.0]), (50, vec![3.0])]),
        owner: Owner::Player(1),
    };
    let run = simulate(&sys, Some(&disc), 0.0, 1.0, 0.01).unwrap();
    assert!((run.phi.last().unwrap()[0] - 2.0).abs() < 1e-12);
    assert_eq!(run.lambda[49][0], 1.0);
    assert_eq!(run.lambda[50][0], 3.0);

    let bad = SlowControl {
        schedule: Schedule::Discrete(vec![(0, vec![1.0]), (0, vec![3.0])]),
        owner: Owner::External,
    };
    assert!(simulate(&sys, Some(&bad), 0.0, 1.0, 0.01).is_err());
    // dimension mismatch between schedule and system
    let sys0 = InteractiveSystem::new(vec![0.0], &["0"]).unwrap();
    assert!(simulate(&sys0, Some(&cont), 0.0, 1.0, 0.01).is_err());
}

#[test]
fn ordinary_game_replays_linear_run() {
    let sys = linear_decay();
    let run = simulate(&sys, None, 0.0, 2.0, 1e-3).unwrap();
    let ordinary = associated_ordinary_game(&sys).unwrap().replay_epsilon(&run).unwrap();
    let replay = simulate(&ordinary, None, 0.0, 2.0, 1e-3).unwrap();
    assert!(run.max_state_deviation(&replay) <= 1e-12);

    // the constant ε fed as an ordinary control signal
    let ordinary = associated_ordinary_game(&sys)
        .unwrap()
        .with_epsilon_signal(1, Signal::parse(&["-1"]).unwrap())
        .unwrap();
    let replay = simulate(&ordinary, None, 0.0, 2.0, 1e-3).unwrap();
    assert!(run.max_state_deviation(&replay) <= 1e-12);
}

#[test]
fn ordinary_game_doubles_control_slots() {
    let sys = InteractiveSystem::new(vec![0.0], &["u[0] + u[1]"])
        .unwrap()
        .with_player(Player::forward(&["1"], &["u0[0] * eps[0]"], &["1"]).unwrap())
        .with_player(Player::forward(&["2"], &["u0[0] * eps[0]"], &["1"]).unwrap());
    assert_eq!(sys.control_slots(), 2);
    assert_eq!(associated_ordinary_game(&sys).unwrap().control_slots(), 4);
}

#[test]
fn ordinary_game_replays_state_dependent_epsilon() {
    // ε depends on the state, so replay must use the per-stage record
    let sys = logistic("sin(t) + 0.3 * phi[0]");
    let run = simulate(&sys, None, 0.0, 5.0, 1e-2).unwrap();
    let replay = simulate(
        &associated_ordinary_game(&sys).unwrap().replay_epsilon(&run).unwrap(),
        None,
        0.0,
        5.0,
        1e-2,
    )
    .unwrap();
    assert!(run.max_state_deviation(&replay) <= 1e-12);
    // a replay on a different grid cannot look up its stages
    let err = simulate(
        &associated_ordinary_game(&sys).unwrap().replay_epsilon(&run).unwrap(),
        None,
        0.0,
        6.0,
        1e-2,
    );
    assert!(matches!(err, Err(Error::Data(_))));
}

#[test]
fn invariant_drift_identity_and_non_conserved() {
    let run = simulate(&linear_decay(), None, 0.0, 1.0, 1e-2).unwrap();
    let identity = Expr::parse("u[0] - u0[0] - eps[0] * phi[0]").unwrap();
    let product = Expr::parse("u[0] * u0[0] + u[0]").unwrap();
    let drift = check_indeterminate_invariants(&run, &[identity, product], 1e-10).unwrap();
    assert!(drift[0].max_drift <= 1e-10 && !drift[0].violated);
    assert!(drift[1].max_drift > 0.1 && drift[1].violated);
    let bad = Expr::parse("dphi[0]").unwrap();
    assert!(matches!(
        check_indeterminate_invariants(&run, &[bad], 1e-10),
        Err(Error::Config(_))
    ));
}

#[test]
fn rotation_conserves_radius() {
    let sys = InteractiveSystem::new(vec![1.0, 0.0], &["-u[0] * phi[1]", "u[0] * phi[0]"])
        .unwrap()
        .with_player(Player::forward(&["1 + 0.5 * sin(t)"], &["u0[0] + eps[0] * phi[0]"], &["0.2"]).unwrap());
    let run = simulate(&sys, None, 0.0, 10.0, 1e-3).unwrap();
    let f = Expr::parse("phi[0]^2 + phi[1]^2").unwrap();
    let drift = check_indeterminate_invariants(&run, &[f], 1e-6).unwrap();
    assert!(drift[0].max_drift < 1e-6, "{}", drift[0].max_drift);
}

#[test]
fn singleton_coalitions_equal_player_run() {
    let base = InteractiveSystem::new(vec![0.5, 1.0], &["u[0] - phi[1]", "u[1] * phi[0]"])
        .unwrap()
        .with_player(Player::forward(&["cos(t)"], &["u0[0] + eps[0] * phi[0]"], &["-0.5"]).unwrap())
        .with_player(Player::forward(&["0.2"], &["u0[0] * (1 + eps[0])"], &["phi[1]"]).unwrap());
    let coalitions = base
        .clone()
        .with_coalition(vec![1], &["u0[0] + eps[0] * phi[0]"])
        .unwrap()
        .with_coalition(vec![2], &["u0[0] * (1 + eps[0])"])
        .unwrap();
    let a = simulate(&base, None, 0.0, 3.0, 1e-2).unwrap();
    let b = coalition_simulate(&coalitions, None, 0.0, 3.0, 1e-2).unwrap();
    assert_eq!(a.phi, b.phi);
}

#[test]
fn grand_coalition_equals_summed_signal() {
    let two = InteractiveSystem::new(vec![0.0], &["u[0] - phi[0]"])
        .unwrap()
        .with_player(Player::forward(&["sin(t)"], &["u0[0]"], &["0"]).unwrap())
        .with_player(Player::forward(&["0.5"], &["u0[0]"], &["0"]).unwrap())
        .with_coalition(vec![1, 2], &["u0[0] + u0[1]"])
        .unwrap();
    let one = InteractiveSystem::new(vec![0.0], &["u[0] - phi[0]"])
        .unwrap()
        .with_player(Player::forward(&["sin(t) + 0.5"], &["u0[0]"], &["0"]).unwrap());
    let a = coalition_simulate(&two, None, 0.0, 4.0, 1e-2).unwrap();
    let b = simulate(&one, None, 0.0, 4.0, 1e-2).unwrap();
    assert!(a.max_state_deviation(&b) < 1e-14);
}

#[test]
fn overlapping_coalitions_match_direct_integration() {
    let sys = InteractiveSystem::new(vec![0.0, 0.0], &["u[0]", "u[1]"])
        .unwrap()
        .with_player(Player::forward(&["cos(t)"], &["u0[0]"], &["0"]).unwrap())
        .with_player(Player::forward(&["t"], &["u0[0]"], &["0"]).unwrap())
        .with_player(Player::forward(&["2"], &["u0[0]"], &["0"]).unwrap())
        .with_coalition(vec![1, 2], &["u0[0] + u0[1]"])
        .unwrap()
        .with_coalition(vec![2, 3], &["u0[0] * u0[1]"])
        .unwrap();
    let run = coalition_simulate(&sys, None, 0.0, 2.0, 1e-2).unwrap();
    let first = rk4_scalar(|t, _| t.cos() + t, 0.0, 0.0, 2.0, 1e-2);
    let second = rk4_scalar(|t, _| 2.0 * t, 0.0, 0.0, 2.0, 1e-2);
    for k in 0..run.len() {
        assert!((run.phi[k][0] - first[k].1).abs() < 1e-12);
        assert!((run.phi[k][1] - second[k].1).abs() < 1e-12);
    }
}

#[test]
fn coalition_member_out_of_range_is_a_config_error() {
    let sys = linear_decay().with_coalition(vec![1, 3], &["u0[0]"]).unwrap();
    assert!(matches!(coalition_simulate(&sys, None, 0.0, 1.0, 0.1), Err(Error::Config(_))));
    assert!(matches!(coalition_simulate(&linear_decay(), None, 0.0, 1.0, 0.1), Err(Error::Config(_))));
}

#[test]
fn runs_are_bit_identical() {
    let sys = logistic("0.1 * sin(3 * t) * phi[0]");
    let a = simulate(&sys, None, 0.0, 3.0, 1e-3).unwrap();
    let b = simulate(&sys, None, 0.0, 3.0, 1e-3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn step_halving_shows_fourth_order() {
    let sys = logistic("0.5 * cos(t)");
    let reference = simulate(&sys, None, 0.0, 4.0, 0.1 / 16.0).unwrap();
    let err = |dt: f64| {
        let run = simulate(&sys, None, 0.0, 4.0, dt).unwrap();
        (run.phi.last().unwrap()[0] - reference.phi.last().unwrap()[0]).abs()
    };
    let (e1, e2, e3) = (err(0.4), err(0.2), err(0.1));
    for ratio in [e1 / e2, e2 / e3] {
        assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
    }
}
