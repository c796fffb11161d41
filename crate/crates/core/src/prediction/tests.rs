use std::f64::consts::PI;

use super::*;
use crate::game::{simulate, Player};

fn integrator(policy: &str, coupling: &str, eps: &str) -> InteractiveSystem {
    InteractiveSystem::new(vec![0.5], &["u[0]"])
        .unwrap()
        .with_player(Player::forward(&[policy], &[coupling], &[eps]).unwrap())
}

#[test]
fn true_policies_reproduce_the_run() {
    let sys = InteractiveSystem::new(vec![1.0], &["-phi[0] + u[0]"])
        .unwrap()
        .with_player(Player::forward(&["sin(t)"], &["u0[0] + eps[0]*phi[0]"], &["0.3"]).unwrap());
    let truth = simulate(&sys, None, 0.0, 2.0, 0.01).unwrap();
    let p = predict(&sys, None, &truth, 0.5, 0.7, 0.01).unwrap();
    let k0 = truth.index_of(0.5).unwrap();
    for (j, phi) in p.trajectory.phi.iter().enumerate() {
        assert!((phi[0] - truth.phi[k0 + j][0]).abs() < 1e-12);
    }
    assert!((p.trajectory.times.last().unwrap() - 1.2).abs() < 1e-12);
}

#[test]
fn wrong_constant_control_deviates_linearly() {
    let truth_sys = integrator("1", "u0[0]", "0");
    let truth = simulate(&truth_sys, None, 0.0, 1.0, 0.01).unwrap();
    let assumed = with_assumed_policies(&truth_sys, &[(1, Signal::parse(&["0"]).unwrap())]).unwrap();
    let p = predict(&assumed, None, &truth, 0.2, 0.3, 0.01).unwrap();
    assert!(p.trajectory.phi.iter().all(|x| x[0] == truth.phi[20][0]));
    let k = truth.index_of(0.5).unwrap();
    assert!((truth.phi[k][0] - p.trajectory.phi.last().unwrap()[0] - 0.3).abs() < 1e-12);
}

#[test]
fn horizon_outside_the_run_is_rejected() {
    let sys = integrator("1", "u0[0]", "0");
    let truth = simulate(&sys, None, 0.0, 1.0, 0.1).unwrap();
    assert!(matches!(predict(&sys, None, &truth, 0.5, 0.8, 0.1), Err(Error::Config(_))));
    assert!(matches!(predict(&sys, None, &truth, 0.5, 0.0, 0.1), Err(Error::Config(_))));
}

#[test]
fn control_error_of_order_h_gives_state_error_of_order_h_squared() {
    let sys = InteractiveSystem::new(vec![1.0], &["-phi[0]*phi[0] + u[0]"])
        .unwrap()
        .with_player(Player::forward(&["cos(t)"], &["u0[0]"], &[]).unwrap());
    let truth = simulate(&sys, None, 0.0, 1.0, 1.0 / 1280.0).unwrap();
    let hs = [0.1, 0.05, 0.025, 0.0125];
    let errors: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let assumed = with_assumed_policies(&sys, &[(1, Signal::parse(&[&format!("cos(t) + {h}")]).unwrap())]).unwrap();
            let p = predict(&assumed, None, &truth, 0.5, h, 1.0 / 1280.0).unwrap();
            let k = truth.index_of(0.5 + h).unwrap();
            (p.trajectory.phi.last().unwrap()[0] - truth.phi[k][0]).abs()
        })
        .collect();
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    assert!((slope - 2.0).abs() < 0.3, "slope {slope}");
}

#[test]
fn perfect_prediction_has_zero_deviation() {
    let sys = integrator("sin(t)", "u0[0] + 0.1*phi[0]", "0");
    let truth = simulate(&sys, None, 0.0, 1.0, 0.05).unwrap();
    let preds = rolling_predictions(&sys, None, &truth, 0.2, 0.05).unwrap();
    let data = interactivize_by_prediction(&truth, &preds, 0.2).unwrap();
    assert_eq!(data.records.len(), truth.len() - 4);
    for r in &data.records {
        assert!(r.deviation[0].abs() < 1e-12);
        assert!((r.phi[0] - r.phi_pred[0]).abs() < 1e-12);
    }
}

#[test]
fn induced_dataset_satisfies_the_constructed_relation() {
    let truth_sys = integrator("sin(t)", "u0[0] + 0.2*phi[0]", "0");
    let assumed = integrator("sin(t)", "u0[0]", "0");
    let truth = simulate(&truth_sys, None, 0.0, 1.0, 0.05).unwrap();
    let preds = rolling_predictions(&assumed, None, &truth, 0.1, 0.05).unwrap();
    let data = interactivize_by_prediction(&truth, &preds, 0.1).unwrap();
    for r in &data.records {
        assert!((r.u[0] - (r.u0_pred[0] + 0.2 * r.phi[0])).abs() < 1e-12);
    }
}

#[test]
fn missing_prediction_is_a_data_error() {
    let sys = integrator("1", "u0[0]", "0");
    let truth = simulate(&sys, None, 0.0, 1.0, 0.1).unwrap();
    let mut preds = rolling_predictions(&sys, None, &truth, 0.2, 0.1).unwrap();
    preds.remove(3);
    assert!(matches!(interactivize_by_prediction(&truth, &preds, 0.2), Err(Error::Data(_))));
}

#[test]
fn gain_gap_is_recovered_from_the_induced_dataset() {
    // Player 2 damps with gain 0.8; the predictor assumes 0.5.
    let make = |gain: f64| {
        InteractiveSystem::new(vec![1.0], &["u[0] + u[1]"])
            .unwrap()
            .with_player(Player::forward(&["cos(t)"], &["u0[0]"], &[]).unwrap())
            .with_player(Player::forward(&["0.3"], &[&format!("u0[0] - {gain}*phi[0]")], &[]).unwrap())
    };
    let truth = simulate(&make(0.8), None, 0.0, 3.0, 0.01).unwrap();
    let preds = rolling_predictions(&make(0.5), None, &truth, 0.1, 0.01).unwrap();
    let data = interactivize_by_prediction(&truth, &preds, 0.1).unwrap();
    // Rows: u0_pred[0..2], phi, phi_pred, dphi.
    let (rows, ys) = data.design(1).unwrap();
    let fam = FeedbackFamily::parse("x[1] + c[0]*x[2] + c[1]*x[3]", vec![0.0, 0.0]).unwrap();
    let est = fit_feedback(&fam, &rows, &ys).unwrap();
    // Independent least squares on deviation = a*phi + b*phi_pred.
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in &data.records {
        let (p, q, d) = (r.phi[0], r.phi_pred[0], r.deviation[1]);
        s11 += p * p;
        s12 += p * q;
        s22 += q * q;
        r1 += p * d;
        r2 += q * d;
    }
    let det = s11 * s22 - s12 * s12;
    let (a, b) = ((r1 * s22 - r2 * s12) / det, (s11 * r2 - s12 * r1) / det);
    assert!((est.coefficients[0] - a).abs() < 1e-6);
    assert!((est.coefficients[1] - b).abs() < 1e-6);
    assert!((a + 0.8).abs() < 1e-6 && (b - 0.5).abs() < 1e-6);
    let gap = est.coefficients[0] + est.coefficients[1];
    assert!((gap - (0.5 - 0.8)).abs() < 1e-6, "gap {gap}");
}

#[test]
fn nonlinear_family_is_fitted() {
    let rows: Vec<Vec<f64>> = (0..40).map(|k| vec![k as f64 * 0.05]).collect();
    let ys: Vec<f64> = rows.iter().map(|x| 1.5 * (-0.7 * x[0]).exp()).collect();
    let fam = FeedbackFamily::parse("c[0]*exp(c[1]*x[0])", vec![1.0, 0.0]).unwrap();
    let est = fit_feedback(&fam, &rows, &ys).unwrap();
    assert!((est.coefficients[0] - 1.5).abs() < 1e-8);
    assert!((est.coefficients[1] + 0.7).abs() < 1e-8);
    assert!(est.residual_norm < 1e-8);
}

#[test]
fn family_arity_must_match_the_data() {
    let fam = FeedbackFamily::parse("c[0]*x[3]", vec![1.0]).unwrap();
    assert!(matches!(fit_feedback(&fam, &[vec![1.0]], &[1.0]), Err(Error::Expr(_))));
}

const N: usize = 4096;

fn periodic_times() -> (Vec<f64>, f64) {
    let dt = 2.0 * PI / N as f64;
    ((0..N).map(|k| k as f64 * dt).collect(), dt)
}

/// Direct O(n²) transform oracle for a brick-wall low-pass.
fn naive_low_pass(x: &[f64], dt: f64, cutoff: f64) -> Vec<f64> {
    let n = x.len();
    let spectrum: Vec<(usize, f64, f64)> = (0..n)
        .filter(|&k| 2.0 * PI * k.min(n - k) as f64 / (n as f64 * dt) <= cutoff)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &v) in x.iter().enumerate() {
                let a = -2.0 * PI * (k * j % n) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            (k, re, im)
        })
        .collect();
    (0..n)
        .map(|j| {
            spectrum
                .iter()
                .map(|&(k, re, im)| {
                    let a = 2.0 * PI * (k * j % n) as f64 / n as f64;
                    re * a.cos() - im * a.sin()
                })
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

#[test]
fn low_pass_removes_a_fast_ripple() {
    let (t, dt) = periodic_times();
    let u: Vec<f64> = t.iter().map(|s| 1.0 + 0.1 * (50.0 * s).sin()).collect();
    let spec = FilterSpec::LowPass { cutoff: 10.0 };
    let out = filter_trace(&u, dt, &spec).unwrap();
    let oracle = naive_low_pass(&u, dt, 10.0);
    for (a, b) in out.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-10);
    }
    assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-3));
}

#[test]
fn band_limited_trace_passes_unchanged() {
    let (t, dt) = periodic_times();
    let u: Vec<f64> = t.iter().map(|s| 0.5 + (3.0 * s).cos() - 0.2 * (7.0 * s).sin()).collect();
    let out = filter_trace(&u, dt, &FilterSpec::LowPass { cutoff: 10.0 }).unwrap();
    assert!(u.iter().zip(&out).all(|(a, b)| (a - b).abs() < 1e-9));
}

#[test]
fn band_selection_isolates_one_frequency() {
    let (t, dt) = periodic_times();
    let u: Vec<f64> = t.iter().map(|s| 0.5 + (3.0 * s).cos() - 0.2 * (7.0 * s).sin()).collect();
    let spec = FilterSpec::Band { frequencies: vec![7.0] };
    let out = filter_trace(&u, dt, &spec).unwrap();
    for (s, v) in t.iter().zip(&out) {
        assert!((v + 0.2 * (7.0 * s).sin()).abs() < 1e-9);
    }
}

#[test]
fn filter_is_linear_and_idempotent_for_any_length() {
    for n in [1024usize, 1000] {
        let dt = 0.01;
        let u1: Vec<f64> = (0..n).map(|k| (k as f64 * dt * 3.0).sin() + (k as f64 * dt * 90.0).cos()).collect();
        let u2: Vec<f64> = (0..n).map(|k| (k as f64 * 0.37).sin().powi(3)).collect();
        let spec = FilterSpec::LowPass { cutoff: 40.0 };
        let f1 = filter_trace(&u1, dt, &spec).unwrap();
        let f2 = filter_trace(&u2, dt, &spec).unwrap();
        let mix: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let fm = filter_trace(&mix, dt, &spec).unwrap();
        for k in 0..n {
            assert!((fm[k] - (2.0 * f1[k] - 0.5 * f2[k])).abs() < 1e-10);
        }
        let again = filter_trace(&f1, dt, &spec).unwrap();
        assert!(f1.iter().zip(&again).all(|(a, b)| (a - b).abs() < 1e-9), "n = {n}");
    }
}

#[test]
fn cutoff_above_nyquist_is_rejected() {
    let spec = FilterSpec::LowPass { cutoff: 400.0 };
    assert!(matches!(filter_trace(&[0.0; 8], 0.01, &spec), Err(Error::Config(_))));
    let spec = FilterSpec::Band { frequencies: vec![] };
    assert!(matches!(filter_trace(&[0.0; 8], 0.01, &spec), Err(Error::Config(_))));
}

fn oscillator_run() -> StateTrajectory {
    let sys = InteractiveSystem::new(vec![0.0, 1.0 / 3.0], &["50*phi[1]", "-50*phi[0]"])
        .unwrap()
        .with_player(Player::forward(&["1"], &["u0[0] + eps[0]*phi[0]"], &["0.3"]).unwrap());
    let dt = 2.0 * PI / N as f64;
    simulate(&sys, None, 0.0, 2.0 * PI - dt, dt).unwrap()
}

#[test]
fn unraveling_recovers_the_feedback_coefficient() {
    let run = oscillator_run();
    assert_eq!(run.len(), N);
    let fam = FeedbackFamily::parse("x[0] + c[0]*x[2]", vec![0.0]).unwrap();
    let out = unravel_by_filtering(&run, &FilterSpec::LowPass { cutoff: 10.0 }, Some((&fam, FitTarget::Control(0)))).unwrap();
    assert!(out.u0.iter().all(|r| (r[0] - 1.0).abs() < 1e-3));
    let c = out.estimate.unwrap().coefficients[0];
    assert!((c - 0.3).abs() < 5e-2, "{c}");
    for (r, (u, u0)) in out.residual.iter().zip(out.u.iter().zip(&out.u0)) {
        assert_eq!(r[0], u[0] - u0[0]);
    }
}

#[test]
fn shortened_last_step_is_not_uniform() {
    let sys = integrator("1", "u0[0]", "0");
    let run = simulate(&sys, None, 0.0, 1.05, 0.1).unwrap();
    let spec = FilterSpec::LowPass { cutoff: 1.0 };
    assert!(matches!(unravel_by_filtering(&run, &spec, None), Err(Error::Data(_))));
}

fn strategic_game(eps: &str) -> InteractiveSystem {
    InteractiveSystem::new(vec![0.0], &["-0.2*phi[0] + u[0]"])
        .unwrap()
        .with_player(Player::forward(&["cos(t)"], &["u0[0] + eps[0]"], &[eps]).unwrap())
}

fn strategic_cfg(assumed: &str, horizon: f64) -> StrategicConfig {
    StrategicConfig {
        assumed_eps: vec![Signal::parse(&[assumed]).unwrap()],
        t0: 0.0,
        t1: 5.0,
        dt: 0.01,
        short_horizon: horizon,
    }
}

#[test]
fn known_constant_epsilon_blends_to_the_truth() {
    let report = strategic_pipeline(&strategic_game("0.4"), None, &strategic_cfg("0.4", 0.5)).unwrap();
    for p in &report.points {
        assert!((p.blended[0] - p.truth[0]).abs() < 1e-9);
        assert!((p.long_term[0] - p.truth[0]).abs() < 1e-9);
    }
}

#[test]
fn short_term_corrections_beat_the_uncorrected_restart() {
    let report = strategic_pipeline(&strategic_game("0.5*t"), None, &strategic_cfg("0", 0.5)).unwrap();
    let (c, u) = (report.one_step_error_corrected.unwrap(), report.one_step_error_uncorrected.unwrap());
    assert!(u > 2.0 * c, "corrected {c}, uncorrected {u}");
    assert!(report.points[1..].iter().all(|p| p.short_term.is_some()));
}

#[test]
fn zero_horizon_is_the_long_term_prognosis() {
    let report = strategic_pipeline(&strategic_game("0.5*t"), None, &strategic_cfg("0", 0.0)).unwrap();
    assert!(report.points.iter().all(|p| p.short_term.is_none() && p.blended == p.long_term));
    assert!(report.one_step_error_corrected.is_none());
}

#[test]
fn derivative_coupling_has_no_ordinary_game() {
    let sys = InteractiveSystem::new(vec![0.0], &["u[0]"])
        .unwrap()
        .with_player(Player::forward(&["1"], &["u0[0] + eps[0]*dphi[0]"], &["0.1"]).unwrap());
    assert!(matches!(strategic_pipeline(&sys, None, &strategic_cfg("0.1", 0.5)), Err(Error::Unsupported(_))));
}
