//! Text exports. CSV floats carry 17 significant digits; JSON floats use the
//! shortest representation that reads back to the same value.

use std::fmt::Write;

use serde_json::{json, Value};

use crate::algebra::{CMatrix, RepDynTrajectory};
use crate::game::StateTrajectory;
use crate::tactics::{CommentRecord, CommentState};
use crate::verbalization::WindowRecord;

/// `x` with 17 significant digits.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn header(out: &mut String, names: &[String]) {
    out.push_str(&names.join(","));
    out.push('\n');
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}_{i}"))
}

fn push_row(out: &mut String, first: String, groups: &[&[f64]], tail: Option<&str>) {
    out.push_str(&first);
    for g in groups {
        for x in *g {
            out.push(',');
            out.push_str(&float(*x));
        }
    }
    if let Some(t) = tail {
        out.push(',');
        out.push_str(t);
    }
    out.push('\n');
}

/// Columns `t, phi_*, u_*, eps_*`.
pub fn trajectory_csv(traj: &StateTrajectory) -> String {
    let width = |v: &[Vec<f64>]| v.first().map_or(0, Vec::len);
    let mut out = String::new();
    let names: Vec<String> = std::iter::once("t".to_string())
        .chain(numbered("phi", width(&traj.phi)))
        .chain(numbered("u", width(&traj.u)))
        .chain(numbered("eps", width(&traj.eps)))
        .collect();
    header(&mut out, &names);
    for k in 0..traj.len() {
        push_row(&mut out, float(traj.times[k]), &[&traj.phi[k], &traj.u[k], &traj.eps[k]], None);
    }
    out
}

pub fn trajectory_json(traj: &StateTrajectory) -> Value {
    let mut doc = json!({
        "t": traj.times,
        "phi": traj.phi,
        "u0": traj.u0,
        "u": traj.u,
        "eps": traj.eps,
    });
    if traj.lambda.iter().any(|l| !l.is_empty()) {
        doc["lambda"] = json!(traj.lambda);
    }
    if let Some(d) = &traj.dphi {
        doc["dphi"] = json!(d);
    }
    doc
}

/// Columns `n, t_start, t_end, omega_*, v_*, cell_label`.
pub fn windows_csv(windows: &[WindowRecord]) -> String {
    let (dw, dv) = windows.first().map_or((0, 0), |w| (w.omega.len(), w.v.len()));
    let mut out = String::new();
    let names: Vec<String> = ["n", "t_start", "t_end"]
        .into_iter()
        .map(String::from)
        .chain(numbered("omega", dw))
        .chain(numbered("v", dv))
        .chain(std::iter::once("cell_label".to_string()))
        .collect();
    header(&mut out, &names);
    for w in windows {
        let first = format!("{},{},{}", w.n, float(w.t_start), float(w.t_end));
        push_row(&mut out, first, &[&w.omega, &w.v], Some(w.cell_label.as_deref().unwrap_or("")));
    }
    out
}

pub fn windows_json(windows: &[WindowRecord]) -> Value {
    json!(windows)
}

/// One JSON object per line, in window order.
pub fn comments_jsonl(comments: &[CommentState]) -> String {
    let mut out = String::new();
    for c in comments {
        let line = serde_json::to_string(&CommentRecord::from(c)).expect("comment records serialize");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Matrices as nested rows of `[re, im]` pairs.
pub fn tuple_json(matrices: &[CMatrix]) -> Value {
    Value::Array(
        matrices
            .iter()
            .map(|m| {
                json!((0..m.nrows())
                    .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect::<Vec<_>>())
                    .collect::<Vec<_>>())
            })
            .collect(),
    )
}

/// Every `stride`-th sample plus the last one.
pub fn repdyn_json(traj: &RepDynTrajectory, stride: usize) -> Value {
    let stride = stride.max(1);
    let last = traj.times.len().saturating_sub(1);
    let samples: Vec<Value> = (0..traj.times.len())
        .filter(|k| k % stride == 0 || *k == last)
        .map(|k| {
            json!({
                "t": traj.times[k],
                "class": traj.labels[k],
                "residual": traj.residuals[k],
                "a": traj.controls[k],
                "X": tuple_json(&traj.tuples[k]),
            })
        })
        .collect();
    Value::Array(samples)
}

/// Columns `t, residual`.
pub fn residual_csv(traj: &RepDynTrajectory) -> String {
    let mut out = String::from("t,residual\n");
    for (t, r) in traj.times.iter().zip(&traj.residuals) {
        let _ = writeln!(out, "{},{}", float(*t), float(*r));
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::unit;
    use crate::tactics::CommentValue;

    #[test]
    fn floats_round_trip_with_17_digits() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.trim_start_matches('-').split('e').next().unwrap();
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
    }

    #[test]
    fn trajectory_csv_layout() {
        let traj = StateTrajectory {
            times: vec![0.0, 0.5],
            phi: vec![vec![1.0], vec![0.5]],
            u0: vec![vec![0.0]; 2],
            eps: vec![vec![0.25, 0.0]; 2],
            u: vec![vec![2.0, 3.0]; 2],
            lambda: vec![vec![]; 2],
            dphi: None,
            eps_stages: vec![],
        };
        let csv = trajectory_csv(&traj);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "t,phi_0,u_0,u_1,eps_0,eps_1");
        assert_eq!(lines.len(), 3);
        let cols: Vec<f64> = lines[2].split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols, vec![0.5, 0.5, 2.0, 3.0, 0.25, 0.0]);
        assert!(trajectory_json(&traj).get("lambda").is_none());
    }

    #[test]
    fn window_csv_has_label_column() {
        let w = WindowRecord {
            n: 1,
            t_start: 0.0,
            t_end: 1.0,
            omega: vec![2.0],
            v: vec![],
            cell_label: Some("pos".into()),
        };
        let csv = windows_csv(&[w]);
        assert_eq!(csv.lines().next().unwrap(), "n,t_start,t_end,omega_0,cell_label");
        assert!(csv.lines().nth(1).unwrap().ends_with(",pos"));
    }

    #[test]
    fn comment_lines_name_their_fields() {
        let c = [
            CommentState {
                n: 0,
                value: CommentValue::vector(vec![1.5]),
                delta_label: None,
            },
            CommentState {
                n: 1,
                value: CommentValue::labeled("heisenberg", vec![2.0]),
                delta_label: Some("d".into()),
            },
        ];
        let text = comments_jsonl(&c);
        let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines[0], json!({"n": 0, "theta": [1.5]}));
        assert_eq!(lines[1], json!({"n": 1, "class_label": "heisenberg", "eta": [2.0], "delta_label": "d"}));
    }

    #[test]
    fn matrices_as_complex_pairs() {
        let v = tuple_json(&[unit(2, 1, 2)]);
        assert_eq!(v, json!([[[[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]]));
    }
}
