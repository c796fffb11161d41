//! Fixtures shared by the criterion benches.

use tactica::algebra::{DEFAULT_MAX_CORRECTION, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use tactica::{AlgebraPresentation, CMatrix, ControlSchedule, InteractiveSystem, Player, RepDynSpec, SymbolTerm};

/// `n × n` elementary matrix with a one at 1-based `(i, j)`.
pub fn unit(n: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    m[(i - 1, j - 1)] = 1.0.into();
    m
}

/// Dense 3 × 3 tuple with distinct, deterministic entries.
pub fn dense_tuple() -> Vec<CMatrix> {
    (0..3)
        .map(|k| CMatrix::from_fn(3, 3, |i, j| ((k * 9 + i * 3 + j) as f64 * 0.37).sin().into()))
        .collect()
}

/// Damped oscillator driven by one player with a state feedback.
pub fn oscillator() -> InteractiveSystem {
    InteractiveSystem::new(vec![1.0, 0.0], &["phi[1]", "-phi[0] - 0.2*phi[1] + u[0]"])
        .expect("valid dynamics")
        .with_player(Player::forward(&["sin(2*t)"], &["u0[0] + eps[0]*phi[0]"], &["0.4 + 0.1*cos(t)"]).expect("valid player"))
}

/// Heisenberg triple driven off its relations and projected back each step.
pub fn heisenberg_spec() -> RepDynSpec {
    let presentation = AlgebraPresentation::parse("heisenberg", 3, &["x1x2 - x2x1 - x3", "x1x3 - x3x1", "x2x3 - x3x2"])
        .expect("valid presentation");
    let term = |p: &str| vec![SymbolTerm::parse("a[0]", p).expect("valid symbol")];
    RepDynSpec {
        symbols: vec![term("x1 + x2"), term("x2 - x1"), term("2 x3")],
        constants: vec![],
        initial: vec![unit(3, 1, 2), unit(3, 2, 3), unit(3, 1, 3)],
        presentation,
        controls: ControlSchedule::parse(&["0.5*cos(t)"], &["u[0]"]).expect("valid controls"),
        tolerance: DEFAULT_TOLERANCE,
        max_iterations: DEFAULT_MAX_ITERATIONS,
        max_correction: DEFAULT_MAX_CORRECTION,
    }
}
