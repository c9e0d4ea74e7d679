//! Ready-made systems used throughout the examples and tests.

use crate::design::{CycleSpec, TimedPoint};
use crate::linalg::{Mat2, Vec2};
use crate::model::{AffineMode, Psas, SwitchingLine};

fn line(c11: f64, c12: f64, d: f64) -> SwitchingLine {
    SwitchingLine { c11, c12, d }
}

/// Oscillator designed for a cycle crossing `x1 = 0` at `x2 ≈ −5.160` and
/// `x2 ≈ −2.394`.
pub fn design_example() -> Psas {
    Psas {
        mode_i: AffineMode::new(Mat2::new(-3.0, 1.0, 3.0, -2.0), Vec2::new(3.0, -3.0)),
        mode_ii: AffineMode::new(Mat2::new(-4.0, 1.0, -3.0, 0.25), Vec2::new(5.0, 0.75)),
        line: line(1.0, 0.0, 0.0),
    }
}

/// Cycle specification the design example was built from, with the centre
/// taken as the exact midpoint of the two crossings.
pub fn design_example_spec() -> CycleSpec {
    let x_s0 = Vec2::new(0.0, -5.160);
    let x_s1 = Vec2::new(0.0, -2.394);
    CycleSpec {
        line: line(1.0, 0.0, 0.0),
        x_s0,
        x_s1,
        t_s1: 0.801,
        t_s2: 2.644,
        center: x_s0.midpoint(x_s1),
        p_i: TimedPoint {
            x: Vec2::new(-0.237, -3.6959),
            t: 0.2825,
        },
        p_ii: TimedPoint {
            x: Vec2::new(0.1142, -2.395),
            t: 0.0482,
        },
    }
}

/// Identified palladium-oscillator model at flow rate `alpha`, with the
/// mode-II entry `A^II_11 = +0.1` exactly as printed.
///
/// This mode-II dynamics has an unstable `x1` direction pointing away from
/// the line, so trajectories that enter region II never come back.
pub fn pd_identified(alpha: f64) -> Psas {
    pd_with_a2_11(alpha, 0.1)
}

/// Same model with `A^II_11 = −0.1`, which is what the oscillator's passive
/// branch reduces to and which does have a stable limit cycle.
pub fn pd_identified_corrected(alpha: f64) -> Psas {
    pd_with_a2_11(alpha, -0.1)
}

fn pd_with_a2_11(alpha: f64, a2_11: f64) -> Psas {
    Psas {
        mode_i: AffineMode::new(
            Mat2::new(-0.01 * alpha, 0.0, 0.0, -1.0),
            Vec2::new(0.01 * alpha, 0.9 * alpha),
        ),
        mode_ii: AffineMode::new(Mat2::new(a2_11, 0.0, 0.0, -alpha), Vec2::new(0.0, 0.9 * alpha)),
        line: line(0.4115, 1.0, 1.132),
    }
}
