//! Exact solutions of a single affine mode.
//!
//! With `A = W·diag(λ₁, λ₂)·W⁻¹` the solution of `ẋ = A·x + b` from `x(0)`
//! separates into two exponential modes. Writing `z = W⁻¹·x(0)` and
//! `β = W⁻¹·b`, component `k` is
//!
//! ```text
//! x_k(t) = Σ_j e^{λ_j t}·(v_kj·z_j + v_kj·β_j/λ_j) + H_k,   H_k = −Σ_j v_kj·β_j/λ_j
//! ```
//!
//! which is evaluated as `e^{λt}·S + S'·(e^{λt} − 1)/λ` so that `t = 0`
//! returns the start state exactly and a zero eigenvalue stays finite.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::linalg::{eigen_real_distinct, EigenDecomp, Mat2, Vec2};
use crate::model::AffineMode;

/// Step of the reference integrator.
pub const ORACLE_STEP: f64 = 1e-5;

/// Products of eigenvector entries with the start state and the offset.
///
/// `s[0..4]` pair the start state with the eigenvectors, `s[4..8]` pair the
/// offset `b`; in each group the order is `v11·z1, v12·z2, v21·z1, v22·z2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Substitutions {
    pub s: [f64; 8],
    pub h: [f64; 2],
    pub lambda: [f64; 2],
}

impl Substitutions {
    /// State after `t` time units.
    pub fn evaluate(&self, t: f64) -> Vec2 {
        let [l1, l2] = self.lambda;
        let (e1, e2) = ((l1 * t).exp(), (l2 * t).exp());
        let (g1, g2) = (growth(l1, t), growth(l2, t));
        let s = &self.s;
        Vec2::new(
            e1 * s[0] + e2 * s[1] + s[4] * g1 + s[5] * g2,
            e1 * s[2] + e2 * s[3] + s[6] * g1 + s[7] * g2,
        )
    }
}

/// `(e^{λt} − 1)/λ`, with the limit `t` at `λ = 0`.
fn growth(lambda: f64, t: f64) -> f64 {
    if lambda == 0.0 {
        t
    } else {
        (lambda * t).exp_m1() / lambda
    }
}

fn pair(w: &Mat2, det: f64, v: Vec2) -> [f64; 4] {
    let z1 = (w.a22 * v.x1 - w.a12 * v.x2) / det;
    let z2 = (w.a11 * v.x2 - w.a21 * v.x1) / det;
    [w.a11 * z1, w.a12 * z2, w.a21 * z1, w.a22 * z2]
}

/// Substitution values for one phase starting at `x_start`.
pub fn substitutions(mode: &AffineMode, decomp: &EigenDecomp, x_start: Vec2) -> Result<Substitutions> {
    let w = &decomp.w;
    let det = w.det();
    if !(det.abs() > 1e-12) {
        return Err(Error::SingularEigenvectorMatrix { det });
    }
    let sx = pair(w, det, x_start);
    let sb = pair(w, det, mode.b);
    let [l1, l2] = decomp.lambdas();
    let s = [sx[0], sx[1], sx[2], sx[3], sb[0], sb[1], sb[2], sb[3]];
    let h = [-s[4] / l1 - s[5] / l2, -s[6] / l1 - s[7] / l2];
    Ok(Substitutions { s, h, lambda: [l1, l2] })
}

/// Closed-form state after `t_elapsed` for a mode with real distinct
/// eigenvalues.
pub fn flow_closed_form(mode: &AffineMode, x_start: Vec2, t_elapsed: f64) -> Result<Vec2> {
    let decomp = eigen_real_distinct(&mode.a)?;
    Ok(substitutions(mode, &decomp, x_start)?.evaluate(t_elapsed))
}

fn rk4_step(mode: &AffineMode, x: Vec2, h: f64) -> Vec2 {
    let k1 = mode.rhs(x);
    let k2 = mode.rhs(x + k1 * (0.5 * h));
    let k3 = mode.rhs(x + k2 * (0.5 * h));
    let k4 = mode.rhs(x + k3 * h);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Classical fourth-order Runge–Kutta with fixed step `h`; the final step is
/// shortened to land on `t_elapsed`.
pub fn flow_oracle_rk4(mode: &AffineMode, x_start: Vec2, t_elapsed: f64, h: f64) -> Result<Vec2> {
    if !(h > 0.0) || !(t_elapsed >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "rk4 needs h > 0 and t ≥ 0 (h = {h}, t = {t_elapsed})"
        )));
    }
    let full = (t_elapsed / h).floor();
    let rest = t_elapsed - full * h;
    let mut x = x_start;
    for k in 0..full as u64 {
        x = rk4_step(mode, x, h);
        if k % 1024 == 0 && !x.is_finite() {
            return Err(Error::NonFiniteState { t: k as f64 * h });
        }
    }
    if rest > 0.0 {
        x = rk4_step(mode, x, rest);
    }
    if !x.is_finite() {
        return Err(Error::NonFiniteState { t: t_elapsed });
    }
    Ok(x)
}

/// Exponential of the augmented matrix `[[A, b], [0, 0]]·t` applied to
/// `(x, 1)`. Works for any `A`; used when the eigenvalues are complex or
/// repeated.
pub fn flow_expm(mode: &AffineMode, x_start: Vec2, t_elapsed: f64) -> Result<Vec2> {
    let (a, b) = (&mode.a, &mode.b);
    let m = Matrix3::new(a.a11, a.a12, b.x1, a.a21, a.a22, b.x2, 0.0, 0.0, 0.0) * t_elapsed;
    let y = m.exp() * Vector3::new(x_start.x1, x_start.x2, 1.0);
    let out = Vec2::new(y[0], y[1]);
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::NonFiniteState { t: t_elapsed })
    }
}

/// Closed form when the eigenvalues are real and distinct, augmented
/// matrix exponential otherwise.
pub fn flow_general(mode: &AffineMode, x_start: Vec2, t_elapsed: f64) -> Result<Vec2> {
    ModeFlow::new(mode).advance(x_start, t_elapsed)
}

/// A mode prepared for repeated evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ModeFlow {
    mode: AffineMode,
    decomp: Option<EigenDecomp>,
}

impl ModeFlow {
    pub fn new(mode: &AffineMode) -> Self {
        let decomp = eigen_real_distinct(&mode.a).ok().filter(|d| d.w.det().abs() > 1e-12);
        Self { mode: *mode, decomp }
    }

    pub fn mode(&self) -> &AffineMode {
        &self.mode
    }

    pub fn is_closed_form(&self) -> bool {
        self.decomp.is_some()
    }

    /// Fastest rate of the mode, used to size event-scan steps.
    pub fn rate_bound(&self) -> f64 {
        match &self.decomp {
            Some(d) => d.spectral_radius(),
            None => self.mode.a.norm(),
        }
    }

    pub fn advance(&self, x: Vec2, t: f64) -> Result<Vec2> {
        if !(t >= 0.0) {
            return Err(Error::InvalidInput(format!("elapsed time must be ≥ 0, got {t}")));
        }
        let out = match &self.decomp {
            Some(d) => substitutions(&self.mode, d, x)?.evaluate(t),
            None => flow_expm(&self.mode, x, t)?,
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::NonFiniteState { t })
        }
    }
}
