//! Relaxation oscillator of a palladium catalyst, used as a stand-in for
//! measured data.
//!
//! `y1` is the oxidation state and `y2` the CO concentration. Above the
//! curve `y2 = exp(−y1²/Q)` the catalyst is passive (`Θ = 0`), below it
//! active (`Θ = 1`):
//!
//! ```text
//! ẏ1 = (Θ − y1)·β,          β = Θ·β̄ + (1 − Θ)·β0
//! ẏ2 = −Θ·y2 + α·y0 − α·(1 − Θ)·y2
//! ```

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identify::DataSet;
use crate::linalg::Vec2;

/// Oscillator parameters.
///
/// The defaults make the noise-free oscillator settle on a cycle whose
/// two branches are exactly the affine modes of
/// [`crate::reference::pd_identified_corrected`] (period ≈ 233.7).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxOscParams {
    pub alpha: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub beta_bar: f64,
    pub beta_0: f64,
    pub y_feed: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for RelaxOscParams {
    fn default() -> Self {
        Self {
            alpha: 0.83,
            q: 3.0,
            beta_bar: 0.0083,
            beta_0: 0.1,
            y_feed: 0.9,
            noise_sigma: 0.005,
            seed: 42,
        }
    }
}

/// Default starting state.
pub const Y_INIT: Vec2 = Vec2::new(0.9, 0.4);
/// Default integration step.
pub const DT: f64 = 0.01;

impl RelaxOscParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.alpha,
            self.q,
            self.beta_bar,
            self.beta_0,
            self.y_feed,
            self.noise_sigma,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFiniteInput("oscillator parameters".into()));
        }
        if !(self.q > 0.0) {
            return Err(Error::InvalidInput(format!("Q must be positive, got {}", self.q)));
        }
        if !(self.beta_bar > 0.0 && self.beta_0 > 0.0) {
            return Err(Error::InvalidInput("beta_bar and beta_0 must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidInput("noise_sigma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RelaxOscParams> {
        let p: RelaxOscParams = serde_json::from_str(&fs::read_to_string(path)?)?;
        p.validate()?;
        Ok(p)
    }
}

/// Heaviside switch with `Θ = 1` on the boundary curve.
pub fn theta(y1: f64, y2: f64, q: f64) -> f64 {
    if (-y1 * y1 / q).exp() - y2 >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Noise-free right-hand side.
pub fn rhs(p: &RelaxOscParams, y: Vec2) -> Vec2 {
    let th = theta(y.x1, y.x2, p.q);
    let beta = th * p.beta_bar + (1.0 - th) * p.beta_0;
    Vec2::new(
        (th - y.x1) * beta,
        -th * y.x2 + p.alpha * p.y_feed - p.alpha * (1.0 - th) * y.x2,
    )
}

/// One explicit Euler step with `Θ` frozen, plus `σ·√dt` Gaussian noise per
/// component.
pub fn step_refosc(p: &RelaxOscParams, y: Vec2, dt: f64, rng: &mut ChaCha8Rng) -> Result<Vec2> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let mut next = y + rhs(p, y) * dt;
    if p.noise_sigma > 0.0 {
        let s = p.noise_sigma * dt.sqrt();
        let n1: f64 = StandardNormal.sample(rng);
        let n2: f64 = StandardNormal.sample(rng);
        next = next + Vec2::new(n1, n2) * s;
    }
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFiniteState { t: f64::NAN })
    }
}

/// Samples at `0, dt, …, n·dt` with `n = ⌊t_end/dt⌋`, seeded from
/// `params.seed`.
pub fn generate(p: &RelaxOscParams, y_init: Vec2, t_end: f64, dt: f64) -> Result<DataSet> {
    p.validate()?;
    if !(dt > 0.0 && dt.is_finite()) || !(t_end >= dt && t_end.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "need t_end ≥ dt > 0, got t_end = {t_end}, dt = {dt}"
        )));
    }
    let n = (t_end / dt * (1.0 + 1e-12)).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut t = Vec::with_capacity(n + 1);
    let mut y = Vec::with_capacity(n + 1);
    let mut cur = y_init;
    t.push(0.0);
    y.push(cur);
    for k in 1..=n {
        cur = step_refosc(p, cur, dt, &mut rng).map_err(|_| Error::NonFiniteState { t: k as f64 * dt })?;
        t.push(k as f64 * dt);
        y.push(cur);
    }
    DataSet::new(t, y, "refosc")
}
