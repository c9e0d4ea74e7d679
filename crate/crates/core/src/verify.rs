//! Sufficient conditions for a unique limit cycle, and numerical
//! certification of its global stability through return-map contraction.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eigen_real_distinct, Vec2};
use crate::model::{equilibrium, mode_select, ModeId, Psas};
use crate::simulate::{find_cycle, CycleEstimate, CycleSearch, HybridStepper, SimOptions};

/// One checked inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Condition {
    pub pass: bool,
    pub value: f64,
}

impl Condition {
    fn unknown() -> Self {
        Self {
            pass: false,
            value: f64::NAN,
        }
    }
}

/// Eigenvalue premise for one mode: two distinct negative real eigenvalues.
/// `value` is the largest real part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenCondition {
    pub pass: bool,
    pub value: f64,
    pub real: bool,
    pub distinct: bool,
    pub negative: bool,
    pub lambda: Option<[f64; 2]>,
}

fn eigen_condition(a: &crate::linalg::Mat2) -> EigenCondition {
    match eigen_real_distinct(a) {
        Ok(d) => {
            let negative = d.lambda2 < 0.0;
            EigenCondition {
                pass: negative,
                value: d.lambda2,
                real: true,
                distinct: true,
                negative,
                lambda: Some(d.lambdas()),
            }
        }
        Err(e) => {
            let real = !matches!(e, Error::ComplexEigenvalues { .. });
            let tr = a.trace();
            let disc = tr * tr - 4.0 * a.det();
            let value = if real {
                0.5 * (tr + disc.max(0.0).sqrt())
            } else {
                0.5 * tr
            };
            EigenCondition {
                pass: false,
                value,
                real,
                distinct: !matches!(e, Error::RepeatedEigenvalue { .. }),
                negative: value < 0.0,
                lambda: None,
            }
        }
    }
}

/// Outcome of checking every condition for a given cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    /// `C·(A^I·x_s0 + b^I) < 0`.
    pub cond_grad_s0: Condition,
    /// `C·(A^I·x_s1 + b^I) > 0`.
    #[serde(rename = "cond_grad_s1_I")]
    pub cond_grad_s1_i: Condition,
    /// `C·(A^II·x_s1 + b^II) > 0`.
    #[serde(rename = "cond_grad_s1_II")]
    pub cond_grad_s1_ii: Condition,
    /// `C·(A^II·x_s0 + b^II) < 0`.
    pub cond_grad_s2: Condition,
    /// `C·x_R^I − d > 0`.
    #[serde(rename = "cond_equilibria_I")]
    pub cond_equilibria_i: Condition,
    /// `C·x_R^II − d < 0`.
    #[serde(rename = "cond_equilibria_II")]
    pub cond_equilibria_ii: Condition,
    /// Distance by which one pass through both phases misses the two points.
    pub cond_closure: Condition,
    #[serde(rename = "eig_I")]
    pub eig_i: EigenCondition,
    #[serde(rename = "eig_II")]
    pub eig_ii: EigenCondition,
    pub overall: bool,
    /// Time of the simulated pass used for the closure check.
    pub return_time: f64,
    /// `|return_time − T|` for the period supplied by the caller.
    pub period_mismatch: f64,
}

impl ConditionReport {
    fn finish(mut self) -> Self {
        self.overall = [
            self.cond_grad_s0.pass,
            self.cond_grad_s1_i.pass,
            self.cond_grad_s1_ii.pass,
            self.cond_grad_s2.pass,
            self.cond_equilibria_i.pass,
            self.cond_equilibria_ii.pass,
            self.cond_closure.pass,
            self.eig_i.pass,
            self.eig_ii.pass,
        ]
        .iter()
        .all(|&p| p);
        self
    }

    /// Names of the conditions that failed.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let checks = [
            ("cond_grad_s0", self.cond_grad_s0.pass),
            ("cond_grad_s1_I", self.cond_grad_s1_i.pass),
            ("cond_grad_s1_II", self.cond_grad_s1_ii.pass),
            ("cond_grad_s2", self.cond_grad_s2.pass),
            ("cond_equilibria_I", self.cond_equilibria_i.pass),
            ("cond_equilibria_II", self.cond_equilibria_ii.pass),
            ("cond_closure", self.cond_closure.pass),
            ("eig_I", self.eig_i.pass),
            ("eig_II", self.eig_ii.pass),
        ];
        for (name, pass) in checks {
            if !pass {
                out.push(name);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    /// Strict inequalities need at least this magnitude.
    pub strict_margin: f64,
    /// Allowed miss of the two switching points after one pass.
    pub closure_tol: f64,
    /// Allowed distance of the given points from the line.
    pub on_line_tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            strict_margin: 1e-9,
            closure_tol: 1e-6,
            on_line_tol: 1e-6,
        }
    }
}

fn ensure_on_line(psas: &Psas, x: Vec2, tol: f64) -> Result<()> {
    let offset = psas.line.offset(x);
    if offset.abs() > tol {
        return Err(Error::PointNotOnLine {
            x1: x.x1,
            x2: x.x2,
            offset,
        });
    }
    Ok(())
}

/// Checks the cycle conditions with default tolerances.
pub fn check_theorem1(psas: &Psas, x_s0: Vec2, x_s1: Vec2, period: f64) -> Result<ConditionReport> {
    check_theorem1_with(psas, x_s0, x_s1, period, &CheckOptions::default())
}

pub fn check_theorem1_with(
    psas: &Psas,
    x_s0: Vec2,
    x_s1: Vec2,
    period: f64,
    opts: &CheckOptions,
) -> Result<ConditionReport> {
    ensure_on_line(psas, x_s0, opts.on_line_tol)?;
    ensure_on_line(psas, x_s1, opts.on_line_tol)?;
    let m = opts.strict_margin;
    let neg = |v: f64| Condition { pass: v < -m, value: v };
    let pos = |v: f64| Condition { pass: v > m, value: v };
    let g = |id, x| psas.gradient_projection(id, x);

    let side = |id| match equilibrium(psas.mode(id)) {
        Ok(xr) => Some(psas.line.offset(xr)),
        Err(_) => None,
    };
    let cond_equilibria_i = side(ModeId::I).map_or_else(Condition::unknown, |v| Condition {
        pass: v > 0.0,
        value: v,
    });
    let cond_equilibria_ii = side(ModeId::II).map_or_else(Condition::unknown, |v| Condition {
        pass: v < 0.0,
        value: v,
    });

    let (cond_closure, return_time) = match closure_pass(psas, x_s0, period) {
        Ok((p1, p2, t)) => {
            let r = p1.distance(x_s1).max(p2.distance(x_s0));
            (
                Condition {
                    pass: r <= opts.closure_tol,
                    value: r,
                },
                t,
            )
        }
        Err(_) => (Condition::unknown(), f64::NAN),
    };

    Ok(ConditionReport {
        cond_grad_s0: neg(g(ModeId::I, x_s0)),
        cond_grad_s1_i: pos(g(ModeId::I, x_s1)),
        cond_grad_s1_ii: pos(g(ModeId::II, x_s1)),
        cond_grad_s2: neg(g(ModeId::II, x_s0)),
        cond_equilibria_i,
        cond_equilibria_ii,
        cond_closure,
        eig_i: eigen_condition(&psas.mode_i.a),
        eig_ii: eigen_condition(&psas.mode_ii.a),
        overall: false,
        return_time,
        period_mismatch: (return_time - period).abs(),
    }
    .finish())
}

/// One pass mode I then mode II from `x_s0`; returns both crossings and the
/// elapsed time.
fn closure_pass(psas: &Psas, x_s0: Vec2, period: f64) -> Result<(Vec2, Vec2, f64)> {
    let cap = if period > 0.0 && period.is_finite() {
        100.0 * period
    } else {
        1e4
    };
    let mut st = HybridStepper::new(psas, x_s0, ModeId::I, f64::INFINITY, SimOptions::default());
    let e1 = st.next_event(cap)?.ok_or(Error::NoReturn { t_cap: cap })?;
    let e2 = st.next_event(cap)?.ok_or(Error::NoReturn { t_cap: cap })?;
    Ok((e1.x, e2.x, e2.t))
}

/// Report for a system whose cycle is located by simulation.
///
/// When no cycle is found the gradient and closure conditions are reported
/// as failed with unknown values.
pub fn check_theorem1_auto(psas: &Psas, opts: &CheckOptions) -> (ConditionReport, Option<CycleEstimate>) {
    let cycle = locate_cycle(psas).ok().filter(|c| c.converged);
    if let Some(c) = cycle {
        if let Ok(r) = check_theorem1_with(psas, c.x_s0, c.x_s1, c.period_t, opts) {
            return (r, Some(c));
        }
    }
    let side = |id| equilibrium(psas.mode(id)).map(|xr| psas.line.offset(xr)).ok();
    let report = ConditionReport {
        cond_grad_s0: Condition::unknown(),
        cond_grad_s1_i: Condition::unknown(),
        cond_grad_s1_ii: Condition::unknown(),
        cond_grad_s2: Condition::unknown(),
        cond_equilibria_i: side(ModeId::I).map_or_else(Condition::unknown, |v| Condition {
            pass: v > 0.0,
            value: v,
        }),
        cond_equilibria_ii: side(ModeId::II).map_or_else(Condition::unknown, |v| Condition {
            pass: v < 0.0,
            value: v,
        }),
        cond_closure: Condition::unknown(),
        eig_i: eigen_condition(&psas.mode_i.a),
        eig_ii: eigen_condition(&psas.mode_ii.a),
        overall: false,
        return_time: f64::NAN,
        period_mismatch: f64::NAN,
    };
    (report.finish(), None)
}

/// Starting point for cycle searches: the projection onto the line of the
/// midpoint between the two equilibria, or of the origin when an
/// equilibrium does not exist.
pub fn default_start(psas: &Psas) -> Vec2 {
    let anchor = match (equilibrium(&psas.mode_i), equilibrium(&psas.mode_ii)) {
        (Ok(a), Ok(b)) => a.midpoint(b),
        _ => Vec2::ZERO,
    };
    psas.line.project_point(anchor)
}

/// Finds the limit cycle from [`default_start`] and polishes its crossings.
pub fn locate_cycle(psas: &Psas) -> Result<CycleEstimate> {
    let search = CycleSearch {
        opts: SimOptions {
            divergence_norm: 1e12,
            ..SimOptions::default()
        },
        ..CycleSearch::default()
    };
    let est = find_cycle(psas, default_start(psas), &search)?;
    Ok(refine_cycle(psas, &est).unwrap_or(est))
}

/// Next crossing in the same direction after one pass through both modes,
/// with the elapsed time.
pub fn poincare_map(psas: &Psas, x_on_line: Vec2, entering: ModeId) -> Result<(Vec2, f64)> {
    poincare_map_with(psas, x_on_line, entering, 1e4)
}

pub fn poincare_map_with(psas: &Psas, x_on_line: Vec2, entering: ModeId, t_cap: f64) -> Result<(Vec2, f64)> {
    ensure_on_line(psas, x_on_line, 1e-6)?;
    let g = psas.gradient_projection(entering, x_on_line);
    if entering.side() * g < 0.0 {
        return Err(Error::InvalidInput(format!(
            "mode {entering} flows out of its region at the start point (rate {g})"
        )));
    }
    let opts = SimOptions {
        divergence_norm: 1e6,
        ..SimOptions::default()
    };
    let mut st = HybridStepper::new(psas, x_on_line, entering, f64::INFINITY, opts);
    st.next_event(t_cap)?.ok_or(Error::NoReturn { t_cap })?;
    let e = st.next_event(t_cap)?.ok_or(Error::NoReturn { t_cap })?;
    Ok((e.x, e.t))
}

/// Fixed point of the return map for crossings entering `entering`,
/// polished from `guess` with the secant method along the line.
pub fn refine_fixed_point(psas: &Psas, guess: Vec2, entering: ModeId) -> Result<Vec2> {
    let dir = psas.line.direction();
    let base = psas.line.project_point(guess);
    let at = |s: f64| base + dir * s;
    let f = |s: f64| -> Result<f64> {
        let (p, _) = poincare_map(psas, at(s), entering)?;
        Ok((p - base).dot(dir) - s)
    };
    let (mut s0, mut s1) = (0.0, 1e-6);
    let (mut f0, mut f1) = (f(s0)?, f(s1)?);
    for _ in 0..50 {
        let denom = f1 - f0;
        if denom == 0.0 || f1 == 0.0 {
            break;
        }
        let s2 = s1 - f1 * (s1 - s0) / denom;
        if !s2.is_finite() {
            break;
        }
        s0 = s1;
        f0 = f1;
        s1 = s2;
        f1 = f(s1)?;
        if (s1 - s0).abs() <= 1e-15 * (1.0 + s1.abs()) {
            break;
        }
    }
    if f1.abs() <= f0.abs() {
        Ok(at(s1))
    } else {
        Ok(at(s0))
    }
}

/// Cycle estimate with both crossings polished to the fixed points of the
/// return map.
pub fn refine_cycle(psas: &Psas, cycle: &CycleEstimate) -> Result<CycleEstimate> {
    let x_s0 = refine_fixed_point(psas, cycle.x_s0, ModeId::I)?;
    let mut st = HybridStepper::new(psas, x_s0, ModeId::I, f64::INFINITY, SimOptions::default());
    let cap = 100.0 * cycle.period_t.max(1.0);
    let e1 = st.next_event(cap)?.ok_or(Error::NoReturn { t_cap: cap })?;
    let e2 = st.next_event(cap)?.ok_or(Error::NoReturn { t_cap: cap })?;
    Ok(CycleEstimate {
        period_t: e2.t,
        x_s0,
        x_s1: e1.x,
        center: x_s0.midpoint(e1.x),
        converged: true,
        residual: e2.x.distance(x_s0),
        t_s1: e1.t,
    })
}

/// Fixed crossing matching the given entering mode.
fn target_for(psas: &Psas, cycle: &CycleEstimate, entering: ModeId) -> Vec2 {
    let e0 = mode_select(psas, cycle.x_s0, None);
    if e0 == entering {
        cycle.x_s0
    } else {
        cycle.x_s1
    }
}

/// Ratios `‖p_{i+1} − x_s‖² / ‖p_i − x_s‖²` along `n_iter` return-map
/// iterates from `x_start`; pairs whose denominator is below `1e-14` are
/// skipped.
pub fn contraction_ratio(psas: &Psas, cycle: &CycleEstimate, x_start: Vec2, n_iter: usize) -> Result<Vec<f64>> {
    let entering = mode_select(psas, x_start, None);
    let target = target_for(psas, cycle, entering);
    let seq = lyapunov_sequence(psas, x_start, entering, target, n_iter)?;
    Ok(ratios(&seq))
}

fn ratios(v: &[f64]) -> Vec<f64> {
    v.windows(2).filter(|w| w[0] >= 1e-14).map(|w| w[1] / w[0]).collect()
}

/// Squared distances of successive same-direction crossings to `target`.
fn lyapunov_sequence(psas: &Psas, x_start: Vec2, entering: ModeId, target: Vec2, n_iter: usize) -> Result<Vec<f64>> {
    let mut p = x_start;
    let mut out = vec![p.distance(target).powi(2)];
    for _ in 0..n_iter {
        p = poincare_map(psas, p, entering)?.0;
        out.push(p.distance(target).powi(2));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Certified,
    Refuted,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Certified => "certified",
            Verdict::Refuted => "refuted",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// What happened to one grid start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Contracting,
    NotContracting,
    Diverged,
    NoCrossing,
    NoReturn,
    Stationary,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSample {
    pub start: Vec2,
    pub status: SampleStatus,
    /// Largest ratio along this start's iterates.
    pub alpha: Option<f64>,
    pub alphas: Vec<f64>,
    pub lyapunov: Vec<f64>,
    pub monotone: bool,
}

/// Sampled evidence that every start converges to the cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCertificate {
    pub verdict: Verdict,
    pub max_alpha: Condition,
    pub lyapunov_monotone: Condition,
    pub n_samples: usize,
    pub n_inconclusive: usize,
    #[serde(rename = "fixed_point_I")]
    pub fixed_point_i: Vec2,
    #[serde(rename = "fixed_point_II")]
    pub fixed_point_ii: Vec2,
    pub sampled_alphas: Vec<GridSample>,
}

#[derive(Debug, Clone, Copy)]
pub struct StabilityOptions {
    pub n_iter: usize,
    /// Any state beyond this norm counts as divergence.
    pub divergence_norm: f64,
    /// Time allowed to reach the line from a grid start.
    pub t_first: f64,
    /// Squared distance below which decrease is no longer required.
    pub floor: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            n_iter: 12,
            divergence_norm: 1e6,
            t_first: 1e4,
            floor: 1e-20,
        }
    }
}

/// Certificate with default options.
pub fn check_global_stability(psas: &Psas, cycle: &CycleEstimate, grid: &[Vec2]) -> StabilityCertificate {
    check_global_stability_with(psas, cycle, grid, &StabilityOptions::default())
}

pub fn check_global_stability_with(
    psas: &Psas,
    cycle: &CycleEstimate,
    grid: &[Vec2],
    opts: &StabilityOptions,
) -> StabilityCertificate {
    let t_i = target_for(psas, cycle, ModeId::I);
    let t_ii = target_for(psas, cycle, ModeId::II);
    let samples: Vec<GridSample> = grid
        .par_iter()
        .map(|&x0| sample_start(psas, x0, [t_i, t_ii], opts))
        .collect();

    let mut max_alpha = f64::NEG_INFINITY;
    let mut violations = 0usize;
    let mut n_inconclusive = 0usize;
    let mut refuted = false;
    for s in &samples {
        if let Some(a) = s.alpha {
            max_alpha = max_alpha.max(a);
        }
        if !s.monotone {
            violations += 1;
        }
        match s.status {
            SampleStatus::Contracting => {}
            SampleStatus::Diverged | SampleStatus::NotContracting => refuted = true,
            _ => n_inconclusive += 1,
        }
    }
    let all_contract = max_alpha < 1.0;
    let verdict = if refuted {
        Verdict::Refuted
    } else if n_inconclusive == 0 && all_contract && violations == 0 && !samples.is_empty() {
        Verdict::Certified
    } else {
        Verdict::Inconclusive
    };
    StabilityCertificate {
        verdict,
        max_alpha: Condition {
            pass: all_contract,
            value: if max_alpha.is_finite() { max_alpha } else { f64::NAN },
        },
        lyapunov_monotone: Condition {
            pass: violations == 0,
            value: violations as f64,
        },
        n_samples: samples.len(),
        n_inconclusive,
        fixed_point_i: t_i,
        fixed_point_ii: t_ii,
        sampled_alphas: samples,
    }
}

fn sample_start(psas: &Psas, x0: Vec2, targets: [Vec2; 2], opts: &StabilityOptions) -> GridSample {
    let blank = |status| GridSample {
        start: x0,
        status,
        alpha: None,
        alphas: vec![],
        lyapunov: vec![],
        monotone: true,
    };
    let mode = mode_select(psas, x0, None);
    if psas.mode(mode).rhs(x0).norm() == 0.0 {
        return blank(SampleStatus::Stationary);
    }
    let sim = SimOptions {
        divergence_norm: opts.divergence_norm,
        ..SimOptions::default()
    };
    let mut st = HybridStepper::new(psas, x0, mode, f64::INFINITY, sim);
    let first = match st.next_event(opts.t_first) {
        Ok(Some(e)) => e,
        Ok(None) => return blank(SampleStatus::NoCrossing),
        Err(Error::Diverged { .. }) | Err(Error::NonFiniteState { .. }) => return blank(SampleStatus::Diverged),
        Err(_) => return blank(SampleStatus::Failed),
    };
    let entering = first.to_mode;
    let target = match entering {
        ModeId::I => targets[0],
        ModeId::II => targets[1],
    };
    let lyapunov = match lyapunov_sequence(psas, first.x, entering, target, opts.n_iter) {
        Ok(v) => v,
        Err(Error::Diverged { .. }) | Err(Error::NonFiniteState { .. }) => return blank(SampleStatus::Diverged),
        Err(Error::NoReturn { .. }) => return blank(SampleStatus::NoReturn),
        Err(_) => return blank(SampleStatus::Failed),
    };
    let alphas = ratios(&lyapunov);
    let monotone = lyapunov.windows(2).all(|w| w[0] <= opts.floor || w[1] < w[0]);
    let alpha = alphas.iter().copied().reduce(f64::max);
    let status = if alphas.len() >= 2 && alphas.iter().all(|&a| a > 1.0) {
        SampleStatus::NotContracting
    } else {
        SampleStatus::Contracting
    };
    GridSample {
        start: x0,
        status,
        alpha,
        alphas,
        lyapunov,
        monotone,
    }
}

/// `n × n` grid over a rectangle, row by row in `x2`.
pub fn grid(x1: (f64, f64), x2: (f64, f64), n: usize) -> Vec<Vec2> {
    let at = |(lo, hi): (f64, f64), k: usize| {
        if n <= 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push(Vec2::new(at(x1, i), at(x2, j)));
        }
    }
    out
}
