//! Event-driven simulation of a switching system, with exact switching
//! times, limit-cycle detection, amplitudes and frequency.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::ModeFlow;
use crate::linalg::Vec2;
use crate::model::{mode_select, AffineMode, ModeId, Psas, SwitchingLine};

/// Bisection iterations used to pin down a crossing.
pub const BISECTION_ITERS: usize = 80;

/// Scan step for a mode: small enough that the fastest eigen-direction
/// changes by at most 5 % between checks.
pub fn scan_step(flow: &ModeFlow, sample_dt: f64) -> f64 {
    let rate = flow.rate_bound();
    if rate > 0.0 {
        sample_dt.min(0.05 / rate)
    } else {
        sample_dt
    }
}

/// First time in `(0, t_max]` at which `exit_sign·(C·x − d)` turns positive.
///
/// `x` is advanced incrementally in steps of at least `dt_scan`; the
/// bracketing step is then bisected. Far from the line the step grows to
/// the longest one over which `|C·ẋ|`, bounded by `e^{‖A‖t}`, cannot close
/// the gap, so no crossing is skipped. The returned point is the exit-side
/// end of the final bracket, so it never lies on the side being left.
pub(crate) fn find_exit(
    flow: &ModeFlow,
    line: &SwitchingLine,
    x0: Vec2,
    exit_sign: f64,
    t_max: f64,
    dt_scan: f64,
    divergence_norm: f64,
) -> Result<Option<(f64, Vec2)>> {
    let exited = |x: Vec2| exit_sign * line.offset(x) > 0.0;
    let (mut t_prev, mut x_prev) = (0.0, x0);
    let a_norm = flow.mode().a.norm();
    let c_norm = line.c().norm();
    let safe_step = |x: Vec2| -> f64 {
        let gap = -exit_sign * line.offset(x);
        let speed = c_norm * flow.mode().rhs(x).norm();
        if !(gap > 0.0) {
            return 0.0;
        }
        if speed == 0.0 {
            return f64::INFINITY;
        }
        if a_norm > 0.0 {
            (a_norm * gap / speed).ln_1p() / a_norm
        } else {
            gap / speed
        }
    };
    loop {
        let t_k = (t_prev + dt_scan.max(0.9 * safe_step(x_prev))).min(t_max);
        let x_k = flow.advance(x_prev, t_k - t_prev)?;
        if exited(x_k) {
            let (mut lo, mut hi) = (0.0, t_k - t_prev);
            let mut x_hi = x_k;
            for _ in 0..BISECTION_ITERS {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let x_mid = flow.advance(x_prev, mid)?;
                if exited(x_mid) {
                    hi = mid;
                    x_hi = x_mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Some((t_prev + hi, x_hi)));
        }
        let norm = x_k.norm();
        if norm > divergence_norm {
            return Err(Error::Diverged { t: t_k, norm });
        }
        if t_k >= t_max {
            return Ok(None);
        }
        t_prev = t_k;
        x_prev = x_k;
    }
}

/// Time and point at which a trajectory of `mode` started at `x0` first
/// reaches the other side of `line`, if it does so within `t_max`.
pub fn next_switch_time(mode: &AffineMode, x0: Vec2, line: &SwitchingLine, t_max: f64) -> Option<(f64, Vec2)> {
    if !(t_max > 0.0) || !x0.is_finite() {
        return None;
    }
    let offset = line.offset(x0);
    let tol = line.boundary_tol();
    let exit_sign = if offset < -tol {
        1.0
    } else if offset > tol || line.project(mode.rhs(x0)) > 0.0 {
        -1.0
    } else {
        1.0
    };
    let flow = ModeFlow::new(mode);
    let dt = scan_step(&flow, 0.01);
    find_exit(&flow, line, x0, exit_sign, t_max, dt, f64::INFINITY)
        .ok()
        .flatten()
}

/// A crossing of the switching line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchEvent {
    pub t: f64,
    pub x: Vec2,
    pub from_mode: ModeId,
    pub to_mode: ModeId,
}

/// State sample with the mode active at that instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec2,
    pub mode: ModeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<SwitchEvent>,
    pub t_end: f64,
}

/// Guards applied while stepping a run.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// More switches than this within one time unit is treated as chattering.
    pub max_events_per_unit_time: usize,
    /// State norm beyond which a run is reported as diverged.
    pub divergence_norm: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            max_events_per_unit_time: 1000,
            divergence_norm: f64::INFINITY,
        }
    }
}

/// Advances a run from one switching event to the next.
#[derive(Debug, Clone)]
pub struct HybridStepper<'a> {
    psas: &'a Psas,
    flows: [ModeFlow; 2],
    dt_scan: [f64; 2],
    opts: SimOptions,
    recent: VecDeque<f64>,
    pub t: f64,
    pub x: Vec2,
    pub mode: ModeId,
}

fn idx(m: ModeId) -> usize {
    match m {
        ModeId::I => 0,
        ModeId::II => 1,
    }
}

impl<'a> HybridStepper<'a> {
    pub fn new(psas: &'a Psas, x0: Vec2, mode: ModeId, sample_dt: f64, opts: SimOptions) -> Self {
        let flows = [ModeFlow::new(&psas.mode_i), ModeFlow::new(&psas.mode_ii)];
        let dt_scan = [scan_step(&flows[0], sample_dt), scan_step(&flows[1], sample_dt)];
        Self {
            psas,
            flows,
            dt_scan,
            opts,
            recent: VecDeque::new(),
            t: 0.0,
            x: x0,
            mode,
        }
    }

    pub fn flow(&self, mode: ModeId) -> &ModeFlow {
        &self.flows[idx(mode)]
    }

    /// Moves to the next switching event before `t_limit`, or returns `None`
    /// leaving the state untouched.
    pub fn next_event(&mut self, t_limit: f64) -> Result<Option<SwitchEvent>> {
        let t_max = t_limit - self.t;
        if !(t_max > 0.0) {
            return Ok(None);
        }
        let i = idx(self.mode);
        let exit_sign = -self.mode.side();
        let found = find_exit(
            &self.flows[i],
            &self.psas.line,
            self.x,
            exit_sign,
            t_max,
            self.dt_scan[i],
            self.opts.divergence_norm,
        )
        .map_err(|e| match e {
            Error::NonFiniteState { t } => Error::NonFiniteState { t: self.t + t },
            Error::Diverged { t, norm } => Error::Diverged { t: self.t + t, norm },
            other => other,
        })?;
        let Some((dt, x)) = found else {
            return Ok(None);
        };
        if dt <= 1e-12 * self.t.abs().max(1.0) {
            return Err(Error::ChatteringDetected {
                t: self.t,
                events: self.recent.len() + 1,
            });
        }
        let event = SwitchEvent {
            t: self.t + dt,
            x,
            from_mode: self.mode,
            to_mode: self.mode.other(),
        };
        self.t = event.t;
        self.x = x;
        self.mode = event.to_mode;
        self.recent.push_back(event.t);
        while self.recent.front().is_some_and(|&s| s < event.t - 1.0) {
            self.recent.pop_front();
        }
        if self.recent.len() > self.opts.max_events_per_unit_time {
            return Err(Error::ChatteringDetected {
                t: event.t,
                events: self.recent.len(),
            });
        }
        Ok(Some(event))
    }
}

/// Simulates the system from `x0` until `t_end`, sampling every `sample_dt`
/// and at each switching event.
pub fn run(psas: &Psas, x0: Vec2, t_end: f64, sample_dt: f64) -> Result<Trajectory> {
    run_with(psas, x0, t_end, sample_dt, &SimOptions::default())
}

pub fn run_with(psas: &Psas, x0: Vec2, t_end: f64, sample_dt: f64, opts: &SimOptions) -> Result<Trajectory> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidInput(format!("t_end must be positive, got {t_end}")));
    }
    if !(sample_dt > 0.0 && sample_dt.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "sample_dt must be positive, got {sample_dt}"
        )));
    }
    if !x0.is_finite() {
        return Err(Error::NonFiniteInput("initial state".into()));
    }
    let mode = mode_select(psas, x0, None);
    let mut stepper = HybridStepper::new(psas, x0, mode, sample_dt, *opts);
    let n_grid = (t_end / sample_dt * (1.0 + 1e-12)).floor() as u64;
    let mut samples = vec![Sample { t: 0.0, x: x0, mode }];
    let mut events = Vec::new();
    let mut k = 1u64;
    loop {
        let (t0, xs, m) = (stepper.t, stepper.x, stepper.mode);
        let event = stepper.next_event(t_end)?;
        let flow = *stepper.flow(m);
        while k <= n_grid {
            let tk = k as f64 * sample_dt;
            if tk <= t0 {
                k += 1;
                continue;
            }
            let inside = match &event {
                Some(e) => tk < e.t,
                None => true,
            };
            if !inside {
                break;
            }
            let x = flow.advance(xs, tk - t0)?;
            samples.push(Sample { t: tk, x, mode: m });
            k += 1;
        }
        match event {
            Some(e) => {
                samples.push(Sample {
                    t: e.t,
                    x: e.x,
                    mode: e.to_mode,
                });
                events.push(e);
            }
            None => break,
        }
    }
    Ok(Trajectory { samples, events, t_end })
}

/// Periodic orbit read off a sequence of switching events.
///
/// `x_s0` is where mode I takes over and `x_s1` where mode II does.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleEstimate {
    #[serde(rename = "period_T")]
    pub period_t: f64,
    pub x_s0: Vec2,
    pub x_s1: Vec2,
    pub center: Vec2,
    pub converged: bool,
    pub residual: f64,
    /// Time spent in mode I during the last full cycle.
    pub t_s1: f64,
}

impl CycleEstimate {
    pub fn frequency(&self) -> Result<f64> {
        frequency(self.period_t)
    }
}

/// Cycle estimate from the last crossings in each direction.
pub fn detect_limit_cycle(traj: &Trajectory, tol: f64) -> Result<CycleEstimate> {
    cycle_from_events(&traj.events, tol)
}

pub fn cycle_from_events(events: &[SwitchEvent], tol: f64) -> Result<CycleEstimate> {
    let found = events.len();
    let err = || Error::InsufficientEvents { needed: 4, found };
    if found < 4 {
        return Err(err());
    }
    let last_two = |to: ModeId| {
        let mut it = events.iter().enumerate().rev().filter(|(_, e)| e.to_mode == to);
        Some((it.next()?, it.next()?))
    };
    let ((i0, e0), (j0, e0_prev)) = last_two(ModeId::I).ok_or_else(err)?;
    let ((_, e1), (_, e1_prev)) = last_two(ModeId::II).ok_or_else(err)?;
    let residual = e0.x.distance(e0_prev.x).max(e1.x.distance(e1_prev.x));
    let period_t = e0.t - e0_prev.t;
    let t_s1 = events[j0 + 1..i0]
        .iter()
        .find(|e| e.to_mode == ModeId::II)
        .map_or(f64::NAN, |e| e.t - e0_prev.t);
    Ok(CycleEstimate {
        period_t,
        x_s0: e0.x,
        x_s1: e1.x,
        center: e0.x.midpoint(e1.x),
        converged: residual <= tol && period_t > 0.0,
        residual,
        t_s1,
    })
}

/// Search limits for [`find_cycle`].
#[derive(Debug, Clone, Copy)]
pub struct CycleSearch {
    pub tol: f64,
    pub max_time: f64,
    pub max_events: usize,
    pub opts: SimOptions,
}

impl Default for CycleSearch {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_time: 1e5,
            max_events: 20_000,
            opts: SimOptions::default(),
        }
    }
}

/// Runs from `x0` switching event by switching event until successive
/// crossings agree to `search.tol`, without storing samples.
pub fn find_cycle(psas: &Psas, x0: Vec2, search: &CycleSearch) -> Result<CycleEstimate> {
    let mode = mode_select(psas, x0, None);
    let mut stepper = HybridStepper::new(psas, x0, mode, f64::INFINITY, search.opts);
    let mut events: Vec<SwitchEvent> = Vec::new();
    while events.len() < search.max_events {
        let Some(e) = stepper.next_event(search.max_time)? else {
            break;
        };
        events.push(e);
        if events.len() >= 5 && e.to_mode == ModeId::I {
            let est = cycle_from_events(&events, search.tol)?;
            if est.converged {
                return Ok(est);
            }
        }
        if events.len() > 8 {
            events.drain(..events.len() - 8);
        }
    }
    cycle_from_events(&events, search.tol)
}

/// Amplitude of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmplitudeSample {
    pub t: f64,
    pub amplitude: f64,
    pub mode: ModeId,
}

/// An amplitude extremum, with the time since its phase began.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extremum {
    pub t: f64,
    pub phase_time: f64,
    pub amplitude: f64,
    pub x: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RegionExtrema {
    pub max_i: Option<Extremum>,
    pub min_i: Option<Extremum>,
    pub max_ii: Option<Extremum>,
    pub min_ii: Option<Extremum>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplitudeProfile {
    pub points: Vec<AmplitudeSample>,
    pub extrema: RegionExtrema,
}

/// Distance of every sample to `center`, plus per-region extrema over the
/// last full period (between the last two entries into mode I), or over the
/// whole run when fewer than two such entries exist.
pub fn amplitude_profile(traj: &Trajectory, center: Vec2) -> AmplitudeProfile {
    let entries: Vec<f64> = traj
        .events
        .iter()
        .filter(|e| e.to_mode == ModeId::I)
        .map(|e| e.t)
        .collect();
    let window = match entries.as_slice() {
        [.., a, b] => (*a, *b),
        _ => (f64::NEG_INFINITY, f64::INFINITY),
    };
    let mut points = Vec::with_capacity(traj.samples.len());
    let mut extrema = RegionExtrema::default();
    let mut ev = 0;
    let mut phase_start = 0.0;
    for s in &traj.samples {
        while ev < traj.events.len() && traj.events[ev].t <= s.t {
            phase_start = traj.events[ev].t;
            ev += 1;
        }
        let amplitude = s.x.distance(center);
        points.push(AmplitudeSample {
            t: s.t,
            amplitude,
            mode: s.mode,
        });
        if s.t < window.0 || s.t > window.1 {
            continue;
        }
        let cand = Extremum {
            t: s.t,
            phase_time: s.t - phase_start,
            amplitude,
            x: s.x,
        };
        let (mx, mn) = match s.mode {
            ModeId::I => (&mut extrema.max_i, &mut extrema.min_i),
            ModeId::II => (&mut extrema.max_ii, &mut extrema.min_ii),
        };
        if mx.is_none_or(|m| amplitude > m.amplitude) {
            *mx = Some(cand);
        }
        if mn.is_none_or(|m| amplitude < m.amplitude) {
            *mn = Some(cand);
        }
    }
    AmplitudeProfile { points, extrema }
}

/// Angular frequency `2π/T`.
pub fn frequency(period: f64) -> Result<f64> {
    if period > 0.0 && period.is_finite() {
        Ok(2.0 * PI / period)
    } else {
        Err(Error::NonPositivePeriod(period))
    }
}

/// Writes `t,x1,x2,mode` rows.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,x1,x2,mode")?;
    for s in &traj.samples {
        writeln!(out, "{},{},{},{}", s.t, s.x.x1, s.x.x2, s.mode.number())?;
    }
    out.flush()
}

/// Writes `t,x1,x2,from,to` rows.
pub fn write_events_csv<W: Write>(events: &[SwitchEvent], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,x1,x2,from,to")?;
    for e in events {
        writeln!(
            out,
            "{},{},{},{},{}",
            e.t,
            e.x.x1,
            e.x.x2,
            e.from_mode.number(),
            e.to_mode.number()
        )?;
    }
    out.flush()
}
