//! Recovering a switching system from measured periodic data.
//!
//! The pipeline finds the kinks where the dynamics switch, fits the
//! switching line through them, reads characteristic points off each
//! region, and hands the resulting cycle spec to the design solver.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use log::{info, warn};
use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::design::{default_init, solve_design, CycleSpec, DesignResult, SolveOptions, TimedPoint};
use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::model::{ModeId, Psas, SwitchingLine};
use crate::simulate::{find_cycle, run, CycleEstimate, CycleSearch};
use crate::verify::{check_global_stability, grid, Verdict};

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DataMeta {
    pub source: String,
    pub noise_estimate: Option<f64>,
}

/// Time series of two observables.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub t: Vec<f64>,
    pub y: Vec<Vec2>,
    pub meta: DataMeta,
}

impl DataSet {
    pub fn new(t: Vec<f64>, y: Vec<Vec2>, source: &str) -> Result<DataSet> {
        if t.len() != y.len() {
            return Err(Error::InvalidInput(format!(
                "{} times but {} observations",
                t.len(),
                y.len()
            )));
        }
        check_monotone(&t)?;
        Ok(DataSet {
            t,
            y,
            meta: DataMeta {
                source: source.to_string(),
                noise_estimate: None,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,y1,y2")?;
        for (t, y) in self.t.iter().zip(&self.y) {
            writeln!(out, "{},{},{}", t, y.x1, y.x2)?;
        }
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))?;
        Ok(())
    }
}

fn check_monotone(t: &[f64]) -> Result<()> {
    for (k, w) in t.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::NonMonotoneTime { row: k + 1 });
        }
    }
    Ok(())
}

/// Reads a `t,y1,y2` CSV file.
///
/// `NonMonotoneTime::row` is the zero-based data row whose time does not
/// exceed its predecessor's.
pub fn load_timeseries(path: impl AsRef<Path>) -> Result<DataSet> {
    let path = path.as_ref();
    let source = path.display().to_string();
    read_timeseries(File::open(path)?, &source)
}

pub fn read_timeseries<R: Read>(input: R, source: &str) -> Result<DataSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().map(str::trim).collect::<Vec<_>>() != ["t", "y1", "y2"] {
        return Err(Error::Parse {
            line: 1,
            message: "expected header t,y1,y2".into(),
        });
    }
    let mut t = Vec::new();
    let mut y = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |k: usize| -> Result<f64> {
            let raw = rec.get(k).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse {raw:?} as a number"),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse {
                    line,
                    message: "non-finite value".into(),
                })
            }
        };
        if rec.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        t.push(field(0)?);
        y.push(Vec2::new(field(1)?, field(2)?));
    }
    DataSet::new(t, y, source)
}

/// Samples a model every `dt` from `x0` and adds independent Gaussian
/// noise of standard deviation `sigma` to each component.
pub fn measure(psas: &Psas, x0: Vec2, t_end: f64, dt: f64, sigma: f64, seed: u64) -> Result<DataSet> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma must be non-negative, got {sigma}")));
    }
    let traj = run(psas, x0, t_end, dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut t = Vec::with_capacity(traj.samples.len());
    let mut y = Vec::with_capacity(traj.samples.len());
    let mut ev = traj.events.iter().map(|e| e.t).peekable();
    for s in &traj.samples {
        // switching instants are not part of the sampling grid
        if ev.peek() == Some(&s.t) {
            ev.next();
            continue;
        }
        t.push(s.t);
        y.push(s.x + Vec2::new(normal.sample(&mut rng), normal.sample(&mut rng)));
    }
    DataSet::new(t, y, "psas")
}

/// Measurement-noise level from the median absolute second difference.
pub fn estimate_noise(y: &[Vec2]) -> f64 {
    if y.len() < 3 {
        return 0.0;
    }
    let comp = |f: fn(&Vec2) -> f64| {
        let mut d: Vec<f64> = y
            .windows(3)
            .map(|w| (f(&w[2]) - 2.0 * f(&w[1]) + f(&w[0])).abs())
            .collect();
        let mid = d.len() / 2;
        let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
        *m / 0.6745 / 6f64.sqrt()
    };
    0.5 * (comp(|v| v.x1) + comp(|v| v.x2))
}

/// Centred moving average; the window shrinks symmetrically at the ends.
pub fn smooth(y: &[Vec2], window: usize) -> Vec<Vec2> {
    let n = y.len();
    let h = window / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(Vec2::ZERO);
    for v in y {
        let last = *prefix.last().unwrap();
        prefix.push(last + *v);
    }
    (0..n)
        .map(|i| {
            let r = h.min(i).min(n - 1 - i);
            let (a, b) = (i - r, i + r + 1);
            (prefix[b] - prefix[a]) * (1.0 / (b - a) as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    /// Moving-average window in samples.
    pub smooth_window: usize,
    /// Turning angle in degrees above which a kink is flagged.
    pub curvature_threshold: f64,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            smooth_window: 11,
            curvature_threshold: 30.0,
        }
    }
}

/// A detected switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchPoint {
    pub index: usize,
    pub t: f64,
    pub x: Vec2,
    /// Chord change `‖after − before‖` at the strongest flagged sample.
    pub strength: f64,
}

/// Finds the kinks of a piecewise smooth loop.
///
/// For each sample the chords to the samples one window before and after
/// are compared on the smoothed signal. A kink is flagged when
/// `‖after − before‖ > 2·sin(θ/2)·max(‖before‖, ‖after‖)`, which for equal
/// speeds is a turn by more than `θ` and also catches sudden speed jumps,
/// and when that change stands clear of the noise: above both the level the
/// sample noise estimate predicts and the robust spread of the statistic
/// over the whole record. Flags within
/// one window of each other form a cluster; its strongest sample seeds a
/// continuous two-segment fit whose hinge is the reported switch.
pub fn detect_switchings(data: &DataSet, opts: &DetectOptions) -> Result<Vec<SwitchPoint>> {
    let w = opts.smooth_window.max(3);
    let n = data.len();
    if n < 2 * w + 1 {
        return Err(Error::NoSwitchDetected(format!(
            "need at least {} samples, got {n}",
            2 * w + 1
        )));
    }
    let s = smooth(&data.y, w);
    let sigma = data.meta.noise_estimate.unwrap_or_else(|| estimate_noise(&data.y));
    let gate = 6.0 * sigma * (6.0 / w as f64).sqrt();
    let ratio = 2.0 * (opts.curvature_threshold.to_radians() * 0.5).sin();

    let deltas: Vec<(f64, f64)> = (w..n - w)
        .map(|i| {
            let before = s[i] - s[i - w];
            let after = s[i + w] - s[i];
            ((after - before).norm(), before.norm().max(after.norm()))
        })
        .collect();
    // kinks are rare, so the bulk of the statistic shows what the noise
    // does to it, whatever kind of noise that is
    let mut sorted: Vec<f64> = deltas.iter().map(|d| d.0).collect();
    sorted.sort_by(f64::total_cmp);
    let med = sorted[sorted.len() / 2];
    let mut dev: Vec<f64> = sorted.iter().map(|d| (d - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let gate = gate.max(med + 10.0 * 1.4826 * dev[dev.len() / 2]);

    let mut clusters: Vec<(usize, usize, f64)> = Vec::new();
    let mut last: Option<usize> = None;
    for (k, &(delta, chord)) in deltas.iter().enumerate() {
        let i = k + w;
        if delta > gate && delta > ratio * chord {
            match (last, clusters.last_mut()) {
                (Some(j), Some(c)) if i - j <= w => {
                    if delta > c.2 {
                        c.1 = i;
                        c.2 = delta;
                    }
                }
                _ => clusters.push((i, i, delta)),
            }
            last = Some(i);
        }
    }
    if clusters.len() < 2 {
        return Err(Error::NoSwitchDetected(format!(
            "found {} kink cluster(s), need at least 2",
            clusters.len()
        )));
    }
    Ok(clusters
        .iter()
        .map(|&(_, peak, delta)| hinge_fit(data, peak, w, delta))
        .collect())
}

/// Continuous two-piece fit in time around `peak`, joined at the hinge.
///
/// Straight pieces locate the hinge on a sub-sample grid; quadratic pieces
/// then move it by at most two samples, which removes the bias straight
/// pieces pick up on curved branches.
fn hinge_fit(data: &DataSet, peak: usize, w: usize, strength: f64) -> SwitchPoint {
    let lo = peak.saturating_sub(w);
    let hi = (peak + w).min(data.len() - 1);
    let ts = &data.t[lo..=hi];
    let ys = &data.y[lo..=hi];
    let fit = |tau: f64, quadratic: bool| -> Option<(f64, Vec2)> {
        let basis = |t: f64| {
            let d = t - tau;
            let (a, b) = (d.min(0.0), d.max(0.0));
            if quadratic {
                SVector::<f64, 5>::new(1.0, a, b, a * a, b * b)
            } else {
                SVector::<f64, 5>::new(1.0, a, b, 0.0, 0.0)
            }
        };
        let mut m = SMatrix::<f64, 5, 5>::zeros();
        let mut r1 = SVector::<f64, 5>::zeros();
        let mut r2 = SVector::<f64, 5>::zeros();
        for (t, y) in ts.iter().zip(ys) {
            let row = basis(*t);
            m += row * row.transpose();
            r1 += row * y.x1;
            r2 += row * y.x2;
        }
        if !quadratic {
            m[(3, 3)] = 1.0;
            m[(4, 4)] = 1.0;
        }
        let inv = m.try_inverse()?;
        let (c1, c2) = (inv * r1, inv * r2);
        let sse = ts
            .iter()
            .zip(ys)
            .map(|(t, y)| {
                let row = basis(*t);
                (row.dot(&c1) - y.x1).powi(2) + (row.dot(&c2) - y.x2).powi(2)
            })
            .sum();
        Some((sse, Vec2::new(c1[0], c2[0])))
    };
    const SUB: usize = 4;
    let mut best = (f64::INFINITY, data.t[peak], data.y[peak]);
    let mut spacing = 0.0;
    for k in 1..ts.len() - 1 {
        let h = ts[k + 1] - ts[k];
        for sub in 0..SUB {
            let tau = ts[k] + h * sub as f64 / SUB as f64;
            if let Some((sse, x)) = fit(tau, false) {
                if sse < best.0 {
                    best = (sse, tau, x);
                    spacing = h;
                }
            }
        }
    }
    if spacing > 0.0 && ts.len() >= 8 {
        let cost = |tau: f64| fit(tau, true).map_or(f64::INFINITY, |f| f.0);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (best.1 - 2.0 * spacing, best.1 + 2.0 * spacing);
        let (mut u, mut v) = (b - g * (b - a), a + g * (b - a));
        let (mut fu, mut fv) = (cost(u), cost(v));
        for _ in 0..40 {
            if fu < fv {
                b = v;
                (v, fv) = (u, fu);
                u = b - g * (b - a);
                fu = cost(u);
            } else {
                a = u;
                (u, fu) = (v, fv);
                v = a + g * (b - a);
                fv = cost(v);
            }
        }
        let tau = 0.5 * (a + b);
        if let Some((sse, x)) = fit(tau, true) {
            best = (sse, tau, x);
        }
    }
    SwitchPoint {
        index: peak,
        t: best.1,
        x: best.2,
        strength,
    }
}

/// Orthogonal-regression line through the points, scaled so that `c12 = 1`
/// (or `c11 = 1` for a vertical line).
pub fn fit_switching_line(points: &[Vec2]) -> Result<SwitchingLine> {
    if points.len() < 2 {
        return Err(Error::DegeneratePoints);
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec2::ZERO, |a, p| a + *p) * (1.0 / n);
    if points.iter().all(|p| p.distance(mean) <= 1e-9) {
        return Err(Error::DegeneratePoints);
    }
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = *p - mean;
        sxx += d.x1 * d.x1;
        sxy += d.x1 * d.x2;
        syy += d.x2 * d.x2;
    }
    // direction of largest spread; the normal is perpendicular to it
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let normal = Vec2::new(-angle.sin(), angle.cos());
    normalized_line(normal, normal.dot(mean))
}

fn normalized_line(c: Vec2, d: f64) -> Result<SwitchingLine> {
    let scale = c.norm();
    if c.x2.abs() > 1e-12 * scale {
        SwitchingLine::new(c.x1 / c.x2, 1.0, d / c.x2)
    } else {
        SwitchingLine::new(1.0, c.x2 / c.x1, d / c.x1)
    }
}

/// Which distance extremum characterises a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    /// Whichever of maximum and minimum lies deeper inside the phase.
    #[default]
    Auto,
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extrema {
    pub p_i: Vec2,
    pub tau_i: f64,
    pub kind_i: ExtremumKind,
    pub p_ii: Vec2,
    pub tau_ii: f64,
    pub kind_ii: ExtremumKind,
    pub center: Vec2,
}

/// A switch with the mode it hands over to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectedSwitch {
    pub point: SwitchPoint,
    pub entering: ModeId,
}

/// Labels each switch by the side the data moves to.
pub fn classify_switches(
    data: &DataSet,
    line: &SwitchingLine,
    switches: &[SwitchPoint],
    window: usize,
) -> Vec<DirectedSwitch> {
    let s = smooth(&data.y, window);
    let n = s.len();
    switches
        .iter()
        .map(|sw| {
            let before = line.offset(s[sw.index.saturating_sub(window)]);
            let after = line.offset(s[(sw.index + window).min(n - 1)]);
            DirectedSwitch {
                point: *sw,
                entering: if after < before { ModeId::I } else { ModeId::II },
            }
        })
        .collect()
}

/// Keeps the strongest switch of every run heading into the same mode, so
/// the result alternates between the two modes.
pub fn alternating(directed: &[DirectedSwitch]) -> Vec<DirectedSwitch> {
    let mut out: Vec<DirectedSwitch> = Vec::with_capacity(directed.len());
    for d in directed {
        match out.last_mut() {
            Some(prev) if prev.entering == d.entering => {
                if d.point.strength > prev.point.strength {
                    *prev = *d;
                }
            }
            _ => out.push(*d),
        }
    }
    out
}

/// Consecutive switch pairs bounding one complete phase of `mode`.
fn phases(switches: &[DirectedSwitch], mode: ModeId) -> impl Iterator<Item = (&DirectedSwitch, &DirectedSwitch)> {
    switches
        .windows(2)
        .filter(move |w| w[0].entering == mode && w[1].entering == mode.other())
        .map(|w| (&w[0], &w[1]))
}

fn mean(points: impl Iterator<Item = Vec2>) -> Option<Vec2> {
    let (sum, n) = points.fold((Vec2::ZERO, 0usize), |(s, n), p| (s + p, n + 1));
    (n > 0).then(|| sum * (1.0 / n as f64))
}

/// Mean crossing points entering mode I and mode II.
pub fn mean_crossings(switches: &[DirectedSwitch]) -> Result<(Vec2, Vec2)> {
    let pick = |m: ModeId| mean(switches.iter().filter(|s| s.entering == m).map(|s| s.point.x));
    match (pick(ModeId::I), pick(ModeId::II)) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::InsufficientPeriod),
    }
}

/// Characteristic points of both regions from the smoothed data.
///
/// Per complete phase the sample farthest from (or closest to) the centre
/// is taken, first index winning ties; the points and their times since the
/// phase began are averaged over all phases of that region.
pub fn extract_extrema(
    data: &DataSet,
    line: &SwitchingLine,
    switches: &[SwitchPoint],
    window: usize,
    kind: ExtremumKind,
) -> Result<Extrema> {
    let directed = classify_switches(data, line, switches, window);
    let (m0, m1) = mean_crossings(&directed)?;
    let center = m0.midpoint(m1);
    let s = smooth(&data.y, window);
    let region = |mode: ModeId| -> Result<(Vec2, f64, ExtremumKind)> {
        let spans: Vec<(usize, usize, f64)> = phases(&directed, mode)
            .map(|(a, b)| (a.point.index, b.point.index, a.point.t))
            .filter(|(a, b, _)| *b > a + 1)
            .collect();
        if spans.is_empty() {
            return Err(Error::InsufficientPeriod);
        }
        let arg = |(a, b, _): (usize, usize, f64), max: bool| {
            let mut best = a + 1;
            for j in a + 1..b {
                let d = s[j].distance(center);
                let cur = s[best].distance(center);
                let eps = 1e-12 * cur;
                if (max && d > cur + eps) || (!max && d < cur - eps) {
                    best = j;
                }
            }
            best
        };
        let kind = match kind {
            ExtremumKind::Auto => {
                // a point next to a switch adds little beyond the switch itself
                let depth = |max: bool| -> f64 {
                    spans
                        .iter()
                        .map(|&sp| {
                            let j = arg(sp, max);
                            (j - sp.0).min(sp.1 - j) as f64 / (sp.1 - sp.0) as f64
                        })
                        .sum::<f64>()
                };
                if depth(true) >= depth(false) {
                    ExtremumKind::Max
                } else {
                    ExtremumKind::Min
                }
            }
            k => k,
        };
        let picks: Vec<(Vec2, f64)> = spans
            .iter()
            .map(|&sp| {
                let max = kind == ExtremumKind::Max;
                let j = arg(sp, max);
                let (x, t) =
                    refine_extremum(data, j, (sp.0 + 1, sp.1 - 1), window, center, max).unwrap_or((s[j], data.t[j]));
                (x, t - sp.2)
            })
            .collect();
        let n = picks.len() as f64;
        let p = mean(picks.iter().map(|p| p.0)).expect("non-empty");
        let tau = picks.iter().map(|p| p.1).sum::<f64>() / n;
        Ok((p, tau, kind))
    };
    let (p_i, tau_i, kind_i) = region(ModeId::I)?;
    let (p_ii, tau_ii, kind_ii) = region(ModeId::II)?;
    Ok(Extrema {
        p_i,
        tau_i,
        kind_i,
        p_ii,
        tau_ii,
        kind_ii,
        center,
    })
}

/// Fits a quadratic in time to the raw samples within one window of `j`
/// (kept inside `bounds`) and searches it for the distance extremum.
fn refine_extremum(
    data: &DataSet,
    j: usize,
    bounds: (usize, usize),
    window: usize,
    center: Vec2,
    max: bool,
) -> Option<(Vec2, f64)> {
    let lo = j.saturating_sub(window).max(bounds.0);
    let hi = (j + window).min(bounds.1);
    if hi < lo + 3 {
        return None;
    }
    let t0 = data.t[j];
    let mut m = Matrix3::<f64>::zeros();
    let mut r1 = Vector3::<f64>::zeros();
    let mut r2 = Vector3::<f64>::zeros();
    for i in lo..=hi {
        let d = data.t[i] - t0;
        let row = Vector3::new(1.0, d, d * d);
        m += row * row.transpose();
        r1 += row * data.y[i].x1;
        r2 += row * data.y[i].x2;
    }
    let inv = m.try_inverse()?;
    let (c1, c2) = (inv * r1, inv * r2);
    let at = |d: f64| Vec2::new(c1[0] + d * (c1[1] + d * c1[2]), c2[0] + d * (c2[1] + d * c2[2]));
    let sign = if max { -1.0 } else { 1.0 };
    let cost = |d: f64| sign * at(d).distance(center);
    // golden section over the half-window around the sample
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (
        (data.t[lo] - t0).max(0.5 * (data.t[j.saturating_sub(1).max(lo)] - t0)),
        (data.t[hi] - t0).min(0.5 * (data.t[(j + 1).min(hi)] - t0)),
    );
    let (mut u, mut v) = (b - g * (b - a), a + g * (b - a));
    let (mut fu, mut fv) = (cost(u), cost(v));
    for _ in 0..50 {
        if fu < fv {
            b = v;
            (v, fv) = (u, fu);
            u = b - g * (b - a);
            fu = cost(u);
        } else {
            a = u;
            (u, fu) = (v, fv);
            v = a + g * (b - a);
            fv = cost(v);
        }
    }
    let d = 0.5 * (a + b);
    let x = at(d);
    x.is_finite().then_some((x, t0 + d))
}

/// Least-squares fit of each region's `A, b` from the samples away from the
/// switches; a region with too few samples keeps the fallback.
///
/// Uses the integral form `y(t+L) − y(t) = A·∫y + b·L`, which holds for any
/// lag `L` and averages the noise out instead of differentiating it.
pub fn regression_init(data: &DataSet, directed: &[DirectedSwitch], window: usize, fallback: &[f64; 12]) -> [f64; 12] {
    let s = smooth(&data.y, window);
    let n = s.len();
    let mut normal = [Matrix3::<f64>::zeros(), Matrix3::zeros()];
    let mut rhs = [[Vector3::<f64>::zeros(); 2]; 2];
    let mut count = [0usize; 2];
    for pair in directed.windows(2) {
        let m = match pair[0].entering {
            ModeId::I => 0,
            ModeId::II => 1,
        };
        let a = pair[0].point.index + window;
        let b = pair[1].point.index.saturating_sub(window).min(n - 1);
        if b <= a + 2 {
            continue;
        }
        let lag = ((b - a) / 10).max(window).min(b - a);
        // cumulative trapezoid integral of the smoothed signal from a
        let mut cum = Vec::with_capacity(b - a + 1);
        cum.push(Vec2::ZERO);
        for i in a + 1..=b {
            let dt = data.t[i] - data.t[i - 1];
            let last = cum[cum.len() - 1];
            cum.push(last + (s[i] + s[i - 1]) * (0.5 * dt));
        }
        for i in a..=b - lag {
            let (j, k) = (i - a, i - a + lag);
            let integral = cum[k] - cum[j];
            let row = Vector3::new(integral.x1, integral.x2, data.t[i + lag] - data.t[i]);
            let dy = s[i + lag] - s[i];
            normal[m] += row * row.transpose();
            rhs[m][0] += row * dy.x1;
            rhs[m][1] += row * dy.x2;
            count[m] += 1;
        }
    }
    let mut u = *fallback;
    for m in 0..2 {
        if count[m] < 10 {
            continue;
        }
        let Some(inv) = normal[m].try_inverse() else { continue };
        let r1 = inv * rhs[m][0];
        let r2 = inv * rhs[m][1];
        let o = 6 * m;
        u[o..o + 6].copy_from_slice(&[r1[0], r1[1], r2[0], r2[1], r1[2], r2[2]]);
    }
    u
}

/// Symmetric Hausdorff distance between two closed polylines.
pub fn cycle_deviation(a: &[Vec2], b: &[Vec2]) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

fn directed_hausdorff(from: &[Vec2], to: &[Vec2]) -> f64 {
    from.iter()
        .map(|p| {
            (0..to.len())
                .map(|k| segment_distance(*p, to[k], to[(k + 1) % to.len()]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sq();
    let s = if len2 > 0.0 {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.distance(a + ab * s)
}

fn interpolate(t: &[f64], y: &[Vec2], at: f64) -> Vec2 {
    let k = t.partition_point(|&s| s <= at).clamp(1, t.len() - 1);
    let (t0, t1) = (t[k - 1], t[k]);
    let w = ((at - t0) / (t1 - t0)).clamp(0.0, 1.0);
    y[k - 1] + (y[k] - y[k - 1]) * w
}

/// Data loop averaged over all complete cycles: each phase is resampled on
/// `per_phase` points of normalised time and averaged across cycles.
pub fn averaged_loop(data: &DataSet, directed: &[DirectedSwitch], per_phase: usize) -> Result<Vec<Vec2>> {
    let mut acc = vec![Vec2::ZERO; 2 * per_phase];
    let mut cycles = 0usize;
    for w in directed.windows(3) {
        if w[0].entering != ModeId::I || w[1].entering != ModeId::II || w[2].entering != ModeId::I {
            continue;
        }
        for (seg, (a, b)) in [(w[0].point.t, w[1].point.t), (w[1].point.t, w[2].point.t)]
            .into_iter()
            .enumerate()
        {
            for k in 0..per_phase {
                let at = a + (b - a) * k as f64 / per_phase as f64;
                acc[seg * per_phase + k] = acc[seg * per_phase + k] + interpolate(&data.t, &data.y, at);
            }
        }
        cycles += 1;
    }
    if cycles == 0 {
        return Err(Error::InsufficientPeriod);
    }
    Ok(acc.into_iter().map(|v| v * (1.0 / cycles as f64)).collect())
}

#[derive(Debug, Clone, Copy)]
pub struct IdentifyOptions {
    pub detect: DetectOptions,
    pub extremum: ExtremumKind,
    pub solve: SolveOptions,
    /// Periods simulated before comparing the model cycle with the data.
    pub cycle_periods: usize,
    /// Side of the stability grid around the identified cycle.
    pub stability_grid: usize,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            detect: DetectOptions::default(),
            extremum: ExtremumKind::Auto,
            solve: SolveOptions::default(),
            cycle_periods: 5,
            stability_grid: 3,
        }
    }
}

/// Everything the identification produced.
#[derive(Debug, Clone, Serialize)]
pub struct IdentifyReport {
    pub fitted_line: SwitchingLine,
    pub switch_points: Vec<Vec2>,
    pub extrema: Extrema,
    pub spec: CycleSpec,
    pub design: DesignResult,
    pub model_cycle: CycleEstimate,
    pub cycle_deviation: f64,
    pub stability: Verdict,
    pub noise_estimate: f64,
}

/// Fits the line, then alternately drops switches that break the mode
/// alternation or sit far off the line and refits, until nothing changes.
fn settle_switches(
    data: &DataSet,
    mut kept: Vec<SwitchPoint>,
    w: usize,
    noise: f64,
) -> Result<(SwitchingLine, Vec<DirectedSwitch>)> {
    loop {
        let points: Vec<Vec2> = kept.iter().map(|s| s.x).collect();
        let line = fit_switching_line(&points)?;
        let directed = alternating(&classify_switches(data, &line, &kept, w));
        let dist: Vec<f64> = directed
            .iter()
            .map(|d| line.offset(d.point.x).abs() / line.c().norm())
            .collect();
        let mut sorted = dist.clone();
        sorted.sort_by(f64::total_cmp);
        let scale = 1.4826 * sorted[sorted.len() / 2];
        let limit = (5.0 * scale).max(3.0 * noise).max(1e-9 * (1.0 + line.d.abs()));
        let next: Vec<SwitchPoint> = directed
            .iter()
            .zip(&dist)
            .filter(|(_, d)| **d <= limit)
            .map(|(d, _)| d.point)
            .collect();
        if next.len() == kept.len() {
            return Ok((line, directed));
        }
        warn!(
            "dropped {} switches off the line or out of turn",
            kept.len() - next.len()
        );
        if next.len() < 2 {
            return Err(Error::DegeneratePoints);
        }
        kept = next;
    }
}

/// Runs the whole pipeline; failures carry the name of the stage.
pub fn identify_psas(data: &DataSet, opts: &IdentifyOptions) -> Result<IdentifyReport> {
    let w = opts.detect.smooth_window.max(3);
    let noise = data.meta.noise_estimate.unwrap_or_else(|| estimate_noise(&data.y));

    let switches = detect_switchings(data, &opts.detect).map_err(|e| e.in_stage("detect"))?;
    info!("detected {} switches", switches.len());
    let (line, directed) = settle_switches(data, switches, w, noise).map_err(|e| e.in_stage("fit"))?;
    let switches: Vec<SwitchPoint> = directed.iter().map(|d| d.point).collect();
    let points: Vec<Vec2> = switches.iter().map(|s| s.x).collect();
    let extrema = extract_extrema(data, &line, &switches, w, opts.extremum).map_err(|e| e.in_stage("extrema"))?;
    let spec = build_spec(&line, &directed, &extrema).map_err(|e| e.in_stage("spec"))?;
    if directed.iter().filter(|d| d.entering == ModeId::I).count() < 3 {
        warn!("fewer than three periods in the data; estimates may be poor");
    }

    let init = regression_init(data, &directed, w, &default_init(&spec));
    let design = match solve_design(&spec, Some(init), &opts.solve) {
        Ok(d) if d.phase_consistent => d,
        _ => solve_design(&spec, None, &opts.solve).map_err(|e| e.in_stage("design"))?,
    };

    let psas = design.psas;
    let (model_cycle, model_loop) = model_loop(&psas, &spec, opts.cycle_periods).map_err(|e| e.in_stage("simulate"))?;
    let data_loop = averaged_loop(data, &directed, 200).map_err(|e| e.in_stage("extrema"))?;
    let deviation = cycle_deviation(&model_loop, &data_loop);

    let (lo, hi) = bounding_box(&model_loop);
    let pad = (hi - lo) * 0.5;
    let g = grid(
        (lo.x1 - pad.x1, hi.x1 + pad.x1),
        (lo.x2 - pad.x2, hi.x2 + pad.x2),
        opts.stability_grid,
    );
    let stability = check_global_stability(&psas, &model_cycle, &g).verdict;

    Ok(IdentifyReport {
        fitted_line: line,
        switch_points: points,
        extrema,
        spec,
        design,
        model_cycle,
        cycle_deviation: deviation,
        stability,
        noise_estimate: noise,
    })
}

fn build_spec(line: &SwitchingLine, directed: &[DirectedSwitch], ex: &Extrema) -> Result<CycleSpec> {
    let (m0, m1) = mean_crossings(directed)?;
    let x_s0 = line.project_point(m0);
    let x_s1 = line.project_point(m1);
    let intervals = |m: ModeId| -> Vec<f64> {
        let ts: Vec<f64> = directed.iter().filter(|d| d.entering == m).map(|d| d.point.t).collect();
        ts.windows(2).map(|w| w[1] - w[0]).collect()
    };
    let mut all = intervals(ModeId::I);
    all.extend(intervals(ModeId::II));
    if all.is_empty() {
        return Err(Error::InsufficientPeriod);
    }
    let period = all.iter().sum::<f64>() / all.len() as f64;
    let phase_i: Vec<f64> = phases(directed, ModeId::I)
        .map(|(a, b)| b.point.t - a.point.t)
        .collect();
    if phase_i.is_empty() {
        return Err(Error::InsufficientPeriod);
    }
    let t_s1 = phase_i.iter().sum::<f64>() / phase_i.len() as f64;
    if !(t_s1 > 0.0 && period > t_s1) {
        return Err(Error::InvalidSpec(format!(
            "mean phase I duration {t_s1} does not fit in mean period {period}"
        )));
    }
    let spec = CycleSpec {
        line: *line,
        x_s0,
        x_s1,
        t_s1,
        t_s2: period,
        center: x_s0.midpoint(x_s1),
        p_i: TimedPoint {
            x: ex.p_i,
            t: ex.tau_i.clamp(f64::MIN_POSITIVE, t_s1),
        },
        p_ii: TimedPoint {
            x: ex.p_ii,
            t: ex.tau_ii.clamp(f64::MIN_POSITIVE, period - t_s1),
        },
    };
    spec.validate()?;
    Ok(spec)
}

/// Last period of a run of the model started on its designed cycle.
fn model_loop(psas: &Psas, spec: &CycleSpec, periods: usize) -> Result<(CycleEstimate, Vec<Vec2>)> {
    let cycle = find_cycle(psas, spec.x_s0, &CycleSearch::default())?;
    let t = cycle.period_t;
    let dt = t / 2000.0;
    let traj = run(psas, cycle.x_s0, periods.max(1) as f64 * t, dt)?;
    let start = traj.t_end - t;
    let pts: Vec<Vec2> = traj.samples.iter().filter(|s| s.t >= start).map(|s| s.x).collect();
    Ok((cycle, pts))
}

fn bounding_box(p: &[Vec2]) -> (Vec2, Vec2) {
    p.iter().fold(
        (
            Vec2::new(f64::INFINITY, f64::INFINITY),
            Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        ),
        |(lo, hi), v| {
            (
                Vec2::new(lo.x1.min(v.x1), lo.x2.min(v.x2)),
                Vec2::new(hi.x1.max(v.x1), hi.x2.max(v.x2)),
            )
        },
    )
}
