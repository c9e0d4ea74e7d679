//! Acceptance suite. Prints one PASS/FAIL line per criterion to stderr and
//! fails if any criterion fails. Lines tagged `S` are supplementary checks.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use psas::cli;
use psas::design::{solve_design, CycleSpec, SolveOptions, TimedPoint};
use psas::flow::{flow_closed_form, flow_oracle_rk4, ORACLE_STEP};
use psas::identify::{identify_psas, measure, IdentifyOptions};
use psas::model::{mode_select, ModeId};
use psas::reference::{design_example, design_example_spec, pd_identified, pd_identified_corrected};
use psas::simulate::{amplitude_profile, detect_limit_cycle, find_cycle, run, CycleEstimate, CycleSearch, Extremum};
use psas::verify::{
    check_global_stability, check_theorem1_auto, check_theorem1_with, grid, locate_cycle, CheckOptions, Verdict,
};
use psas::{AffineMode, Mat2, Psas, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Line {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn emit(l: &Line) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(
        err,
        "{} {:>2}  {:<46} {:>9.1} ms  {}",
        if l.pass { "PASS" } else { "FAIL" },
        l.id,
        l.title,
        l.elapsed.as_secs_f64() * 1e3,
        l.detail
    );
}

fn timed<F: FnOnce() -> (bool, String)>(id: &'static str, title: &'static str, budget: Duration, f: F) -> Line {
    let start = Instant::now();
    let (ok, mut detail) = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    if !in_time {
        detail.push_str(&format!("; over budget of {:?}", budget));
    }
    Line {
        id,
        title,
        pass: ok && in_time,
        detail,
        elapsed,
    }
}

fn rounded_points() -> (Vec2, Vec2) {
    (Vec2::new(0.0, -5.160), Vec2::new(0.0, -2.394))
}

fn c1_conditions() -> Line {
    let psas = design_example();
    let (x0, x1) = rounded_points();
    // the published points are rounded to three decimals, so the closure
    // check gets the same slack the cycle comparison gets
    let opts = CheckOptions {
        closure_tol: 2e-2,
        ..CheckOptions::default()
    };
    let expect = [-2.16, 0.606, 2.606, -0.16];
    let run_once = || check_theorem1_with(&psas, x0, x1, 2.644, &opts);
    let _ = run_once();
    // best of several runs, so scheduler noise does not decide the verdict
    let mut best = Duration::MAX;
    let mut report = None;
    for _ in 0..20 {
        let s = Instant::now();
        let r = run_once();
        best = best.min(s.elapsed());
        report = Some(r);
    }
    let mut line = timed(
        "1",
        "sufficient conditions on the design example",
        Duration::MAX,
        || {
            let r = match report.unwrap() {
                Ok(r) => r,
                Err(e) => return (false, e.to_string()),
            };
            let got = [
                r.cond_grad_s0.value,
                r.cond_grad_s1_i.value,
                r.cond_grad_s1_ii.value,
                r.cond_grad_s2.value,
            ];
            let exact = got.iter().zip(expect).all(|(g, e)| (g - e).abs() <= 1e-9);
            (
                r.overall && exact,
                format!("overall={} projections={got:?} failed={:?}", r.overall, r.failures()),
            )
        },
    );
    line.elapsed = best;
    if best > Duration::from_millis(1) {
        line.pass = false;
        line.detail.push_str("; over budget of 1ms");
    }
    line
}

fn random_hurwitz(rng: &mut ChaCha8Rng) -> AffineMode {
    let l1: f64 = rng.gen_range(-3.0..-0.1);
    let mut l2 = rng.gen_range(-3.0..-0.1);
    while (l1 - l2).abs() < 0.05 {
        l2 = rng.gen_range(-3.0..-0.1);
    }
    // eigenvector matrix with angle between columns at least 0.3 rad
    let th1: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let th2 = th1 + rng.gen_range(0.3..std::f64::consts::PI - 0.3);
    let w = Mat2::new(th1.cos(), th2.cos(), th1.sin(), th2.sin());
    let a = w.mul_mat(&Mat2::diag(l1, l2)).mul_mat(&w.inverse().unwrap());
    let b = Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
    AffineMode::new(a, b)
}

fn c2_closed_form() -> Line {
    timed(
        "2",
        "closed-form flow against RK4 oracle",
        Duration::from_secs(5),
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let mut worst = 0.0f64;
            for _ in 0..100 {
                let m = random_hurwitz(&mut rng);
                let x0 = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
                // the oracle is chained across checkpoints, so each mode costs one
                // integration over [0, 2]
                let mut rk = x0;
                for k in 0..=40 {
                    let t = 0.05 * k as f64;
                    if k > 0 {
                        rk = flow_oracle_rk4(&m, rk, 0.05, ORACLE_STEP).unwrap();
                    }
                    let cf = flow_closed_form(&m, x0, t).unwrap();
                    worst = worst.max(cf.distance(rk));
                }
            }
            (worst <= 1e-7, format!("max error {worst:.2e} over 100 modes"))
        },
    )
}

fn c3_cycle() -> Line {
    timed("3", "limit cycle of the design example", Duration::from_secs(1), || {
        let traj = match run(&design_example(), Vec2::new(-1.5, -4.5), 60.0, 0.01) {
            Ok(t) => t,
            Err(e) => return (false, e.to_string()),
        };
        let c = match detect_limit_cycle(&traj, 1e-6) {
            Ok(c) => c,
            Err(e) => return (false, e.to_string()),
        };
        let (x0, x1) = rounded_points();
        let pts = c.x_s0.distance(x0) <= 2e-2 && c.x_s1.distance(x1) <= 2e-2;
        let period = (c.period_t - 2.644).abs() <= 5e-2;
        (
            c.converged && pts && period,
            format!(
                "converged={} x_s0={:?} x_s1={:?} T={:.4} (target 2.644 ± 0.05) omega={:.4}",
                c.converged,
                c.x_s0,
                c.x_s1,
                c.period_t,
                c.frequency().unwrap_or(f64::NAN)
            ),
        )
    })
}

fn c3_supplement() -> Line {
    timed(
        "S3",
        "design example period is phase I plus phase II",
        Duration::from_secs(1),
        || {
            let c = match find_cycle(&design_example(), Vec2::new(-1.5, -4.5), &CycleSearch::default()) {
                Ok(c) => c,
                Err(e) => return (false, e.to_string()),
            };
            let t2 = c.period_t - c.t_s1;
            let ok = (c.t_s1 - 0.801).abs() <= 5e-3
                && (t2 - 2.644).abs() <= 5e-3
                && (c.frequency().unwrap() - 1.824).abs() <= 5e-3;
            (
                ok,
                format!("phase I {:.4}, phase II {:.4}, T {:.4}", c.t_s1, t2, c.period_t),
            )
        },
    )
}

fn c4_stability() -> Line {
    timed(
        "4",
        "global stability of the design example",
        Duration::from_secs(10),
        || {
            let psas = design_example();
            let cycle = match locate_cycle(&psas) {
                Ok(c) => c,
                Err(e) => return (false, e.to_string()),
            };
            let cert = check_global_stability(&psas, &cycle, &grid((-3.0, 3.0), (-7.0, -1.0), 5));
            let all_alpha = cert.sampled_alphas.iter().all(|s| s.alphas.iter().all(|a| *a < 1.0));
            let all_mono = cert.sampled_alphas.iter().all(|s| s.monotone);
            (
                cert.verdict == Verdict::Certified && all_alpha && all_mono && cert.n_samples == 25,
                format!(
                    "verdict={} max_alpha={:.4} monotone={} samples={}",
                    cert.verdict.as_str(),
                    cert.max_alpha.value,
                    all_mono,
                    cert.n_samples
                ),
            )
        },
    )
}

fn cycle_matches(psas: &Psas, spec: &CycleSpec, tol: f64) -> (bool, String) {
    match find_cycle(psas, spec.x_s0, &CycleSearch::default()) {
        Ok(c) => {
            let e0 = c.x_s0.distance(spec.x_s0);
            let e1 = c.x_s1.distance(spec.x_s1);
            let et = (c.period_t - spec.period()).abs();
            (
                e0 <= tol && e1 <= tol && et <= tol,
                format!("cycle errors x_s0 {e0:.1e} x_s1 {e1:.1e} T {et:.1e}"),
            )
        }
        Err(e) => (false, format!("no cycle: {e}")),
    }
}

fn max_entry_diff(a: &Psas, b: &Psas) -> f64 {
    a.to_params()
        .iter()
        .zip(b.to_params())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn perturbed(p: &Psas, rel: f64, rng: &mut ChaCha8Rng) -> [f64; 12] {
    let mut u = p.to_params();
    for v in &mut u {
        *v *= 1.0 + rng.gen_range(-rel..rel);
    }
    u
}

fn c5_design() -> Line {
    timed(
        "5",
        "design from the published cycle spec",
        Duration::from_secs(30),
        || {
            let spec = design_example_spec();
            let opts = SolveOptions {
                tol: 1e-10,
                ..SolveOptions::default()
            };
            let free = match solve_design(&spec, None, &opts) {
                Ok(d) => d,
                Err(e) => return (false, format!("default start: {e}")),
            };
            let (cyc_ok, cyc) = cycle_matches(&free.psas, &spec, 1e-3);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let published = design_example();
            let near = solve_design(&spec, Some(perturbed(&published, 0.01, &mut rng)), &opts);
            let (near_ok, near_detail) = match near {
                Ok(d) => {
                    let diff = max_entry_diff(&d.psas, &published);
                    (diff <= 0.05, format!("near start: max entry diff {diff:.3}"))
                }
                Err(e) => (false, format!("near start: {e}")),
            };
            (
                free.residual_norm <= 1e-6 && cyc_ok && near_ok,
                format!("residual {:.1e}; {cyc}; {near_detail}", free.residual_norm),
            )
        },
    )
}

fn c5_supplement() -> Line {
    timed(
        "S5",
        "design with phase II of 2.644 recovers the matrices",
        Duration::from_secs(30),
        || {
            let mut spec = design_example_spec();
            spec.t_s2 = spec.t_s1 + 2.644;
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let published = design_example();
            let opts = SolveOptions {
                tol: 1e-10,
                ..SolveOptions::default()
            };
            match solve_design(&spec, Some(perturbed(&published, 0.01, &mut rng)), &opts) {
                Ok(d) => {
                    let diff = max_entry_diff(&d.psas, &published);
                    let (cyc_ok, cyc) = cycle_matches(&d.psas, &spec, 1e-3);
                    (diff <= 0.05 && cyc_ok, format!("max entry diff {diff:.4}; {cyc}"))
                }
                Err(e) => (false, e.to_string()),
            }
        },
    )
}

fn interior(a: Option<Extremum>, b: Option<Extremum>, tau: f64) -> Option<Extremum> {
    let score = |e: &Extremum| e.phase_time.min(tau - e.phase_time);
    [a, b]
        .into_iter()
        .flatten()
        .max_by(|x, y| score(x).total_cmp(&score(y)))
        .filter(|e| score(e) > 0.05 * tau)
}

/// Spec read off a simulation of `psas`: crossings, phase times, and the
/// most interior amplitude extremum of each region.
fn spec_from_simulation(psas: &Psas, cycle: &CycleEstimate) -> Option<CycleSpec> {
    let dt = cycle.period_t / 4000.0;
    let traj = run(psas, cycle.x_s0, 3.0 * cycle.period_t, dt).ok()?;
    let prof = amplitude_profile(&traj, cycle.center);
    let tau_ii = cycle.period_t - cycle.t_s1;
    let p_i = interior(prof.extrema.max_i, prof.extrema.min_i, cycle.t_s1)?;
    let p_ii = interior(prof.extrema.max_ii, prof.extrema.min_ii, tau_ii)?;
    let spec = CycleSpec {
        line: psas.line,
        x_s0: cycle.x_s0,
        x_s1: cycle.x_s1,
        t_s1: cycle.t_s1,
        t_s2: cycle.period_t,
        center: cycle.center,
        p_i: TimedPoint {
            x: p_i.x,
            t: p_i.phase_time,
        },
        p_ii: TimedPoint {
            x: p_ii.x,
            t: p_ii.phase_time,
        },
    };
    spec.validate().ok()?;
    Some(spec)
}

fn random_compliant(rng: &mut ChaCha8Rng) -> Option<(Psas, CycleEstimate)> {
    let base = design_example();
    let u = perturbed(&base, 0.15, rng);
    let psas = Psas::from_params(&u, base.line);
    let (report, cycle) = check_theorem1_auto(&psas, &CheckOptions::default());
    match cycle {
        Some(c) if report.overall && c.converged && mode_select(&psas, c.x_s0, None) == ModeId::I => Some((psas, c)),
        _ => None,
    }
}

fn c6_roundtrip() -> Line {
    timed(
        "6",
        "design round trip on random compliant systems",
        Duration::from_secs(120),
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let mut done = 0;
            let mut worst = 0.0f64;
            let mut failures = Vec::new();
            let mut draws = 0;
            while done < 10 && draws < 500 {
                draws += 1;
                let Some((psas, cycle)) = random_compliant(&mut rng) else {
                    continue;
                };
                let Some(spec) = spec_from_simulation(&psas, &cycle) else {
                    continue;
                };
                done += 1;
                let init = perturbed(&psas, 0.10, &mut rng);
                let opts = SolveOptions {
                    tol: 1e-10,
                    ..SolveOptions::default()
                };
                match solve_design(&spec, Some(init), &opts) {
                    Ok(d) => match find_cycle(&d.psas, spec.x_s0, &CycleSearch::default()) {
                        Ok(c) => {
                            let e = c
                                .x_s0
                                .distance(cycle.x_s0)
                                .max(c.x_s1.distance(cycle.x_s1))
                                .max((c.period_t - cycle.period_t).abs());
                            worst = worst.max(e);
                            if e > 1e-6 {
                                failures.push(format!("system {done}: cycle error {e:.1e}"));
                            }
                        }
                        Err(e) => failures.push(format!("system {done}: {e}")),
                    },
                    Err(e) => failures.push(format!("system {done}: {e}")),
                }
            }
            (
                done == 10 && failures.is_empty(),
                format!("{done} systems from {draws} draws, worst cycle error {worst:.1e} {failures:?}"),
            )
        },
    )
}

fn identification(psas: &Psas, seed: u64) -> (bool, String) {
    let cycle = match locate_cycle(psas) {
        Ok(c) => c,
        Err(e) => return (false, format!("model has no cycle to sample: {e}")),
    };
    let data = match measure(psas, cycle.x_s0, 10.0 * cycle.period_t, 0.05, 0.005, seed) {
        Ok(d) => d,
        Err(e) => return (false, e.to_string()),
    };
    match identify_psas(&data, &IdentifyOptions::default()) {
        Ok(r) => {
            let l = r.fitted_line;
            let e11 = (l.c11 - 0.4115).abs() / 0.4115;
            let ed = (l.d - 1.132).abs() / 1.132;
            (
                e11 <= 0.05 && ed <= 0.05 && (l.c12 - 1.0).abs() <= 0.05 && r.cycle_deviation <= 0.05,
                format!(
                    "line [{:.4}, {:.4}]·x = {:.4} (rel err {:.3}, {:.3}); deviation {:.4}; stability {}",
                    l.c11,
                    l.c12,
                    l.d,
                    e11,
                    ed,
                    r.cycle_deviation,
                    r.stability.as_str()
                ),
            )
        }
        Err(e) => (false, e.to_string()),
    }
}

fn c7_identify() -> Line {
    timed(
        "7",
        "identification round trip, Pd model as printed",
        Duration::from_secs(60),
        || identification(&pd_identified(0.83), 7),
    )
}

fn c7_supplement() -> Line {
    timed(
        "S7",
        "identification round trip, Pd model with stable A2",
        Duration::from_secs(60),
        || identification(&pd_identified_corrected(0.83), 7),
    )
}

fn run_cli(args: &[&str]) -> (i32, Vec<u8>, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["psas"];
    full.extend_from_slice(args);
    let code = cli::run(full, &mut out, &mut err);
    (code, out, err)
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct CliVerdicts {
    validate: i32,
    verify: i32,
    verdict: String,
    grid: Option<String>,
}

impl CliVerdicts {
    fn describe(&self) -> String {
        format!(
            "validate exit {}; verify exit {} verdict {:?} grid {:?}",
            self.validate, self.verify, self.verdict, self.grid
        )
    }
}

/// Runs `validate` and `verify` on `psas`, the latter on a grid around the
/// cycle when one is found.
fn validate_and_verify(psas: &Psas, dir: &Path) -> CliVerdicts {
    let model = dir.join("pd.json");
    psas.save(&model).unwrap();
    let (validate, _, _) = run_cli(&["validate", "--model", path_str(&model)]);
    let grid = locate_cycle(psas).ok().map(|c| {
        let lo = Vec2::new(c.x_s0.x1.min(c.x_s1.x1), c.x_s0.x2.min(c.x_s1.x2));
        let hi = Vec2::new(c.x_s0.x1.max(c.x_s1.x1), c.x_s0.x2.max(c.x_s1.x2));
        let pad = 0.5 * (hi - lo).norm();
        format!("{},{},{},{},3", lo.x1 - pad, hi.x1 + pad, lo.x2 - pad, hi.x2 + pad)
    });
    let mut args = vec!["verify", "--model", path_str(&model)];
    if let Some(g) = &grid {
        args.push("--grid");
        args.push(g);
    }
    let (verify, out, _) = run_cli(&args);
    let verdict = serde_json::from_slice::<serde_json::Value>(&out)
        .ok()
        .and_then(|v| v.get("verdict").and_then(|s| s.as_str()).map(str::to_string))
        .unwrap_or_default();
    CliVerdicts {
        validate,
        verify,
        verdict,
        grid,
    }
}

fn c8_sufficiency() -> Line {
    let dir = tempfile::tempdir().unwrap();
    timed(
        "8",
        "conditions sufficient, not necessary (as printed)",
        Duration::MAX,
        || {
            let v = validate_and_verify(&pd_identified(0.83), dir.path());
            (
                v.validate == 3 && v.verify == 0 && v.verdict == "certified",
                v.describe(),
            )
        },
    )
}

fn c8_supplement() -> Line {
    let dir = tempfile::tempdir().unwrap();
    timed(
        "S8",
        "verify certifies the Pd model with stable A2",
        Duration::MAX,
        || {
            // every condition holds for this model, so only the verify half of
            // criterion 8 carries over
            let v = validate_and_verify(&pd_identified_corrected(0.83), dir.path());
            (
                v.validate == 0 && v.verify == 0 && v.verdict == "certified",
                v.describe(),
            )
        },
    )
}

fn c9_determinism() -> Line {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    timed("9", "byte-identical repeated runs", Duration::MAX, || {
        design_example().save(d.join("model.json")).unwrap();
        design_example_spec().save(d.join("spec.json")).unwrap();
        std::fs::write(
            d.join("params.json"),
            serde_json::to_string(&psas::refosc::RelaxOscParams::default()).unwrap(),
        )
        .unwrap();
        let pd = pd_identified_corrected(0.83);
        let c = locate_cycle(&pd).unwrap();
        measure(&pd, c.x_s0, 10.0 * c.period_t, 0.05, 0.005, 9)
            .unwrap()
            .save(d.join("data.csv"))
            .unwrap();
        let p = |name: &str| d.join(name).to_str().unwrap().to_string();
        let cases: Vec<(&str, Vec<String>, Vec<String>)> = vec![
            (
                "validate",
                vec!["validate".into(), "--model".into(), p("model.json")],
                vec![],
            ),
            (
                "simulate",
                vec![
                    "simulate",
                    "--model",
                    &p("model.json"),
                    "--x0",
                    "-1.5,-4.5",
                    "--t-end",
                    "20",
                    "--dt",
                    "0.01",
                    "--out",
                    &p("traj.csv"),
                    "--events",
                    &p("events.csv"),
                ]
                .into_iter()
                .map(String::from)
                .collect(),
                vec![p("traj.csv"), p("events.csv")],
            ),
            (
                "design",
                vec![
                    "design".into(),
                    "--spec".into(),
                    p("spec.json"),
                    "--out".into(),
                    p("designed.json"),
                ],
                vec![p("designed.json")],
            ),
            (
                "verify",
                vec!["verify", "--model", &p("model.json"), "--grid", "-3,3,-7,-1,3"]
                    .into_iter()
                    .map(String::from)
                    .collect(),
                vec![],
            ),
            (
                "identify",
                vec![
                    "identify".into(),
                    "--data".into(),
                    p("data.csv"),
                    "--out".into(),
                    p("identified.json"),
                    "--report".into(),
                    p("report.json"),
                ],
                vec![p("identified.json"), p("report.json")],
            ),
            (
                "gendata",
                vec![
                    "gendata",
                    "--params",
                    &p("params.json"),
                    "--t-end",
                    "300",
                    "--dt",
                    "0.01",
                    "--seed",
                    "3",
                    "--out",
                    &p("gen.csv"),
                ]
                .into_iter()
                .map(String::from)
                .collect(),
                vec![p("gen.csv")],
            ),
        ];
        let mut differing = Vec::new();
        let mut codes = Vec::new();
        for (name, args, files) in &cases {
            let argv: Vec<&str> = args.iter().map(String::as_str).collect();
            let snapshot = || {
                let (code, out, err) = run_cli(&argv);
                let contents: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap_or_default()).collect();
                (code, out, err, contents)
            };
            let a = snapshot();
            let b = snapshot();
            codes.push(format!("{name}={}", a.0));
            if a != b {
                differing.push(*name);
            }
        }
        (
            differing.is_empty(),
            format!("exit codes {codes:?}; differing {differing:?}"),
        )
    })
}

#[test]
fn acceptance() {
    let lines = [
        c1_conditions(),
        c2_closed_form(),
        c3_cycle(),
        c3_supplement(),
        c4_stability(),
        c5_design(),
        c5_supplement(),
        c6_roundtrip(),
        c7_identify(),
        c7_supplement(),
        c8_sufficiency(),
        c8_supplement(),
        c9_determinism(),
    ];
    let mut failed = Vec::new();
    for l in &lines {
        emit(l);
        if !l.pass {
            failed.push(l.id);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
