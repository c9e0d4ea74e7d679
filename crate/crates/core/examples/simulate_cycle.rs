//! Simulates the design example into its limit cycle and reports the
//! crossings, period and amplitude extrema. Pass a path to also write the
//! trajectory as CSV.

use std::fs::File;
use std::io::BufWriter;

use psas::reference::design_example;
use psas::simulate::{amplitude_profile, detect_limit_cycle, run, write_trajectory_csv};
use psas::Vec2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = design_example();
    let traj = run(&p, Vec2::new(-1.5, -4.5), 40.0, 0.01)?;
    println!("{} samples, {} switches", traj.samples.len(), traj.events.len());
    for e in traj.events.iter().take(4) {
        println!(
            "  t = {:7.4}  {} -> {}  at ({:+.4}, {:+.4})",
            e.t, e.from_mode, e.to_mode, e.x.x1, e.x.x2
        );
    }

    let cycle = detect_limit_cycle(&traj, 1e-6)?;
    println!("x_s0 = {:?}", cycle.x_s0);
    println!("x_s1 = {:?}", cycle.x_s1);
    println!(
        "T = {:.4}, phase I {:.4}, omega = {:.4}",
        cycle.period_t,
        cycle.t_s1,
        cycle.frequency()?
    );

    let prof = amplitude_profile(&traj, cycle.center);
    if let (Some(min_i), Some(max_ii)) = (prof.extrema.min_i, prof.extrema.max_ii) {
        println!(
            "min amplitude in I  {:.4} after {:.4}",
            min_i.amplitude, min_i.phase_time
        );
        println!(
            "max amplitude in II {:.4} after {:.4}",
            max_ii.amplitude, max_ii.phase_time
        );
    }

    if let Some(path) = std::env::args().nth(1) {
        write_trajectory_csv(&traj, BufWriter::new(File::create(&path)?))?;
        println!("wrote {path}");
    }
    Ok(())
}
