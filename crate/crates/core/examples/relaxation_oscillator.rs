//! Runs the noisy relaxation oscillator and identifies a switching model
//! from its output, sampled every 0.05 time units.

use psas::identify::{identify_psas, DataSet, IdentifyOptions};
use psas::refosc::{generate, RelaxOscParams, DT, Y_INIT};

fn main() -> psas::Result<()> {
    let params = RelaxOscParams::default();
    let full = generate(&params, Y_INIT, 2500.0, DT)?;
    let t: Vec<f64> = full.t.iter().step_by(5).copied().collect();
    let y: Vec<_> = full.y.iter().step_by(5).copied().collect();
    let data = DataSet::new(t, y, "refosc")?;
    let last = data.y[data.len() - 1];
    println!("{} samples, final state ({:.4}, {:.4})", data.len(), last.x1, last.x2);

    let r = identify_psas(&data, &IdentifyOptions::default())?;
    let l = r.fitted_line;
    println!("line {:.4}·x1 + {:.4}·x2 = {:.4}", l.c11, l.c12, l.d);
    println!("{} switches", r.switch_points.len());
    println!(
        "model period {:.2}, cycle deviation {:.4}",
        r.model_cycle.period_t, r.cycle_deviation
    );
    Ok(())
}
