//! Identifies a switching model from noisy samples of a known one and
//! compares the recovered line and cycle.

use psas::identify::{identify_psas, measure, IdentifyOptions};
use psas::reference::pd_identified_corrected;
use psas::verify::locate_cycle;

fn main() -> psas::Result<()> {
    let truth = pd_identified_corrected(0.83);
    let cycle = locate_cycle(&truth)?;
    let data = measure(&truth, cycle.x_s0, 10.0 * cycle.period_t, 0.05, 0.005, 1)?;
    println!("{} samples over {:.0} time units", data.len(), data.t[data.len() - 1]);

    let r = identify_psas(&data, &IdentifyOptions::default())?;
    let l = r.fitted_line;
    println!(
        "line {:.4}·x1 + {:.4}·x2 = {:.4}  (true {:.4}·x1 + x2 = {:.4})",
        l.c11, l.c12, l.d, truth.line.c11, truth.line.d
    );
    println!("noise estimate {:.4}", r.noise_estimate);
    println!(
        "{} switches, period {:.2} (true {:.2})",
        r.switch_points.len(),
        r.model_cycle.period_t,
        cycle.period_t
    );
    println!("A1 {:?}", r.design.psas.mode_i.a);
    println!("A2 {:?}", r.design.psas.mode_ii.a);
    println!(
        "cycle deviation {:.4}, stability {}",
        r.cycle_deviation,
        r.stability.as_str()
    );
    Ok(())
}
