//! Samples a grid of starts and certifies (or refutes) global convergence
//! to the cycle, for the design example and its time reversal.

use psas::reference::design_example;
use psas::verify::{check_global_stability, grid, locate_cycle};

fn main() -> psas::Result<()> {
    let p = design_example();
    let cycle = locate_cycle(&p)?;
    let starts = grid((-3.0, 3.0), (-7.0, -1.0), 5);
    let cert = check_global_stability(&p, &cycle, &starts);
    println!(
        "verdict {}, max ratio {:.3e}, {} starts",
        cert.verdict.as_str(),
        cert.max_alpha.value,
        cert.n_samples
    );
    for s in cert.sampled_alphas.iter().take(5) {
        println!(
            "  start ({:+.1}, {:+.1}) {:?} ratio {:?}",
            s.start.x1, s.start.x2, s.status, s.alpha
        );
    }

    // run backwards the same cycle repels
    let back = p.time_reversed();
    let cert = check_global_stability(&back, &cycle, &starts);
    println!("reversed: {}", cert.verdict.as_str());
    Ok(())
}
