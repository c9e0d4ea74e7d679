//! Checks the sufficient cycle conditions on three models: the design
//! example, the Pd model as printed, and the Pd model with a stable A2.

use psas::reference::{design_example, pd_identified, pd_identified_corrected};
use psas::verify::{check_theorem1_auto, CheckOptions};

fn main() {
    let models = [
        ("design example", design_example()),
        ("Pd as printed", pd_identified(0.83)),
        ("Pd, stable A2", pd_identified_corrected(0.83)),
    ];
    for (name, p) in models {
        let (report, cycle) = check_theorem1_auto(&p, &CheckOptions::default());
        println!("{name}: overall {}", report.overall);
        println!(
            "  projections {:+.4} {:+.4} {:+.4} {:+.4}",
            report.cond_grad_s0.value,
            report.cond_grad_s1_i.value,
            report.cond_grad_s1_ii.value,
            report.cond_grad_s2.value
        );
        println!(
            "  largest eigenvalues {:+.4} {:+.4}",
            report.eig_i.value, report.eig_ii.value
        );
        if !report.overall {
            println!("  failed: {:?}", report.failures());
        }
        match cycle {
            Some(c) => println!("  cycle T = {:.4}", c.period_t),
            None => println!("  no cycle found"),
        }
    }
}
