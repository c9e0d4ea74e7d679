//! Iterates the return map on the switching line and prints the squared
//! distance ratios toward the fixed point.

use psas::model::ModeId;
use psas::reference::design_example;
use psas::verify::{contraction_ratio, locate_cycle, poincare_map};
use psas::Vec2;

fn main() -> psas::Result<()> {
    let p = design_example();
    let cycle = locate_cycle(&p)?;
    println!("fixed point {:?}, T = {:.6}", cycle.x_s0, cycle.period_t);

    let mut x = Vec2::new(0.0, -6.5);
    for k in 0..5 {
        let (next, t) = poincare_map(&p, x, ModeId::I)?;
        println!("{k}: {:+.8} -> {:+.8} in {t:.4}", x.x2, next.x2);
        x = next;
    }

    let ratios = contraction_ratio(&p, &cycle, Vec2::new(0.0, -6.5), 6)?;
    for (k, a) in ratios.iter().enumerate() {
        println!("ratio {k}: {a:.3e}");
    }
    Ok(())
}
