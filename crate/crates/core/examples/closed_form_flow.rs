//! Closed-form flow of one affine mode next to a fine RK4 run.

use psas::flow::{flow_closed_form, flow_oracle_rk4, substitutions, ModeFlow, ORACLE_STEP};
use psas::linalg::eigen_real_distinct;
use psas::reference::design_example;
use psas::Vec2;

fn main() -> psas::Result<()> {
    let p = design_example();
    let mode = p.mode_i;
    let d = eigen_real_distinct(&mode.a)?;
    println!("eigenvalues {:?}", d.lambdas());

    let x0 = Vec2::new(0.0, -5.160);
    let s = substitutions(&mode, &d, x0)?;
    println!("substitutions {:?}", s.s);
    println!("limits {:?}", s.h);

    for t in [0.0, 0.25, 0.5, 0.801] {
        let exact = flow_closed_form(&mode, x0, t)?;
        let rk = flow_oracle_rk4(&mode, x0, t, ORACLE_STEP)?;
        println!(
            "t = {t:5.3}  x = ({:+.6}, {:+.6})  |diff| = {:.1e}",
            exact.x1,
            exact.x2,
            exact.distance(rk)
        );
    }

    // complex eigenvalues go through the matrix exponential instead
    let spiral = psas::AffineMode::new(psas::Mat2::new(-0.2, -2.0, 2.0, -0.2), Vec2::new(0.5, 0.0));
    let f = ModeFlow::new(&spiral);
    println!(
        "spiral closed form: {}, x(3) = {:?}",
        f.is_closed_form(),
        f.advance(Vec2::new(1.0, 0.0), 3.0)?
    );
    Ok(())
}
