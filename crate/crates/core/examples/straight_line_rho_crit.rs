//! Straight line with zero slope on t = (0, 1, 2): the two end points carry
//! the optimal design exactly when ρ reaches the critical correlation, which
//! depends on a₁ = nτμ₁ only.

use rpgcm::design::{optimize, rho_crit_straight_line, sensitivity, OptimizeOptions, STRAIGHT_LINE_THRESHOLD};
use rpgcm::{Design, DesignProblem, ModelSpec};

fn main() -> rpgcm::Result<()> {
    println!("end-point design optimal for all rho when a1 <= {STRAIGHT_LINE_THRESHOLD:.4}");
    println!("  a1     rho_crit  w* just below rho_crit");
    let end_points = Design::new(vec![0.5, 0.0, 0.5])?;
    for a1 in [0.5, 1.0, 2.0, 5.0, 20.0, 120.0, 1000.0] {
        let rc = rho_crit_straight_line(a1);
        let model = ModelSpec::straight_line(0.0, 0.0)?;
        let below = DesignProblem::new(vec![0.0, 1.0, 2.0], 120, 1.0, a1 / 120.0, (rc - 0.05).max(0.0), model)?;
        let w = optimize(&below, &OptimizeOptions::default())?.design;
        let at = below.with_rho(rc)?;
        let slack = sensitivity(&at, &end_points)?[1];
        println!(
            "{a1:>7.1}   {rc:.4}    ({:.3}, {:.3}, {:.3})   middle slack at rho_crit {slack:.1e}",
            w.weights()[0],
            w.weights()[1],
            w.weights()[2]
        );
    }
    Ok(())
}
