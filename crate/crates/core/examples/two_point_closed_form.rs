//! Two time points, unstructured means: the explicit optimum against the
//! numerical optimizer, and the efficiency of equal weights as the gain
//! `β₂ − β₁` moves away from zero (a₁ = 100).

use rpgcm::design::{
    efficiency, optimize, two_point_closed_form, two_point_efficiency, two_point_gain_efficiency_limit,
    two_point_loss_efficiency_limit, OptimizeOptions,
};
use rpgcm::{Design, DesignProblem, ModelSpec};

fn problem(beta2: f64, rho: f64) -> rpgcm::Result<DesignProblem> {
    let times = vec![0.0, 1.0];
    let model = ModelSpec::unstructured(times.clone(), vec![0.0, beta2])?;
    DesignProblem::new(times, 100, 1.0, 1.0, rho, model)
}

fn main() -> rpgcm::Result<()> {
    let numeric = OptimizeOptions { use_closed_forms: false, ..OptimizeOptions::default() };
    println!("gain    w1 closed   w1 numeric");
    for gain in [-4.0, -1.0, 0.0, 1.0, 4.0] {
        let p = problem(gain, 0.5)?;
        let a = p.a_j();
        let closed = two_point_closed_form(a[0], a[1]).weights()[0];
        let found = optimize(&p, &numeric)?.design.weights()[0];
        println!("{gain:>5.1}   {closed:.6}    {found:.6}");
    }

    println!("\nefficiency of (1/2, 1/2):");
    println!("gain    rho=0    rho=0.9  rho=0.99 rho=1");
    for gain in [-8.0, -4.0, -2.0, 0.0, 2.0, 4.0, 8.0] {
        let mut line = format!("{gain:>5.1}");
        for rho in [0.0, 0.9, 0.99, 1.0] {
            line += &format!("   {:.4}", efficiency(&problem(gain, rho)?, &Design::uniform(2))?.efficiency);
        }
        println!("{line}");
    }
    println!("\nlimits at a1 = 100:");
    for rho in [0.0, 0.9, 0.99, 1.0] {
        println!(
            "  rho = {rho}: gain -> inf {:.4}, gain -> -inf {:.4}",
            two_point_gain_efficiency_limit(100.0, rho),
            two_point_loss_efficiency_limit(100.0)
        );
    }
    println!("  formula at gain 30, rho = 1: {:.4}", two_point_efficiency(100.0, 100.0 * 30f64.exp(), 1.0, 0.5));
    Ok(())
}
