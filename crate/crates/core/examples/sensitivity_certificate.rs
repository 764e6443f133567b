//! Equivalence-theorem slacks: positive entries name the time points that
//! would gain weight. Models without an intercept at ρ > 0 fall back to a
//! local probe.

use rpgcm::design::{optimize, sensitivity, OptimizeOptions};
use rpgcm::{Basis, Design, DesignProblem, ModelSpec};

fn show(label: &str, slacks: &[f64]) {
    let s: Vec<String> = slacks.iter().map(|x| format!("{x:+.2e}")).collect();
    println!("{label:<22} {}", s.join("  "));
}

fn main() -> rpgcm::Result<()> {
    let times: Vec<f64> = (0..5).map(|t| t as f64).collect();
    let model = ModelSpec::exponential_saturation(3.0, 2.0, 1.0)?;
    let problem = DesignProblem::new(times.clone(), 120, 1.0, 1.0, 0.9, model)?;
    show("uniform", &sensitivity(&problem, &Design::uniform(5))?);
    let best = optimize(&problem, &OptimizeOptions::default())?;
    show("optimum", &sensitivity(&problem, &best.design)?);
    println!("optimum weights {:?}", best.design.weights());

    let no_intercept = ModelSpec::linear(vec![Basis::Identity, Basis::Power(2)], vec![0.3, -0.05])?;
    let problem = DesignProblem::new(times, 60, 1.0, 0.5, 0.4, no_intercept)?;
    let r = optimize(&problem, &OptimizeOptions::default())?;
    println!("\nno intercept, rho = 0.4: certification {:?}, certified {}", r.certification, r.certified);
    show("directional slacks", &r.certificate);
    Ok(())
}
