//! Optimal weights for the exponential saturation curve
//! `η(t) = β₁ − β₂ exp(−β₃ t)` at β = (3, 2, 1), n = 120, τ = 1, ρ = 0.9,
//! on three and on seven equally spaced time points.

use rpgcm::design::{optimize, round_to_exact, OptimizeOptions};
use rpgcm::{DesignProblem, ModelSpec};

fn main() -> rpgcm::Result<()> {
    let model = ModelSpec::exponential_saturation(3.0, 2.0, 1.0)?;
    for j in [3, 7] {
        let times: Vec<f64> = (0..j).map(|t| t as f64).collect();
        let problem = DesignProblem::new(times, 120, 1.0, 1.0, 0.9, model.clone())?;
        let result = optimize(&problem, &OptimizeOptions::default())?;
        let weights: Vec<String> = result.design.weights().iter().map(|w| format!("{w:.3}")).collect();
        println!("J = {j}: w* = ({})", weights.join(", "));
        println!(
            "  criterion {:.6}, max slack {:.2e}, certified {}, method {:?}",
            result.criterion, result.max_violation, result.certified, result.method
        );
        println!("  exact design for n = 120: {:?}", round_to_exact(&result.design, 120));
    }
    Ok(())
}
