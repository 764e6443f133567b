//! Simulates persons under the optimal exact design, refits β by
//! quasi-likelihood and compares the spread of the estimates over
//! replicates with the quasi-information.

use rpgcm::design::{optimize, round_to_exact, OptimizeOptions};
use rpgcm::simulate::{empirical_information, mql_fit, simulate, EffectConfig};
use rpgcm::{quasi_info, Design, DesignProblem, ItemLayout, ModelSpec};

fn main() -> rpgcm::Result<()> {
    let times = vec![0.0, 1.0, 2.0];
    let model = ModelSpec::exponential_saturation(3.0, 2.0, 1.0)?;
    let (tau, rho, n, persons) = (1.0, 0.9, 120, 500);
    let problem = DesignProblem::new(times.clone(), n, 1.0, tau, rho, model.clone())?;
    let counts = round_to_exact(&optimize(&problem, &OptimizeOptions::default())?.design, n);
    let layout = ItemLayout::common(times, &counts, 1.0)?;
    println!("items per time point {counts:?}, {persons} persons");

    let mut fits = Vec::new();
    for seed in 0..200 {
        let data = simulate(&model, &layout, EffectConfig::new(tau, rho)?, persons, seed)?;
        let fit = mql_fit(&data.data, &model, tau, rho, None)?;
        if seed == 0 {
            println!("first replicate: beta_hat {:.4?}, se {:.4?}", fit.beta_hat, fit.standard_errors()?);
        }
        fits.push(fit);
    }
    let empirical = empirical_information(&fits)?;
    let theory = quasi_info(&problem, &Design::from_counts(&counts)?).matrix * (persons as f64 * n as f64);
    for k in 0..3 {
        println!(
            "beta{}: empirical information {:.1}, quasi-information {:.1}",
            k + 1,
            empirical.information[(k, k)],
            theory[(k, k)]
        );
    }
    Ok(())
}
