//! Turning optimal weights into whole item counts for several test lengths.

use rpgcm::design::{efficiency, optimize, round_to_exact, OptimizeOptions};
use rpgcm::{Design, DesignProblem, ModelSpec};

fn main() -> rpgcm::Result<()> {
    let times: Vec<f64> = (0..7).map(|t| t as f64).collect();
    let model = ModelSpec::exponential_saturation(3.0, 2.0, 1.0)?;
    for n in [10, 30, 120, 500] {
        let problem = DesignProblem::new(times.clone(), n, 1.0, 1.0, 0.9, model.clone())?;
        let best = optimize(&problem, &OptimizeOptions::default())?;
        let counts = round_to_exact(&best.design, n);
        let eff = efficiency(&problem, &Design::from_counts(&counts)?)?.efficiency;
        println!("n = {n:>3}: counts {counts:?}, efficiency {eff:.5}");
    }
    Ok(())
}
