//! How much the nominal three-point design loses when the true curve
//! parameters differ from the nominal β = (3, 2, 1).

use rpgcm::design::{efficiency, optimize, OptimizeOptions};
use rpgcm::{DesignProblem, ModelSpec};

fn main() -> rpgcm::Result<()> {
    let times = vec![0.0, 1.0, 2.0];
    let problem = |b: [f64; 3]| -> rpgcm::Result<DesignProblem> {
        let model = ModelSpec::exponential_saturation(b[0], b[1], b[2])?;
        DesignProblem::new(times.clone(), 120, 1.0, 1.0, 0.9, model)
    };
    let nominal = optimize(&problem([3.0, 2.0, 1.0])?, &OptimizeOptions::default())?.design;
    let mut worst = 1.0f64;
    for (k, name, values) in [
        (0, "beta1", vec![0.0, 1.0, 2.0, 4.0, 5.0, 6.0]),
        (1, "beta2", vec![0.5, 1.0, 1.5, 2.5, 3.0, 3.5, 4.0]),
        (2, "beta3", vec![0.5, 1.5, 2.0, 2.5, 3.0, 3.5]),
    ] {
        for v in values {
            let mut b = [3.0, 2.0, 1.0];
            b[k] = v;
            let eff = efficiency(&problem(b)?, &nominal)?.efficiency;
            worst = worst.min(eff);
            println!("{name} = {v:<4} efficiency of nominal design {eff:.4}");
        }
    }
    println!("smallest efficiency {worst:.4}");
    Ok(())
}
