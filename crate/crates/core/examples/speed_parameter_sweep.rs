//! Optimal weights on seven time points as the speed β₃ of the saturation
//! curve varies, written as CSV to stdout.

use rpgcm::design::{weight_curve, write_curve_csv, OptimizeOptions, Sweep, SweepOutput, SweepParameter};
use rpgcm::{DesignProblem, ModelSpec};

fn main() -> rpgcm::Result<()> {
    let times: Vec<f64> = (0..7).map(|t| t as f64).collect();
    let model = ModelSpec::exponential_saturation(3.0, 2.0, 1.0)?;
    let template = DesignProblem::new(times, 120, 1.0, 1.0, 0.9, model)?;
    let sweep = Sweep { parameter: SweepParameter::Beta(2), from: 0.25, to: 3.0, steps: 11 };
    let rows = weight_curve(&template, &sweep, &SweepOutput::OptimalWeights, &OptimizeOptions::default());
    write_curve_csv(&rows, 7, &SweepOutput::OptimalWeights, std::io::stdout().lock())
}
