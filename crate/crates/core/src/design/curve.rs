//! One-parameter sweeps: optimal weights, efficiency of a fixed design, or the
//! straight-line critical correlation along a grid of parameter values.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{efficiency_against, optimize, rho_crit_straight_line, OptimizeOptions};
use crate::error::{Error, Result};
use crate::information::{d_criterion, Design, DesignProblem};
use crate::model::{Basis, Variant};

/// The single scalar varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SweepParameter {
    /// Zero-based component of `β`; written `beta1`, `beta2`, ...
    Beta(usize),
    Rho,
    Tau,
    /// `a₁ = nτμ₁`, moved by adjusting `τ`.
    A1,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepParameter::Beta(i) => write!(f, "beta{}", i + 1),
            SweepParameter::Rho => f.write_str("rho"),
            SweepParameter::Tau => f.write_str("tau"),
            SweepParameter::A1 => f.write_str("a1"),
        }
    }
}

impl FromStr for SweepParameter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rho" => Ok(SweepParameter::Rho),
            "tau" => Ok(SweepParameter::Tau),
            "a1" => Ok(SweepParameter::A1),
            _ => s
                .strip_prefix("beta")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(|k| SweepParameter::Beta(k - 1))
                .ok_or_else(|| {
                    Error::invalid("sweep.parameter", format!("unknown sweep parameter '{s}'"))
                }),
        }
    }
}

impl TryFrom<String> for SweepParameter {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SweepParameter> for String {
    fn from(p: SweepParameter) -> Self {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub from: f64,
    pub to: f64,
    /// Number of intervals; zero gives the single value `from`.
    pub steps: usize,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 0 {
            return vec![self.from];
        }
        (0..=self.steps)
            .map(|i| self.from + (self.to - self.from) * i as f64 / self.steps as f64)
            .collect()
    }

    /// The template problem with the swept parameter set to `value`.
    pub fn apply(&self, template: &DesignProblem, value: f64) -> Result<DesignProblem> {
        match self.parameter {
            SweepParameter::Beta(i) => {
                let mut beta = template.model().beta().to_vec();
                if i >= beta.len() {
                    return Err(Error::invalid(
                        "sweep.parameter",
                        format!("model has only {} parameters", beta.len()),
                    ));
                }
                beta[i] = value;
                template.with_model(template.model().with_beta(beta)?)
            }
            SweepParameter::Rho => template.with_rho(value),
            SweepParameter::Tau => template.with_tau(value),
            SweepParameter::A1 => template.with_tau(value / (template.n() as f64 * template.mu()[0])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOutput {
    OptimalWeights,
    /// Efficiency of a fixed design against each row's optimum.
    Efficiency(Design),
    /// Straight-line critical correlation from each row's `a₁`.
    RhoCrit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowOutcome {
    Weights { weights: Vec<f64>, criterion: f64, certified: bool },
    Efficiency { efficiency: f64, criterion: f64 },
    RhoCrit(f64),
}

#[derive(Debug)]
pub struct CurveRow {
    pub value: f64,
    pub outcome: Result<RowOutcome>,
}

/// Evaluates every sweep value; a failing row keeps its error and the sweep
/// continues. Rows come back in sweep order.
pub fn weight_curve(
    template: &DesignProblem,
    sweep: &Sweep,
    output: &SweepOutput,
    options: &OptimizeOptions,
) -> Vec<CurveRow> {
    sweep
        .values()
        .into_par_iter()
        .map(|value| CurveRow {
            value,
            outcome: evaluate_row(template, sweep, output, options, value),
        })
        .collect()
}

fn evaluate_row(
    template: &DesignProblem,
    sweep: &Sweep,
    output: &SweepOutput,
    options: &OptimizeOptions,
    value: f64,
) -> Result<RowOutcome> {
    let problem = sweep.apply(template, value)?;
    match output {
        SweepOutput::OptimalWeights => {
            let r = optimize(&problem, options)?;
            Ok(RowOutcome::Weights {
                weights: r.design.weights().to_vec(),
                criterion: r.criterion,
                certified: r.certified,
            })
        }
        SweepOutput::Efficiency(design) => {
            let reference = optimize(&problem, options)?;
            let report = efficiency_against(&problem, design, reference, options)?;
            Ok(RowOutcome::Efficiency {
                efficiency: report.efficiency,
                criterion: d_criterion(&problem, design),
            })
        }
        SweepOutput::RhoCrit => {
            let line = Variant::LinearPredictor {
                basis: vec![Basis::Constant, Basis::Identity],
            };
            let straight = problem.model().variant() == &line
                && problem.times() == [0.0, 1.0, 2.0]
                && problem.model().beta()[1] == 0.0;
            if !straight {
                return Err(Error::invalid(
                    "sweep",
                    "rho_crit needs a straight line with zero slope on times (0, 1, 2)",
                ));
            }
            Ok(RowOutcome::RhoCrit(rho_crit_straight_line(problem.a_j()[0])))
        }
    }
}

/// CSV with one row per sweep value. Columns: `value`, then `w1..wJ` and
/// `criterion`, or `efficiency` and `criterion`, or `rho_crit`; a final
/// `status` column holds `ok` or the row's error.
pub fn write_curve_csv<W: Write>(
    rows: &[CurveRow],
    j: usize,
    output: &SweepOutput,
    writer: W,
) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header = vec!["value".to_string()];
    let width = match output {
        SweepOutput::OptimalWeights => {
            header.extend((1..=j).map(|k| format!("w{k}")));
            header.push("criterion".into());
            j + 1
        }
        SweepOutput::Efficiency(_) => {
            header.extend(["efficiency".into(), "criterion".into()]);
            2
        }
        SweepOutput::RhoCrit => {
            header.push("rho_crit".into());
            1
        }
    };
    header.push("status".into());
    csv.write_record(&header)?;
    for row in rows {
        let mut record = vec![row.value.to_string()];
        match &row.outcome {
            Ok(RowOutcome::Weights { weights, criterion, certified }) => {
                record.extend(weights.iter().map(f64::to_string));
                record.push(criterion.to_string());
                record.push(if *certified { "ok" } else { "uncertified" }.into());
            }
            Ok(RowOutcome::Efficiency { efficiency, criterion }) => {
                record.extend([efficiency.to_string(), criterion.to_string(), "ok".into()]);
            }
            Ok(RowOutcome::RhoCrit(r)) => record.extend([r.to_string(), "ok".into()]),
            Err(e) => {
                record.extend(std::iter::repeat_n(String::new(), width));
                record.push(e.to_string());
            }
        }
        csv.write_record(&record)?;
    }
    csv.flush()?;
    Ok(())
}
