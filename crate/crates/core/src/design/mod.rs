//! Locally D-optimal approximate designs: search, equivalence-theorem
//! certificates, efficiencies, closed forms and rounding to exact designs.

mod closed_form;
mod curve;
mod optimize;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::information::{d_criterion, weighted_gram, u_weight, u_weight_derivative, Design, DesignProblem};
use crate::linalg::Cholesky;

pub use closed_form::{
    large_scale_weight_limit, rho_crit_straight_line, two_point_closed_form, two_point_efficiency,
    two_point_gain_efficiency_limit, two_point_loss_efficiency_limit, two_point_loss_weight_limit,
    STRAIGHT_LINE_THRESHOLD,
};
pub use curve::{weight_curve, write_curve_csv, CurveRow, RowOutcome, Sweep, SweepOutput, SweepParameter};
pub use optimize::{optimize, OptimizeOptions};

/// Slack tolerance for declaring a design optimal.
pub const CERTIFICATION_TOLERANCE: f64 = 1e-6;
/// Weights above this count as support points.
pub const SUPPORT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Grid,
    SimplexSolver,
    ClosedForm,
}

/// How an optimum was verified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certification {
    /// Sensitivity slacks (valid for `ρ = 0` or models with an intercept).
    EquivalenceTheorem,
    /// Pairwise weight transfers of size 1e-2, 1e-3 and 1e-4 found no improvement.
    LocalProbe,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimResult {
    pub design: Design,
    pub criterion: f64,
    /// Directional derivative toward each one-point design.
    pub certificate: Vec<f64>,
    pub max_violation: f64,
    pub method: Method,
    pub iterations: usize,
    pub certification: Certification,
    pub certified: bool,
}

impl OptimResult {
    /// Indices with weight above `threshold`.
    pub fn support(&self, threshold: f64) -> Vec<usize> {
        (0..self.design.len())
            .filter(|&j| self.design.weights()[j] > threshold)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub design: Design,
    pub reference: OptimResult,
    pub efficiency: f64,
    pub diagnostic: Option<String>,
}

/// Equivalence-theorem slacks `LHS_j − RHS`:
///
/// ```text
/// slack_j = u_j'(w_j) (f_jᵀ M⁻¹ f_j − κ) − Σ_k w_k u_k'(w_k) (f_kᵀ M⁻¹ f_k − κ)
/// ```
///
/// with `κ = ρnτ/(1 + ρnτ Σu)` for models with an intercept and `κ = 0`
/// when `ρ = 0`. A design is optimal iff every slack is `≤ 0`; the slack is
/// the directional derivative of the criterion toward the one-point design
/// at `t_j`.
pub fn sensitivity(problem: &DesignProblem, design: &Design) -> Result<Vec<f64>> {
    if !problem.is_certifiable() {
        return Err(Error::NotCertifiable);
    }
    check_length(problem, design)?;
    let w = design.weights();
    let u: Vec<f64> = (0..w.len()).map(|j| u_weight(problem, j, w[j])).collect();
    let chol = Cholesky::new(&weighted_gram(problem.basis(), &u))
        .ok_or_else(|| Error::Singular("M(ξ) at the candidate design".into()))?;
    let kappa = if problem.rho() == 0.0 {
        0.0
    } else {
        let k = problem.rho() * problem.a();
        let s: f64 = u.iter().sum();
        k / (1.0 + k * s)
    };
    let f = problem.basis();
    let lhs: Vec<f64> = (0..w.len())
        .map(|j| {
            let fj = f.row(j).transpose();
            u_weight_derivative(problem, j, w[j]) * (fj.dot(&chol.solve(&fj)) - kappa)
        })
        .collect();
    let rhs: f64 = lhs.iter().zip(w).map(|(l, wj)| l * wj).sum();
    Ok(lhs.into_iter().map(|l| l - rhs).collect())
}

pub(crate) fn check_length(problem: &DesignProblem, design: &Design) -> Result<()> {
    if design.len() != problem.j() {
        return Err(Error::invalid(
            "weights",
            format!("design has {} weights for {} time points", design.len(), problem.j()),
        ));
    }
    Ok(())
}

/// D-efficiency `(det M_Q(ξ)/det M_Q(ξ*))^(1/p)` against a freshly optimized
/// reference design.
pub fn efficiency(problem: &DesignProblem, design: &Design) -> Result<EfficiencyReport> {
    efficiency_with(problem, design, &OptimizeOptions::default())
}

pub fn efficiency_with(
    problem: &DesignProblem,
    design: &Design,
    options: &OptimizeOptions,
) -> Result<EfficiencyReport> {
    check_length(problem, design)?;
    let reference = optimize(problem, options)?;
    efficiency_against(problem, design, reference, options)
}

/// Efficiency relative to a given reference. A candidate that beats the
/// reference triggers a re-optimization started from the candidate.
pub fn efficiency_against(
    problem: &DesignProblem,
    design: &Design,
    mut reference: OptimResult,
    options: &OptimizeOptions,
) -> Result<EfficiencyReport> {
    check_length(problem, design)?;
    let value = d_criterion(problem, design);
    if value == f64::NEG_INFINITY {
        return Ok(EfficiencyReport {
            design: design.clone(),
            reference,
            efficiency: 0.0,
            diagnostic: Some("candidate design has singular quasi-information".into()),
        });
    }
    if value > reference.criterion {
        let improved = optimize::optimize_from(problem, design.weights(), options)?;
        if improved.criterion > reference.criterion {
            reference = improved;
        }
    }
    let p = problem.p() as f64;
    let efficiency = ((value - reference.criterion) / p).exp().min(1.0);
    Ok(EfficiencyReport {
        design: design.clone(),
        reference,
        efficiency,
        diagnostic: None,
    })
}

/// Efficient rounding of `n w_j`: floors first, then the remaining items go to
/// the largest fractional parts, ties toward earlier time points.
pub fn round_to_exact(design: &Design, n: usize) -> Vec<usize> {
    let scaled: Vec<f64> = design.weights().iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = scaled.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    let frac = |j: usize| scaled[j] - counts[j] as f64;
    order.sort_by(|&a, &b| {
        let (fa, fb) = (frac(a), frac(b));
        if (fa - fb).abs() <= 1e-12 {
            a.cmp(&b)
        } else {
            fb.total_cmp(&fa)
        }
    });
    for &j in order.iter().take(n.saturating_sub(assigned)) {
        counts[j] += 1;
    }
    counts
}
