//! Log-mean-ability curves `η(t, β)`, their parameter gradients, and the
//! essential regression matrix built from them.
//!
//! The mean ability at time `t` is `θ(t) = exp(η(t, β))`; an item of easiness
//! `σ` presented at `t` has marginal mean response `σ θ(t)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual bound (∞-norm) below which `F c = 1` counts as solved.
pub const INTERCEPT_TOLERANCE: f64 = 1e-8;

/// Largest mean response accepted before reporting overflow.
const MAX_MEAN: f64 = 1e300;

/// Regression functions available to [`Variant::LinearPredictor`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Constant,
    Identity,
    Power(i32),
    /// Indicator of a single time point.
    Dummy(f64),
}

impl Basis {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Basis::Constant => 1.0,
            Basis::Identity => t,
            Basis::Power(k) => t.powi(k),
            Basis::Dummy(tj) => {
                if same_time(t, tj) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// One free log mean per time point of `grid` (dummy coding).
    Unstructured { grid: Vec<f64> },
    /// `η(t) = f(t)ᵀ β` for a fixed list of regression functions.
    LinearPredictor { basis: Vec<Basis> },
    /// `η(t) = β₁ − β₂ exp(−β₃ t)`.
    ExponentialSaturation,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Unstructured { .. } => "unstructured",
            Variant::LinearPredictor { .. } => "linear_predictor",
            Variant::ExponentialSaturation => "exponential_saturation",
        }
    }

    fn dimension(&self) -> Option<usize> {
        match self {
            Variant::Unstructured { grid } => Some(grid.len()),
            Variant::LinearPredictor { basis } => Some(basis.len()),
            Variant::ExponentialSaturation => Some(3),
        }
    }
}

/// A growth-curve model together with the parameter value `β` it is
/// evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    variant: Variant,
    beta: Vec<f64>,
}

impl ModelSpec {
    pub fn new(variant: Variant, beta: Vec<f64>) -> Result<Self> {
        if let Some(p) = variant.dimension() {
            if p != beta.len() {
                return Err(Error::invalid(
                    "model.beta",
                    format!("{} model needs {} parameters, got {}", variant.name(), p, beta.len()),
                ));
            }
        }
        if beta.is_empty() {
            return Err(Error::invalid("model.beta", "at least one parameter is required"));
        }
        if let Some(b) = beta.iter().find(|b| !b.is_finite()) {
            return Err(Error::invalid("model.beta", format!("non-finite value {b}")));
        }
        if let Variant::Unstructured { grid } = &variant {
            check_increasing(grid, "times")?;
        }
        Ok(ModelSpec { variant, beta })
    }

    pub fn unstructured(grid: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        Self::new(Variant::Unstructured { grid }, beta)
    }

    pub fn linear(basis: Vec<Basis>, beta: Vec<f64>) -> Result<Self> {
        Self::new(Variant::LinearPredictor { basis }, beta)
    }

    /// `η(t) = β₁ + β₂ t`.
    pub fn straight_line(intercept: f64, slope: f64) -> Result<Self> {
        Self::linear(vec![Basis::Constant, Basis::Identity], vec![intercept, slope])
    }

    pub fn exponential_saturation(level: f64, range: f64, speed: f64) -> Result<Self> {
        Self::new(Variant::ExponentialSaturation, vec![level, range, speed])
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Same curve family at a different parameter value.
    pub fn with_beta(&self, beta: Vec<f64>) -> Result<Self> {
        Self::new(self.variant.clone(), beta)
    }

    /// False for an exponential saturation curve with `β₂ ≤ 0` or `β₃ ≤ 0`,
    /// which is accepted but does not increase in time.
    pub fn is_increasing_curve(&self) -> bool {
        match self.variant {
            Variant::ExponentialSaturation => self.beta[1] > 0.0 && self.beta[2] > 0.0,
            _ => true,
        }
    }

    fn grid_index(&self, t: f64) -> Result<usize> {
        match &self.variant {
            Variant::Unstructured { grid } => grid
                .iter()
                .position(|&tj| same_time(t, tj))
                .ok_or(Error::OffGrid { t }),
            _ => unreachable!("grid_index on a structured model"),
        }
    }

    pub fn eta(&self, t: f64) -> Result<f64> {
        let b = &self.beta;
        let value = match &self.variant {
            Variant::Unstructured { .. } => b[self.grid_index(t)?],
            Variant::LinearPredictor { basis } => {
                basis.iter().zip(b).map(|(f, bk)| f.eval(t) * bk).sum()
            }
            Variant::ExponentialSaturation => b[0] - b[1] * (-b[2] * t).exp(),
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Domain {
                variant: self.variant.name(),
                t,
            })
        }
    }

    /// `ln σ + η(t)`, the logarithm of the mean response.
    pub fn log_mean_response(&self, sigma: f64, t: f64) -> Result<f64> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", "easiness must be positive and finite"));
        }
        Ok(sigma.ln() + self.eta(t)?)
    }

    /// `σ exp(η(t))`, exponentiated last so that overflow is reported rather
    /// than saturated.
    pub fn mean_response(&self, sigma: f64, t: f64) -> Result<f64> {
        let log_mean = self.log_mean_response(sigma, t)?;
        if log_mean > MAX_MEAN.ln() {
            return Err(Error::Overflow { t, log_mean });
        }
        Ok(log_mean.exp())
    }

    /// `∂η(t, β)/∂β`.
    pub fn gradient(&self, t: f64) -> Result<DVector<f64>> {
        let b = &self.beta;
        let g = match &self.variant {
            Variant::Unstructured { grid } => {
                let mut e = DVector::zeros(grid.len());
                e[self.grid_index(t)?] = 1.0;
                e
            }
            Variant::LinearPredictor { basis } => {
                DVector::from_iterator(basis.len(), basis.iter().map(|f| f.eval(t)))
            }
            Variant::ExponentialSaturation => {
                let decay = (-b[2] * t).exp();
                DVector::from_vec(vec![1.0, -decay, b[1] * t * decay])
            }
        };
        if g.iter().all(|x| x.is_finite()) {
            Ok(g)
        } else {
            Err(Error::Domain {
                variant: self.variant.name(),
                t,
            })
        }
    }

    /// Stacks the gradients at `times` as rows of a `J × p` matrix.
    pub fn regression_matrix(&self, times: &[f64]) -> Result<RegressionMatrix> {
        check_increasing(times, "times")?;
        let p = self.p();
        let mut f = DMatrix::zeros(times.len(), p);
        for (j, &t) in times.iter().enumerate() {
            f.set_row(j, &self.gradient(t)?.transpose());
        }
        Ok(RegressionMatrix(f))
    }
}

pub(crate) fn check_increasing(times: &[f64], field: &str) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid(field, "at least one time point is required"));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid(field, "time points must be finite"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(field, "time points must be strictly increasing"));
    }
    Ok(())
}

/// The essential regression matrix `F`: row `j` is `∂η(t_j, β)/∂β`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionMatrix(pub DMatrix<f64>);

impl RegressionMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, j: usize) -> DVector<f64> {
        self.0.row(j).transpose()
    }

    pub fn rank(&self) -> usize {
        let svd = self.0.clone().svd(false, false);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        svd.singular_values
            .iter()
            .filter(|&&s| s > smax * 1e-12 * self.0.nrows().max(self.0.ncols()) as f64)
            .count()
    }

    pub fn has_full_column_rank(&self) -> bool {
        self.rank() == self.ncols()
    }
}

/// Least-squares solution `c` of `F c = 1`, returned only when the residual
/// is at most [`INTERCEPT_TOLERANCE`] in every component.
pub fn intercept_vector(f: &RegressionMatrix) -> Option<DVector<f64>> {
    let (j, _) = f.0.shape();
    let ones = DVector::from_element(j, 1.0);
    let svd = f.0.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return None;
    }
    let c = svd.solve(&ones, smax * 1e-13).ok()?;
    let residual = (&f.0 * &c - ones).amax();
    (residual <= INTERCEPT_TOLERANCE).then_some(c)
}
