//! Standardized (per item) quasi-information of an approximate design and
//! the D-criterion, computed from `J`- and `p`-dimensional quantities only.
//!
//! With a common easiness `σ`, the per-time mean response is
//! `μ_j = σ exp(η(t_j, β))` and a design with weights `w_j` enters only
//! through the weighting functions
//!
//! ```text
//! u_j(w) = μ_j w / (1 + (1 − ρ) n τ μ_j w)
//! ```
//!
//! via `M(ξ) = Fᵀ U(ξ) F` and
//! `M_Q(ξ) = M(ξ) − ρnτ/(1 + ρnτ Σu_j) · Fᵀu uᵀF`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_logdet, symmetrize, Cholesky};
use crate::moments::{check_dispersion, ItemLayout};
use crate::model::{intercept_vector, ModelSpec, RegressionMatrix, Variant};

/// Everything a locally optimal design depends on.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    times: Vec<f64>,
    n: usize,
    sigma: f64,
    tau: f64,
    rho: f64,
    model: ModelSpec,
    mu: Vec<f64>,
    f: RegressionMatrix,
    intercept: Option<DVector<f64>>,
    /// `F R⁻¹` from a thin QR factorization `F = Q R`. Weights, slacks and
    /// derivatives are invariant under `F → F A`; the orthonormal basis keeps
    /// `M(ξ)` well conditioned when the columns of `F` are nearly collinear.
    basis: DMatrix<f64>,
    /// `2 ln |det R|`, restoring the criterion in the original parameters.
    basis_log_scale: f64,
}

impl DesignProblem {
    pub fn new(
        times: Vec<f64>,
        n: usize,
        sigma: f64,
        tau: f64,
        rho: f64,
        model: ModelSpec,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "total number of items must be positive"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", "sigma must be positive"));
        }
        check_dispersion(tau, rho)?;
        if let Variant::Unstructured { grid } = model.variant() {
            let matches = grid.len() == times.len()
                && grid.iter().zip(&times).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0));
            if !matches {
                return Err(Error::invalid(
                    "model.beta",
                    "unstructured model needs one parameter per time point",
                ));
            }
        }
        let f = model.regression_matrix(&times)?;
        if times.len() < model.p() {
            return Err(Error::invalid(
                "times",
                format!("{} time points cannot support {} parameters", times.len(), model.p()),
            ));
        }
        let mu = times
            .iter()
            .map(|&t| model.mean_response(sigma, t))
            .collect::<Result<Vec<_>>>()?;
        let intercept = intercept_vector(&f);
        let (basis, basis_log_scale) = orthonormal_basis(f.matrix());
        Ok(DesignProblem {
            times,
            n,
            sigma,
            tau,
            rho,
            model,
            mu,
            f,
            intercept,
            basis,
            basis_log_scale,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn model(&self) -> &ModelSpec {
        &self.model
    }
    /// Mean response per item `μ_j` at each time point.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
    pub fn regression_matrix(&self) -> &RegressionMatrix {
        &self.f
    }
    /// `c` with `F c = 1`, when the model contains an (implicit) intercept.
    pub fn intercept(&self) -> Option<&DVector<f64>> {
        self.intercept.as_ref()
    }
    /// Well-conditioned basis of the column space of `F`.
    pub(crate) fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }
    pub fn j(&self) -> usize {
        self.times.len()
    }
    pub fn p(&self) -> usize {
        self.model.p()
    }
    /// Size-related scale `a = nτ`.
    pub fn a(&self) -> f64 {
        self.n as f64 * self.tau
    }
    /// Standardized mean responses `a_j = nτμ_j`.
    pub fn a_j(&self) -> Vec<f64> {
        self.mu.iter().map(|m| self.a() * m).collect()
    }

    pub fn with_model(&self, model: ModelSpec) -> Result<Self> {
        Self::new(self.times.clone(), self.n, self.sigma, self.tau, self.rho, model)
    }
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(self.times.clone(), self.n, self.sigma, self.tau, rho, self.model.clone())
    }
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.times.clone(), self.n, self.sigma, tau, self.rho, self.model.clone())
    }

    /// True when the equivalence theorem applies (`ρ = 0` or `F c = 1`).
    pub fn is_certifiable(&self) -> bool {
        self.rho == 0.0 || self.intercept.is_some()
    }

    fn within(&self) -> f64 {
        (1.0 - self.rho) * self.a()
    }

    fn between(&self) -> f64 {
        self.rho * self.a()
    }
}

fn orthonormal_basis(f: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let qr = f.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = r.diagonal().iter().map(|d| d.abs()).collect();
    let largest = diag.iter().copied().fold(0.0, f64::max);
    if diag.iter().any(|&d| !(d > 1e-14 * largest)) {
        return (f.clone(), 0.0);
    }
    (qr.q(), 2.0 * diag.iter().map(|d| d.ln()).sum::<f64>())
}

/// Approximate design: nonnegative weights over the time points summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Design {
    weights: Vec<f64>,
}

impl Design {
    /// Accepts weights whose sum is within 1e-6 of one and renormalizes them
    /// exactly.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let total = check_weights(&weights)?;
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("weights", format!("weights sum to {total}, not 1")));
        }
        Ok(Self::rescaled(weights, total))
    }

    /// Normalizes any nonnegative vector with positive sum.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total = check_weights(&weights)?;
        Ok(Self::rescaled(weights, total))
    }

    fn rescaled(mut weights: Vec<f64>, total: f64) -> Self {
        weights.iter_mut().for_each(|w| *w /= total);
        Design { weights }
    }

    pub fn uniform(j: usize) -> Self {
        Design {
            weights: vec![1.0 / j as f64; j],
        }
    }

    /// `w_j = n_j / n` for an exact design.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        Self::normalized(counts.iter().map(|&c| c as f64).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub(crate) fn from_simplex_point(weights: Vec<f64>) -> Self {
        Design { weights }
    }
}

fn check_weights(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::invalid("weights", "design has no weights"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights", "weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("weights", "weights must not all be zero"));
    }
    Ok(total)
}

impl TryFrom<Vec<f64>> for Design {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Design::new(v)
    }
}

impl From<Design> for Vec<f64> {
    fn from(d: Design) -> Self {
        d.weights
    }
}

/// `M_Q(ξ)` together with the pieces it is built from.
#[derive(Debug, Clone)]
pub struct QuasiInfo {
    pub matrix: DMatrix<f64>,
    /// `ln det M_Q(ξ)`, or `-inf` when singular.
    pub logdet: f64,
    /// Weighting factors `u_j(w_j)`.
    pub u: Vec<f64>,
    /// Leading term `M(ξ) = Fᵀ U F`.
    pub core: DMatrix<f64>,
}

/// `u_j(w) = μ_j w / (1 + (1 − ρ) n τ μ_j w)`.
pub fn u_weight(problem: &DesignProblem, j: usize, w: f64) -> f64 {
    let mu = problem.mu[j];
    mu * w / (1.0 + problem.within() * mu * w)
}

/// `u_j'(w) = μ_j / (1 + (1 − ρ) n τ μ_j w)²`.
pub fn u_weight_derivative(problem: &DesignProblem, j: usize, w: f64) -> f64 {
    let mu = problem.mu[j];
    let den = 1.0 + problem.within() * mu * w;
    mu / (den * den)
}

pub(crate) fn u_weight_second_derivative(problem: &DesignProblem, j: usize, w: f64) -> f64 {
    let mu = problem.mu[j];
    let b = problem.within();
    let den = 1.0 + b * mu * w;
    -2.0 * b * mu * mu / (den * den * den)
}

pub(crate) fn weighted_gram(f: &DMatrix<f64>, u: &[f64]) -> DMatrix<f64> {
    let p = f.ncols();
    let mut m = DMatrix::zeros(p, p);
    for (j, &uj) in u.iter().enumerate() {
        if uj == 0.0 {
            continue;
        }
        for a in 0..p {
            for b in 0..=a {
                m[(a, b)] += uj * f[(j, a)] * f[(j, b)];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            m[(b, a)] = m[(a, b)];
        }
    }
    m
}

fn u_vector(problem: &DesignProblem, w: &[f64]) -> Vec<f64> {
    w.iter().enumerate().map(|(j, &wj)| u_weight(problem, j, wj)).collect()
}

/// `M(ξ) = Fᵀ diag(u_j(w_j)) F`.
pub fn core_matrix(problem: &DesignProblem, design: &Design) -> DMatrix<f64> {
    weighted_gram(problem.f.matrix(), &u_vector(problem, design.weights()))
}

/// Rank-one correction `M(ξ) − κ (Fᵀu)(Fᵀu)ᵀ` with `κ = ρnτ/(1 + ρnτ Σu)`.
fn corrected(problem: &DesignProblem, core: &DMatrix<f64>, u: &[f64]) -> DMatrix<f64> {
    let k = problem.between();
    if k == 0.0 {
        return core.clone();
    }
    let v = problem.f.matrix().transpose() * DVector::from_column_slice(u);
    let s: f64 = u.iter().sum();
    let kappa = k / (1.0 + k * s);
    let mut mq = core - (&v * v.transpose()) * kappa;
    symmetrize(&mut mq);
    mq
}

/// Standardized quasi-information `M_Q(ξ)`; equals `M(ξ)` when `ρ = 0`.
pub fn quasi_info(problem: &DesignProblem, design: &Design) -> QuasiInfo {
    let u = u_vector(problem, design.weights());
    let core = weighted_gram(problem.f.matrix(), &u);
    let matrix = corrected(problem, &core, &u);
    let logdet = sym_logdet(&matrix);
    QuasiInfo {
        matrix,
        logdet,
        u,
        core,
    }
}

/// `(M(ξ)⁻¹ + ρnτ c cᵀ)⁻¹`, valid when `F c = 1`.
pub fn quasi_info_intercept_form(
    problem: &DesignProblem,
    design: &Design,
    c: &DVector<f64>,
) -> Result<QuasiInfo> {
    let residual = (problem.f.matrix() * c).add_scalar(-1.0).amax();
    if residual > crate::model::INTERCEPT_TOLERANCE {
        return Err(Error::invalid("c", "F c = 1 does not hold"));
    }
    let u = u_vector(problem, design.weights());
    let core = weighted_gram(problem.f.matrix(), &u);
    let chol = Cholesky::new(&core).ok_or_else(|| {
        Error::Singular("M(ξ) is singular; use quasi_info for rank-deficient designs".into())
    })?;
    let inv = chol.inverse() + (c * c.transpose()) * problem.between();
    let matrix = Cholesky::new(&inv)
        .ok_or_else(|| Error::Singular("M(ξ)⁻¹ + ρnτ ccᵀ".into()))?
        .inverse();
    let logdet = sym_logdet(&matrix);
    Ok(QuasiInfo {
        matrix,
        logdet,
        u,
        core,
    })
}

/// D-criterion `ln det M_Q(ξ)`; `-inf` for singular designs.
///
/// With an intercept this is `ln det M − ln(1 + ρnτ Σu)`; otherwise the
/// general form adds `ln(1 + ρnτ (Σu − uᵀF M⁻¹ Fᵀu))`.
pub fn d_criterion(problem: &DesignProblem, design: &Design) -> f64 {
    criterion_at(problem, design.weights())
}

pub(crate) fn criterion_at(problem: &DesignProblem, w: &[f64]) -> f64 {
    let u = u_vector(problem, w);
    let core = weighted_gram(&problem.basis, &u);
    let Some(chol) = Cholesky::new(&core) else {
        return f64::NEG_INFINITY;
    };
    let k = problem.between();
    let s: f64 = u.iter().sum();
    let mut value = chol.logdet() + problem.basis_log_scale - (1.0 + k * s).ln();
    if k > 0.0 && problem.intercept.is_none() {
        let v = problem.basis.transpose() * DVector::from_column_slice(&u);
        let quad = v.dot(&chol.solve(&v));
        value += (1.0 + k * (s - quad)).ln();
    }
    value
}

/// First and second derivatives of the D-criterion with respect to the
/// weights, valid wherever `M(ξ)` is nonsingular.
#[derive(Debug, Clone)]
pub(crate) struct Derivatives {
    #[allow(dead_code)]
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// `∂Φ/∂w_j = u_j' h_jᵀ M_Q⁻¹ h_j` with `h_j = f_j − κ Fᵀu`; the Hessian is
/// `δ_jk u_j'' q_jj − u_j' u_k' (q_jk² + 2κ q_jk)` with `q_jk = h_jᵀ M_Q⁻¹ h_k`.
pub(crate) fn derivatives(problem: &DesignProblem, w: &[f64]) -> Option<Derivatives> {
    let j_count = problem.j();
    let f = &problem.basis;
    let u = u_vector(problem, w);
    let core = weighted_gram(f, &u);
    let chol = Cholesky::new(&core)?;
    let k = problem.between();
    let s: f64 = u.iter().sum();
    let kappa = k / (1.0 + k * s);
    let v = f.transpose() * DVector::from_column_slice(&u);
    let m_inv_v = chol.solve(&v);
    let quad = v.dot(&m_inv_v);
    let denom = 1.0 - kappa * quad;
    if !(denom > 0.0) {
        return None;
    }
    // Sherman–Morrison: (M − κvvᵀ)⁻¹ = M⁻¹ + κ M⁻¹v vᵀM⁻¹ / (1 − κ vᵀM⁻¹v).
    let mq_inv = chol.inverse() + (&m_inv_v * m_inv_v.transpose()) * (kappa / denom);
    let mut value = chol.logdet() + problem.basis_log_scale - (1.0 + k * s).ln();
    if k > 0.0 && problem.intercept.is_none() {
        value += (1.0 + k * (s - quad)).ln();
    }

    let h: Vec<DVector<f64>> = (0..j_count)
        .map(|j| f.row(j).transpose() - &v * kappa)
        .collect();
    let ah: Vec<DVector<f64>> = h.iter().map(|hj| &mq_inv * hj).collect();
    let du: Vec<f64> = (0..j_count).map(|j| u_weight_derivative(problem, j, w[j])).collect();
    let mut q = DMatrix::zeros(j_count, j_count);
    for a in 0..j_count {
        for b in 0..=a {
            let val = h[a].dot(&ah[b]);
            q[(a, b)] = val;
            q[(b, a)] = val;
        }
    }
    let gradient = DVector::from_iterator(j_count, (0..j_count).map(|j| du[j] * q[(j, j)]));
    let mut hessian = DMatrix::zeros(j_count, j_count);
    for a in 0..j_count {
        for b in 0..j_count {
            let qab = q[(a, b)];
            hessian[(a, b)] = -du[a] * du[b] * (qab * qab + 2.0 * kappa * qab);
        }
        hessian[(a, a)] += u_weight_second_derivative(problem, a, w[a]) * q[(a, a)];
    }
    Some(Derivatives {
        value,
        gradient,
        hessian,
    })
}

/// Individual quasi-information `Dᵀ V⁻¹ D` of one test person from `F` and
/// the block totals only:
/// `FᵀUF − ρτ/(1 + ρτ Σu_j) Fᵀu uᵀF` with `u_j = μ_j·/(1 + (1−ρ)τ μ_j·)`.
/// Handles item-specific easiness and empty blocks.
pub fn individual_quasi_info(
    model: &ModelSpec,
    layout: &ItemLayout,
    tau: f64,
    rho: f64,
) -> Result<DMatrix<f64>> {
    check_dispersion(tau, rho)?;
    let f = model.regression_matrix(layout.times())?;
    let mut u = Vec::with_capacity(layout.j());
    for (&t, items) in layout.times().iter().zip(layout.easiness()) {
        let theta = model.mean_response(1.0, t)?;
        let total: f64 = items.iter().map(|s| s * theta).sum();
        u.push(total / (1.0 + (1.0 - rho) * tau * total));
    }
    let core = weighted_gram(f.matrix(), &u);
    let s: f64 = u.iter().sum();
    let v = f.matrix().transpose() * DVector::from_column_slice(&u);
    let mut info = core - (&v * v.transpose()) * (rho * tau / (1.0 + rho * tau * s));
    symmetrize(&mut info);
    Ok(info)
}
