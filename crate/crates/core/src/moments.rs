//! Item-level marginal moments of one test person's response vector.
//!
//! Everything here is dense and `n × n`: the module is the brute-force
//! reference against which the `J`- and `p`-dimensional representations in
//! [`crate::information`] are checked, and the engine behind the
//! quasi-likelihood fit in [`crate::simulate`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_increasing, ModelSpec};

pub(crate) fn check_dispersion(tau: f64, rho: f64) -> Result<()> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::invalid("tau", "tau must be finite and nonnegative"));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid("rho", "rho must lie in [0,1]"));
    }
    Ok(())
}

/// Which items are presented at which time point, and how easy each one is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemLayout {
    times: Vec<f64>,
    /// `easiness[j][k]` is the easiness of item `k` at time `j`; its length
    /// is the item count `n_j`.
    easiness: Vec<Vec<f64>>,
}

impl ItemLayout {
    pub fn new(times: Vec<f64>, easiness: Vec<Vec<f64>>) -> Result<Self> {
        check_increasing(&times, "times")?;
        if easiness.len() != times.len() {
            return Err(Error::invalid(
                "counts",
                format!("{} time points but {} item blocks", times.len(), easiness.len()),
            ));
        }
        if easiness.iter().all(|b| b.is_empty()) {
            return Err(Error::invalid("counts", "total number of items must be positive"));
        }
        if easiness.iter().flatten().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("sigma", "every easiness must be positive and finite"));
        }
        Ok(ItemLayout { times, easiness })
    }

    /// All items share the easiness `sigma`.
    pub fn common(times: Vec<f64>, counts: &[usize], sigma: f64) -> Result<Self> {
        let easiness = counts.iter().map(|&c| vec![sigma; c]).collect();
        Self::new(times, easiness)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn easiness(&self) -> &[Vec<f64>] {
        &self.easiness
    }

    pub fn counts(&self) -> Vec<usize> {
        self.easiness.iter().map(Vec::len).collect()
    }

    pub fn n(&self) -> usize {
        self.easiness.iter().map(Vec::len).sum()
    }

    pub fn j(&self) -> usize {
        self.times.len()
    }

    /// Same layout with every easiness multiplied by the matching factor.
    pub fn scaled(&self, factors: &[Vec<f64>]) -> Result<Self> {
        let easiness = self
            .easiness
            .iter()
            .zip(factors)
            .map(|(b, f)| b.iter().zip(f).map(|(s, k)| s * k).collect())
            .collect();
        Self::new(self.times.clone(), easiness)
    }
}

/// Stacked mean `μ`, covariance `V` and derivative matrix `D = ∂μ/∂βᵀ`.
#[derive(Debug, Clone)]
pub struct MomentSet {
    pub mu: DVector<f64>,
    pub v: DMatrix<f64>,
    pub d: DMatrix<f64>,
    /// Item counts per time point; block `j` occupies the next `counts[j]`
    /// entries of `mu`.
    pub counts: Vec<usize>,
}

impl MomentSet {
    /// Total mean response `μ_{j·}` per time point.
    pub fn block_totals(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.counts.len());
        let mut at = 0;
        for &c in &self.counts {
            out.push(self.mu.rows(at, c).sum());
            at += c;
        }
        out
    }

    fn block_of(&self) -> Vec<usize> {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(j, &c)| std::iter::repeat_n(j, c))
            .collect()
    }
}

/// Builds `μ`, `V` and `D` for one test person under `layout`.
///
/// `V = diag(μ) + (1−ρ)τ diag(μ_j μ_jᵀ) + ρτ μ μᵀ`, i.e. `τμ² + μ` on the
/// diagonal, `τ μ μ'` within a time point and `ρτ μ μ'` across time points.
pub fn assemble_moments(
    model: &ModelSpec,
    layout: &ItemLayout,
    tau: f64,
    rho: f64,
) -> Result<MomentSet> {
    check_dispersion(tau, rho)?;
    let n = layout.n();
    if n == 0 {
        return Err(Error::invalid("counts", "total number of items must be positive"));
    }
    let p = model.p();
    let mut mu = DVector::zeros(n);
    let mut d = DMatrix::zeros(n, p);
    let mut block = Vec::with_capacity(n);
    let mut row = 0;
    for (j, (&t, items)) in layout.times().iter().zip(layout.easiness()).enumerate() {
        if items.is_empty() {
            continue;
        }
        let f = model.gradient(t)?;
        for &sigma in items {
            let m = model.mean_response(sigma, t)?;
            mu[row] = m;
            d.set_row(row, &(&f * m).transpose());
            block.push(j);
            row += 1;
        }
    }
    let mut v = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let cross = mu[a] * mu[b];
            v[(a, b)] = if a == b {
                tau * cross + mu[a]
            } else if block[a] == block[b] {
                tau * cross
            } else {
                rho * tau * cross
            };
        }
    }
    Ok(MomentSet {
        mu,
        v,
        d,
        counts: layout.counts(),
    })
}

/// Closed-form `V⁻¹ = diag(C_j⁻¹) − ρτ/(1 + ρτ Σ u_j) · a aᵀ` where
/// `C_j = diag(μ_jk) + (1−ρ)τ μ_j μ_jᵀ`, `a_jk = 1/(1 + (1−ρ)τ μ_j·)` and
/// `u_j = μ_j·/(1 + (1−ρ)τ μ_j·)`.
pub fn v_inverse_closed_form(ms: &MomentSet, tau: f64, rho: f64) -> DMatrix<f64> {
    let n = ms.mu.len();
    let totals = ms.block_totals();
    let within = (1.0 - rho) * tau;
    let shrink: Vec<f64> = totals.iter().map(|&t| 1.0 / (1.0 + within * t)).collect();
    let u_sum: f64 = totals.iter().zip(&shrink).map(|(t, s)| t * s).sum();
    let block = ms.block_of();
    let a = DVector::from_iterator(n, block.iter().map(|&j| shrink[j]));
    let mut inv = DMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            if block[r] == block[c] {
                let diag = if r == c { 1.0 / ms.mu[r] } else { 0.0 };
                inv[(r, c)] = diag - within * shrink[block[r]];
            }
        }
    }
    let k = rho * tau / (1.0 + rho * tau * u_sum);
    inv - (&a * a.transpose()) * k
}

/// `Dᵀ V⁻¹ D` by generic dense inversion of `V`; deliberately independent of
/// the closed-form inverse.
pub fn individual_quasi_info_bruteforce(ms: &MomentSet) -> Result<DMatrix<f64>> {
    let v_inv = ms
        .v
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("marginal covariance V".into()))?;
    let mut info = ms.d.transpose() * v_inv * &ms.d;
    crate::linalg::symmetrize(&mut info);
    Ok(info)
}
