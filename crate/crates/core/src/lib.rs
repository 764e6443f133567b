//! Optimal allocation of test items to time points for longitudinal Poisson
//! counts with gamma-distributed person effects.
//!
//! The test person's ability at time `t_j` is `Λ_j = Γ_0 + Γ_j` with a
//! permanent part `Γ_0 ~ Gamma(ρ/τ, τ)` and a transient part
//! `Γ_j ~ Gamma((1−ρ)/τ, τ)`. Given `Λ_j`, the count on item `k` is Poisson
//! with mean `Λ_j σ_jk exp(η(t_j, β))`. The crate computes the
//! quasi-information of an allocation, finds locally D-optimal weights,
//! certifies them with the equivalence theorem, and checks the results by
//! simulation and quasi-likelihood estimation.
//!
//! Modules, bottom up:
//!
//! * [`model`]: learning curves `η(t, β)`, gradients and regression matrices.
//! * [`moments`]: marginal mean, covariance and Jacobian of one person's counts.
//! * [`information`]: standardized quasi-information and the D-criterion.
//! * [`design`]: optimization, sensitivity, efficiency, closed forms, sweeps.
//! * [`simulate`]: data generation, quasi-likelihood fits, CSV input/output.
//! * [`cli`]: configuration handling behind the `rpgcm` binary.

pub mod cli;
pub mod design;
pub mod error;
pub mod information;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod simulate;

pub use error::{Error, Result};
pub use information::{
    core_matrix, d_criterion, individual_quasi_info, quasi_info, quasi_info_intercept_form,
    u_weight, u_weight_derivative, Design, DesignProblem, QuasiInfo,
};
pub use model::{Basis, ModelSpec, RegressionMatrix, Variant};
pub use moments::{assemble_moments, ItemLayout, MomentSet};
