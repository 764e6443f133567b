//! Explicit solutions for two time points and for the straight line on three
//! equally spaced time points.

use crate::information::Design;

/// Standardized mean response below which the two-point design `(½, 0, ½)`
/// is optimal for the straight line at every correlation: `2(√2 − 1)`.
pub const STRAIGHT_LINE_THRESHOLD: f64 = 2.0 * (std::f64::consts::SQRT_2 - 1.0);

/// Optimal weights for two time points and two parameters,
/// `w₁* = √(a₂+1) / (√(a₁+1) + √(a₂+1))`; the same for every `ρ`.
pub fn two_point_closed_form(a1: f64, a2: f64) -> Design {
    let (r1, r2) = ((a1 + 1.0).sqrt(), (a2 + 1.0).sqrt());
    let w1 = r2 / (r1 + r2);
    Design::from_simplex_point(vec![w1, 1.0 - w1])
}

/// Efficiency of `(w₁, 1 − w₁)` for two time points:
/// `[((√((a₁+1)(a₂+1)) + 1)² − ρ²a₁a₂) / ((a₁ + 1/w₁)(a₂ + 1/w₂) − ρ²a₁a₂)]^½`.
pub fn two_point_efficiency(a1: f64, a2: f64, rho: f64, w1: f64) -> f64 {
    let w2 = 1.0 - w1;
    let shared = rho * rho * a1 * a2;
    let best = ((a1 + 1.0) * (a2 + 1.0)).sqrt() + 1.0;
    ((best * best - shared) / ((a1 + 1.0 / w1) * (a2 + 1.0 / w2) - shared)).sqrt()
}

/// Uniform-design efficiency as the second mean grows without bound:
/// `(((1−ρ²)a₁ + 1) / ((1−ρ²)a₁ + 2))^½`.
pub fn two_point_gain_efficiency_limit(a1: f64, rho: f64) -> f64 {
    let b = (1.0 - rho * rho) * a1;
    ((b + 1.0) / (b + 2.0)).sqrt()
}

/// Uniform-design efficiency as the second mean vanishes:
/// `(½ + √(a₁+1)/(a₁+2))^½`, for every `ρ`.
pub fn two_point_loss_efficiency_limit(a1: f64) -> f64 {
    (0.5 + (a1 + 1.0).sqrt() / (a1 + 2.0)).sqrt()
}

/// `w₁*` as the second mean vanishes: `1 / (√(a₁+1) + 1)`.
pub fn two_point_loss_weight_limit(a1: f64) -> f64 {
    1.0 / ((a1 + 1.0).sqrt() + 1.0)
}

/// `w₁*` when both standardized means grow with fixed log-ratio
/// `gain = ln(μ₂/μ₁)`: `1 / (1 + exp(−gain/2))`.
pub fn large_scale_weight_limit(gain: f64) -> f64 {
    1.0 / (1.0 + (-gain / 2.0).exp())
}

/// Correlation above which `(½, 0, ½)` is optimal for the straight line on
/// `t = (0, 1, 2)` with zero slope: `1 − 2((2+a₁)^⅓ − 1)/a₁`, and 0 when
/// `a₁ ≤ 2(√2 − 1)`.
pub fn rho_crit_straight_line(a1: f64) -> f64 {
    if a1 <= STRAIGHT_LINE_THRESHOLD {
        return 0.0;
    }
    1.0 - 2.0 * ((2.0 + a1).cbrt() - 1.0) / a1
}
