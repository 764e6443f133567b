//! Maximization of the D-criterion over the probability simplex.
//!
//! Small problems (`J ≤ 3`) are searched on a nested lattice (step 1e-2, then
//! 1e-3 and 1e-4 around the incumbent); larger ones by projected gradient
//! ascent from the uniform design and from one vertex-leaning start per time
//! point. Either way the winner is polished by active-set Newton iterations
//! on the face of its support, which is what drives the slacks below 1e-6.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{check_length, sensitivity, Certification, Method, OptimResult, CERTIFICATION_TOLERANCE, SUPPORT_THRESHOLD};
use crate::design::closed_form::two_point_closed_form;
use crate::error::{Error, Result};
use crate::information::{criterion_at, derivatives, Design, DesignProblem};

#[derive(Debug, Clone)]
pub struct OptimizeOptions {
    pub tolerance: f64,
    pub support_threshold: f64,
    /// Use the explicit optimum for two time points and two parameters.
    pub use_closed_forms: bool,
    /// Iteration cap for each ascent run and for the Newton polish.
    pub max_iterations: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            tolerance: CERTIFICATION_TOLERANCE,
            support_threshold: SUPPORT_THRESHOLD,
            use_closed_forms: true,
            max_iterations: 2000,
        }
    }
}

/// Probe step sizes for designs the equivalence theorem cannot certify.
const PROBE_STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];
const PROBE_GAIN: f64 = 1e-8;

pub fn optimize(problem: &DesignProblem, options: &OptimizeOptions) -> Result<OptimResult> {
    let j = problem.j();
    if j == 1 {
        return finish(problem, vec![1.0], Method::ClosedForm, 0, options);
    }
    if options.use_closed_forms && j == 2 && problem.p() == 2 {
        let a = problem.a_j();
        let d = two_point_closed_form(a[0], a[1]);
        return finish(problem, d.weights().to_vec(), Method::ClosedForm, 0, options);
    }
    if j <= 3 {
        let (w, steps) = nested_grid(problem);
        let (w, polish_steps) = polish(problem, w, options.max_iterations);
        return finish(problem, w, Method::Grid, steps + polish_steps, options);
    }
    let mut starts = vec![vec![1.0 / j as f64; j]];
    for lead in 0..j {
        let mut w = vec![0.1 / (j - 1) as f64; j];
        w[lead] = 0.9;
        starts.push(w);
    }
    let runs: Vec<(Vec<f64>, f64, usize)> = starts
        .into_par_iter()
        .map(|start| {
            let (w, a_steps) = ascent(problem, start, options.max_iterations);
            let (w, p_steps) = polish(problem, w, options.max_iterations);
            let value = criterion_at(problem, &w);
            (w, value, a_steps + p_steps)
        })
        .collect();
    let iterations = runs.iter().map(|r| r.2).sum();
    let (w, _, _) = runs
        .into_iter()
        .reduce(|best, next| if better(&next.0, next.1, &best.0, best.1) { next } else { best })
        .expect("at least one start");
    finish(problem, w, Method::SimplexSolver, iterations, options)
}

/// Newton polish from a given point, for callers that hold a good candidate.
pub(crate) fn optimize_from(
    problem: &DesignProblem,
    start: &[f64],
    options: &OptimizeOptions,
) -> Result<OptimResult> {
    let (w, steps) = polish(problem, start.to_vec(), options.max_iterations);
    finish(problem, w, Method::SimplexSolver, steps, options)
}

/// Higher criterion wins; near-ties go to the lexicographically smaller weights.
fn better(w: &[f64], value: f64, incumbent: &[f64], incumbent_value: f64) -> bool {
    if (value - incumbent_value).abs() > 1e-12 * (1.0 + incumbent_value.abs()) {
        return value > incumbent_value;
    }
    w.iter()
        .zip(incumbent)
        .find(|(a, b)| a != b)
        .is_some_and(|(a, b)| a < b)
}

fn finish(
    problem: &DesignProblem,
    w: Vec<f64>,
    method: Method,
    iterations: usize,
    options: &OptimizeOptions,
) -> Result<OptimResult> {
    let design = Design::from_simplex_point(w);
    check_length(problem, &design)?;
    let criterion = criterion_at(problem, design.weights());
    if criterion == f64::NEG_INFINITY {
        return Err(Error::Singular("no design with nonsingular quasi-information found".into()));
    }
    if problem.is_certifiable() {
        let certificate = sensitivity(problem, &design)?;
        let max_violation = certificate.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Ok(OptimResult {
            design,
            criterion,
            certified: max_violation <= options.tolerance,
            certificate,
            max_violation,
            method,
            iterations,
            certification: Certification::EquivalenceTheorem,
        });
    }
    if let Some((better, gain)) = local_probe(problem, design.weights(), criterion) {
        return Err(Error::ProbeImprovement {
            better: Design::from_simplex_point(better),
            gain,
        });
    }
    let certificate = directional_slacks(problem, design.weights())
        .ok_or_else(|| Error::Singular("M(ξ) at the optimum".into()))?;
    let max_violation = certificate.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(OptimResult {
        design,
        criterion,
        certified: max_violation <= options.tolerance,
        certificate,
        max_violation,
        method,
        iterations,
        certification: Certification::LocalProbe,
    })
}

fn directional_slacks(problem: &DesignProblem, w: &[f64]) -> Option<Vec<f64>> {
    let d = derivatives(problem, w)?;
    let mean: f64 = d.gradient.iter().zip(w).map(|(g, x)| g * x).sum();
    Some(d.gradient.iter().map(|g| g - mean).collect())
}

/// Best pairwise transfer of mass `δ` from one time point to another.
fn local_probe(problem: &DesignProblem, w: &[f64], value: f64) -> Option<(Vec<f64>, f64)> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &delta in &PROBE_STEPS {
        for from in 0..w.len() {
            if w[from] < delta {
                continue;
            }
            for to in 0..w.len() {
                if to == from {
                    continue;
                }
                let mut cand = w.to_vec();
                cand[from] -= delta;
                cand[to] += delta;
                let gain = criterion_at(problem, &cand) - value;
                if gain > PROBE_GAIN && best.as_ref().is_none_or(|b| gain > b.1) {
                    best = Some((cand, gain));
                }
            }
        }
    }
    best
}

/// Lattice search over the first `J − 1` coordinates, refined twice by a
/// factor of ten within one coarse step of the incumbent.
fn nested_grid(problem: &DesignProblem) -> (Vec<f64>, usize) {
    let j = problem.j();
    let mut best = vec![1.0 / j as f64; j];
    let mut best_value = criterion_at(problem, &best);
    let coarse = 100i64;
    let consider = |w: Vec<f64>, best: &mut Vec<f64>, best_value: &mut f64| {
        let value = criterion_at(problem, &w);
        if value > *best_value {
            *best = w;
            *best_value = value;
        }
    };
    for a in 0..=coarse {
        if j == 2 {
            let x = a as f64 / coarse as f64;
            consider(vec![x, 1.0 - x], &mut best, &mut best_value);
            continue;
        }
        for b in 0..=(coarse - a) {
            let (x, y) = (a as f64 / coarse as f64, b as f64 / coarse as f64);
            consider(vec![x, y, (1.0 - x - y).max(0.0)], &mut best, &mut best_value);
        }
    }
    for h in [1e-3, 1e-4] {
        let center = best.clone();
        for a in -10i64..=10 {
            let x = center[0] + a as f64 * h;
            if !(-1e-12..=1.0 + 1e-12).contains(&x) {
                continue;
            }
            let x = x.clamp(0.0, 1.0);
            if j == 2 {
                consider(vec![x, 1.0 - x], &mut best, &mut best_value);
                continue;
            }
            for b in -10i64..=10 {
                let y = center[1] + b as f64 * h;
                let z = 1.0 - x - y;
                if y < -1e-12 || z < -1e-12 {
                    continue;
                }
                consider(vec![x, y.max(0.0), z.max(0.0)], &mut best, &mut best_value);
            }
        }
    }
    (best, 3)
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Projected gradient ascent with Armijo backtracking along the projection arc.
fn ascent(problem: &DesignProblem, mut w: Vec<f64>, max_iterations: usize) -> (Vec<f64>, usize) {
    let mut value = criterion_at(problem, &w);
    let mut step = 1e-2;
    for iteration in 0..max_iterations {
        let Some(d) = derivatives(problem, &w) else {
            return (w, iteration);
        };
        let mut accepted = false;
        let mut s = step;
        while s > 1e-18 {
            let cand = project_simplex(
                &w.iter().zip(d.gradient.iter()).map(|(x, g)| x + s * g).collect::<Vec<_>>(),
            );
            let moved: f64 = cand.iter().zip(&w).zip(d.gradient.iter()).map(|((c, x), g)| g * (c - x)).sum();
            let cand_value = criterion_at(problem, &cand);
            if cand_value >= value + 1e-4 * moved {
                let change = cand.iter().zip(&w).map(|(c, x)| (c - x).abs()).fold(0.0, f64::max);
                w = cand;
                value = cand_value;
                step = s * 2.0;
                accepted = change > 1e-12;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            return (w, iteration + 1);
        }
    }
    (w, max_iterations)
}

/// Active-set Newton ascent on the support face, admitting the time point
/// with the largest positive slack once the face is stationary.
pub(crate) fn polish(problem: &DesignProblem, mut w: Vec<f64>, max_iterations: usize) -> (Vec<f64>, usize) {
    let j = w.len();
    let mut value = criterion_at(problem, &w);
    if value == f64::NEG_INFINITY {
        return (w, 0);
    }
    let mut active: Vec<bool> = w.iter().map(|&x| x > 0.0).collect();
    for iteration in 0..max_iterations {
        let Some(d) = derivatives(problem, &w) else {
            return (w, iteration);
        };
        let g = &d.gradient;
        let mean: f64 = g.iter().zip(&w).map(|(a, b)| a * b).sum();
        let scale = 1.0 + mean.abs();
        let slack: Vec<f64> = g.iter().map(|x| x - mean).collect();
        let face_error = (0..j)
            .filter(|&k| active[k])
            .map(|k| slack[k].abs())
            .fold(0.0, f64::max);
        let entering = (0..j)
            .filter(|&k| !active[k] && slack[k] > 1e-10 * scale)
            .max_by(|&a, &b| slack[a].total_cmp(&slack[b]));
        if face_error <= 1e-11 * scale {
            match entering {
                Some(k) => active[k] = true,
                None => return (w, iteration),
            }
        }
        let idx: Vec<usize> = (0..j).filter(|&k| active[k]).collect();
        let mut dir = vec![0.0; j];
        let newton = face_newton(&d.hessian, g, &idx);
        match newton {
            Some(step) if step.iter().zip(&idx).map(|(s, &k)| s * g[k]).sum::<f64>() > 0.0 => {
                for (s, &k) in step.iter().zip(&idx) {
                    dir[k] = *s;
                }
            }
            _ => {
                let face_mean = idx.iter().map(|&k| g[k]).sum::<f64>() / idx.len() as f64;
                for &k in &idx {
                    dir[k] = g[k] - face_mean;
                }
            }
        }
        // A newly admitted point must be able to grow; otherwise move toward its vertex.
        if let Some(k) = entering.filter(|&k| w[k] == 0.0 && dir[k] <= 0.0) {
            for (i, x) in dir.iter_mut().enumerate() {
                *x = if i == k { 1.0 } else { 0.0 } - w[i];
            }
        }
        let mut alpha_max = 1.0f64;
        let mut blocking = None;
        for k in 0..j {
            if dir[k] < 0.0 {
                let ratio = w[k] / -dir[k];
                if ratio < alpha_max {
                    alpha_max = ratio;
                    blocking = Some(k);
                }
            }
        }
        if alpha_max <= 0.0 {
            // Stuck at a zero weight that wants to shrink: drop it from the face.
            if let Some(k) = blocking {
                active[k] = false;
                continue;
            }
            return (w, iteration);
        }
        let mut alpha = alpha_max;
        let mut improved = false;
        for _ in 0..60 {
            let mut cand: Vec<f64> = w.iter().zip(&dir).map(|(x, s)| (x + alpha * s).max(0.0)).collect();
            if alpha == alpha_max {
                if let Some(k) = blocking {
                    cand[k] = 0.0;
                }
            }
            let total: f64 = cand.iter().sum();
            cand.iter_mut().for_each(|x| *x /= total);
            let cand_value = criterion_at(problem, &cand);
            // Close to the optimum the criterion cannot resolve the gain; the
            // face residual decides instead.
            let flat = cand_value >= value - 1e-13 * (1.0 + value.abs())
                && face_residual(problem, &cand).is_some_and(|r| r < face_error);
            if cand_value > value || flat {
                let change = cand.iter().zip(&w).map(|(c, x)| (c - x).abs()).fold(0.0, f64::max);
                w = cand;
                value = cand_value;
                improved = change > 0.0;
                break;
            }
            alpha *= 0.5;
        }
        for k in 0..j {
            if w[k] == 0.0 {
                active[k] = false;
            }
        }
        if !improved {
            // No progress along the face: keep admitting points while any has positive slack.
            if entering.is_none() || face_error > 1e-11 * scale {
                return (w, iteration + 1);
            }
        }
    }
    (w, max_iterations)
}

/// Largest slack magnitude over the support of `w`.
fn face_residual(problem: &DesignProblem, w: &[f64]) -> Option<f64> {
    let slack = directional_slacks(problem, w)?;
    Some(
        slack
            .iter()
            .zip(w)
            .filter(|(_, &x)| x > 0.0)
            .map(|(s, _)| s.abs())
            .fold(0.0, f64::max),
    )
}

/// Newton step for maximizing on `{Σ_{k∈idx} d_k = 0}` from the bordered
/// system `[−H 1; 1ᵀ 0] [d; λ] = [g; 0]`. LU with full pivoting copes with the
/// severe ill-conditioning of nearly collinear regression columns.
fn face_newton(hessian: &DMatrix<f64>, gradient: &DVector<f64>, idx: &[usize]) -> Option<Vec<f64>> {
    let m = idx.len();
    let mut kkt = DMatrix::zeros(m + 1, m + 1);
    let mut rhs = DVector::zeros(m + 1);
    for r in 0..m {
        for c in 0..m {
            kkt[(r, c)] = -hessian[(idx[r], idx[c])];
        }
        kkt[(r, m)] = 1.0;
        kkt[(m, r)] = 1.0;
        rhs[r] = gradient[idx[r]];
    }
    let solution = kkt.full_piv_lu().solve(&rhs)?;
    let step: Vec<f64> = solution.iter().take(m).copied().collect();
    step.iter().all(|x| x.is_finite()).then_some(step)
}
