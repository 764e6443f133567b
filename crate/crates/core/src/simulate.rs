//! Data generation under the gamma–Poisson model and maximum quasi-likelihood
//! estimation of `β` with `τ` and `ρ` treated as known.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Cholesky};
use crate::moments::{assemble_moments, check_dispersion, v_inverse_closed_form, ItemLayout};
use crate::model::ModelSpec;

/// Dispersion of the person effects `Λ_j = Γ_0 + Γ_j`, with
/// `Γ_0 ~ Gamma(ρ/τ, τ)` and `Γ_j ~ Gamma((1−ρ)/τ, τ)`, so that `E Λ_j = 1`,
/// `Var Λ_j = τ` and `Cov(Λ_j, Λ_j') = ρτ`. `τ = 0` gives `Λ ≡ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectConfig {
    tau: f64,
    rho: f64,
}

impl EffectConfig {
    pub fn new(tau: f64, rho: f64) -> Result<Self> {
        check_dispersion(tau, rho)?;
        Ok(EffectConfig { tau, rho })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Shapes `(α₀, α) = (ρ/τ, (1−ρ)/τ)`; both zero when `τ = 0`.
    pub fn shapes(&self) -> (f64, f64) {
        if self.tau == 0.0 {
            return (0.0, 0.0);
        }
        (self.rho / self.tau, (1.0 - self.rho) / self.tau)
    }
}

fn gamma_draw<R: rand::Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    if shape == 0.0 {
        return 0.0;
    }
    Gamma::new(shape, scale)
        .expect("shape and scale are positive")
        .sample(rng)
}

/// One person's effects at `j` time points.
pub fn draw_effects<R: rand::Rng + ?Sized>(cfg: &EffectConfig, j: usize, rng: &mut R) -> Vec<f64> {
    if cfg.tau == 0.0 {
        return vec![1.0; j];
    }
    let (a0, a) = cfg.shapes();
    let permanent = gamma_draw(a0, cfg.tau, rng);
    (0..j).map(|_| permanent + gamma_draw(a, cfg.tau, rng)).collect()
}

/// Per-person random stream: the seed selects the generator, the person
/// index selects the stream, so persons can be simulated in any order.
pub fn person_rng(seed: u64, person: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(person as u64);
    rng
}

/// Counts of `N` persons on a common item layout. `responses[i]` lists the
/// items block by block in layout order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseData {
    layout: ItemLayout,
    responses: Vec<Vec<u64>>,
}

impl ResponseData {
    pub fn new(layout: ItemLayout, responses: Vec<Vec<u64>>) -> Result<Self> {
        if responses.is_empty() {
            return Err(Error::Io("dataset contains no persons".into()));
        }
        let n = layout.n();
        if let Some(bad) = responses.iter().position(|r| r.len() != n) {
            return Err(Error::invalid(
                "dataset",
                format!("person {} has {} counts, layout has {n} items", bad + 1, responses[bad].len()),
            ));
        }
        Ok(ResponseData { layout, responses })
    }

    pub fn layout(&self) -> &ItemLayout {
        &self.layout
    }

    pub fn responses(&self) -> &[Vec<u64>] {
        &self.responses
    }

    pub fn persons(&self) -> usize {
        self.responses.len()
    }

    /// Mean response vector `Ȳ` over persons.
    pub fn mean_response(&self) -> DVector<f64> {
        let n = self.layout.n();
        let mut mean = DVector::zeros(n);
        for r in &self.responses {
            for (m, &y) in mean.iter_mut().zip(r) {
                *m += y as f64;
            }
        }
        mean / self.responses.len() as f64
    }
}

/// Simulated data together with everything needed to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDataset {
    pub data: ResponseData,
    pub model: ModelSpec,
    pub effects: EffectConfig,
    pub seed: u64,
}

/// Draws `persons` independent response vectors: effects `Λ` first, then
/// `Y_jk ~ Poisson(Λ_j σ_jk exp(η(t_j)))` independently per item.
pub fn simulate(
    model: &ModelSpec,
    layout: &ItemLayout,
    effects: EffectConfig,
    persons: usize,
    seed: u64,
) -> Result<SimDataset> {
    if persons == 0 {
        return Err(Error::invalid("sim.N", "number of persons must be positive"));
    }
    let means: Vec<Vec<f64>> = layout
        .times()
        .iter()
        .zip(layout.easiness())
        .map(|(&t, items)| items.iter().map(|&s| model.mean_response(s, t)).collect())
        .collect::<Result<_>>()?;
    let responses = (0..persons)
        .into_par_iter()
        .map(|i| {
            let mut rng = person_rng(seed, i);
            let lambda = draw_effects(&effects, layout.j(), &mut rng);
            let mut row = Vec::with_capacity(layout.n());
            for (block, l) in means.iter().zip(&lambda) {
                for &m in block {
                    let rate = l * m;
                    let y = if rate > 0.0 {
                        Poisson::new(rate).expect("positive finite rate").sample(&mut rng) as u64
                    } else {
                        0
                    };
                    row.push(y);
                }
            }
            row
        })
        .collect();
    Ok(SimDataset {
        data: ResponseData::new(layout.clone(), responses)?,
        model: model.clone(),
        effects,
        seed,
    })
}

pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const STEP_TOLERANCE: f64 = 1e-10;
pub const MAX_SCORING_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 10;
/// Largest pending scoring step accepted at convergence.
const CONVERGED_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MqlFit {
    pub beta_hat: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Euclidean norm of the per-person quasi-score `Dᵀ V⁻¹ (Ȳ − μ)`.
    pub score_norm: f64,
    pub score_history: Vec<f64>,
    /// Total quasi-information `N Dᵀ V⁻¹ D` at `β̂`.
    pub quasi_info_at_fit: DMatrix<f64>,
}

impl MqlFit {
    /// Square roots of the diagonal of the inverse total quasi-information.
    pub fn standard_errors(&self) -> Result<Vec<f64>> {
        let inv = Cholesky::new(&self.quasi_info_at_fit)
            .ok_or_else(|| Error::Singular("quasi-information at the fit".into()))?
            .inverse();
        Ok(inv.diagonal().iter().map(|v| v.sqrt()).collect())
    }
}

struct ScoringState {
    score: DVector<f64>,
    info: DMatrix<f64>,
}

fn scoring_state(
    model: &ModelSpec,
    layout: &ItemLayout,
    y_bar: &DVector<f64>,
    tau: f64,
    rho: f64,
) -> Result<ScoringState> {
    let ms = assemble_moments(model, layout, tau, rho)?;
    let v_inv = v_inverse_closed_form(&ms, tau, rho);
    let dt_vinv = ms.d.transpose() * v_inv;
    let score = &dt_vinv * (y_bar - &ms.mu);
    let mut info = dt_vinv * &ms.d;
    symmetrize(&mut info);
    Ok(ScoringState { score, info })
}

/// Modified Fisher scoring for the quasi-score equation
/// `Σ_i Dᵀ V⁻¹ (Y_i − μ) = 0`, which for a common layout is
/// `Dᵀ V⁻¹ (Ȳ − μ) = 0`.
///
/// Each step `β ← β + (DᵀV⁻¹D)⁻¹ DᵀV⁻¹(Ȳ − μ)` is halved (at most ten times)
/// while it fails to reduce the score norm. Iteration stops once the score
/// norm is at most 1e-8 (with a pending step of at most 1e-6), the step is
/// at most 1e-10, or after 100 steps; `converged` reports whether the score
/// criterion was met. Without
/// `beta_init`, the start is the Poisson fit (`τ = 0`) from `model`'s `β`.
pub fn mql_fit(
    data: &ResponseData,
    model: &ModelSpec,
    tau: f64,
    rho: f64,
    beta_init: Option<&[f64]>,
) -> Result<MqlFit> {
    check_dispersion(tau, rho)?;
    let start = match beta_init {
        Some(b) => model.with_beta(b.to_vec())?,
        None if tau == 0.0 => model.clone(),
        None => {
            let poisson = mql_fit(data, model, 0.0, 0.0, Some(model.beta()))?;
            if poisson.converged {
                model.with_beta(poisson.beta_hat)?
            } else {
                model.clone()
            }
        }
    };
    scoring(data, start, tau, rho)
}

fn scoring(data: &ResponseData, mut current: ModelSpec, tau: f64, rho: f64) -> Result<MqlFit> {
    let layout = data.layout();
    let y_bar = data.mean_response();
    let persons = data.persons() as f64;
    let mut state = scoring_state(&current, layout, &y_bar, tau, rho)?;
    let mut history = vec![state.score.norm()];
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let Some(chol) = Cholesky::new(&state.info) else {
            // Singular at the start is an error; later it means divergence.
            if iterations == 0 {
                return Err(Error::Singular("quasi-information Dᵀ V⁻¹ D".into()));
            }
            break;
        };
        let full_step = chol.solve(&state.score);
        let score_norm = state.score.norm();
        // A vanishing score alone is not enough: with a zero-count cell the
        // score decays like μ while β drifts off to −∞ in unit steps.
        if score_norm <= SCORE_TOLERANCE && full_step.norm() <= CONVERGED_STEP {
            converged = true;
            break;
        }
        if iterations == MAX_SCORING_ITERATIONS {
            break;
        }
        let beta = DVector::from_column_slice(current.beta());
        let mut factor = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate = (&beta + &full_step * factor).iter().copied().collect::<Vec<_>>();
            if let Ok(model) = current.with_beta(candidate) {
                if let Ok(next) = scoring_state(&model, layout, &y_bar, tau, rho) {
                    if next.score.norm() < score_norm {
                        accepted = Some((model, next));
                        break;
                    }
                }
            }
            factor *= 0.5;
        }
        iterations += 1;
        let Some((model, next)) = accepted else {
            break;
        };
        current = model;
        state = next;
        history.push(state.score.norm());
        if full_step.norm() * factor <= STEP_TOLERANCE {
            converged = state.score.norm() <= SCORE_TOLERANCE;
            break;
        }
    }
    let score_norm = state.score.norm();
    Ok(MqlFit {
        beta_hat: current.beta().to_vec(),
        iterations,
        converged: converged && score_norm.is_finite(),
        score_norm,
        score_history: history,
        quasi_info_at_fit: state.info * persons,
    })
}

/// Sample covariance of replicated estimates and its inverse.
#[derive(Debug, Clone)]
pub struct EmpiricalInformation {
    pub covariance: DMatrix<f64>,
    pub information: DMatrix<f64>,
}

pub const MIN_REPLICATES: usize = 200;

pub fn empirical_information(fits: &[MqlFit]) -> Result<EmpiricalInformation> {
    if fits.len() < MIN_REPLICATES {
        return Err(Error::TooFewReplicates {
            needed: MIN_REPLICATES,
            got: fits.len(),
        });
    }
    let p = fits[0].beta_hat.len();
    let r = fits.len() as f64;
    let mut mean = DVector::zeros(p);
    for f in fits {
        mean += DVector::from_column_slice(&f.beta_hat);
    }
    mean /= r;
    let mut covariance = DMatrix::zeros(p, p);
    for f in fits {
        let d = DVector::from_column_slice(&f.beta_hat) - &mean;
        covariance += &d * d.transpose();
    }
    covariance /= r - 1.0;
    let information = Cholesky::new(&covariance)
        .ok_or_else(|| Error::Singular("sample covariance of the estimates".into()))?
        .inverse();
    Ok(EmpiricalInformation {
        covariance,
        information,
    })
}

/// Writes `person,time_index,item_index,count` rows (indices from 1), one per
/// person and item, after optional `#` comment lines.
pub fn write_responses_csv<W: Write>(data: &ResponseData, mut writer: W, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(writer, "# {c}")?;
    }
    let mut csv = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    csv.write_record(["person", "time_index", "item_index", "count"])?;
    let counts = data.layout.counts();
    for (i, row) in data.responses.iter().enumerate() {
        let mut at = 0;
        for (j, &c) in counts.iter().enumerate() {
            for k in 0..c {
                csv.write_record(&[
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    (k + 1).to_string(),
                    row[at].to_string(),
                ])?;
                at += 1;
            }
        }
    }
    csv.flush()?;
    Ok(())
}

/// Counts table read back from CSV: item counts per time index and one
/// response vector per person.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTable {
    pub counts: Vec<usize>,
    pub responses: Vec<Vec<u64>>,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    person: usize,
    time_index: usize,
    item_index: usize,
    count: u64,
}

/// Parses the format of [`write_responses_csv`], skipping `#` lines. Every
/// person must report every item exactly once.
pub fn read_responses_csv<R: Read>(reader: R) -> Result<ResponseTable> {
    let mut csv = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Io("dataset is empty".into()));
    }
    let mut rows = Vec::new();
    for record in csv.deserialize::<CsvRow>() {
        let row = record?;
        if row.person == 0 || row.time_index == 0 || row.item_index == 0 {
            return Err(Error::Io("dataset indices start at 1".into()));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Io("dataset has no rows".into()));
    }
    let persons = rows.iter().map(|r| r.person).max().unwrap_or(0);
    let times = rows.iter().map(|r| r.time_index).max().unwrap_or(0);
    let mut counts = vec![0usize; times];
    for r in &rows {
        counts[r.time_index - 1] = counts[r.time_index - 1].max(r.item_index);
    }
    let offsets: Vec<usize> = counts
        .iter()
        .scan(0, |acc, &c| {
            let start = *acc;
            *acc += c;
            Some(start)
        })
        .collect();
    let n: usize = counts.iter().sum();
    let mut seen = vec![vec![false; n]; persons];
    let mut responses = vec![vec![0u64; n]; persons];
    for r in &rows {
        let at = offsets[r.time_index - 1] + r.item_index - 1;
        if std::mem::replace(&mut seen[r.person - 1][at], true) {
            return Err(Error::Io(format!(
                "duplicate row for person {}, time {}, item {}",
                r.person, r.time_index, r.item_index
            )));
        }
        responses[r.person - 1][at] = r.count;
    }
    if seen.iter().flatten().any(|s| !s) {
        return Err(Error::Io("dataset is missing person/item rows".into()));
    }
    Ok(ResponseTable { counts, responses })
}
