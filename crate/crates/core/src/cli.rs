//! Batch front end: one JSON problem configuration in, a text report on
//! stdout and a JSON report on disk out.
//!
//! Exit codes: 0 success, 2 configuration error, 3 optimization failure or
//! uncertified optimum, 4 dataset or output I/O failure, 5 estimator did not
//! converge.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::design::{
    efficiency_against, optimize, round_to_exact, sensitivity, weight_curve, write_curve_csv,
    OptimResult, OptimizeOptions, Sweep, SweepOutput, SweepParameter,
};
use crate::error::Error;
use crate::information::{Design, DesignProblem};
use crate::model::{Basis, ModelSpec, Variant};
use crate::moments::ItemLayout;
use crate::simulate::{mql_fit, read_responses_csv, simulate, write_responses_csv, EffectConfig, ResponseData};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_OPTIMIZE: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_NONCONVERGENCE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "rpgcm", version, about = "Optimal item allocation for longitudinal Poisson counts")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Locally D-optimal weights with their equivalence certificate.
    Optimize(Common),
    /// Sensitivity slacks of the configured weights.
    Sensitivity(Common),
    /// Efficiency of the configured weights against the optimum.
    Efficiency(Common),
    /// One-parameter sweep written as CSV.
    Curve {
        #[command(flatten)]
        common: Common,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Exact item counts from the configured (or optimal) weights.
    Round(Common),
    /// Simulate a dataset for the rounded design.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "dataset.csv")]
        dataset: PathBuf,
    },
    /// Quasi-likelihood estimate of β from a dataset.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// JSON problem configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a config entry after parsing, e.g. `rho=0.5` or `model.beta=[3,2,1]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// JSON report destination; defaults to `<command>.json`.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `unstructured`, `linear_predictor`, `straight_line` or `exponential_saturation`.
    pub variant: String,
    pub beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Basis>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// A single name such as `beta2`, `rho`, `tau` or `a1`.
    pub parameter: Value,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    /// `weights` (default), `efficiency` or `rho_crit`.
    #[serde(default = "default_sweep_output")]
    pub output: String,
}

fn default_sweep_output() -> String {
    "weights".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "N")]
    pub persons: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub model: ModelConfig,
    pub times: Vec<f64>,
    pub n: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub tau: f64,
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
}

fn default_sigma() -> f64 {
    1.0
}

/// A failed command: exit code plus message.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }
    fn io(message: impl Into<String>) -> Self {
        CliError { code: EXIT_IO, message: message.into() }
    }
    fn optimize(e: Error) -> Self {
        CliError { code: EXIT_OPTIMIZE, message: e.to_string() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(m) => CliError::io(m),
            Error::Invalid { .. } | Error::Domain { .. } | Error::Overflow { .. } | Error::OffGrid { .. } => {
                CliError::config(e.to_string())
            }
            other => CliError::optimize(other),
        }
    }
}

impl ProblemConfig {
    /// Parses JSON text and applies `key=value` overrides (dotted keys; values
    /// are JSON, or plain strings when they do not parse as JSON).
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got '{item}'")))?;
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut value, key, parsed)?;
        }
        let config: ProblemConfig =
            serde_json::from_value(value).map_err(|e| CliError::config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.problem()?;
        if let Some(w) = &self.weights {
            Design::new(w.clone())?;
            if w.len() != self.times.len() {
                return Err(CliError::config(format!(
                    "weights: {} weights for {} time points",
                    w.len(),
                    self.times.len()
                )));
            }
        }
        if let Some(s) = &self.sweep {
            self.sweep_spec(s)?;
        }
        if let Some(sim) = &self.sim {
            if sim.persons == 0 {
                return Err(CliError::config("sim.N: number of persons must be positive"));
            }
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        let beta = self.model.beta.clone();
        let spec = match self.model.variant.as_str() {
            "unstructured" => ModelSpec::unstructured(self.times.clone(), beta),
            "straight_line" => ModelSpec::linear(vec![Basis::Constant, Basis::Identity], beta),
            "exponential_saturation" => ModelSpec::new(Variant::ExponentialSaturation, beta),
            "linear_predictor" => {
                let basis = self
                    .model
                    .basis
                    .clone()
                    .ok_or_else(|| CliError::config("model.basis: required for linear_predictor"))?;
                ModelSpec::linear(basis, beta)
            }
            other => {
                return Err(CliError::config(format!("model.variant: unknown variant '{other}'")));
            }
        };
        Ok(spec?)
    }

    pub fn problem(&self) -> Result<DesignProblem, CliError> {
        let model = self.model_spec()?;
        Ok(DesignProblem::new(self.times.clone(), self.n, self.sigma, self.tau, self.rho, model)?)
    }

    fn sweep_spec(&self, s: &SweepConfig) -> Result<(Sweep, SweepOutput), CliError> {
        let name = match &s.parameter {
            Value::String(name) => name.clone(),
            Value::Array(items) if items.len() == 1 && items[0].is_string() => {
                items[0].as_str().unwrap_or_default().to_string()
            }
            Value::Array(items) if items.len() > 1 => {
                return Err(CliError::config("sweep.parameter: only one parameter can be swept"));
            }
            _ => return Err(CliError::config("sweep.parameter: expected a parameter name")),
        };
        let parameter: SweepParameter = name.parse()?;
        if let SweepParameter::Beta(i) = parameter {
            if i >= self.model.beta.len() {
                return Err(CliError::config(format!(
                    "sweep.parameter: model has only {} parameters",
                    self.model.beta.len()
                )));
            }
        }
        if !(s.from.is_finite() && s.to.is_finite()) {
            return Err(CliError::config("sweep: from and to must be finite"));
        }
        let output = match s.output.as_str() {
            "weights" => SweepOutput::OptimalWeights,
            "efficiency" => SweepOutput::Efficiency(match &self.weights {
                Some(w) => Design::new(w.clone())?,
                None => Design::uniform(self.times.len()),
            }),
            "rho_crit" => SweepOutput::RhoCrit,
            other => return Err(CliError::config(format!("sweep.output: unknown output '{other}'"))),
        };
        Ok((
            Sweep {
                parameter,
                from: s.from,
                to: s.to,
                steps: s.steps,
            },
            output,
        ))
    }

    fn candidate(&self, command: &str) -> Result<Design, CliError> {
        let w = self
            .weights
            .clone()
            .ok_or_else(|| CliError::config(format!("weights: required by {command}")))?;
        Ok(Design::new(w)?)
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map: &mut Map<String, Value> = node
            .as_object_mut()
            .ok_or_else(|| CliError::config(format!("--set {key}: '{part}' is not inside an object")))?;
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Err(CliError::config("--set: empty key"))
}

/// Six significant digits for text output.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-4..6).contains(&magnitude) {
        format!("{:.*}", (5 - magnitude).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

fn join6(xs: &[f64]) -> String {
    xs.iter().map(|&x| sig6(x)).collect::<Vec<_>>().join(", ")
}

struct Context<'a> {
    config: ProblemConfig,
    json_path: PathBuf,
    out: &'a mut dyn Write,
}

impl Context<'_> {
    fn say(&mut self, line: impl AsRef<str>) -> Result<(), CliError> {
        writeln!(self.out, "{}", line.as_ref()).map_err(|e| CliError::io(e.to_string()))
    }

    fn write_json(&mut self, mut report: Value) -> Result<(), CliError> {
        report["config"] = serde_json::to_value(&self.config).expect("config serializes");
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(&self.json_path, text + "\n")
            .map_err(|e| CliError::io(format!("{}: {e}", self.json_path.display())))
    }
}

/// Parses arguments and runs one command, writing the text report to `out`.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let (name, common) = match &cli.command {
        Command::Optimize(c) => ("optimize", c),
        Command::Sensitivity(c) => ("sensitivity", c),
        Command::Efficiency(c) => ("efficiency", c),
        Command::Curve { common, .. } => ("curve", common),
        Command::Round(c) => ("round", c),
        Command::Simulate { common, .. } => ("simulate", common),
        Command::Estimate { common, .. } => ("estimate", common),
    };
    let text = fs::read_to_string(&common.config)
        .map_err(|e| CliError::config(format!("config: {}: {e}", common.config.display())))?;
    let config = ProblemConfig::from_json(&text, &common.set)?;
    let json_path = common.json.clone().unwrap_or_else(|| PathBuf::from(format!("{name}.json")));
    let mut ctx = Context { config, json_path, out };
    match &cli.command {
        Command::Optimize(_) => cmd_optimize(&mut ctx),
        Command::Sensitivity(_) => cmd_sensitivity(&mut ctx),
        Command::Efficiency(_) => cmd_efficiency(&mut ctx),
        Command::Curve { output, .. } => cmd_curve(&mut ctx, output.as_deref()),
        Command::Round(_) => cmd_round(&mut ctx),
        Command::Simulate { dataset, .. } => cmd_simulate(&mut ctx, dataset),
        Command::Estimate { dataset, .. } => cmd_estimate(&mut ctx, dataset),
    }
}

fn optimum(problem: &DesignProblem) -> Result<OptimResult, CliError> {
    optimize(problem, &OptimizeOptions::default()).map_err(CliError::optimize)
}

fn optim_json(r: &OptimResult) -> Value {
    json!({
        "weights": r.design.weights(),
        "criterion": r.criterion,
        "slacks": r.certificate,
        "max_violation": r.max_violation,
        "certified": r.certified,
        "certification": r.certification,
        "method": r.method,
        "iterations": r.iterations,
    })
}

fn cmd_optimize(ctx: &mut Context) -> Result<i32, CliError> {
    let problem = ctx.config.problem()?;
    let r = optimum(&problem)?;
    let exact = round_to_exact(&r.design, problem.n());
    ctx.say(format!("weights: {}", join6(r.design.weights())))?;
    ctx.say(format!("criterion: {}", sig6(r.criterion)))?;
    ctx.say(format!("slacks: {}", join6(&r.certificate)))?;
    ctx.say(format!("max violation: {}", sig6(r.max_violation)))?;
    ctx.say(format!("certified: {} ({:?}, {:?})", r.certified, r.certification, r.method))?;
    ctx.say(format!("exact design (n = {}): {:?}", problem.n(), exact))?;
    let mut report = optim_json(&r);
    report["exact_design"] = json!(exact);
    if ctx.config.weights.is_some() {
        let candidate = ctx.config.candidate("optimize")?;
        let eff = efficiency_against(&problem, &candidate, r.clone(), &OptimizeOptions::default())?;
        ctx.say(format!("efficiency of configured weights: {}", sig6(eff.efficiency)))?;
        report["candidate_efficiency"] = json!(eff.efficiency);
    }
    ctx.write_json(report)?;
    Ok(if r.certified { 0 } else { EXIT_OPTIMIZE })
}

fn cmd_sensitivity(ctx: &mut Context) -> Result<i32, CliError> {
    let problem = ctx.config.problem()?;
    let design = ctx.config.candidate("sensitivity")?;
    let slacks = sensitivity(&problem, &design).map_err(CliError::optimize)?;
    let max = slacks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let optimal = max <= OptimizeOptions::default().tolerance;
    ctx.say(format!("slacks: {}", join6(&slacks)))?;
    ctx.say(format!("max violation: {}", sig6(max)))?;
    ctx.say(format!("optimal: {optimal}"))?;
    ctx.write_json(json!({
        "weights": design.weights(),
        "slacks": slacks,
        "max_violation": max,
        "optimal": optimal,
    }))?;
    Ok(0)
}

fn cmd_efficiency(ctx: &mut Context) -> Result<i32, CliError> {
    let problem = ctx.config.problem()?;
    let design = ctx.config.candidate("efficiency")?;
    let reference = optimum(&problem)?;
    let report = efficiency_against(&problem, &design, reference, &OptimizeOptions::default())?;
    ctx.say(format!("efficiency: {}", sig6(report.efficiency)))?;
    ctx.say(format!("optimal weights: {}", join6(report.reference.design.weights())))?;
    if let Some(d) = &report.diagnostic {
        ctx.say(format!("note: {d}"))?;
    }
    ctx.write_json(json!({
        "weights": design.weights(),
        "efficiency": report.efficiency,
        "diagnostic": report.diagnostic,
        "reference": optim_json(&report.reference),
    }))?;
    Ok(0)
}

fn cmd_curve(ctx: &mut Context, output: Option<&Path>) -> Result<i32, CliError> {
    let problem = ctx.config.problem()?;
    let sweep_config = ctx
        .config
        .sweep
        .clone()
        .ok_or_else(|| CliError::config("sweep: required by curve"))?;
    let (sweep, kind) = ctx.config.sweep_spec(&sweep_config)?;
    let rows = weight_curve(&problem, &sweep, &kind, &OptimizeOptions::default());
    let mut csv = Vec::new();
    write_curve_csv(&rows, problem.j(), &kind, &mut csv)?;
    match output {
        Some(path) => fs::write(path, &csv).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?,
        None => ctx.out.write_all(&csv).map_err(|e| CliError::io(e.to_string()))?,
    }
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    let json_rows: Vec<Value> = rows
        .iter()
        .map(|r| match &r.outcome {
            Ok(o) => json!({ "value": r.value, "result": o }),
            Err(e) => json!({ "value": r.value, "error": e.to_string() }),
        })
        .collect();
    ctx.write_json(json!({ "rows": json_rows, "failed_rows": failed }))?;
    Ok(0)
}

fn exact_counts(ctx: &Context, problem: &DesignProblem) -> Result<(Design, Vec<usize>), CliError> {
    let design = match &ctx.config.weights {
        Some(w) => Design::new(w.clone())?,
        None => optimum(problem)?.design,
    };
    let counts = round_to_exact(&design, problem.n());
    Ok((design, counts))
}

fn cmd_round(ctx: &mut Context) -> Result<i32, CliError> {
    let problem = ctx.config.problem()?;
    let (design, counts) = exact_counts(ctx, &problem)?;
    ctx.say(format!("weights: {}", join6(design.weights())))?;
    ctx.say(format!("exact design (n = {}): {:?}", problem.n(), counts))?;
    ctx.write_json(json!({ "weights": design.weights(), "exact_design": counts }))?;
    Ok(0)
}

fn cmd_simulate(ctx: &mut Context, dataset: &Path) -> Result<i32, CliError> {
    let problem = ctx.config.problem()?;
    let sim = ctx
        .config
        .sim
        .clone()
        .ok_or_else(|| CliError::config("sim: required by simulate"))?;
    let (_, counts) = exact_counts(ctx, &problem)?;
    let layout = ItemLayout::common(ctx.config.times.clone(), &counts, ctx.config.sigma)?;
    let effects = EffectConfig::new(ctx.config.tau, ctx.config.rho)?;
    let data = simulate(problem.model(), &layout, effects, sim.persons, sim.seed)?;
    let mut buf = Vec::new();
    let config_line = format!("config={}", serde_json::to_string(&ctx.config).expect("config serializes"));
    write_responses_csv(&data.data, &mut buf, &[config_line])?;
    fs::write(dataset, &buf).map_err(|e| CliError::io(format!("{}: {e}", dataset.display())))?;
    let total: u64 = data.data.responses().iter().flatten().sum();
    ctx.say(format!("persons: {}, items per person: {:?}", sim.persons, counts))?;
    ctx.say(format!("total count: {total}"))?;
    ctx.say(format!("dataset: {}", dataset.display()))?;
    ctx.write_json(json!({
        "dataset": dataset.display().to_string(),
        "exact_design": counts,
        "persons": sim.persons,
        "seed": sim.seed,
        "total_count": total,
    }))?;
    Ok(0)
}

fn cmd_estimate(ctx: &mut Context, dataset: &Path) -> Result<i32, CliError> {
    let model = ctx.config.model_spec()?;
    let file = fs::File::open(dataset).map_err(|e| CliError::io(format!("{}: {e}", dataset.display())))?;
    let table = read_responses_csv(std::io::BufReader::new(file)).map_err(|e| CliError::io(e.to_string()))?;
    let j = ctx.config.times.len();
    if table.counts.len() > j {
        return Err(CliError::io(format!(
            "dataset has {} time points, config has {j}",
            table.counts.len()
        )));
    }
    let mut counts = table.counts.clone();
    counts.resize(j, 0);
    let layout = ItemLayout::common(ctx.config.times.clone(), &counts, ctx.config.sigma)?;
    let data = ResponseData::new(layout, table.responses).map_err(|e| CliError::io(e.to_string()))?;
    let fit = mql_fit(&data, &model, ctx.config.tau, ctx.config.rho, None)?;
    let se = fit.standard_errors().unwrap_or_else(|_| vec![f64::NAN; fit.beta_hat.len()]);
    ctx.say(format!("beta_hat: {}", join6(&fit.beta_hat)))?;
    ctx.say(format!("standard errors: {}", join6(&se)))?;
    ctx.say(format!(
        "converged: {} after {} iterations (score norm {})",
        fit.converged,
        fit.iterations,
        sig6(fit.score_norm)
    ))?;
    ctx.write_json(json!({
        "beta_hat": fit.beta_hat,
        "standard_errors": se,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "score_norm": fit.score_norm,
        "persons": data.persons(),
        "exact_design": counts,
    }))?;
    Ok(if fit.converged { 0 } else { EXIT_NONCONVERGENCE })
}
