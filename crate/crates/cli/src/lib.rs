//! Argument parsing and command dispatch for the `hellinger-bound` binary.

mod output;

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hellinger_bound::verifier::{sequence_parameters, VerificationSummary};
use hellinger_bound::{
    beta_factors, comparison_bound, equal_means_sequence, gaussian_h2, hellinger_lower_bound,
    hellinger_sq, match_moments_exponential, run_verification, shifted_exponential_h2,
    BoundReport, GaussianLaw, MomentSpec, VerificationConfig,
};
use serde::Serialize;
use serde_json::json;

pub use output::Document;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const IO: u8 = 1;
    pub const INPUT: u8 = 2;
    pub const CONVERGENCE: u8 = 3;
    pub const VIOLATION: u8 = 4;
}

#[derive(Parser, Debug)]
#[command(name = "hellinger-bound", version, about = "Moment-constrained lower bounds on the squared Hellinger distance")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    pub format: Format,

    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,

    /// Relative moment tolerance for a pair to count as feasible.
    #[arg(long, default_value_t = 1e-8, global = true)]
    pub tol_moments: f64,

    /// Largest optimizer gap reported as converged to the bound.
    #[arg(long, default_value_t = 1e-4, global = true)]
    pub tol_gap: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tight bound, Bhattacharyya bound, comparison bound and the two-point attainer.
    Bound(SpecArgs),
    /// Bounds next to Gaussian and shifted-exponential distances with the same moments.
    Compare(CompareArgs),
    /// Sample feasible pairs and minimize H² numerically.
    Verify(VerifyArgs),
    /// Equal-means pairs whose H² tends to zero.
    Sequence(SequenceArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Sd,
    Variance,
}

/// Spread of each marginal, given as exactly one of sd or variance.
#[derive(Args, Debug, Default)]
pub struct SpreadArgs {
    #[arg(long, allow_negative_numbers = true, conflicts_with = "var_p")]
    pub sd_p: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub var_p: Option<f64>,
    #[arg(long, allow_negative_numbers = true, conflicts_with = "var_q")]
    pub sd_q: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub var_q: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct SpecArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub mean_p: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub mean_q: Option<f64>,
    #[command(flatten)]
    pub spread: SpreadArgs,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub spec: SpecArgs,

    /// Extra spec as `mean_p,spread_p,mean_q,spread_q`; repeatable.
    #[arg(long = "row", value_name = "MP,SP,MQ,SQ", requires = "units", allow_hyphen_values = true)]
    pub rows: Vec<String>,

    /// How to read the spreads in `--row`.
    #[arg(long, value_enum)]
    pub units: Option<Units>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub spec: SpecArgs,

    #[arg(long, default_value_t = 1000)]
    pub trials: usize,

    #[arg(long, default_value_t = 20)]
    pub restarts: usize,

    /// Support size of sampled and optimized pairs.
    #[arg(long, default_value_t = 6)]
    pub points: usize,

    /// Support box `[-R, R]`; defaults to `max|m| + 100·scale`.
    #[arg(long)]
    pub radius: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SequenceArgs {
    #[command(flatten)]
    pub spread: SpreadArgs,

    /// Sequence indices.
    #[arg(long = "j", value_delimiter = ',', default_value = "10,100,1000,10000")]
    pub indices: Vec<u64>,
}

/// An error caused by the user's input rather than by I/O.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

impl SpreadArgs {
    fn resolve_one(sd: Option<f64>, var: Option<f64>, which: char) -> anyhow::Result<(f64, Units)> {
        match (sd, var) {
            (Some(sd), None) => Ok((sd, Units::Sd)),
            (None, Some(var)) if var >= 0.0 => Ok((var.sqrt(), Units::Variance)),
            (None, Some(var)) => Err(input_error(format!("--var-{which} must be non-negative, got {var}"))),
            (None, None) => Err(input_error(format!("one of --sd-{which} or --var-{which} is required"))),
            (Some(_), Some(_)) => Err(input_error(format!("--sd-{which} and --var-{which} are exclusive"))),
        }
    }

    /// Standard deviations and the input mode used.
    fn resolve(&self) -> anyhow::Result<(f64, f64, InputMode)> {
        let (sp, up) = Self::resolve_one(self.sd_p, self.var_p, 'p')?;
        let (sq, uq) = Self::resolve_one(self.sd_q, self.var_q, 'q')?;
        Ok((sp, sq, InputMode { p: up, q: uq }))
    }

    fn is_empty(&self) -> bool {
        self.sd_p.is_none() && self.var_p.is_none() && self.sd_q.is_none() && self.var_q.is_none()
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
struct InputMode {
    p: Units,
    q: Units,
}

impl SpecArgs {
    fn resolve(&self) -> anyhow::Result<(MomentSpec, InputMode)> {
        let mean_p = self.mean_p.ok_or_else(|| input_error("--mean-p is required"))?;
        let mean_q = self.mean_q.ok_or_else(|| input_error("--mean-q is required"))?;
        let (sp, sq, mode) = self.spread.resolve()?;
        let spec = MomentSpec::new(mean_p, sp, mean_q, sq).map_err(|e| input_error(e.to_string()))?;
        Ok((spec, mode))
    }

    fn is_empty(&self) -> bool {
        self.mean_p.is_none() && self.mean_q.is_none() && self.spread.is_empty()
    }
}

fn parse_row(row: &str, units: Units) -> anyhow::Result<MomentSpec> {
    let fields: Vec<f64> = row
        .split(',')
        .map(|f| f.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| input_error(format!("bad --row {row:?}: {e}")))?;
    let [mp, xp, mq, xq] = fields[..] else {
        return Err(input_error(format!("--row needs 4 comma-separated numbers, got {row:?}")));
    };
    let spec = match units {
        Units::Sd => MomentSpec::new(mp, xp, mq, xq),
        Units::Variance => MomentSpec::from_variances(mp, xp, mq, xq),
    };
    spec.map_err(|e| input_error(e.to_string()))
}

/// Parse arguments, run, write output, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::INPUT } else { exit::OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InputError>().is_some() {
                exit::INPUT
            } else if e.downcast_ref::<io::Error>().is_some() {
                exit::IO
            } else {
                exit::INPUT
            }
        }
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<u8> {
    let (doc, code) = match &cli.command {
        Command::Bound(args) => cmd_bound(args)?,
        Command::Compare(args) => cmd_compare(args)?,
        Command::Verify(args) => cmd_verify(cli, args)?,
        Command::Sequence(args) => cmd_sequence(args)?,
    };
    let mut sink: Box<dyn Write> = match &cli.out {
        Some(path) => Box::new(
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
        ),
        None => Box::new(io::stdout().lock()),
    };
    output::render(&doc, cli.format, &mut sink)?;
    sink.flush()?;
    Ok(code)
}

fn cmd_bound(args: &SpecArgs) -> anyhow::Result<(Document, u8)> {
    let (spec, mode) = args.resolve()?;
    let report = BoundReport::new(&spec).map_err(|e| input_error(e.to_string()))?;
    let attained = report.attainer.is_some();
    let note = (!attained).then_some("equal means: the bound is an infimum, not attained");
    Ok((
        Document {
            command: "bound",
            spec: json!(spec),
            results: vec![json!(report)],
            summary: json!({ "attained": attained, "note": note, "input_mode": mode }),
        },
        exit::OK,
    ))
}

#[derive(Serialize)]
struct CompareRow {
    spec: MomentSpec,
    tight_bound: f64,
    comparison_bound: f64,
    gaussian_h2: Option<f64>,
    exponential_h2: Option<f64>,
    beta_min: Option<f64>,
    beta_max: Option<f64>,
    /// Both closed-form distances are at least both bounds.
    closed_forms_dominate: Option<bool>,
    /// `β_min·l ≤ tight_bound ≤ β_max·l`.
    sandwich_consistent: Option<bool>,
}

fn compare_row(spec: &MomentSpec) -> anyhow::Result<CompareRow> {
    let tight = hellinger_lower_bound(spec).map_err(|e| input_error(e.to_string()))?;
    let l = comparison_bound(spec).map_err(|e| input_error(e.to_string()))?;
    let gaussian = match (GaussianLaw::new(spec.mean_p, spec.sigma_p), GaussianLaw::new(spec.mean_q, spec.sigma_q)) {
        (Ok(p), Ok(q)) => gaussian_h2(&p, &q).ok(),
        _ => None,
    };
    let exponential = match_moments_exponential(spec)
        .ok()
        .and_then(|(p, q)| shifted_exponential_h2(&p, &q).ok());
    let betas = beta_factors(spec).ok();
    let dominate = match (gaussian, exponential) {
        (Some(g), Some(e)) => Some(g.min(e) >= tight.max(l)),
        _ => None,
    };
    let slack = 1e-12 * tight.max(f64::MIN_POSITIVE);
    Ok(CompareRow {
        spec: *spec,
        tight_bound: tight,
        comparison_bound: l,
        gaussian_h2: gaussian,
        exponential_h2: exponential,
        beta_min: betas.map(|b| b.0),
        beta_max: betas.map(|b| b.1),
        closed_forms_dominate: dominate,
        sandwich_consistent: betas.map(|(lo, hi)| lo * l <= tight + slack && tight <= hi * l + slack),
    })
}

fn cmd_compare(args: &CompareArgs) -> anyhow::Result<(Document, u8)> {
    let mut specs = Vec::new();
    if !args.spec.is_empty() {
        specs.push(args.spec.resolve()?.0);
    }
    if let Some(units) = args.units {
        for row in &args.rows {
            specs.push(parse_row(row, units)?);
        }
    }
    if specs.is_empty() {
        bail!(input_error("give a spec with --mean-p/--mean-q and spreads, or one or more --row"));
    }
    let rows: Vec<CompareRow> = specs.iter().map(compare_row).collect::<anyhow::Result<_>>()?;
    let unavailable = rows
        .iter()
        .filter(|r| r.gaussian_h2.is_none() || r.exponential_h2.is_none())
        .count();
    let summary = json!({
        "rows": rows.len(),
        "unavailable": unavailable,
        "all_dominate": rows.iter().all(|r| r.closed_forms_dominate != Some(false)),
        "all_sandwich_consistent": rows.iter().all(|r| r.sandwich_consistent != Some(false)),
    });
    let code = if unavailable > 0 { exit::INPUT } else { exit::OK };
    if unavailable > 0 {
        eprintln!("error: closed forms need positive standard deviations; {unavailable} row(s) reported as n/a");
    }
    Ok((
        Document {
            command: "compare",
            spec: if specs.len() == 1 { json!(specs[0]) } else { json!(specs) },
            results: rows.iter().map(|r| json!(r)).collect(),
            summary,
        },
        code,
    ))
}

fn cmd_verify(cli: &Cli, args: &VerifyArgs) -> anyhow::Result<(Document, u8)> {
    let (spec, mode) = args.spec.resolve()?;
    let needed = (spec.mean_p.abs() + 10.0 * spec.sigma_p).max(spec.mean_q.abs() + 10.0 * spec.sigma_q);
    let radius = args
        .radius
        .unwrap_or_else(|| spec.mean_p.abs().max(spec.mean_q.abs()) + 100.0 * spec.scale().max(f64::MIN_POSITIVE));
    if radius < needed {
        bail!(input_error(format!(
            "radius {radius} is below max(|m| + 10σ) = {needed}"
        )));
    }
    let config = VerificationConfig {
        n_points: args.points,
        radius,
        n_trials: args.trials,
        n_restarts: args.restarts,
        seed: cli.seed,
        tol_moments: cli.tol_moments,
        tol_gap: cli.tol_gap,
    };
    let report = run_verification(&spec, &config).map_err(|e| input_error(e.to_string()))?;
    let summary: &VerificationSummary = &report.summary;
    let code = if summary.violations > 0 {
        exit::VIOLATION
    } else if !summary.optimizer_converged {
        exit::CONVERGENCE
    } else {
        exit::OK
    };
    let mut summary_json = json!(summary);
    summary_json["within_tol_gap"] = json!(summary.optimizer_gap.map(|g| g <= cli.tol_gap));
    summary_json["config"] = json!(config);
    summary_json["input_mode"] = json!(mode);
    Ok((
        Document {
            command: "verify",
            spec: json!(spec),
            results: report.outcomes.iter().map(|o| json!(o)).collect(),
            summary: summary_json,
        },
        code,
    ))
}

fn cmd_sequence(args: &SequenceArgs) -> anyhow::Result<(Document, u8)> {
    let (sp, sq, mode) = args.spread.resolve()?;
    let params = sequence_parameters(sp, sq).map_err(|e| input_error(e.to_string()))?;
    let mut results = Vec::with_capacity(args.indices.len());
    let mut h2s = Vec::with_capacity(args.indices.len());
    let mut max_abs_diff = 0f64;
    for &j in &args.indices {
        let pair = equal_means_sequence(sp, sq, j).map_err(|e| input_error(e.to_string()))?;
        let h2 = hellinger_sq(&pair);
        let closed = params.binary_h2(j);
        max_abs_diff = max_abs_diff.max((h2 - closed).abs());
        h2s.push((j, h2));
        results.push(json!({ "j": j, "h2": h2, "binary_h2": closed, "abs_diff": (h2 - closed).abs() }));
    }
    let mut sorted = h2s.clone();
    sorted.sort_by_key(|&(j, _)| j);
    let decreasing = sorted.windows(2).all(|w| w[1].1 <= w[0].1);
    let spec = MomentSpec::new(0.0, sp, 0.0, sq).map_err(|e| input_error(e.to_string()))?;
    Ok((
        Document {
            command: "sequence",
            spec: json!(spec),
            results,
            summary: json!({
                "xi": params.xi,
                "support_scale": params.support_scale,
                "max_abs_diff": max_abs_diff,
                "non_increasing_in_j": decreasing,
                "input_mode": mode,
            }),
        },
        exit::OK,
    ))
}
