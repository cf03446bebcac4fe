//! Command-line interface. Every subcommand writes one report; the exit
//! status is 0 when all asserted checks pass, 1 when one fails, 2 on usage
//! errors.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::One;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::draws::{derive_seed, rng_from_seed};
use crate::error::{Error, Result};
use crate::exact_linalg::{parse_rational, Rational};
use crate::experiments::{lemma1_experiment, poly_report};
use crate::gmm::{estimate_gmm, estimate_gmm_ar2, monte_carlo, simulate_panel, AlphaDist, InitScheme, PanelDataset, Search, SimConfig, XScheme};
use crate::model::ModelSpec;
use crate::moments::{
    covariate_pattern_experiment, covariates_for, dimension_report, expected_dimension, moment_basis, random_lag_coefficients, span_rank,
    stacked_x_rank, validate_basis, Budget, CovariatePattern, Covariates, DimsCell, DimsConfig,
};
use crate::report::{key_value_csv, to_canonical_json, write_text, Report, Verdict};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DYNLOGIT_OUT_DIR";

/// Inclusive horizon range written `a..b`, or a single `a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HorizonRange {
    pub lo: usize,
    pub hi: usize,
}

impl HorizonRange {
    pub fn iter(&self) -> std::ops::RangeInclusive<usize> {
        self.lo..=self.hi
    }
}

impl FromStr for HorizonRange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let num = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("bad horizon {x:?}: {e}"));
        let (lo, hi) = match s.split_once("..") {
            Some((a, b)) => (num(a)?, num(b.trim_start_matches('='))?),
            None => {
                let v = num(s)?;
                (v, v)
            }
        };
        if lo > hi {
            return Err(format!("empty range {s:?}"));
        }
        Ok(Self { lo, hi })
    }
}

impl fmt::Display for HorizonRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

impl Serialize for HorizonRange {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for HorizonRange {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

fn rational_arg(s: &str) -> std::result::Result<Rational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

fn alpha_arg(s: &str) -> std::result::Result<AlphaDist, String> {
    let (kind, rest) = s.split_once(':').ok_or("expected kind:params")?;
    let v: Vec<f64> = rest
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match (kind, v.as_slice()) {
        ("normal", [mean, sd]) => Ok(AlphaDist::Normal { mean: *mean, sd: *sd }),
        ("uniform", [lo, hi]) => Ok(AlphaDist::Uniform { lo: *lo, hi: *hi }),
        ("two_point", [a, b, prob]) => Ok(AlphaDist::TwoPoint { a: *a, b: *b, prob: *prob }),
        _ => Err(format!("unknown alpha distribution {s:?}")),
    }
}

fn init_arg(s: &str) -> std::result::Result<InitScheme, String> {
    match s.split_once(':') {
        Some(("fixed", bits)) => Ok(InitScheme::Fixed {
            value: parse_bits(bits)?,
        }),
        Some(("bernoulli", q)) => Ok(InitScheme::RandomBernoulli {
            q: q.parse().map_err(|e| format!("{q:?}: {e}"))?,
        }),
        _ => Err(format!("expected fixed:BITS or bernoulli:Q, got {s:?}")),
    }
}

fn x_arg(s: &str) -> std::result::Result<XScheme, String> {
    match s.split_once(':') {
        None if s == "none" => Ok(XScheme::None),
        Some(("normal", sd)) => Ok(XScheme::IidNormal {
            sd: sd.parse().map_err(|e| format!("{sd:?}: {e}"))?,
        }),
        _ => Err(format!("expected none or normal:SD, got {s:?}")),
    }
}

fn parse_bits(s: &str) -> std::result::Result<Vec<u8>, String> {
    s.chars()
        .map(|ch| match ch {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(format!("bad bit string {s:?}")),
        })
        .collect()
}

fn bits_arg(s: &str) -> std::result::Result<String, String> {
    parse_bits(s).map(|_| s.to_string())
}

mod serde_opt_rationals {
    use super::*;
    use crate::exact_linalg::rational_to_string;

    pub fn serialize<S: serde::Serializer>(v: &Option<Vec<Rational>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_ref()
            .map(|v| v.iter().map(rational_to_string).collect::<Vec<_>>())
            .serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<Rational>>, D::Error> {
        Option::<Vec<String>>::deserialize(d)?
            .map(|v| v.iter().map(|x| parse_rational(x).map_err(serde::de::Error::custom)).collect())
            .transpose()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Parser, Debug)]
#[command(name = "dynlogit", version, about = "Moment functions for dynamic panel logit models with fixed effects")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Base seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Report path; defaults to $DYNLOGIT_OUT_DIR/<command>.<ext>, else stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

/// Model fields shared by the single-cell exact commands.
#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Initial history, `y0` first (e.g. `10` means y0=1, y-1=0). Zeros by default.
    #[arg(long, value_parser = bits_arg)]
    pub init: Option<String>,
    /// Lag coefficients `e^gamma` as rationals; random when omitted.
    #[arg(long, value_parser = rational_arg, value_delimiter = ',')]
    #[serde(with = "serde_opt_rationals")]
    pub c: Option<Vec<Rational>>,
    /// Covariate indices `e^{x_t beta}`; random distinct values when omitted.
    #[arg(long, value_parser = rational_arg, value_delimiter = ',', conflicts_with = "beta0")]
    #[serde(with = "serde_opt_rationals")]
    pub b: Option<Vec<Rational>>,
    /// No covariates (`b = 1`).
    #[arg(long)]
    pub beta0: bool,
    /// Rows per sampled probability matrix (default: expected rank + 4).
    #[arg(long)]
    pub rows: Option<usize>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchArgs {
    #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
    pub grid_lo: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub grid_hi: f64,
    #[arg(long, default_value_t = 0.05)]
    pub grid_step: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub refine_tol: f64,
}

impl SearchArgs {
    fn search(&self) -> Search {
        Search {
            grid_lo: self.grid_lo,
            grid_hi: self.grid_hi,
            grid_step: self.grid_step,
            refine_tol: self.refine_tol,
        }
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimArgs {
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    #[arg(long = "T", default_value_t = 3)]
    #[serde(rename = "T")]
    pub horizon: usize,
    /// True lag coefficients, one per lag.
    #[arg(long, value_delimiter = ',', default_value = "0.5", allow_negative_numbers = true)]
    pub gamma: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub beta: f64,
    /// `normal:MEAN,SD`, `uniform:LO,HI` or `two_point:A,B,PROB`.
    #[arg(long, value_parser = alpha_arg, default_value = "normal:0,1")]
    pub alpha: AlphaDist,
    /// `fixed:BITS` or `bernoulli:Q`.
    #[arg(long = "init", value_parser = init_arg, default_value = "bernoulli:0.5")]
    pub init_scheme: InitScheme,
    /// `none` or `normal:SD`.
    #[arg(long = "x", value_parser = x_arg, default_value = "none")]
    pub x_scheme: XScheme,
}

impl SimArgs {
    fn config(&self, n: usize, seed: u64) -> SimConfig {
        SimConfig {
            n,
            p: self.p,
            horizon: self.horizon,
            true_gamma: self.gamma.clone(),
            true_beta: self.beta,
            alpha_dist: self.alpha.clone(),
            init_scheme: self.init_scheme.clone(),
            x_scheme: self.x_scheme.clone(),
            seed,
        }
    }
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Certified span rank of the probability rows at one parameter point.
    Rank(ModelArgs),
    /// Canonical moment-function basis, validated on fresh fixed effects.
    Basis {
        #[command(flatten)]
        model: ModelArgs,
        /// Fresh fixed effects for validation.
        #[arg(long, default_value_t = 50)]
        fresh: usize,
    },
    /// Moment-space dimensions over a horizon grid, all initial histories.
    Dims {
        #[arg(long)]
        p: usize,
        #[arg(long = "T")]
        #[serde(rename = "T")]
        horizon: HorizonRange,
        /// No covariates; otherwise generic distinct covariates.
        #[arg(long)]
        beta0: bool,
        #[arg(long)]
        rows: Option<usize>,
    },
    /// AR(2) dimension surplus under equal covariates.
    Patterns {
        #[arg(long = "T", default_value = "3..5")]
        #[serde(rename = "T")]
        horizon: HorizonRange,
        /// Group labels per period, e.g. `abb`; default ties b_2..b_T.
        #[arg(long)]
        pattern: Option<String>,
    },
    /// AR(1) ranks stacked across several covariate paths.
    Stacked {
        #[arg(long = "T", default_value_t = 3)]
        #[serde(rename = "T")]
        horizon: usize,
        #[arg(long, default_value_t = 2)]
        draws: usize,
    },
    /// Determinants of the square lower-bound matrix.
    Lemma1 {
        #[arg(long = "T")]
        #[serde(rename = "T")]
        horizon: HorizonRange,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 20)]
        selections: usize,
    },
    /// Polynomial coefficient rank and degrees.
    Poly {
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long = "T")]
        #[serde(rename = "T")]
        horizon: HorizonRange,
        /// One initial history; all of them when omitted.
        #[arg(long, value_parser = bits_arg)]
        init: Option<String>,
        #[arg(long, value_parser = rational_arg, value_delimiter = ',')]
        #[serde(with = "serde_opt_rationals")]
        c: Option<Vec<Rational>>,
    },
    /// Simulate a panel.
    Simulate {
        #[arg(long = "N", default_value_t = 1000)]
        #[serde(rename = "N")]
        n: usize,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// GMM estimate of the lag coefficients from a simulated panel CSV.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Monte Carlo bias and RMSE of the GMM estimator.
    Mc {
        #[arg(long = "N", value_delimiter = ',', default_value = "500,2000")]
        #[serde(rename = "N")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Re-run the command embedded in a report.
    Replay {
        report: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Rank(_) => "rank",
            Command::Basis { .. } => "basis",
            Command::Dims { .. } => "dims",
            Command::Patterns { .. } => "patterns",
            Command::Stacked { .. } => "stacked",
            Command::Lemma1 { .. } => "lemma1",
            Command::Poly { .. } => "poly",
            Command::Simulate { .. } => "simulate",
            Command::Estimate { .. } => "estimate",
            Command::Mc { .. } => "mc",
            Command::Replay { .. } => "replay",
        }
    }

    /// The command's own fields, as echoed in reports.
    fn config(&self) -> Result<Value> {
        let v = serde_json::to_value(self)?;
        Ok(match v {
            Value::Object(mut m) => m.remove(self.name()).unwrap_or(Value::Null),
            other => other,
        })
    }

    fn from_report(report: &Report) -> Result<Self> {
        let mut m = serde_json::Map::new();
        m.insert(report.command.clone(), report.config.clone());
        Ok(serde_json::from_value(Value::Object(m))?)
    }
}

/// What a command produced: the report plus an optional CSV rendering.
pub struct Outcome {
    pub report: Report,
    pub csv: Option<String>,
}

fn is_usage(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::InvalidSpec(_)
            | Error::InvalidParams(_)
            | Error::ParseRational(_)
            | Error::UnsupportedLag(_)
            | Error::Shape(_)
            | Error::BudgetTooSmall { .. }
            | Error::DrawCount { .. }
            | Error::IndexOutOfRange { .. }
    )
}

fn init_bits(init: &Option<String>, p: usize) -> Result<Vec<u8>> {
    match init {
        None => Ok(vec![0; p]),
        Some(s) => {
            let v = parse_bits(s).map_err(Error::Config)?;
            if v.len() != p {
                return Err(Error::Config(format!("init {s:?} needs {p} bits")));
            }
            Ok(v)
        }
    }
}

struct Point {
    spec: ModelSpec,
    c: Vec<Rational>,
    b: Vec<Rational>,
    /// Covariate regime when known, for the expected dimension.
    regime: Option<Covariates>,
}

fn resolve_point(m: &ModelArgs, seed: u64) -> Result<Point> {
    let spec = ModelSpec::new(m.p, m.horizon, &init_bits(&m.init, m.p)?)?;
    let mut rng = rng_from_seed(seed);
    let c = match &m.c {
        Some(c) => c.clone(),
        None => random_lag_coefficients(m.p, &mut rng),
    };
    let (b, regime) = if m.beta0 {
        (vec![Rational::one(); m.horizon], Some(Covariates::Beta0))
    } else {
        match &m.b {
            Some(b) => {
                let mut sorted = b.clone();
                sorted.sort();
                sorted.dedup();
                let regime = if sorted.len() == 1 {
                    Some(Covariates::Beta0)
                } else if sorted.len() == b.len() {
                    Some(Covariates::Generic)
                } else {
                    None
                };
                (b.clone(), regime)
            }
            None => (covariates_for(Covariates::Generic, m.horizon, &mut rng), Some(Covariates::Generic)),
        }
    };
    let generic_c = c.iter().all(|x| !x.is_one()) && (m.p < 2 || !c.iter().product::<Rational>().is_one());
    Ok(Point {
        spec,
        c,
        b,
        regime: regime.filter(|_| generic_c && m.p <= 2),
    })
}

fn budget_for(point: &Point, rows: Option<usize>, seed: u64) -> Budget {
    let mut budget = Budget::for_spec(&point.spec, &point.b, seed);
    if let Some(r) = rows {
        budget.rows = r;
    }
    budget
}

fn csv_of(value: &Value) -> Result<Option<String>> {
    key_value_csv(value).map(Some)
}

/// Runs one command to a report without writing anything.
pub fn execute(command: &Command, seed: u64) -> Result<Outcome> {
    let name = command.name();
    let config = command.config()?;
    let make = |results: Value, verdict: Verdict| -> Result<Report> { Report::new(name, &config, seed, &results, verdict) };
    match command {
        Command::Rank(m) => {
            let pt = resolve_point(m, seed)?;
            let cert = span_rank(&pt.spec, &pt.c, &pt.b, &budget_for(&pt, m.rows, seed))?;
            let n = pt.spec.n_outcomes();
            let expected = pt.regime.map(|r| expected_dimension(m.p, m.horizon, r));
            let dim = n - cert.claimed_rank;
            let mut failures = Vec::new();
            if let Some(e) = expected {
                if e != dim {
                    failures.push(format!("p={} T={} init={}: dim {dim} != expected {e}", m.p, m.horizon, pt.spec.init));
                }
            }
            if !cert.stable_across_trials {
                failures.push("rank not stable across seeds".into());
            }
            let results = serde_json::json!({
                "certificate": cert,
                "c": pt.c.iter().map(crate::exact_linalg::rational_to_string).collect::<Vec<_>>(),
                "b": pt.b.iter().map(crate::exact_linalg::rational_to_string).collect::<Vec<_>>(),
                "init": pt.spec.init.to_string(),
                "dim": dim,
                "expected_dim": expected,
            });
            let report = make(serde_json::to_value(&results)?, Verdict::from_failures(failures))?;
            let csv = csv_of(&report.results)?;
            Ok(Outcome { report, csv })
        }
        Command::Basis { model, fresh } => {
            let pt = resolve_point(model, seed)?;
            let mb = moment_basis(&pt.spec, &pt.c, &pt.b, &budget_for(&pt, model.rows, seed))?;
            let mut failures = Vec::new();
            let validation = match validate_basis(&mb, *fresh, derive_seed(seed, 0xf7e5)) {
                Ok(v) => Some(v),
                Err(e @ Error::ValidationFailed { .. }) => {
                    failures.push(e.to_string());
                    None
                }
                Err(e) => return Err(e),
            };
            if let Some(e) = pt.regime.map(|r| expected_dimension(model.p, model.horizon, r)) {
                if e != mb.d {
                    failures.push(format!("dim {} != expected {e}", mb.d));
                }
            }
            let mut csv = csv::Writer::from_writer(Vec::new());
            let header: Vec<String> = std::iter::once("h".to_string()).chain((0..mb.d).map(|k| format!("m{k}"))).collect();
            csv.write_record(&header)?;
            for h in 0..mb.basis.rows() {
                let row: Vec<String> = std::iter::once((h + 1).to_string())
                    .chain(mb.basis.row(h).iter().map(crate::exact_linalg::rational_to_string))
                    .collect();
                csv.write_record(&row)?;
            }
            let csv = String::from_utf8(csv.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8");
            let results = serde_json::json!({ "basis": mb, "validation": validation });
            Ok(Outcome {
                report: make(serde_json::to_value(&results)?, Verdict::from_failures(failures))?,
                csv: Some(csv),
            })
        }
        Command::Dims { p, horizon, beta0, rows } => {
            let covariates = if *beta0 { Covariates::Beta0 } else { Covariates::Generic };
            let cells = horizon
                .iter()
                .map(|t| DimsCell {
                    p: *p,
                    horizon: t,
                    covariates,
                })
                .collect();
            let rep = dimension_report(&DimsConfig { cells, seed, rows: *rows })?;
            let failures = rep
                .rows
                .iter()
                .filter(|r| r.failed())
                .map(|r| {
                    format!(
                        "p={} T={} init={} pattern={}: dim {} expected {} (stable={})",
                        r.p, r.horizon, r.init, r.pattern, r.dim, r.expected, r.stable
                    )
                })
                .collect();
            let verdict = if *p <= 2 { Verdict::from_failures(failures) } else { Verdict::informational() };
            Ok(Outcome {
                csv: Some(rep.to_csv()?),
                report: make(serde_json::to_value(&rep)?, verdict)?,
            })
        }
        Command::Patterns { horizon, pattern } => {
            let mut reports = Vec::new();
            for t in horizon.iter() {
                let pat = match pattern {
                    Some(s) => CovariatePattern::parse(s, t)?,
                    None => CovariatePattern::tail_equal(t),
                };
                reports.push(covariate_pattern_experiment(t, &pat, derive_seed(seed, t as u64))?);
            }
            let failures = reports
                .iter()
                .flat_map(|r| r.rows.iter().filter(|row| !row.passes).map(move |row| (r.horizon, row)))
                .map(|(t, row)| format!("T={t} init={} pattern={}: surplus {} < {}", row.init, row.pattern, row.surplus, row.lower_bound))
                .collect();
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["T", "init", "pattern", "pattern_dim", "generic_dim", "surplus", "lower_bound", "passes"])?;
            for r in &reports {
                for row in &r.rows {
                    w.write_record([
                        r.horizon.to_string(),
                        row.init.clone(),
                        row.pattern.clone(),
                        row.pattern_dim.to_string(),
                        row.generic_dim.to_string(),
                        row.surplus.to_string(),
                        row.lower_bound.to_string(),
                        row.passes.to_string(),
                    ])?;
                }
            }
            let csv = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8");
            Ok(Outcome {
                report: make(serde_json::to_value(&reports)?, Verdict::from_failures(failures))?,
                csv: Some(csv),
            })
        }
        Command::Stacked { horizon, draws } => {
            let rep = stacked_x_rank(*horizon, *draws, seed)?;
            let failures = rep
                .per_b_ranks
                .iter()
                .enumerate()
                .filter(|(_, r)| **r != rep.single_expected)
                .map(|(k, r)| format!("covariate path {k}: rank {r} != {}", rep.single_expected))
                .collect();
            let report = make(serde_json::to_value(&rep)?, Verdict::from_failures(failures))?;
            let csv = csv_of(&report.results)?;
            Ok(Outcome { report, csv })
        }
        Command::Lemma1 { horizon, trials, selections } => {
            let reports = horizon
                .iter()
                .map(|t| lemma1_experiment(t, *trials, *selections, derive_seed(seed, t as u64)))
                .collect::<Result<Vec<_>>>()?;
            let failures = reports
                .iter()
                .filter(|r| !r.passes())
                .map(|r| {
                    format!(
                        "T={}: {}/{} nonzero determinants, {}/{} full-rank selections",
                        r.horizon,
                        r.nonzero_dets,
                        r.trials.len(),
                        r.full_rank_selections,
                        r.selections.len()
                    )
                })
                .collect();
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["T", "trial", "c", "det", "nonzero"])?;
            for r in &reports {
                for tr in &r.trials {
                    w.write_record([
                        r.horizon.to_string(),
                        tr.trial.to_string(),
                        crate::exact_linalg::rational_to_string(&tr.c),
                        tr.det.clone(),
                        tr.nonzero.to_string(),
                    ])?;
                }
            }
            let csv = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8");
            Ok(Outcome {
                report: make(serde_json::to_value(&reports)?, Verdict::from_failures(failures))?,
                csv: Some(csv),
            })
        }
        Command::Poly { p, horizon, init, c } => {
            let inits = match init {
                Some(_) => vec![init_bits(init, *p)?],
                None => ModelSpec::all_histories(*p),
            };
            let mut reports = Vec::new();
            for t in horizon.iter() {
                let mut rng = rng_from_seed(derive_seed(seed, t as u64));
                let c = match c {
                    Some(c) => c.clone(),
                    None => random_lag_coefficients(*p, &mut rng),
                };
                for h in &inits {
                    reports.push(poly_report(&ModelSpec::new(*p, t, h)?, &c)?);
                }
            }
            let failures = reports
                .iter()
                .filter(|r| !r.passes())
                .map(|r| format!("T={} init={}: rank {} expected {}", r.horizon, r.init, r.rank, r.expected_rank))
                .collect();
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["p", "T", "init", "rank", "expected_rank", "max_degree", "degree_bound", "all_powers_present"])?;
            for r in &reports {
                let maxd = r.degrees.iter().flatten().max().map_or(String::new(), |d| d.to_string());
                w.write_record([
                    r.p.to_string(),
                    r.horizon.to_string(),
                    r.init.clone(),
                    r.rank.to_string(),
                    r.expected_rank.to_string(),
                    maxd,
                    r.degree_bound.to_string(),
                    r.all_powers_present.to_string(),
                ])?;
            }
            let csv = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8");
            Ok(Outcome {
                report: make(serde_json::to_value(&reports)?, Verdict::from_failures(failures))?,
                csv: Some(csv),
            })
        }
        Command::Simulate { n, sim } => {
            let data = simulate_panel(&sim.config(*n, seed))?;
            Ok(Outcome {
                csv: Some(data.to_csv()?),
                report: make(serde_json::to_value(&data)?, Verdict::informational())?,
            })
        }
        Command::Estimate { data, p, search } => {
            let text = std::fs::read_to_string(data)?;
            let panel = PanelDataset::from_csv(&text, *p)?;
            let est = match p {
                1 => estimate_gmm(&panel, &search.search())?,
                2 => estimate_gmm_ar2(&panel, &search.search())?,
                other => return Err(Error::UnsupportedLag(*other)),
            };
            let failures = if est.converged { vec![] } else { vec!["search did not converge".to_string()] };
            let report = make(serde_json::to_value(&est)?, Verdict::from_failures(failures))?;
            let csv = csv_of(&report.results)?;
            Ok(Outcome { report, csv })
        }
        Command::Mc { sizes, reps, sim, search } => {
            let summary = monte_carlo(&sim.config(sizes.first().copied().unwrap_or(1), seed), *reps, &search.search(), sizes)?;
            let failures = summary
                .rows
                .iter()
                .filter(|r| r.failures > 0)
                .map(|r| format!("N={}: {} failed replications", r.n, r.failures))
                .collect();
            Ok(Outcome {
                csv: Some(summary.to_csv()?),
                report: make(serde_json::to_value(&summary)?, Verdict::from_failures(failures))?,
            })
        }
        Command::Replay { report } => {
            let old = Report::from_json(&std::fs::read_to_string(report)?)?;
            let cmd = Command::from_report(&old)?;
            if matches!(cmd, Command::Replay { .. }) {
                return Err(Error::Config("cannot replay a replay".into()));
            }
            execute(&cmd, old.seed)
        }
    }
}

fn default_path(command: &str, format: Format) -> Option<PathBuf> {
    let dir = std::env::var_os(OUT_DIR_ENV)?;
    let ext = match format {
        Format::Json => "json",
        Format::Csv => "csv",
    };
    Some(PathBuf::from(dir).join(format!("{command}.{ext}")))
}

/// Parses arguments, runs, writes the report; returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match execute(&cli.command, cli.seed) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return if is_usage(&e) { 2 } else { 1 };
        }
    };
    let text = match cli.format {
        Format::Json => to_canonical_json(&outcome.report),
        Format::Csv => match outcome.csv {
            Some(c) => Ok(c),
            None => key_value_csv(&outcome.report.results),
        },
    };
    let text = match text {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let name = outcome.report.command.as_str();
    let path = cli.out.clone().or_else(|| default_path(name, cli.format));
    match path {
        Some(p) => {
            if let Err(e) = write_text(&p, &text) {
                eprintln!("error: cannot write {}: {e}", p.display());
                return 2;
            }
        }
        None => print!("{text}"),
    }
    for f in &outcome.report.verdict.failures {
        eprintln!("FAIL {f}");
    }
    if outcome.report.verdict.ok() {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!("2..8".parse::<HorizonRange>().unwrap(), HorizonRange { lo: 2, hi: 8 });
        assert_eq!("4".parse::<HorizonRange>().unwrap(), HorizonRange { lo: 4, hi: 4 });
        assert_eq!("3..=5".parse::<HorizonRange>().unwrap(), HorizonRange { lo: 3, hi: 5 });
        assert!("5..3".parse::<HorizonRange>().is_err());
        assert!("x..3".parse::<HorizonRange>().is_err());
    }

    #[test]
    fn distribution_args() {
        assert_eq!(alpha_arg("normal:0,1").unwrap(), AlphaDist::Normal { mean: 0.0, sd: 1.0 });
        assert_eq!(alpha_arg("two_point:-1,1,0.3").unwrap(), AlphaDist::TwoPoint { a: -1.0, b: 1.0, prob: 0.3 });
        assert!(alpha_arg("normal:1").is_err());
        assert_eq!(init_arg("fixed:10").unwrap(), InitScheme::Fixed { value: vec![1, 0] });
        assert_eq!(x_arg("normal:2").unwrap(), XScheme::IidNormal { sd: 2.0 });
        assert!(x_arg("gamma:2").is_err());
    }

    #[test]
    fn config_round_trip() {
        let cli = Cli::try_parse_from(["dynlogit", "rank", "--p", "2", "--T", "4", "--init", "10", "--c", "3/2,5", "--beta0"]).unwrap();
        let out = execute(&cli.command, 3).unwrap();
        assert_eq!(out.report.config["c"], serde_json::json!(["3/2", "5/1"]));
        assert_eq!(Command::from_report(&out.report).unwrap(), cli.command);
        assert_eq!(out.report.results["dim"], 6);
        assert_eq!(out.report.verdict.passed, Some(true));
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(["dynlogit", "dims", "--p", "1", "--T", "8..2"]), 2);
        assert_eq!(run(["dynlogit", "rank", "--T", "3", "--init", "012"]), 2);
        assert_eq!(run(["dynlogit", "rank", "--T", "3", "--init", "11"]), 2);
        assert_eq!(run(["dynlogit", "bogus"]), 2);
    }
}
