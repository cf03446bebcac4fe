//! Moment-space dimensions, canonical moment-function bases, and the
//! covariate-pattern and stacked-covariate experiments.
//!
//! A vector `m` over outcomes is a valid moment function at fixed
//! `(init, c, b)` when `sum_y Pr(y | u) m(y) = 0` for every fixed effect `u`,
//! i.e. when `m` is orthogonal to the span of the probability rows. The
//! moment-space dimension is therefore `2^T` minus that span's rank.

use std::fmt;

use num_traits::{One, Signed, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builders::build_pbar;
use crate::draws::{derive_seed, random_distinct, random_nonunit, rng_from_seed, AlphaDraws};
use crate::error::{Error, Result};
use crate::exact_linalg::{rational_to_string, serde_rational_vec, Rational, RationalMatrix};
use crate::model::{ModelSpec, MAX_LAG};
use crate::poly::pbar_coeff_rank;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMethod {
    /// Exact rank of the polynomial coefficient matrix; an equality.
    PolynomialExact,
    /// Exact rank of the probability matrix at random draws; a lower bound
    /// on the span rank, repeated over several seeds.
    SampledLowerBound,
}

impl fmt::Display for RankMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RankMethod::PolynomialExact => "polynomial_exact",
            RankMethod::SampledLowerBound => "sampled_lower_bound",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankCertificate {
    pub claimed_rank: usize,
    pub method: RankMethod,
    pub draws_used: usize,
    pub seeds: Vec<u64>,
    pub stable_across_trials: bool,
}

/// Minimum number of independent seeds behind a sampled certificate.
pub const MIN_SEEDS: usize = 3;

/// Extra rows beyond the expected rank used by default.
pub const ROW_MARGIN: usize = 4;

/// Rows per sampled probability matrix and the seeds to repeat it over.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub rows: usize,
    pub seeds: Vec<u64>,
}

impl Budget {
    pub fn new(rows: usize, base_seed: u64) -> Self {
        Self {
            rows,
            seeds: (0..MIN_SEEDS as u64).map(|k| derive_seed(base_seed, k)).collect(),
        }
    }

    /// `expected rank + 4` rows.
    pub fn for_spec(spec: &ModelSpec, b: &[Rational], base_seed: u64) -> Self {
        let rows = (rank_hint(spec, b) + ROW_MARGIN).min(spec.n_outcomes() + ROW_MARGIN);
        Self::new(rows, base_seed)
    }

    /// One row per outcome.
    pub fn full(spec: &ModelSpec, base_seed: u64) -> Self {
        Self::new(spec.n_outcomes(), base_seed)
    }
}

/// Covariate regime of a dimension cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariates {
    /// `b = 1` exactly (`beta = 0`).
    Beta0,
    /// `b_t` drawn i.i.d. and pairwise distinct.
    Generic,
}

impl fmt::Display for Covariates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Covariates::Beta0 => "beta0",
            Covariates::Generic => "generic",
        })
    }
}

fn all_equal(b: &[Rational]) -> bool {
    b.windows(2).all(|w| w[0] == w[1])
}

/// Span rank the known results predict, used to size budgets. For p = 3
/// this is the conjectured `(T-2) 2^3`, clipped to `2^T`.
pub fn expected_span_rank(p: usize, horizon: usize, cov: Covariates) -> usize {
    let t = horizon;
    let r = match (p, cov) {
        (0, _) => t + 1,
        (1, _) => 2 * t,
        (2, Covariates::Beta0) => 3 * t - 2,
        (2, Covariates::Generic) => 4 * (t - 1),
        (p, _) => (t + 1).saturating_sub(p) << p,
    };
    r.min(1 << t)
}

/// Moment-space dimension the known results predict.
pub fn expected_dimension(p: usize, horizon: usize, cov: Covariates) -> usize {
    (1usize << horizon) - expected_span_rank(p, horizon, cov)
}

fn rank_hint(spec: &ModelSpec, b: &[Rational]) -> usize {
    let cov = if all_equal(b) { Covariates::Beta0 } else { Covariates::Generic };
    expected_span_rank(spec.p, spec.horizon, cov)
}

/// Rank of the span of probability rows over all fixed effects at fixed
/// `(init, c, b)`.
///
/// With constant `b` and `p` in {1, 2} the rank is exact via polynomial
/// coefficients. Otherwise the probability matrix is evaluated at
/// `budget.rows` random distinct fixed effects for every seed; the result is
/// flagged stable when all seeds agree and the rank stays below the row
/// count (or reaches `2^T`).
pub fn span_rank(spec: &ModelSpec, c: &[Rational], b: &[Rational], budget: &Budget) -> Result<RankCertificate> {
    spec.validate()?;
    let required = (rank_hint(spec, b) + 2).min(spec.n_outcomes());
    if budget.rows < required {
        return Err(Error::BudgetTooSmall {
            rows: budget.rows,
            required,
        });
    }
    if budget.seeds.len() < MIN_SEEDS {
        return Err(Error::Config(format!(
            "{} seeds given, at least {MIN_SEEDS} needed",
            budget.seeds.len()
        )));
    }
    if all_equal(b) && (1..=2).contains(&spec.p) {
        // a constant b only rescales u, so b = 1 has the same span
        return pbar_coeff_rank(spec, c);
    }
    sampled_span_rank(spec, c, b, budget)
}

/// Sampled lower bound regardless of the covariates; see [`span_rank`].
pub fn sampled_span_rank(spec: &ModelSpec, c: &[Rational], b: &[Rational], budget: &Budget) -> Result<RankCertificate> {
    let ranks = budget
        .seeds
        .par_iter()
        .map(|&seed| {
            let draws = AlphaDraws::random(budget.rows, seed);
            build_pbar(spec, &draws, c, b).map(|m| m.rank())
        })
        .collect::<Result<Vec<_>>>()?;
    let rank = ranks.iter().copied().max().unwrap_or(0);
    let agree = ranks.iter().all(|&r| r == rank);
    let saturated = rank == budget.rows && rank < spec.n_outcomes();
    Ok(RankCertificate {
        claimed_rank: rank,
        method: RankMethod::SampledLowerBound,
        draws_used: budget.rows * budget.seeds.len(),
        seeds: budget.seeds.clone(),
        stable_across_trials: agree && !saturated,
    })
}

/// Canonical basis of the moment functions at one `(init, c, b)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomentBasis {
    pub spec: ModelSpec,
    #[serde(with = "serde_rational_vec")]
    pub c: Vec<Rational>,
    #[serde(with = "serde_rational_vec")]
    pub b: Vec<Rational>,
    /// `2^T x d`; column `k` is a moment function over outcomes in `h` order.
    pub basis: RationalMatrix,
    pub d: usize,
    pub construction_draws: AlphaDraws,
    pub certificate: RankCertificate,
}

/// Nullspace of the probability rows, canonicalized.
///
/// Rows are added until the probability matrix reaches the certified span
/// rank, so every column is orthogonal to the whole span and not just to the
/// rows used.
pub fn moment_basis(spec: &ModelSpec, c: &[Rational], b: &[Rational], budget: &Budget) -> Result<MomentBasis> {
    let cert = span_rank(spec, c, b, budget)?;
    if cert.method == RankMethod::SampledLowerBound && !cert.stable_across_trials {
        return Err(Error::Internal(format!(
            "span rank {} not stable across seeds {:?}",
            cert.claimed_rank, cert.seeds
        )));
    }
    let rows = budget.rows.max(cert.claimed_rank + 2);
    let draws = AlphaDraws::random(rows, budget.seeds[0]);
    let pbar = build_pbar(spec, &draws, c, b)?;
    let rank = pbar.rank();
    if rank != cert.claimed_rank {
        return Err(Error::Internal(format!(
            "probability matrix rank {rank} differs from certified span rank {}",
            cert.claimed_rank
        )));
    }
    let basis = pbar.matrix.nullspace();
    Ok(MomentBasis {
        spec: spec.clone(),
        c: c.to_vec(),
        b: b.to_vec(),
        d: basis.cols(),
        basis,
        construction_draws: draws,
        certificate: cert,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_fresh: usize,
    pub seed: u64,
    pub d: usize,
    /// Largest `|sum_y Pr(y|u) m(y)|` over fresh `u` and basis columns, as `"p/q"`.
    pub max_abs_violation: String,
    pub columns_independent: bool,
}

/// Checks the basis against `n_fresh` fixed effects not used to build it.
/// Any nonzero residual is an error naming the offending `u` and column.
pub fn validate_basis(basis: &MomentBasis, n_fresh: usize, seed: u64) -> Result<ValidationReport> {
    if n_fresh == 0 {
        return Err(Error::Config("n_fresh must be at least 1".into()));
    }
    let fresh = basis.construction_draws.fresh(n_fresh, seed);
    let columns_independent = basis.basis.rank() == basis.d;
    if basis.d > 0 {
        let pbar = build_pbar(&basis.spec, &fresh, &basis.c, &basis.b)?;
        let resid = pbar.matrix.mul(&basis.basis)?;
        for g in 0..resid.rows() {
            for k in 0..resid.cols() {
                let r = resid.get(g, k);
                if !r.is_zero() {
                    return Err(Error::ValidationFailed {
                        u: rational_to_string(&fresh.u_list[g]),
                        column: k,
                        residual: rational_to_string(r),
                    });
                }
            }
        }
    }
    Ok(ValidationReport {
        n_fresh,
        seed,
        d: basis.d,
        max_abs_violation: rational_to_string(&Rational::zero()),
        columns_independent,
    })
}

/// Group labels for `b_1..b_T`: equal labels share one drawn value. Written
/// as a string such as `"abb"` (here `b_2 = b_3`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CovariatePattern(pub String);

impl CovariatePattern {
    pub fn generic(horizon: usize) -> Self {
        Self((0..horizon).map(|t| (b'a' + (t % 26) as u8) as char).collect())
    }

    /// `b_2 = ... = b_T`, `b_1` free.
    pub fn tail_equal(horizon: usize) -> Self {
        Self(std::iter::once('a').chain(std::iter::repeat_n('b', horizon - 1)).collect())
    }

    pub fn parse(s: &str, horizon: usize) -> Result<Self> {
        if s.chars().count() != horizon || !s.chars().all(|ch| ch.is_ascii_lowercase()) {
            return Err(Error::Config(format!(
                "pattern {s:?} must be {horizon} lowercase letters"
            )));
        }
        Ok(Self(s.to_string()))
    }

    /// Distinct random values per label.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> Vec<Rational> {
        let labels: Vec<char> = self.0.chars().collect();
        let mut distinct: Vec<char> = labels.clone();
        distinct.sort();
        distinct.dedup();
        let values = random_distinct(rng, distinct.len(), &[]);
        labels
            .iter()
            .map(|ch| values[distinct.binary_search(ch).expect("label present")].clone())
            .collect()
    }
}

impl fmt::Display for CovariatePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Random lag coefficients with every `c_l != 1`, and for two lags also
/// `c_1 c_2 != 1`.
pub fn random_lag_coefficients<R: Rng>(p: usize, rng: &mut R) -> Vec<Rational> {
    loop {
        let c: Vec<Rational> = (0..p).map(|_| random_nonunit(rng)).collect();
        let prod: Rational = c.iter().product();
        if p < 2 || !prod.is_one() {
            return c;
        }
    }
}

pub fn covariates_for<R: Rng>(cov: Covariates, horizon: usize, rng: &mut R) -> Vec<Rational> {
    match cov {
        Covariates::Beta0 => vec![Rational::one(); horizon],
        Covariates::Generic => random_distinct(rng, horizon, &[]),
    }
}

/// One (p, T, covariate-regime) cell of a dimension report. Every initial
/// history of length `p` is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimsCell {
    pub p: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub covariates: Covariates,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimsConfig {
    pub cells: Vec<DimsCell>,
    pub seed: u64,
    /// Rows per sampled matrix; `None` uses expected rank + 4.
    pub rows: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionRow {
    pub p: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub init: String,
    pub pattern: String,
    pub rank: usize,
    pub dim: usize,
    pub expected: usize,
    #[serde(rename = "match")]
    pub matches: bool,
    /// False for exploratory rows (p = 3), which carry no pass/fail meaning.
    pub asserted: bool,
    pub stable: bool,
    pub method: RankMethod,
    pub seeds: Vec<u64>,
    #[serde(with = "serde_rational_vec")]
    pub c: Vec<Rational>,
    #[serde(with = "serde_rational_vec")]
    pub b: Vec<Rational>,
}

impl DimensionRow {
    /// Row counts toward the verdict and fails it.
    pub fn failed(&self) -> bool {
        self.asserted && !(self.matches && self.stable)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub rows: Vec<DimensionRow>,
}

impl DimensionReport {
    pub fn all_match(&self) -> bool {
        self.rows.iter().all(|r| !r.failed())
    }

    /// CSV with header `p,T,init,pattern,rank,dim,expected,match,method,seeds`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["p", "T", "init", "pattern", "rank", "dim", "expected", "match", "method", "seeds"])?;
        for r in &self.rows {
            let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
            w.write_record([
                r.p.to_string(),
                r.horizon.to_string(),
                r.init.clone(),
                r.pattern.clone(),
                r.rank.to_string(),
                r.dim.to_string(),
                r.expected.to_string(),
                r.matches.to_string(),
                r.method.to_string(),
                seeds.join(";"),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn history_string(init: &[u8]) -> String {
    init.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
}

/// Certified dimension for every cell and initial history. Cells are
/// independent jobs with seeds derived from `(seed, cell index, history)`.
pub fn dimension_report(config: &DimsConfig) -> Result<DimensionReport> {
    let jobs: Vec<(usize, DimsCell, Vec<u8>)> = config
        .cells
        .iter()
        .enumerate()
        .flat_map(|(i, cell)| {
            ModelSpec::all_histories(cell.p)
                .into_iter()
                .map(move |h| (i, *cell, h))
        })
        .collect();
    let rows = jobs
        .par_iter()
        .map(|(i, cell, init)| {
            if cell.p > MAX_LAG {
                return Err(Error::UnsupportedLag(cell.p));
            }
            let job_seed = derive_seed(derive_seed(config.seed, *i as u64), init_code(init));
            let spec = ModelSpec::new(cell.p, cell.horizon, init)?;
            let mut rng = rng_from_seed(job_seed);
            let c = random_lag_coefficients(cell.p, &mut rng);
            let b = covariates_for(cell.covariates, cell.horizon, &mut rng);
            let mut budget = Budget::for_spec(&spec, &b, job_seed);
            if let Some(r) = config.rows {
                budget.rows = r;
            }
            let cert = span_rank(&spec, &c, &b, &budget)?;
            let n = spec.n_outcomes();
            let expected = expected_dimension(cell.p, cell.horizon, cell.covariates);
            let dim = n - cert.claimed_rank;
            let pattern = match cell.covariates {
                Covariates::Beta0 => "beta0".to_string(),
                Covariates::Generic => CovariatePattern::generic(cell.horizon).0,
            };
            Ok(DimensionRow {
                p: cell.p,
                horizon: cell.horizon,
                init: history_string(init),
                pattern,
                rank: cert.claimed_rank,
                dim,
                expected,
                matches: dim == expected,
                asserted: cell.p <= 2,
                stable: cert.stable_across_trials,
                method: cert.method,
                seeds: cert.seeds,
                c,
                b,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DimensionReport { rows })
}

fn init_code(init: &[u8]) -> u64 {
    init.iter().enumerate().map(|(l, &b)| (b as u64) << l).sum::<u64>() + 1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternRow {
    pub init: String,
    pub pattern: String,
    pub pattern_dim: usize,
    pub generic_dim: usize,
    pub surplus: usize,
    pub lower_bound: usize,
    pub passes: bool,
    #[serde(with = "serde_rational_vec")]
    pub c: Vec<Rational>,
    #[serde(with = "serde_rational_vec")]
    pub b_pattern: Vec<Rational>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternReport {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub pattern: String,
    pub rows: Vec<PatternRow>,
}

impl PatternReport {
    pub fn passes(&self) -> bool {
        self.rows.iter().all(|r| r.passes)
    }
}

/// AR(2) dimension under equality restrictions among the `b_t` compared with
/// distinct `b_t`, for every initial history. The surplus must reach `T-2`.
pub fn covariate_pattern_experiment(horizon: usize, pattern: &CovariatePattern, seed: u64) -> Result<PatternReport> {
    if !(3..=5).contains(&horizon) {
        return Err(Error::Config(format!("pattern experiment needs T in 3..=5, got {horizon}")));
    }
    let pattern = CovariatePattern::parse(&pattern.0, horizon)?;
    let rows = ModelSpec::all_histories(2)
        .par_iter()
        .map(|init| {
            let job_seed = derive_seed(seed, init_code(init));
            let spec = ModelSpec::new(2, horizon, init)?;
            let mut rng = rng_from_seed(job_seed);
            let c = random_lag_coefficients(2, &mut rng);
            let b_pat = pattern.draw(&mut rng);
            let b_gen = random_distinct(&mut rng, horizon, &[]);
            let budget = Budget::full(&spec, job_seed);
            let pat = span_rank(&spec, &c, &b_pat, &budget)?;
            let gen = span_rank(&spec, &c, &b_gen, &budget)?;
            if !(pat.stable_across_trials && gen.stable_across_trials) {
                return Err(Error::Internal("pattern ranks not stable across seeds".into()));
            }
            let n = spec.n_outcomes();
            let pattern_dim = n - pat.claimed_rank;
            let generic_dim = n - gen.claimed_rank;
            let surplus = pattern_dim.saturating_sub(generic_dim);
            let lower_bound = horizon - 2;
            Ok(PatternRow {
                init: history_string(init),
                pattern: pattern.0.clone(),
                pattern_dim,
                generic_dim,
                surplus,
                lower_bound,
                passes: pattern_dim >= generic_dim && surplus >= lower_bound,
                c,
                b_pattern: b_pat,
                seeds: pat.seeds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PatternReport {
        horizon,
        pattern: pattern.0,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackedReport {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub init: String,
    #[serde(with = "serde_rational_vec")]
    pub c: Vec<Rational>,
    pub per_b_ranks: Vec<usize>,
    pub stacked_rank: usize,
    pub single_expected: usize,
    pub rows_per_b: usize,
    pub seed: u64,
}

/// Rank of AR(1) probability rows stacked across several covariate paths.
/// A moment function that must not depend on `x` has to annihilate all of
/// them at once.
pub fn stacked_rank(spec: &ModelSpec, c: &[Rational], bs: &[Vec<Rational>], rows_per_b: usize, seed: u64) -> Result<(Vec<usize>, usize)> {
    let mut stacked = RationalMatrix::zeros(0, spec.n_outcomes());
    let mut per_b = Vec::with_capacity(bs.len());
    for (k, b) in bs.iter().enumerate() {
        let draws = AlphaDraws::random(rows_per_b, derive_seed(seed, k as u64));
        let m = build_pbar(spec, &draws, c, b)?;
        per_b.push(m.rank());
        stacked = stacked.vstack(&m.matrix)?;
    }
    Ok((per_b, stacked.rank()))
}

pub fn stacked_x_rank(horizon: usize, x_draw_count: usize, seed: u64) -> Result<StackedReport> {
    if x_draw_count < 2 {
        return Err(Error::Config("stacked experiment needs at least two covariate draws".into()));
    }
    let spec = ModelSpec::new(1, horizon, &[0])?;
    let mut rng = rng_from_seed(seed);
    let c = random_lag_coefficients(1, &mut rng);
    let bs: Vec<Vec<Rational>> = (0..x_draw_count)
        .map(|_| random_distinct(&mut rng, horizon, &[]))
        .collect();
    let rows_per_b = spec.n_outcomes();
    let (per_b_ranks, stacked_rank) = stacked_rank(&spec, &c, &bs, rows_per_b, seed)?;
    Ok(StackedReport {
        horizon,
        init: "0".into(),
        c,
        per_b_ranks,
        stacked_rank,
        single_expected: 2 * horizon,
        rows_per_b,
        seed,
    })
}

/// Largest absolute entry, for reporting residuals.
pub fn max_abs(m: &RationalMatrix) -> Rational {
    m.entries()
        .iter()
        .map(|x| x.abs())
        .fold(Rational::zero(), |a, x| if x > a { x } else { a })
}
