//! Simulation of fixed-effects panel logit data and GMM estimation of the
//! lag coefficients from floating-point moment-function bases.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::draws::{derive_seed, rng_from_seed};
use crate::error::{Error, Result};
use crate::model::{all_outcomes, ModelSpec, Outcome};
use crate::moments::{expected_dimension, Covariates};

/// Relative singular-value cutoff for the numerical nullspace.
pub const SVD_THRESHOLD: f64 = 1e-9;

/// Offset applied to exactly-zero lag coefficients on a search path.
pub const DEGENERACY_NUDGE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AlphaDist {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    TwoPoint { a: f64, b: f64, prob: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitScheme {
    /// Same history for everyone, `value[0] = y_0`, `value[1] = y_{-1}`.
    Fixed { value: Vec<u8> },
    /// Each initial outcome independently one with probability `q`.
    RandomBernoulli { q: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum XScheme {
    None,
    IidNormal { sd: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub p: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub true_gamma: Vec<f64>,
    pub true_beta: f64,
    pub alpha_dist: AlphaDist,
    pub init_scheme: InitScheme,
    pub x_scheme: XScheme,
    pub seed: u64,
}

impl SimConfig {
    /// AR(1), no covariates, `alpha ~ N(0, 1)`, `y_0 ~ Bernoulli(1/2)`.
    pub fn ar1(n: usize, horizon: usize, gamma: f64, seed: u64) -> Self {
        Self {
            n,
            p: 1,
            horizon,
            true_gamma: vec![gamma],
            true_beta: 0.0,
            alpha_dist: AlphaDist::Normal { mean: 0.0, sd: 1.0 },
            init_scheme: InitScheme::RandomBernoulli { q: 0.5 },
            x_scheme: XScheme::None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n == 0 {
            return bad("N must be at least 1");
        }
        ModelSpec::new(self.p, self.horizon, &vec![0; self.p])?;
        if self.true_gamma.len() != self.p {
            return bad("true_gamma needs one entry per lag");
        }
        if !self.true_gamma.iter().chain([&self.true_beta]).all(|v| v.is_finite()) {
            return bad("parameters must be finite");
        }
        match &self.alpha_dist {
            AlphaDist::Normal { mean, sd } if !(mean.is_finite() && sd.is_finite() && *sd >= 0.0) => {
                return bad("normal alpha needs finite mean and sd >= 0")
            }
            AlphaDist::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
                return bad("uniform alpha needs lo <= hi")
            }
            AlphaDist::TwoPoint { a, b, prob } if !(a.is_finite() && b.is_finite() && (0.0..=1.0).contains(prob)) => {
                return bad("two-point alpha needs prob in [0, 1]")
            }
            _ => {}
        }
        match &self.init_scheme {
            InitScheme::Fixed { value } if value.len() != self.p || value.iter().any(|v| *v > 1) => {
                return bad("fixed init must be p bits")
            }
            InitScheme::RandomBernoulli { q } if !(0.0..=1.0).contains(q) => return bad("init q must be in [0, 1]"),
            _ => {}
        }
        if let XScheme::IidNormal { sd } = self.x_scheme {
            if !(sd.is_finite() && sd >= 0.0) {
                return bad("x sd must be >= 0");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub init: Vec<u8>,
    /// `x_t' beta` for `t = 1..T`.
    pub x_index: Vec<f64>,
    pub y: Vec<u8>,
}

impl Individual {
    /// 1-based outcome index `h`.
    pub fn outcome_index(&self) -> usize {
        1 + self.y.iter().enumerate().map(|(t, &v)| (v as usize) << t).sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    pub p: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub individuals: Vec<Individual>,
}

fn bits(v: &[u8]) -> String {
    v.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
}

fn parse_bits(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .map(|ch| match ch {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(Error::Config(format!("bad bit string {s:?}"))),
        })
        .collect()
}

impl PanelDataset {
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    /// CSV with header `id,init,x_index,y`; `x_index` is `;`-separated.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "init", "x_index", "y"])?;
        for (i, ind) in self.individuals.iter().enumerate() {
            let x: Vec<String> = ind.x_index.iter().map(|v| format!("{v:.17e}")).collect();
            w.write_record([i.to_string(), bits(&ind.init), x.join(";"), bits(&ind.y)])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str, p: usize) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut individuals = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |k: usize| rec.get(k).ok_or_else(|| Error::Config("short csv record".into()));
            let init = parse_bits(field(1)?)?;
            let x_index = field(2)?
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|e| Error::Config(format!("bad x value {s:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let y = parse_bits(field(3)?)?;
            individuals.push(Individual { init, x_index, y });
        }
        let horizon = individuals.first().map_or(0, |i| i.y.len());
        for ind in &individuals {
            if ind.init.len() != p || ind.y.len() != horizon || ind.x_index.len() != horizon {
                return Err(Error::Config("inconsistent record lengths".into()));
            }
        }
        Ok(Self { p, horizon, individuals })
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn lagged(y: &[u8], init: &[u8], t: usize, l: usize) -> u8 {
    // t is 1-based; y_{t-l} with y_{-k} = init[k]
    if t > l {
        y[t - l - 1]
    } else {
        init[l - t]
    }
}

/// `Pr(y | init, x, alpha)` in floating point.
pub fn outcome_prob(y: &[u8], init: &[u8], gamma: &[f64], x_index: &[f64], alpha: f64) -> f64 {
    let mut pr = 1.0;
    for t in 1..=y.len() {
        let mut z = x_index[t - 1] + alpha;
        for (l, g) in gamma.iter().enumerate() {
            z += g * lagged(y, init, t, l + 1) as f64;
        }
        let p1 = logistic(z);
        pr *= if y[t - 1] == 1 { p1 } else { 1.0 - p1 };
    }
    pr
}

pub fn simulate_panel(cfg: &SimConfig) -> Result<PanelDataset> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let alpha = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
        match cfg.alpha_dist {
            AlphaDist::Normal { mean, sd } => Normal::new(mean, sd).expect("validated").sample(rng),
            AlphaDist::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    Uniform::new(lo, hi).expect("validated").sample(rng)
                }
            }
            AlphaDist::TwoPoint { a, b, prob } => {
                if rng.random_bool(prob) {
                    a
                } else {
                    b
                }
            }
        }
    };
    let mut individuals = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let a = alpha(&mut rng);
        let init: Vec<u8> = match &cfg.init_scheme {
            InitScheme::Fixed { value } => value.clone(),
            InitScheme::RandomBernoulli { q } => {
                let d = Bernoulli::new(*q).expect("validated");
                (0..cfg.p).map(|_| d.sample(&mut rng) as u8).collect()
            }
        };
        let x_index: Vec<f64> = match cfg.x_scheme {
            XScheme::None => vec![0.0; cfg.horizon],
            XScheme::IidNormal { sd } => {
                let d = Normal::new(0.0, sd).expect("validated");
                (0..cfg.horizon).map(|_| d.sample(&mut rng) * cfg.true_beta).collect()
            }
        };
        let mut y = Vec::with_capacity(cfg.horizon);
        for t in 1..=cfg.horizon {
            let mut z = x_index[t - 1] + a;
            for (l, g) in cfg.true_gamma.iter().enumerate() {
                z += g * lagged(&y, &init, t, l + 1) as f64;
            }
            y.push(rng.random_bool(logistic(z)) as u8);
        }
        individuals.push(Individual { init, x_index, y });
    }
    Ok(PanelDataset {
        p: cfg.p,
        horizon: cfg.horizon,
        individuals,
    })
}

/// Equally spaced fixed-effect values for building probability rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaLadder {
    pub lo: f64,
    pub hi: f64,
    /// `None` uses twice the expected span rank.
    pub points: Option<usize>,
}

impl Default for AlphaLadder {
    fn default() -> Self {
        Self {
            lo: -4.0,
            hi: 4.0,
            points: None,
        }
    }
}

impl AlphaLadder {
    pub fn values(&self, default_points: usize) -> Vec<f64> {
        let n = self.points.unwrap_or(default_points).max(2);
        (0..n)
            .map(|k| self.lo + (self.hi - self.lo) * k as f64 / (n - 1) as f64)
            .collect()
    }
}

fn covariate_regime(beta_index: &[f64]) -> Covariates {
    if beta_index.windows(2).all(|w| w[0] == w[1]) {
        Covariates::Beta0
    } else {
        Covariates::Generic
    }
}

/// Probability rows at the given fixed effects, `alphas.len() x 2^T`.
pub fn probability_rows(spec: &ModelSpec, gamma: &[f64], beta_index: &[f64], alphas: &[f64]) -> DMatrix<f64> {
    let init: Vec<u8> = spec.init.bits().iter().map(|b| *b as u8).collect();
    let outcomes: Vec<Vec<u8>> = all_outcomes(spec.horizon)
        .map(|o: Outcome| (1..=spec.horizon).map(|t| o.y(t) as u8).collect())
        .collect();
    DMatrix::from_fn(alphas.len(), outcomes.len(), |g, h| {
        outcome_prob(&outcomes[h], &init, gamma, beta_index, alphas[g])
    })
}

/// Moment-space dimension at these parameter values. A zero last lag
/// coefficient drops the lag order, e.g. `gamma = 0` is the static model.
pub fn float_exact_dimension(p: usize, horizon: usize, gamma: &[f64], beta_index: &[f64]) -> usize {
    let mut q = p;
    while q > 0 && gamma[q - 1] == 0.0 {
        q -= 1;
    }
    expected_dimension(q, horizon, covariate_regime(beta_index))
}

struct NullSvd {
    singular_values: Vec<f64>,
    /// Right singular vectors mapped back through the column scaling,
    /// ordered by increasing singular value.
    vectors: Vec<Vec<f64>>,
}

fn null_svd(spec: &ModelSpec, gamma: &[f64], beta_index: &[f64], ladder: &AlphaLadder, points: usize) -> Result<NullSvd> {
    if !(1..=2).contains(&spec.p) {
        return Err(Error::UnsupportedLag(spec.p));
    }
    if gamma.len() != spec.p || beta_index.len() != spec.horizon {
        return Err(Error::Shape("gamma needs p entries and beta_index T entries".into()));
    }
    if let Some(v) = gamma.iter().chain(beta_index).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(*v));
    }
    let n = spec.n_outcomes();
    let alphas = ladder.values(points);
    let mut rows = probability_rows(spec, gamma, beta_index, &alphas);
    // Equilibrate: m is null for P iff D^{-1} m is null for P D, and unit
    // column and row norms keep the small singular values well above noise.
    let col_scale: Vec<f64> = (0..n).map(|h| 1.0 / rows.column(h).norm()).collect();
    for (h, s) in col_scale.iter().enumerate() {
        rows.column_mut(h).scale_mut(*s);
    }
    for g in 0..rows.nrows() {
        let norm = rows.row(g).norm();
        rows.row_mut(g).scale_mut(1.0 / norm);
    }
    // pad so the SVD returns a full set of right singular vectors
    let padded = if rows.nrows() < n {
        let mut m = DMatrix::zeros(n, n);
        m.rows_mut(0, rows.nrows()).copy_from(&rows);
        m
    } else {
        rows
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::Internal("svd without V".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    Ok(NullSvd {
        singular_values: order.iter().map(|&k| svd.singular_values[k]).collect(),
        vectors: order
            .iter()
            .map(|&k| (0..n).map(|h| v_t[(k, h)] * col_scale[h]).collect())
            .collect(),
    })
}

fn canonical_from(vectors: &[Vec<f64>], d: usize, n: usize) -> DMatrix<f64> {
    let mut basis_t = DMatrix::zeros(d, n);
    for (i, v) in vectors.iter().take(d).enumerate() {
        for (h, x) in v.iter().enumerate() {
            basis_t[(i, h)] = *x;
        }
    }
    float_rref(basis_t).transpose()
}

/// Numerical moment-function basis (`2^T x d`), canonicalized to reduced
/// column echelon form. The count of singular values under the cutoff must
/// equal the exact dimension.
pub fn float_moment_basis(spec: &ModelSpec, gamma: &[f64], beta_index: &[f64], ladder: &AlphaLadder) -> Result<DMatrix<f64>> {
    if !(1..=2).contains(&spec.p) {
        return Err(Error::UnsupportedLag(spec.p));
    }
    let n = spec.n_outcomes();
    let exact = float_exact_dimension(spec.p, spec.horizon, gamma, beta_index);
    let ns = null_svd(spec, gamma, beta_index, ladder, 2 * (n - exact))?;
    let smax = ns.singular_values.last().copied().unwrap_or(0.0);
    let numeric = ns
        .singular_values
        .iter()
        .filter(|s| **s <= SVD_THRESHOLD * smax)
        .count();
    if numeric != exact {
        return Err(Error::DimensionMismatch { numeric, exact });
    }
    Ok(canonical_from(&ns.vectors, exact, n))
}

/// Basis from the `d` smallest singular directions, with `d` the dimension
/// at generic parameters. Used along a search path, where the path may cross
/// a degenerate point such as `gamma = 0` whose dimension is larger.
pub fn float_moment_basis_generic(spec: &ModelSpec, gamma: &[f64], beta_index: &[f64], ladder: &AlphaLadder) -> Result<DMatrix<f64>> {
    let n = spec.n_outcomes();
    let d = expected_dimension(spec.p, spec.horizon, covariate_regime(beta_index));
    // At a degenerate point the generic subspace is the limit from nearby
    // parameters; evaluating slightly off the point keeps the objective
    // continuous there instead of picking arbitrary null directions.
    let nudged: Vec<f64> = gamma.iter().map(|g| if *g == 0.0 { DEGENERACY_NUDGE } else { *g }).collect();
    let ns = null_svd(spec, &nudged, beta_index, ladder, 2 * (n - d))?;
    Ok(canonical_from(&ns.vectors, d, n))
}

/// Gauss-Jordan with partial pivoting inside each column; pivots land on the
/// lowest column indices with a non-negligible entry.
fn float_rref(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    // SVD directions carry errors around eps / (smallest kept singular
    // value), so entries this small are treated as structural zeros
    let tol = 1e-6 * a.amax().max(f64::MIN_POSITIVE);
    let mut r = 0;
    for j in 0..n {
        if r == m {
            break;
        }
        let (best, val) = (r..m)
            .map(|i| (i, a[(i, j)].abs()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol {
            continue;
        }
        a.swap_rows(r, best);
        let piv = a[(r, j)];
        for k in 0..n {
            a[(r, k)] /= piv;
        }
        for i in 0..m {
            if i != r {
                let f = a[(i, j)];
                if f != 0.0 {
                    for k in 0..n {
                        let v = a[(r, k)];
                        a[(i, k)] -= f * v;
                    }
                }
            }
        }
        r += 1;
    }
    a
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Search {
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_step: f64,
    pub refine_tol: f64,
}

impl Default for Search {
    fn default() -> Self {
        Self {
            grid_lo: -3.0,
            grid_hi: 3.0,
            grid_step: 0.05,
            refine_tol: 1e-6,
        }
    }
}

impl Search {
    fn grid(&self) -> Result<Vec<f64>> {
        if !(self.grid_step > 0.0 && self.grid_lo < self.grid_hi && self.refine_tol > 0.0) {
            return Err(Error::Config("search needs grid_lo < grid_hi, positive step and tol".into()));
        }
        let n = ((self.grid_hi - self.grid_lo) / self.grid_step).round() as usize;
        // rounded so that points such as 0 come out exact
        Ok((0..=n)
            .map(|k| ((self.grid_lo + k as f64 * self.grid_step) * 1e12).round() / 1e12)
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub gamma_hat: Vec<f64>,
    pub objective_value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Outcome counts per initial history.
fn histogram(data: &PanelDataset) -> BTreeMap<Vec<u8>, Vec<f64>> {
    let n = 1usize << data.horizon;
    let mut counts: BTreeMap<Vec<u8>, Vec<f64>> = BTreeMap::new();
    for ind in &data.individuals {
        counts.entry(ind.init.clone()).or_insert_with(|| vec![0.0; n])[ind.outcome_index() - 1] += 1.0;
    }
    counts
}

/// GMM objective `Q = g'g` with identity weight; moments are stacked over
/// initial histories since each basis is valid conditional on its history.
pub struct Objective {
    horizon: usize,
    n: f64,
    counts: BTreeMap<Vec<u8>, Vec<f64>>,
    ladder: AlphaLadder,
}

impl Objective {
    pub fn new(data: &PanelDataset, ladder: AlphaLadder) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Config("empty dataset".into()));
        }
        if data.individuals.iter().any(|i| i.x_index.iter().any(|v| *v != 0.0)) {
            return Err(Error::Config("estimation with covariates is not supported".into()));
        }
        if expected_dimension(data.p, data.horizon, Covariates::Beta0) < data.p {
            return Err(Error::Unidentified(format!("T={} leaves fewer moment functions than parameters", data.horizon)));
        }
        Ok(Self {
            horizon: data.horizon,
            n: data.len() as f64,
            counts: histogram(data),
            ladder,
        })
    }

    pub fn value(&self, gamma: &[f64]) -> Result<f64> {
        let zeros = vec![0.0; self.horizon];
        let mut q = 0.0;
        for (init, counts) in &self.counts {
            let spec = ModelSpec::new(init.len(), self.horizon, init)?;
            let basis = float_moment_basis_generic(&spec, gamma, &zeros, &self.ladder)?;
            for k in 0..basis.ncols() {
                let g: f64 = counts.iter().zip(basis.column(k).iter()).map(|(c, m)| c * m).sum::<f64>() / self.n;
                q += g * g;
            }
        }
        if !q.is_finite() {
            return Err(Error::NonFinite(q));
        }
        Ok(q)
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

fn golden<F: FnMut(f64) -> Result<f64>>(mut f: F, mut a: f64, mut b: f64, tol: f64, evals: &mut usize) -> Result<(f64, f64, bool)> {
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    *evals += 2;
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2)?;
        }
        *evals += 1;
    }
    let (x, fx) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    Ok((x, fx, b - a <= tol))
}

/// Scalar AR(1) lag coefficient by grid search plus golden-section
/// refinement around the best grid point.
pub fn estimate_gmm(data: &PanelDataset, search: &Search) -> Result<EstimateResult> {
    if data.p != 1 {
        return Err(Error::UnsupportedLag(data.p));
    }
    let obj = Objective::new(data, AlphaLadder::default())?;
    let grid = search.grid()?;
    let mut evals = 0;
    let mut best = (grid[0], f64::INFINITY);
    for &g in &grid {
        let q = obj.value(&[g])?;
        evals += 1;
        if q < best.1 {
            best = (g, q);
        }
    }
    let lo = (best.0 - search.grid_step).max(search.grid_lo);
    let hi = (best.0 + search.grid_step).min(search.grid_hi);
    let (x, fx, tight) = golden(|g| obj.value(&[g]), lo, hi, search.refine_tol, &mut evals)?;
    let interior = best.0 > search.grid_lo && best.0 < search.grid_hi;
    let (gamma, q) = if fx <= best.1 { (x, fx) } else { best };
    Ok(EstimateResult {
        gamma_hat: vec![gamma],
        objective_value: q,
        evaluations: evals,
        converged: tight && interior,
    })
}

/// Experimental AR(2): 2-D grid over `(gamma_1, gamma_2)` then alternating
/// golden-section passes along each coordinate.
pub fn estimate_gmm_ar2(data: &PanelDataset, search: &Search) -> Result<EstimateResult> {
    if data.p != 2 {
        return Err(Error::UnsupportedLag(data.p));
    }
    let obj = Objective::new(data, AlphaLadder::default())?;
    let grid = search.grid()?;
    let mut evals = 0;
    let mut best = ([grid[0], grid[0]], f64::INFINITY);
    for &g1 in &grid {
        for &g2 in &grid {
            let q = obj.value(&[g1, g2])?;
            evals += 1;
            if q < best.1 {
                best = ([g1, g2], q);
            }
        }
    }
    let mut x = best.0;
    let mut fx = best.1;
    let mut converged = false;
    for _ in 0..20 {
        let before = x;
        for k in 0..2 {
            let lo = (x[k] - search.grid_step).max(search.grid_lo);
            let hi = (x[k] + search.grid_step).min(search.grid_hi);
            let (xk, fk, _) = golden(
                |v| {
                    let mut g = x;
                    g[k] = v;
                    obj.value(&g)
                },
                lo,
                hi,
                search.refine_tol,
                &mut evals,
            )?;
            if fk <= fx {
                x[k] = xk;
                fx = fk;
            }
        }
        if (x[0] - before[0]).abs().max((x[1] - before[1]).abs()) <= search.refine_tol {
            converged = true;
            break;
        }
    }
    Ok(EstimateResult {
        gamma_hat: x.to_vec(),
        objective_value: fx,
        evaluations: evals,
        converged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub p: usize,
    pub gamma_true: f64,
    pub reps: usize,
    pub mean_bias: f64,
    pub median_bias: f64,
    pub rmse: f64,
    pub failures: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub rows: Vec<McRow>,
    /// RMSE at the smallest N over RMSE at the largest N.
    pub rmse_ratio: Option<f64>,
    /// Estimates per N, in replication order; failed replications are absent.
    pub estimates: Vec<Vec<f64>>,
}

impl McSummary {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["N", "T", "p", "gamma_true", "reps", "mean_bias", "median_bias", "rmse", "failures", "seed"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.horizon.to_string(),
                r.p.to_string(),
                format!("{:.16e}", r.gamma_true),
                r.reps.to_string(),
                format!("{:.16e}", r.mean_bias),
                format!("{:.16e}", r.median_bias),
                format!("{:.16e}", r.rmse),
                r.failures.to_string(),
                r.seed.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Independent simulate-and-estimate replications for each sample size.
/// Replication `r` at size `N` uses seed `derive_seed(derive_seed(seed, N), r)`.
/// Failed or non-converged replications are counted and left out.
pub fn monte_carlo(cfg: &SimConfig, reps: usize, search: &Search, sizes: &[usize]) -> Result<McSummary> {
    if reps < 2 {
        return Err(Error::Config("monte carlo needs at least 2 replications".into()));
    }
    if cfg.p != 1 {
        return Err(Error::UnsupportedLag(cfg.p));
    }
    cfg.validate()?;
    let truth = cfg.true_gamma[0];
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    for &n in sizes {
        let size_seed = derive_seed(cfg.seed, n as u64);
        let results: Vec<Option<f64>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut c = cfg.clone();
                c.n = n;
                c.seed = derive_seed(size_seed, r as u64);
                let data = simulate_panel(&c).ok()?;
                let est = estimate_gmm(&data, search).ok()?;
                est.converged.then(|| est.gamma_hat[0])
            })
            .collect();
        let ok: Vec<f64> = results.iter().flatten().copied().collect();
        let bias: Vec<f64> = ok.iter().map(|g| g - truth).collect();
        let k = bias.len().max(1) as f64;
        rows.push(McRow {
            n,
            horizon: cfg.horizon,
            p: cfg.p,
            gamma_true: truth,
            reps,
            mean_bias: bias.iter().sum::<f64>() / k,
            median_bias: median(&bias),
            rmse: (bias.iter().map(|b| b * b).sum::<f64>() / k).sqrt(),
            failures: reps - ok.len(),
            seed: size_seed,
        });
        estimates.push(ok);
    }
    let rmse_ratio = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if rows.len() >= 2 && b.rmse > 0.0 => Some(a.rmse / b.rmse),
        _ => None,
    };
    Ok(McSummary {
        rows,
        rmse_ratio,
        estimates,
    })
}
