//! Probability matrices indexed by fixed-effect draws (rows) and outcomes
//! (columns), their diagonally rescaled forms, and the square submatrix used
//! to certify the `2T` lower bound for AR(1).
//!
//! Column `j` of a full matrix holds outcome `h = j + 1`.

use num_traits::{One, Zero};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::draws::AlphaDraws;
use crate::error::{Error, Result};
use crate::exact_linalg::{Rational, RationalMatrix};
use crate::model::{all_outcomes, prob_general, ExpParams, ModelSpec, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixKind {
    Pbar,
    Pbreve,
    Pddot,
    Ptilde,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuiltMatrix {
    pub kind: MatrixKind,
    pub spec: ModelSpec,
    pub matrix: RationalMatrix,
    /// Outcome index `h` held by each column.
    pub column_index_map: Vec<usize>,
}

impl BuiltMatrix {
    pub fn rank(&self) -> usize {
        self.matrix.rank()
    }

    /// Submatrix of the given outcome indices, in the order given.
    pub fn columns_for(&self, hs: &[usize]) -> Result<RationalMatrix> {
        let cols = hs
            .iter()
            .map(|h| {
                self.column_index_map
                    .iter()
                    .position(|x| x == h)
                    .ok_or_else(|| Error::Shape(format!("outcome {h} not among the columns")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.matrix.select_columns(&cols))
    }
}

/// How the rescaled AR(2) matrix groups its `(1+P)/(1+P c)` factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BreveForm {
    /// One factor per period from the actual lag pattern, so that the
    /// result is a row/column diagonal rescaling of `Pbar`.
    PerPeriod,
    /// Grouping by `y_{t-1}` with the `gamma_2` factor charged to period
    /// `t+1` whatever `y_t` is. Differs from `PerPeriod` for AR(2) on
    /// outcomes containing `1,1` runs; kept for comparison only.
    AsPrinted,
}

fn full_index_map(horizon: usize) -> Vec<usize> {
    (1..=1usize << horizon).collect()
}

fn check_common(spec: &ModelSpec, draws: &AlphaDraws, c: &[Rational], b: &[Rational]) -> Result<()> {
    spec.validate()?;
    draws.validate()?;
    let probe = ExpParams::new(Rational::one(), c.to_vec(), b.to_vec());
    probe.validate(spec)
}

/// `entry(g, h) = Pr(y_h | init, u_g, c, b)`.
pub fn build_pbar(
    spec: &ModelSpec,
    draws: &AlphaDraws,
    c: &[Rational],
    b: &[Rational],
) -> Result<BuiltMatrix> {
    check_common(spec, draws, c, b)?;
    let outcomes: Vec<Outcome> = all_outcomes(spec.horizon).collect();
    let mut rows = Vec::with_capacity(draws.len());
    for u in &draws.u_list {
        let params = ExpParams::new(u.clone(), c.to_vec(), b.to_vec());
        rows.push(
            outcomes
                .iter()
                .map(|y| prob_general(y, spec, &params))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(BuiltMatrix {
        kind: MatrixKind::Pbar,
        spec: spec.clone(),
        matrix: RationalMatrix::from_rows(rows)?,
        column_index_map: full_index_map(spec.horizon),
    })
}

/// Rescaled probability matrix with `P_t = b_t u_g`; per-period grouping.
pub fn build_pbreve(
    spec: &ModelSpec,
    draws: &AlphaDraws,
    c: &[Rational],
    b: &[Rational],
) -> Result<BuiltMatrix> {
    build_pbreve_form(spec, draws, c, b, BreveForm::PerPeriod)
}

pub fn build_pbreve_form(
    spec: &ModelSpec,
    draws: &AlphaDraws,
    c: &[Rational],
    b: &[Rational],
    form: BreveForm,
) -> Result<BuiltMatrix> {
    if !(1..=2).contains(&spec.p) {
        return Err(Error::UnsupportedLag(spec.p));
    }
    check_common(spec, draws, c, b)?;
    let outcomes: Vec<Outcome> = all_outcomes(spec.horizon).collect();
    let mut rows = Vec::with_capacity(draws.len());
    for u in &draws.u_list {
        let big_p: Vec<Rational> = b.iter().map(|bt| bt * u).collect();
        rows.push(
            outcomes
                .iter()
                .map(|y| match (spec.p, form) {
                    (2, BreveForm::AsPrinted) => breve_ar2_as_printed(y, spec, &big_p, c),
                    _ => breve_per_period(y, spec, &big_p, c),
                })
                .collect(),
        );
    }
    Ok(BuiltMatrix {
        kind: MatrixKind::Pbreve,
        spec: spec.clone(),
        matrix: RationalMatrix::from_rows(rows)?,
        column_index_map: full_index_map(spec.horizon),
    })
}

/// `prod_t P_t^{y_t} * prod_{t=2}^T (1+P_t) / (1 + P_t prod_l c_l^{y_{t-l}})`.
///
/// Period 1 is dropped: given the initial history it only rescales the row.
/// For AR(1) this is `P_T^{y_T} prod_{t<T} (P_t (1+P_{t+1})/(1+P_{t+1} c))^{y_t}`.
fn breve_per_period(y: &Outcome, spec: &ModelSpec, big_p: &[Rational], c: &[Rational]) -> Rational {
    let one = Rational::one();
    let mut v = one.clone();
    for t in 1..=spec.horizon {
        let pt = &big_p[t - 1];
        if y.y(t) {
            v *= pt;
        }
        if t >= 2 {
            let mut shift = one.clone();
            for (l, cl) in (1..=spec.p).zip(c) {
                if y.lagged(&spec.init, t, l) {
                    shift *= cl;
                }
            }
            if !shift.is_one() {
                v *= (&one + pt) / (&one + pt * shift);
            }
        }
    }
    v
}

/// AR(2) rescaled entry with factors grouped by `y_{t-1}`:
/// `P_T^{y_T} * prod_{t=2}^{T-1} (P_{t-1} A_t)^{y_{t-1}} * (P_{T-1} B)^{y_{T-1}}`.
fn breve_ar2_as_printed(y: &Outcome, spec: &ModelSpec, big_p: &[Rational], c: &[Rational]) -> Rational {
    let one = Rational::one();
    let t_max = spec.horizon;
    let p = |t: usize| &big_p[t - 1];
    let yy = |t: usize| -> bool {
        if t == 0 {
            spec.init.get(0)
        } else {
            y.y(t)
        }
    };
    let (c1, c2) = (&c[0], &c[1]);
    let c12 = c1 * c2;
    let mut v = if yy(t_max) { p(t_max).clone() } else { one.clone() };
    for t in 2..t_max {
        if !yy(t - 1) {
            continue;
        }
        let mut f = p(t - 1).clone();
        if yy(t - 2) {
            f *= (&one + p(t)) / (&one + p(t) * &c12);
        } else {
            f *= (&one + p(t)) * (&one + p(t + 1)) / ((&one + p(t) * c1) * (&one + p(t + 1) * c2));
        }
        v *= f;
    }
    if yy(t_max - 1) {
        let mut f = p(t_max - 1).clone();
        if yy(t_max - 2) {
            f *= (&one + p(t_max)) / (&one + p(t_max) * &c12);
        } else {
            f *= (&one + p(t_max)) / (&one + p(t_max) * c1);
        }
        v *= f;
    }
    v
}

/// Elementwise `Pbreve / Pbar`.
pub fn ratio_matrix(pbar: &BuiltMatrix, pbreve: &BuiltMatrix) -> Result<RationalMatrix> {
    if pbar.spec != pbreve.spec
        || pbar.column_index_map != pbreve.column_index_map
        || pbar.matrix.rows() != pbreve.matrix.rows()
    {
        return Err(Error::Shape("matrices built on different specs or draws".into()));
    }
    let m = &pbar.matrix;
    let mut r = RationalMatrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let den = m.get(i, j);
            if den.is_zero() {
                return Err(Error::Internal(format!("zero probability at ({i}, {j})")));
            }
            r.set(i, j, pbreve.matrix.get(i, j) / den);
        }
    }
    Ok(r)
}

/// True iff `Pbreve = D1 * Pbar * D2` for diagonal `D1`, `D2`, i.e. the
/// elementwise ratio has rank one.
pub fn ratio_rank1_check(pbar: &BuiltMatrix, pbreve: &BuiltMatrix) -> Result<bool> {
    Ok(ratio_matrix(pbar, pbreve)?.rank() == 1)
}

/// Polynomialized matrix of the no-covariate model (`b = 1`, so `P_{g,t} = u_g`).
///
/// AR(1): `(1+cu)^{T-1} u^{y^S} prod_{t<T} ((1+u)/(1+cu))^{y_t}`.
/// AR(2): prefactor `(1+c1 u)^{e1} (1+c2 u)^{e2} (1+c1 c2 u)^{e12}` times
/// `u^{y^S}` and the `y_{t-1}`-grouped ratios, with exponents depending on
/// `y_0` only.
pub fn build_pddot(
    spec: &ModelSpec,
    draws: &AlphaDraws,
    c: &[Rational],
    b: &[Rational],
) -> Result<BuiltMatrix> {
    if !(1..=2).contains(&spec.p) {
        return Err(Error::UnsupportedLag(spec.p));
    }
    check_common(spec, draws, c, b)?;
    if b.iter().any(|x| !x.is_one()) {
        return Err(Error::InvalidParams(
            "the polynomialized matrix is defined for the model without covariates (b = 1)".into(),
        ));
    }
    let outcomes: Vec<Outcome> = all_outcomes(spec.horizon).collect();
    let rows = draws
        .u_list
        .iter()
        .map(|u| {
            outcomes
                .iter()
                .map(|y| match spec.p {
                    1 => pddot_ar1(y, spec.horizon, u, &c[0]),
                    _ => pddot_ar2(y, spec, u, &c[0], &c[1]),
                })
                .collect()
        })
        .collect();
    Ok(BuiltMatrix {
        kind: MatrixKind::Pddot,
        spec: spec.clone(),
        matrix: RationalMatrix::from_rows(rows)?,
        column_index_map: full_index_map(spec.horizon),
    })
}

fn pddot_ar1(y: &Outcome, horizon: usize, u: &Rational, c: &Rational) -> Rational {
    let one = Rational::one();
    let cu1 = &one + c * u;
    let mut v = pow(&cu1, horizon - 1) * pow(u, y.sum());
    let ratio = (&one + u) / &cu1;
    for t in 1..horizon {
        if y.y(t) {
            v *= &ratio;
        }
    }
    v
}

/// Prefactor exponents `(e1, e2, e12)` of the AR(2) polynomialized matrix.
pub fn pddot_ar2_exponents(horizon: usize, y0: bool) -> (usize, usize, usize) {
    if y0 {
        ((horizon - 1) / 2, (horizon - 2) / 2, horizon - 1)
    } else {
        (horizon / 2, (horizon - 1) / 2, horizon - 2)
    }
}

fn pddot_ar2(y: &Outcome, spec: &ModelSpec, u: &Rational, c1: &Rational, c2: &Rational) -> Rational {
    let one = Rational::one();
    let t_max = spec.horizon;
    let y0 = spec.init.get(0);
    let yy = |t: usize| if t == 0 { y0 } else { y.y(t) };
    let a1 = &one + c1 * u;
    let a2 = &one + c2 * u;
    let a12 = &one + c1 * c2 * u;
    let ou = &one + u;
    let (e1, e2, e12) = pddot_ar2_exponents(t_max, y0);
    let mut v = pow(&a1, e1) * pow(&a2, e2) * pow(&a12, e12) * pow(u, y.sum());
    if yy(t_max - 1) {
        v *= if yy(t_max - 2) { &ou / &a12 } else { &ou / &a1 };
    }
    for t in 2..t_max {
        if yy(t - 1) {
            v *= if yy(t - 2) {
                &ou / &a12
            } else {
                &ou * &ou / (&a1 * &a2)
            };
        }
    }
    v
}

fn pow(x: &Rational, k: usize) -> Rational {
    let mut out = Rational::one();
    for _ in 0..k {
        out *= x;
    }
    out
}

/// Outcome indices of the `2T` columns behind the AR(1) lower bound:
/// slot `2k` (0-based) holds the outcome whose first `k` entries are one,
/// slot `2k+1` the outcome whose last `k+1` entries are one, `k = 0..T-1`.
pub fn lemma1_columns(horizon: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(2 * horizon);
    for k in 0..horizon {
        let first: usize = (0..k).map(|t| 1usize << t).sum();
        let last: usize = (horizon - k - 1..horizon).map(|t| 1usize << t).sum();
        out.push(first + 1);
        out.push(last + 1);
    }
    out
}

/// A random `2T`-column selection: the all-zero and
/// all-one outcomes, and for each `k = 1..T-1` one outcome with `k` ones and
/// `y_T = 0` plus one with `k` ones and `y_T = 1`.
pub fn split_last_selection<R: Rng>(horizon: usize, rng: &mut R) -> Vec<usize> {
    let mut by_class: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(), Vec::new()]; horizon + 1];
    for y in all_outcomes(horizon) {
        by_class[y.sum()][y.y(horizon) as usize].push(y.index());
    }
    let mut out = vec![1, 1usize << horizon];
    for class in by_class.iter().take(horizon).skip(1) {
        for by_last in class {
            out.push(*by_last.choose(rng).expect("class nonempty for 0<k<T"));
        }
    }
    out
}

/// The square `2T x 2T` lower-bound matrix at `beta = 0`, with
/// `X_g = u_g (1+u_g)/(1+c u_g)`: slot `2k` is `X^k`, slot `2k+1` is `u X^k`.
pub fn build_ptilde(horizon: usize, draws: &AlphaDraws, c: &Rational) -> Result<BuiltMatrix> {
    if horizon < 2 {
        return Err(Error::InvalidSpec(format!("T={horizon} < 2")));
    }
    if draws.len() != 2 * horizon {
        return Err(Error::DrawCount {
            expected: 2 * horizon,
            got: draws.len(),
        });
    }
    draws.validate()?;
    if c.is_one() {
        return Err(Error::InvalidParams("c = 1 (gamma = 0) is excluded".into()));
    }
    let one = Rational::one();
    let rows = draws
        .u_list
        .iter()
        .map(|u| {
            let x = u * (&one + u) / (&one + c * u);
            let mut row = Vec::with_capacity(2 * horizon);
            let mut xk = one.clone();
            for _ in 0..horizon {
                row.push(xk.clone());
                row.push(u * &xk);
                xk *= &x;
            }
            row
        })
        .collect();
    Ok(BuiltMatrix {
        kind: MatrixKind::Ptilde,
        spec: ModelSpec::new(1, horizon, &[0])?,
        matrix: RationalMatrix::from_rows(rows)?,
        column_index_map: lemma1_columns(horizon),
    })
}
