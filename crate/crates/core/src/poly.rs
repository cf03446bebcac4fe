//! Columns of the no-covariate probability matrices as polynomials in the
//! fixed effect `u = e^alpha`.
//!
//! Once each column is a polynomial, the rank of the span over all `u` is the
//! rank of the coefficient matrix: evaluating at distinct points multiplies
//! it by a Vandermonde matrix. That gives an exact rank without sampling.

use std::collections::BTreeSet;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::builders::pddot_ar2_exponents;
use crate::error::{Error, Result};
use crate::exact_linalg::{serde_rational_vec, Rational, RationalMatrix};
use crate::model::{all_outcomes, ModelSpec, Outcome, MAX_LAG};
use crate::moments::{RankCertificate, RankMethod};

/// Univariate polynomial; `coefficients[k]` multiplies `u^k`. The zero
/// polynomial has no coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RationalPoly {
    #[serde(with = "serde_rational_vec")]
    coefficients: Vec<Rational>,
}

impl RationalPoly {
    pub fn new(mut coefficients: Vec<Rational>) -> Self {
        while coefficients.last().is_some_and(Zero::is_zero) {
            coefficients.pop();
        }
        Self { coefficients }
    }

    pub fn constant(c: Rational) -> Self {
        Self::new(vec![c])
    }

    pub fn one() -> Self {
        Self::constant(Rational::one())
    }

    /// `a + b u`.
    pub fn linear(a: Rational, b: Rational) -> Self {
        Self::new(vec![a, b])
    }

    /// `u^k`.
    pub fn monomial(k: usize) -> Self {
        let mut c = vec![Rational::zero(); k + 1];
        c[k] = Rational::one();
        Self::new(c)
    }

    pub fn coefficients(&self) -> &[Rational] {
        &self.coefficients
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coefficients.len().checked_sub(1)
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.coefficients.is_empty() || other.coefficients.is_empty() {
            return Self::new(Vec::new());
        }
        let mut out = vec![Rational::zero(); self.coefficients.len() + other.coefficients.len() - 1];
        for (i, a) in self.coefficients.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coefficients.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn pow(&self, k: usize) -> Self {
        (0..k).fold(Self::one(), |acc, _| acc.mul(self))
    }

    pub fn scale(&self, s: &Rational) -> Self {
        Self::new(self.coefficients.iter().map(|c| c * s).collect())
    }

    /// Horner evaluation.
    pub fn eval(&self, u: &Rational) -> Rational {
        self.coefficients
            .iter()
            .rev()
            .fold(Rational::zero(), |acc, c| acc * u + c)
    }
}

fn factor_power(base: &RationalPoly, have: usize, cancel: usize, what: &str) -> Result<RationalPoly> {
    let k = have.checked_sub(cancel).ok_or_else(|| {
        Error::Internal(format!(
            "{what}: {cancel} denominator factors exceed prefactor power {have}"
        ))
    })?;
    Ok(base.pow(k))
}

/// Expanded polynomial of column `h` of the polynomialized matrix
/// (`build_pddot`) for lag order 1 or 2 at fixed lag coefficients `c`.
pub fn column_poly(spec: &ModelSpec, h: usize, c: &[Rational]) -> Result<RationalPoly> {
    spec.validate()?;
    if c.len() != spec.p {
        return Err(Error::InvalidParams(format!("{} lag coefficients for p={}", c.len(), spec.p)));
    }
    let y = Outcome::from_index(h, spec.horizon)?;
    let t_max = spec.horizon;
    let one = Rational::one();
    let u_pow = RationalPoly::monomial(y.sum());
    match spec.p {
        1 => {
            // (1+cu)^{T-1-n} (1+u)^n u^{y^S}, n = #{t < T : y_t = 1}
            let n = (1..t_max).filter(|&t| y.y(t)).count();
            let cu = RationalPoly::linear(one.clone(), c[0].clone());
            let ou = RationalPoly::linear(one.clone(), one);
            Ok(factor_power(&cu, t_max - 1, n, "1+cu")?
                .mul(&ou.pow(n))
                .mul(&u_pow))
        }
        2 => {
            let y0 = spec.init.get(0);
            let yy = |t: usize| if t == 0 { y0 } else { y.y(t) };
            // denominators of (1+c1 u), (1+c2 u), (1+c1 c2 u) and numerator (1+u)
            let (mut n1, mut n2, mut n12, mut nu) = (0, 0, 0, 0);
            if yy(t_max - 1) {
                nu += 1;
                if yy(t_max - 2) {
                    n12 += 1;
                } else {
                    n1 += 1;
                }
            }
            for t in 2..t_max {
                if yy(t - 1) {
                    if yy(t - 2) {
                        nu += 1;
                        n12 += 1;
                    } else {
                        nu += 2;
                        n1 += 1;
                        n2 += 1;
                    }
                }
            }
            let (e1, e2, e12) = pddot_ar2_exponents(t_max, y0);
            let a1 = RationalPoly::linear(one.clone(), c[0].clone());
            let a2 = RationalPoly::linear(one.clone(), c[1].clone());
            let a12 = RationalPoly::linear(one.clone(), &c[0] * &c[1]);
            let ou = RationalPoly::linear(one.clone(), one);
            Ok(factor_power(&a1, e1, n1, "1+c1 u")?
                .mul(&factor_power(&a2, e2, n2, "1+c2 u")?)
                .mul(&factor_power(&a12, e12, n12, "1+c1 c2 u")?)
                .mul(&ou.pow(nu))
                .mul(&u_pow))
        }
        p => Err(Error::UnsupportedLag(p)),
    }
}

/// Polynomial of column `h` of the probability matrix at `b = 1` after
/// multiplying every row by `prod_{t=1}^T prod_{s in S} (1 + s u)`, where
/// `S` is the set of distinct lag shifts `prod_l c_l^{y_{t-l}}`. This is a
/// diagonal rescaling of the probability matrix itself, for any lag order
/// up to the exploratory maximum, including the static model.
pub fn pbar_column_poly(spec: &ModelSpec, h: usize, c: &[Rational]) -> Result<RationalPoly> {
    spec.validate()?;
    if spec.p > MAX_LAG {
        return Err(Error::UnsupportedLag(spec.p));
    }
    if c.len() != spec.p {
        return Err(Error::InvalidParams(format!("{} lag coefficients for p={}", c.len(), spec.p)));
    }
    let shifts = shift_values(spec.p, c);
    let y = Outcome::from_index(h, spec.horizon)?;
    let one = Rational::one();
    let mut poly = RationalPoly::monomial(y.sum());
    for t in 1..=spec.horizon {
        let mut s = one.clone();
        for (l, cl) in (1..=spec.p).zip(c) {
            if y.lagged(&spec.init, t, l) {
                s *= cl;
            }
        }
        if y.y(t) {
            poly = poly.scale(&s);
        }
        for other in shifts.iter().filter(|&v| v != &s) {
            poly = poly.mul(&RationalPoly::linear(one.clone(), other.clone()));
        }
    }
    Ok(poly)
}

fn shift_values(p: usize, c: &[Rational]) -> BTreeSet<Rational> {
    (0..1usize << p)
        .map(|mask| {
            (0..p)
                .filter(|l| (mask >> l) & 1 == 1)
                .fold(Rational::one(), |acc, l| acc * &c[l])
        })
        .collect()
}

/// Coefficient matrix: row `k` holds the `u^k` coefficients of every column
/// polynomial, columns in `h` order.
pub fn coefficient_matrix(polys: &[RationalPoly]) -> RationalMatrix {
    let rows = polys
        .iter()
        .filter_map(RationalPoly::degree)
        .max()
        .map_or(0, |d| d + 1);
    let mut m = RationalMatrix::zeros(rows, polys.len());
    for (j, p) in polys.iter().enumerate() {
        for (k, v) in p.coefficients().iter().enumerate() {
            m.set(k, j, v.clone());
        }
    }
    m
}

pub fn pddot_polys(spec: &ModelSpec, c: &[Rational]) -> Result<Vec<RationalPoly>> {
    all_outcomes(spec.horizon)
        .map(|y| column_poly(spec, y.index(), c))
        .collect()
}

pub fn pbar_polys(spec: &ModelSpec, c: &[Rational]) -> Result<Vec<RationalPoly>> {
    all_outcomes(spec.horizon)
        .map(|y| pbar_column_poly(spec, y.index(), c))
        .collect()
}

fn exact_certificate(rank: usize) -> RankCertificate {
    RankCertificate {
        claimed_rank: rank,
        method: RankMethod::PolynomialExact,
        draws_used: 0,
        seeds: Vec::new(),
        stable_across_trials: true,
    }
}

/// Exact rank of the span of the polynomialized matrix's columns.
pub fn coeff_matrix_rank(spec: &ModelSpec, c: &[Rational]) -> Result<RankCertificate> {
    let polys = pddot_polys(spec, c)?;
    Ok(exact_certificate(coefficient_matrix(&polys).rank()))
}

/// Exact span rank of the no-covariate probability matrix via
/// [`pbar_column_poly`].
pub fn pbar_coeff_rank(spec: &ModelSpec, c: &[Rational]) -> Result<RankCertificate> {
    let polys = pbar_polys(spec, c)?;
    Ok(exact_certificate(coefficient_matrix(&polys).rank()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::build_pddot;
    use crate::draws::{random_nonunit, rng_from_seed, AlphaDraws};
    use crate::exact_linalg::{int, rat};
    use crate::model::{prob_general, ExpParams};

    fn ints(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&x| int(x)).collect()
    }

    #[test]
    fn poly_arithmetic() {
        let p = RationalPoly::linear(int(1), int(2));
        assert_eq!(p.pow(2).coefficients(), ints(&[1, 4, 4]).as_slice());
        assert_eq!(p.eval(&int(3)), int(7));
        assert_eq!(RationalPoly::new(ints(&[0, 0])).degree(), None);
        assert_eq!(
            serde_json::to_string(&p).unwrap(),
            r#"["1/1","2/1"]"#
        );
    }

    #[test]
    fn ar1_column_examples() {
        let spec = ModelSpec::new(1, 2, &[0]).unwrap();
        let c = [int(2)];
        assert_eq!(column_poly(&spec, 1, &c).unwrap().coefficients(), ints(&[1, 2]).as_slice());
        assert_eq!(
            column_poly(&spec, 4, &c).unwrap().coefficients(),
            ints(&[0, 0, 1, 1]).as_slice()
        );
    }

    #[test]
    fn ar1_degree_bound_and_all_powers() {
        let mut rng = rng_from_seed(5);
        for t in 2..=7 {
            let spec = ModelSpec::new(1, t, &[1]).unwrap();
            let c = [random_nonunit(&mut rng)];
            let polys = pddot_polys(&spec, &c).unwrap();
            let max = polys.iter().filter_map(RationalPoly::degree).max().unwrap();
            assert_eq!(max, 2 * t - 1);
            assert_eq!(polys.last().unwrap().degree(), Some(2 * t - 1));
            let powers: BTreeSet<usize> = polys
                .iter()
                .flat_map(|p| {
                    p.coefficients()
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| !v.is_zero())
                        .map(|(k, _)| k)
                        .collect::<Vec<_>>()
                })
                .collect();
            assert_eq!(powers, (0..2 * t).collect());
        }
    }

    #[test]
    fn ar2_degree_bound() {
        for t in 3..=5 {
            for y0 in 0..2u8 {
                let spec = ModelSpec::new(2, t, &[y0, 1]).unwrap();
                let polys = pddot_polys(&spec, &[rat(3, 2), rat(5, 7)]).unwrap();
                let max = polys.iter().filter_map(RationalPoly::degree).max().unwrap();
                assert_eq!(max, 3 * (t - 1));
                assert_eq!(polys.last().unwrap().degree(), Some(3 * (t - 1)));
            }
        }
    }

    #[test]
    fn coeff_rank_examples() {
        let spec = ModelSpec::new(1, 2, &[0]).unwrap();
        let cert = coeff_matrix_rank(&spec, &[int(2)]).unwrap();
        assert_eq!(cert.claimed_rank, 4);
        assert_eq!(cert.method, RankMethod::PolynomialExact);
        let polys = pddot_polys(&spec, &[int(2)]).unwrap();
        // determinant of the 4x4 coefficient matrix is c - 1
        assert_eq!(coefficient_matrix(&polys).det().unwrap(), int(1));
        let polys3 = pddot_polys(&spec, &[int(3)]).unwrap();
        assert_eq!(coefficient_matrix(&polys3).det().unwrap(), int(2));
        assert_eq!(coeff_matrix_rank(&spec, &[int(1)]).unwrap().claimed_rank, 3);
    }

    #[test]
    fn ar2_coeff_rank() {
        let mut rng = rng_from_seed(17);
        for t in 3..=5 {
            for y0 in 0..2u8 {
                let c = [random_nonunit(&mut rng), random_nonunit(&mut rng)];
                let spec = ModelSpec::new(2, t, &[y0, 0]).unwrap();
                assert_eq!(coeff_matrix_rank(&spec, &c).unwrap().claimed_rank, 3 * t - 2);
            }
        }
    }

    #[test]
    fn pddot_evaluation_consistency() {
        let d = AlphaDraws::random(5, 2);
        for (p, t, init) in [(1, 4, vec![0u8]), (1, 3, vec![1]), (2, 4, vec![1, 0]), (2, 3, vec![0, 1])] {
            let spec = ModelSpec::new(p, t, &init).unwrap();
            let c: Vec<Rational> = [rat(4, 3), rat(2, 9)][..p].to_vec();
            let m = build_pddot(&spec, &d, &c, &vec![int(1); t]).unwrap();
            for (j, poly) in pddot_polys(&spec, &c).unwrap().iter().enumerate() {
                for (g, u) in d.u_list.iter().enumerate() {
                    assert_eq!(&poly.eval(u), m.matrix.get(g, j));
                }
            }
        }
    }

    #[test]
    fn pbar_poly_is_row_rescaled_probability() {
        let mut rng = rng_from_seed(8);
        for (p, t) in [(0usize, 3usize), (1, 3), (2, 4), (3, 4)] {
            let c: Vec<Rational> = (0..p).map(|_| random_nonunit(&mut rng)).collect();
            let spec = ModelSpec::new(p, t, &vec![1u8; p]).unwrap();
            let polys = pbar_polys(&spec, &c).unwrap();
            let u = rat(7, 5);
            let params = ExpParams::new(u.clone(), c.clone(), vec![int(1); t]);
            // poly(u) / prob(u) = prod_t prod_s (1 + s u) for every column
            let ratios: BTreeSet<Rational> = all_outcomes(t)
                .map(|y| {
                    let pr = prob_general(&y, &spec, &params).unwrap();
                    polys[y.index() - 1].eval(&u) / pr
                })
                .collect();
            assert_eq!(ratios.len(), 1, "p={p} T={t}");
        }
    }

    #[test]
    fn coeff_rank_matches_sampled_rank() {
        let mut rng = rng_from_seed(23);
        let cells: Vec<(usize, usize)> = (2..=7)
            .map(|t| (1, t))
            .chain((3..=5).map(|t| (2, t)))
            .collect();
        for (p, t) in cells {
            let c: Vec<Rational> = (0..p).map(|_| random_nonunit(&mut rng)).collect();
            let spec = ModelSpec::new(p, t, &vec![0u8; p]).unwrap();
            let r = coeff_matrix_rank(&spec, &c).unwrap().claimed_rank;
            let d = AlphaDraws::random(r + 2, 300 + t as u64);
            let m = build_pddot(&spec, &d, &c, &vec![int(1); t]).unwrap();
            assert_eq!(m.rank(), r, "p={p} T={t}");
        }
    }
}
