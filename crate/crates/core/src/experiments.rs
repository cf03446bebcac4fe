//! Small self-contained experiments: the square lower-bound matrix, the
//! polynomial coefficient report, and the diagonal-rescaling checks.

use num_traits::Zero;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builders::{build_pbar, build_pbreve, build_ptilde, split_last_selection, ratio_rank1_check};
use crate::draws::{derive_seed, random_nonunit, rng_from_seed, AlphaDraws};
use crate::error::{Error, Result};
use crate::exact_linalg::{rational_to_string, serde_rational_vec, Rational};
use crate::model::ModelSpec;
use crate::moments::{covariates_for, expected_span_rank, random_lag_coefficients, Covariates};
use crate::poly::{coefficient_matrix, pddot_polys, RationalPoly};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lemma1Trial {
    pub trial: usize,
    #[serde(with = "crate::exact_linalg::serde_rational")]
    pub c: Rational,
    /// Determinant of the square matrix, as `"p/q"`.
    pub det: String,
    pub nonzero: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lemma1Selection {
    pub init: String,
    pub columns: Vec<usize>,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lemma1Report {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub trials: Vec<Lemma1Trial>,
    pub selections: Vec<Lemma1Selection>,
    pub nonzero_dets: usize,
    pub full_rank_selections: usize,
}

impl Lemma1Report {
    pub fn passes(&self) -> bool {
        self.nonzero_dets == self.trials.len() && self.full_rank_selections == self.selections.len()
    }
}

/// Determinants of the `2T x 2T` lower-bound matrix over random draws, plus
/// the rank of randomly chosen column selections of the rescaled AR(1)
/// matrix with `2T` rows.
pub fn lemma1_experiment(horizon: usize, trials: usize, selections: usize, seed: u64) -> Result<Lemma1Report> {
    if horizon < 2 {
        return Err(Error::InvalidSpec(format!("T={horizon} < 2")));
    }
    let trials = (0..trials)
        .into_par_iter()
        .map(|k| {
            let s = derive_seed(seed, k as u64);
            let mut rng = rng_from_seed(s);
            let c = random_nonunit(&mut rng);
            let draws = AlphaDraws::random(2 * horizon, derive_seed(s, 1));
            let det = build_ptilde(horizon, &draws, &c)?.matrix.det()?;
            Ok(Lemma1Trial {
                trial: k,
                c,
                nonzero: !det.is_zero(),
                det: rational_to_string(&det),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let selections = (0..selections)
        .into_par_iter()
        .map(|k| {
            let s = derive_seed(seed ^ 0x005e_1ec7, k as u64);
            let mut rng = rng_from_seed(s);
            let y0 = rng.random_range(0..2u8);
            let c = random_nonunit(&mut rng);
            let columns = split_last_selection(horizon, &mut rng);
            let spec = ModelSpec::new(1, horizon, &[y0])?;
            let draws = AlphaDraws::random(2 * horizon, derive_seed(s, 1));
            let ones = vec![Rational::from_integer(1.into()); horizon];
            let pb = build_pbreve(&spec, &draws, &[c], &ones)?;
            let rank = pb.columns_for(&columns)?.rank();
            Ok(Lemma1Selection {
                init: y0.to_string(),
                columns,
                rank,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Lemma1Report {
        horizon,
        nonzero_dets: trials.iter().filter(|t| t.nonzero).count(),
        full_rank_selections: selections.iter().filter(|s| s.rank == 2 * horizon).count(),
        trials,
        selections,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyReport {
    pub p: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub init: String,
    #[serde(with = "serde_rational_vec")]
    pub c: Vec<Rational>,
    pub rank: usize,
    pub expected_rank: usize,
    /// Degree of each column polynomial in `u`, in outcome order.
    pub degrees: Vec<Option<usize>>,
    pub degree_bound: usize,
    /// Every power `0..=degree_bound` has a nonzero coefficient somewhere.
    pub all_powers_present: bool,
    pub polys: Vec<RationalPoly>,
}

impl PolyReport {
    pub fn passes(&self) -> bool {
        self.rank == self.expected_rank && self.degrees.iter().all(|d| d.is_none_or(|d| d <= self.degree_bound))
    }
}

/// Coefficient-matrix rank and column degrees of the polynomialized matrix.
pub fn poly_report(spec: &ModelSpec, c: &[Rational]) -> Result<PolyReport> {
    let (expected_rank, degree_bound) = match spec.p {
        1 => (2 * spec.horizon, 2 * spec.horizon - 1),
        2 => (3 * spec.horizon - 2, 3 * (spec.horizon - 1)),
        p => return Err(Error::UnsupportedLag(p)),
    };
    let polys = pddot_polys(spec, c)?;
    let m = coefficient_matrix(&polys);
    let all_powers_present = (0..=degree_bound).all(|k| k < m.rows() && m.row(k).iter().any(|x| !x.is_zero()));
    Ok(PolyReport {
        p: spec.p,
        horizon: spec.horizon,
        init: spec.init.to_string(),
        c: c.to_vec(),
        rank: m.rank(),
        expected_rank,
        degrees: polys.iter().map(RationalPoly::degree).collect(),
        degree_bound,
        all_powers_present,
        polys,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagonalRow {
    pub config: usize,
    pub p: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub init: String,
    pub covariates: Covariates,
    pub rank_pbar: usize,
    pub rank_pbreve: usize,
    pub ratio_rank1: bool,
}

impl DiagonalRow {
    pub fn passes(&self) -> bool {
        self.rank_pbar == self.rank_pbreve && self.ratio_rank1
    }
}

/// Random configurations comparing the probability matrix with its
/// rescaled form on shared draws. Horizons cycle through `p+1..=5`, initial
/// histories are drawn at random, covariates alternate between none and
/// generic.
pub fn diagonal_check(p: usize, configs: usize, seed: u64) -> Result<Vec<DiagonalRow>> {
    if !(1..=2).contains(&p) {
        return Err(Error::UnsupportedLag(p));
    }
    let horizons: Vec<usize> = (p + 1..=5).collect();
    (0..configs)
        .into_par_iter()
        .map(|k| {
            let s = derive_seed(seed, k as u64);
            let mut rng = rng_from_seed(s);
            let horizon = horizons[k % horizons.len()];
            let init: Vec<u8> = (0..p).map(|_| rng.random_range(0..2u8)).collect();
            let covariates = if k % 2 == 0 { Covariates::Beta0 } else { Covariates::Generic };
            let spec = ModelSpec::new(p, horizon, &init)?;
            let c = random_lag_coefficients(p, &mut rng);
            let b = covariates_for(covariates, horizon, &mut rng);
            let rows = expected_span_rank(p, horizon, covariates) + 4;
            let draws = AlphaDraws::random(rows, derive_seed(s, 1));
            let pbar = build_pbar(&spec, &draws, &c, &b)?;
            let pbreve = build_pbreve(&spec, &draws, &c, &b)?;
            Ok(DiagonalRow {
                config: k,
                p,
                horizon,
                init: spec.init.to_string(),
                covariates,
                rank_pbar: pbar.rank(),
                rank_pbreve: pbreve.rank(),
                ratio_rank1: ratio_rank1_check(&pbar, &pbreve)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_linalg::{int, rat};

    #[test]
    fn lemma1_small() {
        let r = lemma1_experiment(3, 5, 4, 1).unwrap();
        assert!(r.passes());
        assert_eq!(r.trials.len(), 5);
        assert!(r.selections.iter().all(|s| s.columns.len() == 6));
        assert_eq!(r, lemma1_experiment(3, 5, 4, 1).unwrap());
    }

    #[test]
    fn poly_report_ar1() {
        let spec = ModelSpec::new(1, 2, &[0]).unwrap();
        let r = poly_report(&spec, &[int(2)]).unwrap();
        assert_eq!((r.rank, r.expected_rank, r.degree_bound), (4, 4, 3));
        assert!(r.all_powers_present && r.passes());
        let spec = ModelSpec::new(2, 3, &[1, 0]).unwrap();
        let r = poly_report(&spec, &[rat(3, 2), int(5)]).unwrap();
        assert_eq!(r.rank, 7);
        assert!(r.passes());
    }

    #[test]
    fn diagonal_rows() {
        for p in 1..=2 {
            let rows = diagonal_check(p, 6, 3).unwrap();
            assert_eq!(rows.len(), 6);
            assert!(rows.iter().all(DiagonalRow::passes), "{rows:?}");
        }
    }
}
