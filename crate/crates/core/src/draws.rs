//! Seeded random rational draws for fixed effects and parameters.

use std::collections::BTreeSet;

use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_linalg::{rat, serde_rational_vec, Rational};

/// Numerators and denominators of random rationals lie in `1..=DRAW_BOUND`.
pub const DRAW_BOUND: i64 = 10_000;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a stream label so related jobs get unrelated
/// streams (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn random_positive_rational<R: Rng>(rng: &mut R) -> Rational {
    rat(rng.random_range(1..=DRAW_BOUND), rng.random_range(1..=DRAW_BOUND))
}

/// Random positive rational different from one, for lag coefficients
/// (`gamma != 0`).
pub fn random_nonunit<R: Rng>(rng: &mut R) -> Rational {
    loop {
        let r = random_positive_rational(rng);
        if !r.is_one() {
            return r;
        }
    }
}

/// `n` pairwise distinct positive rationals not contained in `exclude`.
pub fn random_distinct<R: Rng>(rng: &mut R, n: usize, exclude: &[Rational]) -> Vec<Rational> {
    let mut seen: BTreeSet<Rational> = exclude.iter().cloned().collect();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let r = random_positive_rational(rng);
        if seen.insert(r.clone()) {
            out.push(r);
        }
    }
    out
}

/// Fixed-effect values `u_g = e^{alpha_g}` indexing the rows of a
/// probability matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphaDraws {
    #[serde(with = "serde_rational_vec")]
    pub u_list: Vec<Rational>,
    pub seed: u64,
}

impl AlphaDraws {
    pub fn new(u_list: Vec<Rational>, seed: u64) -> Result<Self> {
        let d = Self { u_list, seed };
        d.validate()?;
        Ok(d)
    }

    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        Self {
            u_list: random_distinct(&mut rng, n, &[]),
            seed,
        }
    }

    /// Fresh draws avoiding every value in `self`.
    pub fn fresh(&self, n: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        Self {
            u_list: random_distinct(&mut rng, n, &self.u_list),
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.u_list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_list.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.u_list.iter().any(|u| u <= &Rational::from_integer(0.into())) {
            return Err(Error::InvalidParams("fixed-effect draws must be > 0".into()));
        }
        let set: BTreeSet<&Rational> = self.u_list.iter().collect();
        if set.len() != self.u_list.len() {
            return Err(Error::DuplicateDraws);
        }
        Ok(())
    }

    /// Same draws multiplied by a common positive factor.
    pub fn scaled(&self, factor: &Rational) -> Self {
        Self {
            u_list: self.u_list.iter().map(|u| u * factor).collect(),
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_deterministic_and_distinct() {
        let a = AlphaDraws::random(40, 7);
        assert_eq!(a, AlphaDraws::random(40, 7));
        assert_ne!(a, AlphaDraws::random(40, 8));
        a.validate().unwrap();
        let f = a.fresh(50, 9);
        assert!(f.u_list.iter().all(|u| !a.u_list.contains(u)));
    }

    #[test]
    fn duplicates_rejected() {
        let u = vec![rat(1, 2), rat(2, 4)];
        assert!(matches!(AlphaDraws::new(u, 0), Err(Error::DuplicateDraws)));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(5, 3), derive_seed(5, 3));
    }
}
