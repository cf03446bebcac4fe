//! Model specification, outcome indexing and exact outcome probabilities.
//!
//! Parameters are carried in exponentiated form: `u = e^alpha`,
//! `c_l = e^{gamma_l}` and `b_t = e^{x_t' beta}`. The logistic index at period
//! `t` is then `b_t * u * prod_l c_l^{y_{t-l}}`, and every probability is a
//! rational function of those quantities.

use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exact_linalg::{serde_rational, serde_rational_vec, Rational};

/// Largest horizon for which outcomes are enumerated.
pub const MAX_HORIZON: usize = 16;

/// Lag orders accepted by [`prob_general`]; 3 is exploratory.
pub const MAX_LAG: usize = 3;

/// A binary vector stored as bits, written as a string such as `"101"` with
/// the first character holding the first element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVec01(Vec<bool>);

impl BitVec01 {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn from_u8(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidSpec(format!("bit value {other} not in {{0,1}}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }
}

impl fmt::Display for BitVec01 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitVec01 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|ch| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::InvalidSpec(format!("bad bit string {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl Serialize for BitVec01 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitVec01 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Lag order, horizon and the pre-sample history the model conditions on.
///
/// `init` lists the history most recent first: `init[0] = y_0`,
/// `init[1] = y_{-1}`, and so on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub p: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub init: BitVec01,
}

impl ModelSpec {
    pub fn new(p: usize, horizon: usize, init: &[u8]) -> Result<Self> {
        let spec = Self {
            p,
            horizon,
            init: BitVec01::from_u8(init)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn static_model(horizon: usize) -> Result<Self> {
        Self::new(0, horizon, &[])
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::InvalidSpec(format!("T={} < 2", self.horizon)));
        }
        if self.horizon > MAX_HORIZON {
            return Err(Error::InvalidSpec(format!("T={} > {MAX_HORIZON}", self.horizon)));
        }
        if self.init.len() != self.p {
            return Err(Error::InvalidSpec(format!(
                "initial history has length {}, lag order is {}",
                self.init.len(),
                self.p
            )));
        }
        Ok(())
    }

    pub fn n_outcomes(&self) -> usize {
        1 << self.horizon
    }

    pub fn outcomes(&self) -> impl Iterator<Item = Outcome> + '_ {
        all_outcomes(self.horizon)
    }

    /// `init[0]` as a 0/1 value.
    pub fn y0(&self) -> u8 {
        self.init.get(0) as u8
    }

    /// Every admissible initial history for lag order `p`, in binary order.
    pub fn all_histories(p: usize) -> Vec<Vec<u8>> {
        (0..1usize << p)
            .map(|m| (0..p).map(|l| ((m >> l) & 1) as u8).collect())
            .collect()
    }
}

/// An outcome `y in {0,1}^T`; `y_t` is stored at position `t-1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Outcome(pub BitVec01);

impl Outcome {
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        BitVec01::from_u8(bits).map(Self)
    }

    pub fn horizon(&self) -> usize {
        self.0.len()
    }

    /// `y_t` for `t` in `1..=T`.
    pub fn y(&self, t: usize) -> bool {
        self.0.get(t - 1)
    }

    /// Number of ones, `y^S`.
    pub fn sum(&self) -> usize {
        self.0.bits().iter().filter(|&&b| b).count()
    }

    /// `h = 1 + sum_t 2^{t-1} y_t`.
    pub fn index(&self) -> usize {
        1 + self
            .0
            .bits()
            .iter()
            .enumerate()
            .map(|(t, &b)| (b as usize) << t)
            .sum::<usize>()
    }

    /// Inverse of [`Outcome::index`].
    pub fn from_index(h: usize, horizon: usize) -> Result<Self> {
        let max = 1usize << horizon;
        if h == 0 || h > max {
            return Err(Error::IndexOutOfRange { h, max });
        }
        let m = h - 1;
        Ok(Self(BitVec01::new(
            (0..horizon).map(|t| (m >> t) & 1 == 1).collect(),
        )))
    }

    /// `y_{t-l}` reaching into the initial history for non-positive periods.
    pub fn lagged(&self, init: &BitVec01, t: usize, l: usize) -> bool {
        if t > l {
            self.y(t - l)
        } else {
            init.get(l - t)
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub fn outcome_index(y: &Outcome) -> usize {
    y.index()
}

pub fn index_outcome(h: usize, horizon: usize) -> Result<Outcome> {
    Outcome::from_index(h, horizon)
}

/// All outcomes in increasing `h` order.
pub fn all_outcomes(horizon: usize) -> impl Iterator<Item = Outcome> {
    (1..=1usize << horizon).map(move |h| Outcome::from_index(h, horizon).expect("h in range"))
}

/// Exponentiated parameters at one fixed-effect value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpParams {
    #[serde(with = "serde_rational")]
    pub u: Rational,
    #[serde(with = "serde_rational_vec")]
    pub c: Vec<Rational>,
    #[serde(with = "serde_rational_vec")]
    pub b: Vec<Rational>,
}

impl ExpParams {
    pub fn new(u: Rational, c: Vec<Rational>, b: Vec<Rational>) -> Self {
        Self { u, c, b }
    }

    /// All of `alpha`, `gamma` and `x'beta` equal to zero.
    pub fn unit(spec: &ModelSpec) -> Self {
        Self {
            u: Rational::one(),
            c: vec![Rational::one(); spec.p],
            b: vec![Rational::one(); spec.horizon],
        }
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.c.len() != spec.p {
            return Err(Error::InvalidParams(format!(
                "{} lag coefficients for p={}",
                self.c.len(),
                spec.p
            )));
        }
        if self.b.len() != spec.horizon {
            return Err(Error::InvalidParams(format!(
                "{} covariate indices for T={}",
                self.b.len(),
                spec.horizon
            )));
        }
        let positive = |r: &Rational| r > &Rational::zero();
        if !positive(&self.u) || !self.c.iter().all(positive) || !self.b.iter().all(positive) {
            return Err(Error::InvalidParams("exponentiated parameters must be > 0".into()));
        }
        Ok(())
    }
}

fn logistic_factor(index: &Rational, y: bool) -> Rational {
    let denom = Rational::one() + index;
    if y {
        index / denom
    } else {
        denom.recip()
    }
}

fn check(y: &Outcome, spec: &ModelSpec, params: &ExpParams) -> Result<()> {
    spec.validate()?;
    params.validate(spec)?;
    if y.horizon() != spec.horizon {
        return Err(Error::InvalidSpec(format!(
            "outcome of length {} for T={}",
            y.horizon(),
            spec.horizon
        )));
    }
    Ok(())
}

/// AR(1) probability: `prod_t e_t^{y_t} / (1 + e_t)` with
/// `e_t = b_t * c^{y_{t-1}} * u`.
pub fn prob_ar1(y: &Outcome, spec: &ModelSpec, params: &ExpParams) -> Result<Rational> {
    if spec.p != 1 {
        return Err(Error::UnsupportedLag(spec.p));
    }
    check(y, spec, params)?;
    let c = &params.c[0];
    let mut prev = spec.init.get(0);
    let mut prob = Rational::one();
    for t in 1..=spec.horizon {
        let mut e = &params.b[t - 1] * &params.u;
        if prev {
            e *= c;
        }
        prob *= logistic_factor(&e, y.y(t));
        prev = y.y(t);
    }
    Ok(prob)
}

/// AR(2) probability with index `b_t * c1^{y_{t-1}} * c2^{y_{t-2}} * u`.
pub fn prob_ar2(y: &Outcome, spec: &ModelSpec, params: &ExpParams) -> Result<Rational> {
    if spec.p != 2 {
        return Err(Error::UnsupportedLag(spec.p));
    }
    check(y, spec, params)?;
    let (c1, c2) = (&params.c[0], &params.c[1]);
    // (y_{t-1}, y_{t-2})
    let (mut lag1, mut lag2) = (spec.init.get(0), spec.init.get(1));
    let mut prob = Rational::one();
    for t in 1..=spec.horizon {
        let mut e = &params.b[t - 1] * &params.u;
        if lag1 {
            e *= c1;
        }
        if lag2 {
            e *= c2;
        }
        prob *= logistic_factor(&e, y.y(t));
        lag2 = lag1;
        lag1 = y.y(t);
    }
    Ok(prob)
}

/// Probability for any supported lag order, including the static model.
pub fn prob_general(y: &Outcome, spec: &ModelSpec, params: &ExpParams) -> Result<Rational> {
    if spec.p > MAX_LAG {
        return Err(Error::UnsupportedLag(spec.p));
    }
    check(y, spec, params)?;
    let mut prob = Rational::one();
    for t in 1..=spec.horizon {
        let mut e = &params.b[t - 1] * &params.u;
        for (l, c) in (1..=spec.p).zip(&params.c) {
            if y.lagged(&spec.init, t, l) {
                e *= c;
            }
        }
        prob *= logistic_factor(&e, y.y(t));
    }
    Ok(prob)
}

/// Probabilities of every outcome in `h` order.
pub fn prob_vector(spec: &ModelSpec, params: &ExpParams) -> Result<Vec<Rational>> {
    spec.outcomes().map(|y| prob_general(&y, spec, params)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_linalg::{int, rat};
    use proptest::prelude::*;

    fn params(u: Rational, c: &[Rational], b: &[Rational]) -> ExpParams {
        ExpParams::new(u, c.to_vec(), b.to_vec())
    }

    #[test]
    fn outcome_index_examples() {
        let y = |b: &[u8]| Outcome::from_bits(b).unwrap().index();
        assert_eq!(y(&[0, 0, 0]), 1);
        assert_eq!(y(&[1, 0, 0]), 2);
        assert_eq!(y(&[1, 1, 1]), 8);
        assert!(matches!(
            Outcome::from_index(9, 3),
            Err(Error::IndexOutOfRange { h: 9, max: 8 })
        ));
        assert!(Outcome::from_index(0, 3).is_err());
    }

    #[test]
    fn outcome_string_form() {
        let y = Outcome::from_bits(&[1, 0, 1]).unwrap();
        assert_eq!(serde_json::to_string(&y).unwrap(), "\"101\"");
        assert_eq!(y.sum(), 2);
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new(1, 1, &[0]).is_err());
        assert!(ModelSpec::new(2, 3, &[0]).is_err());
        assert!(ModelSpec::new(1, 3, &[2]).is_err());
        let s = ModelSpec::new(2, 3, &[1, 0]).unwrap();
        assert_eq!(
            serde_json::to_string(&s).unwrap(),
            r#"{"p":2,"T":3,"init":"10"}"#
        );
    }

    #[test]
    fn ar1_fair_coin() {
        let spec = ModelSpec::new(1, 2, &[0]).unwrap();
        let p = ExpParams::unit(&spec);
        for y in spec.outcomes() {
            assert_eq!(prob_ar1(&y, &spec, &p).unwrap(), rat(1, 4));
        }
    }

    #[test]
    fn ar1_hand_values() {
        let spec = ModelSpec::new(1, 2, &[0]).unwrap();
        let p = params(int(1), &[int(2)], &[int(1), int(1)]);
        let y10 = Outcome::from_bits(&[1, 0]).unwrap();
        let y11 = Outcome::from_bits(&[1, 1]).unwrap();
        assert_eq!(prob_ar1(&y10, &spec, &p).unwrap(), rat(1, 6));
        assert_eq!(prob_ar1(&y11, &spec, &p).unwrap(), rat(1, 3));
    }

    #[test]
    fn ar2_hand_values() {
        let spec = ModelSpec::new(2, 3, &[1, 1]).unwrap();
        let unit = ExpParams::unit(&spec);
        for y in spec.outcomes() {
            assert_eq!(prob_ar2(&y, &spec, &unit).unwrap(), rat(1, 8));
        }
        let p = params(int(1), &[int(2), int(3)], &[int(1), int(1), int(1)]);
        let y000 = Outcome::from_bits(&[0, 0, 0]).unwrap();
        assert_eq!(prob_ar2(&y000, &spec, &p).unwrap(), rat(1, 56));
        let total: Rational = spec
            .outcomes()
            .map(|y| prob_ar2(&y, &spec, &p).unwrap())
            .sum();
        assert_eq!(total, int(1));
    }

    #[test]
    fn static_model_uniform() {
        let spec = ModelSpec::static_model(2).unwrap();
        let p = ExpParams::unit(&spec);
        for y in spec.outcomes() {
            assert_eq!(prob_general(&y, &spec, &p).unwrap(), rat(1, 4));
        }
    }

    #[test]
    fn wrong_lag_rejected() {
        let spec = ModelSpec::new(2, 3, &[0, 0]).unwrap();
        let p = ExpParams::unit(&spec);
        let y = Outcome::from_bits(&[0, 0, 0]).unwrap();
        assert!(matches!(prob_ar1(&y, &spec, &p), Err(Error::UnsupportedLag(2))));
        let spec4 = ModelSpec {
            p: 4,
            horizon: 5,
            init: BitVec01::from_u8(&[0, 0, 0, 0]).unwrap(),
        };
        let p4 = ExpParams::unit(&spec4);
        let y5 = Outcome::from_bits(&[0; 5]).unwrap();
        assert!(matches!(prob_general(&y5, &spec4, &p4), Err(Error::UnsupportedLag(4))));
    }

    #[test]
    fn monotone_in_fixed_effect() {
        let spec = ModelSpec::new(1, 3, &[1]).unwrap();
        let ones = Outcome::from_bits(&[1, 1, 1]).unwrap();
        let mut last = Rational::zero();
        for u in 1..6 {
            let p = params(int(u), &[rat(3, 2)], &[rat(1, 2), int(2), int(1)]);
            let v = prob_general(&ones, &spec, &p).unwrap();
            assert!(v > last);
            last = v;
        }
    }

    fn pos_rat() -> impl Strategy<Value = Rational> {
        (1i64..50, 1i64..50).prop_map(|(n, d)| rat(n, d))
    }

    fn config(p: usize) -> impl Strategy<Value = (ModelSpec, ExpParams)> {
        (2usize..6).prop_flat_map(move |t| {
            (
                prop::collection::vec(0u8..2, p),
                pos_rat(),
                prop::collection::vec(pos_rat(), p),
                prop::collection::vec(pos_rat(), t),
            )
                .prop_map(move |(init, u, c, b)| {
                    (ModelSpec::new(p, t, &init).unwrap(), ExpParams::new(u, c, b))
                })
        })
    }

    proptest! {
        #[test]
        fn index_roundtrip(t in 1usize..=10, seed in any::<u64>()) {
            let h = 1 + (seed as usize) % (1 << t);
            let y = Outcome::from_index(h, t).unwrap();
            prop_assert_eq!(y.index(), h);
            prop_assert_eq!(Outcome::from_index(y.index(), t).unwrap(), y);
        }

        #[test]
        fn ar1_matches_general((spec, p) in config(1)) {
            for y in spec.outcomes() {
                prop_assert_eq!(prob_ar1(&y, &spec, &p).unwrap(), prob_general(&y, &spec, &p).unwrap());
            }
        }

        #[test]
        fn ar2_matches_general((spec, p) in config(2)) {
            for y in spec.outcomes() {
                prop_assert_eq!(prob_ar2(&y, &spec, &p).unwrap(), prob_general(&y, &spec, &p).unwrap());
            }
        }

        #[test]
        fn normalized_and_positive((spec, p) in (0usize..=3).prop_flat_map(config)) {
            let probs = prob_vector(&spec, &p).unwrap();
            let total: Rational = probs.iter().sum();
            prop_assert_eq!(total, int(1));
            for v in probs {
                prop_assert!(v > int(0) && v < int(1));
            }
        }
    }
}
