//! Dense linear algebra over arbitrary-precision rationals.
//!
//! Rank and determinant use fraction-free (Bareiss) elimination on an
//! integer copy of the matrix: every row is scaled by the lcm of its
//! denominators, which changes neither the rank nor, up to a tracked factor,
//! the determinant. Nothing in this module touches floating point.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Formats as `"numerator/denominator"`, always with the slash.
pub fn rational_to_string(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Accepts `"p/q"` or a bare integer `"p"`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let bad = || Error::ParseRational(s.to_string());
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(Rational::new(n, d))
        }
        None => {
            let n: BigInt = s.parse().map_err(|_| bad())?;
            Ok(Rational::from_integer(n))
        }
    }
}

/// Serde adapter for a single rational stored as a `"p/q"` string.
pub mod serde_rational {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&rational_to_string(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(de::Error::custom)
    }
}

/// Serde adapter for `Vec<Rational>` as an array of `"p/q"` strings.
pub mod serde_rational_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
        let strs: Vec<String> = v.iter().map(rational_to_string).collect();
        strs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<Rational>, D::Error> {
        let strs = Vec::<String>::deserialize(d)?;
        strs.iter()
            .map(|s| parse_rational(s).map_err(de::Error::custom))
            .collect()
    }
}

/// Dense row-major matrix of rationals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Rational>,
}

impl RationalMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Rational>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Rational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Rational::one());
        }
        m
    }

    /// Builds from explicit rows; all rows must have equal length. An empty
    /// list gives a 0x0 matrix.
    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let n = rows.len();
        Ok(Self {
            rows: n,
            cols,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_i64_rows(rows: &[&[i64]]) -> Result<Self> {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&x| int(x)).collect())
                .collect(),
        )
    }

    /// Builds from columns of equal length `rows`.
    pub fn from_columns(rows: usize, columns: &[Vec<Rational>]) -> Result<Self> {
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Shape("ragged columns".into()));
        }
        let mut m = Self::zeros(rows, columns.len());
        for (j, col) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                m.set(i, j, v.clone());
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[Rational] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rational) {
        self.entries[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[Rational] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Rational> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn row_vecs(&self) -> Vec<Vec<Rational>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Zero::is_zero)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j).clone());
            }
        }
        t
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if !b.is_zero() {
                        let idx = i * out.cols + j;
                        out.entries[idx] += a * b;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut m = Self::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            for (jj, &j) in cols.iter().enumerate() {
                m.set(i, jj, self.get(i, j).clone());
            }
        }
        m
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let entries = rows.iter().flat_map(|&i| self.row(i).iter().cloned()).collect();
        Self {
            rows: rows.len(),
            cols: self.cols,
            entries,
        }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.rows == 0 {
            return Ok(other.clone());
        }
        if other.rows == 0 {
            return Ok(self.clone());
        }
        if self.cols != other.cols {
            return Err(Error::Shape(format!(
                "vstack of {} and {} columns",
                self.cols, other.cols
            )));
        }
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().cloned());
        Ok(Self {
            rows: self.rows + other.rows,
            cols: self.cols,
            entries,
        })
    }

    /// Exact rank over the rationals.
    pub fn rank(&self) -> usize {
        let mut a = self.integer_rows().0;
        bareiss_forward(&mut a, self.cols).rank
    }

    /// Exact determinant. Rejects non-square input.
    pub fn det(&self) -> Result<Rational> {
        if self.rows != self.cols {
            return Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        if n == 0 {
            return Ok(Rational::one());
        }
        let (mut a, scales) = self.integer_rows();
        let e = bareiss_forward(&mut a, n);
        if e.rank < n {
            return Ok(Rational::zero());
        }
        let mut d = a[n - 1][n - 1].clone();
        if e.swaps % 2 == 1 {
            d = -d;
        }
        // det(integer) = det(original) * prod(scales)
        let mut out = Rational::from_integer(d);
        for s in scales {
            out /= s;
        }
        Ok(out)
    }

    /// Reduced row echelon form and the pivot columns.
    pub fn rref(&self) -> (RationalMatrix, Vec<usize>) {
        let mut a = self.integer_rows().0;
        let e = bareiss_forward(&mut a, self.cols);
        a.truncate(e.rank);
        back_eliminate(&mut a, &e.pivots);

        let mut out = Self::zeros(self.rows, self.cols);
        for (i, (row, &p)) in a.iter().zip(&e.pivots).enumerate() {
            let piv = row[p].clone();
            for (j, v) in row.iter().enumerate() {
                if !v.is_zero() {
                    out.set(i, j, Rational::new(v.clone(), piv.clone()));
                }
            }
        }
        (out, e.pivots)
    }

    /// Basis of `{x : self * x = 0}` as columns, in canonical form.
    ///
    /// Eliminating with the column order reversed puts the free variables on
    /// the earliest possible coordinates, and every pivot variable then only
    /// depends on earlier free ones. The resulting basis already is the
    /// reduced column echelon form, so no second elimination is needed.
    pub fn nullspace(&self) -> RationalMatrix {
        let n = self.cols;
        let rev: Vec<usize> = (0..n).rev().collect();
        let (r, pivots) = self.select_columns(&rev).rref();
        // back to original coordinates
        let pivots: Vec<usize> = pivots.iter().map(|&p| n - 1 - p).collect();
        let mut is_pivot = vec![false; n];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        let free: Vec<usize> = (0..n).filter(|&j| !is_pivot[j]).collect();
        let mut basis = Self::zeros(n, free.len());
        for (k, &f) in free.iter().enumerate() {
            basis.set(f, k, Rational::one());
            for (i, &p) in pivots.iter().enumerate() {
                let v = r.get(i, n - 1 - f);
                if !v.is_zero() {
                    basis.set(p, k, -v.clone());
                }
            }
        }
        basis
    }

    /// Unique reduced column echelon representative of the column space:
    /// each column has a unit pivot on the lowest possible row index, and
    /// every other column is zero on that row. Dependent columns are dropped,
    /// so the output has `rank` columns.
    pub fn rref_canonicalize(&self) -> RationalMatrix {
        let (r, pivots) = self.transpose().rref();
        r.select_rows(&(0..pivots.len()).collect::<Vec<_>>()).transpose()
    }

    /// Integer copy with each row multiplied by the lcm of its denominators
    /// and divided by the gcd of the resulting numerators. Returns the rows
    /// and the rational factor each row was multiplied by.
    fn integer_rows(&self) -> (Vec<Vec<BigInt>>, Vec<Rational>) {
        let mut rows = Vec::with_capacity(self.rows);
        let mut scales = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let row = self.row(i);
            let l = row
                .iter()
                .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
            let mut ints: Vec<BigInt> = row
                .iter()
                .map(|x| x.numer() * (&l / x.denom()))
                .collect();
            let g = content(&ints);
            if !g.is_zero() && !g.is_one() {
                for v in ints.iter_mut() {
                    *v /= &g;
                }
            }
            let scale = if g.is_zero() {
                Rational::from_integer(l)
            } else {
                Rational::new(l, g)
            };
            rows.push(ints);
            scales.push(scale);
        }
        (rows, scales)
    }
}

impl fmt::Display for RationalMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let cells: Vec<String> = self.row(i).iter().map(|x| x.to_string()).collect();
            writeln!(f, "[{}]", cells.join(", "))?;
        }
        Ok(())
    }
}

impl Serialize for RationalMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<String>> = (0..self.rows)
            .map(|i| self.row(i).iter().map(rational_to_string).collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for RationalMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<String>>::deserialize(d)?;
        let parsed = rows
            .iter()
            .map(|r| r.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()
            .map_err(de::Error::custom)?;
        RationalMatrix::from_rows(parsed).map_err(de::Error::custom)
    }
}

fn content(v: &[BigInt]) -> BigInt {
    v.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x))
}

struct Echelon {
    rank: usize,
    pivots: Vec<usize>,
    swaps: usize,
}

/// In-place Bareiss elimination to row echelon form. Pivot choice is the
/// first nonzero entry at or below the current row. Column skipping keeps
/// every intermediate entry a minor of the input, so the divisions are exact.
fn bareiss_forward(a: &mut [Vec<BigInt>], ncols: usize) -> Echelon {
    let nrows = a.len();
    let mut prev = BigInt::one();
    let mut r = 0;
    let mut pivots = Vec::new();
    let mut swaps = 0;
    for col in 0..ncols {
        if r == nrows {
            break;
        }
        let Some(p) = (r..nrows).find(|&i| !a[i][col].is_zero()) else {
            continue;
        };
        if p != r {
            a.swap(p, r);
            swaps += 1;
        }
        let (top, rest) = a.split_at_mut(r + 1);
        let pivot_row = &top[r];
        let piv = &pivot_row[col];
        for row in rest.iter_mut() {
            let lead = std::mem::take(&mut row[col]);
            for j in col + 1..ncols {
                let mut v = piv * &row[j];
                if !lead.is_zero() && !pivot_row[j].is_zero() {
                    v -= &lead * &pivot_row[j];
                }
                if !prev.is_one() {
                    v /= &prev;
                }
                row[j] = v;
            }
        }
        prev = a[r][col].clone();
        pivots.push(col);
        r += 1;
    }
    Echelon {
        rank: r,
        pivots,
        swaps,
    }
}

/// Clears entries above each pivot with integer row operations, dividing
/// every touched row by its content to keep entries small.
fn back_eliminate(a: &mut [Vec<BigInt>], pivots: &[usize]) {
    for (i, &p) in pivots.iter().enumerate().rev() {
        let (above, from_i) = a.split_at_mut(i);
        let prow = &from_i[0];
        let piv = &prow[p];
        for row in above.iter_mut() {
            if row[p].is_zero() {
                continue;
            }
            let lead = row[p].clone();
            let g = piv.gcd(&lead);
            let mul_row = piv / &g;
            let mul_piv = &lead / &g;
            for (x, y) in row.iter_mut().zip(prow.iter()) {
                *x = &*x * &mul_row - y * &mul_piv;
            }
            let c = content(row);
            if !c.is_zero() && !c.is_one() {
                for x in row.iter_mut() {
                    *x /= &c;
                }
            }
        }
    }
    // normalize sign so pivots are positive
    for (row, &p) in a.iter_mut().zip(pivots) {
        if row[p].is_negative() {
            for x in row.iter_mut() {
                *x = -&*x;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vandermonde(nodes: &[i64]) -> RationalMatrix {
        let n = nodes.len();
        let rows = nodes
            .iter()
            .map(|&x| (0..n).map(|k| int(x.pow(k as u32))).collect())
            .collect();
        RationalMatrix::from_rows(rows).unwrap()
    }

    /// Cofactor expansion; exponential but independent of the elimination code.
    fn det_laplace(m: &RationalMatrix) -> Rational {
        let n = m.rows();
        if n == 0 {
            return Rational::one();
        }
        if n == 1 {
            return m.get(0, 0).clone();
        }
        let mut total = Rational::zero();
        for j in 0..n {
            let keep: Vec<usize> = (0..n).filter(|&c| c != j).collect();
            let minor = m.select_rows(&(1..n).collect::<Vec<_>>()).select_columns(&keep);
            let term = m.get(0, j) * det_laplace(&minor);
            if j % 2 == 0 {
                total += term;
            } else {
                total -= term;
            }
        }
        total
    }

    #[test]
    fn rank_identity_and_proportional() {
        assert_eq!(RationalMatrix::identity(3).rank(), 3);
        let m = RationalMatrix::from_i64_rows(&[&[1, 2], &[2, 4]]).unwrap();
        assert_eq!(m.rank(), 1);
    }

    #[test]
    fn vandermonde_rank_matches_det_oracle() {
        let v = vandermonde(&[1, 2, 3, 4]);
        // prod_{i<j}(x_j - x_i) = 1*2*3*1*2*1 = 12
        assert_eq!(det_laplace(&v), int(12));
        assert_eq!(v.det().unwrap(), int(12));
        assert_eq!(v.rank(), 4);
    }

    #[test]
    fn det_small_cases() {
        assert_eq!(RationalMatrix::identity(4).det().unwrap(), int(1));
        let m = RationalMatrix::from_i64_rows(&[&[1, 2], &[3, 4]]).unwrap();
        assert_eq!(m.det().unwrap(), int(-2));
        let m = RationalMatrix::from_i64_rows(&[&[1, 2, 3]]).unwrap();
        assert!(matches!(m.det(), Err(Error::NotSquare { rows: 1, cols: 3 })));
    }

    #[test]
    fn det_with_fractions_and_swaps() {
        let m = RationalMatrix::from_rows(vec![
            vec![int(0), rat(1, 2), int(3)],
            vec![rat(2, 3), int(0), int(1)],
            vec![int(5), rat(-7, 4), int(0)],
        ])
        .unwrap();
        assert_eq!(m.det().unwrap(), det_laplace(&m));
    }

    #[test]
    fn nullspace_full_rank_is_empty() {
        let b = RationalMatrix::identity(2).nullspace();
        assert_eq!((b.rows(), b.cols()), (2, 0));
    }

    #[test]
    fn nullspace_single_constraint() {
        let m = RationalMatrix::from_i64_rows(&[&[1, 1]]).unwrap();
        let b = m.nullspace();
        assert_eq!(b, RationalMatrix::from_i64_rows(&[&[1], &[-1]]).unwrap());
    }

    #[test]
    fn nullspace_of_row_vector() {
        let m = RationalMatrix::from_i64_rows(&[&[1, 2, 3, 4]]).unwrap();
        let b = m.nullspace();
        assert_eq!(b.cols(), 3);
        assert!(m.mul(&b).unwrap().is_zero());
        assert_eq!(b.rank(), 3);
    }

    #[test]
    fn canonicalize_is_idempotent_and_basis_invariant() {
        let b = RationalMatrix::from_i64_rows(&[&[1, 2], &[3, 1], &[0, 5], &[2, 2]]).unwrap();
        let c = b.rref_canonicalize();
        assert_eq!(c.rref_canonicalize(), c);
        let g = RationalMatrix::from_i64_rows(&[&[2, 1], &[1, 1]]).unwrap();
        assert_eq!(b.mul(&g).unwrap().rref_canonicalize(), c);
    }

    #[test]
    fn canonical_pivots_are_unit() {
        let b = RationalMatrix::from_i64_rows(&[
            &[0, 0],
            &[2, 4],
            &[1, 3],
            &[5, 7],
            &[1, 1],
            &[3, 9],
        ])
        .unwrap();
        let c = b.rref_canonicalize();
        assert_eq!(c.cols(), 2);
        // first column pivots on row 1, second on row 2
        assert_eq!(c.get(0, 0), &int(0));
        assert_eq!(c.get(1, 0), &int(1));
        assert_eq!(c.get(1, 1), &int(0));
        assert_eq!(c.get(2, 1), &int(1));
        assert_eq!(c.get(2, 0), &int(0));
    }

    #[test]
    fn rational_strings() {
        assert_eq!(rational_to_string(&rat(-3, 7)), "-3/7");
        assert_eq!(rational_to_string(&int(2)), "2/1");
        assert_eq!(parse_rational("6/-4").unwrap(), rat(-3, 2));
        assert_eq!(parse_rational("5").unwrap(), int(5));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn matrix_json_roundtrip() {
        let m = RationalMatrix::from_rows(vec![vec![rat(1, 2), int(-3)], vec![int(0), rat(7, 9)]])
            .unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"[["1/2","-3/1"],["0/1","7/9"]]"#);
        let back: RationalMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    fn small_matrix() -> impl Strategy<Value = RationalMatrix> {
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            prop::collection::vec((-4i64..5, 1i64..4), r * c).prop_map(move |v| {
                let entries = v
                    .into_iter()
                    // a few structural zeros make rank deficiency common
                    .map(|(n, d)| if n.abs() == 4 { int(0) } else { rat(n, d) })
                    .collect();
                RationalMatrix::new(r, c, entries).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn rank_is_transpose_invariant(m in small_matrix()) {
            prop_assert_eq!(m.rank(), m.transpose().rank());
        }

        #[test]
        fn rank_nullity(m in small_matrix()) {
            let b = m.nullspace();
            prop_assert_eq!(m.cols(), m.rank() + b.cols());
            if b.cols() > 0 {
                prop_assert!(m.mul(&b).unwrap().is_zero());
                prop_assert_eq!(b.rank(), b.cols());
            }
            prop_assert_eq!(b.rref_canonicalize(), b);
        }

        #[test]
        fn det_nonzero_iff_full_rank(m in small_matrix()) {
            let n = m.rows().min(m.cols());
            let sq = m.select_rows(&(0..n).collect::<Vec<_>>())
                .select_columns(&(0..n).collect::<Vec<_>>());
            let d = sq.det().unwrap();
            prop_assert_eq!(d.clone(), det_laplace(&sq));
            prop_assert_eq!(!d.is_zero(), sq.rank() == n);
        }

        #[test]
        fn rank_ignores_row_order(m in small_matrix()) {
            let rev: Vec<usize> = (0..m.rows()).rev().collect();
            prop_assert_eq!(m.rank(), m.select_rows(&rev).rank());
        }
    }
}
