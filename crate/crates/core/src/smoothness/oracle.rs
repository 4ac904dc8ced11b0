//! Separation oracles over the `(n, z, m)` constraint families.

use rayon::prelude::*;

use super::{ObjectiveFamily, RowEval};
use crate::cost::{CostFunction, LoadCost};
use crate::error::Result;
use crate::lp::{Constraint, SeparationOracle};
use crate::scalar::Scalar;

/// Tabulated `f(0..=L)` with prefix sums and `n f(n)`, shared by all scans.
#[derive(Clone, Debug)]
pub struct CostValues<T> {
    values: Vec<T>,
    prefix: Vec<T>,
    sc_convex: bool,
}

impl<T: Scalar> CostValues<T> {
    pub fn tabulate<F: LoadCost<T> + ?Sized>(f: &F, max_load: usize) -> Result<Self> {
        let values = (0..=max_load).map(|i| f.at(i)).collect::<Result<Vec<T>>>()?;
        Ok(Self::from_values(values))
    }

    /// `f(i) = i^d`.
    pub fn power(d: u32, max_load: usize) -> Self {
        let f = CostFunction::Monomial { coeff: T::one(), degree: d };
        Self::tabulate(&f, max_load).expect("monomials are defined everywhere")
    }

    fn from_values(values: Vec<T>) -> Self {
        let mut prefix = Vec::with_capacity(values.len());
        let mut acc = T::zero();
        for v in &values {
            acc += *v;
            prefix.push(acc);
        }
        let h = |n: usize| T::of_usize(n) * values[n];
        let sc_convex = (1..values.len().saturating_sub(1)).all(|m| h(m + 1) - h(m) >= h(m) - h(m - 1));
        Self { values, prefix, sc_convex }
    }

    pub fn max_load(&self) -> usize {
        self.values.len() - 1
    }

    pub fn value(&self, i: usize) -> T {
        self.values[i]
    }

    /// `f(z+1) + ... + f(z+k)`.
    pub fn range_sum(&self, z: usize, k: usize) -> T {
        self.prefix[z + k] - self.prefix[z]
    }

    pub fn h(&self, family: ObjectiveFamily, n: usize, z: usize) -> T {
        match family {
            ObjectiveFamily::Potential => self.range_sum(z, n),
            ObjectiveFamily::SocialCost => T::of_usize(n) * self.values[n],
        }
    }

    /// Whether `m f(m)` has non-decreasing increments on the table.
    pub fn sc_convex(&self) -> bool {
        self.sc_convex
    }
}

/// Upper end of the `m` range of a row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MBound {
    /// `m <= b`.
    Fixed(usize),
    /// `m + z <= b`.
    Total(usize),
}

impl MBound {
    pub fn cap(&self, z: usize) -> usize {
        match *self {
            MBound::Fixed(b) => b,
            MBound::Total(b) => b.saturating_sub(z),
        }
    }
}

const ORACLE_TOL: f64 = 1e-9;

/// Worst row found by a scan: relative slack, `n`, `z`, `m`.
type Hit<T> = (T, usize, usize, usize);

/// Shared scan over rows `(n, z)` for a fixed candidate.
struct Scan<'a, T> {
    family: ObjectiveFamily,
    f: &'a CostValues<T>,
    mb: MBound,
    fp: &'a [T],
    lambda: T,
}

impl<'a, T: Scalar> Scan<'a, T> {
    fn row(&self, n: usize, z: usize, exhaustive: bool) -> Hit<T> {
        let row = RowEval::new(self.family, self.f, self.fp, self.lambda, n, z);
        let m_hi = self.mb.cap(z);
        let mut best = (T::infinity(), n, z, 0);
        let mut consider = |m: usize| {
            let r = row.relative(m);
            if r < best.0 {
                best = (r, n, z, m);
            }
        };
        if exhaustive || !row.convex() {
            (0..=m_hi).for_each(&mut consider);
        } else {
            let m = row.argmin(m_hi);
            for mm in m.saturating_sub(2)..=(m + 2).min(m_hi) {
                consider(mm);
            }
            consider(0);
        }
        best
    }

    fn cut(&self, n: usize, z: usize, m: usize, lambda_var: usize) -> Constraint<T> {
        let x = n + z;
        let mut terms = Vec::with_capacity(3);
        let hm = self.f.h(self.family, m, z);
        if !hm.is_zero() {
            terms.push((lambda_var, hm));
        }
        if m > 0 {
            terms.push((x + 1, -T::of_usize(m)));
        }
        if n > 0 {
            terms.push((x, T::of_usize(n)));
        }
        Constraint::ge(terms, self.f.h(self.family, n, z))
    }
}

fn pick<T: Scalar>(mut hits: Vec<Hit<T>>, limit: usize) -> Vec<Hit<T>> {
    let tol = -T::lit(ORACLE_TOL);
    hits.retain(|h| h.0 < tol);
    hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    hits.truncate(limit);
    hits
}

/// Oracle for `lambda h(m) - m f'(n+1) + n f'(n) >= h(n)`, `n <= max_n`.
///
/// Variables are `f'(0..=max_n+1)` at their load index and `lambda` at `lambda_var`.
#[derive(Clone, Debug)]
pub struct ScOracle<T> {
    pub f: CostValues<T>,
    pub max_n: usize,
    pub m_bound: MBound,
    pub lambda_var: usize,
}

impl<T: Scalar> ScOracle<T> {
    fn scan<'a>(&'a self, x: &'a [T]) -> Scan<'a, T> {
        Scan { family: ObjectiveFamily::SocialCost, f: &self.f, mb: self.m_bound, fp: x, lambda: x[self.lambda_var] }
    }

    fn hits(&self, x: &[T], exhaustive: bool) -> Vec<Hit<T>> {
        let s = self.scan(x);
        (0..=self.max_n).into_par_iter().map(|n| s.row(n, 0, exhaustive)).collect()
    }

    /// Smallest relative slack over the whole family at `x`.
    pub fn worst_relative(&self, x: &[T]) -> T {
        self.hits(x, false).into_iter().map(|h| h.0).fold(T::infinity(), T::min)
    }
}

impl<T: Scalar> SeparationOracle<T> for ScOracle<T> {
    fn most_violated(&self, x: &[T]) -> Option<Constraint<T>> {
        self.violated(x, 1).pop()
    }

    fn violated(&self, x: &[T], limit: usize) -> Vec<Constraint<T>> {
        let s = self.scan(x);
        pick(self.hits(x, false), limit)
            .into_iter()
            .map(|(_, n, z, m)| s.cut(n, z, m, self.lambda_var))
            .collect()
    }

    fn exhaustive_check(&self, x: &[T]) -> Option<Constraint<T>> {
        let s = self.scan(x);
        pick(self.hits(x, true), 1).pop().map(|(_, n, z, m)| s.cut(n, z, m, self.lambda_var))
    }
}

/// Oracle for the potential family
/// `lambda S(z, m) - m f'(n+z+1) + n f'(n+z) >= S(z, n)`, `n + z <= max_x`.
///
/// At most one row per value of `n + z` is reported per call.
#[derive(Clone, Debug)]
pub struct PhiOracle<T> {
    pub f: CostValues<T>,
    pub max_x: usize,
    pub m_bound: MBound,
    pub lambda_var: usize,
}

impl<T: Scalar> PhiOracle<T> {
    fn scan<'a>(&'a self, x: &'a [T]) -> Scan<'a, T> {
        Scan { family: ObjectiveFamily::Potential, f: &self.f, mb: self.m_bound, fp: x, lambda: x[self.lambda_var] }
    }

    fn hits(&self, x: &[T], exhaustive: bool) -> Vec<Hit<T>> {
        let s = self.scan(x);
        (0..=self.max_x)
            .into_par_iter()
            .map(|tot| {
                (0..=tot)
                    .map(|n| s.row(n, tot - n, exhaustive))
                    .fold((T::infinity(), 0, 0, 0), |a, b| if b.0 < a.0 { b } else { a })
            })
            .collect()
    }

    pub fn worst_relative(&self, x: &[T]) -> T {
        self.hits(x, false).into_iter().map(|h| h.0).fold(T::infinity(), T::min)
    }
}

impl<T: Scalar> SeparationOracle<T> for PhiOracle<T> {
    fn most_violated(&self, x: &[T]) -> Option<Constraint<T>> {
        self.violated(x, 1).pop()
    }

    fn violated(&self, x: &[T], limit: usize) -> Vec<Constraint<T>> {
        let s = self.scan(x);
        pick(self.hits(x, false), limit)
            .into_iter()
            .map(|(_, n, z, m)| s.cut(n, z, m, self.lambda_var))
            .collect()
    }

    fn exhaustive_check(&self, x: &[T]) -> Option<Constraint<T>> {
        let s = self.scan(x);
        pick(self.hits(x, true), 1).pop().map(|(_, n, z, m)| s.cut(n, z, m, self.lambda_var))
    }
}
