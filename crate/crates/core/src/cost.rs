//! Per-resource cost functions.
//!
//! Loads are 1-based: `f(1)` is the cost a lone user sees. Every cost family
//! evaluates load `0` to zero, which is what the potential and social-cost
//! sums need for unused resources.

use crate::error::{Error, Result};
use crate::scalar::{powu, Scalar};

/// Anything that maps a load to a cost.
pub trait LoadCost<T: Scalar> {
    fn at(&self, load: usize) -> Result<T>;

    /// `f(1) + ... + f(n)`.
    fn partial_sum(&self, n: usize) -> Result<T> {
        let mut acc = T::zero();
        for i in 1..=n {
            acc += self.at(i)?;
        }
        Ok(acc)
    }
}

/// A non-negative, non-decreasing resource cost function.
#[derive(Clone, Debug, PartialEq)]
pub enum CostFunction<T> {
    /// `values[i - 1] = f(i)` for `i` in `1..=values.len()`.
    Table { values: Vec<T> },
    /// `coeff * x^degree`.
    Monomial { coeff: T, degree: u32 },
    /// `sum_i coeffs[i] * x^i`.
    Polynomial { coeffs: Vec<T> },
}

impl<T: Scalar> CostFunction<T> {
    pub fn table(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidCost("empty cost table".into()));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < T::zero() {
                return Err(Error::InvalidCost(format!("f({}) = {v} is not a finite non-negative value", i + 1)));
            }
            if i > 0 && *v < values[i - 1] {
                return Err(Error::InvalidCost(format!(
                    "table decreases between load {} and {}",
                    i,
                    i + 1
                )));
            }
        }
        Ok(CostFunction::Table { values })
    }

    /// A table extended to `len` loads by repeating its last value; other kinds unchanged.
    pub fn padded(&self, len: usize) -> Self {
        match self {
            CostFunction::Table { values } if values.len() < len => {
                let mut values = values.clone();
                values.resize(len, *values.last().expect("tables are non-empty"));
                CostFunction::Table { values }
            }
            _ => self.clone(),
        }
    }

    pub fn monomial(coeff: T, degree: u32) -> Result<Self> {
        if !coeff.is_finite() || coeff < T::zero() {
            return Err(Error::InvalidCost(format!("coefficient {coeff} must be finite and non-negative")));
        }
        Ok(CostFunction::Monomial { coeff, degree })
    }

    pub fn polynomial(coeffs: Vec<T>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidCost("polynomial without coefficients".into()));
        }
        if let Some(c) = coeffs.iter().find(|c| !c.is_finite() || **c < T::zero()) {
            return Err(Error::InvalidCost(format!("coefficient {c} must be finite and non-negative")));
        }
        Ok(CostFunction::Polynomial { coeffs })
    }

    /// `f(x) = x`.
    pub fn linear() -> Self {
        CostFunction::Monomial { coeff: T::one(), degree: 1 }
    }

    /// `f(x) = c` for every positive load.
    pub fn constant(c: T) -> Result<Self> {
        Self::monomial(c, 0)
    }

    /// Largest load the function is defined for; `None` when unbounded.
    pub fn max_load(&self) -> Option<usize> {
        match self {
            CostFunction::Table { values } => Some(values.len()),
            _ => None,
        }
    }

    /// Highest power with a non-zero coefficient, for the polynomial kinds.
    pub fn degree(&self) -> Option<u32> {
        self.monomial_terms()
            .map(|terms| terms.iter().map(|&(d, _)| d).max().unwrap_or(0))
    }

    /// Non-zero `(degree, coefficient)` terms of a polynomial kind.
    pub fn monomial_terms(&self) -> Option<Vec<(u32, T)>> {
        match self {
            CostFunction::Table { .. } => None,
            CostFunction::Monomial { coeff, degree } => Some(if *coeff > T::zero() {
                vec![(*degree, *coeff)]
            } else {
                Vec::new()
            }),
            CostFunction::Polynomial { coeffs } => Some(
                coeffs
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| **c > T::zero())
                    .map(|(d, c)| (d as u32, *c))
                    .collect(),
            ),
        }
    }

    /// Evaluates a polynomial kind at a real argument.
    fn eval_poly(&self, x: T) -> T {
        match self {
            CostFunction::Monomial { coeff, degree } => *coeff * powu(x, *degree),
            CostFunction::Polynomial { coeffs } => {
                coeffs.iter().rev().fold(T::zero(), |acc, c| acc * x + *c)
            }
            CostFunction::Table { .. } => unreachable!("tables are evaluated by index"),
        }
    }
}

impl<T: Scalar> LoadCost<T> for CostFunction<T> {
    fn at(&self, load: usize) -> Result<T> {
        if load == 0 {
            return Ok(T::zero());
        }
        match self {
            CostFunction::Table { values } => values
                .get(load - 1)
                .copied()
                .ok_or(Error::LoadOutOfRange { load, max: values.len() }),
            _ => Ok(self.eval_poly(T::of_usize(load))),
        }
    }
}

/// Modified cost `f'` of one resource: an explicit table for loads `0..=len-1`
/// and an optional polynomial tail used beyond it.
#[derive(Clone, Debug, PartialEq)]
pub struct ModifiedCost<T> {
    values: Vec<T>,
    tail: Option<Vec<T>>,
}

impl<T: Scalar> ModifiedCost<T> {
    /// `values[n] = f'(n)`; `values[0]` is ignored and stored as zero.
    pub fn from_table(mut values: Vec<T>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Certificate("modified cost table needs at least load 1".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < T::zero()) {
            return Err(Error::Certificate(format!("modified cost value {v} is negative or not finite")));
        }
        values[0] = T::zero();
        Ok(Self { values, tail: None })
    }

    /// Adds the tail `f'(n) = sum_j tail[j] n^j` for loads past the table.
    pub fn with_tail(mut self, tail: Vec<T>) -> Self {
        self.tail = Some(tail);
        self
    }

    /// The unmodified function, tabulated up to `max_load`.
    pub fn identity(f: &CostFunction<T>, max_load: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(max_load + 1);
        for n in 0..=max_load {
            values.push(f.at(n)?);
        }
        let mut m = Self::from_table(values)?;
        if let Some(terms) = f.monomial_terms() {
            let deg = terms.iter().map(|&(d, _)| d as usize).max().unwrap_or(0);
            let mut tail = vec![T::zero(); deg + 1];
            for (d, c) in terms {
                tail[d as usize] += c;
            }
            m.tail = Some(tail);
        }
        Ok(m)
    }

    /// `f(n) * factor` tabulated up to `max_load`, keeping a polynomial tail.
    pub fn scaled(f: &CostFunction<T>, factor: T, max_load: usize) -> Result<Self> {
        Ok(Self::identity(f, max_load)?.scale(factor))
    }

    pub fn scale(self, factor: T) -> Self {
        Self {
            values: self.values.iter().map(|v| *v * factor).collect(),
            tail: self.tail.map(|t| t.iter().map(|c| *c * factor).collect()),
        }
    }

    /// `sum_k weights[k] * parts[k]`, tabulated to the longest part.
    pub fn combine(parts: &[(T, &ModifiedCost<T>)]) -> Result<Self> {
        let len = parts.iter().map(|(_, p)| p.values.len()).max().unwrap_or(2).max(2);
        let mut values = vec![T::zero(); len];
        for (w, p) in parts {
            for (n, v) in values.iter_mut().enumerate() {
                *v += *w * p.at(n)?;
            }
        }
        let tail = if parts.iter().all(|(_, p)| p.tail.is_some()) {
            let deg = parts.iter().map(|(_, p)| p.tail.as_ref().unwrap().len()).max().unwrap_or(1);
            let mut t = vec![T::zero(); deg];
            for (w, p) in parts {
                for (j, c) in p.tail.as_ref().unwrap().iter().enumerate() {
                    t[j] += *w * *c;
                }
            }
            Some(t)
        } else {
            None
        };
        let mut m = Self::from_table(values)?;
        m.tail = tail;
        Ok(m)
    }

    /// Largest load covered by the explicit table.
    pub fn table_len(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn tail(&self) -> Option<&[T]> {
        self.tail.as_deref()
    }

    /// Re-tabulates so that loads `0..=max_load` are explicit.
    pub fn tabulated(&self, max_load: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(max_load + 1);
        for n in 0..=max_load {
            values.push(self.at(n)?);
        }
        Ok(Self { values, tail: self.tail.clone() })
    }
}

impl<T: Scalar> LoadCost<T> for ModifiedCost<T> {
    fn at(&self, load: usize) -> Result<T> {
        if load == 0 {
            return Ok(T::zero());
        }
        if let Some(v) = self.values.get(load) {
            return Ok(*v);
        }
        match &self.tail {
            Some(t) => {
                let x = T::of_usize(load);
                Ok(t.iter().rev().fold(T::zero(), |acc, c| acc * x + *c))
            }
            None => Err(Error::LoadOutOfRange { load, max: self.table_len() }),
        }
    }
}
