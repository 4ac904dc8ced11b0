//! Smoothness constraints, the LPs that optimize modified costs, and certificates.
//!
//! Two objective families are supported. For the potential, `h(n)` with offset
//! `z` is `f(z+1) + ... + f(z+n)`; for the social cost, `h(n) = n f(n)`.

mod lp;
mod oracle;
mod truncated;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::cost::{CostFunction, LoadCost, ModifiedCost};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use lp::{
    build_lp_phi, build_lp_sc, certificate_from_solution, lp_phi_lazy, lp_sc_lazy, sc_objective, solve_lp_phi,
    solve_lp_sc, FVAR_OFFSET,
};
pub use oracle::{CostValues, MBound, PhiOracle, ScOracle};
pub use truncated::{
    build_lp_phi_truncated, build_lp_sc_truncated, certify_monomial, certify_polynomial, TruncatedLp,
    TruncatedSolution, DEFAULT_K_PHI, DEFAULT_K_SC,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObjectiveFamily {
    Potential,
    SocialCost,
}

impl ObjectiveFamily {
    /// `h(n)` for one resource; `z` is the subgame offset and only matters for the potential.
    pub fn h<T: Scalar, F: LoadCost<T> + ?Sized>(&self, f: &F, n: usize, z: usize) -> Result<T> {
        match self {
            ObjectiveFamily::Potential => {
                let mut acc = T::zero();
                for i in z + 1..=z + n {
                    acc += f.at(i)?;
                }
                Ok(acc)
            }
            ObjectiveFamily::SocialCost => Ok(T::of_usize(n) * f.at(n)?),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectiveFamily::Potential => "potential",
            ObjectiveFamily::SocialCost => "social_cost",
        }
    }
}

impl fmt::Display for ObjectiveFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectiveFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "potential" => Ok(ObjectiveFamily::Potential),
            "social_cost" => Ok(ObjectiveFamily::SocialCost),
            other => Err(Error::Certificate(format!("unknown objective family {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scope {
    Plain,
    Strong,
}

impl Scope {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scope::Plain => "plain",
            Scope::Strong => "strong",
        }
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Scope::Plain),
            "strong" => Ok(Scope::Strong),
            other => Err(Error::Certificate(format!("unknown scope {other:?}"))),
        }
    }
}

/// `lambda h(m) - m f'(n+1) + n f'(n) - h(n)`, with `h` tabulated from load 0.
pub fn eval_sc_constraint<T: Scalar, F: LoadCost<T> + ?Sized>(
    h: &[T],
    fprime: &F,
    n: usize,
    m: usize,
    lambda: T,
) -> Result<T> {
    if n >= h.len() || m >= h.len() {
        return Err(Error::IndexOutOfRange(format!(
            "(n, m) = ({n}, {m}) outside the tabulated objective 0..{}",
            h.len()
        )));
    }
    Ok(sc_slack(lambda, h[m], h[n], T::of_usize(n), T::of_usize(m), fprime.at(n)?, fprime.at(n + 1)?))
}

/// Strong-smoothness slack for the potential:
/// `lambda S(z, m) - m f'(n+z+1) + n f'(n+z) - S(z, n)` with `S(z, k) = f(z+1) + ... + f(z+k)`.
pub fn eval_phi_constraint<T: Scalar, F: LoadCost<T> + ?Sized, G: LoadCost<T> + ?Sized>(
    f: &F,
    fprime: &G,
    n: usize,
    z: usize,
    m: usize,
    lambda: T,
) -> Result<T> {
    let hm = ObjectiveFamily::Potential.h(f, m, z)?;
    let hn = ObjectiveFamily::Potential.h(f, n, z)?;
    Ok(sc_slack(lambda, hm, hn, T::of_usize(n), T::of_usize(m), fprime.at(n + z)?, fprime.at(n + z + 1)?))
}

#[inline]
pub(crate) fn sc_slack<T: Scalar>(lambda: T, hm: T, hn: T, n: T, m: T, f0: T, f1: T) -> T {
    lambda * hm - m * f1 + n * f0 - hn
}

#[inline]
pub(crate) fn slack_scale<T: Scalar>(lambda: T, hm: T, hn: T, n: T, m: T, f0: T, f1: T) -> T {
    T::one().max((lambda * hm).abs()).max((m * f1).abs()).max((n * f0).abs()).max(hn.abs())
}

/// Modified costs for every resource together with the factor they certify.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothnessCertificate<T> {
    pub lambda: T,
    pub objective: ObjectiveFamily,
    pub scope: Scope,
    pub fprime: Vec<ModifiedCost<T>>,
    /// Tail factor of a truncated certificate: `f'(n) = nu n^d` beyond `k`.
    pub nu: Option<T>,
    pub k: Option<usize>,
}

/// One constraint instance: resource, load `n`, offset `z`, deviators `m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Witness {
    pub resource: usize,
    pub n: usize,
    pub z: usize,
    pub m: usize,
}

#[derive(Clone, Debug)]
pub struct CertificateCheck<T> {
    pub valid: bool,
    /// Smallest slack relative to the magnitude of its terms.
    pub worst_slack: T,
    pub witness: Option<Witness>,
    /// Constraints whose relative slack is within the tolerance of zero (capped).
    pub binding: Vec<Witness>,
    /// First sandwich violation `f <= f' <= lambda f`, checked for strong scope.
    pub sandwich_violation: Option<(usize, usize)>,
}

/// Ranges scanned by [`verify_certificate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerifyBounds {
    /// Largest `n + z` (social cost: largest `n`).
    pub max_nz: usize,
    /// Largest `m`.
    pub max_m: usize,
    /// Also require `m + z <= max_nz`.
    pub cap_m_by_total: bool,
}

impl VerifyBounds {
    pub fn square(n: usize) -> Self {
        Self { max_nz: n, max_m: n, cap_m_by_total: false }
    }
}

pub const VERIFY_TOL: f64 = 1e-8;
const MAX_BINDING: usize = 64;

/// Scans every constraint of the certificate's family over `bounds`.
///
/// Without `exhaustive`, the scan over `m` is replaced by the exact minimizer
/// where the slack is convex in `m`; otherwise every `m` is evaluated.
pub fn verify_certificate<T: Scalar>(
    cert: &SmoothnessCertificate<T>,
    costs: &[CostFunction<T>],
    bounds: VerifyBounds,
    exhaustive: bool,
) -> Result<CertificateCheck<T>> {
    if costs.len() != cert.fprime.len() {
        return Err(Error::Certificate(format!(
            "{} cost functions for {} modified tables",
            costs.len(),
            cert.fprime.len()
        )));
    }
    let tol = T::lit(VERIFY_TOL);
    let mut worst = T::infinity();
    let mut witness = None;
    let mut binding = Vec::new();
    let mut sandwich_violation = None;
    for (e, (f, fp)) in costs.iter().zip(&cert.fprime).enumerate() {
        let fvals = CostValues::tabulate(f, bounds.max_nz + bounds.max_m + 1)?;
        let fpv: Vec<T> = (0..=bounds.max_nz + 1).map(|n| fp.at(n)).collect::<Result<_>>()?;
        if cert.scope == Scope::Strong && sandwich_violation.is_none() {
            for i in 1..fpv.len().min(fvals.max_load() + 1) {
                let fi = fvals.value(i);
                let slackness = tol * T::one().max(fi);
                if fpv[i] < fi - slackness || fpv[i] > cert.lambda * fi + slackness {
                    sandwich_violation = Some((e, i));
                    break;
                }
            }
        }
        let rows: Vec<(usize, usize)> = match cert.objective {
            ObjectiveFamily::SocialCost => (0..=bounds.max_nz).map(|n| (n, 0)).collect(),
            ObjectiveFamily::Potential => (0..=bounds.max_nz)
                .flat_map(|x| (0..=x).map(move |n| (n, x - n)))
                .collect(),
        };
        let results: Vec<(T, Witness, Vec<Witness>)> = rows
            .par_iter()
            .map(|&(n, z)| {
                let m_hi = if bounds.cap_m_by_total {
                    bounds.max_m.min(bounds.max_nz - z)
                } else {
                    bounds.max_m
                };
                let row = RowEval::new(cert.objective, &fvals, &fpv, cert.lambda, n, z);
                let ms: Vec<usize> = if exhaustive || !row.convex() {
                    (0..=m_hi).collect()
                } else {
                    let m = row.argmin(m_hi);
                    let mut v: Vec<usize> = (m.saturating_sub(1)..=(m + 1).min(m_hi)).collect();
                    v.extend([0, 1.min(m_hi)]);
                    v
                };
                let mut best = T::infinity();
                let mut best_m = 0;
                let mut bind = Vec::new();
                for m in ms {
                    let rel = row.relative(m);
                    if rel < best {
                        best = rel;
                        best_m = m;
                    }
                    if rel.abs() <= tol && bind.len() < MAX_BINDING {
                        bind.push(Witness { resource: e, n, z, m });
                    }
                }
                (best, Witness { resource: e, n, z, m: best_m }, bind)
            })
            .collect();
        for (s, w, b) in results {
            if s < worst {
                worst = s;
                witness = Some(w);
            }
            for w in b {
                if binding.len() < MAX_BINDING && !binding.contains(&w) {
                    binding.push(w);
                }
            }
        }
    }
    Ok(CertificateCheck {
        valid: worst >= -tol && sandwich_violation.is_none(),
        worst_slack: worst,
        witness,
        binding,
        sandwich_violation,
    })
}

/// One `(n, z)` row of either family, evaluated at varying `m`.
pub(crate) struct RowEval<'a, T> {
    family: ObjectiveFamily,
    f: &'a CostValues<T>,
    lambda: T,
    n: usize,
    z: usize,
    hn: T,
    f0: T,
    f1: T,
}

impl<'a, T: Scalar> RowEval<'a, T> {
    pub(crate) fn new(family: ObjectiveFamily, f: &'a CostValues<T>, fp: &[T], lambda: T, n: usize, z: usize) -> Self {
        let hn = f.h(family, n, z);
        Self { family, f, lambda, n, z, hn, f0: fp[n + z], f1: fp[n + z + 1] }
    }

    pub(crate) fn relative(&self, m: usize) -> T {
        let hm = self.f.h(self.family, m, self.z);
        let (n, mm) = (T::of_usize(self.n), T::of_usize(m));
        sc_slack(self.lambda, hm, self.hn, n, mm, self.f0, self.f1)
            / slack_scale(self.lambda, hm, self.hn, n, mm, self.f0, self.f1)
    }

    pub(crate) fn convex(&self) -> bool {
        match self.family {
            ObjectiveFamily::Potential => true,
            ObjectiveFamily::SocialCost => self.f.sc_convex(),
        }
    }

    /// Minimizer over `0..=m_hi` of a slack that is convex in `m`.
    pub(crate) fn argmin(&self, m_hi: usize) -> usize {
        // slack(m+1) - slack(m) = lambda (h(m+1) - h(m)) - f'(n+z+1), non-decreasing in m.
        let inc = |m: usize| {
            self.lambda * (self.f.h(self.family, m + 1, self.z) - self.f.h(self.family, m, self.z)) - self.f1
        };
        let (mut lo, mut hi) = (0usize, m_hi);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if inc(mid) >= T::zero() {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }
}

/// Smallest load from which the closed-form tail inequality holds up to `10^6`.
pub fn verify_tail_lemma<T: Scalar>(d: u32, lambda: T, family: ObjectiveFamily) -> Result<usize> {
    if !(1..=5).contains(&d) {
        return Err(Error::DegreeOutOfRange(d));
    }
    const BOUND: usize = 1_000_000;
    let dd = d as i32;
    let holds = |x: usize| -> bool {
        let x = T::of_usize(x);
        let x1 = x + T::one();
        match family {
            ObjectiveFamily::Potential => {
                let nu = lambda.powf(T::one() / T::of_usize(d as usize + 1));
                let den = x.powi(dd + 1) - x1.powi(dd) + x.powi(dd);
                den > T::zero() && x1.powi(dd + 1) / den <= nu
            }
            ObjectiveFamily::SocialCost => {
                let dp1 = T::of_usize(d as usize + 1);
                let nu = (dp1 * lambda).powf(T::one() / dp1);
                (x1 / x).powi(dd + 1) * (T::one() - T::one() / dp1) <= nu - T::one()
            }
        }
    };
    if !holds(BOUND) {
        return Err(Error::TailNeverHolds(BOUND));
    }
    let mut x = BOUND;
    while x > 1 && holds(x - 1) {
        x -= 1;
    }
    Ok(x)
}

/// Certificate for every resource of a game. Polynomial costs go through
/// `monomial` (which may cache), tabulated ones through the finite LP over loads
/// up to `players + 1`, the table padded with its last value so every deviation
/// load has a constrained `f'`. `lambda` is the largest per-resource factor.
pub fn certify_game<T: Scalar>(
    costs: &[CostFunction<T>],
    family: ObjectiveFamily,
    players: usize,
    mut monomial: impl FnMut(u32) -> Result<SmoothnessCertificate<T>>,
) -> Result<SmoothnessCertificate<T>> {
    let scope = match family {
        ObjectiveFamily::Potential => Scope::Strong,
        ObjectiveFamily::SocialCost => Scope::Plain,
    };
    let mut lambda = T::one();
    let mut fprime = Vec::with_capacity(costs.len());
    for f in costs {
        let cert = match f.monomial_terms() {
            Some(terms) if terms.is_empty() => {
                fprime.push(ModifiedCost::identity(f, players + 1)?);
                continue;
            }
            Some(_) => certify_polynomial(f, &mut monomial)?,
            None => {
                let top = players + 1;
                let f = f.padded(top);
                match family {
                    ObjectiveFamily::SocialCost => solve_lp_sc(&f, top, true)?.0,
                    ObjectiveFamily::Potential => solve_lp_phi(&f, top, true)?.0,
                }
            }
        };
        if cert.objective != family {
            return Err(Error::Certificate("monomial certificate for the wrong objective".into()));
        }
        lambda = lambda.max(cert.lambda);
        fprime.extend(cert.fprime);
    }
    Ok(SmoothnessCertificate { lambda, objective: family, scope, fprime, nu: None, k: None })
}

/// `lambda / (1 - mu)`: the factor a `(lambda, mu)`-smooth game certifies with `mu` folded in.
pub fn rescale_mu<T: Scalar>(lambda: T, mu: T) -> Result<T> {
    if !(mu < T::one()) || mu < T::zero() {
        return Err(Error::Certificate(format!("mu = {mu} must lie in [0, 1)")));
    }
    Ok(lambda / (T::one() - mu))
}
