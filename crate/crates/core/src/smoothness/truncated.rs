//! K-truncated LPs for monomial costs `f(x) = x^d`, glued to the tail `f'(n) = nu n^d`.
//!
//! Variables are `f'(0..=K)` at their load index and `lambda` at `K + 1`.

use super::oracle::{CostValues, MBound, PhiOracle, ScOracle};
use super::{ObjectiveFamily, Scope, SmoothnessCertificate};
use crate::cost::{CostFunction, ModifiedCost};
use crate::error::{Error, Result};
use crate::lp::{self, Constraint, LazyOptions, LinearProgram, LpStatus, Relation, SeparationOracle, Sense};
use crate::scalar::Scalar;

pub const DEFAULT_K_PHI: usize = 150;
pub const DEFAULT_K_SC: usize = 1154;

const BISECTION_ROUNDS: usize = 30;
const STABILIZER: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TruncatedLp {
    pub family: ObjectiveFamily,
    pub degree: u32,
    pub k: usize,
    pub m_max: usize,
}

#[derive(Clone, Debug)]
pub struct TruncatedSolution<T> {
    pub lambda: T,
    pub nu: T,
    /// `f'(0..=K)`; `f'(K) = nu K^d`.
    pub fprime: Vec<T>,
    /// Optimum without the boundary pin.
    pub unpinned_lambda: T,
    pub lp_rounds: usize,
    pub cuts: usize,
}

impl TruncatedLp {
    pub fn new(family: ObjectiveFamily, degree: u32, k: usize) -> Result<Self> {
        if !(1..=5).contains(&degree) {
            return Err(Error::DegreeOutOfRange(degree));
        }
        if k < 2 {
            return Err(Error::IndexOutOfRange(format!("truncation K = {k} must be at least 2")));
        }
        let m_max = match family {
            ObjectiveFamily::SocialCost => (k + 1) * (k + 1),
            ObjectiveFamily::Potential => (k + 1) * (k + 1) * (degree as usize + 1),
        };
        Ok(Self { family, degree, k, m_max })
    }

    pub fn lambda_var(&self) -> usize {
        self.k + 1
    }

    /// Tail factor for a given `lambda`.
    pub fn nu<T: Scalar>(&self, lambda: T) -> T {
        let dp1 = T::of_usize(self.degree as usize + 1);
        match self.family {
            ObjectiveFamily::Potential => lambda.powf(T::one() / dp1),
            ObjectiveFamily::SocialCost => (dp1 * lambda).powf(T::one() / dp1),
        }
    }

    fn values<T: Scalar>(&self) -> CostValues<T> {
        match self.family {
            ObjectiveFamily::SocialCost => CostValues::power(self.degree, self.m_max + 1),
            ObjectiveFamily::Potential => CostValues::power(self.degree, self.k + self.m_max + 1),
        }
    }

    fn kd<T: Scalar>(&self, n: usize) -> T {
        T::of_usize(n).powi(self.degree as i32)
    }

    /// Minimizes `lambda` plus `STABILIZER * sum f'(n) / n^d`. The second term
    /// selects the smallest table among optimal ones, which keeps the basis
    /// solving for `f'` from the top load downwards.
    fn objective<T: Scalar>(&self, lp: &mut LinearProgram<T>) -> Result<()> {
        lp.set_objective(self.lambda_var(), T::one())?;
        for i in 1..=self.k {
            lp.set_magnitude(i, self.kd(i))?;
            lp.set_objective(i, T::lit(STABILIZER) / self.kd::<T>(i))?;
        }
        Ok(())
    }

    /// Lower bounds `f'(n) >= n^d` and seed rows, optionally pinning `f'(K) = nu K^d`.
    pub fn core<T: Scalar>(&self, pin: Option<T>) -> Result<LinearProgram<T>> {
        let k = self.k;
        let lam = self.lambda_var();
        let mut names: Vec<String> = (0..=k).map(|i| format!("fp{i}")).collect();
        names.push("lambda".into());
        let mut lp = LinearProgram::new(Sense::Minimize, names);
        self.objective(&mut lp)?;
        for n in 1..k {
            lp.set_lower(n, self.kd(n))?;
        }
        match self.family {
            ObjectiveFamily::SocialCost => {
                lp.add_constraint(Constraint::ge(vec![(lam, T::one()), (1, -T::one())], T::zero()))?;
            }
            ObjectiveFamily::Potential => {
                for x in 0..k {
                    lp.add_constraint(Constraint::ge(vec![(lam, self.kd(x + 1)), (x + 1, -T::one())], T::zero()))?;
                }
            }
        }
        if let Some(nu) = pin {
            lp.add_constraint(Constraint::new(vec![(k, T::one())], Relation::Eq, nu * self.kd(k)))?;
        }
        Ok(lp)
    }

    pub fn sc_oracle<T: Scalar>(&self) -> ScOracle<T> {
        ScOracle { f: self.values(), max_n: self.k - 1, m_bound: MBound::Fixed(self.m_max), lambda_var: self.lambda_var() }
    }

    pub fn phi_oracle<T: Scalar>(&self) -> PhiOracle<T> {
        PhiOracle { f: self.values(), max_x: self.k - 1, m_bound: MBound::Fixed(self.m_max), lambda_var: self.lambda_var() }
    }

    fn options(&self) -> LazyOptions {
        LazyOptions { max_rounds: 400, cuts_per_round: self.k, final_sweep: false, purge_every: 1, ..Default::default() }
    }

    /// Minimal `lambda` together with a table glued to the tail.
    ///
    /// Solves once without the pin; if pinning `nu(lambda_0)` keeps the optimum
    /// at `lambda_0` that is the answer, otherwise bisects on `lambda`.
    pub fn solve<T: Scalar>(&self) -> Result<TruncatedSolution<T>> {
        match self.family {
            ObjectiveFamily::SocialCost => self.solve_with(&self.sc_oracle::<T>()),
            ObjectiveFamily::Potential => self.solve_with(&self.phi_oracle::<T>()),
        }
    }

    fn solve_with<T: Scalar, O: SeparationOracle<T> + ?Sized>(&self, oracle: &O) -> Result<TruncatedSolution<T>> {
        let opts = self.options();
        let free = lp::solve_lazy(&self.core::<T>(None)?, oracle, &opts)?;
        let free_sol = free.solution.into_optimal()?;
        let lambda0 = free_sol.x[self.lambda_var()];
        let learned: Vec<Constraint<T>> = free.program.constraints().to_vec();
        let mut rounds = free.rounds;
        let mut cuts = free.cuts_added;

        let mut pinned = |lambda_hat: T| -> Result<Option<(T, Vec<T>)>> {
            let nu = self.nu(lambda_hat);
            let mut core = LinearProgram::new(Sense::Minimize, free.program.names().to_vec());
            self.objective(&mut core)?;
            for n in 1..self.k {
                core.set_lower(n, self.kd(n))?;
            }
            for c in &learned {
                core.add_constraint(c.clone())?;
            }
            core.add_constraint(Constraint::new(vec![(self.k, T::one())], Relation::Eq, nu * self.kd(self.k)))?;
            let out = lp::solve_lazy(&core, oracle, &opts)?;
            rounds += out.rounds;
            cuts += out.cuts_added;
            match out.solution.status {
                LpStatus::Optimal => Ok(Some((out.solution.x[self.lambda_var()], out.solution.x))),
                LpStatus::Infeasible => Ok(None),
                s => Err(Error::LpFailed(format!("pinned truncated LP ended with status {s:?}"))),
            }
        };

        let tol = T::lit(1e-9);
        let accept = |lambda_hat: T, got: &Option<(T, Vec<T>)>| {
            got.as_ref().map_or(false, |(l, _)| *l <= lambda_hat * (T::one() + tol))
        };
        let first = pinned(lambda0)?;
        let (lambda, x) = if accept(lambda0, &first) {
            let (l, x) = first.unwrap();
            (l.max(lambda0), x)
        } else {
            log::info!("pin at lambda0 = {lambda0} raises the optimum, bisecting");
            let mut lo = lambda0;
            let mut hi = first.as_ref().map_or(lambda0 * T::lit(1.1), |(l, _)| *l);
            let mut best = pinned(hi)?;
            let mut guard = 0;
            while !accept(hi, &best) {
                lo = hi;
                hi = hi * T::lit(1.1);
                best = pinned(hi)?;
                guard += 1;
                if guard > 200 {
                    return Err(Error::LpFailed("no lambda reproduces its own tail pin".into()));
                }
            }
            for _ in 0..BISECTION_ROUNDS {
                let mid = (lo + hi) / T::lit(2.0);
                let got = pinned(mid)?;
                if accept(mid, &got) {
                    hi = mid;
                    best = got;
                } else {
                    lo = mid;
                }
            }
            (hi, best.expect("accepted").1)
        };
        let _ = free_sol;
        Ok(TruncatedSolution {
            lambda,
            nu: self.nu(lambda),
            fprime: x[..=self.k].to_vec(),
            unpinned_lambda: lambda0,
            lp_rounds: rounds,
            cuts,
        })
    }

    /// Certificate for `f(x) = x^d`: the table up to `K`, then `nu n^d`.
    pub fn certificate<T: Scalar>(&self, sol: &TruncatedSolution<T>) -> Result<SmoothnessCertificate<T>> {
        let mut tail = vec![T::zero(); self.degree as usize + 1];
        tail[self.degree as usize] = sol.nu;
        let table = ModifiedCost::from_table(sol.fprime.clone())?.with_tail(tail);
        Ok(SmoothnessCertificate {
            lambda: sol.lambda,
            objective: self.family,
            scope: match self.family {
                ObjectiveFamily::Potential => Scope::Strong,
                ObjectiveFamily::SocialCost => Scope::Plain,
            },
            fprime: vec![table],
            nu: Some(sol.nu),
            k: Some(self.k),
        })
    }
}

/// Truncated potential LP: seed rows and the oracle for the full `(n, z, m)` family.
pub fn build_lp_phi_truncated<T: Scalar>(d: u32, k: usize) -> Result<(LinearProgram<T>, PhiOracle<T>)> {
    let t = TruncatedLp::new(ObjectiveFamily::Potential, d, k)?;
    Ok((t.core(None)?, t.phi_oracle()))
}

/// Truncated social-cost LP: seed rows and the oracle for the full `(n, m)` family.
pub fn build_lp_sc_truncated<T: Scalar>(d: u32, k: usize) -> Result<(LinearProgram<T>, ScOracle<T>)> {
    let t = TruncatedLp::new(ObjectiveFamily::SocialCost, d, k)?;
    Ok((t.core(None)?, t.sc_oracle()))
}

/// Certificate for `x^d` (degree 0 is the identity with `lambda = 1`).
pub fn certify_monomial<T: Scalar>(family: ObjectiveFamily, d: u32, k: usize) -> Result<SmoothnessCertificate<T>> {
    if d == 0 {
        let one = CostFunction::constant(T::one())?;
        let table = ModifiedCost::identity(&one, k)?;
        return Ok(SmoothnessCertificate {
            lambda: T::one(),
            objective: family,
            scope: match family {
                ObjectiveFamily::Potential => Scope::Strong,
                ObjectiveFamily::SocialCost => Scope::Plain,
            },
            fprime: vec![table],
            nu: Some(T::one()),
            k: Some(k),
        });
    }
    let t = TruncatedLp::new(family, d, k)?;
    let sol = t.solve()?;
    t.certificate(&sol)
}

/// Certificate for a polynomial with non-negative coefficients as the
/// coefficient-weighted sum of monomial certificates; `lambda` is the largest
/// monomial `lambda` used. `monomial` supplies (possibly cached) certificates.
pub fn certify_polynomial<T: Scalar>(
    cost: &CostFunction<T>,
    mut monomial: impl FnMut(u32) -> Result<SmoothnessCertificate<T>>,
) -> Result<SmoothnessCertificate<T>> {
    let terms = cost
        .monomial_terms()
        .ok_or_else(|| Error::Certificate("tabulated costs need build_lp_sc / build_lp_phi".into()))?;
    if terms.is_empty() {
        return Err(Error::Certificate("zero cost function has no meaningful certificate".into()));
    }
    let mut parts = Vec::new();
    for &(d, a) in &terms {
        if d > 5 {
            return Err(Error::DegreeOutOfRange(d));
        }
        parts.push((a, monomial(d)?));
    }
    let objective = parts[0].1.objective;
    if parts.iter().any(|(_, c)| c.objective != objective) {
        return Err(Error::Certificate("monomial certificates for different objectives".into()));
    }
    let lambda = parts.iter().map(|(_, c)| c.lambda).fold(T::one(), T::max);
    let weighted: Vec<(T, &ModifiedCost<T>)> = parts.iter().map(|(a, c)| (*a, &c.fprime[0])).collect();
    let fprime = ModifiedCost::combine(&weighted)?;
    let k = parts.iter().filter_map(|(_, c)| c.k).min();
    Ok(SmoothnessCertificate {
        lambda,
        objective,
        scope: parts[0].1.scope,
        fprime: vec![fprime],
        nu: None,
        k,
    })
}
