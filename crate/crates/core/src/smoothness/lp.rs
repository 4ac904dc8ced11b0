//! Finite smoothness LPs over loads `0..=N`.
//!
//! Variable layout: `f'(i)` is variable `i` for `i` in `0..=N+1` and `lambda`
//! is variable `N+2`. `f'(0)` never carries a coefficient.

use super::oracle::{CostValues, MBound, PhiOracle, ScOracle};
use super::{ObjectiveFamily, Scope, SmoothnessCertificate};
use crate::cost::{CostFunction, LoadCost, ModifiedCost};
use crate::error::{Error, Result};
use crate::lp::{self, Constraint, LazyOptions, LinearProgram, LpSolution, Sense};
use crate::scalar::Scalar;

/// Index of `f'(0)`; `f'(i)` sits at `FVAR_OFFSET + i`.
pub const FVAR_OFFSET: usize = 0;

fn program<T: Scalar>(top: usize, typical: impl Fn(usize) -> T) -> Result<LinearProgram<T>> {
    let mut names: Vec<String> = (0..=top).map(|i| format!("fp{i}")).collect();
    names.push("lambda".into());
    let mut lp = LinearProgram::new(Sense::Minimize, names);
    lp.set_objective(top + 1, T::one())?;
    for i in 1..=top {
        let t = typical(i);
        if t > T::zero() && t.is_finite() {
            lp.set_magnitude(i, t)?;
        }
    }
    Ok(lp)
}

/// `h(n) = n f(n)` for `n` in `0..=n_max`.
pub fn sc_objective<T: Scalar, F: LoadCost<T> + ?Sized>(f: &F, n_max: usize) -> Result<Vec<T>> {
    (0..=n_max).map(|n| Ok(T::of_usize(n) * f.at(n)?)).collect()
}

/// Every row `lambda h(m) - m f'(n+1) + n f'(n) >= h(n)`, `n, m` in `0..=N`, minimizing `lambda`.
pub fn build_lp_sc<T: Scalar>(h: &[T], n_max: usize) -> Result<LinearProgram<T>> {
    if h.len() <= n_max {
        return Err(Error::IndexOutOfRange(format!("objective tabulated to {} < N = {n_max}", h.len() as isize - 1)));
    }
    let mut lp = program(n_max + 1, |i| h[i.min(n_max)] / T::of_usize(i.min(n_max)))?;
    let lam = n_max + 2;
    for n in 0..=n_max {
        for m in 0..=n_max {
            if n == 0 && m == 0 {
                continue;
            }
            let mut terms = vec![(lam, h[m])];
            if m > 0 {
                terms.push((n + 1, -T::of_usize(m)));
            }
            if n > 0 {
                terms.push((n, T::of_usize(n)));
            }
            lp.add_constraint(Constraint::ge(terms, h[n]))?;
        }
    }
    Ok(lp)
}

/// Every row of the potential family with `n + z <= N` and `m + z <= N`, minimizing `lambda`.
pub fn build_lp_phi<T: Scalar, F: LoadCost<T> + ?Sized>(f: &F, n_max: usize) -> Result<LinearProgram<T>> {
    let vals = CostValues::tabulate(f, n_max)?;
    let mut lp = program(n_max + 1, |i| vals.value(i.min(n_max)))?;
    let lam = n_max + 2;
    for x in 0..=n_max {
        for n in 0..=x {
            let z = x - n;
            for m in 0..=n_max - z {
                if n == 0 && m == 0 {
                    continue;
                }
                let mut terms = vec![(lam, vals.range_sum(z, m))];
                if m > 0 {
                    terms.push((x + 1, -T::of_usize(m)));
                }
                if n > 0 {
                    terms.push((x, T::of_usize(n)));
                }
                lp.add_constraint(Constraint::ge(terms, vals.range_sum(z, n)))?;
            }
        }
    }
    Ok(lp)
}

/// Seed rows `n f'(n) >= h(n)` and `lambda h(1) >= f'(1)` plus the full family as an oracle.
pub fn lp_sc_lazy<T: Scalar, F: LoadCost<T> + ?Sized>(f: &F, n_max: usize) -> Result<(LinearProgram<T>, ScOracle<T>)> {
    let vals = CostValues::tabulate(f, n_max)?;
    let mut lp = program(n_max + 1, |i| vals.value(i.min(n_max)))?;
    let lam = n_max + 2;
    for n in 1..=n_max {
        lp.add_constraint(Constraint::ge(vec![(n, T::of_usize(n))], vals.h(ObjectiveFamily::SocialCost, n, 0)))?;
    }
    if n_max >= 1 {
        lp.add_constraint(Constraint::ge(vec![(lam, vals.value(1)), (1, -T::one())], T::zero()))?;
    }
    let oracle = ScOracle { f: vals, max_n: n_max, m_bound: MBound::Fixed(n_max), lambda_var: lam };
    Ok((lp, oracle))
}

/// Seed rows `f'(x) >= f(x)` and `lambda f(x+1) >= f'(x+1)` plus the full family as an oracle.
pub fn lp_phi_lazy<T: Scalar, F: LoadCost<T> + ?Sized>(f: &F, n_max: usize) -> Result<(LinearProgram<T>, PhiOracle<T>)> {
    let vals = CostValues::tabulate(f, n_max)?;
    let mut lp = program(n_max + 1, |i| vals.value(i.min(n_max)))?;
    let lam = n_max + 2;
    for x in 1..=n_max {
        lp.add_constraint(Constraint::ge(vec![(x, T::one())], vals.value(x)))?;
    }
    for x in 0..n_max {
        lp.add_constraint(Constraint::ge(vec![(lam, vals.value(x + 1)), (x + 1, -T::one())], T::zero()))?;
    }
    let oracle = PhiOracle { f: vals, max_x: n_max, m_bound: MBound::Total(n_max), lambda_var: lam };
    Ok((lp, oracle))
}

fn lazy_options(rows: usize) -> LazyOptions {
    LazyOptions { max_rounds: 1000, cuts_per_round: rows.max(1), final_sweep: true, ..Default::default() }
}

/// Optimal `lambda` and modified costs of the social-cost LP for one cost function.
pub fn solve_lp_sc<T: Scalar>(
    f: &CostFunction<T>,
    n_max: usize,
    eager: bool,
) -> Result<(SmoothnessCertificate<T>, LpSolution<T>)> {
    let sol = if eager {
        let h = sc_objective(f, n_max)?;
        lp::solve(&build_lp_sc(&h, n_max)?)?
    } else {
        let (core, oracle) = lp_sc_lazy(f, n_max)?;
        lp::solve_lazy(&core, &oracle, &lazy_options(n_max + 1))?.solution
    };
    let sol = sol.into_optimal()?;
    let cert = certificate_from_solution(ObjectiveFamily::SocialCost, Scope::Plain, &sol.x, n_max + 2)?;
    Ok((cert, sol))
}

/// Optimal `lambda` and modified costs of the potential LP for one cost function.
pub fn solve_lp_phi<T: Scalar>(
    f: &CostFunction<T>,
    n_max: usize,
    eager: bool,
) -> Result<(SmoothnessCertificate<T>, LpSolution<T>)> {
    let sol = if eager {
        lp::solve(&build_lp_phi(f, n_max)?)?
    } else {
        let (core, oracle) = lp_phi_lazy(f, n_max)?;
        lp::solve_lazy(&core, &oracle, &lazy_options(n_max + 1))?.solution
    };
    let sol = sol.into_optimal()?;
    let cert = certificate_from_solution(ObjectiveFamily::Potential, Scope::Strong, &sol.x, n_max + 2)?;
    Ok((cert, sol))
}

/// Single-resource certificate from an LP point laid out as `f'(0..lambda_var), lambda`.
pub fn certificate_from_solution<T: Scalar>(
    objective: ObjectiveFamily,
    scope: Scope,
    x: &[T],
    lambda_var: usize,
) -> Result<SmoothnessCertificate<T>> {
    let table = ModifiedCost::from_table(x[FVAR_OFFSET..lambda_var].to_vec())?;
    Ok(SmoothnessCertificate {
        lambda: x[lambda_var],
        objective,
        scope,
        fprime: vec![table],
        nu: None,
        k: None,
    })
}
