//! Linear programs with an in-house simplex solver and lazy constraint generation.
//!
//! Problems are `min c.x` (or `max`) over `x >= lower` subject to sparse rows
//! `a.x {<=, >=, =} b`. Every optimal answer is re-checked against the
//! original rows before it is reported as optimal.

mod simplex;

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use simplex::SimplexOptions;
use simplex::Tableau;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// One sparse row `sum terms {rel} rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint<T> {
    pub terms: Vec<(usize, T)>,
    pub relation: Relation,
    pub rhs: T,
}

impl<T: Scalar> Constraint<T> {
    pub fn new(terms: Vec<(usize, T)>, relation: Relation, rhs: T) -> Self {
        Self { terms, relation, rhs }
    }

    pub fn ge(terms: Vec<(usize, T)>, rhs: T) -> Self {
        Self::new(terms, Relation::Ge, rhs)
    }

    pub fn le(terms: Vec<(usize, T)>, rhs: T) -> Self {
        Self::new(terms, Relation::Le, rhs)
    }

    pub fn lhs(&self, x: &[T]) -> T {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Signed slack: non-negative iff the row holds (for `=`, minus the absolute gap).
    pub fn slack(&self, x: &[T]) -> T {
        let lhs = self.lhs(x);
        match self.relation {
            Relation::Le => self.rhs - lhs,
            Relation::Ge => lhs - self.rhs,
            Relation::Eq => -(lhs - self.rhs).abs(),
        }
    }

    /// Magnitude used to turn an absolute violation into a relative one.
    pub fn scale(&self, x: &[T]) -> T {
        let activity: T = self.terms.iter().map(|&(j, a)| (a * x[j]).abs()).sum();
        T::one().max(self.rhs.abs()).max(activity)
    }
}

/// `min/max c.x` subject to sparse rows and per-variable lower bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram<T> {
    names: Vec<String>,
    sense: Sense,
    objective: Vec<T>,
    lower: Vec<T>,
    magnitude: Vec<Option<T>>,
    constraints: Vec<Constraint<T>>,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(sense: Sense, names: Vec<String>) -> Self {
        let n = names.len();
        Self {
            names,
            sense,
            objective: vec![T::zero(); n],
            lower: vec![T::zero(); n],
            magnitude: vec![None; n],
            constraints: Vec::new(),
        }
    }

    /// Variables named `x0, x1, ...`.
    pub fn with_vars(sense: Sense, n: usize) -> Self {
        Self::new(sense, (0..n).map(|j| format!("x{j}")).collect())
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn objective(&self) -> &[T] {
        &self.objective
    }

    pub fn lower_bounds(&self) -> &[T] {
        &self.lower
    }

    pub fn constraints(&self) -> &[Constraint<T>] {
        &self.constraints
    }

    pub fn set_objective(&mut self, var: usize, coeff: T) -> Result<()> {
        self.check_var(var)?;
        check_finite(coeff, "objective coefficient")?;
        self.objective[var] = coeff;
        Ok(())
    }

    pub fn set_lower(&mut self, var: usize, bound: T) -> Result<()> {
        self.check_var(var)?;
        check_finite(bound, "lower bound")?;
        self.lower[var] = bound;
        Ok(())
    }

    /// Expected size of a variable's optimal value; only used for scaling.
    pub fn set_magnitude(&mut self, var: usize, typical: T) -> Result<()> {
        self.check_var(var)?;
        if !(typical > T::zero()) || !typical.is_finite() {
            return Err(Error::MalformedLp(format!("magnitude hint {typical} must be positive")));
        }
        self.magnitude[var] = Some(typical);
        Ok(())
    }

    pub fn magnitude_hints(&self) -> &[Option<T>] {
        &self.magnitude
    }

    pub fn add_constraint(&mut self, c: Constraint<T>) -> Result<usize> {
        self.validate(&c)?;
        self.constraints.push(c);
        Ok(self.constraints.len() - 1)
    }

    pub fn validate(&self, c: &Constraint<T>) -> Result<()> {
        for &(j, a) in &c.terms {
            self.check_var(j)?;
            check_finite(a, "constraint coefficient")?;
        }
        check_finite(c.rhs, "right-hand side")
    }

    fn check_var(&self, var: usize) -> Result<()> {
        if var >= self.num_vars() {
            return Err(Error::MalformedLp(format!("variable {var} out of range ({} variables)", self.num_vars())));
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective.iter().zip(x).map(|(c, v)| *c * *v).sum()
    }

    /// Largest relative violation over rows and bounds at `x`.
    pub fn max_violation(&self, x: &[T]) -> T {
        let rows = self
            .constraints
            .iter()
            .map(|c| (-c.slack(x)).max(T::zero()) / c.scale(x));
        let bounds = self
            .lower
            .iter()
            .zip(x)
            .map(|(l, v)| (*l - *v).max(T::zero()) / T::one().max(l.abs()));
        rows.chain(bounds).fold(T::zero(), T::max)
    }
}

fn check_finite<T: Scalar>(v: T, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::MalformedLp(format!("{what} {v} is not finite")))
    }
}

impl<T: Scalar> fmt::Display for LinearProgram<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sense = match self.sense {
            Sense::Minimize => "minimize",
            Sense::Maximize => "maximize",
        };
        write!(f, "{sense}")?;
        for (j, c) in self.objective.iter().enumerate().filter(|(_, c)| !c.is_zero()) {
            write!(f, " {c:+} {}", self.names[j])?;
        }
        writeln!(f)?;
        writeln!(f, "subject to")?;
        for (i, c) in self.constraints.iter().enumerate() {
            write!(f, "  r{i}:")?;
            for &(j, a) in &c.terms {
                write!(f, " {a:+} {}", self.names[j])?;
            }
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "=",
            };
            writeln!(f, " {rel} {}", c.rhs)?;
        }
        for (j, l) in self.lower.iter().enumerate() {
            writeln!(f, "  {} >= {l}", self.names[j])?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// The solver stopped on an answer that failed re-verification.
    NumericalFailure,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    pub objective: T,
    pub x: Vec<T>,
    /// One multiplier per constraint, in the sense of the program as stated:
    /// for a minimization `>=` rows carry `y >= 0` and `<=` rows `y <= 0`.
    pub duals: Vec<T>,
    pub reduced_costs: Vec<T>,
    pub iterations: usize,
    /// Largest relative row or bound violation of `x`.
    pub max_violation: T,
}

impl<T: Scalar> LpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Errors unless the status is optimal.
    pub fn into_optimal(self) -> Result<Self> {
        match self.status {
            LpStatus::Optimal => Ok(self),
            s => Err(Error::LpFailed(format!("ended with status {s:?}"))),
        }
    }
}

/// Solves `lp` from scratch.
pub fn solve<T: Scalar>(lp: &LinearProgram<T>) -> Result<LpSolution<T>> {
    solve_with(lp, &SimplexOptions::default())
}

pub fn solve_with<T: Scalar>(lp: &LinearProgram<T>, opts: &SimplexOptions) -> Result<LpSolution<T>> {
    let mut tab = Tableau::build(lp, opts)?;
    let status = tab.optimize();
    Ok(tab.extract(lp, status))
}

/// Source of constraints that are too many to materialize.
pub trait SeparationOracle<T: Scalar> {
    /// The most violated constraint at `x`, or `None` if `x` satisfies the family.
    fn most_violated(&self, x: &[T]) -> Option<Constraint<T>>;

    /// Up to `limit` violated constraints, most violated first.
    fn violated(&self, x: &[T], limit: usize) -> Vec<Constraint<T>> {
        let _ = limit;
        self.most_violated(x).into_iter().collect()
    }

    /// Brute-force check over the full family; defaults to [`Self::most_violated`].
    fn exhaustive_check(&self, x: &[T]) -> Option<Constraint<T>> {
        self.most_violated(x)
    }
}

#[derive(Clone, Debug)]
pub struct LazyOptions {
    pub max_rounds: usize,
    pub cuts_per_round: usize,
    /// Run [`SeparationOracle::exhaustive_check`] on the final point.
    pub final_sweep: bool,
    /// Drop non-binding generated rows every this many rounds (0 disables).
    pub purge_every: usize,
    pub simplex: SimplexOptions,
}

impl Default for LazyOptions {
    fn default() -> Self {
        Self {
            max_rounds: 500,
            cuts_per_round: 1,
            final_sweep: false,
            purge_every: 0,
            simplex: SimplexOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LazyOutcome<T> {
    pub solution: LpSolution<T>,
    /// `lp_core` plus every generated row that is still part of the model.
    pub program: LinearProgram<T>,
    pub rounds: usize,
    pub cuts_added: usize,
}

/// Cutting-plane loop: solve, ask the oracle, add rows, re-optimize warm.
pub fn solve_lazy<T: Scalar, O: SeparationOracle<T> + ?Sized>(
    lp_core: &LinearProgram<T>,
    oracle: &O,
    opts: &LazyOptions,
) -> Result<LazyOutcome<T>> {
    let mut program = lp_core.clone();
    let mut tab = Tableau::build(&program, &opts.simplex)?;
    let mut cuts_added = 0;
    let mut status = tab.optimize();
    for round in 0..opts.max_rounds {
        if status != LpStatus::Optimal {
            let solution = tab.extract(&program, status);
            return Ok(LazyOutcome { solution, program, rounds: round, cuts_added });
        }
        let x = tab.primal(&program);
        let cuts = oracle.violated(&x, opts.cuts_per_round.max(1));
        if cuts.is_empty() {
            let mut solution = tab.extract(&program, status);
            if opts.final_sweep && solution.is_optimal() {
                if let Some(c) = oracle.exhaustive_check(&solution.x) {
                    log::warn!("exhaustive sweep found a violated row the oracle missed: {c:?}");
                    solution.status = LpStatus::NumericalFailure;
                }
            }
            return Ok(LazyOutcome { solution, program, rounds: round + 1, cuts_added });
        }
        log::debug!("lazy round {round}: objective {} with {} new rows", program.objective_value(&x), cuts.len());
        for c in cuts {
            program.validate(&c)?;
            tab.add_row(program.constraints.len(), &c);
            program.constraints.push(c);
            cuts_added += 1;
        }
        if opts.purge_every > 0 && (round + 1) % opts.purge_every == 0 {
            let keep = tab.purge_inactive(lp_core.constraints.len());
            let mut idx = 0;
            program.constraints.retain(|_| {
                let k = keep[idx];
                idx += 1;
                k
            });
        }
        status = tab.reoptimize();
    }
    let x = tab.primal(&program);
    Err(Error::LazyNonConvergence {
        rounds: opts.max_rounds,
        last_objective: program.objective_value(&x).as_f64(),
        last_candidate: x.iter().map(|v| v.as_f64()).collect(),
    })
}
