//! Condensed-tableau simplex with scaling, Harris ratio tests and a Bland fallback.
//!
//! Internally every row is `sum a_j x_j + s = b` with `s >= 0`, every structural
//! variable is shifted to a zero lower bound and scaled, and the objective is
//! minimized. Only nonbasic columns are stored, so `rows[r][slot]` is an entry of
//! `B^-1 N` and the width stays at the structural count however many rows are
//! added. Variable `n + k` is the slack of stored row `k`.

use rayon::prelude::*;

use super::{Constraint, LinearProgram, LpSolution, LpStatus, Relation, Sense};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct SimplexOptions {
    /// Primal feasibility tolerance in scaled units.
    pub primal_tol: f64,
    /// Reduced-cost tolerance in scaled units.
    pub dual_tol: f64,
    /// Smallest admissible pivot magnitude.
    pub pivot_tol: f64,
    pub max_iterations: usize,
    /// Relative violation above which an optimal answer is rejected.
    pub verify_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_limit: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            primal_tol: 1e-10,
            dual_tol: 1e-10,
            pivot_tol: 1e-9,
            max_iterations: 500_000,
            verify_tol: 1e-8,
            degenerate_limit: 64,
        }
    }
}

/// A scaled `<=` copy of one constraint.
#[derive(Clone, Debug)]
struct StoredRow<T> {
    terms: Vec<(usize, T)>,
    rhs: T,
    cons: usize,
    /// Row scale times `+1` for a `<=` copy, `-1` for a flipped `>=` copy.
    factor: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pos {
    Basic(usize),
    Nonbasic(usize),
}

const PAR_WORK: usize = 1 << 15;

pub(crate) struct Tableau<T> {
    n: usize,
    rows: Vec<Vec<T>>,
    rhs: Vec<T>,
    basis: Vec<usize>,
    nonbasic: Vec<usize>,
    pos: Vec<Pos>,
    d: Vec<T>,
    cost: Vec<T>,
    col_scale: Vec<T>,
    obj_scale: T,
    lower: Vec<T>,
    stored: Vec<StoredRow<T>>,
    opts: SimplexOptions,
    iterations: usize,
    refactored: bool,
}

fn pow2_round<T: Scalar>(x: T) -> T {
    if !(x > T::zero()) || !x.is_finite() {
        return T::one();
    }
    let e = x.log2().round();
    T::lit(2.0).powf(e)
}

impl<T: Scalar> Tableau<T> {
    pub(crate) fn build(lp: &LinearProgram<T>, opts: &SimplexOptions) -> Result<Self> {
        let n = lp.num_vars();
        for c in lp.constraints() {
            lp.validate(c)?;
        }
        let copies: usize = lp
            .constraints()
            .iter()
            .map(|c| if c.relation == Relation::Eq { 2 } else { 1 })
            .sum();
        if copies.saturating_mul(n.max(1)) > 400_000_000 {
            return Err(Error::MalformedLp(format!("tableau of {copies} rows and {n} columns is too large")));
        }
        let col_scale = column_scales(lp);
        let mut cost: Vec<T> = lp
            .objective()
            .iter()
            .zip(&col_scale)
            .map(|(c, s)| *c * *s)
            .collect();
        if lp.sense() == Sense::Maximize {
            cost.iter_mut().for_each(|c| *c = -*c);
        }
        let cmax = cost.iter().fold(T::zero(), |m, c| m.max(c.abs()));
        let obj_scale = if cmax > T::zero() { pow2_round(T::one() / cmax) } else { T::one() };
        cost.iter_mut().for_each(|c| *c *= obj_scale);

        let mut tab = Tableau {
            n,
            rows: Vec::new(),
            rhs: Vec::new(),
            basis: Vec::new(),
            nonbasic: (0..n).collect(),
            pos: (0..n).map(Pos::Nonbasic).collect(),
            d: cost.clone(),
            cost,
            col_scale,
            obj_scale,
            lower: lp.lower_bounds().to_vec(),
            stored: Vec::new(),
            opts: opts.clone(),
            iterations: 0,
            refactored: false,
        };
        for (i, c) in lp.constraints().iter().enumerate() {
            tab.add_row(i, c);
        }
        Ok(tab)
    }

    /// Scaled `<=` copies of a constraint.
    fn scaled_copies(&self, cons: usize, c: &Constraint<T>) -> Vec<StoredRow<T>> {
        let mut terms: Vec<(usize, T)> = Vec::with_capacity(c.terms.len());
        let mut rhs = c.rhs;
        for &(j, a) in &c.terms {
            rhs -= a * self.lower[j];
            if let Some(e) = terms.iter_mut().find(|(k, _)| *k == j) {
                e.1 += a * self.col_scale[j];
            } else {
                terms.push((j, a * self.col_scale[j]));
            }
        }
        let amax = terms.iter().fold(T::zero(), |m, (_, a)| m.max(a.abs()));
        let rho = if amax > T::zero() {
            pow2_round(T::one() / amax)
        } else {
            pow2_round(T::one() / T::one().max(rhs.abs()))
        };
        let signs: &[T] = match c.relation {
            Relation::Le => &[T::one()],
            Relation::Ge => &[-T::one()],
            Relation::Eq => &[T::one(), -T::one()],
        };
        signs
            .iter()
            .map(|s| {
                let factor = *s * rho;
                StoredRow {
                    terms: terms.iter().map(|&(j, a)| (j, a * factor)).collect(),
                    rhs: rhs * factor,
                    cons,
                    factor,
                }
            })
            .collect()
    }

    /// Adds constraint `cons`, expressed in the current basis, with its slack basic.
    pub(crate) fn add_row(&mut self, cons: usize, c: &Constraint<T>) {
        for stored in self.scaled_copies(cons, c) {
            let mut row = vec![T::zero(); self.n];
            let mut b = stored.rhs;
            for &(j, a) in &stored.terms {
                match self.pos[j] {
                    Pos::Nonbasic(s) => row[s] += a,
                    Pos::Basic(r) => {
                        for (v, e) in row.iter_mut().zip(&self.rows[r]) {
                            *v -= a * *e;
                        }
                        b -= a * self.rhs[r];
                    }
                }
            }
            let var = self.n + self.stored.len();
            self.pos.push(Pos::Basic(self.rows.len()));
            self.basis.push(var);
            self.rows.push(row);
            self.rhs.push(b);
            self.stored.push(stored);
        }
    }

    /// Removes generated rows (constraint index `>= n_core`) whose slack is basic
    /// and strictly positive. Returns a keep-mask over constraint indices.
    pub(crate) fn purge_inactive(&mut self, n_core: usize) -> Vec<bool> {
        let n_cons = self.stored.iter().map(|s| s.cons + 1).max().unwrap_or(0);
        let tol = T::lit(self.opts.primal_tol) * T::lit(100.0);
        let mut active = vec![false; n_cons];
        for (k, s) in self.stored.iter().enumerate() {
            let inactive = match self.pos[self.n + k] {
                Pos::Basic(r) => self.rhs[r] > tol,
                Pos::Nonbasic(_) => false,
            };
            if !inactive {
                active[s.cons] = true;
            }
        }
        let keep_cons: Vec<bool> = (0..n_cons).map(|c| c < n_core || active[c]).collect();
        let drop: Vec<bool> = self.stored.iter().map(|s| !keep_cons[s.cons]).collect();
        if !drop.iter().any(|&d| d) {
            return keep_cons;
        }
        let mut cons_map = vec![usize::MAX; n_cons];
        let mut next = 0;
        for (c, m) in cons_map.iter_mut().enumerate() {
            if keep_cons[c] {
                *m = next;
                next += 1;
            }
        }
        // A dropped row's slack is basic, so only its own tableau row mentions it.
        let mut var_map: Vec<usize> = (0..self.n).collect();
        let mut kept = Vec::with_capacity(self.stored.len());
        for (k, s) in std::mem::take(&mut self.stored).into_iter().enumerate() {
            if drop[k] {
                var_map.push(usize::MAX);
            } else {
                var_map.push(self.n + kept.len());
                kept.push(StoredRow { cons: cons_map[s.cons], ..s });
            }
        }
        self.stored = kept;
        let rows = std::mem::take(&mut self.rows);
        let rhs = std::mem::take(&mut self.rhs);
        let basis = std::mem::take(&mut self.basis);
        for ((row, b), var) in rows.into_iter().zip(rhs).zip(basis) {
            let v = var_map[var];
            if v != usize::MAX {
                self.rows.push(row);
                self.rhs.push(b);
                self.basis.push(v);
            }
        }
        for v in &mut self.nonbasic {
            *v = var_map[*v];
        }
        self.rebuild_positions();
        keep_cons
    }

    fn rebuild_positions(&mut self) {
        self.pos = vec![Pos::Basic(usize::MAX); self.n + self.stored.len()];
        for (r, &v) in self.basis.iter().enumerate() {
            self.pos[v] = Pos::Basic(r);
        }
        for (s, &v) in self.nonbasic.iter().enumerate() {
            self.pos[v] = Pos::Nonbasic(s);
        }
    }

    pub(crate) fn optimize(&mut self) -> LpStatus {
        let ptol = T::lit(self.opts.primal_tol);
        let dtol = T::lit(self.opts.dual_tol);
        let status = if self.rhs.iter().all(|b| *b >= -ptol) {
            self.primal_loop()
        } else if self.d.iter().all(|d| *d >= -dtol) {
            match self.dual_loop() {
                LpStatus::Optimal => self.primal_loop(),
                s => s,
            }
        } else {
            self.d = vec![T::zero(); self.n];
            let s = self.dual_loop();
            self.recompute_reduced_costs();
            match s {
                LpStatus::Optimal => self.primal_loop(),
                s => s,
            }
        };
        self.finish(status)
    }

    /// Re-optimizes after rows were added to an optimal tableau.
    pub(crate) fn reoptimize(&mut self) -> LpStatus {
        let dtol = T::lit(self.opts.dual_tol);
        if self.d.iter().all(|d| *d >= -dtol) {
            let s = match self.dual_loop() {
                LpStatus::Optimal => self.primal_loop(),
                s => s,
            };
            self.finish(s)
        } else {
            self.optimize()
        }
    }

    /// Accepts an optimal status only if the scaled rows check out; refactors once otherwise.
    fn finish(&mut self, status: LpStatus) -> LpStatus {
        if status != LpStatus::Optimal {
            return status;
        }
        let tol = T::lit(self.opts.verify_tol) * T::lit(0.1);
        let residual = self.scaled_residual();
        if residual <= tol {
            return status;
        }
        if self.refactored {
            return LpStatus::NumericalFailure;
        }
        log::debug!("simplex: residual {residual} after optimize, refactoring");
        self.refactored = true;
        if !self.refactor() {
            return LpStatus::NumericalFailure;
        }
        let s = self.optimize();
        self.refactored = false;
        s
    }

    /// Values of all structural and slack variables in scaled units.
    fn scaled_values(&self) -> Vec<T> {
        let mut x = vec![T::zero(); self.n + self.stored.len()];
        for (r, &b) in self.basis.iter().enumerate() {
            x[b] = self.rhs[r];
        }
        x
    }

    /// Largest violation of `A x + s = b, x >= 0` in scaled units.
    fn scaled_residual(&self) -> T {
        let x = self.scaled_values();
        let mut worst = T::zero();
        for (k, s) in self.stored.iter().enumerate() {
            let lhs: T = s.terms.iter().map(|&(j, a)| a * x[j]).sum::<T>() + x[self.n + k];
            worst = worst.max((lhs - s.rhs).abs() / T::one().max(s.rhs.abs()));
        }
        for v in &x {
            worst = worst.max(-*v);
        }
        worst
    }

    /// Rebuilds the tableau from the stored rows and pivots the current basis back in.
    fn refactor(&mut self) -> bool {
        let mut in_target = vec![false; self.n + self.stored.len()];
        for &v in &self.basis {
            in_target[v] = true;
        }
        let target: Vec<usize> = self.basis.iter().copied().filter(|&v| v < self.n).collect();
        let stored = std::mem::take(&mut self.stored);
        self.rows.clear();
        self.rhs.clear();
        self.basis.clear();
        self.nonbasic = (0..self.n).collect();
        self.pos = (0..self.n).map(Pos::Nonbasic).collect();
        for s in stored {
            let mut row = vec![T::zero(); self.n];
            for &(j, a) in &s.terms {
                row[j] += a;
            }
            let var = self.n + self.stored.len();
            self.pos.push(Pos::Basic(self.rows.len()));
            self.basis.push(var);
            self.rows.push(row);
            self.rhs.push(s.rhs);
            self.stored.push(s);
        }
        self.d = vec![T::zero(); self.n];
        let ptiv = T::lit(self.opts.pivot_tol);
        for q in target {
            let Pos::Nonbasic(slot) = self.pos[q] else { continue };
            let mut best: Option<(usize, T)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if in_target[self.basis[r]] {
                    continue;
                }
                let a = row[slot].abs();
                if a > best.map_or(T::zero(), |b| b.1) {
                    best = Some((r, a));
                }
            }
            match best {
                Some((r, a)) if a > ptiv => self.pivot(r, slot),
                _ => return false,
            }
        }
        self.recompute_reduced_costs();
        true
    }

    fn var_cost(&self, v: usize) -> T {
        if v < self.n {
            self.cost[v]
        } else {
            T::zero()
        }
    }

    fn recompute_reduced_costs(&mut self) {
        let mut d: Vec<T> = self.nonbasic.iter().map(|&v| self.var_cost(v)).collect();
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = self.var_cost(b);
            if cb.is_zero() {
                continue;
            }
            for (dj, a) in d.iter_mut().zip(&self.rows[r]) {
                *dj -= cb * *a;
            }
        }
        self.d = d;
    }

    /// Exchanges the basic variable of row `r` with the nonbasic variable in `slot`.
    fn pivot(&mut self, r: usize, slot: usize) {
        self.iterations += 1;
        let mut prow = std::mem::take(&mut self.rows[r]);
        let inv = T::one() / prow[slot];
        let mut nz: Vec<(usize, T)> = Vec::new();
        for (j, v) in prow.iter_mut().enumerate() {
            if j != slot && !v.is_zero() {
                *v *= inv;
                nz.push((j, *v));
            }
        }
        prow[slot] = inv;
        self.rhs[r] *= inv;
        let prhs = self.rhs[r];
        let update = |row: &mut Vec<T>, b: &mut T| {
            if row.is_empty() {
                return;
            }
            let f = row[slot];
            if f.is_zero() {
                return;
            }
            for &(j, v) in &nz {
                row[j] -= f * v;
            }
            row[slot] = -f * inv;
            *b -= f * prhs;
        };
        if self.rows.len() * nz.len() >= PAR_WORK {
            self.rows
                .par_iter_mut()
                .zip(self.rhs.par_iter_mut())
                .for_each(|(row, b)| update(row, b));
        } else {
            for (row, b) in self.rows.iter_mut().zip(self.rhs.iter_mut()) {
                update(row, b);
            }
        }
        let f = self.d[slot];
        if !f.is_zero() {
            for &(j, v) in &nz {
                self.d[j] -= f * v;
            }
            self.d[slot] = -f * inv;
        }
        self.rows[r] = prow;
        let entering = self.nonbasic[slot];
        let leaving = self.basis[r];
        self.basis[r] = entering;
        self.nonbasic[slot] = leaving;
        self.pos[entering] = Pos::Basic(r);
        self.pos[leaving] = Pos::Nonbasic(slot);
    }

    fn primal_loop(&mut self) -> LpStatus {
        let dtol = T::lit(self.opts.dual_tol);
        let ptol = T::lit(self.opts.primal_tol);
        let ptiv = T::lit(self.opts.pivot_tol);
        let mut degenerate = 0usize;
        let mut rechecked = false;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return LpStatus::IterationLimit;
            }
            let bland = degenerate > self.opts.degenerate_limit;
            let mut q: Option<usize> = None;
            for (j, dj) in self.d.iter().enumerate() {
                if *dj >= -dtol {
                    continue;
                }
                let better = match q {
                    None => true,
                    Some(k) if bland => self.nonbasic[j] < self.nonbasic[k],
                    Some(k) => *dj < self.d[k],
                };
                if better {
                    q = Some(j);
                }
            }
            let Some(q) = q else {
                if rechecked {
                    return LpStatus::Optimal;
                }
                self.recompute_reduced_costs();
                rechecked = true;
                continue;
            };
            rechecked = false;
            // Harris pass 1: loosest bound on the step.
            let mut theta_max = T::infinity();
            for (row, b) in self.rows.iter().zip(&self.rhs) {
                let a = row[q];
                if a > ptiv {
                    theta_max = theta_max.min((b.max(T::zero()) + ptol) / a);
                }
            }
            if theta_max.is_infinite() {
                return LpStatus::Unbounded;
            }
            let mut leave: Option<(usize, T, T)> = None;
            for (r, (row, b)) in self.rows.iter().zip(&self.rhs).enumerate() {
                let a = row[q];
                if a <= ptiv {
                    continue;
                }
                let ratio = b.max(T::zero()) / a;
                if ratio > theta_max {
                    continue;
                }
                let better = match leave {
                    None => true,
                    Some((lr, lratio, _)) if bland => {
                        ratio < lratio || (ratio == lratio && self.basis[r] < self.basis[lr])
                    }
                    Some((_, _, la)) => a > la,
                };
                if better {
                    leave = Some((r, ratio, a));
                }
            }
            let (r, ratio, _) = leave.expect("theta_max finite implies a candidate");
            if ratio <= ptol {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, q);
        }
    }

    fn dual_loop(&mut self) -> LpStatus {
        let dtol = T::lit(self.opts.dual_tol);
        let ptol = T::lit(self.opts.primal_tol);
        let ptiv = T::lit(self.opts.pivot_tol);
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return LpStatus::IterationLimit;
            }
            let bland = degenerate > self.opts.degenerate_limit;
            let mut leave: Option<usize> = None;
            for (r, b) in self.rhs.iter().enumerate() {
                if *b >= -ptol {
                    continue;
                }
                let better = match leave {
                    None => true,
                    Some(l) if bland => self.basis[r] < self.basis[l],
                    Some(l) => *b < self.rhs[l],
                };
                if better {
                    leave = Some(r);
                }
            }
            let Some(r) = leave else {
                return LpStatus::Optimal;
            };
            let row = &self.rows[r];
            let mut theta_max = T::infinity();
            for (j, a) in row.iter().enumerate() {
                if *a < -ptiv {
                    theta_max = theta_max.min((self.d[j].max(T::zero()) + dtol) / -*a);
                }
            }
            if theta_max.is_infinite() {
                return LpStatus::Infeasible;
            }
            let mut enter: Option<(usize, T, T)> = None;
            for (j, a) in row.iter().enumerate() {
                if !(*a < -ptiv) {
                    continue;
                }
                let ratio = self.d[j].max(T::zero()) / -*a;
                if ratio > theta_max {
                    continue;
                }
                let better = match enter {
                    None => true,
                    Some((k, eratio, _)) if bland => {
                        ratio < eratio || (ratio == eratio && self.nonbasic[j] < self.nonbasic[k])
                    }
                    Some((_, _, ea)) => -*a > ea,
                };
                if better {
                    enter = Some((j, ratio, -*a));
                }
            }
            let (q, ratio, _) = enter.expect("theta_max finite implies a candidate");
            if ratio <= dtol {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, q);
        }
    }

    /// Current primal point in original units.
    pub(crate) fn primal(&self, lp: &LinearProgram<T>) -> Vec<T> {
        let xs = self.scaled_values();
        (0..lp.num_vars())
            .map(|j| self.lower[j] + self.col_scale[j] * xs[j].max(T::zero()))
            .collect()
    }

    fn reduced_cost(&self, v: usize) -> T {
        match self.pos[v] {
            Pos::Nonbasic(s) => self.d[s],
            Pos::Basic(_) => T::zero(),
        }
    }

    pub(crate) fn extract(&self, lp: &LinearProgram<T>, status: LpStatus) -> LpSolution<T> {
        let x = self.primal(lp);
        let sign = if lp.sense() == Sense::Maximize { -T::one() } else { T::one() };
        let mut duals = vec![T::zero(); lp.constraints().len()];
        for (k, s) in self.stored.iter().enumerate() {
            if s.cons < duals.len() {
                // Scaled multiplier of a `<=` row is minus its slack's reduced cost.
                let y = -self.reduced_cost(self.n + k);
                duals[s.cons] += sign * y * s.factor / self.obj_scale;
            }
        }
        let reduced_costs = (0..self.n)
            .map(|j| sign * self.reduced_cost(j) / (self.obj_scale * self.col_scale[j]))
            .collect();
        let max_violation = lp.max_violation(&x);
        let status = if status == LpStatus::Optimal && max_violation > T::lit(self.opts.verify_tol) {
            log::warn!("simplex answer violates a row by {max_violation}");
            LpStatus::NumericalFailure
        } else {
            status
        };
        LpSolution {
            status,
            objective: lp.objective_value(&x),
            x,
            duals,
            reduced_costs,
            iterations: self.iterations,
            max_violation,
        }
    }
}

/// Column scales: magnitude hints where given, else geometric-mean equilibration.
fn column_scales<T: Scalar>(lp: &LinearProgram<T>) -> Vec<T> {
    let n = lp.num_vars();
    let hints = lp.magnitude_hints();
    let mut col = vec![T::one(); n];
    for (j, h) in hints.iter().enumerate() {
        if let Some(h) = h {
            col[j] = pow2_round(*h);
        }
    }
    let cons = lp.constraints();
    for _ in 0..4 {
        let row_scale: Vec<T> = cons
            .iter()
            .map(|c| {
                let (lo, hi) = c.terms.iter().fold((T::infinity(), T::zero()), |(lo, hi), &(j, a)| {
                    let v = (a * col[j]).abs();
                    if v > T::zero() {
                        (lo.min(v), hi.max(v))
                    } else {
                        (lo, hi)
                    }
                });
                if hi > T::zero() {
                    T::one() / (lo * hi).sqrt()
                } else {
                    T::one()
                }
            })
            .collect();
        let mut lo = vec![T::infinity(); n];
        let mut hi = vec![T::zero(); n];
        for (c, rs) in cons.iter().zip(&row_scale) {
            for &(j, a) in &c.terms {
                let v = (a * *rs).abs();
                if v > T::zero() {
                    lo[j] = lo[j].min(v);
                    hi[j] = hi[j].max(v);
                }
            }
        }
        for j in 0..n {
            if hints[j].is_none() && hi[j] > T::zero() {
                col[j] = pow2_round(T::one() / (lo[j] * hi[j]).sqrt());
            }
        }
    }
    col
}
