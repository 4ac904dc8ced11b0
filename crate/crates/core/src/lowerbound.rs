//! The dual program LPD_h and selfish-scheduling instances built from its solutions.
//!
//! `y(n, m)` is the mass of machines that carry `n` players in the bad
//! equilibrium `s*` and `m` players in the good profile `s`.

use crate::cost::{CostFunction, LoadCost};
use crate::error::{Error, Result};
use crate::game::{CongestionGame, StrategyProfile};
use crate::lp::{self, Constraint, LazyOptions, LinearProgram, Sense};
use crate::scalar::{cost_ratio, Scalar};
use crate::smoothness::{sc_objective, CostValues, MBound, ScOracle};

/// Entries below this are treated as zero before rounding.
pub const SUPPORT_CUTOFF: f64 = 1e-9;
/// Largest scale `M` tried by [`construct_instance`].
pub const MAX_SCALE: u64 = 1_000_000;
/// Largest number of machines [`construct_instance`] will build.
pub const MAX_MACHINES: u64 = 5_000_000;

/// Column of `y(n, m)` in [`build_lpd`].
pub fn lpd_index(n: usize, m: usize, n_max: usize) -> usize {
    n * (n_max + 1) + m
}

fn check_h<T: Scalar>(h: &[T], n_max: usize) -> Result<()> {
    if h.len() <= n_max {
        return Err(Error::IndexOutOfRange(format!("h tabulated to {} < N = {n_max}", h.len() as isize - 1)));
    }
    if !h[0].is_zero() {
        return Err(Error::InvalidCost(format!("h(0) = {} must be 0", h[0])));
    }
    if h[..=n_max].windows(2).any(|w| w[1] < w[0]) || h.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCost("h must be finite and non-decreasing".into()));
    }
    Ok(())
}

/// `max sum h(n) y(n,m)` subject to `sum h(m) y(n,m) <= 1` and, for `n = 1..=N`,
/// `sum_m n y(n,m) - sum_m m y(n-1,m) <= 0`, with `y >= 0`.
pub fn build_lpd<T: Scalar>(h: &[T], n_max: usize) -> Result<LinearProgram<T>> {
    check_h(h, n_max)?;
    let mut names = Vec::with_capacity((n_max + 1) * (n_max + 1));
    for n in 0..=n_max {
        for m in 0..=n_max {
            names.push(format!("y{n}_{m}"));
        }
    }
    let mut lp = LinearProgram::new(Sense::Maximize, names);
    for n in 1..=n_max {
        for m in 0..=n_max {
            lp.set_objective(lpd_index(n, m, n_max), h[n])?;
        }
    }
    let mut norm = Vec::new();
    for n in 0..=n_max {
        for m in 1..=n_max {
            if !h[m].is_zero() {
                norm.push((lpd_index(n, m, n_max), h[m]));
            }
        }
    }
    lp.add_constraint(Constraint::le(norm, T::one()))?;
    for n in 1..=n_max {
        let mut terms: Vec<(usize, T)> = (0..=n_max).map(|m| (lpd_index(n, m, n_max), T::of_usize(n))).collect();
        terms.extend((1..=n_max).map(|m| (lpd_index(n - 1, m, n_max), -T::of_usize(m))));
        lp.add_constraint(Constraint::le(terms, T::zero()))?;
    }
    Ok(lp)
}

/// A point of LPD_h together with the `h` it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution<T> {
    pub n_max: usize,
    /// `y[n][m]`.
    pub y: Vec<Vec<T>>,
    pub h: Vec<T>,
    /// `sum h(n) y(n,m)`.
    pub objective: T,
}

impl<T: Scalar> DualSolution<T> {
    pub fn new(y: Vec<Vec<T>>, h: Vec<T>) -> Result<Self> {
        let n_max = y.len().checked_sub(1).ok_or_else(|| Error::IndexOutOfRange("empty y".into()))?;
        if y.iter().any(|r| r.len() != n_max + 1) {
            return Err(Error::IndexOutOfRange("y must be square".into()));
        }
        if y.iter().flatten().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::Rounding("y must be finite and non-negative".into()));
        }
        check_h(&h, n_max)?;
        let mut s = Self { n_max, y, h, objective: T::zero() };
        s.objective = s.value();
        Ok(s)
    }

    pub fn zero(h: Vec<T>, n_max: usize) -> Result<Self> {
        Self::new(vec![vec![T::zero(); n_max + 1]; n_max + 1], h)
    }

    /// Reads `y` off a solution of [`build_lpd`].
    pub fn from_lpd(x: &[T], h: Vec<T>, n_max: usize) -> Result<Self> {
        let y = (0..=n_max)
            .map(|n| (0..=n_max).map(|m| x[lpd_index(n, m, n_max)].max(T::zero())).collect())
            .collect();
        Self::new(y, h)
    }

    fn value(&self) -> T {
        let mut acc = T::zero();
        for (n, row) in self.y.iter().enumerate() {
            for v in row {
                acc += self.h[n] * *v;
            }
        }
        acc
    }

    /// `sum h(m) y(n,m)`.
    pub fn normalization(&self) -> T {
        let mut acc = T::zero();
        for row in &self.y {
            for (m, v) in row.iter().enumerate() {
                acc += self.h[m] * *v;
            }
        }
        acc
    }

    /// Largest `sum_m n y(n,m) - sum_m m y(n-1,m)` over `n >= 1` (zero if all hold).
    pub fn flow_violation(&self) -> T {
        (1..=self.n_max)
            .map(|n| self.demand(n) - self.supply(n - 1))
            .fold(T::zero(), T::max)
    }

    fn demand(&self, n: usize) -> T {
        T::of_usize(n) * self.y[n].iter().fold(T::zero(), |a, v| a + *v)
    }

    fn supply(&self, n: usize) -> T {
        self.y[n].iter().enumerate().fold(T::zero(), |a, (m, v)| a + T::of_usize(m) * *v)
    }

    pub fn is_feasible(&self, tol: T) -> bool {
        self.normalization() <= T::one() + tol && self.flow_violation() <= tol
    }

    /// Drops tiny entries, shrinks levels until every flow row holds, then
    /// scales into the normalization. The result is feasible in exact terms
    /// up to rounding of the final division.
    pub fn repaired(&self) -> Result<Self> {
        let mut y = self.y.clone();
        for v in y.iter_mut().flatten() {
            if *v < T::lit(SUPPORT_CUTOFF) {
                *v = T::zero();
            }
        }
        let mut out = Self { y, ..self.clone() };
        for n in 1..=out.n_max {
            let (need, have) = (out.demand(n), out.supply(n - 1));
            if need > have {
                let f = if need > T::zero() { have / need } else { T::zero() };
                for v in out.y[n].iter_mut() {
                    *v *= f * (T::one() - T::epsilon() * T::lit(4.0));
                }
            }
        }
        let norm = out.normalization();
        if norm > T::one() {
            for v in out.y.iter_mut().flatten() {
                *v = *v / norm * (T::one() - T::epsilon() * T::lit(4.0));
            }
        }
        Self::new(out.y, out.h)
    }
}

/// Solves [`build_lpd`] with the simplex directly.
pub fn solve_lpd<T: Scalar>(h: &[T], n_max: usize) -> Result<DualSolution<T>> {
    let sol = lp::solve(&build_lpd(h, n_max)?)?.into_optimal()?;
    DualSolution::from_lpd(&sol.x, h[..=n_max].to_vec(), n_max)
}

/// Large-N route: solves the social-cost primal LP for `f` with lazily generated
/// rows and reads `y` from its multipliers. Row `(n, m)` carries `y(n, m)`;
/// the bound `f'(n) >= f(n)` stands for row `(n, 0)`. Returns the primal
/// optimum and the repaired dual. A tiny secondary term picks the smallest
/// optimal table, which keeps the basis well conditioned at large `N`.
pub fn dual_from_lp_sc<T: Scalar>(f: &CostFunction<T>, n_max: usize) -> Result<(T, DualSolution<T>)> {
    if n_max == 0 {
        return Err(Error::IndexOutOfRange("N must be at least 1".into()));
    }
    let h = sc_objective(f, n_max)?;
    let lam = n_max + 2;
    let mut names: Vec<String> = (0..=n_max + 1).map(|i| format!("fp{i}")).collect();
    names.push("lambda".into());
    let mut core = LinearProgram::new(Sense::Minimize, names);
    core.set_objective(lam, T::one())?;
    for n in 1..=n_max {
        let fv = f.at(n)?;
        core.set_lower(n, fv)?;
        if fv > T::zero() {
            core.set_magnitude(n, fv)?;
            core.set_objective(n, T::lit(STABILIZER) / fv)?;
        }
    }
    core.add_constraint(Constraint::ge(vec![(lam, h[1]), (1, -T::one())], T::zero()))?;
    let oracle =
        ScOracle { f: CostValues::tabulate(f, n_max)?, max_n: n_max, m_bound: MBound::Fixed(n_max), lambda_var: lam };
    let opts = LazyOptions { max_rounds: 1000, cuts_per_round: n_max + 1, purge_every: 1, ..Default::default() };
    let out = lp::solve_lazy(&core, &oracle, &opts)?;
    let sol = out.solution.into_optimal()?;
    let mut y = vec![vec![T::zero(); n_max + 1]; n_max + 1];
    for (c, dual) in out.program.constraints().iter().zip(&sol.duals) {
        let (n, m) = row_key(c, lam)?;
        y[n][m] += dual.max(T::zero());
    }
    for n in 1..=n_max {
        y[n][0] += (sol.reduced_costs[n] / T::of_usize(n)).max(T::zero());
    }
    let dual = DualSolution::new(y, h)?.repaired()?;
    Ok((sol.x[lam], dual))
}

/// Weight of the tie-breaking term `sum f'(n) / f(n)` in the primal objective.
const STABILIZER: f64 = 1e-9;

/// `(n, m)` of a row `lambda h(m) - m f'(n+1) + n f'(n) >= h(n)`.
fn row_key<T: Scalar>(c: &Constraint<T>, lambda_var: usize) -> Result<(usize, usize)> {
    let mut n = None;
    let mut m = 0;
    for &(j, a) in &c.terms {
        if j == lambda_var {
            continue;
        }
        if a < T::zero() {
            m = (-a).round().as_f64() as usize;
            n = Some(j - 1);
        } else if n.is_none() {
            n = Some(j);
        }
    }
    n.map(|n| (n, m)).ok_or_else(|| Error::Structure(format!("cannot read (n, m) from row {c:?}")))
}

/// `|primal - dual| <= 1e-5 * max(1, |primal|)`.
pub fn lp_duality_check<T: Scalar>(primal: T, dual: T) -> bool {
    (primal - dual).abs() <= T::lit(1e-5) * T::one().max(primal.abs())
}

/// Machine of pool `R(n, m)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Machine {
    pub n: usize,
    pub m: usize,
}

/// Player of group `N_n` with its two machines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduledPlayer {
    pub group: usize,
    pub equilibrium: usize,
    pub optimal: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchedulingInstance<T> {
    pub n_max: usize,
    pub scale: u64,
    pub epsilon: T,
    /// Machines per pool, `counts[n][m]`.
    pub counts: Vec<Vec<u64>>,
    pub machines: Vec<Machine>,
    pub players: Vec<ScheduledPlayer>,
}

impl<T: Scalar> SchedulingInstance<T> {
    pub fn equilibrium_loads(&self) -> Vec<usize> {
        let mut l = vec![0; self.machines.len()];
        for p in &self.players {
            l[p.equilibrium] += 1;
        }
        l
    }

    pub fn optimal_loads(&self) -> Vec<usize> {
        let mut l = vec![0; self.machines.len()];
        for p in &self.players {
            l[p.optimal] += 1;
        }
        l
    }

    /// The instance as a game with one shared cost: strategy 0 of each player is
    /// its equilibrium machine, strategy 1 its optimal machine. Also returns `s*` and `s`.
    pub fn to_game(&self, cost: &CostFunction<T>) -> Result<(CongestionGame<T>, StrategyProfile, StrategyProfile)> {
        let resources = vec![cost.clone(); self.machines.len()];
        let players = self.players.iter().map(|p| vec![vec![p.equilibrium], vec![p.optimal]]).collect();
        let game = CongestionGame::new(resources, players)?;
        let eq = StrategyProfile::new(&game, vec![0; self.players.len()])?;
        let opt = StrategyProfile::new(&game, vec![1; self.players.len()])?;
        Ok((game, eq, opt))
    }
}

/// Floors `y * scale` level by level, then removes machines from the lowest-`m`
/// pools of a level until its flow row holds again.
fn round_counts<T: Scalar>(y: &[Vec<T>], scale: u64) -> Vec<Vec<u64>> {
    let s = T::of_usize(scale as usize);
    let mut c: Vec<Vec<u64>> = y
        .iter()
        .map(|row| row.iter().map(|v| (*v * s + T::lit(1e-9)).floor().as_f64().max(0.0) as u64).collect())
        .collect();
    for n in 1..c.len() {
        let supply: u64 = c[n - 1].iter().enumerate().map(|(m, k)| m as u64 * k).sum();
        let mut demand: u64 = n as u64 * c[n].iter().sum::<u64>();
        let mut m = 0;
        while demand > supply {
            if c[n][m] == 0 {
                m += 1;
                continue;
            }
            c[n][m] -= 1;
            demand -= n as u64;
        }
    }
    c
}

/// Rounds the dual down to integer machine counts at the first scale `M`
/// (1 to 100, then growing by 25%) whose objective is at least
/// `(1 - epsilon / lambda) lambda`, and builds both assignments.
pub fn construct_instance<T: Scalar>(dual: &DualSolution<T>, epsilon: T) -> Result<SchedulingInstance<T>> {
    if !(epsilon > T::zero()) {
        return Err(Error::Rounding(format!("epsilon = {epsilon} must be positive")));
    }
    if !dual.is_feasible(T::lit(1e-7)) {
        return Err(Error::Rounding("dual point is not feasible for LPD".into()));
    }
    let n_max = dual.n_max;
    let mut y = dual.y.clone();
    for v in y.iter_mut().flatten() {
        if *v < T::lit(SUPPORT_CUTOFF) {
            *v = T::zero();
        }
    }
    let target = dual.objective - epsilon;
    let mut scale: u64 = 1;
    let counts = loop {
        let c = round_counts(&y, scale);
        let total: u64 = c.iter().flatten().sum();
        if total > MAX_MACHINES {
            return Err(Error::Rounding(format!("{total} machines at M = {scale}; try a larger epsilon")));
        }
        let obj = c
            .iter()
            .enumerate()
            .flat_map(|(n, row)| row.iter().map(move |k| (n, *k)))
            .fold(T::zero(), |a, (n, k)| a + dual.h[n] * T::of_usize(k as usize));
        if obj >= target * T::of_usize(scale as usize) {
            break c;
        }
        scale = if scale < 100 { scale + 1 } else { scale + scale / 4 };
        if scale > MAX_SCALE {
            return Err(Error::Rounding(format!("no scale up to {MAX_SCALE} reaches the target; try a larger epsilon")));
        }
    };

    let mut machines = Vec::new();
    let mut first = vec![vec![0usize; n_max + 1]; n_max + 1];
    for n in 0..=n_max {
        for m in 0..=n_max {
            first[n][m] = machines.len();
            machines.extend(std::iter::repeat(Machine { n, m }).take(counts[n][m] as usize));
        }
    }
    let mut players = Vec::new();
    for n in 1..=n_max {
        // Optimal slots come from the pools R(n-1, m): m per machine.
        let mut slots = (0..=n_max).flat_map(|m| {
            let start = first[n - 1][m];
            (start..start + counts[n - 1][m] as usize).flat_map(move |e| std::iter::repeat(e).take(m))
        });
        for m in 0..=n_max {
            for e in first[n][m]..first[n][m] + counts[n][m] as usize {
                for _ in 0..n {
                    let optimal = slots.next().ok_or_else(|| Error::Structure(format!("group {n} ran out of slots")))?;
                    players.push(ScheduledPlayer { group: n, equilibrium: e, optimal });
                }
            }
        }
    }
    let inst = SchedulingInstance { n_max, scale, epsilon, counts, machines, players };
    check_structure(&inst)?;
    Ok(inst)
}

fn check_structure<T: Scalar>(inst: &SchedulingInstance<T>) -> Result<()> {
    let eq = inst.equilibrium_loads();
    let opt = inst.optimal_loads();
    for (e, mach) in inst.machines.iter().enumerate() {
        if eq[e] != mach.n || opt[e] > mach.m {
            return Err(Error::Structure(format!(
                "machine {e} in R({}, {}) has {} equilibrium and {} optimal players",
                mach.n, mach.m, eq[e], opt[e]
            )));
        }
    }
    for (u, p) in inst.players.iter().enumerate() {
        let (a, b) = (inst.machines.get(p.equilibrium), inst.machines.get(p.optimal));
        match (a, b) {
            (Some(a), Some(b)) if a.n == p.group && b.n + 1 == p.group => {}
            _ => return Err(Error::Structure(format!("player {u} is assigned outside its pools"))),
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapReport<T> {
    /// Every player's deviation lands on a machine whose load is at least its own.
    pub eq_is_pne: bool,
    pub equilibrium_cost: T,
    pub optimal_cost: T,
    /// `equilibrium_cost / optimal_cost`; NaN when degenerate.
    pub ratio: T,
    /// No machine carries cost in `s`.
    pub degenerate: bool,
}

/// Checks the assignment invariants and the structural equilibrium property,
/// and evaluates `sum h(load)` in both profiles.
pub fn verify_gap<T: Scalar>(inst: &SchedulingInstance<T>, h: &[T]) -> Result<GapReport<T>> {
    check_structure(inst)?;
    if h.len() <= inst.n_max {
        return Err(Error::IndexOutOfRange(format!("h tabulated to {} < N = {}", h.len() as isize - 1, inst.n_max)));
    }
    let eq = inst.equilibrium_loads();
    let opt = inst.optimal_loads();
    let eq_is_pne = inst.players.iter().all(|p| p.optimal == p.equilibrium || eq[p.optimal] + 1 >= eq[p.equilibrium]);
    let equilibrium_cost = eq.iter().fold(T::zero(), |a, &l| a + h[l]);
    let optimal_cost = opt.iter().fold(T::zero(), |a, &l| a + h[l]);
    let degenerate = optimal_cost.is_zero();
    let ratio = if degenerate { T::nan() } else { cost_ratio(equilibrium_cost, optimal_cost) };
    Ok(GapReport { eq_is_pne, equilibrium_cost, optimal_cost, ratio, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(n_max: usize) -> Vec<f64> {
        (0..=n_max).map(|n| (n * n) as f64).collect()
    }

    fn toy() -> DualSolution<f64> {
        DualSolution::new(vec![vec![0.0, 0.5], vec![0.0, 0.5]], sq(1)).unwrap()
    }

    #[test]
    fn lpd_small() {
        let lp = build_lpd(&sq(1), 1).unwrap();
        assert_eq!(lp.num_vars(), 4);
        assert_eq!(lp.constraints().len(), 2);
        let d = solve_lpd(&sq(1), 1).unwrap();
        assert!((d.objective - 1.0).abs() < 1e-9);
        let t = toy();
        assert_eq!(t.objective, 0.5);
        assert!(t.is_feasible(0.0));
        assert_eq!(DualSolution::zero(sq(1), 1).unwrap().objective, 0.0);
    }

    #[test]
    fn lpd_rejects_bad_h() {
        assert!(build_lpd(&[1.0, 2.0], 1).is_err());
        assert!(build_lpd(&[0.0, 2.0, 1.0], 2).is_err());
        assert!(build_lpd(&[0.0], 1).is_err());
    }

    #[test]
    fn toy_instance() {
        let inst = construct_instance(&toy(), 0.01).unwrap();
        assert_eq!(inst.scale, 2);
        assert_eq!(inst.machines, vec![Machine { n: 0, m: 1 }, Machine { n: 1, m: 1 }]);
        assert_eq!(inst.players, vec![ScheduledPlayer { group: 1, equilibrium: 1, optimal: 0 }]);
        let gap = verify_gap(&inst, &sq(1)).unwrap();
        assert!(gap.eq_is_pne);
        assert_eq!(gap.ratio, 1.0);
        let (g, eq, opt) = inst.to_game(&CostFunction::linear()).unwrap();
        assert!(g.verify_alpha_equilibrium(&eq, 1.0, crate::game::CostFamily::Original).unwrap().holds);
        assert_eq!(opt.loads(), &[1, 0]);
    }

    #[test]
    fn empty_instance_is_degenerate() {
        let inst = construct_instance(&DualSolution::zero(sq(2), 2).unwrap(), 0.1).unwrap();
        assert!(inst.machines.is_empty() && inst.players.is_empty());
        let gap = verify_gap(&inst, &sq(2)).unwrap();
        assert!(gap.degenerate && gap.ratio.is_nan() && gap.eq_is_pne);
    }

    #[test]
    fn broken_assignment_is_flagged() {
        let mut inst = construct_instance(&toy(), 0.01).unwrap();
        inst.players[0].optimal = 1;
        assert!(matches!(verify_gap(&inst, &sq(1)), Err(Error::Structure(_))));
    }

    #[test]
    fn rounding_respects_flows() {
        let y = vec![vec![0.0, 0.0, 0.3], vec![0.0, 0.45, 0.0], vec![0.0, 0.0, 0.0]];
        let c = round_counts(&y, 10);
        assert_eq!(c[0][2], 3);
        assert_eq!(c[1][1], 4);
        let y = vec![vec![0.0, 0.19], vec![0.0, 0.2]];
        assert_eq!(round_counts(&y, 10), vec![vec![0, 1], vec![0, 1]]);
    }

    #[test]
    fn row_keys() {
        let lam = 9;
        let c = Constraint::ge(vec![(lam, 4.0), (4, -2.0), (3, 3.0)], 9.0);
        assert_eq!(row_key(&c, lam).unwrap(), (3, 2));
        let c = Constraint::ge(vec![(lam, 1.0), (1, -1.0)], 0.0);
        assert_eq!(row_key(&c, lam).unwrap(), (0, 1));
        let c = Constraint::ge(vec![(5, 5.0)], 25.0);
        assert_eq!(row_key(&c, lam).unwrap(), (5, 0));
    }

    #[test]
    fn duality_on_small_linear() {
        let f = CostFunction::linear();
        let (primal, dual) = dual_from_lp_sc(&f, 12).unwrap();
        let direct = solve_lpd(&sc_objective(&f, 12).unwrap(), 12).unwrap();
        assert!(lp_duality_check(primal, direct.objective), "{primal} vs {}", direct.objective);
        assert!(dual.is_feasible(1e-12));
        assert!(lp_duality_check(primal, dual.objective), "{primal} vs {}", dual.objective);
        assert!(!lp_duality_check(1.0, 1.001));
    }
}
