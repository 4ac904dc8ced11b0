//! Exhaustive ground truth on small games: equilibria, stretch, price of anarchy,
//! and a grid search for the smoothness factor of a single cost function.

use rayon::prelude::*;

use crate::cost::CostFunction;
use crate::error::{Error, Result};
use crate::game::{CongestionGame, CostFamily, PlayerSubset, StrategyProfile};
use crate::scalar::{cost_ratio, Scalar};
use crate::smoothness::ObjectiveFamily;
use crate::taxes::TaxTable;

/// Largest profile space the enumerations accept.
pub const PROFILE_CAP: f64 = 1e7;
/// Largest number of grid points `bruteforce_lambda` evaluates.
pub const GRID_CAP: f64 = 5e7;

fn guard<T: Scalar>(game: &CongestionGame<T>) -> Result<usize> {
    let space = game.profile_space();
    if space > PROFILE_CAP {
        return Err(Error::TooLarge { profiles: space, cap: PROFILE_CAP });
    }
    Ok(space as usize)
}

/// Profile number `index` in mixed radix, player 0 varying fastest.
fn decode<T: Scalar>(game: &CongestionGame<T>, mut index: usize) -> Result<StrategyProfile> {
    let choices = game
        .players()
        .iter()
        .map(|s| {
            let c = index % s.len();
            index /= s.len();
            c
        })
        .collect();
    StrategyProfile::new(game, choices)
}

/// Every profile of the game, in enumeration order.
pub fn all_profiles<T: Scalar>(game: &CongestionGame<T>) -> Result<Vec<StrategyProfile>> {
    let n = guard(game)?;
    (0..n).into_par_iter().map(|i| decode(game, i)).collect()
}

/// All `alpha`-approximate equilibria under `family`.
pub fn enumerate_equilibria<T: Scalar>(
    game: &CongestionGame<T>,
    alpha: T,
    family: CostFamily<'_, T>,
) -> Result<Vec<StrategyProfile>> {
    let n = guard(game)?;
    let hits: Vec<Option<StrategyProfile>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = decode(game, i)?;
            Ok(game.verify_alpha_equilibrium(&s, alpha, family)?.holds.then_some(s))
        })
        .collect::<Result<_>>()?;
    Ok(hits.into_iter().flatten().collect())
}

/// `max over alpha-equilibria of phi(s) / min_s phi(s)`.
pub fn exact_stretch<T: Scalar>(
    game: &CongestionGame<T>,
    alpha: T,
    eq_family: CostFamily<'_, T>,
    potential_family: CostFamily<'_, T>,
) -> Result<T> {
    let profiles = all_profiles(game)?;
    let phi: Vec<T> = profiles
        .par_iter()
        .map(|s| game.rosenthal_potential(s, potential_family))
        .collect::<Result<_>>()?;
    let min = phi.iter().copied().fold(T::infinity(), T::min);
    let eq = enumerate_equilibria(game, alpha, eq_family)?;
    let mut worst = T::one();
    for s in &eq {
        worst = worst.max(cost_ratio(game.rosenthal_potential(s, potential_family)?, min));
    }
    Ok(worst)
}

/// Outcome of [`subset_stretch_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct StretchCheck<T> {
    pub equilibria: usize,
    pub pairs_checked: usize,
    pub violations: usize,
    /// Largest `phi_F(s) / phi_F(s*_F)` seen.
    pub worst_ratio: T,
}

/// Checks `phi_F(s) <= bound * phi_F(s*)` for every `alpha`-equilibrium `s` under
/// `eq_family` and every subset `F`, where `s*` minimizes `phi_F` over the moves of
/// `F` with everyone else frozen at `s`. Requires at most 16 players.
pub fn subset_stretch_check<T: Scalar>(
    game: &CongestionGame<T>,
    alpha: T,
    eq_family: CostFamily<'_, T>,
    bound: T,
) -> Result<StretchCheck<T>> {
    let n = game.num_players();
    if n > 16 {
        return Err(Error::TooLarge { profiles: 2f64.powi(n as i32), cap: 65536.0 });
    }
    let eq = enumerate_equilibria(game, alpha, eq_family)?;
    let tol = T::lit(1e-9);
    let mut out = StretchCheck { equilibria: eq.len(), pairs_checked: 0, violations: 0, worst_ratio: T::one() };
    for s in &eq {
        for bits in 1u64..(1u64 << n) {
            let f = PlayerSubset::from_bits(n, bits);
            let here = game.subgame_potential(s, &f, CostFamily::Original)?;
            let best = subgame_minimum(game, s, &f)?;
            let ratio = cost_ratio(here, best);
            out.pairs_checked += 1;
            out.worst_ratio = out.worst_ratio.max(ratio);
            if here > bound * best + tol * T::one().max(here) {
                out.violations += 1;
            }
        }
    }
    Ok(out)
}

/// `min phi_F` over the joint strategies of `F`, others frozen at `s`.
fn subgame_minimum<T: Scalar>(game: &CongestionGame<T>, s: &StrategyProfile, f: &PlayerSubset) -> Result<T> {
    let members: Vec<usize> = f.members().collect();
    let space: f64 = members.iter().map(|&u| game.strategies(u).len() as f64).product();
    if space > PROFILE_CAP {
        return Err(Error::TooLarge { profiles: space, cap: PROFILE_CAP });
    }
    let mut best = T::infinity();
    for mut idx in 0..space as usize {
        let mut choices = s.choices().to_vec();
        for &u in &members {
            let k = game.strategies(u).len();
            choices[u] = idx % k;
            idx /= k;
        }
        let t = StrategyProfile::new(game, choices)?;
        best = best.min(game.subgame_potential(&t, f, CostFamily::Original)?);
    }
    Ok(best)
}

/// Worst equilibrium social cost over the optimum. Equilibria are taken under the
/// taxed costs when `taxes` is given; social cost always uses the original costs.
pub fn exact_poa<T: Scalar>(game: &CongestionGame<T>, taxes: Option<&TaxTable<T>>) -> Result<T> {
    let taxed = taxes.map(|t| t.taxed_costs(game.resources())).transpose()?;
    let family = match &taxed {
        Some(t) => CostFamily::Modified(t),
        None => CostFamily::Original,
    };
    let profiles = all_profiles(game)?;
    let costs: Vec<(T, bool)> = profiles
        .par_iter()
        .map(|s| Ok((game.social_cost(s)?, game.verify_alpha_equilibrium(s, T::one(), family)?.holds)))
        .collect::<Result<_>>()?;
    let opt = costs.iter().map(|c| c.0).fold(T::infinity(), T::min);
    let worst = costs.iter().filter(|c| c.1).map(|c| c.0).fold(T::zero(), T::max);
    if !costs.iter().any(|c| c.1) {
        return Err(Error::Structure("no pure equilibrium found".into()));
    }
    Ok(cost_ratio(worst, opt))
}

/// Grid of candidate values `0, step, 2 step, ..., max` for every `f'(i)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid<T> {
    pub step: T,
    pub max: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridOptimum<T> {
    pub lambda: T,
    /// `f'(0..=N+1)` at the best grid point.
    pub fprime: Vec<T>,
    /// Largest change of `lambda` caused by moving one `f'` value by one grid step.
    pub lambda_resolution: T,
}

/// Smallest `lambda` over grid tables `f'(1..=N+1)`, every constraint of the
/// family with loads up to `N` checked exhaustively.
pub fn bruteforce_lambda<T: Scalar>(
    f: &CostFunction<T>,
    n_max: usize,
    family: ObjectiveFamily,
    grid: Grid<T>,
) -> Result<GridOptimum<T>> {
    if n_max == 0 || n_max > 4 {
        return Err(Error::TooLarge { profiles: n_max as f64, cap: 4.0 });
    }
    if !(grid.step > T::zero()) || !(grid.max >= T::zero()) {
        return Err(Error::IndexOutOfRange("grid needs a positive step and non-negative max".into()));
    }
    let points = (grid.max / grid.step).floor().as_f64() as usize + 1;
    let dims = n_max + 1;
    let total = (points as f64).powi(dims as i32);
    if total > GRID_CAP {
        return Err(Error::TooLarge { profiles: total, cap: GRID_CAP });
    }
    // Rows (n, z, m, h(n), h(m)) of the family.
    let mut rows = Vec::new();
    for x in 0..=n_max {
        let zs: Vec<usize> = match family {
            ObjectiveFamily::SocialCost => vec![0],
            ObjectiveFamily::Potential => (0..=x).collect(),
        };
        for z in zs {
            let n = x - z;
            if family == ObjectiveFamily::SocialCost && z != 0 {
                continue;
            }
            let m_hi = match family {
                ObjectiveFamily::SocialCost => n_max,
                ObjectiveFamily::Potential => n_max - z,
            };
            for m in 0..=m_hi {
                if n == 0 && m == 0 {
                    continue;
                }
                rows.push((n, z, m, family.h(f, n, z)?, family.h(f, m, z)?));
            }
        }
    }
    let lambda_of = |fp: &[T]| -> T {
        let mut lam = T::one();
        for &(n, z, m, hn, hm) in &rows {
            let need = hn + T::of_usize(m) * fp[n + z + 1] - T::of_usize(n) * fp[n + z];
            if hm > T::zero() {
                lam = lam.max(need / hm);
            } else if need > T::lit(1e-12) * T::one().max(hn) {
                return T::infinity();
            }
        }
        lam
    };
    let best = (0..total as usize)
        .into_par_iter()
        .map(|mut idx| {
            let mut fp = vec![T::zero(); n_max + 2];
            for v in fp.iter_mut().skip(1) {
                *v = T::of_usize(idx % points) * grid.step;
                idx /= points;
            }
            (lambda_of(&fp), fp)
        })
        .reduce(
            || (T::infinity(), Vec::new()),
            |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );
    let lambda_resolution = rows
        .iter()
        .filter(|r| r.4 > T::zero())
        .map(|&(n, _, m, _, hm)| T::of_usize(n.max(m)) / hm)
        .fold(T::zero(), T::max)
        * grid.step;
    Ok(GridOptimum { lambda: best.0, fprime: best.1, lambda_resolution })
}
