//! Tolls derived from social-cost certificates, and local search under them.

use crate::algorithm::{beats, DEFAULT_MOVE_CAP};
use crate::cost::{CostFunction, LoadCost, ModifiedCost};
use crate::error::{Error, Result};
use crate::game::{CongestionGame, CostFamily, StrategyProfile};
use crate::scalar::Scalar;
use crate::smoothness::{ObjectiveFamily, SmoothnessCertificate};

/// Per-resource tolls `t_e(n) = f'_e(n) - f_e(n)` for loads `1..=max_load`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaxTable<T> {
    /// `taxes[e][n - 1] = t_e(n)`.
    pub taxes: Vec<Vec<T>>,
    /// Factor certified by the modified costs the tolls come from.
    pub lambda: T,
}

impl<T: Scalar> TaxTable<T> {
    /// Tolls turning `costs` into `fprime` up to `max_load`.
    pub fn from_modified(
        fprime: &[ModifiedCost<T>],
        costs: &[CostFunction<T>],
        max_load: usize,
        lambda: T,
    ) -> Result<Self> {
        if fprime.len() != costs.len() {
            return Err(Error::Certificate(format!("{} modified tables for {} resources", fprime.len(), costs.len())));
        }
        let taxes = fprime
            .iter()
            .zip(costs)
            .map(|(fp, f)| (1..=max_load).map(|n| Ok(fp.at(n)? - f.at(n)?)).collect::<Result<Vec<T>>>())
            .collect::<Result<_>>()?;
        Ok(Self { taxes, lambda })
    }

    pub fn max_load(&self) -> usize {
        self.taxes.first().map_or(0, Vec::len)
    }

    /// Toll on resource `e` at load `n` (zero at load 0).
    pub fn tax(&self, e: usize, n: usize) -> Result<T> {
        if n == 0 {
            return Ok(T::zero());
        }
        let row = self.taxes.get(e).ok_or_else(|| Error::IndexOutOfRange(format!("resource {e}")))?;
        row.get(n - 1).copied().ok_or(Error::LoadOutOfRange { load: n, max: row.len() })
    }

    /// `f_e + t_e` as tables covering loads up to `max_load`.
    pub fn taxed_costs(&self, costs: &[CostFunction<T>]) -> Result<Vec<ModifiedCost<T>>> {
        if costs.len() != self.taxes.len() {
            return Err(Error::Certificate(format!("{} tax rows for {} resources", self.taxes.len(), costs.len())));
        }
        costs
            .iter()
            .enumerate()
            .map(|(e, f)| {
                let mut values = vec![T::zero()];
                for n in 1..=self.max_load() {
                    values.push((f.at(n)? + self.tax(e, n)?).max(T::zero()));
                }
                ModifiedCost::from_table(values)
            })
            .collect()
    }
}

/// Tolls of a social-cost certificate for loads up to `max_load`.
pub fn taxes_from_certificate<T: Scalar>(
    cert: &SmoothnessCertificate<T>,
    costs: &[CostFunction<T>],
    max_load: usize,
) -> Result<TaxTable<T>> {
    if cert.objective != ObjectiveFamily::SocialCost {
        return Err(Error::Certificate("tolls come from a social-cost certificate".into()));
    }
    TaxTable::from_modified(&cert.fprime, costs, max_load, cert.lambda)
}

/// Rosenthal potential of the taxed game.
pub fn zeta_sc<T: Scalar>(
    game: &CongestionGame<T>,
    cert: &SmoothnessCertificate<T>,
    profile: &StrategyProfile,
) -> Result<T> {
    game.rosenthal_potential(profile, CostFamily::Modified(&cert.fprime))
}

#[derive(Clone, Debug)]
pub struct LocalSearch<T> {
    pub profile: StrategyProfile,
    pub moves: usize,
    /// Largest improvement ratio left under the taxed costs.
    pub local_alpha: T,
    /// Moves after which the taxed potential failed to drop.
    pub zeta_violations: usize,
}

/// Better-response dynamics under the taxed costs: the first player, in index
/// order, whose best response improves by more than a `1 + epsilon / (2N)`
/// factor moves there. Starts from `start` or the optimistic profile.
pub fn epsilon_local_search<T: Scalar>(
    game: &CongestionGame<T>,
    cert: &SmoothnessCertificate<T>,
    epsilon: T,
    start: Option<StrategyProfile>,
    move_cap: Option<usize>,
) -> Result<LocalSearch<T>> {
    if cert.fprime.len() != game.num_resources() {
        return Err(Error::Certificate(format!(
            "{} modified tables for {} resources",
            cert.fprime.len(),
            game.num_resources()
        )));
    }
    if !(epsilon > T::zero()) {
        return Err(Error::IndexOutOfRange(format!("epsilon = {epsilon} must be positive")));
    }
    let family = CostFamily::Modified(&cert.fprime);
    let excess = epsilon / (T::lit(2.0) * T::of_usize(game.num_players().max(1)));
    let cap = move_cap.unwrap_or(DEFAULT_MOVE_CAP);
    let mut profile = match start {
        Some(s) => s,
        None => game.optimistic_profile()?,
    };
    let mut zeta = game.rosenthal_potential(&profile, family)?;
    let mut moves = 0;
    let mut zeta_violations = 0;
    'scan: loop {
        for u in 0..game.num_players() {
            let now = game.player_cost(&profile, u, family)?;
            let (to, best) = game.best_response(&profile, u, family)?;
            if to != profile.choice(u) && beats(now, best, excess) {
                if moves == cap {
                    return Err(Error::MoveCapExceeded { cap, moves });
                }
                profile.switch(game, u, to);
                moves += 1;
                let next = game.rosenthal_potential(&profile, family)?;
                if !(next < zeta) {
                    zeta_violations += 1;
                }
                zeta = next;
                continue 'scan;
            }
        }
        break;
    }
    let local_alpha = game.verify_alpha_equilibrium(&profile, T::one(), family)?.worst.ratio;
    Ok(LocalSearch { profile, moves, local_alpha, zeta_violations })
}

/// Exact price of anarchy with equilibria taken under the tolls.
pub fn poa_under_taxes<T: Scalar>(game: &CongestionGame<T>, taxes: &TaxTable<T>) -> Result<T> {
    crate::oracle::exact_poa(game, Some(taxes))
}
