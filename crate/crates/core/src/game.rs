//! Congestion games with explicit strategy sets.

use crate::cost::{CostFunction, LoadCost, ModifiedCost};
use crate::error::{Error, Result};
use crate::scalar::{cost_ratio, Scalar};

/// A strategy: a sorted, duplicate-free, non-empty set of resource indices.
pub type Strategy = Vec<usize>;

/// Which per-resource costs players experience.
#[derive(Clone, Copy, Debug)]
pub enum CostFamily<'a, T> {
    /// The game's own cost functions `f`.
    Original,
    /// One modified table `f'` per resource.
    Modified(&'a [ModifiedCost<T>]),
}

/// `G = (N, E, (S_u), (f_e))` with strategies given explicitly.
#[derive(Clone, Debug, PartialEq)]
pub struct CongestionGame<T> {
    resources: Vec<CostFunction<T>>,
    players: Vec<Vec<Strategy>>,
}

/// Relative slack used when deciding whether a move strictly improves.
pub const IMPROVEMENT_TOL: f64 = 1e-9;

pub(crate) fn improves<T: Scalar>(new: T, old: T) -> bool {
    new < old - T::lit(IMPROVEMENT_TOL) * old.abs().max(T::one())
}

impl<T: Scalar> CongestionGame<T> {
    pub fn new(resources: Vec<CostFunction<T>>, players: Vec<Vec<Strategy>>) -> Result<Self> {
        let n_players = players.len();
        for (u, strategies) in players.iter().enumerate() {
            if strategies.is_empty() {
                return Err(Error::InvalidGame(format!("player {u} has no strategy")));
            }
            for (j, s) in strategies.iter().enumerate() {
                if s.is_empty() {
                    return Err(Error::InvalidGame(format!("strategy {j} of player {u} is empty")));
                }
                if let Some(&e) = s.iter().find(|&&e| e >= resources.len()) {
                    return Err(Error::InvalidGame(format!(
                        "strategy {j} of player {u} uses unknown resource {e}"
                    )));
                }
                if s.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidGame(format!(
                        "strategy {j} of player {u} must list distinct resources in increasing order"
                    )));
                }
            }
        }
        for (e, f) in resources.iter().enumerate() {
            if let Some(max) = f.max_load() {
                if max < n_players {
                    return Err(Error::InvalidGame(format!(
                        "resource {e} covers loads up to {max} but the game has {n_players} players"
                    )));
                }
            }
        }
        Ok(Self { resources, players })
    }

    /// Sorts and deduplicates each strategy before validating.
    pub fn from_unsorted(resources: Vec<CostFunction<T>>, mut players: Vec<Vec<Strategy>>) -> Result<Self> {
        for s in players.iter_mut().flatten() {
            s.sort_unstable();
            s.dedup();
        }
        Self::new(resources, players)
    }

    /// Every player chooses exactly one resource out of `allowed[u]`.
    pub fn singleton(resources: Vec<CostFunction<T>>, allowed: Vec<Vec<usize>>) -> Result<Self> {
        let players = allowed
            .into_iter()
            .map(|rs| rs.into_iter().map(|e| vec![e]).collect())
            .collect();
        Self::new(resources, players)
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn num_resources(&self) -> usize {
        self.resources.len()
    }

    pub fn resources(&self) -> &[CostFunction<T>] {
        &self.resources
    }

    pub fn resource(&self, e: usize) -> &CostFunction<T> {
        &self.resources[e]
    }

    pub fn strategies(&self, player: usize) -> &[Strategy] {
        &self.players[player]
    }

    pub fn players(&self) -> &[Vec<Strategy>] {
        &self.players
    }

    /// `prod_u |S_u|` as a float, so huge spaces do not overflow.
    pub fn profile_space(&self) -> f64 {
        self.players.iter().map(|s| s.len() as f64).product()
    }

    fn cost_at(&self, e: usize, load: usize, family: CostFamily<'_, T>) -> Result<T> {
        match family {
            CostFamily::Original => self.resources[e].at(load),
            CostFamily::Modified(tables) => tables
                .get(e)
                .ok_or_else(|| Error::Certificate(format!("no modified cost for resource {e}")))?
                .at(load),
        }
    }

    fn partial_sum(&self, e: usize, from: usize, to: usize, family: CostFamily<'_, T>) -> Result<T> {
        let mut acc = T::zero();
        for i in from + 1..=to {
            acc += self.cost_at(e, i, family)?;
        }
        Ok(acc)
    }

    fn check_player(&self, profile: &StrategyProfile, player: usize) -> Result<()> {
        if profile.choices.len() != self.num_players() || profile.loads.len() != self.num_resources() {
            return Err(Error::InvalidProfile("profile does not match the game dimensions".into()));
        }
        if player >= self.num_players() {
            return Err(Error::IndexOutOfRange(format!("player {player}")));
        }
        Ok(())
    }

    /// `c_u(s) = sum_{e in s_u} f_e(n_e(s))`.
    pub fn player_cost(&self, profile: &StrategyProfile, player: usize, family: CostFamily<'_, T>) -> Result<T> {
        self.check_player(profile, player)?;
        let s = &self.players[player][profile.choices[player]];
        s.iter().map(|&e| self.cost_at(e, profile.loads[e], family)).sum()
    }

    /// `c_u(s'_u, s_{-u})` without building the deviated profile.
    pub fn deviation_cost(
        &self,
        profile: &StrategyProfile,
        player: usize,
        alt: usize,
        family: CostFamily<'_, T>,
    ) -> Result<T> {
        self.check_player(profile, player)?;
        let strategies = &self.players[player];
        let target = strategies.get(alt).ok_or(Error::InvalidStrategy {
            player,
            index: alt,
            count: strategies.len(),
        })?;
        let current = &strategies[profile.choices[player]];
        target
            .iter()
            .map(|&e| {
                let extra = usize::from(current.binary_search(&e).is_err());
                self.cost_at(e, profile.loads[e] + extra, family)
            })
            .sum()
    }

    /// Rosenthal potential `sum_e sum_{i=1}^{n_e(s)} f_e(i)` under the given family.
    pub fn rosenthal_potential(&self, profile: &StrategyProfile, family: CostFamily<'_, T>) -> Result<T> {
        let mut acc = T::zero();
        for (e, &load) in profile.loads.iter().enumerate() {
            acc += self.partial_sum(e, 0, load, family)?;
        }
        Ok(acc)
    }

    /// Potential of the subgame of `subset` with everyone else frozen:
    /// `sum_e sum_{i=1}^{n_e^F(s)} f_e(i + n_e^{N\F}(s))`.
    pub fn subgame_potential(
        &self,
        profile: &StrategyProfile,
        subset: &PlayerSubset,
        family: CostFamily<'_, T>,
    ) -> Result<T> {
        if subset.len() != self.num_players() {
            return Err(Error::InvalidProfile("subset size differs from player count".into()));
        }
        let inside = self.subset_loads(profile, subset);
        let mut acc = T::zero();
        for (e, (&total, &mine)) in profile.loads.iter().zip(&inside).enumerate() {
            acc += self.partial_sum(e, total - mine, total, family)?;
        }
        Ok(acc)
    }

    /// `n_e^F(s)` for every resource.
    pub fn subset_loads(&self, profile: &StrategyProfile, subset: &PlayerSubset) -> Vec<usize> {
        let mut loads = vec![0; self.num_resources()];
        for u in subset.members() {
            for &e in &self.players[u][profile.choices[u]] {
                loads[e] += 1;
            }
        }
        loads
    }

    /// Best response with ties broken towards the lowest strategy index.
    pub fn best_response(
        &self,
        profile: &StrategyProfile,
        player: usize,
        family: CostFamily<'_, T>,
    ) -> Result<(usize, T)> {
        self.check_player(profile, player)?;
        let mut best = (0, self.deviation_cost(profile, player, 0, family)?);
        for j in 1..self.players[player].len() {
            let c = self.deviation_cost(profile, player, j, family)?;
            if improves(c, best.1) {
                best = (j, c);
            }
        }
        Ok(best)
    }

    /// Best response against the empty profile, `BR_u(0)`.
    pub fn optimistic_response(&self, player: usize) -> Result<(usize, T)> {
        let mut best: Option<(usize, T)> = None;
        for (j, s) in self.players[player].iter().enumerate() {
            let c = s.iter().map(|&e| self.resources[e].at(1)).sum::<Result<T>>()?;
            match best {
                Some((_, b)) if !improves(c, b) => {}
                _ => best = Some((j, c)),
            }
        }
        best.ok_or_else(|| Error::InvalidGame(format!("player {player} has no strategy")))
    }

    /// `l_u = c_u(BR_u(0))`.
    pub fn optimistic_cost(&self, player: usize) -> Result<T> {
        Ok(self.optimistic_response(player)?.1)
    }

    /// Profile in which everyone plays `BR_u(0)`.
    pub fn optimistic_profile(&self) -> Result<StrategyProfile> {
        let choices = (0..self.num_players())
            .map(|u| self.optimistic_response(u).map(|r| r.0))
            .collect::<Result<Vec<_>>>()?;
        StrategyProfile::new(self, choices)
    }

    /// Social cost `sum_u c_u(s) = sum_e n_e f_e(n_e)` under the original costs.
    pub fn social_cost(&self, profile: &StrategyProfile) -> Result<T> {
        let mut acc = T::zero();
        for (e, &load) in profile.loads.iter().enumerate() {
            if load > 0 {
                acc += T::of_usize(load) * self.resources[e].at(load)?;
            }
        }
        Ok(acc)
    }

    /// Checks `alpha * c_u(s'_u, s_{-u}) >= c_u(s)` for every player and alternative.
    pub fn verify_alpha_equilibrium(
        &self,
        profile: &StrategyProfile,
        alpha: T,
        family: CostFamily<'_, T>,
    ) -> Result<EquilibriumCheck<T>> {
        let mut worst = Deviation { player: 0, strategy: 0, ratio: T::one() };
        let mut holds = true;
        for u in 0..self.num_players() {
            let current = self.player_cost(profile, u, family)?;
            for j in 0..self.players[u].len() {
                if j == profile.choices[u] {
                    continue;
                }
                let alt = self.deviation_cost(profile, u, j, family)?;
                if improves(alpha * alt, current) {
                    holds = false;
                }
                let ratio = cost_ratio(current, alt);
                if ratio > worst.ratio {
                    worst = Deviation { player: u, strategy: j, ratio };
                }
            }
        }
        Ok(EquilibriumCheck { holds, worst })
    }
}

/// Largest single-move improvement ratio found by an equilibrium scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Deviation<T> {
    pub player: usize,
    pub strategy: usize,
    /// `c_u(s) / c_u(s'_u, s_{-u})`, `1` when nobody can improve.
    pub ratio: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquilibriumCheck<T> {
    pub holds: bool,
    pub worst: Deviation<T>,
}

/// One strategy index per player plus the induced loads.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StrategyProfile {
    choices: Vec<usize>,
    loads: Vec<usize>,
}

impl StrategyProfile {
    pub fn new<T: Scalar>(game: &CongestionGame<T>, choices: Vec<usize>) -> Result<Self> {
        if choices.len() != game.num_players() {
            return Err(Error::InvalidProfile(format!(
                "{} choices for {} players",
                choices.len(),
                game.num_players()
            )));
        }
        for (u, &c) in choices.iter().enumerate() {
            let count = game.strategies(u).len();
            if c >= count {
                return Err(Error::InvalidStrategy { player: u, index: c, count });
            }
        }
        let loads = Self::compute_loads(game, &choices);
        Ok(Self { choices, loads })
    }

    fn compute_loads<T: Scalar>(game: &CongestionGame<T>, choices: &[usize]) -> Vec<usize> {
        let mut loads = vec![0; game.num_resources()];
        for (u, &c) in choices.iter().enumerate() {
            for &e in &game.strategies(u)[c] {
                loads[e] += 1;
            }
        }
        loads
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    pub fn loads(&self) -> &[usize] {
        &self.loads
    }

    pub fn choice(&self, player: usize) -> usize {
        self.choices[player]
    }

    /// The profile after `player` switches to `strategy`; `self` is unchanged.
    pub fn with_choice<T: Scalar>(&self, game: &CongestionGame<T>, player: usize, strategy: usize) -> Result<Self> {
        let count = game.strategies(player).len();
        if strategy >= count {
            return Err(Error::InvalidStrategy { player, index: strategy, count });
        }
        let mut next = self.clone();
        next.switch(game, player, strategy);
        Ok(next)
    }

    /// In-place switch used by the dynamics loops.
    pub(crate) fn switch<T: Scalar>(&mut self, game: &CongestionGame<T>, player: usize, strategy: usize) {
        let old = self.choices[player];
        for &e in &game.strategies(player)[old] {
            self.loads[e] -= 1;
        }
        for &e in &game.strategies(player)[strategy] {
            self.loads[e] += 1;
        }
        self.choices[player] = strategy;
    }

    /// True iff the stored loads equal a fresh recount from the choices.
    pub fn loads_consistent<T: Scalar>(&self, game: &CongestionGame<T>) -> bool {
        Self::compute_loads(game, &self.choices) == self.loads
    }
}

/// A subset `F` of the players.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlayerSubset {
    mask: Vec<bool>,
}

impl PlayerSubset {
    pub fn full(players: usize) -> Self {
        Self { mask: vec![true; players] }
    }

    pub fn empty(players: usize) -> Self {
        Self { mask: vec![false; players] }
    }

    pub fn from_members(players: usize, members: &[usize]) -> Result<Self> {
        let mut mask = vec![false; players];
        for &u in members {
            *mask
                .get_mut(u)
                .ok_or_else(|| Error::IndexOutOfRange(format!("player {u} of {players}")))? = true;
        }
        Ok(Self { mask })
    }

    /// Bit `u` of `bits` selects player `u`; requires `players <= 64`.
    pub fn from_bits(players: usize, bits: u64) -> Self {
        assert!(players <= 64, "bit mask covers at most 64 players");
        Self { mask: (0..players).map(|u| bits >> u & 1 == 1).collect() }
    }

    pub fn complement(&self) -> Self {
        Self { mask: self.mask.iter().map(|b| !b).collect() }
    }

    pub fn contains(&self, player: usize) -> bool {
        self.mask.get(player).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|b| *b)
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, b)| **b).map(|(u, _)| u)
    }
}
