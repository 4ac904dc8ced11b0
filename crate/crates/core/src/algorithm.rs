//! Block-phase best-response dynamics that compute approximate equilibria.
//!
//! Players are grouped into blocks by their optimistic cost. Phase `i` lets
//! block `B_i` make p-moves under the original costs and block `B_{i+1}` make
//! q-moves under the modified costs of a strong potential certificate.

use crate::cost::LoadCost;
use crate::error::{Error, Result};
use crate::game::{improves, CongestionGame, CostFamily, StrategyProfile};
use crate::scalar::Scalar;
use crate::smoothness::{ObjectiveFamily, Scope, SmoothnessCertificate};

/// Moves allowed when no cap is given and the theoretical bound is larger.
pub const DEFAULT_MOVE_CAP: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct AlgoParams<T> {
    pub lambda: T,
    pub epsilon: T,
    pub players: usize,
    pub c: T,
    /// `1 / N^c`, which is also `q - 1`.
    pub inv_nc: T,
    pub q: T,
    pub theta_q: T,
    pub p: T,
    /// `max_e f_e(N) / f_e(1)`.
    pub delta: T,
}

/// `(theta(q), p)` for `q = 1 + inv_nc`, or `None` when either reciprocal is non-positive.
fn theta_and_p<T: Scalar>(lambda: T, players: usize, inv_nc: T) -> Option<(T, T)> {
    let q = T::one() + inv_nc;
    let den = T::one() - inv_nc / q * T::of_usize(players) * lambda;
    if !(den > T::zero()) {
        return None;
    }
    let theta = lambda / den;
    let r = T::one() / theta - (T::one() + q + T::lit(2.0) * lambda) * inv_nc;
    if !(r > T::zero()) {
        return None;
    }
    Some((theta, T::one() / r))
}

fn inv_pow<T: Scalar>(players: usize, c: T) -> T {
    (-c * T::of_usize(players).ln()).exp()
}

/// Smallest `c` for which `theta(q)` and `p` are finite and positive.
pub fn min_admissible_c<T: Scalar>(lambda: T, players: usize) -> T {
    if players <= 1 {
        return if theta_and_p(lambda, players, T::one()).is_some() { T::zero() } else { T::infinity() };
    }
    let ok = |c: T| theta_and_p(lambda, players, inv_pow(players, c)).is_some();
    if ok(T::zero()) {
        return T::zero();
    }
    let mut hi = T::one();
    while !ok(hi) {
        hi = hi * T::lit(2.0);
        if hi > T::lit(1e6) {
            return T::infinity();
        }
    }
    let mut lo = T::zero();
    for _ in 0..100 {
        let mid = (lo + hi) / T::lit(2.0);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Smallest `c` (to within `1e-9`) whose guaranteed factor `p (1 + 5 / N^c)`
/// is at most `target`, or `None` if no `c` reaches it.
pub fn c_for_alpha<T: Scalar>(lambda: T, players: usize, target: T) -> Option<T> {
    let bound = |c: T| {
        let inv = inv_pow(players, c);
        theta_and_p(lambda, players, inv).map(|(_, p)| p * (T::one() + T::lit(5.0) * inv))
    };
    let ok = |c: T| bound(c).is_some_and(|a| a <= target);
    if players <= 1 {
        return ok(T::one()).then(T::one);
    }
    let mut hi = min_admissible_c(lambda, players).max(T::lit(1e-3)) * T::lit(2.0);
    while !ok(hi) {
        hi = hi * T::lit(2.0);
        if hi > T::lit(1e4) {
            return None;
        }
    }
    let mut lo = T::zero();
    while hi - lo > T::lit(1e-9) {
        let mid = (lo + hi) / T::lit(2.0);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Parameters of the dynamics; `c` defaults to `10 log2(lambda / epsilon)`.
pub fn derive_params<T: Scalar>(
    lambda: T,
    epsilon: T,
    players: usize,
    game: &CongestionGame<T>,
    c_override: Option<T>,
) -> Result<AlgoParams<T>> {
    if !(lambda >= T::one()) || !(epsilon > T::zero()) || players == 0 {
        return Err(Error::ParameterInfeasible {
            reason: format!("need lambda >= 1, epsilon > 0, N >= 1 (got {lambda}, {epsilon}, {players})"),
            min_c: f64::NAN,
        });
    }
    let mut delta = T::one();
    for (e, f) in game.resources().iter().enumerate() {
        let f1 = f.at(1)?;
        if !(f1 > T::zero()) {
            return Err(Error::InvalidGame(format!("resource {e} has f(1) = 0, so Delta is undefined")));
        }
        delta = delta.max(f.at(players)? / f1);
    }
    let c = c_override.unwrap_or_else(|| T::lit(10.0) * (lambda / epsilon).log2());
    let log_nc = c * T::of_usize(players).ln();
    if log_nc > T::max_value().ln() {
        log::warn!("N^c overflows (c = {c}); thresholds collapse to q = 1, p = theta = lambda");
    }
    let inv_nc = inv_pow(players, c);
    let (theta_q, p) = theta_and_p(lambda, players, inv_nc).ok_or_else(|| Error::ParameterInfeasible {
        reason: format!("c = {c} gives a non-positive reciprocal in theta(q) or p for N = {players}, lambda = {lambda}"),
        min_c: min_admissible_c(lambda, players).as_f64(),
    })?;
    Ok(AlgoParams { lambda, epsilon, players, c, inv_nc, q: T::one() + inv_nc, theta_q, p, delta })
}

impl<T: Scalar> AlgoParams<T> {
    /// `p (1 + 5 / N^c)`, the factor the final profile is guaranteed to meet.
    pub fn alpha_bound(&self) -> T {
        self.p * (T::one() + T::lit(5.0) * self.inv_nc)
    }

    /// `ln(2 Delta N^{2c+2})`.
    pub fn ln_block_base(&self) -> T {
        T::lit(2.0).ln() + self.delta.ln() + (T::lit(2.0) * self.c + T::lit(2.0)) * T::of_usize(self.players).ln()
    }

    /// `lambda Delta^3 N^{5c+5}` clamped to `DEFAULT_MOVE_CAP`.
    pub fn move_cap(&self) -> usize {
        let ln = self.lambda.ln()
            + T::lit(3.0) * self.delta.ln()
            + (T::lit(5.0) * self.c + T::lit(5.0)) * T::of_usize(self.players).ln();
        let cap = T::of_usize(DEFAULT_MOVE_CAP);
        if ln.exp() < cap {
            ln.exp().ceil().as_f64() as usize
        } else {
            DEFAULT_MOVE_CAP
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockStructure<T> {
    pub z_hat: usize,
    /// `ln` of the block ratio `b_i / b_{i+1}`.
    pub ln_base: T,
    /// `b_1 .. b_{z_hat+1}`; `b_1 = l_max`.
    pub boundaries: Vec<T>,
    /// 1-based block of every player.
    pub block: Vec<usize>,
    /// Optimistic cost `l_u` of every player.
    pub ell: Vec<T>,
}

impl<T: Scalar> BlockStructure<T> {
    /// Blocks for optimistic costs `ell` with ratio `exp(ln_base)` between boundaries.
    pub fn from_costs(ell: Vec<T>, ln_base: T) -> Result<Self> {
        if let Some(u) = ell.iter().position(|l| !(*l > T::zero())) {
            return Err(Error::DegeneratePlayer(u));
        }
        if !(ln_base > T::zero()) {
            return Err(Error::Structure(format!("block ratio exp({ln_base}) must exceed 1")));
        }
        let ell_max = ell.iter().copied().fold(T::zero(), T::max);
        let ell_min = ell.iter().copied().fold(T::infinity(), T::min);
        let levels = |l: T| (ell_max / l).ln() / ln_base;
        let z_hat = if ell.is_empty() { 1 } else { 1 + levels(ell_min).ceil().as_f64() as usize };
        let block = ell
            .iter()
            .map(|&l| (1 + levels(l).floor().as_f64() as usize).min(z_hat))
            .collect();
        let boundaries = (0..=z_hat).map(|i| ell_max * (-(T::of_usize(i) * ln_base)).exp()).collect();
        Ok(Self { z_hat, ln_base, boundaries, block, ell })
    }

    pub fn members(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.block.iter().enumerate().filter(move |(_, b)| **b == i).map(|(u, _)| u)
    }

    /// Whether `l_u` lies in `(b_{i+1}, b_i]` for its block `i`, checked in log space.
    pub fn respects_intervals(&self) -> bool {
        let ell_max = self.ell.iter().copied().fold(T::zero(), T::max);
        let slack = T::lit(1e-9);
        self.block.iter().zip(&self.ell).all(|(&i, &l)| {
            let x = (ell_max / l).ln() / self.ln_base;
            x >= T::of_usize(i - 1) - slack && x < T::of_usize(i) + slack
        })
    }
}

/// Assigns every player to a block by its optimistic cost.
pub fn partition_blocks<T: Scalar>(game: &CongestionGame<T>, params: &AlgoParams<T>) -> Result<BlockStructure<T>> {
    let ell = (0..game.num_players())
        .map(|u| game.optimistic_cost(u))
        .collect::<Result<Vec<_>>>()?;
    BlockStructure::from_costs(ell, params.ln_block_base())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MoveKind {
    /// Improvement by more than `p` under the original costs.
    P,
    /// Improvement by more than `q` under the modified costs.
    Q,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MoveRecord<T> {
    pub phase: usize,
    pub player: usize,
    pub block: usize,
    pub kind: MoveKind,
    pub from: usize,
    pub to: usize,
    /// Mover's cost before and after, in the family the move was judged by.
    pub cost_before: T,
    pub cost_after: T,
    /// Modified-cost potential before and after.
    pub potential_before: T,
    pub potential_after: T,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions<T> {
    pub c_override: Option<T>,
    pub move_cap: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunReport<T> {
    pub profile: StrategyProfile,
    pub moves: Vec<MoveRecord<T>>,
    /// Phases with a non-empty `B_i` that were executed.
    pub phases: usize,
    pub certified_alpha: T,
    pub params: AlgoParams<T>,
    pub blocks: BlockStructure<T>,
    /// Executed moves that did not strictly decrease the modified potential.
    pub potential_violations: usize,
    /// Executed p-moves for which the dominance inequality failed.
    pub dominance_violations: usize,
    /// Phases whose closing scan still found an eligible move.
    pub postcondition_failures: usize,
}

/// `old > factor * new` beyond the improvement tolerance, with `factor = 1 + excess`.
pub(crate) fn beats<T: Scalar>(old: T, new: T, excess: T) -> bool {
    improves(new + excess * new, old)
}

struct Dynamics<'a, T> {
    game: &'a CongestionGame<T>,
    cert: &'a SmoothnessCertificate<T>,
    params: &'a AlgoParams<T>,
    blocks: &'a BlockStructure<T>,
}

impl<'a, T: Scalar> Dynamics<'a, T> {
    fn modified(&self) -> CostFamily<'a, T> {
        CostFamily::Modified(&self.cert.fprime)
    }

    /// First eligible move of phase `i`: `B_i` p-moves before `B_{i+1}` q-moves, players in index order.
    fn next_move(&self, profile: &StrategyProfile, i: usize) -> Result<Option<(usize, MoveKind, usize, T, T)>> {
        for u in self.blocks.members(i) {
            let now = self.game.player_cost(profile, u, CostFamily::Original)?;
            let (to, best) = self.game.best_response(profile, u, CostFamily::Original)?;
            if to != profile.choice(u) && beats(now, best, self.params.p - T::one()) {
                return Ok(Some((u, MoveKind::P, to, now, best)));
            }
        }
        for u in self.blocks.members(i + 1) {
            let now = self.game.player_cost(profile, u, self.modified())?;
            let (to, best) = self.game.best_response(profile, u, self.modified())?;
            if to != profile.choice(u) && beats(now, best, self.params.inv_nc) {
                return Ok(Some((u, MoveKind::Q, to, now, best)));
            }
        }
        Ok(None)
    }
}

/// Runs the block-phase dynamics from the optimistic profile.
pub fn run<T: Scalar>(
    game: &CongestionGame<T>,
    cert: &SmoothnessCertificate<T>,
    epsilon: T,
    options: &RunOptions<T>,
) -> Result<RunReport<T>> {
    if cert.objective != ObjectiveFamily::Potential || cert.scope != Scope::Strong {
        return Err(Error::Certificate("the dynamics need a strong certificate for the potential".into()));
    }
    if cert.fprime.len() != game.num_resources() {
        return Err(Error::Certificate(format!(
            "{} modified tables for {} resources",
            cert.fprime.len(),
            game.num_resources()
        )));
    }
    let params = derive_params(cert.lambda, epsilon, game.num_players(), game, options.c_override)?;
    let blocks = partition_blocks(game, &params)?;
    let dyn_ = Dynamics { game, cert, params: &params, blocks: &blocks };
    let cap = options.move_cap.unwrap_or_else(|| params.move_cap());
    let mut profile = game.optimistic_profile()?;
    let mut moves = Vec::new();
    let mut phases = 0;
    let (mut potential_violations, mut dominance_violations, mut postcondition_failures) = (0, 0, 0);
    let last = blocks.z_hat.saturating_sub(1).max(1);
    for i in 1..=last {
        if blocks.members(i).next().is_none() {
            continue;
        }
        phases += 1;
        while let Some((u, kind, to, before, after)) = dyn_.next_move(&profile, i)? {
            if moves.len() >= cap {
                return Err(Error::MoveCapExceeded { cap, moves: moves.len() });
            }
            if kind == MoveKind::P
                && !check_pmove_dominance(game, cert, &profile, u, to, params.p, params.q)?
            {
                dominance_violations += 1;
            }
            let potential_before = game.rosenthal_potential(&profile, dyn_.modified())?;
            let from = profile.choice(u);
            profile.switch(game, u, to);
            let potential_after = game.rosenthal_potential(&profile, dyn_.modified())?;
            if !(potential_after < potential_before) {
                potential_violations += 1;
            }
            moves.push(MoveRecord {
                phase: i,
                player: u,
                block: blocks.block[u],
                kind,
                from,
                to,
                cost_before: before,
                cost_after: after,
                potential_before,
                potential_after,
            });
        }
        if phase_has_move(game, cert, &params, &blocks, &profile, i)? {
            postcondition_failures += 1;
        }
    }
    let certified_alpha = game
        .verify_alpha_equilibrium(&profile, T::one(), CostFamily::Original)?
        .worst
        .ratio;
    Ok(RunReport {
        profile,
        moves,
        phases,
        certified_alpha,
        params,
        blocks,
        potential_violations,
        dominance_violations,
        postcondition_failures,
    })
}

/// Full scan: does any `B_i` player have a p-move or any `B_{i+1}` player a q-move?
pub fn phase_has_move<T: Scalar>(
    game: &CongestionGame<T>,
    cert: &SmoothnessCertificate<T>,
    params: &AlgoParams<T>,
    blocks: &BlockStructure<T>,
    profile: &StrategyProfile,
    i: usize,
) -> Result<bool> {
    let fam = CostFamily::Modified(&cert.fprime);
    for u in blocks.members(i) {
        let now = game.player_cost(profile, u, CostFamily::Original)?;
        for j in 0..game.strategies(u).len() {
            if beats(now, game.deviation_cost(profile, u, j, CostFamily::Original)?, params.p - T::one()) {
                return Ok(true);
            }
        }
    }
    for u in blocks.members(i + 1) {
        let now = game.player_cost(profile, u, fam)?;
        for j in 0..game.strategies(u).len() {
            if beats(now, game.deviation_cost(profile, u, j, fam)?, params.inv_nc) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Whether switching `player` to `new_strategy` strictly lowers the modified-cost potential.
pub fn check_approx_potential_step<T: Scalar>(
    game: &CongestionGame<T>,
    cert: &SmoothnessCertificate<T>,
    profile: &StrategyProfile,
    player: usize,
    new_strategy: usize,
    _p: T,
) -> Result<bool> {
    let fam = CostFamily::Modified(&cert.fprime);
    let before = game.rosenthal_potential(profile, fam)?;
    let after = game.rosenthal_potential(&profile.with_choice(game, player, new_strategy)?, fam)?;
    Ok(after < before)
}

/// `p c_u(s') - c_u(s) >= q c'_u(s') - c'_u(s)`, up to rounding.
pub fn check_pmove_dominance<T: Scalar>(
    game: &CongestionGame<T>,
    cert: &SmoothnessCertificate<T>,
    profile: &StrategyProfile,
    player: usize,
    new_strategy: usize,
    p: T,
    q: T,
) -> Result<bool> {
    let fam = CostFamily::Modified(&cert.fprime);
    let c_old = game.player_cost(profile, player, CostFamily::Original)?;
    let c_new = game.deviation_cost(profile, player, new_strategy, CostFamily::Original)?;
    let m_old = game.player_cost(profile, player, fam)?;
    let m_new = game.deviation_cost(profile, player, new_strategy, fam)?;
    let lhs = p * c_new - c_old;
    let rhs = q * m_new - m_old;
    let scale = T::one().max(p * c_new).max(c_old).max(q * m_new).max(m_old);
    Ok(lhs >= rhs - T::lit(1e-9) * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{CostFunction, ModifiedCost};

    fn linear_pair() -> CongestionGame<f64> {
        CongestionGame::singleton(vec![CostFunction::linear(); 2], vec![vec![0, 1]; 2]).unwrap()
    }

    fn identity_cert(game: &CongestionGame<f64>, lambda: f64) -> SmoothnessCertificate<f64> {
        SmoothnessCertificate {
            lambda,
            objective: ObjectiveFamily::Potential,
            scope: Scope::Strong,
            fprime: game
                .resources()
                .iter()
                .map(|f| ModifiedCost::identity(f, game.num_players()).unwrap())
                .collect(),
            nu: None,
            k: None,
        }
    }

    #[test]
    fn params_example() {
        let g = linear_pair();
        let p = derive_params(1.61, 0.1, 10, &g, Some(2.0)).unwrap();
        assert!((p.q - 1.01).abs() < 1e-12);
        assert!((p.theta_q - 1.61 / (1.0 - 16.1 / 101.0)).abs() < 1e-9);
        assert!((p.theta_q - 1.9153).abs() < 1e-4);
        assert!((p.p - 2.128).abs() < 1e-3);
        assert!(p.p > p.theta_q && p.theta_q >= p.lambda);
    }

    #[test]
    fn params_infeasible_reports_min_c() {
        let g = linear_pair();
        match derive_params(1.61, 0.1, 10, &g, Some(1.0)) {
            Err(Error::ParameterInfeasible { min_c, .. }) => {
                assert!(min_c > 1.0 && min_c < 2.0);
                assert!(derive_params(1.61, 0.1, 10, &g, Some(min_c * 1.001)).is_ok());
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn c_for_alpha_meets_target() {
        let g = linear_pair();
        let c = c_for_alpha(1.61, 30, 2.0).unwrap();
        let p = derive_params(1.61, 0.1, 30, &g, Some(c)).unwrap();
        assert!(p.alpha_bound() <= 2.0);
        let below = derive_params(1.61, 0.1, 30, &g, Some(c * 0.99)).map(|p| p.alpha_bound());
        assert!(below.map_or(true, |a| a > 2.0));
        assert!(c_for_alpha(1.61, 30, 1.5).is_none());
    }

    #[test]
    fn params_collapse_for_huge_n() {
        let g = linear_pair();
        let p = derive_params(1.0, 0.1, 1_000_000, &g, None).unwrap();
        assert!(p.inv_nc < 1e-190);
        assert!((p.theta_q - 1.0).abs() < 1e-12 && (p.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blocks_example() {
        let b = BlockStructure::from_costs(vec![100.0, 1.0], 50f64.ln()).unwrap();
        assert_eq!(b.block, vec![1, 2]);
        assert_eq!(b.z_hat, 3);
        assert!(b.respects_intervals());
        assert!((b.boundaries[1] - 2.0).abs() < 1e-12);
        let single = BlockStructure::from_costs(vec![3.0; 4], 2f64.ln()).unwrap();
        assert_eq!((single.z_hat, single.block.clone()), (1, vec![1; 4]));
        assert!(matches!(BlockStructure::from_costs(vec![1.0, 0.0], 1.0), Err(Error::DegeneratePlayer(1))));
    }

    #[test]
    fn run_splits_two_players() {
        let g = linear_pair();
        let cert = identity_cert(&g, 1.0);
        let r = run(&g, &cert, 0.25, &RunOptions { c_override: Some(4.0), move_cap: None }).unwrap();
        assert_eq!(r.moves.len(), 1);
        assert_eq!(r.profile.loads(), &[1, 1]);
        assert_eq!(r.certified_alpha, 1.0);
        assert_eq!(r.potential_violations + r.dominance_violations + r.postcondition_failures, 0);
    }

    #[test]
    fn run_at_equilibrium_makes_no_move() {
        let g = CongestionGame::singleton(vec![CostFunction::linear(); 2], vec![vec![0], vec![1]]).unwrap();
        let cert = identity_cert(&g, 1.0);
        let r = run(&g, &cert, 0.25, &RunOptions { c_override: Some(4.0), move_cap: None }).unwrap();
        assert!(r.moves.is_empty());
        assert_eq!(r.certified_alpha, 1.0);
    }

    #[test]
    fn run_respects_move_cap_and_scope() {
        let g = linear_pair();
        let cert = identity_cert(&g, 1.0);
        let capped = run(&g, &cert, 0.25, &RunOptions { c_override: Some(4.0), move_cap: Some(0) });
        assert!(matches!(capped, Err(Error::MoveCapExceeded { cap: 0, .. })));
        let mut plain = cert.clone();
        plain.scope = Scope::Plain;
        assert!(run(&g, &plain, 0.25, &RunOptions::default()).is_err());
    }

    #[test]
    fn step_checks_identity_certificate() {
        let g = linear_pair();
        let cert = identity_cert(&g, 1.0);
        let s = StrategyProfile::new(&g, vec![0, 0]).unwrap();
        assert!(check_approx_potential_step(&g, &cert, &s, 0, 1, 1.5).unwrap());
        assert!(check_pmove_dominance(&g, &cert, &s, 0, 1, 1.5, 1.5).unwrap());
        assert!(!check_approx_potential_step(&g, &cert, &s, 0, 0, 1.5).unwrap());
    }
}
