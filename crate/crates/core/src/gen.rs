//! Seeded random games and profiles.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::CostFunction;
use crate::error::{Error, Result};
use crate::game::{CongestionGame, StrategyProfile};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `a x^d` with `a` drawn from `[1, 3]` in steps of `0.01`.
fn random_cost(rng: &mut ChaCha8Rng, degree: u32) -> Result<CostFunction<f64>> {
    let a = rng.gen_range(100..=300) as f64 / 100.0;
    CostFunction::monomial(a, degree)
}

fn check(players: usize, resources: usize) -> Result<()> {
    if players == 0 || resources == 0 {
        return Err(Error::InvalidGame("need at least one player and one resource".into()));
    }
    Ok(())
}

/// Singleton game: every player may use 2 to 4 of the resources (all of them
/// if there are fewer), each resource costing `a_e x^degree`.
pub fn random_singleton(rng: &mut ChaCha8Rng, players: usize, resources: usize, degree: u32) -> Result<CongestionGame<f64>> {
    check(players, resources)?;
    let costs = (0..resources).map(|_| random_cost(rng, degree)).collect::<Result<Vec<_>>>()?;
    let all: Vec<usize> = (0..resources).collect();
    let allowed = (0..players)
        .map(|_| {
            let k = if resources <= 2 { resources } else { rng.gen_range(2..=resources.min(4)) };
            let mut pick: Vec<usize> = all.choose_multiple(rng, k).copied().collect();
            pick.sort_unstable();
            pick
        })
        .collect();
    CongestionGame::singleton(costs, allowed)
}

/// General game: every player gets `strategies` random resource sets of size
/// `1..=max_size` (duplicates allowed).
pub fn random_general(
    rng: &mut ChaCha8Rng,
    players: usize,
    resources: usize,
    strategies: usize,
    max_size: usize,
    degree: u32,
) -> Result<CongestionGame<f64>> {
    check(players, resources)?;
    if strategies == 0 || max_size == 0 {
        return Err(Error::InvalidGame("need at least one strategy of size at least one".into()));
    }
    let costs = (0..resources).map(|_| random_cost(rng, degree)).collect::<Result<Vec<_>>>()?;
    let all: Vec<usize> = (0..resources).collect();
    let sets = (0..players)
        .map(|_| {
            (0..strategies)
                .map(|_| {
                    let k = rng.gen_range(1..=max_size.min(resources));
                    all.choose_multiple(rng, k).copied().collect()
                })
                .collect()
        })
        .collect();
    CongestionGame::from_unsorted(costs, sets)
}

/// Uniformly random profile.
pub fn random_profile(rng: &mut ChaCha8Rng, game: &CongestionGame<f64>) -> Result<StrategyProfile> {
    let choices = game.players().iter().map(|s| rng.gen_range(0..s.len())).collect();
    StrategyProfile::new(game, choices)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_games_repeat() {
        let a = random_singleton(&mut rng(7), 5, 4, 1).unwrap();
        let b = random_singleton(&mut rng(7), 5, 4, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.players().iter().all(|s| (2..=4).contains(&s.len()) && s.iter().all(|x| x.len() == 1)));
        let c = random_singleton(&mut rng(8), 5, 4, 1).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn general_games_are_valid() {
        let mut r = rng(1);
        let g = random_general(&mut r, 3, 5, 3, 3, 2).unwrap();
        assert_eq!(g.num_players(), 3);
        assert!(g.players().iter().flatten().all(|s| !s.is_empty() && s.len() <= 3));
        let s = random_profile(&mut r, &g).unwrap();
        assert!(s.loads_consistent(&g));
        assert!(random_general(&mut r, 0, 5, 3, 3, 2).is_err());
    }
}
