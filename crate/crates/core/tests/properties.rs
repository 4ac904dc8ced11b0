use congestion_core::algorithm::{derive_params, partition_blocks};
use congestion_core::game::Strategy as Choice;
use congestion_core::io::{CertificateFile, GameFile, ProfileFile};
use congestion_core::lowerbound::{construct_instance, verify_gap, DualSolution};
use congestion_core::oracle::{all_profiles, enumerate_equilibria};
use congestion_core::smoothness::{certify_game, solve_lp_phi, solve_lp_sc, ObjectiveFamily};
use congestion_core::taxes::{epsilon_local_search, taxes_from_certificate, zeta_sc};
use congestion_core::{CostFamily, CostFunction, Game, LoadCost, PlayerSubset, StrategyProfile};
use proptest::prelude::*;

fn arb_cost(max_load: usize) -> impl Strategy<Value = CostFunction<f64>> {
    prop_oneof![
        prop::collection::vec(0u8..4, 1..4).prop_map(|c| {
            let mut coeffs: Vec<f64> = c.into_iter().map(f64::from).collect();
            coeffs[0] += 0.5;
            CostFunction::polynomial(coeffs).unwrap()
        }),
        prop::collection::vec(0u8..4, max_load).prop_map(|steps| {
            let mut acc = 0.5;
            let values = steps.into_iter().map(|s| {
                acc += f64::from(s);
                acc
            });
            CostFunction::table(values.collect()).unwrap()
        }),
    ]
}

/// Games with up to `max_players` players, 1-5 resources and 1-3 strategies each.
fn arb_game(max_players: usize) -> impl Strategy<Value = Game> {
    (1..=max_players, 1usize..=5).prop_flat_map(|(n, m)| {
        let costs = prop::collection::vec(arb_cost(n), m);
        let strategy = (1u32..(1 << m)).prop_map(move |bits| (0..m).filter(|e| bits >> e & 1 == 1).collect::<Choice>());
        let players = prop::collection::vec(prop::collection::vec(strategy, 1..=3), n);
        (costs, players).prop_map(|(c, p)| Game::new(c, p).unwrap())
    })
}

fn arb_game_and_profile(max_players: usize) -> impl Strategy<Value = (Game, StrategyProfile)> {
    arb_game(max_players).prop_flat_map(|g| {
        let picks: Vec<_> = g.players().iter().map(|s| 0..s.len()).collect();
        (Just(g), picks).prop_map(|(g, c)| {
            let s = StrategyProfile::new(&g, c).unwrap();
            (g, s)
        })
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_potential((g, s) in arb_game_and_profile(5), pick in any::<prop::sample::Index>()) {
        let u = pick.index(g.num_players());
        let phi = g.rosenthal_potential(&s, CostFamily::Original).unwrap();
        let c = g.player_cost(&s, u, CostFamily::Original).unwrap();
        for j in 0..g.strategies(u).len() {
            let t = s.with_choice(&g, u, j).unwrap();
            let dphi = g.rosenthal_potential(&t, CostFamily::Original).unwrap() - phi;
            let dc = g.deviation_cost(&s, u, j, CostFamily::Original).unwrap() - c;
            prop_assert!(close(dphi, dc), "{dphi} vs {dc}");
        }
    }

    #[test]
    fn potential_between_load_costs_and_social_cost((g, s) in arb_game_and_profile(5)) {
        let phi = g.rosenthal_potential(&s, CostFamily::Original).unwrap();
        let lower: f64 = s.loads().iter().enumerate().map(|(e, &n)| g.resource(e).at(n).unwrap()).sum();
        let upper = g.social_cost(&s).unwrap();
        prop_assert!(lower <= phi + 1e-9 && phi <= upper + 1e-9);
    }

    #[test]
    fn subset_potential_bounds((g, s) in arb_game_and_profile(5), bits in any::<u64>()) {
        let f = PlayerSubset::from_bits(g.num_players(), bits & ((1 << g.num_players()) - 1));
        let phi = g.rosenthal_potential(&s, CostFamily::Original).unwrap();
        let in_f = g.subgame_potential(&s, &f, CostFamily::Original).unwrap();
        let out_f = g.subgame_potential(&s, &f.complement(), CostFamily::Original).unwrap();
        prop_assert!(in_f <= phi + 1e-9);
        prop_assert!(phi <= in_f + out_f + 1e-9);
    }

    #[test]
    fn loads_stay_consistent((g, s) in arb_game_and_profile(5), moves in prop::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>()), 0..10)) {
        let mut s = s;
        for (u, j) in moves {
            let u = u.index(g.num_players());
            s = s.with_choice(&g, u, j.index(g.strategies(u).len())).unwrap();
            prop_assert!(s.loads_consistent(&g));
        }
    }

    #[test]
    fn equilibria_are_exactly_the_passing_profiles(g in arb_game(4), alpha in 1.0f64..2.0) {
        let eq = enumerate_equilibria(&g, alpha, CostFamily::Original).unwrap();
        for s in all_profiles(&g).unwrap() {
            let holds = g.verify_alpha_equilibrium(&s, alpha, CostFamily::Original).unwrap().holds;
            prop_assert_eq!(holds, eq.contains(&s));
        }
        prop_assert!(!enumerate_equilibria(&g, 1.0, CostFamily::Original).unwrap().is_empty());
    }

    #[test]
    fn blocks_cover_players(g in arb_game(6), c in 2.0f64..6.0) {
        let p = match derive_params(1.5, 0.25, g.num_players(), &g, Some(c)) {
            Ok(p) => p,
            Err(_) => return Ok(()),
        };
        let b = partition_blocks(&g, &p).unwrap();
        prop_assert!(b.respects_intervals());
        let mut seen = vec![0; g.num_players()];
        for i in 1..=b.z_hat {
            for u in b.members(i) {
                seen[u] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&k| k == 1));
    }

    #[test]
    fn json_roundtrip((g, s) in arb_game_and_profile(4)) {
        let gf = GameFile::from_game(&g);
        let back: GameFile = serde_json::from_str(&serde_json::to_string(&gf).unwrap()).unwrap();
        prop_assert_eq!(&back.to_game().unwrap(), &g);
        let pf = ProfileFile::from_profile(&s);
        let back: ProfileFile = serde_json::from_str(&serde_json::to_string(&pf).unwrap()).unwrap();
        prop_assert_eq!(back.to_profile(&g).unwrap(), s);
    }
}

fn finite_cert(g: &Game, family: ObjectiveFamily) -> congestion_core::smoothness::SmoothnessCertificate<f64> {
    let n = g.num_players();
    let top = n + 1;
    certify_game(g.resources(), family, n, |d| {
        let f = CostFunction::monomial(1.0, d)?;
        Ok(match family {
            ObjectiveFamily::SocialCost => solve_lp_sc(&f, top, true)?.0,
            ObjectiveFamily::Potential => solve_lp_phi(&f, top, true)?.0,
        })
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lp_optimum_monotone_in_n(f in arb_cost(8)) {
        let mut prev = (1.0, 1.0);
        for n in [2, 4, 6, 8] {
            let sc = solve_lp_sc(&f, n, true).unwrap().0.lambda;
            let phi = solve_lp_phi(&f, n, true).unwrap().0.lambda;
            prop_assert!(sc >= prev.0 - 1e-7 && phi >= prev.1 - 1e-7, "N = {n}: {sc} {phi} after {prev:?}");
            prev = (sc, phi);
        }
    }

    #[test]
    fn potential_certificates_sandwich(f in arb_cost(6)) {
        let cert = solve_lp_phi(&f, 6, true).unwrap().0;
        for n in 1..=6 {
            let (a, b) = (f.at(n).unwrap(), cert.fprime[0].at(n).unwrap());
            prop_assert!(a <= b + 1e-9 * a.max(1.0) && b <= cert.lambda * a + 1e-9 * a.max(1.0));
        }
    }

    #[test]
    fn taxes_reproduce_fprime((g, s) in arb_game_and_profile(4)) {
        let cert = finite_cert(&g, ObjectiveFamily::SocialCost);
        let n = g.num_players();
        let t = taxes_from_certificate(&cert, g.resources(), n).unwrap();
        let taxed = t.taxed_costs(g.resources()).unwrap();
        for (e, f) in g.resources().iter().enumerate() {
            for load in 1..=n {
                prop_assert!(close(taxed[e].at(load).unwrap(), cert.fprime[e].at(load).unwrap()));
                prop_assert!(close(f.at(load).unwrap() + t.tax(e, load).unwrap(), cert.fprime[e].at(load).unwrap()));
            }
        }
        let z = zeta_sc(&g, &cert, &s).unwrap();
        prop_assert!(close(z, g.rosenthal_potential(&s, CostFamily::Modified(&taxed)).unwrap()));
    }

    #[test]
    fn taxed_equilibria_within_lambda(g in arb_game(4)) {
        let cert = finite_cert(&g, ObjectiveFamily::SocialCost);
        let taxed = taxes_from_certificate(&cert, g.resources(), g.num_players()).unwrap().taxed_costs(g.resources()).unwrap();
        let opt = all_profiles(&g).unwrap().iter().map(|s| g.social_cost(s).unwrap()).fold(f64::INFINITY, f64::min);
        for s in enumerate_equilibria(&g, 1.0, CostFamily::Modified(&taxed)).unwrap() {
            prop_assert!(g.social_cost(&s).unwrap() <= cert.lambda * opt * (1.0 + 1e-9));
        }
    }

    #[test]
    fn local_search_decreases_zeta((g, s) in arb_game_and_profile(6), eps in 0.01f64..1.0) {
        let cert = finite_cert(&g, ObjectiveFamily::SocialCost);
        let r = epsilon_local_search(&g, &cert, eps, Some(s), None).unwrap();
        prop_assert_eq!(r.zeta_violations, 0);
        prop_assert!(r.local_alpha <= 1.0 + eps / (2.0 * g.num_players() as f64) + 1e-9);
    }

    #[test]
    fn certificate_file_roundtrip(g in arb_game(4)) {
        let cert = finite_cert(&g, ObjectiveFamily::Potential);
        let file = CertificateFile::from_certificate(&cert, g.num_players() + 1).unwrap();
        let text = serde_json::to_string(&file).unwrap();
        let back: CertificateFile = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &file);
        let again = CertificateFile::from_certificate(&back.to_certificate().unwrap(), g.num_players() + 1).unwrap();
        prop_assert_eq!(again, file);
    }

    #[test]
    fn scheduling_instances_keep_their_invariants(raw in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 5), 5), eps in 0.05f64..0.5) {
        let h: Vec<f64> = (0..5).map(|n| (n * n) as f64).collect();
        let dual = DualSolution::new(raw, h.clone()).unwrap().repaired().unwrap();
        prop_assert!(dual.is_feasible(1e-12));
        let inst = match construct_instance(&dual, eps) {
            Ok(i) => i,
            Err(_) => return Ok(()),
        };
        let gap = verify_gap(&inst, &h).unwrap();
        prop_assert!(gap.eq_is_pne);
        let scale = inst.scale as f64;
        let hr = &h;
        let eq_mass: f64 = inst.counts.iter().enumerate().flat_map(|(n, r)| r.iter().map(move |&k| hr[n] * k as f64)).sum();
        let opt_mass: f64 = inst.counts.iter().flat_map(|r| r.iter().enumerate().map(|(m, &k)| h[m] * k as f64)).sum();
        prop_assert_eq!(gap.equilibrium_cost, eq_mass);
        prop_assert!(gap.optimal_cost <= opt_mass && opt_mass <= scale * (1.0 + 1e-9));
        prop_assert!(eq_mass >= (dual.objective - eps) * scale - 1e-9);
    }
}
