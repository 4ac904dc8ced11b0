use congestion_core::algorithm::{self, derive_params, RunOptions};
use congestion_core::gen::{random_general, random_singleton, rng};
use congestion_core::lowerbound::{construct_instance, dual_from_lp_sc, lp_duality_check, solve_lpd, verify_gap};
use congestion_core::oracle::{all_profiles, exact_poa, exact_stretch};
use congestion_core::smoothness::{certify_game, sc_objective, solve_lp_phi, solve_lp_sc, ObjectiveFamily, SmoothnessCertificate};
use congestion_core::taxes::{epsilon_local_search, poa_under_taxes, taxes_from_certificate};
use congestion_core::{CostFamily, CostFunction, Game, LoadCost};
use rand::Rng;

/// Certificate for a game from finite LPs over loads up to one past the player count.
fn finite_cert(g: &Game, family: ObjectiveFamily) -> SmoothnessCertificate<f64> {
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

fn optimum(g: &Game) -> f64 {
    all_profiles(g).unwrap().iter().map(|s| g.social_cost(s).unwrap()).fold(f64::INFINITY, f64::min)
}

/// Three players on six linear resources whose worst equilibrium costs 5/2 of the optimum.
fn five_halves() -> Game {
    let linear = vec![CostFunction::linear(); 6];
    // resources 0..3 are h_i, 3..6 are g_i
    let players = (0..3)
        .map(|i| {
            let mut wide = vec![(i + 1) % 3, (i + 2) % 3, 3 + (i + 1) % 3];
            wide.sort_unstable();
            vec![vec![i, 3 + i], wide]
        })
        .collect();
    Game::new(linear, players).unwrap()
}

#[test]
fn dynamics_on_random_singleton_games() {
    let eps = 0.25;
    let mut r = rng(11);
    for _ in 0..20 {
        let (n, m) = (r.gen_range(2..=12), r.gen_range(2..=5));
        let d = r.gen_range(1..=2);
        let g = random_singleton(&mut r, n, m, d).unwrap();
        let cert = finite_cert(&g, ObjectiveFamily::Potential);
        let c = algorithm::c_for_alpha(cert.lambda, n, cert.lambda * (1.0 + eps)).unwrap();
        let rep = algorithm::run(&g, &cert, eps, &RunOptions { c_override: Some(c), move_cap: None }).unwrap();
        assert_eq!(rep.potential_violations, 0);
        assert_eq!(rep.dominance_violations, 0);
        assert_eq!(rep.postcondition_failures, 0);
        assert!(rep.certified_alpha <= rep.params.alpha_bound() * (1.0 + 1e-9));
        assert!(rep.certified_alpha <= cert.lambda * (1.0 + eps));
        let check = g.verify_alpha_equilibrium(&rep.profile, rep.certified_alpha, CostFamily::Original).unwrap();
        assert!(check.holds);
    }
}

#[test]
fn dynamics_on_random_general_games() {
    let mut r = rng(12);
    for _ in 0..20 {
        let (n, m) = (r.gen_range(2..=6), r.gen_range(3..=6));
        let g = random_general(&mut r, n, m, 3, 3, 1).unwrap();
        let cert = finite_cert(&g, ObjectiveFamily::Potential);
        let c = 2.0 * algorithm::min_admissible_c(cert.lambda, n) + 0.5;
        let rep = algorithm::run(&g, &cert, 0.5, &RunOptions { c_override: Some(c), move_cap: None }).unwrap();
        assert_eq!(rep.potential_violations + rep.dominance_violations + rep.postcondition_failures, 0);
        assert!(rep.certified_alpha <= rep.params.alpha_bound() * (1.0 + 1e-9));
    }
}

#[test]
fn stretch_of_q_equilibria_below_theta() {
    let mut r = rng(13);
    for _ in 0..15 {
        let (m, k) = (r.gen_range(3..=5), r.gen_range(2..=3));
        let g = random_general(&mut r, 3, m, k, 2, 1).unwrap();
        let cert = finite_cert(&g, ObjectiveFamily::Potential);
        let c = 2.0 * algorithm::min_admissible_c(cert.lambda, 3) + 0.5;
        let p = derive_params(cert.lambda, 0.25, 3, &g, Some(c)).unwrap();
        let modified = CostFamily::Modified(&cert.fprime);
        let stretch = exact_stretch(&g, p.q, modified, modified).unwrap();
        assert!(stretch <= p.theta_q * (1.0 + 1e-9), "{stretch} > {}", p.theta_q);
    }
}

#[test]
fn five_halves_instance() {
    let g = five_halves();
    assert!((exact_poa(&g, None).unwrap() - 2.5).abs() < 1e-12);
    let cert = finite_cert(&g, ObjectiveFamily::SocialCost);
    let taxes = taxes_from_certificate(&cert, g.resources(), 3).unwrap();
    let taxed = poa_under_taxes(&g, &taxes).unwrap();
    assert!(taxed <= cert.lambda * (1.0 + 1e-9), "{taxed} > {}", cert.lambda);
}

#[test]
fn social_cost_certificate_tax_at_one() {
    let f = CostFunction::<f64>::linear();
    let (cert, _) = solve_lp_sc(&f, 60, true).unwrap();
    let t1 = cert.fprime[0].at(1).unwrap() - 1.0;
    assert!(t1 >= -1e-9 && t1 <= cert.lambda - 1.0 + 1e-9);
}

#[test]
fn local_search_then_taxed_poa() {
    let mut r = rng(14);
    for _ in 0..20 {
        let (n, m) = (r.gen_range(2..=6), r.gen_range(2..=4));
        let g = random_singleton(&mut r, n, m, 1).unwrap();
        let cert = finite_cert(&g, ObjectiveFamily::SocialCost);
        let ls = epsilon_local_search(&g, &cert, 0.01, None, None).unwrap();
        assert_eq!(ls.zeta_violations, 0);
        let taxes = taxes_from_certificate(&cert, g.resources(), n).unwrap();
        let taxed = taxes.taxed_costs(g.resources()).unwrap();
        let alpha = 1.0 + 0.01 / (2.0 * n as f64);
        assert!(g.verify_alpha_equilibrium(&ls.profile, alpha * (1.0 + 1e-9), CostFamily::Modified(&taxed)).unwrap().holds);
        assert!(poa_under_taxes(&g, &taxes).unwrap() <= cert.lambda * (1.0 + 1e-9));
        assert!(g.social_cost(&ls.profile).unwrap() <= 1.1 * cert.lambda * optimum(&g));
    }
}

#[test]
fn scheduling_instance_for_linear_costs() {
    let f = CostFunction::<f64>::linear();
    let h = sc_objective(&f, 30).unwrap();
    let dual = solve_lpd(&h, 30).unwrap();
    let (cert, _) = solve_lp_sc(&f, 30, true).unwrap();
    assert!(lp_duality_check(cert.lambda, dual.objective));
    let inst = construct_instance(&dual, 0.05).unwrap();
    let gap = verify_gap(&inst, &h).unwrap();
    assert!(gap.eq_is_pne && !gap.degenerate);
    assert!(gap.ratio >= dual.objective - 0.05, "{} vs {}", gap.ratio, dual.objective);
    let (g, eq, opt) = inst.to_game(&f).unwrap();
    assert!(g.verify_alpha_equilibrium(&eq, 1.0, CostFamily::Original).unwrap().holds);
    assert!((g.social_cost(&eq).unwrap() - gap.equilibrium_cost).abs() < 1e-6);
    assert!(g.social_cost(&opt).unwrap() <= gap.optimal_cost + 1e-6);
}

#[test]
fn large_dual_for_linear_costs() {
    let f = CostFunction::<f64>::linear();
    let (primal, dual) = dual_from_lp_sc(&f, 1154).unwrap();
    assert!((dual.objective - 2.012).abs() <= 0.005, "{}", dual.objective);
    assert!(lp_duality_check(primal, dual.objective));
    assert!(dual.is_feasible(1e-9));
}
