use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use congestion_core::algorithm::{self, RunOptions};
use congestion_core::io::{
    self, CertificateFile, GameFile, InstanceFile, OracleFile, ProfileFile, RunReportFile, TaxFile,
};
use congestion_core::smoothness::{
    certify_game, certify_monomial, solve_lp_phi, solve_lp_sc, ObjectiveFamily, SmoothnessCertificate, DEFAULT_K_PHI,
    DEFAULT_K_SC,
};
use congestion_core::{gen, lowerbound, oracle, taxes, CostFamily, CostFunction, Error, Game};

#[derive(Parser)]
#[command(name = "congest", version, about = "Approximate equilibria, smoothness certificates and taxes for congestion games")]
struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Objective {
    Potential,
    #[value(alias = "social_cost", alias = "social-cost")]
    Socialcost,
}

impl From<Objective> for ObjectiveFamily {
    fn from(o: Objective) -> Self {
        match o {
            Objective::Potential => ObjectiveFamily::Potential,
            Objective::Socialcost => ObjectiveFamily::SocialCost,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GameKind {
    Singleton,
    General,
}

#[derive(Subcommand)]
enum Cmd {
    /// Optimal smoothness factor and modified costs for a monomial or a game.
    Lambda {
        #[arg(long, value_enum)]
        objective: Objective,
        #[arg(long, conflicts_with = "game", required_unless_present = "game")]
        degree: Option<u32>,
        #[arg(long)]
        game: Option<PathBuf>,
        /// Truncation point for monomial certificates.
        #[arg(long = "K", alias = "k")]
        k: Option<usize>,
        /// Solve the finite LP over loads up to N instead of the truncated one.
        #[arg(long = "N", alias = "n")]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the block-phase dynamics with a strong potential certificate.
    Solve {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        c_override: Option<f64>,
        #[arg(long)]
        move_cap: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tolls from a social-cost certificate, optionally followed by local search.
    Taxes {
        #[arg(long)]
        game: PathBuf,
        /// Social-cost certificate; computed for the game when absent.
        #[arg(long)]
        cert: Option<PathBuf>,
        #[arg(long = "K", alias = "k")]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run local search under the tolls with this epsilon.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, requires = "epsilon")]
        profile_out: Option<PathBuf>,
        #[arg(long)]
        move_cap: Option<usize>,
    },
    /// Scheduling instance from the dual LP for `h(n) = n^(d+1)`.
    Lowerbound {
        #[arg(long)]
        degree: u32,
        #[arg(long = "N", alias = "n", default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check whether a profile is an alpha-approximate equilibrium.
    Verify {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Judge deviations under the taxed costs.
        #[arg(long, conflicts_with = "cert")]
        taxes: Option<PathBuf>,
        /// Judge deviations under a certificate's modified costs.
        #[arg(long)]
        cert: Option<PathBuf>,
    },
    /// Exhaustive price of anarchy and stretch of a small game.
    Oracle {
        #[arg(long)]
        game: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long)]
        taxes: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded random game.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        players: usize,
        #[arg(long)]
        resources: usize,
        #[arg(long, default_value_t = 1)]
        degree: u32,
        #[arg(long, value_enum, default_value_t = GameKind::Singleton)]
        kind: GameKind,
        #[arg(long, default_value_t = 3)]
        strategies: usize,
        #[arg(long, default_value_t = 2)]
        max_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// `x` with 4 significant digits.
fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.3}");
    }
    let mag = x.abs().log10().floor() as i32;
    let s = format!("{:.*}", (3 - mag).max(0) as usize, x);
    let back: f64 = s.parse().unwrap_or(x);
    if back.abs() >= 10f64.powi(mag + 1) {
        format!("{:.*}", (2 - mag).max(0) as usize, x)
    } else {
        s
    }
}

fn load_game(path: &PathBuf) -> anyhow::Result<Game> {
    let file: GameFile = io::read_json(path).with_context(|| format!("reading game {}", path.display()))?;
    Ok(file.to_game()?)
}

fn load_cert(path: &PathBuf) -> anyhow::Result<SmoothnessCertificate<f64>> {
    let file: CertificateFile = io::read_json(path).with_context(|| format!("reading certificate {}", path.display()))?;
    Ok(file.to_certificate()?)
}

fn default_k(family: ObjectiveFamily) -> usize {
    match family {
        ObjectiveFamily::Potential => DEFAULT_K_PHI,
        ObjectiveFamily::SocialCost => DEFAULT_K_SC,
    }
}

/// Certificate for every resource, monomial certificates solved once per degree.
fn game_certificate(game: &Game, family: ObjectiveFamily, k: Option<usize>, n: Option<usize>) -> anyhow::Result<SmoothnessCertificate<f64>> {
    let k = k.unwrap_or_else(|| default_k(family));
    let mut cache: HashMap<u32, SmoothnessCertificate<f64>> = HashMap::new();
    let cert = certify_game(game.resources(), family, n.unwrap_or(game.num_players()), |d| {
        if let Some(c) = cache.get(&d) {
            return Ok(c.clone());
        }
        log::info!("solving the degree-{d} certificate with K = {k}");
        let c = certify_monomial(family, d, k)?;
        cache.insert(d, c.clone());
        Ok(c)
    })?;
    Ok(cert)
}

fn write_out<S: serde::Serialize>(out: &Option<PathBuf>, value: &S) -> anyhow::Result<()> {
    if let Some(p) = out {
        io::write_json(p, value).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.cmd {
        Cmd::Lambda { objective, degree, game, k, n, out } => {
            let family = ObjectiveFamily::from(objective);
            let (cert, min_len) = match (degree, game) {
                (Some(d), _) => {
                    let cert = match n {
                        Some(n) => {
                            let f = CostFunction::monomial(1.0, d)?;
                            match family {
                                ObjectiveFamily::SocialCost => solve_lp_sc(&f, n, false)?.0,
                                ObjectiveFamily::Potential => solve_lp_phi(&f, n, false)?.0,
                            }
                        }
                        None => certify_monomial(family, d, k.unwrap_or_else(|| default_k(family)))?,
                    };
                    (cert, 1)
                }
                (None, Some(path)) => {
                    let g = load_game(&path)?;
                    (game_certificate(&g, family, k, n)?, g.num_players() + 1)
                }
                (None, None) => bail!(Error::InvalidGame("give --degree or --game".into())),
            };
            write_out(&out, &CertificateFile::from_certificate(&cert, min_len)?)?;
            println!("{}", sig4(cert.lambda));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Solve { game, cert, epsilon, c_override, move_cap, out } => {
            let g = load_game(&game)?;
            let cert = load_cert(&cert)?;
            let report = algorithm::run(&g, &cert, epsilon, &RunOptions { c_override, move_cap })?;
            write_out(&out, &RunReportFile::from_report(&report))?;
            println!("{}", sig4(report.certified_alpha));
            let ok = report.certified_alpha <= cert.lambda * (1.0 + epsilon) * (1.0 + 1e-12);
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Cmd::Taxes { game, cert, k, out, epsilon, profile_out, move_cap } => {
            let g = load_game(&game)?;
            let cert = match cert {
                Some(p) => load_cert(&p)?,
                None => game_certificate(&g, ObjectiveFamily::SocialCost, k, None)?,
            };
            let table = taxes::taxes_from_certificate(&cert, g.resources(), g.num_players())?;
            write_out(&out, &TaxFile::from_table(&table))?;
            if let Some(eps) = epsilon {
                let r = taxes::epsilon_local_search(&g, &cert, eps, None, move_cap)?;
                log::info!("local search: {} moves, social cost {}", r.moves, g.social_cost(&r.profile)?);
                write_out(&profile_out, &ProfileFile::from_profile(&r.profile))?;
            }
            println!("{}", sig4(cert.lambda));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Lowerbound { degree, n, epsilon, out } => {
            let f = CostFunction::monomial(1.0, degree)?;
            let h = congestion_core::smoothness::sc_objective(&f, n)?;
            let dual = if n <= 60 {
                lowerbound::solve_lpd(&h, n)?
            } else {
                lowerbound::dual_from_lp_sc(&f, n)?.1
            };
            log::info!("dual objective {}", dual.objective);
            let inst = lowerbound::construct_instance(&dual, epsilon)?;
            let gap = lowerbound::verify_gap(&inst, &h)?;
            log::info!("M = {}, {} machines, {} players", inst.scale, inst.machines.len(), inst.players.len());
            write_out(&out, &InstanceFile::from_instance(&inst, &f)?)?;
            println!("{}", sig4(gap.ratio));
            Ok(if gap.eq_is_pne { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Cmd::Verify { game, profile, alpha, taxes, cert } => {
            let g = load_game(&game)?;
            let p: ProfileFile = io::read_json(&profile).with_context(|| format!("reading profile {}", profile.display()))?;
            let s = p.to_profile(&g)?;
            let modified = match (taxes, cert) {
                (Some(t), _) => {
                    let t: TaxFile = io::read_json(&t)?;
                    Some(t.to_table()?.taxed_costs(g.resources())?)
                }
                (None, Some(c)) => Some(load_cert(&c)?.fprime),
                (None, None) => None,
            };
            let family = match &modified {
                Some(m) => CostFamily::Modified(m),
                None => CostFamily::Original,
            };
            let check = g.verify_alpha_equilibrium(&s, alpha, family)?;
            println!("{}", sig4(check.worst.ratio));
            Ok(if check.holds { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Cmd::Oracle { game, alpha, taxes, out } => {
            let g = load_game(&game)?;
            let table = match taxes {
                Some(t) => Some(io::read_json::<TaxFile>(&t)?.to_table()?),
                None => None,
            };
            let poa = oracle::exact_poa(&g, table.as_ref())?;
            let stretch = oracle::exact_stretch(&g, alpha, CostFamily::Original, CostFamily::Original)?;
            let equilibria = oracle::enumerate_equilibria(&g, alpha, CostFamily::Original)?.len();
            let report = OracleFile {
                profiles: g.profile_space() as usize,
                equilibria,
                poa: io::round6(poa),
                stretch: io::round6(stretch),
            };
            write_out(&out, &report)?;
            println!("{}", sig4(poa));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Gen { seed, players, resources, degree, kind, strategies, max_size, out } => {
            let mut rng = gen::rng(seed);
            let g = match kind {
                GameKind::Singleton => gen::random_singleton(&mut rng, players, resources, degree)?,
                GameKind::General => gen::random_general(&mut rng, players, resources, strategies, max_size, degree)?,
            };
            io::write_json(&out, &GameFile::from_game(&g))?;
            println!("{}", g.profile_space());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::LpFailed(_) | Error::LazyNonConvergence { .. } | Error::MalformedLp(_)) => 2,
        Some(Error::ParameterInfeasible { .. }) => 4,
        Some(Error::MoveCapExceeded { .. }) => 5,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
