//! JSON file formats. Everything on disk is `f64`; conversion happens here.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::algorithm::RunReport;
use crate::cost::{CostFunction, ModifiedCost};
use crate::error::{Error, Result};
use crate::game::{CongestionGame, StrategyProfile};
use crate::lowerbound::SchedulingInstance;
use crate::smoothness::{ObjectiveFamily, Scope, SmoothnessCertificate};
use crate::taxes::TaxTable;

/// Rounds a reported value to 6 decimals.
pub fn round6(x: f64) -> f64 {
    if x.is_finite() && x.abs() < 1e12 {
        (x * 1e6).round() / 1e6
    } else {
        x
    }
}

/// Rounds up to 6 decimals, so a rounded factor stays certified.
pub fn ceil6(x: f64) -> f64 {
    if x.is_finite() && x.abs() < 1e12 {
        let near = round6(x);
        if near >= x {
            return near;
        }
        let r = (x * 1e6).ceil() / 1e6;
        if r < x {
            r + 1e-6
        } else {
            r
        }
    } else {
        x
    }
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(fs::write(path, s)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ResourceFile {
    Poly { coeffs: Vec<f64> },
    /// `f(1)..f(N_max)`.
    Table { values: Vec<f64> },
}

impl ResourceFile {
    pub fn from_cost(f: &CostFunction<f64>) -> Self {
        match f {
            CostFunction::Table { values } => ResourceFile::Table { values: values.clone() },
            CostFunction::Monomial { coeff, degree } => {
                let mut coeffs = vec![0.0; *degree as usize + 1];
                coeffs[*degree as usize] = *coeff;
                ResourceFile::Poly { coeffs }
            }
            CostFunction::Polynomial { coeffs } => ResourceFile::Poly { coeffs: coeffs.clone() },
        }
    }

    pub fn to_cost(&self) -> Result<CostFunction<f64>> {
        match self {
            ResourceFile::Poly { coeffs } => CostFunction::polynomial(coeffs.clone()),
            ResourceFile::Table { values } => CostFunction::table(values.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerFile {
    pub strategies: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    pub resources: Vec<ResourceFile>,
    pub players: Vec<PlayerFile>,
}

impl GameFile {
    pub fn from_game(game: &CongestionGame<f64>) -> Self {
        Self {
            resources: game.resources().iter().map(ResourceFile::from_cost).collect(),
            players: game.players().iter().map(|s| PlayerFile { strategies: s.clone() }).collect(),
        }
    }

    pub fn to_game(&self) -> Result<CongestionGame<f64>> {
        let resources = self.resources.iter().map(ResourceFile::to_cost).collect::<Result<_>>()?;
        CongestionGame::new(resources, self.players.iter().map(|p| p.strategies.clone()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub choices: Vec<usize>,
}

impl ProfileFile {
    pub fn from_profile(s: &StrategyProfile) -> Self {
        Self { choices: s.choices().to_vec() }
    }

    pub fn to_profile(&self, game: &CongestionGame<f64>) -> Result<StrategyProfile> {
        StrategyProfile::new(game, self.choices.clone())
    }
}

/// Certificate file. `fprime[e]` lists `f'_e(1..=L)`; loads past `L` follow
/// `tail[e]` (polynomial coefficients) when present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub lambda: f64,
    pub objective: String,
    pub scope: String,
    pub fprime: Vec<Vec<f64>>,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(rename = "K", default)]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<Vec<Option<Vec<f64>>>>,
}

impl CertificateFile {
    /// Tables are written at full precision, tabulated at least to `min_len`;
    /// `lambda` is rounded up to 6 decimals.
    pub fn from_certificate(cert: &SmoothnessCertificate<f64>, min_len: usize) -> Result<Self> {
        let mut fprime = Vec::new();
        let mut tails = Vec::new();
        for fp in &cert.fprime {
            let t = fp.tabulated(fp.table_len().max(min_len))?;
            fprime.push(t.values()[1..].to_vec());
            tails.push(t.tail().map(<[f64]>::to_vec));
        }
        let tail = tails.iter().any(Option::is_some).then_some(tails);
        Ok(Self {
            lambda: ceil6(cert.lambda),
            objective: cert.objective.as_str().into(),
            scope: cert.scope.as_str().into(),
            fprime,
            nu: cert.nu,
            k: cert.k,
            tail,
        })
    }

    pub fn to_certificate(&self) -> Result<SmoothnessCertificate<f64>> {
        let objective: ObjectiveFamily = self.objective.parse()?;
        let scope: Scope = self.scope.parse()?;
        let mut fprime = Vec::with_capacity(self.fprime.len());
        for (e, row) in self.fprime.iter().enumerate() {
            let mut values = vec![0.0];
            values.extend_from_slice(row);
            let mut m = ModifiedCost::from_table(values)?;
            if let Some(Some(t)) = self.tail.as_ref().map(|t| t.get(e).cloned().flatten()) {
                m = m.with_tail(t);
            }
            fprime.push(m);
        }
        Ok(SmoothnessCertificate { lambda: self.lambda, objective, scope, fprime, nu: self.nu, k: self.k })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaxFile {
    /// `taxes[e][n - 1] = t_e(n)`.
    pub taxes: Vec<Vec<f64>>,
    pub lambda: f64,
}

impl TaxFile {
    pub fn from_table(t: &TaxTable<f64>) -> Self {
        Self { taxes: t.taxes.clone(), lambda: ceil6(t.lambda) }
    }

    pub fn to_table(&self) -> Result<TaxTable<f64>> {
        let len = self.taxes.first().map_or(0, Vec::len);
        if self.taxes.iter().any(|r| r.len() != len) {
            return Err(Error::Certificate("tax rows differ in length".into()));
        }
        Ok(TaxTable { taxes: self.taxes.clone(), lambda: self.lambda })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub q: f64,
    pub p: f64,
    pub c: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    pub theta_q: f64,
    pub z_hat: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReportFile {
    pub profile: ProfileFile,
    pub moves: usize,
    pub phases: usize,
    pub certified_alpha: f64,
    pub params: ParamsFile,
}

impl RunReportFile {
    pub fn from_report(r: &RunReport<f64>) -> Self {
        Self {
            profile: ProfileFile::from_profile(&r.profile),
            moves: r.moves.len(),
            phases: r.phases,
            certified_alpha: round6(r.certified_alpha),
            params: ParamsFile {
                q: round6(r.params.q),
                p: round6(r.params.p),
                c: round6(r.params.c),
                delta: round6(r.params.delta),
                theta_q: round6(r.params.theta_q),
                z_hat: r.blocks.z_hat,
            },
        }
    }
}

/// A scheduling instance as a game plus the two distinguished profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(flatten)]
    pub game: GameFile,
    pub equilibrium_profile: ProfileFile,
    pub optimal_profile: ProfileFile,
}

impl InstanceFile {
    pub fn from_instance(inst: &SchedulingInstance<f64>, cost: &CostFunction<f64>) -> Result<Self> {
        let (game, eq, opt) = inst.to_game(cost)?;
        Ok(Self {
            game: GameFile::from_game(&game),
            equilibrium_profile: ProfileFile::from_profile(&eq),
            optimal_profile: ProfileFile::from_profile(&opt),
        })
    }
}

/// Exhaustive results for a small game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleFile {
    pub profiles: usize,
    pub equilibria: usize,
    pub poa: f64,
    pub stretch: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip<S: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(v: &S) {
        let s = serde_json::to_string(v).unwrap();
        assert_eq!(&serde_json::from_str::<S>(&s).unwrap(), v);
    }

    #[test]
    fn game_format() {
        let s = r#"{"resources":[{"kind":"poly","coeffs":[0,1]},{"kind":"table","values":[1,2,4]}],
                   "players":[{"strategies":[[0],[1]]},{"strategies":[[0,1]]}]}"#;
        let gf: GameFile = serde_json::from_str(s).unwrap();
        let g = gf.to_game().unwrap();
        assert_eq!(g.num_players(), 2);
        assert_eq!(GameFile::from_game(&g), gf);
        roundtrip(&gf);
        let bad = r#"{"resources":[{"kind":"cubic","coeffs":[1]}],"players":[]}"#;
        assert!(serde_json::from_str::<GameFile>(bad).is_err());
    }

    #[test]
    fn monomial_becomes_poly() {
        let f = CostFunction::monomial(2.0, 2).unwrap();
        assert_eq!(ResourceFile::from_cost(&f), ResourceFile::Poly { coeffs: vec![0.0, 0.0, 2.0] });
    }

    #[test]
    fn certificate_roundtrip() {
        let f = CostFunction::linear();
        let fp = ModifiedCost::scaled(&f, 1.5, 3).unwrap();
        let cert = SmoothnessCertificate {
            lambda: 1.5000001,
            objective: ObjectiveFamily::SocialCost,
            scope: Scope::Plain,
            fprime: vec![fp],
            nu: None,
            k: None,
        };
        let file = CertificateFile::from_certificate(&cert, 5).unwrap();
        assert_eq!(file.lambda, 1.500001);
        assert_eq!(file.fprime[0], vec![1.5, 3.0, 4.5, 6.0, 7.5]);
        roundtrip(&file);
        let back = CertificateFile::from_certificate(&file.to_certificate().unwrap(), 5).unwrap();
        assert_eq!(back, file);
        let json = serde_json::to_value(&file).unwrap();
        assert!(json.get("K").is_some() && json.get("nu").is_some());
    }

    #[test]
    fn rounding() {
        assert_eq!(round6(2.0120669), 2.012067);
        assert_eq!(ceil6(2.0120661), 2.012067);
        assert_eq!(ceil6(1.0), 1.0);
        assert_eq!(ceil6(2.000001), 2.000001);
        assert!(ceil6(0.1 + 0.2) >= 0.1 + 0.2);
    }

    #[test]
    fn tax_file() {
        let t = TaxFile { taxes: vec![vec![0.5, 1.0], vec![0.25, 0.5]], lambda: 1.5 };
        roundtrip(&t);
        assert_eq!(TaxFile::from_table(&t.to_table().unwrap()), t);
        assert!(TaxFile { taxes: vec![vec![1.0], vec![]], lambda: 1.0 }.to_table().is_err());
    }
}
