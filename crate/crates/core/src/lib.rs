//! Approximate equilibria, smoothness certificates and taxes for congestion games.

pub mod algorithm;
pub mod cost;
pub mod error;
pub mod game;
pub mod gen;
pub mod io;
pub mod lowerbound;
pub mod lp;
pub mod oracle;
pub mod scalar;
pub mod smoothness;
pub mod taxes;

pub use cost::{CostFunction, LoadCost, ModifiedCost};
pub use error::{Error, Result};
pub use game::{CongestionGame, CostFamily, PlayerSubset, StrategyProfile};
pub use scalar::Scalar;

pub type Cost = CostFunction<f64>;
pub type Modified = ModifiedCost<f64>;
pub type Game = CongestionGame<f64>;
pub type Profile = StrategyProfile;
pub type Program = lp::LinearProgram<f64>;
