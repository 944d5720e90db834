//! Built-in benchmark games.

mod cliff;
mod random;
mod tables;

pub use cliff::{
    cliff_walk, cliff_world, default_parameters, Cell, CliffOverrides, CliffRisk, CliffVariant,
    GridWorld, ACTION_NAMES, MOVES,
};
pub use random::{
    random_markov_dynamics, random_markov_game, random_matrix_game, random_payoffs, random_row,
    MarkovDims,
};
pub use tables::{all_tables, matching_pennies, payoff_table};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Name of a built-in game, written `bench:<name>` on the command line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BenchmarkId {
    /// Game 4 of the Goeree-Holt-Palfrey tables.
    Ghp(usize),
    /// Games 1 to 12 of the Selten-Chmura tables.
    Sc(usize),
    CliffKl,
    CliffL1,
    RandomMatrix,
    RandomMarkov,
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ghp(k) => write!(f, "ghp{k}"),
            Self::Sc(k) => write!(f, "sc{k}"),
            Self::CliffKl => f.write_str("cliff-kl"),
            Self::CliffL1 => f.write_str("cliff-l1"),
            Self::RandomMatrix => f.write_str("random-matrix"),
            Self::RandomMarkov => f.write_str("random-markov"),
        }
    }
}

impl FromStr for BenchmarkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let name = s.strip_prefix("bench:").unwrap_or(s).to_ascii_lowercase();
        let unknown = || Error::InvalidInput(format!("unknown benchmark {s:?}"));
        let id = match name.as_str() {
            "cliff-kl" => Self::CliffKl,
            "cliff-l1" => Self::CliffL1,
            "random-matrix" => Self::RandomMatrix,
            "random-markov" => Self::RandomMarkov,
            _ => {
                if let Some(k) = name.strip_prefix("ghp") {
                    Self::Ghp(k.parse().map_err(|_| unknown())?)
                } else if let Some(k) = name.strip_prefix("sc") {
                    Self::Sc(k.parse().map_err(|_| unknown())?)
                } else {
                    return Err(unknown());
                }
            }
        };
        match id {
            Self::Ghp(k) if k != 4 => Err(unknown()),
            Self::Sc(k) if !(1..=12).contains(&k) => Err(unknown()),
            id => Ok(id),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_names() {
        assert_eq!(
            "bench:ghp4".parse::<BenchmarkId>().unwrap(),
            BenchmarkId::Ghp(4)
        );
        assert_eq!("SC12".parse::<BenchmarkId>().unwrap(), BenchmarkId::Sc(12));
        assert_eq!(
            "bench:cliff-l1".parse::<BenchmarkId>().unwrap(),
            BenchmarkId::CliffL1
        );
        for bad in ["ghp3", "sc0", "sc13", "bench:maze", "scx"] {
            assert!(bad.parse::<BenchmarkId>().is_err(), "{bad}");
        }
        for id in all_tables() {
            assert_eq!(id.to_string().parse::<BenchmarkId>().unwrap(), id);
        }
    }
}
