//! Risk-averse quantal response equilibria (RQE) for finite games.
//!
//! Players evaluate mixed strategies through a convex risk measure of their
//! payoff and soften best responses with a strictly convex regularizer. The
//! crate computes such equilibria for normal-form games by running no-regret
//! learning on an auxiliary game with one adversary per player, solves
//! finite-horizon Markov games by backward induction over stage games, and
//! studies model-based estimation from a generative model.
//!
//! The guide in the repository's `book/` directory walks through the concepts;
//! its code snippets are compiled as doctests.

pub mod envlib;
pub mod error;
pub mod estimation;
pub mod formats;
pub mod markov;
pub mod matrix;
pub mod risk;
pub mod simplex;
pub mod solver;

pub use error::{Error, Result};

pub use matrix::{MatrixGameSpec, RationalitySpec, RiskMode};
pub use risk::RiskSpec;
pub use simplex::{MixedStrategy, ProductStrategy, Regularizer};
pub use solver::{solve_rqe, SolveReport, SolverConfig};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/simplex.md")]
    mod simplex {}
    #[doc = include_str!("../../../book/src/risk.md")]
    mod risk {}
    #[doc = include_str!("../../../book/src/matrix.md")]
    mod matrix {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/markov.md")]
    mod markov {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/envlib.md")]
    mod envlib {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
