//! Bayesian games of incomplete information solved by no-regret learning, and
//! an interactive driving planner built on top.
//!
//! The crate is organized bottom-up:
//!
//! * [`game`]: staged games with private types and a common prior.
//! * [`solver`]: MCCFR-S, whose empirical plan distribution converges to a
//!   Bayesian coarse correlated equilibrium.
//! * [`policy`]: per-type value estimates, type selection, and the marginal
//!   and leader-follower ways of executing the equilibrium.
//! * [`belief`]: Bayesian intention updates with Gaussian-mixture likelihoods.
//! * [`traffic`]: reference lines, trajectory trees and the driving utility.
//! * [`sim`]: the closed-loop planner, the complete-information baseline and
//!   the metric suite.
//! * [`verify`]: brute-force oracles and tiny games used to check the solver.

pub mod belief;
pub mod game;
pub mod policy;
pub mod sim;
pub mod solver;
pub mod traffic;
pub mod verify;

pub use game::{ActionId, GameSpec, InfoSetKey, PlayerId, Prior, TabularGame, TypeId, TypeVector};
pub use solver::{solve, SolveResult, SolverConfig};
