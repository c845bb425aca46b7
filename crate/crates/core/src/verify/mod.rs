//! Tiny reference games and brute-force oracles for checking the solver.
//!
//! Everything here enumerates trees, plans or type vectors exhaustively and is
//! only practical on games with a handful of information sets.

pub mod games;
pub mod oracle;
pub mod suite;
