//! Tabular MDP planning for rover traverses: flat value iteration, tabular
//! RL baselines and a bi-level (target selection + navigation) decomposition.

pub mod bench;
pub mod bilevel;
pub mod error;
pub mod mdp;
pub mod rl;
pub mod rover;

pub use error::{Error, Result};
