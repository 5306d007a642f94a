//! Distributionally robust average-reward reinforcement learning for tabular
//! MDPs.
//!
//! The crate is organized bottom-up:
//!
//! - [`mdp`]: the MDP model and exact Markov-chain analytics (stationary
//!   distributions, gain and bias, mixing times, the span seminorm).
//! - [`ambiguity`]: support functions `σ_P(V) = min_{q ∈ P} q·V` for
//!   contamination, total-variation and Wasserstein sets, plus an LP oracle.
//! - [`sim`]: generative-model sampling with keyed, reproducible streams and
//!   the truncated multilevel Monte Carlo support estimator.
//! - [`planning`]: sample-free robust evaluation and control oracles and the
//!   contraction diagnostics.
//! - [`qlearning`], [`critic`], [`nac`]: the stochastic-approximation
//!   learners built on the pieces above.
//! - [`generate`]: random ergodic MDP instances.

pub mod ambiguity;
pub mod critic;
pub mod error;
pub mod generate;
pub mod mdp;
pub mod nac;
pub mod planning;
pub mod qlearning;
pub mod schedule;
pub mod sim;

pub use error::{Error, Result};
