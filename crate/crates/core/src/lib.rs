//! Continuous-time reinforcement learning for jump-diffusion markets.
//!
//! The crate is organised around the two applications it implements:
//!
//! * mean-variance portfolio selection, learned with martingale-based
//!   q-learning ([`mv`]) and checked against closed-form solutions;
//! * mean-variance (quadratic) hedging of European options, learned with an
//!   actor-critic ([`hedging`]) whose actor is built on a Fourier-cosine
//!   pricer ([`cos`]) and whose critic is a Gaussian process ([`gp`]).
//!
//! Supporting modules provide the Merton jump-diffusion market ([`market`]),
//! Gaussian feedback policies ([`policy`]), the grid-sampled and exploratory
//! state processes with their Monte Carlo harnesses ([`exploratory`]),
//! maximum-likelihood baselines and bootstrap pipelines ([`estimation`]), and
//! the configuration-driven experiment runner behind the `jumprl` binary
//! ([`cli`]).

pub mod cli;
pub mod cos;
pub mod error;
pub mod estimation;
pub mod exploratory;
pub mod gp;
pub mod hedging;
pub mod market;
pub mod mv;
pub mod optim;
pub mod policy;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use market::MarketParams;
