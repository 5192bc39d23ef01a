//! Metastates of finite-type mean-field spin models whose random fields are
//! generated by an ergodic Markov chain.
//!
//! The crate is organised bottom-up: [`markov`] analyses the disorder chain,
//! [`meanfield`] finds free-energy minimizers and their stability vectors,
//! [`potts`] holds closed forms for the random-field Potts model, [`gibbs`]
//! computes exact finite-volume laws, and [`metastate`] assembles weights and
//! atoms from all of them. Replica loops run on rayon unless the `parallel`
//! feature is disabled; see [`exec`].

pub mod error;
pub mod exec;
pub mod gibbs;
pub mod markov;
pub mod meanfield;
pub mod metastate;
pub mod potts;
pub mod simplex;
pub mod verify;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
