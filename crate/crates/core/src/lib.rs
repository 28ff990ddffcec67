//! From-scratch neural-computation library: binary associative memories and
//! their mean-field theory, Markov-chain Monte-Carlo optimization, layered and
//! recurrent networks trained by backpropagation, unsupervised Hebbian and
//! self-organizing learning, radial basis functions, and associative
//! reward-penalty reinforcement.
//!
//! Everything is deterministic given a [`numerics::RandomStream`] seed; no
//! external math or ML dependencies are used.

pub mod anneal;
pub mod feedforward;
pub mod hopfield;
pub mod meanfield;
pub mod numerics;
pub mod rbf;
pub mod recurrent;
pub mod reinforce;
pub mod unsupervised;
