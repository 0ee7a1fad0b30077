//! Core library of the credit-negotiation simulator.
//!
//! The decision stack pairs a payoff-game emotion policy with a hidden
//! strategic-mode model of the debtor; the simulator drives scripted or
//! LLM-backed agents through multi-turn negotiations and aggregates outcome
//! and conduct metrics across generated scenarios.

pub mod agents;
pub mod defaults;
pub mod emotion;
pub mod experiment;
pub mod hmm;
pub mod metrics;
pub mod payoff;
pub mod policy;
pub mod scenario;
pub mod sim;
