//! Decentralized locational-marginal-price market clearing.
//!
//! Distribution and generation companies respond to posted prices, transmission
//! companies agree on voltage angles through an ADMM message exchange, and a
//! market operator moves prices along the dual gradient until power balances
//! at every bus. An oracle module provides brute-force and finite-difference
//! references for small cases.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod case;
pub mod cli;
pub mod consensus;
pub mod market;
pub mod network;
pub mod oracle;
pub mod scenario;
pub mod transco;

pub use case::{Case, CaseDefaults, CaseIssue};
pub use market::PriceVector;
pub use network::{Line, Network, OperatingPoint};
