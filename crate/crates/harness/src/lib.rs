//! Scenario runner for the anonpool protocol engine: a deterministic
//! simulation loop, the attack catalog, the secure-sum payload
//! computation, and the anonymity/unlinkability calculators behind the
//! `anonpool` CLI.

pub mod adversary;
pub mod props;
pub mod scenario;
pub mod secure_sum;
pub mod sim;
