//! Wait-free, atomic, amnesic, Byzantine-tolerant erasure-coded register,
//! together with a deterministic adversarial simulator, a linearizability
//! checker and storage and bandwidth accounting.

pub mod cli;
pub mod client;
pub mod directory;
pub mod erasure;
pub mod fault;
pub mod messages;
pub mod node;
pub mod sim;
pub mod types;
pub mod verify;
