//! Engine for conversational discovery over multi-entity metadata.

pub mod agents;
pub mod data;
pub mod error;
pub mod executor;
pub mod filter;
pub mod fixture;
pub mod grammar;
pub mod session;
