//! Benchmark synthesis from practice guidelines, exam administration against
//! chat endpoints, and psychometric screening of the resulting trials.

pub mod corpus;
pub mod exam;
pub mod extract;
pub mod factory;
pub mod gateway;
pub mod prompts;
pub mod report;
pub mod sim;
pub mod stats;

pub use corpus::{Bloom, Dialogue, Domain, McqItem, McqOption, Practice, Profile, Scenario, TrialRecord};
pub use gateway::{ChatRequest, ChatResponse, Gateway, GatewayError, TaskTag};
pub use stats::{GlmmFit, ModelSpec, StatsError};
