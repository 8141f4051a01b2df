//! Social recommendation with dynamic (sequence) and static (attention)
//! representations of users and items, relational aggregation over a user
//! social graph and an item correlative graph, and the training/evaluation
//! machinery around it.

pub mod data;
pub mod error;
pub mod graph;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
