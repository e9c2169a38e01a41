pub mod baselines;
pub mod corpus;
pub mod error;
pub mod experiments;
pub mod generator;
pub mod learner;
pub mod metrics;
pub mod model;
pub mod parser;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Atom, Chunk, ChunkId, CountTables, Inventory, Term, VarId, Variable};
