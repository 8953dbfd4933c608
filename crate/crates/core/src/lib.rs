pub mod analysis;
pub mod composition;
pub mod experiment;
pub mod gallery;
pub mod graph;
pub mod linalg;
pub mod objectives;
pub mod policies;
pub mod prob;
pub mod scheduler;
pub mod shield;
