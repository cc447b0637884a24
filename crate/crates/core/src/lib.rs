pub mod banded;
pub mod certificates;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod linalg;
pub mod solver;
pub mod weighting;
