pub mod constraint;
pub mod domain;
pub mod env;
pub mod generator;
pub mod grid;
pub mod harness;
pub mod report;
pub mod seed;
pub mod suite;
