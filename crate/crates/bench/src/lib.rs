//! Instance generators, experiment drivers and run verification for the query-selection library.

pub mod instances;
pub mod verify;
pub mod experiment;
