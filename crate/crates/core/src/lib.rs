//! Sharp-interface Ohta-Kawasaki energy on planar domains: energy and
//! criticality evaluation, the second variation and its spectrum, stability
//! probes, and a diffuse-interface comparison model.

pub mod cli;
pub mod diffuse;
pub mod domain;
pub mod energy;
pub mod error;
pub mod field;
pub mod geometry;
pub mod interface;
pub mod probe;
pub mod secondvar;

pub use domain::{DomainKind, DomainSpec, Grid, Point};
pub use error::{Error, Result};
pub use interface::{Interface, RegionState};
