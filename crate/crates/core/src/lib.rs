//! Branched (ramified) optimal transport between atomic measures, with a
//! catalog of fractal measure sequences and transport dimension estimates.

pub mod bounds;
pub mod cli;
pub mod dimension;
pub mod fractal_catalog;
pub mod measures;
pub mod solver;
pub mod transport_graph;
