//! Percolation engine for line-of-sight connectivity on planar
//! Poisson-Voronoi street systems.
//!
//! The pipeline: sample Poisson seeds and build the Voronoi street system
//! ([`pvt`]), drop Cox-process users on streets and Bernoulli relays on
//! crossroads ([`processes`]), link nodes that share a street within the
//! connectivity range ([`graph`]), and estimate crossing probabilities and
//! critical parameters over many seeded trials ([`montecarlo`]). The
//! [`coarsegrain`] module turns the renormalization constructions behind the
//! model's phase-transition analysis into executable diagnostics.

pub mod coarsegrain;
pub mod geometry;
pub mod graph;
pub mod montecarlo;
pub mod processes;
pub mod pvt;

pub use geometry::{clip_segment, cube, Point, RngStream, Segment, StreamRng, Window};
pub use graph::{build_graph, build_graph_infinite_range, crosses_window, ComponentLabels, GraphNode};
pub use montecarlo::{
    crossing_probability, find_critical, from_dimensionless, sweep, to_dimensionless,
    DimensionlessParams, EstimateResult, ExperimentConfig, ModelParams,
};
pub use processes::{
    is_segment_open, sample_relays, sample_users, street_open_probability, NodeSet,
    RelayAssignment, User,
};
pub use pvt::{build_tessellation, compute_stats, sample_seeds, SeedSet, Tessellation};
