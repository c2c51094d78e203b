//! Resilient blanket coverage with teams of failure-prone robots.
//!
//! The crate covers the full planning loop: pick a minimum team that meets
//! budget, reliability and area requirements, place it greedily on a weighted
//! grid, and repair coverage locally when a robot fails mid-mission.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod clique;
pub mod coordination;
pub mod coverage;
pub mod placement;
pub mod reliability;
pub mod scenario;
pub mod selection;
pub mod world;

mod clock {
    #[cfg(not(target_arch = "wasm32"))]
    pub use std::time::Instant;
    #[cfg(target_arch = "wasm32")]
    pub use web_time::Instant;
}

pub use assignment::{
    assign_goals, check_clearance, plan_motion, Assignment, AssignmentError, MotionPlan,
};
pub use clique::{
    distributed_clique_cover, validate_cover, CliqueCoverOptions, CliqueCoverReport, CliqueError,
    CommGraph,
};
pub use coordination::{
    l_neighbors, reconfigure, CoordinationError, CoordinationParams, CoordinationResult,
    FailureContext,
};
pub use coverage::{
    coverage, detection_map, detection_probability, CoverageCache, CoverageError, Placement,
};
pub use placement::{
    greedy_place, lazy_greedy_place, place, GreedyOutcome, GreedyStrategy, PlacementError,
    PlacementProblem,
};
pub use reliability::{ActiveRobot, FailureEvent, RobotId, RobotSpec, Roster};
pub use selection::{solve_min_cardinality, IlpProblem, Selection, SelectionError, SolverOptions};
pub use world::{build_grid, CellSet, DensitySpec, Grid, Point, Rect};
