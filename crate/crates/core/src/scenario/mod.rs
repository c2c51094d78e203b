//! End-to-end missions: pool generation, selection, placement, timed
//! failures, recovery, logging, and the batch experiments.

mod config;
mod engine;
mod experiments;
mod log;
mod mission;
mod pool;

pub use config::{OperatorMode, ScenarioConfig, ScheduledFailure};
pub use engine::{run_scenario, run_scenario_with, Operator, ScriptedOperator};
pub use experiments::{
    experiment_added_robots, experiment_coverage_vs_l, experiment_robots_vs_l, ExperimentRow,
    ExperimentTable,
};
pub use log::{replay, Event, LogEntry, ReplayState, RunLog};
pub use mission::{Mission, MissionSnapshot, Recovery, RobotStatus, ScenarioError};
pub use pool::generate_pool;
