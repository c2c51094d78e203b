use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{plan_motion, AssignmentError, MotionPlan};
use crate::coordination::{
    reconfigure, CoordinationError, CoordinationParams, CoordinationResult, FailureContext,
};
use crate::coverage::{coverage, detection_map, CoverageError, Placement};
use crate::placement::{place, PlacementError, PlacementProblem};
use crate::reliability::{
    roulette_pick, sample_failure_after, ActiveRobot, FailureEvent, ReliabilityError, RobotId,
    RobotSpec, Roster,
};
use crate::selection::{
    build_initial_ilp, solve_min_cardinality, InitialSelectionParams, SelectionError,
};
use crate::world::{build_grid, CellSet, Grid, Point, WorldError};

use super::config::ScenarioConfig;
use super::log::{Event, RunLog};
use super::pool::generate_pool;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("initial selection infeasible: {0}")]
    SelectionInfeasible(String),
    #[error("a failure is already awaiting a decision")]
    FailurePending,
    #[error("no failure is awaiting a decision")]
    NoPendingFailure,
    #[error("the mission has finished")]
    Finished,
    #[error("robot {0} is not active")]
    NotActive(RobotId),
    #[error("no active robot can fail")]
    NoFailurePossible,
    #[error("failure time {time} outside ({clock}, {horizon})")]
    InvalidTime { time: f64, clock: f64, horizon: f64 },
    #[error("interactive missions need an operator")]
    InteractiveNeedsOperator,
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error(transparent)]
    Coordination(#[from] CoordinationError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Reliability(#[from] ReliabilityError),
}

#[derive(Debug, Clone, PartialEq)]
struct PendingFailure {
    event: FailureEvent,
    detected_at: f64,
}

/// Outcome of one recovery, computed without touching the mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub failed: RobotId,
    pub params: CoordinationParams,
    pub result: CoordinationResult,
    /// Set when the augmentation step could not be carried out.
    pub augment_error: Option<String>,
    pub motion: MotionPlan,
    /// Final placement after goal reassignment.
    pub placement: Placement,
    pub coverage_before: f64,
    pub coverage_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotStatus {
    Active,
    Failed,
    /// In the pool, never deployed.
    Available,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotView {
    pub spec: RobotSpec,
    pub status: RobotStatus,
    pub cell: Option<usize>,
    pub position: Option<Point>,
    pub activated_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSnapshot {
    pub clock: f64,
    pub horizon: f64,
    pub nx: usize,
    pub ny: usize,
    pub cell_size: f64,
    pub origin: Point,
    pub robots: Vec<RobotView>,
    pub pending_failure: Option<FailureEvent>,
    pub failures_handled: usize,
    /// Whole-domain coverage of the working robots.
    pub coverage: f64,
    /// Per-cell detection probability, row-major.
    pub heatmap: Vec<f64>,
    pub finished: bool,
}

/// Live state of one mission.
#[derive(Debug, Clone)]
pub struct Mission {
    config: ScenarioConfig,
    grid: Grid,
    pool: Vec<RobotSpec>,
    roster: Roster,
    available: Vec<bool>,
    active: BTreeMap<RobotId, f64>,
    failed: Vec<RobotId>,
    /// Working robots plus the pending failed robot, if any.
    placement: Placement,
    clock: f64,
    pending: Option<PendingFailure>,
    failures_handled: usize,
    finished: bool,
    rng: ChaCha8Rng,
    log: RunLog,
}

impl Mission {
    /// Generates the pool, selects the initial team and places it.
    pub fn start(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let grid = build_grid(config.domain, config.cell_size)?.with_density(&config.density)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let pool = generate_pool(&config, &mut rng);
        let roster: Roster = pool.iter().cloned().collect();
        let mut log = RunLog::default();
        log.push(0.0, Event::PoolGenerated { pool: pool.clone() });

        let params = InitialSelectionParams {
            budget: config.beta,
            alpha: config.alpha,
            redundancy: config.delta,
            domain_area: config.area_q.unwrap_or_else(|| grid.area()),
            horizon: config.horizon,
        };
        let ilp = build_initial_ilp(&pool, &params)?;
        let selection = match solve_min_cardinality(&ilp, &config.solver_options()) {
            Ok(s) => s,
            Err(SelectionError::Infeasible) => {
                return Err(ScenarioError::SelectionInfeasible(format!(
                    "no subset of the {} pool robots meets budget {}, alpha {} and area {}",
                    pool.len(),
                    params.budget,
                    params.alpha,
                    params.redundancy * params.domain_area
                )))
            }
            Err(e) => return Err(e.into()),
        };
        log.push(
            0.0,
            Event::TeamSelected {
                selection: selection.clone(),
                notes: ilp.notes.clone(),
            },
        );

        let team: Vec<RobotSpec> = selection
            .ids
            .iter()
            .map(|id| roster.get(*id).expect("pool id").clone())
            .collect();
        let cells = CellSet::all(&grid);
        let empty = Placement::new();
        let problem = PlacementProblem {
            grid: &grid,
            cells: &cells,
            team: &team,
            frozen: &empty,
            roster: &roster,
        };
        let placement = place(&problem, config.strategy)?.placement;
        let value = coverage(&placement, &roster, &grid, &cells)?;
        log.push(
            0.0,
            Event::Placed {
                placement: placement.clone(),
                coverage: value,
            },
        );

        let available = pool
            .iter()
            .map(|s| !selection.ids.contains(&s.id))
            .collect();
        let active = selection.ids.iter().map(|id| (*id, 0.0)).collect();
        Ok(Self {
            config,
            grid,
            pool,
            roster,
            available,
            active,
            failed: Vec::new(),
            placement,
            clock: 0.0,
            pending: None,
            failures_handled: 0,
            finished: false,
            rng,
            log,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn pool(&self) -> &[RobotSpec] {
        &self.pool
    }

    pub fn roster(&self) -> &Roster {
        &self.roster
    }

    pub fn available(&self) -> &[bool] {
        &self.available
    }

    /// Working robots plus the pending failed robot.
    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn failed(&self) -> &[RobotId] {
        &self.failed
    }

    pub fn pending_failure(&self) -> Option<FailureEvent> {
        self.pending.as_ref().map(|p| p.event)
    }

    pub fn failures_handled(&self) -> usize {
        self.failures_handled
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn into_log(self) -> RunLog {
        self.log
    }

    pub fn active_robots(&self) -> Vec<ActiveRobot> {
        self.active
            .iter()
            .map(|(id, t)| ActiveRobot::new(self.roster.get(*id).expect("active id").clone(), *t))
            .collect()
    }

    /// Placement of the robots that still work.
    pub fn working_placement(&self) -> Placement {
        self.placement.filtered(|id| self.active.contains_key(&id))
    }

    pub fn coverage(&self) -> Result<f64, ScenarioError> {
        Ok(coverage(
            &self.working_placement(),
            &self.roster,
            &self.grid,
            &CellSet::all(&self.grid),
        )?)
    }

    pub fn heatmap(&self) -> Result<Vec<f64>, ScenarioError> {
        Ok(detection_map(
            &self.working_placement(),
            &self.roster,
            &self.grid,
        )?)
    }

    fn draw_time(&mut self) -> f64 {
        loop {
            let t = self.rng.random_range(self.clock..self.config.horizon);
            if t > self.clock {
                return t;
            }
        }
    }

    /// Fails `robot` at `time`; either may be left to the random source.
    pub fn inject_failure(
        &mut self,
        robot: Option<RobotId>,
        time: Option<f64>,
    ) -> Result<FailureEvent, ScenarioError> {
        if self.finished {
            return Err(ScenarioError::Finished);
        }
        if self.pending.is_some() {
            return Err(ScenarioError::FailurePending);
        }
        let horizon = self.config.horizon;
        if let Some(t) = time {
            if !(t > self.clock && t > 0.0 && t < horizon) {
                return Err(ScenarioError::InvalidTime {
                    time: t,
                    clock: self.clock,
                    horizon,
                });
            }
        }
        let active = self.active_robots();
        if active.is_empty() {
            return Err(ScenarioError::NoFailurePossible);
        }
        let no_failure = |e: ReliabilityError| match e {
            ReliabilityError::AllWeightsZero => ScenarioError::NoFailurePossible,
            other => other.into(),
        };
        let event = match (robot, time) {
            (Some(id), t) => {
                if !self.active.contains_key(&id) {
                    return Err(ScenarioError::NotActive(id));
                }
                FailureEvent {
                    robot_id: id,
                    time: t.unwrap_or_else(|| self.draw_time()),
                }
            }
            (None, Some(t)) => FailureEvent {
                robot_id: roulette_pick(&active, t, &mut self.rng).map_err(no_failure)?,
                time: t,
            },
            (None, None) => sample_failure_after(&active, self.clock, horizon, &mut self.rng)
                .map_err(no_failure)?,
        };

        let before = self.coverage()?;
        self.active.remove(&event.robot_id);
        self.failed.push(event.robot_id);
        let after = self.coverage()?;
        self.clock = event.time;
        self.log.push(
            event.time,
            Event::FailureInjected {
                robot_id: event.robot_id,
                coverage_before: before,
                coverage_after: after,
            },
        );
        let detected_at = (event.time + self.config.detection_delay).min(horizon);
        self.clock = detected_at;
        self.log.push(
            detected_at,
            Event::FailureDetected {
                robot_id: event.robot_id,
            },
        );
        self.pending = Some(PendingFailure { event, detected_at });
        Ok(event)
    }

    /// Computes the recovery for the pending failure without applying it.
    pub fn plan(&self, params: &CoordinationParams) -> Result<Recovery, ScenarioError> {
        let pending = self
            .pending
            .as_ref()
            .ok_or(ScenarioError::NoPendingFailure)?;
        let failed = pending.event.robot_id;
        let active = self.active_robots();
        let ctx = FailureContext {
            grid: &self.grid,
            roster: &self.roster,
            placement: &self.placement,
            failed,
            active: &active,
            pool: &self.pool,
            available: &self.available,
            alpha: self.config.alpha,
            failure_time: pending.event.time,
            horizon: self.config.horizon,
        };
        let (result, augment_error) = match reconfigure(&ctx, params) {
            Ok(r) => (r, None),
            Err(CoordinationError::InfeasibleAugment { reason, result }) => (*result, Some(reason)),
            Err(e) => return Err(e.into()),
        };
        let before = self.working_placement();
        let (motion, placement) = plan_motion(
            &before,
            &result.new_placement,
            &result.inside,
            &self.roster,
            &self.grid,
            self.config.clearance,
        )?;
        let all = CellSet::all(&self.grid);
        Ok(Recovery {
            failed,
            params: *params,
            coverage_before: coverage(&before, &self.roster, &self.grid, &all)?,
            coverage_after: coverage(&placement, &self.roster, &self.grid, &all)?,
            result,
            augment_error,
            motion,
            placement,
        })
    }

    /// Applies the recovery for the pending failure and logs it.
    pub fn commit(&mut self, params: &CoordinationParams) -> Result<Recovery, ScenarioError> {
        let recovery = self.plan(params)?;
        let pending = self
            .pending
            .take()
            .expect("plan checked the pending failure");
        let t = self.clock;
        self.log.push(
            t,
            Event::OperatorChoice {
                robot_id: recovery.failed,
                l: params.l,
                gamma: params.gamma,
            },
        );
        let requested = &recovery.result.requested_robots;
        if !requested.ids.is_empty() {
            self.log.push(
                t,
                Event::RobotsRequested {
                    selection: requested.clone(),
                },
            );
            for id in &requested.ids {
                if let Some(i) = self.pool.iter().position(|s| s.id == *id) {
                    self.available[i] = false;
                }
                self.active.insert(*id, pending.event.time);
            }
        }
        self.placement = recovery.placement.clone();
        self.failures_handled += 1;
        self.log.push(
            t,
            Event::Reconfigured {
                robot_id: recovery.failed,
                result: recovery.result.clone(),
                placement: recovery.placement.clone(),
                augment_error: recovery.augment_error.clone(),
            },
        );
        self.log.push(
            t,
            Event::AssignmentComputed {
                plan: recovery.motion.clone(),
            },
        );
        self.log.push(
            t,
            Event::CoverageSample {
                coverage: recovery.coverage_after,
            },
        );
        debug_assert_eq!(pending.detected_at, t);
        Ok(recovery)
    }

    /// Closes the mission with a final coverage sample at the horizon.
    pub fn finish(&mut self) -> Result<(), ScenarioError> {
        if self.pending.is_some() {
            return Err(ScenarioError::FailurePending);
        }
        if self.finished {
            return Ok(());
        }
        let value = self.coverage()?;
        self.clock = self.config.horizon;
        self.log
            .push(self.clock, Event::CoverageSample { coverage: value });
        self.finished = true;
        Ok(())
    }

    pub fn snapshot(&self) -> Result<MissionSnapshot, ScenarioError> {
        let robots = self
            .pool
            .iter()
            .map(|spec| {
                let status = if self.active.contains_key(&spec.id) {
                    RobotStatus::Active
                } else if self.failed.contains(&spec.id) {
                    RobotStatus::Failed
                } else {
                    RobotStatus::Available
                };
                let slot = self.placement.get(spec.id);
                RobotView {
                    spec: spec.clone(),
                    status,
                    cell: slot.map(|s| s.cell),
                    position: slot.map(|s| s.position),
                    activated_at: self.active.get(&spec.id).copied(),
                }
            })
            .collect();
        Ok(MissionSnapshot {
            clock: self.clock,
            horizon: self.config.horizon,
            nx: self.grid.nx(),
            ny: self.grid.ny(),
            cell_size: self.grid.cell_size(),
            origin: self.grid.origin(),
            robots,
            pending_failure: self.pending_failure(),
            failures_handled: self.failures_handled,
            coverage: self.coverage()?,
            heatmap: self.heatmap()?,
            finished: self.finished,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            seed: 4,
            domain: crate::world::Rect::square(20.0),
            pool_size: 30,
            ..Default::default()
        }
    }

    #[test]
    fn start_places_a_certified_team() {
        let m = Mission::start(small()).unwrap();
        assert!(!m.placement().is_empty());
        assert_eq!(m.active_robots().len(), m.placement().len());
        assert_eq!(
            m.available().iter().filter(|a| !**a).count(),
            m.placement().len()
        );
        assert_eq!(m.log().entries().len(), 3);
    }

    #[test]
    fn lifecycle_errors() {
        let mut m = Mission::start(small()).unwrap();
        assert!(matches!(
            m.plan(&m.config().default_params()),
            Err(ScenarioError::NoPendingFailure)
        ));
        let ev = m.inject_failure(None, None).unwrap();
        assert!(ev.time > 0.0 && ev.time < 500.0);
        assert!(matches!(
            m.inject_failure(None, None),
            Err(ScenarioError::FailurePending)
        ));
        assert!(matches!(m.finish(), Err(ScenarioError::FailurePending)));
        let params = m.config().coordination_params(10.0, 0.0);
        m.commit(&params).unwrap();
        assert!(!m.placement().contains(ev.robot_id));
        assert!(matches!(
            m.inject_failure(Some(ev.robot_id), None),
            Err(ScenarioError::NotActive(_))
        ));
        m.finish().unwrap();
        assert!(matches!(
            m.inject_failure(None, None),
            Err(ScenarioError::Finished)
        ));
    }

    #[test]
    fn preview_matches_commit() {
        let mut m = Mission::start(small()).unwrap();
        m.inject_failure(None, None).unwrap();
        let params = m.config().coordination_params(6.0, 1.0);
        let json = |r: &Recovery| serde_json::to_string(r).unwrap();
        let a = json(&m.plan(&params).unwrap());
        assert_eq!(a, json(&m.plan(&params).unwrap()));
        assert_eq!(a, json(&m.commit(&params).unwrap()));
    }

    #[test]
    fn explicit_failures() {
        let mut m = Mission::start(small()).unwrap();
        let id = m.placement().robots().next().unwrap();
        assert!(matches!(
            m.inject_failure(Some(id), Some(600.0)),
            Err(ScenarioError::InvalidTime { .. })
        ));
        let ev = m.inject_failure(Some(id), Some(12.5)).unwrap();
        assert_eq!(
            ev,
            FailureEvent {
                robot_id: id,
                time: 12.5
            }
        );
        assert_eq!(m.clock(), 12.5);
        assert!(m.snapshot().unwrap().coverage <= m.log().entries()[2].event.coverage().unwrap());
    }

    #[test]
    fn snapshot_heatmap_sums_to_coverage() {
        let mut m = Mission::start(small()).unwrap();
        m.inject_failure(None, None).unwrap();
        let s = m.snapshot().unwrap();
        let total: f64 = s
            .heatmap
            .iter()
            .zip(m.grid().weights())
            .map(|(h, w)| h * w)
            .sum();
        assert!((total - s.coverage).abs() < 1e-9);
        assert_eq!(
            s.robots
                .iter()
                .filter(|r| r.status == RobotStatus::Failed)
                .count(),
            1
        );
    }
}
