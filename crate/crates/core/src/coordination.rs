//! Tunable recovery after a robot failure.
//!
//! Robots within ∞-norm distance `L` of the failed robot are re-placed over
//! the square neighborhood of half-width `L`; everything else stays frozen.
//! When the recovered share of the pre-failure neighborhood coverage falls
//! short of `γ`, extra robots are requested from the pool and placed as well.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Instant;
use crate::coverage::{coverage, CoverageError, Placement};
use crate::placement::{place, GreedyStrategy, PlacementError, PlacementProblem};
use crate::reliability::{ActiveRobot, RobotId, RobotSpec, Roster};
use crate::selection::{
    alpha_of_failure_time, build_intermediate_ilp, solve_min_cardinality, Selection,
    SelectionError, SolverOptions,
};
use crate::world::{neighborhood_cells, CellSet, Grid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoordinationError {
    #[error("robot {0} is not in the placement")]
    UnknownRobot(RobotId),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("augmentation failed ({reason}); best local placement kept")]
    InfeasibleAugment {
        reason: String,
        result: Box<CoordinationResult>,
    },
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinationParams {
    /// Half-width of the square neighborhood.
    #[serde(rename = "L")]
    pub l: f64,
    pub gamma: f64,
    #[serde(default)]
    pub strategy: GreedyStrategy,
    /// Repeat the request step while unsatisfied and the pool allows it.
    #[serde(default)]
    pub iterate_until_satisfied: bool,
    #[serde(skip)]
    pub solver: SolverOptions,
}

impl CoordinationParams {
    pub fn new(l: f64, gamma: f64) -> Self {
        Self {
            l,
            gamma,
            strategy: GreedyStrategy::Lazy,
            iterate_until_satisfied: false,
            solver: SolverOptions::default(),
        }
    }

    fn validate(&self) -> Result<(), CoordinationError> {
        if !(self.l >= 0.0) || !self.l.is_finite() {
            return Err(CoordinationError::InvalidParameter(format!(
                "L must be finite and non-negative, got {}",
                self.l
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(CoordinationError::InvalidParameter(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Everything the recovery step reads. Nothing here is mutated.
#[derive(Debug, Clone, Copy)]
pub struct FailureContext<'a> {
    pub grid: &'a Grid,
    /// Specs of every placed robot and every pool candidate.
    pub roster: &'a Roster,
    /// Placement immediately before the failure, failed robot included.
    pub placement: &'a Placement,
    pub failed: RobotId,
    /// Surviving deployed robots with their activation times.
    pub active: &'a [ActiveRobot],
    pub pool: &'a [RobotSpec],
    /// Which pool entries may still be requested.
    pub available: &'a [bool],
    pub alpha: f64,
    pub failure_time: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseTimings {
    pub local_placement: Duration,
    pub selection: Duration,
    pub augment_placement: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinationResult {
    /// Full placement after recovery, failed robot removed.
    pub new_placement: Placement,
    pub inside: Vec<RobotId>,
    pub outside: Vec<RobotId>,
    /// Coverage of the neighborhood before the failure.
    pub baseline: f64,
    pub ratio_do_nothing: f64,
    pub ratio_achieved: f64,
    pub requested_robots: Selection,
    pub ratio_after_augment: Option<f64>,
    pub satisfied: bool,
    /// Marginal-gain evaluations spent by the placement steps.
    pub evaluations: usize,
    #[serde(skip)]
    pub timings: PhaseTimings,
}

impl CoordinationResult {
    pub fn final_ratio(&self) -> f64 {
        self.ratio_after_augment.unwrap_or(self.ratio_achieved)
    }
}

/// Splits the surviving robots by ∞-norm distance to the failed robot.
pub fn l_neighbors(
    placement: &Placement,
    failed: RobotId,
    l: f64,
) -> Result<(Vec<RobotId>, Vec<RobotId>), CoordinationError> {
    let origin = placement
        .position(failed)
        .ok_or(CoordinationError::UnknownRobot(failed))?;
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    for (id, slot) in placement.iter() {
        if id == failed {
            continue;
        }
        if slot.position.chebyshev(origin) <= l {
            inside.push(id);
        } else {
            outside.push(id);
        }
    }
    Ok((inside, outside))
}

/// `H(after) / H(before)` over `cells`; 1 when the denominator vanishes.
pub fn coverage_ratio(
    after: &Placement,
    before: &Placement,
    roster: &Roster,
    grid: &Grid,
    cells: &CellSet,
) -> Result<f64, CoverageError> {
    let num = coverage(after, roster, grid, cells)?;
    let den = coverage(before, roster, grid, cells)?;
    Ok(ratio(num, den))
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        1.0
    }
}

fn specs(roster: &Roster, ids: &[RobotId]) -> Result<Vec<RobotSpec>, CoordinationError> {
    ids.iter()
        .map(|&id| {
            roster
                .get(id)
                .cloned()
                .ok_or(CoverageError::UnknownRobot(id).into())
        })
        .collect()
}

struct Attempt {
    placement: Placement,
    value: f64,
    evaluations: usize,
}

/// Re-places `movers` over `cells` with `frozen` fixed, or keeps `fallback`
/// positions for them when those score at least as well.
fn best_of(
    ctx: &FailureContext<'_>,
    cells: &CellSet,
    frozen: &Placement,
    movers: &[RobotSpec],
    strategy: GreedyStrategy,
    fallback: Option<&Placement>,
) -> Result<Attempt, CoordinationError> {
    let problem = PlacementProblem {
        grid: ctx.grid,
        cells,
        team: movers,
        frozen,
        roster: ctx.roster,
    };
    let outcome = place(&problem, strategy)?;
    let greedy = frozen.merged(&outcome.placement)?;
    let greedy_value = coverage(&greedy, ctx.roster, ctx.grid, cells)?;
    if let Some(prev) = fallback {
        let prev_value = coverage(prev, ctx.roster, ctx.grid, cells)?;
        if prev_value > greedy_value {
            return Ok(Attempt {
                placement: prev.clone(),
                value: prev_value,
                evaluations: outcome.evaluations,
            });
        }
    }
    Ok(Attempt {
        placement: greedy,
        value: greedy_value,
        evaluations: outcome.evaluations,
    })
}

/// Runs one recovery. See the module docs for the procedure.
pub fn reconfigure(
    ctx: &FailureContext<'_>,
    params: &CoordinationParams,
) -> Result<CoordinationResult, CoordinationError> {
    params.validate()?;
    let grid = ctx.grid;
    let center = ctx
        .placement
        .position(ctx.failed)
        .ok_or(CoordinationError::UnknownRobot(ctx.failed))?;
    let failed_spec = ctx
        .roster
        .get(ctx.failed)
        .ok_or(CoverageError::UnknownRobot(ctx.failed))?
        .clone();
    let (inside, outside) = l_neighbors(ctx.placement, ctx.failed, params.l)?;
    let region = neighborhood_cells(grid, center, params.l);
    let baseline = coverage(ctx.placement, ctx.roster, grid, &region)?;

    let outside_set: std::collections::BTreeSet<RobotId> = outside.iter().copied().collect();
    let frozen = ctx.placement.filtered(|id| outside_set.contains(&id));
    let survivors = ctx.placement.filtered(|id| id != ctx.failed);
    let do_nothing = coverage(&survivors, ctx.roster, grid, &region)?;

    let mut timings = PhaseTimings::default();
    let started = Instant::now();
    let local = best_of(
        ctx,
        &region,
        &frozen,
        &specs(ctx.roster, &inside)?,
        params.strategy,
        Some(&survivors),
    )?;
    timings.local_placement = started.elapsed();

    let ratio_achieved = ratio(local.value, baseline);
    let mut result = CoordinationResult {
        new_placement: local.placement.clone(),
        inside: inside.clone(),
        outside,
        baseline,
        ratio_do_nothing: ratio(do_nothing, baseline),
        ratio_achieved,
        requested_robots: Selection::empty(),
        ratio_after_augment: None,
        satisfied: ratio_achieved >= params.gamma,
        evaluations: local.evaluations,
        timings,
    };
    if result.satisfied {
        return Ok(result);
    }

    let mut available = ctx.available.to_vec();
    let mut active = ctx.active.to_vec();
    let mut movers = inside;
    let mut current = local;
    loop {
        let started = Instant::now();
        let selection = alpha_of_failure_time(&active, ctx.alpha, ctx.failure_time, ctx.horizon)
            .and_then(|a| {
                build_intermediate_ilp(
                    ctx.pool,
                    &available,
                    a,
                    failed_spec.sense_area,
                    ctx.horizon - ctx.failure_time,
                )
            })
            .and_then(|ilp| solve_min_cardinality(&ilp, &params.solver));
        result.timings.selection += started.elapsed();
        let selection = match selection {
            Ok(s) => s,
            Err(e) => {
                return Err(CoordinationError::InfeasibleAugment {
                    reason: e.to_string(),
                    result: Box::new(result),
                });
            }
        };

        let new_specs = specs(ctx.roster, &selection.ids)?;
        let started = Instant::now();
        let augmented = augment(
            ctx,
            &region,
            &frozen,
            &movers,
            &new_specs,
            &current,
            params.strategy,
        );
        result.timings.augment_placement += started.elapsed();
        let augmented = match augmented {
            Ok(a) => a,
            Err(e) => {
                return Err(CoordinationError::InfeasibleAugment {
                    reason: e.to_string(),
                    result: Box::new(result),
                });
            }
        };

        for spec in &new_specs {
            if let Some(i) = ctx.pool.iter().position(|p| p.id == spec.id) {
                available[i] = false;
            }
            active.push(ActiveRobot::new(spec.clone(), ctx.failure_time));
        }
        movers.extend(selection.ids.iter().copied());
        result
            .requested_robots
            .ids
            .extend(selection.ids.iter().copied());
        result.requested_robots.ids.sort();
        result.requested_robots.certified &= selection.certified;
        result.evaluations += augmented.evaluations;
        result.new_placement = augmented.placement.clone();
        let r = ratio(augmented.value, baseline);
        result.ratio_after_augment = Some(r);
        result.satisfied = r >= params.gamma;
        current = augmented;
        if result.satisfied || !params.iterate_until_satisfied || selection.ids.is_empty() {
            return Ok(result);
        }
    }
}

/// Better of a full re-placement of `movers ∪ new` and keeping `current`
/// while greedily adding only the new robots.
fn augment(
    ctx: &FailureContext<'_>,
    region: &CellSet,
    frozen: &Placement,
    movers: &[RobotId],
    new: &[RobotSpec],
    current: &Attempt,
    strategy: GreedyStrategy,
) -> Result<Attempt, CoordinationError> {
    let mut team = specs(ctx.roster, movers)?;
    team.extend(new.iter().cloned());
    let full = best_of(ctx, region, frozen, &team, strategy, None)?;
    let kept = best_of(ctx, region, &current.placement, new, strategy, None)?;
    let evaluations = full.evaluations + kept.evaluations;
    let best = if kept.value > full.value { kept } else { full };
    Ok(Attempt {
        evaluations,
        ..best
    })
}
