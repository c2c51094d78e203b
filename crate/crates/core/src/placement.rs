//! Greedy placement of a robot team onto grid cells.
//!
//! Every round commits the (robot, cell) pair with the largest marginal
//! coverage gain; ties go to the lower robot id, then the lower cell index.
//! With identical robots this is the classic greedy for a monotone
//! submodular objective under a cardinality constraint.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::{CoverageCache, CoverageError, Placement};
use crate::reliability::{RobotId, RobotSpec, Roster};
use crate::world::{CellSet, Grid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlacementError {
    #[error("{robots} robots but only {cells} free cells")]
    NotEnoughCells { robots: usize, cells: usize },
    #[error("robot {0} appears twice in the team or is already frozen")]
    DuplicateRobot(RobotId),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyStrategy {
    /// Re-evaluates every remaining pair each round.
    Naive,
    /// Priority queue of stale upper bounds, re-validated on pop.
    #[default]
    Lazy,
}

/// One placement instance: place `team` on `cells`, with `frozen` robots fixed.
#[derive(Debug, Clone, Copy)]
pub struct PlacementProblem<'a> {
    pub grid: &'a Grid,
    pub cells: &'a CellSet,
    pub team: &'a [RobotSpec],
    pub frozen: &'a Placement,
    /// Specs of the frozen robots.
    pub roster: &'a Roster,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome {
    /// Positions of the team only; frozen robots are not included.
    pub placement: Placement,
    /// Committed pairs in order.
    pub picks: Vec<(RobotId, usize)>,
    /// Realized marginal gain of each pick.
    pub gains: Vec<f64>,
    /// Number of marginal-gain evaluations performed.
    pub evaluations: usize,
}

impl GreedyOutcome {
    pub fn total_gain(&self) -> f64 {
        self.gains.iter().sum()
    }
}

struct Prepared {
    cache: CoverageCache,
    region: Vec<bool>,
    free: Vec<usize>,
}

fn prepare(problem: &PlacementProblem<'_>) -> Result<Prepared, PlacementError> {
    let grid = problem.grid;
    let cache = CoverageCache::seeded(grid, problem.frozen, problem.roster)?;
    let mut seen = std::collections::BTreeSet::new();
    for spec in problem.team {
        if !seen.insert(spec.id) || problem.frozen.contains(spec.id) {
            return Err(PlacementError::DuplicateRobot(spec.id));
        }
    }
    let free: Vec<usize> = problem
        .cells
        .iter()
        .filter(|&c| problem.frozen.occupant(c).is_none())
        .collect();
    if problem.team.len() > free.len() {
        return Err(PlacementError::NotEnoughCells {
            robots: problem.team.len(),
            cells: free.len(),
        });
    }
    Ok(Prepared {
        cache,
        region: problem.cells.mask(grid.len()),
        free,
    })
}

fn sorted_team(team: &[RobotSpec]) -> Vec<&RobotSpec> {
    let mut t: Vec<&RobotSpec> = team.iter().collect();
    t.sort_by_key(|s| s.id);
    t
}

/// Greedy placement; `strategy` only changes how the argmax is found.
pub fn place(
    problem: &PlacementProblem<'_>,
    strategy: GreedyStrategy,
) -> Result<GreedyOutcome, PlacementError> {
    match strategy {
        GreedyStrategy::Naive => greedy_place(problem),
        GreedyStrategy::Lazy => lazy_greedy_place(problem),
    }
}

/// Plain greedy: evaluates every (unplaced robot, free cell) pair each round.
pub fn greedy_place(problem: &PlacementProblem<'_>) -> Result<GreedyOutcome, PlacementError> {
    let Prepared {
        mut cache,
        region,
        free,
    } = prepare(problem)?;
    let grid = problem.grid;
    let mut remaining = sorted_team(problem.team);
    let mut used = vec![false; grid.len()];
    let mut out = GreedyOutcome {
        placement: Placement::new(),
        picks: Vec::new(),
        gains: Vec::new(),
        evaluations: 0,
    };

    while !remaining.is_empty() {
        let mut best: Option<(f64, usize, usize)> = None;
        for (ri, spec) in remaining.iter().enumerate() {
            for &cell in free.iter().filter(|&&c| !used[c]) {
                let g = cache.gain_masked(grid, spec, cell, &region)?;
                out.evaluations += 1;
                if best.is_none_or(|(bg, _, _)| g > bg) {
                    best = Some((g, ri, cell));
                }
            }
        }
        let (gain, ri, cell) = best.expect("free cells outnumber robots");
        let spec = remaining.remove(ri);
        cache.apply(grid, spec, cell)?;
        used[cell] = true;
        out.placement.place(grid, spec.id, cell)?;
        out.picks.push((spec.id, cell));
        out.gains.push(gain);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    robot: RobotId,
    slot: usize,
    cell: usize,
    round: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // max-heap: larger gain first, then lower robot id, then lower cell
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.robot.cmp(&self.robot))
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

/// Lazy greedy. Produces exactly the output of [`greedy_place`]: stale gains
/// are upper bounds by submodularity, and the heap order matches the tie-break.
pub fn lazy_greedy_place(problem: &PlacementProblem<'_>) -> Result<GreedyOutcome, PlacementError> {
    let Prepared {
        mut cache,
        region,
        free,
    } = prepare(problem)?;
    let grid = problem.grid;
    let team = sorted_team(problem.team);
    let mut placed = vec![false; team.len()];
    let mut used = vec![false; grid.len()];
    let mut out = GreedyOutcome {
        placement: Placement::new(),
        picks: Vec::new(),
        gains: Vec::new(),
        evaluations: 0,
    };

    let mut heap = BinaryHeap::with_capacity(team.len() * free.len());
    for (slot, spec) in team.iter().enumerate() {
        for &cell in &free {
            let gain = cache.gain_masked(grid, spec, cell, &region)?;
            out.evaluations += 1;
            heap.push(Candidate {
                gain,
                robot: spec.id,
                slot,
                cell,
                round: 0,
            });
        }
    }

    let mut round = 0;
    while out.picks.len() < team.len() {
        let top = heap
            .pop()
            .expect("heap holds a candidate for every free pair");
        if placed[top.slot] || used[top.cell] {
            continue;
        }
        if top.round != round {
            let gain = cache.gain_masked(grid, team[top.slot], top.cell, &region)?;
            out.evaluations += 1;
            heap.push(Candidate { gain, round, ..top });
            continue;
        }
        let spec = team[top.slot];
        cache.apply(grid, spec, top.cell)?;
        placed[top.slot] = true;
        used[top.cell] = true;
        out.placement.place(grid, spec.id, top.cell)?;
        out.picks.push((spec.id, top.cell));
        out.gains.push(top.gain);
        round += 1;
    }
    Ok(out)
}
