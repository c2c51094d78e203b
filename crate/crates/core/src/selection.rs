//! Minimum-cardinality robot selection as a 0-1 program.
//!
//! Both the initial team and the mid-mission augmentation minimize the number
//! of selected robots under knapsack-type constraints. The failure product
//! `Π (1 - R_i) <= α` is linearized through logarithms: `Σ ln(1 - R_i) <= ln α`.
//!
//! The solver deepens on the cardinality `k = 0, 1, 2, ...` and enumerates
//! `k`-subsets in lexicographic id order, so the first feasible subset found
//! is both minimum-cardinality and lexicographically smallest. Subtrees are
//! cut with per-constraint best-case completions from the remaining items.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Instant;
use crate::reliability::{failure_probability, ActiveRobot, ReliabilityError, RobotId, RobotSpec};

/// Constraint slack tolerated when checking feasibility.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("no subset of the available robots satisfies the constraints")]
    Infeasible,
    #[error("solver budget exhausted without a feasible incumbent")]
    Timeout,
    #[error("degenerate reliability for robot {0}")]
    DegenerateReliability(RobotId),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error(transparent)]
    Reliability(#[from] ReliabilityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub name: String,
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn holds(&self, lhs: f64) -> bool {
        match self.sense {
            Sense::Le => lhs <= self.rhs + FEASIBILITY_TOLERANCE,
            Sense::Ge => lhs >= self.rhs - FEASIBILITY_TOLERANCE,
        }
    }

    pub fn lhs(&self, chosen: &[usize]) -> f64 {
        chosen.iter().map(|&i| self.coeffs[i]).sum()
    }
}

/// Minimize the number of selected variables subject to `constraints`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlpProblem {
    /// Robot behind each binary variable.
    pub robots: Vec<RobotId>,
    pub constraints: Vec<LinearConstraint>,
    /// Availability mask; unavailable variables are forced to zero.
    pub available: Vec<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl IlpProblem {
    pub fn n_vars(&self) -> usize {
        self.robots.len()
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        let n = self.n_vars();
        if self.available.len() != n {
            return Err(SelectionError::Malformed(format!(
                "mask has {} entries for {n} variables",
                self.available.len()
            )));
        }
        for c in &self.constraints {
            if c.coeffs.len() != n {
                return Err(SelectionError::Malformed(format!(
                    "constraint {} has {} coefficients for {n} variables",
                    c.name,
                    c.coeffs.len()
                )));
            }
            if c.coeffs.iter().any(|v| v.is_nan() || *v == f64::INFINITY) || c.rhs.is_nan() {
                return Err(SelectionError::Malformed(format!(
                    "constraint {} has invalid values",
                    c.name
                )));
            }
        }
        let mut ids = self.robots.clone();
        ids.sort();
        ids.dedup();
        if ids.len() != n {
            return Err(SelectionError::Malformed("duplicate robot ids".into()));
        }
        Ok(())
    }

    /// Whether the variable subset `chosen` (indices) satisfies every constraint and the mask.
    pub fn is_feasible(&self, chosen: &[usize]) -> bool {
        chosen.iter().all(|&i| self.available[i])
            && self.constraints.iter().all(|c| c.holds(c.lhs(chosen)))
    }

    pub fn index_of(&self, id: RobotId) -> Option<usize> {
        self.robots.iter().position(|r| *r == id)
    }
}

/// Solver output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Selected robots, ascending.
    pub ids: Vec<RobotId>,
    /// True when minimality was proven; false for a timeout incumbent.
    pub certified: bool,
}

impl Selection {
    pub fn cardinality(&self) -> usize {
        self.ids.len()
    }

    pub fn empty() -> Self {
        Self {
            ids: Vec::new(),
            certified: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub time_budget: Duration,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            time_budget: Duration::from_secs(5),
        }
    }
}

/// Parameters of the initial team selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialSelectionParams {
    pub budget: f64,
    pub alpha: f64,
    pub redundancy: f64,
    pub domain_area: f64,
    pub horizon: f64,
}

/// `ln(1 - R)`; `-inf` for a robot that cannot fail, which satisfies the
/// log-sum constraint exactly as the product form would.
fn log_failure(spec: &RobotSpec, t0: f64, t1: f64) -> Result<f64, SelectionError> {
    let p = failure_probability(spec, t0, t1)?;
    if p.is_nan() || p > 1.0 {
        return Err(SelectionError::DegenerateReliability(spec.id));
    }
    Ok(p.ln())
}

/// Budget, reliability and area-redundancy constraints over the whole pool.
pub fn build_initial_ilp(
    pool: &[RobotSpec],
    params: &InitialSelectionParams,
) -> Result<IlpProblem, SelectionError> {
    let InitialSelectionParams {
        budget,
        alpha,
        redundancy,
        domain_area,
        horizon,
    } = *params;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SelectionError::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if !(budget > 0.0) {
        return Err(SelectionError::InvalidParameter(format!(
            "budget must be positive, got {budget}"
        )));
    }
    if !(horizon > 0.0) || !(domain_area > 0.0) || !(redundancy > 0.0) {
        return Err(SelectionError::InvalidParameter(
            "horizon, area and redundancy must be positive".into(),
        ));
    }
    let log_fail = pool
        .iter()
        .map(|s| log_failure(s, 0.0, horizon))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IlpProblem {
        robots: pool.iter().map(|s| s.id).collect(),
        constraints: vec![
            LinearConstraint {
                name: "budget".into(),
                coeffs: pool.iter().map(|s| s.cost).collect(),
                sense: Sense::Le,
                rhs: budget,
            },
            LinearConstraint {
                name: "reliability".into(),
                coeffs: log_fail,
                sense: Sense::Le,
                rhs: alpha.ln(),
            },
            LinearConstraint {
                name: "area".into(),
                coeffs: pool.iter().map(|s| s.sense_area).collect(),
                sense: Sense::Ge,
                rhs: redundancy * domain_area,
            },
        ],
        available: vec![true; pool.len()],
        notes: Vec::new(),
    })
}

/// Largest failure probability the new robots may have so that the combined
/// team still meets `alpha`: `alpha / Π_{j active} (1 - R_j(T_f, T))`.
/// Returns `+inf` when some active robot cannot fail before the horizon.
pub fn alpha_of_failure_time(
    active: &[ActiveRobot],
    alpha: f64,
    failure_time: f64,
    horizon: f64,
) -> Result<f64, SelectionError> {
    if !(failure_time > 0.0 && failure_time < horizon) {
        return Err(SelectionError::InvalidParameter(format!(
            "failure time {failure_time} outside (0, {horizon})"
        )));
    }
    let mut product = 1.0;
    for a in active {
        product *= a.failure_probability(failure_time, horizon)?;
    }
    if product == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(alpha / product)
}

/// Augmentation problem: reliability over the remaining horizon, sensing area
/// at least the failed robot's, and only robots still in the pool.
pub fn build_intermediate_ilp(
    pool: &[RobotSpec],
    available: &[bool],
    alpha_tf: f64,
    failed_area: f64,
    remaining_horizon: f64,
) -> Result<IlpProblem, SelectionError> {
    if !(failed_area > 0.0) {
        return Err(SelectionError::InvalidParameter(format!(
            "failed area must be positive, got {failed_area}"
        )));
    }
    if available.len() != pool.len() {
        return Err(SelectionError::Malformed(
            "availability mask length differs from pool".into(),
        ));
    }
    let mut constraints = Vec::new();
    let mut notes = Vec::new();
    if alpha_tf >= 1.0 {
        notes.push(format!(
            "reliability constraint vacuous (alpha(T_f) = {alpha_tf})"
        ));
    } else if !(alpha_tf > 0.0) {
        return Err(SelectionError::InvalidParameter(format!(
            "alpha(T_f) must be positive, got {alpha_tf}"
        )));
    } else {
        let coeffs = pool
            .iter()
            .map(|s| log_failure(s, 0.0, remaining_horizon))
            .collect::<Result<Vec<_>, _>>()?;
        constraints.push(LinearConstraint {
            name: "reliability".into(),
            coeffs,
            sense: Sense::Le,
            rhs: alpha_tf.ln(),
        });
    }
    constraints.push(LinearConstraint {
        name: "area".into(),
        coeffs: pool.iter().map(|s| s.sense_area).collect(),
        sense: Sense::Ge,
        rhs: failed_area,
    });
    Ok(IlpProblem {
        robots: pool.iter().map(|s| s.id).collect(),
        constraints,
        available: available.to_vec(),
        notes,
    })
}

struct Search<'a> {
    problem: &'a IlpProblem,
    /// Available variable indices in ascending robot-id order.
    order: Vec<usize>,
    /// `best[c][p][r]`: most favourable sum of `r` coefficients of constraint `c`
    /// among `order[p..]`.
    best: Vec<Vec<Vec<f64>>>,
    deadline: Instant,
    nodes: u64,
    timed_out: bool,
}

impl<'a> Search<'a> {
    fn new(problem: &'a IlpProblem, deadline: Instant) -> Self {
        let mut order: Vec<usize> = (0..problem.n_vars())
            .filter(|&i| problem.available[i])
            .collect();
        order.sort_by_key(|&i| problem.robots[i]);
        let m = order.len();
        let best = problem
            .constraints
            .iter()
            .map(|c| {
                (0..=m)
                    .map(|p| {
                        let mut vals: Vec<f64> = order[p..].iter().map(|&i| c.coeffs[i]).collect();
                        match c.sense {
                            Sense::Le => vals.sort_by(|a, b| a.total_cmp(b)),
                            Sense::Ge => vals.sort_by(|a, b| b.total_cmp(a)),
                        }
                        let mut prefix = Vec::with_capacity(vals.len() + 1);
                        prefix.push(0.0);
                        let mut acc = 0.0;
                        for v in vals {
                            acc += v;
                            prefix.push(acc);
                        }
                        prefix
                    })
                    .collect()
            })
            .collect();
        Self {
            problem,
            order,
            best,
            deadline,
            nodes: 0,
            timed_out: false,
        }
    }

    fn promising(&self, pos: usize, need: usize, sums: &[f64]) -> bool {
        if self.order.len() - pos < need {
            return false;
        }
        self.problem
            .constraints
            .iter()
            .enumerate()
            .all(|(c, con)| con.holds(sums[c] + self.best[c][pos][need]))
    }

    fn dfs(
        &mut self,
        pos: usize,
        need: usize,
        sums: &mut Vec<f64>,
        chosen: &mut Vec<usize>,
    ) -> bool {
        self.nodes += 1;
        if self.nodes.is_multiple_of(4096) && Instant::now() >= self.deadline {
            self.timed_out = true;
        }
        if self.timed_out || !self.promising(pos, need, sums) {
            return false;
        }
        if need == 0 {
            return true;
        }
        for p in pos..self.order.len() {
            if self.order.len() - p < need {
                break;
            }
            let var = self.order[p];
            for (c, con) in self.problem.constraints.iter().enumerate() {
                sums[c] += con.coeffs[var];
            }
            chosen.push(var);
            if self.dfs(p + 1, need - 1, sums, chosen) {
                return true;
            }
            chosen.pop();
            for (c, con) in self.problem.constraints.iter().enumerate() {
                sums[c] -= con.coeffs[var];
            }
            if self.timed_out {
                return false;
            }
        }
        false
    }
}

fn to_selection(problem: &IlpProblem, chosen: &[usize], certified: bool) -> Selection {
    let mut ids: Vec<RobotId> = chosen.iter().map(|&i| problem.robots[i]).collect();
    ids.sort();
    Selection { ids, certified }
}

/// Adds available variables by decreasing coefficient of the first `>=`
/// constraint until feasible. Used only as a timeout fallback.
fn heuristic_incumbent(problem: &IlpProblem) -> Option<Vec<usize>> {
    let mut order: Vec<usize> = (0..problem.n_vars())
        .filter(|&i| problem.available[i])
        .collect();
    if let Some(ge) = problem.constraints.iter().find(|c| c.sense == Sense::Ge) {
        order.sort_by(|&a, &b| {
            ge.coeffs[b]
                .total_cmp(&ge.coeffs[a])
                .then(problem.robots[a].cmp(&problem.robots[b]))
        });
    }
    let mut chosen = Vec::new();
    if problem.is_feasible(&chosen) {
        return Some(chosen);
    }
    for i in order {
        chosen.push(i);
        if problem.is_feasible(&chosen) {
            return Some(chosen);
        }
    }
    None
}

/// Exact minimum-cardinality solve with lexicographic tie-breaking.
pub fn solve_min_cardinality(
    problem: &IlpProblem,
    options: &SolverOptions,
) -> Result<Selection, SelectionError> {
    problem.validate()?;
    let deadline = Instant::now() + options.time_budget;
    let mut search = Search::new(problem, deadline);
    let m = search.order.len();
    for k in 0..=m {
        let mut sums = vec![0.0; problem.constraints.len()];
        let mut chosen = Vec::with_capacity(k);
        if search.dfs(0, k, &mut sums, &mut chosen) {
            debug_assert!(problem.is_feasible(&chosen));
            return Ok(to_selection(problem, &chosen, true));
        }
        if search.timed_out {
            return heuristic_incumbent(problem)
                .map(|c| to_selection(problem, &c, false))
                .ok_or(SelectionError::Timeout);
        }
    }
    Err(SelectionError::Infeasible)
}
