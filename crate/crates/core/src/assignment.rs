//! Start-to-goal assignment and straight-line clearance checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::{CoverageError, Placement};
use crate::reliability::{RobotId, Roster};
use crate::world::{Grid, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignmentError {
    #[error("{starts} starts but {goals} goals")]
    SizeMismatch { starts: usize, goals: usize },
    #[error("non-finite cost")]
    NonFinite,
    #[error(transparent)]
    Coverage(#[from] CoverageError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `permutation[i]` is the goal index for start `i`.
    pub permutation: Vec<usize>,
    pub total_cost: f64,
}

/// Minimum-cost perfect matching on a square cost matrix, O(n³).
/// Returns the row-to-column map.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based potentials formulation; column 0 is a sentinel
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut matched = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[matched[j] - 1] = j - 1;
    }
    row_to_col
}

fn sub_cost(cost: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|&r| cols.iter().map(|&c| cost[r][c]).collect())
        .collect()
}

fn matching_cost(cost: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

/// Minimum-cost matching; among optimal matchings the lexicographically
/// smallest permutation, up to a relative tolerance of `1e-9`.
pub fn min_cost_matching(cost: &[Vec<f64>]) -> Assignment {
    let n = cost.len();
    let mut perm = hungarian(cost);
    let optimum = matching_cost(cost, &perm);
    let tol = 1e-9 * optimum.abs().max(1.0);
    let mut fixed_cost = 0.0;
    for i in 0..n {
        let rows: Vec<usize> = (i + 1..n).collect();
        let taken: Vec<usize> = perm[..i].to_vec();
        let current = perm[i];
        for j in (0..current).filter(|j| !taken.contains(j)) {
            let cols: Vec<usize> = (0..n).filter(|c| *c != j && !taken.contains(c)).collect();
            let sub = sub_cost(cost, &rows, &cols);
            let rest = hungarian(&sub);
            let total = fixed_cost + cost[i][j] + matching_cost(&sub, &rest);
            if total <= optimum + tol {
                perm[i] = j;
                for (k, &c) in rest.iter().enumerate() {
                    perm[i + 1 + k] = cols[c];
                }
                break;
            }
        }
        fixed_cost += cost[i][perm[i]];
    }
    Assignment {
        total_cost: matching_cost(cost, &perm),
        permutation: perm,
    }
}

/// Assigns starts to goals minimizing the sum of Euclidean distances.
pub fn assign_goals(starts: &[Point], goals: &[Point]) -> Result<Assignment, AssignmentError> {
    if starts.len() != goals.len() {
        return Err(AssignmentError::SizeMismatch {
            starts: starts.len(),
            goals: goals.len(),
        });
    }
    let cost: Vec<Vec<f64>> = starts
        .iter()
        .map(|s| goals.iter().map(|g| s.distance(*g)).collect())
        .collect();
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(AssignmentError::NonFinite);
    }
    Ok(min_cost_matching(&cost))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearanceViolation {
    pub first: usize,
    pub second: usize,
    pub min_distance: f64,
    pub time: f64,
}

/// Closest approach of two points moving linearly over `t ∈ [0, 1]`.
/// Returns `(distance, t)`.
pub fn closest_approach(s1: Point, g1: Point, s2: Point, g2: Point) -> (f64, f64) {
    let (ax, ay) = (s1.x - s2.x, s1.y - s2.y);
    let (bx, by) = ((g1.x - s1.x) - (g2.x - s2.x), (g1.y - s1.y) - (g2.y - s2.y));
    let bb = bx * bx + by * by;
    let t = if bb > 0.0 {
        (-(ax * bx + ay * by) / bb).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((ax + t * bx).hypot(ay + t * by), t)
}

/// Every pair whose synchronized straight-line trajectories come closer than `clearance`.
pub fn check_clearance(
    starts: &[Point],
    goals: &[Point],
    assignment: &Assignment,
    clearance: f64,
) -> Vec<ClearanceViolation> {
    let n = starts.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (d, t) = closest_approach(
                starts[i],
                goals[assignment.permutation[i]],
                starts[j],
                goals[assignment.permutation[j]],
            );
            if d < clearance {
                out.push(ClearanceViolation {
                    first: i,
                    second: j,
                    min_distance: d,
                    time: t,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Move {
    pub robot_id: RobotId,
    pub from: Point,
    pub to: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotViolation {
    pub first: RobotId,
    pub second: RobotId,
    pub min_distance: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPlan {
    /// One entry per mover, in id order.
    pub moves: Vec<Move>,
    pub total_distance: f64,
    pub violations: Vec<RobotViolation>,
}

/// Reassigns goals among `movers` within each group of interchangeable
/// robots, then checks clearance over all movers. Movers must appear in both
/// placements; every other robot keeps its slot in `after`.
///
/// Returns the plan and `after` relabeled to match it. Coverage is unchanged
/// because swapped robots have identical specs.
pub fn plan_motion(
    before: &Placement,
    after: &Placement,
    movers: &[RobotId],
    roster: &Roster,
    grid: &Grid,
    clearance: f64,
) -> Result<(MotionPlan, Placement), AssignmentError> {
    for id in movers {
        if !before.contains(*id) || !after.contains(*id) {
            return Err(CoverageError::UnknownRobot(*id).into());
        }
    }
    let mut groups: Vec<Vec<RobotId>> = Vec::new();
    for id in movers {
        let spec = roster.get(*id).ok_or(CoverageError::UnknownRobot(*id))?;
        match groups.iter_mut().find(|g| {
            roster
                .get(g[0])
                .is_some_and(|s| s.interchangeable_with(spec))
        }) {
            Some(g) => g.push(*id),
            None => groups.push(vec![*id]),
        }
    }
    let mut relabeled = after.filtered(|id| !movers.contains(&id));
    let mut moves = Vec::new();
    for group in groups {
        let starts: Vec<Point> = group
            .iter()
            .map(|id| before.position(*id).expect("mover"))
            .collect();
        let slots: Vec<usize> = group
            .iter()
            .map(|id| after.get(*id).expect("mover").cell)
            .collect();
        let goals: Vec<Point> = slots.iter().map(|&c| grid.center(c)).collect();
        let a = assign_goals(&starts, &goals)?;
        for (k, id) in group.iter().enumerate() {
            let target = a.permutation[k];
            relabeled.place(grid, *id, slots[target])?;
            moves.push(Move {
                robot_id: *id,
                from: starts[k],
                to: goals[target],
            });
        }
    }
    moves.sort_by_key(|m| m.robot_id);
    let starts: Vec<Point> = moves.iter().map(|m| m.from).collect();
    let goals: Vec<Point> = moves.iter().map(|m| m.to).collect();
    let identity = Assignment {
        permutation: (0..moves.len()).collect(),
        total_cost: 0.0,
    };
    let violations = check_clearance(&starts, &goals, &identity, clearance)
        .into_iter()
        .map(|v| RobotViolation {
            first: moves[v.first].robot_id,
            second: moves[v.second].robot_id,
            min_distance: v.min_distance,
            time: v.time,
        })
        .collect();
    let total_distance = moves.iter().fold(0.0, |acc, m| acc + m.from.distance(m.to));
    Ok((
        MotionPlan {
            moves,
            total_distance,
            violations,
        },
        relabeled,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reliability::RobotSpec;
    use crate::world::{build_grid, Rect};

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn single_pair() {
        let a = assign_goals(&[p(0.0, 0.0)], &[p(3.0, 4.0)]).unwrap();
        assert_eq!(a.permutation, vec![0]);
        assert_eq!(a.total_cost, 5.0);
    }

    #[test]
    fn straight_beats_crossed() {
        let a = assign_goals(&[p(0.0, 0.0), p(1.0, 0.0)], &[p(0.0, 1.0), p(1.0, 1.0)]).unwrap();
        assert_eq!(a.permutation, vec![0, 1]);
        assert!((a.total_cost - 2.0).abs() < 1e-12);
        let a = assign_goals(&[p(0.0, 0.0), p(1.0, 0.0)], &[p(1.0, 1.0), p(0.0, 1.0)]).unwrap();
        assert_eq!(a.permutation, vec![1, 0]);
    }

    #[test]
    fn size_mismatch_and_empty() {
        assert!(matches!(
            assign_goals(&[p(0.0, 0.0)], &[]),
            Err(AssignmentError::SizeMismatch { .. })
        ));
        assert_eq!(
            assign_goals(&[], &[]).unwrap().permutation,
            Vec::<usize>::new()
        );
    }

    #[test]
    fn ties_prefer_smallest_permutation() {
        // every matching costs the same
        let cost = vec![vec![1.0; 3]; 3];
        assert_eq!(min_cost_matching(&cost).permutation, vec![0, 1, 2]);
        let cost = vec![
            vec![5.0, 1.0, 1.0],
            vec![1.0, 5.0, 1.0],
            vec![1.0, 1.0, 5.0],
        ];
        assert_eq!(min_cost_matching(&cost).permutation, vec![1, 2, 0]);
    }

    #[test]
    fn clearance_cases() {
        let starts = [p(0.0, 0.0), p(0.0, 1.0)];
        let goals = [p(5.0, 0.0), p(5.0, 1.0)];
        let id = Assignment {
            permutation: vec![0, 1],
            total_cost: 10.0,
        };
        assert!(check_clearance(&starts, &goals, &id, 0.5).is_empty());

        let starts = [p(0.0, 0.0), p(2.0, 0.0)];
        let goals = [p(2.0, 0.0), p(0.0, 0.0)];
        let v = check_clearance(&starts, &goals, &id, 0.5);
        assert_eq!(v.len(), 1);
        assert!(v[0].min_distance.abs() < 1e-12);
        assert!((v[0].time - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stationary_pair() {
        let (d, t) = closest_approach(p(0.0, 0.0), p(0.0, 0.0), p(3.0, 4.0), p(3.0, 4.0));
        assert_eq!((d, t), (5.0, 0.0));
    }

    #[test]
    fn motion_plan_swaps_interchangeable_robots() {
        let grid = build_grid(Rect::square(10.0), 1.0).unwrap();
        let roster: Roster = (1..=2)
            .map(|i| RobotSpec::new(RobotId(i), 1.0, 2.0, 0.35, 0.01, 0.0, 100.0))
            .collect();
        let mut before = Placement::new();
        before.place(&grid, RobotId(1), grid.index(0, 0)).unwrap();
        before.place(&grid, RobotId(2), grid.index(9, 0)).unwrap();
        // greedy put robot 1 far away and robot 2 near robot 1's start
        let mut after = Placement::new();
        after.place(&grid, RobotId(1), grid.index(9, 1)).unwrap();
        after.place(&grid, RobotId(2), grid.index(0, 1)).unwrap();
        let (plan, relabeled) = plan_motion(
            &before,
            &after,
            &[RobotId(1), RobotId(2)],
            &roster,
            &grid,
            0.5,
        )
        .unwrap();
        assert_eq!(relabeled.get(RobotId(1)).unwrap().cell, grid.index(0, 1));
        assert_eq!(relabeled.get(RobotId(2)).unwrap().cell, grid.index(9, 1));
        assert!((plan.total_distance - 2.0).abs() < 1e-12);
        assert!(plan.violations.is_empty());
    }

    #[test]
    fn motion_plan_keeps_heterogeneous_identity() {
        let grid = build_grid(Rect::square(10.0), 1.0).unwrap();
        let roster: Roster = vec![
            RobotSpec::new(RobotId(1), 1.0, 2.0, 0.35, 0.01, 0.0, 100.0),
            RobotSpec::new(RobotId(2), 2.0, 3.0, 0.35, 0.01, 0.0, 100.0),
        ]
        .into();
        let mut before = Placement::new();
        before.place(&grid, RobotId(1), grid.index(0, 0)).unwrap();
        before.place(&grid, RobotId(2), grid.index(9, 0)).unwrap();
        let mut after = Placement::new();
        after.place(&grid, RobotId(1), grid.index(9, 1)).unwrap();
        after.place(&grid, RobotId(2), grid.index(0, 1)).unwrap();
        let (plan, relabeled) = plan_motion(
            &before,
            &after,
            &[RobotId(1), RobotId(2)],
            &roster,
            &grid,
            0.5,
        )
        .unwrap();
        assert_eq!(relabeled, after);
        assert_eq!(plan.violations.len(), 1);
    }
}
