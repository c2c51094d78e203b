//! Probabilistic detection model and the discrete coverage functional.
//!
//! For a placement `X` and a cell set `C`, coverage is
//! `H(X, C) = Σ_{w∈C} φ_w (1 - Π_i (1 - P_i(w)))`, where `P_i(w)` is the
//! probability that robot `i` detects an event at the center of cell `w`.
//! [`CoverageCache`] keeps the per-cell miss products `Π_i (1 - P_i(w))`
//! so that a candidate's marginal gain only touches the cells in its disk.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reliability::{RobotId, RobotSpec, Roster};
use crate::world::{CellSet, Grid, Point, WorldError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverageError {
    #[error("cell {cell} is already occupied by robot {by}")]
    CellOccupied { cell: usize, by: RobotId },
    #[error("robot {0} is already placed")]
    AlreadyPlaced(RobotId),
    #[error("robot {0} has no spec")]
    UnknownRobot(RobotId),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Detection probability of an event at `point` by a robot at `robot_pos`.
pub fn detection_probability(spec: &RobotSpec, robot_pos: Point, point: Point) -> f64 {
    let d = robot_pos.distance(point);
    if d <= spec.sense_radius {
        (-spec.decay * d).exp()
    } else {
        0.0
    }
}

/// One placed robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub cell: usize,
    pub position: Point,
}

/// Robot-to-cell assignment; at most one robot per cell.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "Vec<PlacementEntry>", try_from = "Vec<PlacementEntry>")]
pub struct Placement {
    slots: BTreeMap<RobotId, Slot>,
    occupants: BTreeMap<usize, RobotId>,
}

/// Wire form of a placement entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementEntry {
    pub robot_id: RobotId,
    pub cell: usize,
    pub x: f64,
    pub y: f64,
}

impl From<Placement> for Vec<PlacementEntry> {
    fn from(p: Placement) -> Self {
        p.entries().collect()
    }
}

impl TryFrom<Vec<PlacementEntry>> for Placement {
    type Error = CoverageError;

    fn try_from(entries: Vec<PlacementEntry>) -> Result<Self, Self::Error> {
        let mut p = Placement::new();
        for e in entries {
            p.insert_slot(
                e.robot_id,
                Slot {
                    cell: e.cell,
                    position: Point::new(e.x, e.y),
                },
            )?;
        }
        Ok(p)
    }
}

impl Placement {
    pub fn new() -> Self {
        Self::default()
    }

    /// Puts `robot` on the center of `cell`.
    pub fn place(&mut self, grid: &Grid, robot: RobotId, cell: usize) -> Result<(), CoverageError> {
        grid.check_cell(cell)?;
        self.insert_slot(
            robot,
            Slot {
                cell,
                position: grid.center(cell),
            },
        )
    }

    fn insert_slot(&mut self, robot: RobotId, slot: Slot) -> Result<(), CoverageError> {
        if self.slots.contains_key(&robot) {
            return Err(CoverageError::AlreadyPlaced(robot));
        }
        if let Some(&by) = self.occupants.get(&slot.cell) {
            return Err(CoverageError::CellOccupied {
                cell: slot.cell,
                by,
            });
        }
        self.occupants.insert(slot.cell, robot);
        self.slots.insert(robot, slot);
        Ok(())
    }

    pub fn remove(&mut self, robot: RobotId) -> Option<Slot> {
        let slot = self.slots.remove(&robot)?;
        self.occupants.remove(&slot.cell);
        Some(slot)
    }

    pub fn get(&self, robot: RobotId) -> Option<&Slot> {
        self.slots.get(&robot)
    }

    pub fn position(&self, robot: RobotId) -> Option<Point> {
        self.slots.get(&robot).map(|s| s.position)
    }

    pub fn occupant(&self, cell: usize) -> Option<RobotId> {
        self.occupants.get(&cell).copied()
    }

    pub fn contains(&self, robot: RobotId) -> bool {
        self.slots.contains_key(&robot)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn robots(&self) -> impl Iterator<Item = RobotId> + '_ {
        self.slots.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (RobotId, &Slot)> {
        self.slots.iter().map(|(id, s)| (*id, s))
    }

    pub fn entries(&self) -> impl Iterator<Item = PlacementEntry> + '_ {
        self.slots.iter().map(|(id, s)| PlacementEntry {
            robot_id: *id,
            cell: s.cell,
            x: s.position.x,
            y: s.position.y,
        })
    }

    /// Sub-placement of the robots accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(RobotId) -> bool) -> Placement {
        let mut out = Placement::new();
        for (id, slot) in self.iter() {
            if keep(id) {
                out.slots.insert(id, *slot);
                out.occupants.insert(slot.cell, id);
            }
        }
        out
    }

    /// Union of two placements; fails on a shared robot or cell.
    pub fn merged(&self, other: &Placement) -> Result<Placement, CoverageError> {
        let mut out = self.clone();
        for (id, slot) in other.iter() {
            out.insert_slot(id, *slot)?;
        }
        Ok(out)
    }
}

fn spec_of(roster: &Roster, id: RobotId) -> Result<&RobotSpec, CoverageError> {
    roster.get(id).ok_or(CoverageError::UnknownRobot(id))
}

/// Detection probability of the whole placement at each cell center, evaluated from scratch.
pub fn detection_map(
    placement: &Placement,
    roster: &Roster,
    grid: &Grid,
) -> Result<Vec<f64>, CoverageError> {
    let specs = placement
        .iter()
        .map(|(id, s)| Ok((spec_of(roster, id)?, s.position)))
        .collect::<Result<Vec<_>, CoverageError>>()?;
    Ok((0..grid.len())
        .map(|w| {
            let p = grid.center(w);
            1.0 - specs
                .iter()
                .map(|(spec, pos)| 1.0 - detection_probability(spec, *pos, p))
                .product::<f64>()
        })
        .collect())
}

/// Coverage of `placement` over `cells`, using the un-renormalized grid weights.
pub fn coverage(
    placement: &Placement,
    roster: &Roster,
    grid: &Grid,
    cells: &CellSet,
) -> Result<f64, CoverageError> {
    let specs = placement
        .iter()
        .map(|(id, s)| Ok((spec_of(roster, id)?, s.position)))
        .collect::<Result<Vec<_>, CoverageError>>()?;
    Ok(cells
        .iter()
        .map(|w| {
            let p = grid.center(w);
            let miss: f64 = specs
                .iter()
                .map(|(spec, pos)| 1.0 - detection_probability(spec, *pos, p))
                .product();
            grid.weight(w) * (1.0 - miss)
        })
        .sum())
}

/// Per-cell miss products for an evolving placement.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCache {
    miss: Vec<f64>,
    placement: Placement,
}

impl CoverageCache {
    pub fn new(grid: &Grid) -> Self {
        Self {
            miss: vec![1.0; grid.len()],
            placement: Placement::new(),
        }
    }

    /// Cache reflecting `placement`.
    pub fn seeded(
        grid: &Grid,
        placement: &Placement,
        roster: &Roster,
    ) -> Result<Self, CoverageError> {
        let mut cache = Self::new(grid);
        for (id, slot) in placement.iter() {
            cache.apply(grid, spec_of(roster, id)?, slot.cell)?;
        }
        Ok(cache)
    }

    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    pub fn miss(&self) -> &[f64] {
        &self.miss
    }

    /// Cached coverage over `cells`.
    pub fn value(&self, grid: &Grid, cells: &CellSet) -> f64 {
        cells
            .iter()
            .map(|w| grid.weight(w) * (1.0 - self.miss[w]))
            .sum()
    }

    /// `H(X ∪ {candidate}) - H(X)` restricted to cells where `in_region` holds.
    pub fn gain_masked(
        &self,
        grid: &Grid,
        spec: &RobotSpec,
        cell: usize,
        in_region: &[bool],
    ) -> Result<f64, CoverageError> {
        grid.check_cell(cell)?;
        if let Some(by) = self.placement.occupant(cell) {
            return Err(CoverageError::CellOccupied { cell, by });
        }
        let mut gain = 0.0;
        for_each_in_disk(grid, spec, grid.center(cell), |w, p| {
            if in_region[w] {
                gain += grid.weight(w) * self.miss[w] * p;
            }
        });
        Ok(gain)
    }

    /// Marginal gain of putting `spec` on `cell`, measured over `cells`.
    pub fn marginal_gain(
        &self,
        grid: &Grid,
        spec: &RobotSpec,
        cell: usize,
        cells: &CellSet,
    ) -> Result<f64, CoverageError> {
        self.gain_masked(grid, spec, cell, &cells.mask(grid.len()))
    }

    /// Commits `spec` on `cell`; only cells inside its sensing disk change.
    pub fn apply(
        &mut self,
        grid: &Grid,
        spec: &RobotSpec,
        cell: usize,
    ) -> Result<(), CoverageError> {
        self.placement.place(grid, spec.id, cell)?;
        let miss = &mut self.miss;
        for_each_in_disk(grid, spec, grid.center(cell), |w, p| {
            miss[w] *= 1.0 - p;
        });
        Ok(())
    }
}

/// Visits every cell whose center lies in the sensing disk, in ascending index order,
/// with the detection probability at that center.
pub(crate) fn for_each_in_disk(
    grid: &Grid,
    spec: &RobotSpec,
    pos: Point,
    mut f: impl FnMut(usize, f64),
) {
    let (x0, x1) = grid.column_span(pos.x, spec.sense_radius);
    let (y0, y1) = grid.row_span(pos.y, spec.sense_radius);
    for iy in y0..y1 {
        for ix in x0..x1 {
            let w = grid.index(ix, iy);
            let p = detection_probability(spec, pos, grid.center(w));
            if p > 0.0 {
                f(w, p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{build_grid, Rect};
    use approx::assert_abs_diff_eq;

    fn robot(id: u32, radius: f64, decay: f64) -> RobotSpec {
        RobotSpec::new(RobotId(id), 1.0, radius, decay, 0.01, 0.0, 100.0)
    }

    #[test]
    fn detection_cases() {
        let o = Point::new(0.0, 0.0);
        assert_eq!(
            detection_probability(&robot(1, 5.0, 0.0), o, Point::new(3.0, 4.0)),
            1.0
        );
        assert_eq!(
            detection_probability(&robot(1, 5.0, 0.0), o, Point::new(3.0, 4.1)),
            0.0
        );
        assert_abs_diff_eq!(
            detection_probability(&robot(1, 20.0, 0.1), o, Point::new(10.0, 0.0)),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn empty_and_full_coverage() {
        let g = build_grid(Rect::square(4.0), 1.0).unwrap();
        let all = CellSet::all(&g);
        let roster: Roster = vec![robot(1, 10.0, 0.0)].into();
        assert_eq!(coverage(&Placement::new(), &roster, &g, &all).unwrap(), 0.0);
        let mut p = Placement::new();
        p.place(&g, RobotId(1), 5).unwrap();
        assert_abs_diff_eq!(
            coverage(&p, &roster, &g, &all).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn two_half_detectors_on_one_cell() {
        let g = build_grid(Rect::new(Point::new(0.0, 0.0), Point::new(3.0, 1.0)), 1.0).unwrap();
        // each robot sits one cell away and detects the middle cell with probability 0.5
        let decay = std::f64::consts::LN_2;
        let roster: Roster = vec![robot(1, 1.0, decay), robot(2, 1.0, decay)].into();
        let mut p = Placement::new();
        p.place(&g, RobotId(1), 0).unwrap();
        p.place(&g, RobotId(2), 2).unwrap();
        let middle = CellSet::from_indices(&g, vec![1]).unwrap();
        assert_abs_diff_eq!(
            coverage(&p, &roster, &g, &middle).unwrap(),
            0.75 * g.weight(1),
            epsilon = 1e-15
        );
    }

    #[test]
    fn gain_matches_from_scratch_difference() {
        let g = build_grid(Rect::square(10.0), 1.0).unwrap();
        let all = CellSet::all(&g);
        let specs: Vec<_> = (1..=5)
            .map(|i| robot(i, 1.5 + i as f64 * 0.7, 0.1 * i as f64))
            .collect();
        let roster: Roster = specs.clone().into();
        let cells = [3, 47, 48, 90, 12];
        let mut cache = CoverageCache::new(&g);
        for (spec, &cell) in specs.iter().zip(&cells) {
            let before = coverage(cache.placement(), &roster, &g, &all).unwrap();
            let gain = cache.marginal_gain(&g, spec, cell, &all).unwrap();
            cache.apply(&g, spec, cell).unwrap();
            let after = coverage(cache.placement(), &roster, &g, &all).unwrap();
            assert_abs_diff_eq!(after - before, gain, epsilon = 1e-12);
            assert_abs_diff_eq!(cache.value(&g, &all), after, epsilon = 1e-12);
        }
        let reseeded = CoverageCache::seeded(&g, cache.placement(), &roster).unwrap();
        for (a, b) in reseeded.miss().iter().zip(cache.miss()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn first_gain_is_solo_coverage_and_far_gain_is_zero() {
        let g = build_grid(Rect::square(10.0), 1.0).unwrap();
        let all = CellSet::all(&g);
        let spec = robot(1, 2.0, 0.3);
        let cache = CoverageCache::new(&g);
        let mut solo = Placement::new();
        solo.place(&g, spec.id, 44).unwrap();
        let roster: Roster = vec![spec.clone()].into();
        assert_abs_diff_eq!(
            cache.marginal_gain(&g, &spec, 44, &all).unwrap(),
            coverage(&solo, &roster, &g, &all).unwrap(),
            epsilon = 1e-15
        );
        let far = CellSet::from_indices(&g, vec![99]).unwrap();
        assert_eq!(cache.marginal_gain(&g, &spec, 0, &far).unwrap(), 0.0);
    }

    #[test]
    fn occupied_cells_are_rejected() {
        let g = build_grid(Rect::square(3.0), 1.0).unwrap();
        let mut cache = CoverageCache::new(&g);
        cache.apply(&g, &robot(1, 1.0, 0.0), 4).unwrap();
        assert_eq!(
            cache.marginal_gain(&g, &robot(2, 1.0, 0.0), 4, &CellSet::all(&g)),
            Err(CoverageError::CellOccupied {
                cell: 4,
                by: RobotId(1)
            })
        );
        assert!(matches!(
            cache.apply(&g, &robot(1, 1.0, 0.0), 5),
            Err(CoverageError::AlreadyPlaced(_))
        ));
    }

    #[test]
    fn zero_gain_apply_keeps_value() {
        let g = build_grid(Rect::square(10.0), 1.0).unwrap();
        let region = CellSet::from_indices(&g, vec![0, 1, 10, 11]).unwrap();
        let mut cache = CoverageCache::new(&g);
        cache.apply(&g, &robot(1, 1.0, 0.2), 0).unwrap();
        let v = cache.value(&g, &region);
        let far = robot(2, 1.0, 0.2);
        assert_eq!(cache.marginal_gain(&g, &far, 99, &region).unwrap(), 0.0);
        cache.apply(&g, &far, 99).unwrap();
        assert_eq!(cache.value(&g, &region), v);
    }

    #[test]
    fn placement_json_shape() {
        let g = build_grid(Rect::square(3.0), 1.0).unwrap();
        let mut p = Placement::new();
        p.place(&g, RobotId(7), 4).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(text, r#"[{"robot_id":7,"cell":4,"x":1.5,"y":1.5}]"#);
        let back: Placement = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        let dup =
            r#"[{"robot_id":1,"cell":4,"x":1.5,"y":1.5},{"robot_id":2,"cell":4,"x":1.5,"y":1.5}]"#;
        assert!(serde_json::from_str::<Placement>(dup).is_err());
    }
}
