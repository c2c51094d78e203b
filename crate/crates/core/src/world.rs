//! Monitored domain, its grid discretization and the event-density map.
//!
//! Cells are indexed row-major: `index = iy * nx + ix`. Weights are stored as
//! per-cell probability mass, so integrals over the domain become plain sums.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const INTEGER_TOLERANCE: f64 = 1e-9;
const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("bounds must have positive area, got {width} x {height}")]
    EmptyBounds { width: f64, height: f64 },
    #[error("cell size must be positive and finite, got {0}")]
    InvalidCellSize(f64),
    #[error("side length {side} is not an integer multiple of cell size {cell_size}")]
    NonDivisibleBounds { side: f64, cell_size: f64 },
    #[error("density evaluates to zero on every cell")]
    ZeroMass,
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("cell index {index} out of range for {len} cells")]
    CellOutOfRange { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    /// Chebyshev (max-coordinate) distance.
    pub fn chebyshev(self, other: Point) -> f64 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }
}

/// Axis-aligned rectangle `[min.x, max.x] x [min.y, max.y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn square(side: f64) -> Self {
        Self::new(Point::new(0.0, 0.0), Point::new(side, side))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Discretized domain with per-cell event probability mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridDoc", into = "GridDoc")]
pub struct Grid {
    origin: Point,
    cell_size: f64,
    nx: usize,
    ny: usize,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridDoc {
    origin: [f64; 2],
    cell_size: f64,
    nx: usize,
    ny: usize,
    weights: Vec<f64>,
}

impl TryFrom<GridDoc> for Grid {
    type Error = WorldError;

    fn try_from(doc: GridDoc) -> Result<Self, Self::Error> {
        Grid::from_parts(
            Point::new(doc.origin[0], doc.origin[1]),
            doc.cell_size,
            doc.nx,
            doc.ny,
            doc.weights,
        )
    }
}

impl From<Grid> for GridDoc {
    fn from(grid: Grid) -> Self {
        GridDoc {
            origin: [grid.origin.x, grid.origin.y],
            cell_size: grid.cell_size,
            nx: grid.nx,
            ny: grid.ny,
            weights: grid.weights,
        }
    }
}

fn integer_ratio(side: f64, cell_size: f64) -> Result<usize, WorldError> {
    let q = side / cell_size;
    let r = q.round();
    if (q - r).abs() > INTEGER_TOLERANCE || r < 1.0 {
        return Err(WorldError::NonDivisibleBounds { side, cell_size });
    }
    Ok(r as usize)
}

/// Tiles `bounds` with square cells of side `cell_size`, uniform weights.
pub fn build_grid(bounds: Rect, cell_size: f64) -> Result<Grid, WorldError> {
    let (w, h) = (bounds.width(), bounds.height());
    if !(w > 0.0 && h > 0.0) || !w.is_finite() || !h.is_finite() {
        return Err(WorldError::EmptyBounds {
            width: w,
            height: h,
        });
    }
    if !(cell_size > 0.0) || !cell_size.is_finite() {
        return Err(WorldError::InvalidCellSize(cell_size));
    }
    let nx = integer_ratio(w, cell_size)?;
    let ny = integer_ratio(h, cell_size)?;
    let n = nx * ny;
    Ok(Grid {
        origin: bounds.min,
        cell_size,
        nx,
        ny,
        weights: vec![1.0 / n as f64; n],
    })
}

impl Grid {
    pub fn from_parts(
        origin: Point,
        cell_size: f64,
        nx: usize,
        ny: usize,
        weights: Vec<f64>,
    ) -> Result<Self, WorldError> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(WorldError::InvalidCellSize(cell_size));
        }
        if nx == 0 || ny == 0 {
            return Err(WorldError::InvalidGrid("empty grid".into()));
        }
        if weights.len() != nx * ny {
            return Err(WorldError::InvalidGrid(format!(
                "expected {} weights, got {}",
                nx * ny,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(WorldError::InvalidGrid(
                "weights must be finite and >= 0".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(WorldError::InvalidGrid(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            origin,
            cell_size,
            nx,
            ny,
            weights,
        })
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, cell: usize) -> f64 {
        self.weights[cell]
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(
            self.origin,
            Point::new(
                self.origin.x + self.nx as f64 * self.cell_size,
                self.origin.y + self.ny as f64 * self.cell_size,
            ),
        )
    }

    pub fn area(&self) -> f64 {
        self.bounds().area()
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    pub fn center_x(&self, ix: usize) -> f64 {
        self.origin.x + (ix as f64 + 0.5) * self.cell_size
    }

    pub fn center_y(&self, iy: usize) -> f64 {
        self.origin.y + (iy as f64 + 0.5) * self.cell_size
    }

    pub fn center(&self, cell: usize) -> Point {
        let (ix, iy) = self.coords(cell);
        Point::new(self.center_x(ix), self.center_y(iy))
    }

    pub fn check_cell(&self, cell: usize) -> Result<(), WorldError> {
        if cell < self.len() {
            Ok(())
        } else {
            Err(WorldError::CellOutOfRange {
                index: cell,
                len: self.len(),
            })
        }
    }

    /// Cell whose square contains `p`, clamped to the grid.
    pub fn cell_at(&self, p: Point) -> usize {
        let clamp = |v: f64, n: usize| -> usize {
            if v <= 0.0 {
                0
            } else {
                (v.floor() as usize).min(n - 1)
            }
        };
        let ix = clamp((p.x - self.origin.x) / self.cell_size, self.nx);
        let iy = clamp((p.y - self.origin.y) / self.cell_size, self.ny);
        self.index(ix, iy)
    }

    /// Column range whose centers may lie within `radius` of `x` (inclusive, clamped).
    /// Callers still apply an exact distance test.
    pub(crate) fn column_span(&self, x: f64, radius: f64) -> (usize, usize) {
        span(x - self.origin.x, radius, self.cell_size, self.nx)
    }

    pub(crate) fn row_span(&self, y: f64, radius: f64) -> (usize, usize) {
        span(y - self.origin.y, radius, self.cell_size, self.ny)
    }

    /// Reweights cells by `spec` evaluated at the cell centers, renormalized to sum 1.
    pub fn with_density(mut self, spec: &DensitySpec) -> Result<Self, WorldError> {
        spec.validate()?;
        let raw: Vec<f64> = (0..self.len())
            .map(|c| spec.evaluate(self.center(c)))
            .collect();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(WorldError::ZeroMass);
        }
        self.weights = raw.into_iter().map(|v| v / total).collect();
        Ok(self)
    }
}

fn span(offset: f64, radius: f64, cell_size: f64, n: usize) -> (usize, usize) {
    // centers at (i + 0.5) * cs; widen by one cell on each side
    let lo = ((offset - radius) / cell_size - 0.5).floor() - 1.0;
    let hi = ((offset + radius) / cell_size - 0.5).ceil() + 1.0;
    let lo = if lo <= 0.0 { 0 } else { (lo as usize).min(n) };
    let hi = if hi < 0.0 {
        0
    } else {
        (hi as usize).min(n - 1) + 1
    };
    (lo, hi.max(lo))
}

/// Applies `spec` to a grid; see [`Grid::with_density`].
pub fn set_density(grid: Grid, spec: &DensitySpec) -> Result<Grid, WorldError> {
    grid.with_density(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub center: Point,
    pub spread: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    #[default]
    Uniform,
    Mixture {
        bumps: Vec<GaussianBump>,
    },
}

impl DensitySpec {
    pub fn validate(&self) -> Result<(), WorldError> {
        match self {
            DensitySpec::Uniform => Ok(()),
            DensitySpec::Mixture { bumps } => {
                if bumps.is_empty() {
                    return Err(WorldError::InvalidDensity("mixture has no bumps".into()));
                }
                for b in bumps {
                    if !(b.mass > 0.0 && b.mass.is_finite()) {
                        return Err(WorldError::InvalidDensity(format!(
                            "bump mass must be positive, got {}",
                            b.mass
                        )));
                    }
                    if !(b.spread > 0.0 && b.spread.is_finite()) {
                        return Err(WorldError::InvalidDensity(format!(
                            "bump spread must be positive, got {}",
                            b.spread
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn evaluate(&self, p: Point) -> f64 {
        match self {
            DensitySpec::Uniform => 1.0,
            DensitySpec::Mixture { bumps } => bumps
                .iter()
                .map(|b| {
                    let d = p.distance(b.center);
                    let var = b.spread * b.spread;
                    b.mass * (-d * d / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var)
                })
                .sum(),
        }
    }
}

/// Sorted, duplicate-free set of cell indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct CellSet(Vec<usize>);

impl CellSet {
    pub fn all(grid: &Grid) -> Self {
        CellSet((0..grid.len()).collect())
    }

    pub fn empty() -> Self {
        CellSet(Vec::new())
    }

    /// Sorts and deduplicates; rejects indices outside the grid.
    pub fn from_indices(grid: &Grid, mut cells: Vec<usize>) -> Result<Self, WorldError> {
        cells.sort_unstable();
        cells.dedup();
        if let Some(&last) = cells.last() {
            grid.check_cell(last)?;
        }
        Ok(CellSet(cells))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.0.binary_search(&cell).is_ok()
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.0.iter().all(|c| other.contains(*c))
    }

    /// Total event mass over the set.
    pub fn mass(&self, grid: &Grid) -> f64 {
        self.iter().map(|c| grid.weight(c)).sum()
    }

    /// Dense membership mask over `len` cells.
    pub fn mask(&self, len: usize) -> Vec<bool> {
        let mut m = vec![false; len];
        for &c in &self.0 {
            m[c] = true;
        }
        m
    }
}

/// Cells whose centers lie in the square of half-width `half_width` around `center`.
pub fn neighborhood_cells(grid: &Grid, center: Point, half_width: f64) -> CellSet {
    let cols: Vec<usize> = (0..grid.nx())
        .filter(|&ix| (grid.center_x(ix) - center.x).abs() <= half_width)
        .collect();
    let rows = (0..grid.ny()).filter(|&iy| (grid.center_y(iy) - center.y).abs() <= half_width);
    let mut cells = Vec::new();
    for iy in rows {
        cells.extend(cols.iter().map(|&ix| grid.index(ix, iy)));
    }
    CellSet(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn thirty_by_thirty_has_900_cells() {
        let g = build_grid(Rect::square(30.0), 1.0).unwrap();
        assert_eq!(g.len(), 900);
        assert_abs_diff_eq!(g.area(), 900.0);
        assert_abs_diff_eq!(g.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn single_cell_grid() {
        let g = build_grid(Rect::square(1.0), 1.0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.weight(0), 1.0);
        assert_eq!(g.center(0), Point::new(0.5, 0.5));
    }

    #[test]
    fn three_by_two_uniform() {
        let g = build_grid(Rect::new(Point::new(0.0, 0.0), Point::new(3.0, 2.0)), 1.0).unwrap();
        assert_eq!((g.nx(), g.ny()), (3, 2));
        for &w in g.weights() {
            assert_abs_diff_eq!(w, 1.0 / 6.0, epsilon = 1e-15);
        }
        assert_eq!(g.center(4), Point::new(1.5, 1.5));
    }

    #[test]
    fn rejects_non_divisible_and_degenerate() {
        assert!(matches!(
            build_grid(Rect::square(2.5), 1.0),
            Err(WorldError::NonDivisibleBounds { .. })
        ));
        assert!(matches!(
            build_grid(Rect::square(0.0), 1.0),
            Err(WorldError::EmptyBounds { .. })
        ));
        assert!(matches!(
            build_grid(Rect::square(3.0), 0.0),
            Err(WorldError::InvalidCellSize(_))
        ));
        // 0.3 / 0.1 is not exactly 3 in binary, but within tolerance
        assert_eq!(build_grid(Rect::square(0.3), 0.1).unwrap().nx(), 3);
    }

    #[test]
    fn uniform_density_is_flat() {
        let g = build_grid(Rect::square(4.0), 1.0)
            .unwrap()
            .with_density(&DensitySpec::Uniform)
            .unwrap();
        assert!(g.weights().iter().all(|&w| (w - 1.0 / 16.0).abs() < 1e-15));
    }

    #[test]
    fn single_bump_peaks_at_its_cell() {
        let g = build_grid(Rect::square(10.0), 1.0).unwrap();
        let target = g.index(3, 6);
        let spec = DensitySpec::Mixture {
            bumps: vec![GaussianBump {
                center: g.center(target),
                spread: 1.5,
                mass: 1.0,
            }],
        };
        let g = g.with_density(&spec).unwrap();
        let argmax = (0..g.len())
            .max_by(|a, b| g.weight(*a).total_cmp(&g.weight(*b)))
            .unwrap();
        assert_eq!(argmax, target);
        assert_abs_diff_eq!(g.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn symmetric_bumps_give_symmetric_weights() {
        let g = build_grid(Rect::square(10.0), 1.0).unwrap();
        let spec = DensitySpec::Mixture {
            bumps: vec![
                GaussianBump {
                    center: Point::new(2.5, 5.0),
                    spread: 2.0,
                    mass: 1.0,
                },
                GaussianBump {
                    center: Point::new(7.5, 5.0),
                    spread: 2.0,
                    mass: 1.0,
                },
            ],
        };
        let g = g.with_density(&spec).unwrap();
        for iy in 0..g.ny() {
            for ix in 0..g.nx() {
                let mirrored = g.index(g.nx() - 1 - ix, iy);
                assert_abs_diff_eq!(
                    g.weight(g.index(ix, iy)),
                    g.weight(mirrored),
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn far_bump_underflows_to_zero_mass() {
        let g = build_grid(Rect::square(3.0), 1.0).unwrap();
        let spec = DensitySpec::Mixture {
            bumps: vec![GaussianBump {
                center: Point::new(1e6, 1e6),
                spread: 0.1,
                mass: 1.0,
            }],
        };
        assert_eq!(g.with_density(&spec), Err(WorldError::ZeroMass));
        let bad = DensitySpec::Mixture {
            bumps: vec![GaussianBump {
                center: Point::new(1.0, 1.0),
                spread: 1.0,
                mass: 0.0,
            }],
        };
        assert!(matches!(
            build_grid(Rect::square(3.0), 1.0)
                .unwrap()
                .with_density(&bad),
            Err(WorldError::InvalidDensity(_))
        ));
    }

    #[test]
    fn neighborhood_counts() {
        let g = build_grid(Rect::square(30.0), 1.0).unwrap();
        // oracle: enumerate every center
        let brute = (0..g.len())
            .filter(|&c| g.center(c).chebyshev(Point::new(15.0, 15.0)) <= 5.0)
            .count();
        assert_eq!(brute, 100);
        let n = neighborhood_cells(&g, Point::new(15.0, 15.0), 5.0);
        assert_eq!(n.len(), 100);
        assert!(n.iter().all(|c| {
            let p = g.center(c);
            (10.5..=19.5).contains(&p.x) && (10.5..=19.5).contains(&p.y)
        }));
    }

    #[test]
    fn neighborhood_boundaries() {
        let g = build_grid(Rect::square(30.0), 1.0).unwrap();
        let c = g.index(7, 3);
        assert_eq!(neighborhood_cells(&g, g.center(c), 0.0).as_slice(), &[c]);
        assert_eq!(
            neighborhood_cells(&g, Point::new(0.0, 0.0), 30.0 * 2f64.sqrt()).len(),
            900
        );
        assert_eq!(
            neighborhood_cells(&g, Point::new(15.0, 15.0), 15.0).len(),
            900
        );
    }

    #[test]
    fn grid_json_roundtrip_and_validation() {
        let g = build_grid(Rect::new(Point::new(-1.0, 2.0), Point::new(2.0, 4.0)), 0.5).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        assert!(text.contains("\"origin\":[-1.0,2.0]"));
        let back: Grid = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        let bad = r#"{"origin":[0,0],"cell_size":1,"nx":2,"ny":1,"weights":[0.7,0.7]}"#;
        assert!(serde_json::from_str::<Grid>(bad).is_err());
    }

    #[test]
    fn cellset_from_indices_sorts_and_checks() {
        let g = build_grid(Rect::square(3.0), 1.0).unwrap();
        let s = CellSet::from_indices(&g, vec![5, 1, 5, 0]).unwrap();
        assert_eq!(s.as_slice(), &[0, 1, 5]);
        assert!(CellSet::from_indices(&g, vec![9]).is_err());
    }

    #[test]
    fn spans_cover_disk() {
        let g = build_grid(Rect::square(30.0), 1.0).unwrap();
        let p = Point::new(3.5, 28.5);
        let (x0, x1) = g.column_span(p.x, 4.0);
        let (y0, y1) = g.row_span(p.y, 4.0);
        for c in 0..g.len() {
            if g.center(c).distance(p) <= 4.0 {
                let (ix, iy) = g.coords(c);
                assert!((x0..x1).contains(&ix) && (y0..y1).contains(&iy));
            }
        }
    }
}
