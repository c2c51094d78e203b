//! Robot descriptions, the quadratic-hazard reliability model and
//! roulette-wheel failure sampling.
//!
//! The hazard rate is `λ(τ) = λ0 + k τ²` with `τ` measured from the robot's
//! activation, so the survival probability over `[t0, t1]` is
//! `exp(-(λ0 (t1 - t0) + k (t1³ - t0³) / 3))`.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const TIME_RESAMPLES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReliabilityError {
    #[error("invalid interval [{t0}, {t1}]")]
    InvalidInterval { t0: f64, t1: f64 },
    #[error("no active robots to fail")]
    NoActiveRobots,
    #[error("horizon must be positive, got {0}")]
    InvalidHorizon(f64),
    #[error("every active robot has zero failure probability")]
    AllWeightsZero,
    #[error("invalid robot {id}: {reason}")]
    InvalidSpec { id: RobotId, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RobotId(pub u32);

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Static attributes of one robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub id: RobotId,
    pub cost: f64,
    pub sense_radius: f64,
    pub sense_area: f64,
    pub decay: f64,
    pub hazard_base: f64,
    pub hazard_quad: f64,
    pub lifespan: f64,
}

impl RobotSpec {
    pub fn new(
        id: RobotId,
        cost: f64,
        sense_radius: f64,
        decay: f64,
        hazard_base: f64,
        hazard_quad: f64,
        lifespan: f64,
    ) -> Self {
        Self {
            id,
            cost,
            sense_radius,
            sense_area: std::f64::consts::PI * sense_radius * sense_radius,
            decay,
            hazard_base,
            hazard_quad,
            lifespan,
        }
    }

    /// Builds a spec from a sensing area instead of a radius.
    pub fn with_area(
        id: RobotId,
        cost: f64,
        sense_area: f64,
        decay: f64,
        hazard_base: f64,
        hazard_quad: f64,
        lifespan: f64,
    ) -> Self {
        let radius = (sense_area / std::f64::consts::PI).sqrt();
        Self {
            sense_area,
            ..Self::new(id, cost, radius, decay, hazard_base, hazard_quad, lifespan)
        }
    }

    pub fn validate(&self) -> Result<(), ReliabilityError> {
        let fail = |reason: &str| {
            Err(ReliabilityError::InvalidSpec {
                id: self.id,
                reason: reason.into(),
            })
        };
        if !(self.cost > 0.0 && self.cost.is_finite()) {
            return fail("cost must be positive");
        }
        if !(self.sense_radius > 0.0 && self.sense_radius.is_finite()) {
            return fail("sensing radius must be positive");
        }
        let area = std::f64::consts::PI * self.sense_radius * self.sense_radius;
        if (area - self.sense_area).abs() > 1e-9 * area.max(1.0) {
            return fail("sensing area must equal pi * radius^2");
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return fail("decay must be non-negative");
        }
        if !(self.hazard_base >= 0.0 && self.hazard_quad >= 0.0)
            || !self.hazard_base.is_finite()
            || !self.hazard_quad.is_finite()
        {
            return fail("hazard parameters must be non-negative");
        }
        if !(self.lifespan > 0.0) {
            return fail("lifespan must be positive");
        }
        Ok(())
    }

    /// Integrated hazard over `[t0, t1]` (robot age).
    pub fn cumulative_hazard(&self, t0: f64, t1: f64) -> f64 {
        self.hazard_base * (t1 - t0) + self.hazard_quad * (t1.powi(3) - t0.powi(3)) / 3.0
    }

    /// True when both specs differ only in their id.
    pub fn interchangeable_with(&self, other: &RobotSpec) -> bool {
        self.cost == other.cost
            && self.sense_radius == other.sense_radius
            && self.sense_area == other.sense_area
            && self.decay == other.decay
            && self.hazard_base == other.hazard_base
            && self.hazard_quad == other.hazard_quad
            && self.lifespan == other.lifespan
    }
}

/// Lookup table from robot id to spec.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<RobotSpec>", into = "Vec<RobotSpec>")]
pub struct Roster(BTreeMap<RobotId, RobotSpec>);

impl Roster {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, spec: RobotSpec) -> Option<RobotSpec> {
        self.0.insert(spec.id, spec)
    }

    pub fn get(&self, id: RobotId) -> Option<&RobotSpec> {
        self.0.get(&id)
    }

    pub fn contains(&self, id: RobotId) -> bool {
        self.0.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn specs(&self) -> impl Iterator<Item = &RobotSpec> {
        self.0.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = RobotId> + '_ {
        self.0.keys().copied()
    }
}

impl From<Vec<RobotSpec>> for Roster {
    fn from(specs: Vec<RobotSpec>) -> Self {
        specs.into_iter().collect()
    }
}

impl From<Roster> for Vec<RobotSpec> {
    fn from(r: Roster) -> Self {
        r.0.into_values().collect()
    }
}

impl FromIterator<RobotSpec> for Roster {
    fn from_iter<I: IntoIterator<Item = RobotSpec>>(iter: I) -> Self {
        Roster(iter.into_iter().map(|s| (s.id, s)).collect())
    }
}

fn check_interval(t0: f64, t1: f64) -> Result<(), ReliabilityError> {
    if t0 >= 0.0 && t1 >= t0 && t1.is_finite() {
        Ok(())
    } else {
        Err(ReliabilityError::InvalidInterval { t0, t1 })
    }
}

/// Probability that the robot survives the age interval `[t0, t1]`.
pub fn reliability(spec: &RobotSpec, t0: f64, t1: f64) -> Result<f64, ReliabilityError> {
    check_interval(t0, t1)?;
    Ok((-spec.cumulative_hazard(t0, t1)).exp())
}

/// `1 - reliability`, computed without cancellation for small hazards.
pub fn failure_probability(spec: &RobotSpec, t0: f64, t1: f64) -> Result<f64, ReliabilityError> {
    check_interval(t0, t1)?;
    Ok(-(-spec.cumulative_hazard(t0, t1)).exp_m1())
}

/// Probability that every robot of `team` fails within `[t0, t1]`.
pub fn team_failure_probability<'a>(
    team: impl IntoIterator<Item = &'a RobotSpec>,
    t0: f64,
    t1: f64,
) -> Result<f64, ReliabilityError> {
    team.into_iter().try_fold(
        1.0,
        |acc, spec| Ok(acc * failure_probability(spec, t0, t1)?),
    )
}

/// Closed-form calibration: `λ0 = 0.1 / lifespan` and `k` such that the
/// survival probability to `lifespan` is exactly `e^-1`.
pub fn fit_hazard(lifespan: f64) -> (f64, f64) {
    let base = 0.1 / lifespan;
    let quad = 3.0 * (1.0 - base * lifespan) / lifespan.powi(3);
    (base, quad)
}

/// A deployed robot and the mission time at which its age clock started.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveRobot {
    pub spec: RobotSpec,
    pub activated_at: f64,
}

impl ActiveRobot {
    pub fn new(spec: RobotSpec, activated_at: f64) -> Self {
        Self { spec, activated_at }
    }

    /// Failure probability over the mission-time interval `[t0, t1]`, `t0 >= activated_at`.
    pub fn failure_probability(&self, t0: f64, t1: f64) -> Result<f64, ReliabilityError> {
        failure_probability(&self.spec, t0 - self.activated_at, t1 - self.activated_at)
    }

    pub fn reliability(&self, t0: f64, t1: f64) -> Result<f64, ReliabilityError> {
        reliability(&self.spec, t0 - self.activated_at, t1 - self.activated_at)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub robot_id: RobotId,
    pub time: f64,
}

/// Roulette-wheel draw: index `i` with probability `weights[i] / sum`.
/// Returns `None` when no weight is positive.
pub fn roulette_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut ball = rng.random::<f64>() * total;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if ball < w {
                return Some(i);
            }
            ball -= w;
            last = Some(i);
        }
    }
    last
}

/// Picks which active robot fails at `time`, weighted by each robot's
/// cumulative failure probability from activation to `time`.
pub fn roulette_pick<R: Rng + ?Sized>(
    active: &[ActiveRobot],
    time: f64,
    rng: &mut R,
) -> Result<RobotId, ReliabilityError> {
    if active.is_empty() {
        return Err(ReliabilityError::NoActiveRobots);
    }
    let weights = active
        .iter()
        .map(|a| a.failure_probability(a.activated_at, time.max(a.activated_at)))
        .collect::<Result<Vec<_>, _>>()?;
    roulette_index(&weights, rng)
        .map(|i| active[i].spec.id)
        .ok_or(ReliabilityError::AllWeightsZero)
}

/// Uniform failure time on `(0, horizon)` and a roulette-wheel victim.
pub fn sample_failure<R: Rng + ?Sized>(
    active: &[ActiveRobot],
    horizon: f64,
    rng: &mut R,
) -> Result<FailureEvent, ReliabilityError> {
    sample_failure_after(active, 0.0, horizon, rng)
}

/// As [`sample_failure`], with the time drawn on `(after, horizon)`.
pub fn sample_failure_after<R: Rng + ?Sized>(
    active: &[ActiveRobot],
    after: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<FailureEvent, ReliabilityError> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(ReliabilityError::InvalidHorizon(horizon));
    }
    if !(after >= 0.0 && after < horizon) {
        return Err(ReliabilityError::InvalidInterval {
            t0: after,
            t1: horizon,
        });
    }
    if active.is_empty() {
        return Err(ReliabilityError::NoActiveRobots);
    }
    for _ in 0..TIME_RESAMPLES {
        let time = open_uniform(after, horizon, rng);
        match roulette_pick(active, time, rng) {
            Ok(robot_id) => return Ok(FailureEvent { robot_id, time }),
            Err(ReliabilityError::AllWeightsZero) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(ReliabilityError::AllWeightsZero)
}

fn open_uniform<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    loop {
        let t = lo + (hi - lo) * rng.random::<f64>();
        if t > lo && t < hi {
            return t;
        }
    }
}
