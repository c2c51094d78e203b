use serde::{Deserialize, Serialize};

use crate::coordination::CoordinationParams;
use crate::placement::GreedyStrategy;
use crate::reliability::RobotId;
use crate::selection::SolverOptions;
use crate::world::{DensitySpec, Point, Rect};

use super::mission::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorMode {
    #[default]
    Scripted,
    Interactive,
}

/// A failure at a fixed time, optionally of a fixed robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledFailure {
    pub time: f64,
    #[serde(default)]
    pub robot_id: Option<RobotId>,
}

/// JSON-facing scenario description. Missing fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub pool_size: usize,
    pub lifespan_mean: f64,
    pub lifespan_std_fraction: f64,
    pub max_cost: f64,
    pub max_area: f64,
    /// Sensing decay shared by all generated robots.
    pub decay: f64,
    /// Multiplies both fitted hazard coefficients; 0 gives robots that never fail.
    pub hazard_scale: f64,
    pub domain: Rect,
    pub cell_size: f64,
    pub density: DensitySpec,
    pub horizon: f64,
    pub beta: f64,
    pub alpha: f64,
    pub delta: f64,
    /// Area the team must cover; the domain area when absent.
    pub area_q: Option<f64>,
    #[serde(rename = "L")]
    pub l: f64,
    pub gamma: f64,
    pub failure_count: usize,
    /// Explicit failures; replaces `failure_count` when present.
    pub failure_schedule: Option<Vec<ScheduledFailure>>,
    pub operator_mode: OperatorMode,
    pub detection_delay: f64,
    pub strategy: GreedyStrategy,
    pub iterate_until_satisfied: bool,
    pub solver_time_budget_s: f64,
    /// Minimum pairwise distance along repositioning trajectories.
    pub clearance: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            pool_size: 50,
            lifespan_mean: 420.0,
            lifespan_std_fraction: 0.1,
            max_cost: 50.0,
            max_area: 200.0,
            decay: 0.35,
            hazard_scale: 1.0,
            domain: Rect::new(Point::new(0.0, 0.0), Point::new(30.0, 30.0)),
            cell_size: 1.0,
            density: DensitySpec::Uniform,
            horizon: 500.0,
            beta: 500.0,
            alpha: 0.3,
            delta: 1.0,
            area_q: None,
            l: 10.0,
            gamma: 1.0,
            failure_count: 3,
            failure_schedule: None,
            operator_mode: OperatorMode::Scripted,
            detection_delay: 0.0,
            strategy: GreedyStrategy::Lazy,
            iterate_until_satisfied: false,
            solver_time_budget_s: 5.0,
            clearance: 0.5,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::InvalidConfig(msg));
        let positive = [
            ("lifespan_mean", self.lifespan_mean),
            ("max_cost", self.max_cost),
            ("max_area", self.max_area),
            ("cell_size", self.cell_size),
            ("horizon", self.horizon),
            ("beta", self.beta),
            ("delta", self.delta),
            ("solver_time_budget_s", self.solver_time_budget_s),
            ("clearance", self.clearance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let non_negative = [
            ("lifespan_std_fraction", self.lifespan_std_fraction),
            ("decay", self.decay),
            ("hazard_scale", self.hazard_scale),
            ("L", self.l),
            ("detection_delay", self.detection_delay),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.pool_size == 0 {
            return bad("pool_size must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if let Some(q) = self.area_q {
            if !(q > 0.0) {
                return bad(format!("area_q must be positive, got {q}"));
            }
        }
        if let Some(schedule) = &self.failure_schedule {
            let mut last = 0.0;
            for f in schedule {
                if !(f.time > last && f.time < self.horizon) {
                    return bad(format!(
                        "scheduled failure times must increase inside (0, {})",
                        self.horizon
                    ));
                }
                last = f.time;
            }
        }
        Ok(())
    }

    pub fn coordination_params(&self, l: f64, gamma: f64) -> CoordinationParams {
        CoordinationParams {
            l,
            gamma,
            strategy: self.strategy,
            iterate_until_satisfied: self.iterate_until_satisfied,
            solver: self.solver_options(),
        }
    }

    pub fn default_params(&self) -> CoordinationParams {
        self.coordination_params(self.l, self.gamma)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            time_budget: std::time::Duration::from_secs_f64(self.solver_time_budget_s),
        }
    }

    pub fn scheduled_failures(&self) -> usize {
        self.failure_schedule
            .as_ref()
            .map_or(self.failure_count, Vec::len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c: ScenarioConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, ScenarioConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn partial_override_and_unknown_fields() {
        let c: ScenarioConfig =
            serde_json::from_str(r#"{"seed": 7, "L": 15, "gamma": 0}"#).unwrap();
        assert_eq!((c.seed, c.l, c.gamma), (7, 15.0, 0.0));
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"sead": 7}"#).is_err());
    }

    #[test]
    fn invalid_values() {
        for patch in [
            r#"{"alpha": 1.0}"#,
            r#"{"gamma": 2}"#,
            r#"{"delta": 0}"#,
            r#"{"horizon": -1}"#,
            r#"{"pool_size": 0}"#,
        ] {
            let c: ScenarioConfig = serde_json::from_str(patch).unwrap();
            assert!(c.validate().is_err(), "{patch}");
        }
        let c: ScenarioConfig =
            serde_json::from_str(r#"{"failure_schedule": [{"time": 50}, {"time": 40}]}"#).unwrap();
        assert!(c.validate().is_err());
    }
}
