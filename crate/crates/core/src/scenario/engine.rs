use crate::coordination::CoordinationParams;
use crate::reliability::FailureEvent;

use super::config::{OperatorMode, ScenarioConfig};
use super::log::RunLog;
use super::mission::{Mission, ScenarioError};

/// Supplies `(L, γ)` for each detected failure.
pub trait Operator {
    fn choose(&mut self, mission: &Mission, failure: &FailureEvent) -> CoordinationParams;
}

/// Always answers with the config defaults.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedOperator;

impl Operator for ScriptedOperator {
    fn choose(&mut self, mission: &Mission, _failure: &FailureEvent) -> CoordinationParams {
        mission.config().default_params()
    }
}

impl<F: FnMut(&Mission, &FailureEvent) -> CoordinationParams> Operator for F {
    fn choose(&mut self, mission: &Mission, failure: &FailureEvent) -> CoordinationParams {
        self(mission, failure)
    }
}

/// Runs a scripted mission end to end.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunLog, ScenarioError> {
    if config.operator_mode == OperatorMode::Interactive {
        return Err(ScenarioError::InteractiveNeedsOperator);
    }
    run_scenario_with(config, &mut ScriptedOperator)
}

/// Runs a mission, asking `operator` after every detected failure.
pub fn run_scenario_with(
    config: &ScenarioConfig,
    operator: &mut dyn Operator,
) -> Result<RunLog, ScenarioError> {
    let mut mission = Mission::start(config.clone())?;
    let plan: Vec<_> = match &config.failure_schedule {
        Some(s) => s.iter().map(|f| (f.robot_id, Some(f.time))).collect(),
        None => vec![(None, None); config.failure_count],
    };
    for (robot, time) in plan {
        let failure = match mission.inject_failure(robot, time) {
            Ok(f) => f,
            Err(ScenarioError::NoFailurePossible) => break,
            Err(e) => return Err(e),
        };
        let params = operator.choose(&mission, &failure);
        mission.commit(&params)?;
    }
    mission.finish()?;
    Ok(mission.into_log())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::log::{replay, Event};
    use crate::world::Rect;

    fn config() -> ScenarioConfig {
        ScenarioConfig {
            seed: 9,
            domain: Rect::square(20.0),
            pool_size: 30,
            failure_count: 2,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = run_scenario(&config()).unwrap().to_ndjson();
        let b = run_scenario(&config()).unwrap().to_ndjson();
        assert_eq!(a, b);
        let other = run_scenario(&ScenarioConfig {
            seed: 10,
            ..config()
        })
        .unwrap()
        .to_ndjson();
        assert_ne!(a, other);
    }

    #[test]
    fn event_order_and_times() {
        let log = run_scenario(&config()).unwrap();
        let names: Vec<&str> = log.entries().iter().map(|e| e.event.name()).collect();
        assert_eq!(&names[..3], &["PoolGenerated", "TeamSelected", "Placed"]);
        assert_eq!(names.iter().filter(|n| **n == "FailureInjected").count(), 2);
        assert_eq!(names.iter().filter(|n| **n == "Reconfigured").count(), 2);
        assert!(log.entries().windows(2).all(|w| w[0].time <= w[1].time));
        assert_eq!(*names.last().unwrap(), "CoverageSample");
        let state = replay(log.entries());
        assert_eq!(state.failed.len(), 2);
        assert!(state.pending_failure.is_none());
    }

    #[test]
    fn zero_hazard_means_no_failures() {
        let log = run_scenario(&ScenarioConfig {
            hazard_scale: 0.0,
            ..config()
        })
        .unwrap();
        assert!(log
            .entries()
            .iter()
            .all(|e| !matches!(e.event, Event::FailureInjected { .. })));
        let samples: Vec<f64> = log
            .entries()
            .iter()
            .filter_map(|e| e.event.coverage())
            .collect();
        assert!(samples.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn interactive_operator_is_consulted() {
        let cfg = ScenarioConfig {
            operator_mode: OperatorMode::Interactive,
            ..config()
        };
        assert!(matches!(
            run_scenario(&cfg),
            Err(ScenarioError::InteractiveNeedsOperator)
        ));
        let mut asked = 0;
        let mut op = |m: &Mission, _: &FailureEvent| {
            asked += 1;
            m.config().coordination_params(3.0, 0.0)
        };
        let log = run_scenario_with(&cfg, &mut op).unwrap();
        assert_eq!(asked, 2);
        let choices: Vec<f64> = log
            .entries()
            .iter()
            .filter_map(|e| match e.event {
                Event::OperatorChoice { l, .. } => Some(l),
                _ => None,
            })
            .collect();
        assert_eq!(choices, vec![3.0, 3.0]);
    }

    #[test]
    fn infeasible_team_is_reported() {
        let cfg = ScenarioConfig {
            beta: 1.0,
            ..config()
        };
        assert!(matches!(
            run_scenario(&cfg),
            Err(ScenarioError::SelectionInfeasible(_))
        ));
    }
}
