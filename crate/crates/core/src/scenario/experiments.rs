//! Batch studies over random single failures.
//!
//! Each study selects and places one team, then draws one failure per trial
//! from a trial-specific stream and evaluates every `L` on that same failure.

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coordination::{
    reconfigure, CoordinationError, CoordinationParams, CoordinationResult, FailureContext,
};
use crate::coverage::{coverage, CoverageCache};
use crate::placement::{lazy_greedy_place, GreedyStrategy, PlacementProblem};
use crate::reliability::{sample_failure, ActiveRobot, FailureEvent, RobotId, RobotSpec, Roster};
use crate::world::{neighborhood_cells, CellSet};

use super::config::ScenarioConfig;
use super::mission::{Mission, ScenarioError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    #[serde(rename = "L")]
    pub l: f64,
    pub trial: usize,
    pub metric: String,
    pub value: f64,
}

/// Long-format results with header `L,trial,metric,value`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentTable {
    pub fn values(&self, metric: &str, l: f64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric && r.l == l)
            .map(|r| r.value)
            .collect()
    }

    /// Trial mean of `metric` at `l`.
    pub fn mean(&self, metric: &str, l: f64) -> Option<f64> {
        let v = self.values(metric, l);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn metrics(&self) -> Vec<String> {
        let mut m: Vec<String> = self.rows.iter().map(|r| r.metric.clone()).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    fn push(&mut self, l: f64, trial: usize, metric: impl Into<String>, value: f64) {
        self.rows.push(ExperimentRow {
            l,
            trial,
            metric: metric.into(),
            value,
        });
    }
}

struct Setup {
    mission: Mission,
    active: Vec<ActiveRobot>,
}

impl Setup {
    fn new(config: &ScenarioConfig) -> Result<Self, ScenarioError> {
        let mission = Mission::start(config.clone())?;
        let active = mission.active_robots();
        Ok(Self { mission, active })
    }

    fn failure(&self, trial: usize) -> Result<FailureEvent, ScenarioError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.mission.config().seed);
        rng.set_stream(trial as u64 + 1);
        Ok(sample_failure(
            &self.active,
            self.mission.config().horizon,
            &mut rng,
        )?)
    }

    fn survivors(&self, failed: RobotId) -> Vec<ActiveRobot> {
        self.active
            .iter()
            .filter(|a| a.spec.id != failed)
            .cloned()
            .collect()
    }

    fn recover(
        &self,
        failure: &FailureEvent,
        params: &CoordinationParams,
    ) -> Result<(CoordinationResult, bool), ScenarioError> {
        let survivors = self.survivors(failure.robot_id);
        let m = &self.mission;
        let ctx = FailureContext {
            grid: m.grid(),
            roster: m.roster(),
            placement: m.placement(),
            failed: failure.robot_id,
            active: &survivors,
            pool: m.pool(),
            available: m.available(),
            alpha: m.config().alpha,
            failure_time: failure.time,
            horizon: m.config().horizon,
        };
        match reconfigure(&ctx, params) {
            Ok(r) => Ok((r, true)),
            Err(CoordinationError::InfeasibleAugment { result, .. }) => Ok((*result, false)),
            Err(e) => Err(e.into()),
        }
    }

    fn domain_coverage(&self, result: &CoordinationResult) -> Result<f64, ScenarioError> {
        let grid = self.mission.grid();
        Ok(coverage(
            &result.new_placement,
            self.mission.roster(),
            grid,
            &CellSet::all(grid),
        )?)
    }
}

fn for_trials<T: Send>(
    trials: usize,
    f: impl Fn(usize) -> Result<T, ScenarioError> + Sync + Send,
) -> Result<Vec<T>, ScenarioError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..trials).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..trials).map(f).collect()
    }
}

fn check_ls(ls: &[f64]) -> Result<(), ScenarioError> {
    if ls.is_empty() || ls.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(ScenarioError::InvalidConfig(
            "Ls must be a non-empty list of non-negative values".into(),
        ));
    }
    Ok(())
}

fn assemble(ls: &[f64], per_trial: Vec<Vec<(usize, String, f64)>>) -> ExperimentTable {
    // order rows by L, then trial, then insertion order
    let mut table = ExperimentTable::default();
    for (li, &l) in ls.iter().enumerate() {
        for (trial, rows) in per_trial.iter().enumerate() {
            for (_, metric, value) in rows.iter().filter(|(i, _, _)| *i == li) {
                table.push(l, trial, metric.clone(), *value);
            }
        }
    }
    table
}

/// Repetitions per timing; the minimum is reported.
const TIMING_REPEATS: usize = 3;

/// Post-reposition whole-domain coverage (`coverage`) and local placement
/// wall time (`wall_time_s`, plain greedy) per `L`.
pub fn experiment_coverage_vs_l(
    config: &ScenarioConfig,
    ls: &[f64],
    trials: usize,
) -> Result<ExperimentTable, ScenarioError> {
    check_ls(ls)?;
    let setup = Setup::new(config)?;
    let per_trial = for_trials(trials, |trial| {
        let failure = setup.failure(trial)?;
        let mut rows = Vec::new();
        for (li, &l) in ls.iter().enumerate() {
            let params = CoordinationParams {
                strategy: GreedyStrategy::Naive,
                ..config.coordination_params(l, 0.0)
            };
            let mut best = Duration::MAX;
            let mut last = None;
            for _ in 0..TIMING_REPEATS {
                let (r, _) = setup.recover(&failure, &params)?;
                best = best.min(r.timings.local_placement);
                last = Some(r);
            }
            let r = last.expect("at least one repeat");
            rows.push((li, "coverage".to_string(), setup.domain_coverage(&r)?));
            rows.push((li, "wall_time_s".to_string(), best.as_secs_f64()));
        }
        Ok(rows)
    })?;
    Ok(assemble(ls, per_trial))
}

/// Robots requested with `γ = 1` (`requested`), whether that request fell
/// short (`unsatisfied`), and the `γ = 0` control (`requested_gamma0`).
pub fn experiment_robots_vs_l(
    config: &ScenarioConfig,
    ls: &[f64],
    trials: usize,
) -> Result<ExperimentTable, ScenarioError> {
    check_ls(ls)?;
    let setup = Setup::new(config)?;
    let per_trial = for_trials(trials, |trial| {
        let failure = setup.failure(trial)?;
        let mut rows = Vec::new();
        for (li, &l) in ls.iter().enumerate() {
            let (full, _) = setup.recover(&failure, &config.coordination_params(l, 1.0))?;
            let (zero, _) = setup.recover(&failure, &config.coordination_params(l, 0.0))?;
            rows.push((
                li,
                "requested".to_string(),
                full.requested_robots.cardinality() as f64,
            ));
            rows.push((
                li,
                "unsatisfied".to_string(),
                if full.satisfied { 0.0 } else { 1.0 },
            ));
            rows.push((
                li,
                "requested_gamma0".to_string(),
                zero.requested_robots.cardinality() as f64,
            ));
        }
        Ok(rows)
    })?;
    Ok(assemble(ls, per_trial))
}

/// Pool robot with the median lifespan.
fn median_spec(pool: &[RobotSpec]) -> RobotSpec {
    let mut sorted: Vec<&RobotSpec> = pool.iter().collect();
    sorted.sort_by(|a, b| a.lifespan.total_cmp(&b.lifespan).then(a.id.cmp(&b.id)));
    sorted[sorted.len() / 2].clone()
}

/// Adds clones of the median pool robot inside the neighborhood after local
/// repositioning. Reports `base_coverage`, then `coverage_<n>` and
/// `pct_gain_<n>` for each count `n`.
pub fn experiment_added_robots(
    config: &ScenarioConfig,
    ls: &[f64],
    counts: &[usize],
    trials: usize,
) -> Result<ExperimentTable, ScenarioError> {
    check_ls(ls)?;
    let setup = Setup::new(config)?;
    let template = median_spec(setup.mission.pool());
    let first_id = setup
        .mission
        .pool()
        .iter()
        .map(|s| s.id.0)
        .max()
        .unwrap_or(0)
        + 1;
    let most = counts.iter().copied().max().unwrap_or(0);
    let clones: Vec<RobotSpec> = (0..most as u32)
        .map(|k| RobotSpec {
            id: RobotId(first_id + k),
            ..template.clone()
        })
        .collect();
    let mut roster: Roster = setup.mission.roster().clone();
    for c in &clones {
        roster.insert(c.clone());
    }
    let grid = setup.mission.grid();
    let all = CellSet::all(grid);

    let per_trial = for_trials(trials, |trial| {
        let failure = setup.failure(trial)?;
        let center = setup
            .mission
            .placement()
            .position(failure.robot_id)
            .expect("failed robot is placed");
        let mut rows = Vec::new();
        for (li, &l) in ls.iter().enumerate() {
            let (r, _) = setup.recover(&failure, &config.coordination_params(l, 0.0))?;
            let base = coverage(&r.new_placement, &roster, grid, &all)?;
            let region = neighborhood_cells(grid, center, l);
            let problem = PlacementProblem {
                grid,
                cells: &region,
                team: &clones,
                frozen: &r.new_placement,
                roster: &roster,
            };
            let outcome = lazy_greedy_place(&problem)?;
            let mut cache = CoverageCache::seeded(grid, &r.new_placement, &roster)?;
            let mut prefix = vec![base];
            for (id, cell) in &outcome.picks {
                cache.apply(grid, roster.get(*id).expect("clone"), *cell)?;
                prefix.push(cache.value(grid, &all));
            }
            rows.push((li, "base_coverage".to_string(), base));
            for &n in counts {
                let value = prefix[n];
                let pct = if base > 0.0 {
                    100.0 * (value - base) / base
                } else {
                    0.0
                };
                rows.push((li, format!("coverage_{n}"), value));
                rows.push((li, format!("pct_gain_{n}"), pct));
            }
        }
        Ok(rows)
    })?;
    Ok(assemble(ls, per_trial))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Rect;

    fn config() -> ScenarioConfig {
        ScenarioConfig {
            seed: 2,
            domain: Rect::square(20.0),
            pool_size: 30,
            ..Default::default()
        }
    }

    #[test]
    fn row_counts_and_header() {
        let t = experiment_coverage_vs_l(&config(), &[4.0, 8.0], 3).unwrap();
        assert_eq!(t.rows.len(), 2 * 2 * 3);
        assert_eq!(t.values("coverage", 4.0).len(), 3);
        let csv = t.to_csv();
        assert!(csv.starts_with("L,trial,metric,value\n"));
        assert_eq!(csv.lines().count(), 1 + 12);
    }

    #[test]
    fn single_l_gives_one_column() {
        let t = experiment_robots_vs_l(&config(), &[5.0], 2).unwrap();
        assert_eq!(
            t.metrics(),
            vec!["requested", "requested_gamma0", "unsatisfied"]
        );
        assert!(t.values("requested_gamma0", 5.0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn added_robots_gain_is_monotone_in_count() {
        let t = experiment_added_robots(&config(), &[5.0], &[0, 2, 4], 2).unwrap();
        for trial in 0..2 {
            let get = |m: &str| {
                t.rows
                    .iter()
                    .find(|r| r.metric == m && r.trial == trial)
                    .unwrap()
                    .value
            };
            assert_eq!(get("pct_gain_0"), 0.0);
            assert!(get("pct_gain_2") <= get("pct_gain_4"));
            assert_eq!(get("coverage_0"), get("base_coverage"));
        }
    }

    #[test]
    fn deterministic_coverage_columns() {
        let a = experiment_robots_vs_l(&config(), &[3.0, 6.0], 3).unwrap();
        let b = experiment_robots_vs_l(&config(), &[3.0, 6.0], 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_ls_rejected() {
        assert!(experiment_coverage_vs_l(&config(), &[], 1).is_err());
    }
}
