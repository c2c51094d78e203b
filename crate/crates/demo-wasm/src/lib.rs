//! Browser demo. Three operations: show the placed team as a heatmap, preview
//! a failure recovery for a chosen `L` and `γ`, and run the distributed clique
//! cover on the current positions. Every call returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use rescov::scenario::{Mission, RobotStatus, ScenarioConfig};
use rescov::{detection_map, distributed_clique_cover, CliqueCoverOptions, CommGraph, RobotId};

#[derive(Serialize)]
struct RobotDot {
    id: RobotId,
    x: f64,
    y: f64,
    radius: f64,
    failed: bool,
}

#[derive(Serialize)]
struct View {
    nx: usize,
    ny: usize,
    cell_size: f64,
    coverage: f64,
    heatmap: Vec<f64>,
    robots: Vec<RobotDot>,
    pending_failure: Option<RobotId>,
}

#[derive(Serialize)]
struct PreviewView {
    #[serde(rename = "L")]
    l: f64,
    gamma: f64,
    center: [f64; 2],
    inside: Vec<RobotId>,
    ratio_do_nothing: f64,
    ratio_after_local: f64,
    ratio_final: f64,
    robots_requested: Vec<RobotId>,
    satisfied: bool,
    coverage_before: f64,
    coverage_after: f64,
    evaluations: usize,
    heatmap: Vec<f64>,
    robots: Vec<RobotDot>,
}

#[derive(Serialize)]
struct CoverView {
    range: f64,
    edges: Vec<[RobotId; 2]>,
    blocks: Vec<Vec<RobotId>>,
    messages: usize,
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("demo views serialize")
}

/// Core of the demo, usable without a browser.
pub struct DemoCore {
    mission: Mission,
}

impl DemoCore {
    pub fn new(config_json: &str) -> Result<Self, String> {
        let config: ScenarioConfig = if config_json.trim().is_empty() {
            ScenarioConfig::default()
        } else {
            serde_json::from_str(config_json).map_err(|e| e.to_string())?
        };
        Ok(Self {
            mission: Mission::start(config).map_err(|e| e.to_string())?,
        })
    }

    fn dots(&self, placement: &rescov::Placement) -> Vec<RobotDot> {
        let failed = self.mission.failed();
        placement
            .iter()
            .map(|(id, slot)| RobotDot {
                id,
                x: slot.position.x,
                y: slot.position.y,
                radius: self
                    .mission
                    .roster()
                    .get(id)
                    .map_or(0.0, |s| s.sense_radius),
                failed: failed.contains(&id),
            })
            .collect()
    }

    pub fn view(&self) -> Result<String, String> {
        let grid = self.mission.grid();
        Ok(to_json(&View {
            nx: grid.nx(),
            ny: grid.ny(),
            cell_size: grid.cell_size(),
            coverage: self.mission.coverage().map_err(|e| e.to_string())?,
            heatmap: self.mission.heatmap().map_err(|e| e.to_string())?,
            robots: self.dots(self.mission.placement()),
            pending_failure: self.mission.pending_failure().map(|f| f.robot_id),
        }))
    }

    /// Fails `robot_id`, or a roulette-drawn robot when it is `None`.
    pub fn fail(&mut self, robot_id: Option<u32>) -> Result<String, String> {
        let ev = self
            .mission
            .inject_failure(robot_id.map(RobotId), None)
            .map_err(|e| e.to_string())?;
        Ok(to_json(&ev))
    }

    pub fn preview(&self, l: f64, gamma: f64) -> Result<String, String> {
        let m = &self.mission;
        let rec = m
            .plan(&m.config().coordination_params(l, gamma))
            .map_err(|e| e.to_string())?;
        let center = m
            .placement()
            .position(rec.failed)
            .expect("failed robot is still placed");
        Ok(to_json(&PreviewView {
            l,
            gamma,
            center: [center.x, center.y],
            inside: rec.result.inside.clone(),
            ratio_do_nothing: rec.result.ratio_do_nothing,
            ratio_after_local: rec.result.ratio_achieved,
            ratio_final: rec.result.final_ratio(),
            robots_requested: rec.result.requested_robots.ids.clone(),
            satisfied: rec.result.satisfied,
            coverage_before: rec.coverage_before,
            coverage_after: rec.coverage_after,
            evaluations: rec.result.evaluations,
            heatmap: detection_map(&rec.placement, m.roster(), m.grid())
                .map_err(|e| e.to_string())?,
            robots: self.dots(&rec.placement),
        }))
    }

    pub fn commit(&mut self, l: f64, gamma: f64) -> Result<String, String> {
        let params = self.mission.config().coordination_params(l, gamma);
        self.mission.commit(&params).map_err(|e| e.to_string())?;
        self.view()
    }

    /// Clique cover of the working robots with communication range `range`.
    pub fn clique_cover(&self, range: f64) -> Result<String, String> {
        let placement = self.mission.working_placement();
        let (ids, points): (Vec<RobotId>, Vec<_>) =
            placement.iter().map(|(id, s)| (id, s.position)).unzip();
        let graph = CommGraph::new(ids.clone(), points, range).map_err(|e| e.to_string())?;
        let report = distributed_clique_cover(&graph, &CliqueCoverOptions::default())
            .map_err(|e| e.to_string())?;
        let mut edges = Vec::new();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                if graph.are_adjacent(*a, *b) {
                    edges.push([*a, *b]);
                }
            }
        }
        let m = report.messages;
        Ok(to_json(&CoverView {
            range,
            edges,
            blocks: report.cover,
            messages: m.beacons + m.neighborhoods + m.choices,
        }))
    }

    pub fn active_ids(&self) -> Vec<u32> {
        self.mission
            .snapshot()
            .map(|s| {
                s.robots
                    .iter()
                    .filter(|r| r.status == RobotStatus::Active)
                    .map(|r| r.spec.id.0)
                    .collect()
            })
            .unwrap_or_default()
    }
}

#[wasm_bindgen]
pub struct Demo(DemoCore);

#[wasm_bindgen]
impl Demo {
    /// `config_json` may be empty for the default scenario.
    #[wasm_bindgen(constructor)]
    pub fn new(config_json: &str) -> Result<Demo, JsError> {
        DemoCore::new(config_json)
            .map(Demo)
            .map_err(|e| JsError::new(&e))
    }

    pub fn view(&self) -> Result<String, JsError> {
        self.0.view().map_err(|e| JsError::new(&e))
    }

    pub fn fail(&mut self, robot_id: Option<u32>) -> Result<String, JsError> {
        self.0.fail(robot_id).map_err(|e| JsError::new(&e))
    }

    pub fn preview(&self, l: f64, gamma: f64) -> Result<String, JsError> {
        self.0.preview(l, gamma).map_err(|e| JsError::new(&e))
    }

    pub fn commit(&mut self, l: f64, gamma: f64) -> Result<String, JsError> {
        self.0.commit(l, gamma).map_err(|e| JsError::new(&e))
    }

    pub fn clique_cover(&self, range: f64) -> Result<String, JsError> {
        self.0.clique_cover(range).map_err(|e| JsError::new(&e))
    }
}
