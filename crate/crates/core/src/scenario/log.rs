use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::assignment::MotionPlan;
use crate::coordination::CoordinationResult;
use crate::coverage::Placement;
use crate::reliability::{FailureEvent, RobotId, RobotSpec};
use crate::selection::Selection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
#[allow(clippy::large_enum_variant)]
pub enum Event {
    PoolGenerated {
        pool: Vec<RobotSpec>,
    },
    TeamSelected {
        selection: Selection,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        notes: Vec<String>,
    },
    Placed {
        placement: Placement,
        coverage: f64,
    },
    FailureInjected {
        robot_id: RobotId,
        coverage_before: f64,
        coverage_after: f64,
    },
    FailureDetected {
        robot_id: RobotId,
    },
    OperatorChoice {
        robot_id: RobotId,
        #[serde(rename = "L")]
        l: f64,
        gamma: f64,
    },
    RobotsRequested {
        selection: Selection,
    },
    Reconfigured {
        robot_id: RobotId,
        result: CoordinationResult,
        placement: Placement,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        augment_error: Option<String>,
    },
    AssignmentComputed {
        plan: MotionPlan,
    },
    CoverageSample {
        coverage: f64,
    },
}

impl Event {
    /// Whole-domain coverage carried by the event, if any.
    pub fn coverage(&self) -> Option<f64> {
        match self {
            Event::Placed { coverage, .. } | Event::CoverageSample { coverage } => Some(*coverage),
            Event::FailureInjected { coverage_after, .. } => Some(*coverage_after),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Event::PoolGenerated { .. } => "PoolGenerated",
            Event::TeamSelected { .. } => "TeamSelected",
            Event::Placed { .. } => "Placed",
            Event::FailureInjected { .. } => "FailureInjected",
            Event::FailureDetected { .. } => "FailureDetected",
            Event::OperatorChoice { .. } => "OperatorChoice",
            Event::RobotsRequested { .. } => "RobotsRequested",
            Event::Reconfigured { .. } => "Reconfigured",
            Event::AssignmentComputed { .. } => "AssignmentComputed",
            Event::CoverageSample { .. } => "CoverageSample",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub time: f64,
    pub event: Event,
}

/// Append-only event log; one JSON object per line on disk.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RunLog {
    entries: Vec<LogEntry>,
}

impl RunLog {
    pub fn push(&mut self, time: f64, event: Event) -> &LogEntry {
        debug_assert!(
            self.entries.last().is_none_or(|e| e.time <= time),
            "log time went backwards"
        );
        let seq = self.entries.len() as u64;
        self.entries.push(LogEntry { seq, time, event });
        self.entries.last().expect("just pushed")
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_ndjson<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_ndjson<R: BufRead>(input: R) -> io::Result<Self> {
        let mut entries = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(io::Error::other)?);
        }
        Ok(Self { entries })
    }
}

/// State reconstructed by folding a log.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReplayState {
    pub clock: f64,
    /// Working robots plus a pending failed robot.
    pub placement: Placement,
    pub active: BTreeSet<RobotId>,
    pub failed: Vec<RobotId>,
    pub pending_failure: Option<FailureEvent>,
    pub failures_handled: usize,
    pub coverage: f64,
}

pub fn replay<'a>(entries: impl IntoIterator<Item = &'a LogEntry>) -> ReplayState {
    let mut s = ReplayState::default();
    for entry in entries {
        s.clock = entry.time;
        match &entry.event {
            Event::Placed {
                placement,
                coverage,
            } => {
                s.placement = placement.clone();
                s.active = placement.robots().collect();
                s.coverage = *coverage;
            }
            Event::FailureInjected {
                robot_id,
                coverage_after,
                ..
            } => {
                s.active.remove(robot_id);
                s.failed.push(*robot_id);
                s.pending_failure = Some(FailureEvent {
                    robot_id: *robot_id,
                    time: entry.time,
                });
                s.coverage = *coverage_after;
            }
            Event::RobotsRequested { selection } => s.active.extend(selection.ids.iter().copied()),
            Event::Reconfigured { placement, .. } => {
                s.placement = placement.clone();
                s.pending_failure = None;
                s.failures_handled += 1;
            }
            Event::CoverageSample { coverage } => s.coverage = *coverage,
            _ => {}
        }
    }
    s
}
