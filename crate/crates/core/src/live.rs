//! Session protocol shared with the live play client.
//!
//! Frames are JSON objects tagged by `"type"`, one per line. The client
//! opens with `hello`, then requests each cycle with an empty `start_cycle`;
//! the server answers with the plan and world, streams `state_tick` in
//! response to every `human_move`, reports inferred `human_task_event`s and
//! closes the cycle with `cycle_complete`. Protocol violations produce an
//! `error` frame.

use crate::domain::{Overlaps, PlanResult, Step, TaskId};
use crate::error::{Error, Result};
use crate::fetch::WorldSpec;
use crate::geometry::Point;
use crate::spatial::SpatialCostField;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskEventKind {
    Start,
    Finish,
}

/// Plan as shown to the live participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub human: Vec<Step>,
    pub robot: Vec<Step>,
    /// Outbound robot path per task.
    pub robot_paths: BTreeMap<TaskId, Vec<Point>>,
    pub overlaps: Overlaps,
    pub cost: Option<f64>,
    pub makespan_cost: Option<f64>,
    pub spatial_cost: f64,
    pub diversity_cost: f64,
}

impl From<&PlanResult> for PlanSummary {
    fn from(p: &PlanResult) -> Self {
        Self {
            human: p.genome.human.clone(),
            robot: p.genome.robot.clone(),
            robot_paths: p
                .robot_trajectories
                .iter()
                .map(|(t, tr)| (*t, tr.active_points().to_vec()))
                .collect(),
            overlaps: p.overlaps.clone(),
            cost: p.cost.is_finite().then_some(p.cost),
            makespan_cost: p.makespan_cost.is_finite().then_some(p.makespan_cost),
            spatial_cost: p.spatial_cost,
            diversity_cost: p.diversity_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub nx: usize,
    pub ny: usize,
    /// Row-major, x fastest.
    pub mean: Vec<f64>,
}

impl From<&SpatialCostField> for Heatmap {
    fn from(f: &SpatialCostField) -> Self {
        Self {
            nx: f.grid.nx,
            ny: f.grid.ny,
            mean: f.mean.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    /// Planned total including the diversity term.
    pub planned: Option<f64>,
    pub makespan: Option<f64>,
    pub spatial: f64,
    pub diversity: f64,
    /// Realised makespan of the executed cycle.
    pub realized_makespan: Option<f64>,
    pub min_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationEstimate {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Frame {
    Hello {
        protocol: u32,
        #[serde(default)]
        agent: String,
    },
    StartCycle {
        #[serde(default)]
        cycle: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plan: Option<PlanSummary>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        world: Option<Box<WorldSpec>>,
    },
    StateTick {
        clock: f64,
        robot: Point,
        robot_task: Option<TaskId>,
    },
    HumanMove {
        position: Point,
        timestamp: f64,
    },
    HumanTaskEvent {
        task: TaskId,
        event: TaskEventKind,
        timestamp: f64,
    },
    CycleComplete {
        cycle: u32,
        costs: CostSummary,
        durations: BTreeMap<TaskId, f64>,
        estimates: BTreeMap<TaskId, DurationEstimate>,
        heatmaps: BTreeMap<TaskId, Heatmap>,
    },
    Error {
        code: String,
        message: String,
    },
}

impl Frame {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        Frame::Error {
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Frame::Hello { .. } => "hello",
            Frame::StartCycle { .. } => "start_cycle",
            Frame::StateTick { .. } => "state_tick",
            Frame::HumanMove { .. } => "human_move",
            Frame::HumanTaskEvent { .. } => "human_task_event",
            Frame::CycleComplete { .. } => "cycle_complete",
            Frame::Error { .. } => "error",
        }
    }
}

/// Ordered, bidirectional frame transport.
pub trait LiveChannel {
    /// Next frame, or `None` once the peer has gone away.
    fn recv(&mut self) -> Result<Option<Frame>>;
    fn send(&mut self, frame: &Frame) -> Result<()>;
}

/// Newline-delimited JSON over any byte stream.
pub struct JsonLines<R, W> {
    reader: R,
    writer: W,
    line: String,
}

impl<R: BufRead, W: Write> JsonLines<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self {
            reader,
            writer,
            line: String::new(),
        }
    }

    pub fn into_parts(self) -> (R, W) {
        (self.reader, self.writer)
    }
}

impl<R: BufRead, W: Write> LiveChannel for JsonLines<R, W> {
    fn recv(&mut self) -> Result<Option<Frame>> {
        loop {
            self.line.clear();
            if self.reader.read_line(&mut self.line)? == 0 {
                return Ok(None);
            }
            let text = self.line.trim();
            if text.is_empty() {
                continue;
            }
            return serde_json::from_str(text)
                .map(Some)
                .map_err(|e| Error::LiveAborted(format!("malformed frame: {e}")));
        }
    }

    fn send(&mut self, frame: &Frame) -> Result<()> {
        serde_json::to_writer(&mut self.writer, frame)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }
}
