//! Per-episode behavioral record shared by the planners, the session
//! service and the metrics. Persisted as JSON lines.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{episode_reward, Action, BlockSpec, DecisionState, TaskSpec, TowerGeometry};
use crate::FORMAT_TAG;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreviewEvent {
    pub x: f64,
    pub layer: i32,
    /// Client-reported hover time on this cell.
    pub dwell_ms: f64,
    /// Milliseconds since the step started.
    pub t_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub action: Action,
    pub duration_s: f64,
    #[serde(default)]
    pub previews: Vec<PreviewEvent>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Collapsed,
    TimedOut,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub format: String,
    pub task_id: String,
    pub condition: String,
    pub sequence: Vec<BlockSpec>,
    pub steps: Vec<TraceStep>,
    /// True-stability flag after each executed placement.
    pub prefix_stable: Vec<bool>,
    pub reward: f64,
    pub outcome: Outcome,
}

impl TraceRecord {
    pub fn new(task: &TaskSpec, condition: impl Into<String>) -> Self {
        TraceRecord {
            format: FORMAT_TAG.into(),
            task_id: task.id.clone(),
            condition: condition.into(),
            sequence: task.sequence.clone(),
            steps: Vec::new(),
            prefix_stable: Vec::new(),
            reward: 0.0,
            outcome: Outcome::Aborted,
        }
    }

    pub fn task(&self) -> Result<TaskSpec> {
        TaskSpec::new(self.task_id.clone(), self.sequence.clone())
    }

    pub fn check(&self) -> Result<()> {
        if self.format != FORMAT_TAG {
            return Err(Error::Format(self.format.clone()));
        }
        if self.steps.len() != self.prefix_stable.len() || self.steps.len() >= self.sequence.len().max(1) {
            return Err(Error::Format(format!(
                "trace {} has {} steps, {} flags for {} blocks",
                self.task_id,
                self.steps.len(),
                self.prefix_stable.len(),
                self.sequence.len()
            )));
        }
        if self.steps.iter().any(|s| s.duration_s.is_nan() || s.duration_s < 0.0) {
            return Err(Error::Format(format!("trace {} has a negative duration", self.task_id)));
        }
        Ok(())
    }

    /// Replays the executed actions, returning the state before each step
    /// and the final state.
    pub fn replay(&self) -> Result<(Vec<DecisionState>, DecisionState)> {
        let task = self.task()?;
        let mut state = DecisionState::initial(&task);
        let mut before = Vec::with_capacity(self.steps.len());
        for (step, s) in self.steps.iter().enumerate() {
            let next = state
                .apply_action(s.action)
                .map_err(|e| Error::ReplayDivergence {
                    step,
                    reason: e.to_string(),
                })?;
            before.push(std::mem::replace(&mut state, next));
        }
        Ok((before, state))
    }

    pub fn final_geometry(&self) -> Result<TowerGeometry> {
        Ok(self.replay()?.1.geometry().clone())
    }

    /// Reward recomputed from the persisted actions and flags.
    pub fn recomputed_reward(&self) -> Result<f64> {
        if self.outcome != Outcome::Completed {
            return Ok(0.0);
        }
        Ok(episode_reward(&self.prefix_stable, &self.final_geometry()?))
    }

    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Completed
    }

    pub fn mean_decision_time(&self) -> Option<f64> {
        (!self.steps.is_empty()).then(|| {
            self.steps.iter().map(|s| s.duration_s).sum::<f64>() / self.steps.len() as f64
        })
    }

    pub fn push_step(&mut self, action: Action, duration_s: f64, previews: Vec<PreviewEvent>, stable: bool) {
        self.steps.push(TraceStep {
            action,
            duration_s,
            previews,
        });
        self.prefix_stable.push(stable);
    }
}

pub fn write_jsonl<W: Write>(mut out: W, traces: &[TraceRecord]) -> Result<()> {
    for t in traces {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<TraceRecord>> {
    let mut traces = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let trace: TraceRecord = serde_json::from_str(&line)?;
        trace.check()?;
        traces.push(trace);
    }
    Ok(traces)
}
