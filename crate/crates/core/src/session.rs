//! Interactive human sessions as an event-sourced state machine.
//!
//! Every command is turned into events, each event is appended to the
//! session log before it is applied, and replaying the log rebuilds the
//! session exactly. The server clock is the only time authority.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::generate_tasks;
use crate::metrics::{summarize_runs, RunSummary};
use crate::model::{episode_reward, Action, BlockSpec, DecisionState, Legality, PlacedBlock, TaskSpec};
use crate::stability::is_stable;
use crate::trace::{write_jsonl, Outcome, PreviewEvent, TraceRecord};

pub const STEP_DEADLINE_MS: u64 = 5_000;
pub const TRIALS_PER_SESSION: usize = 20;

pub trait Clock: Send + Sync {
    /// Milliseconds since the Unix epoch.
    fn now_ms(&self) -> u64;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    }
}

/// Test clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        ManualClock(AtomicU64::new(start_ms))
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    TimeConstrained,
    Unconstrained,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::TimeConstrained => "time_constrained",
            Condition::Unconstrained => "unconstrained",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Completed,
    Finalized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitOutcome {
    PlacedStable,
    Collapsed,
    TimedOut,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventPayload {
    Created {
        id: String,
        condition: Condition,
        seed: u64,
    },
    Preview {
        trial: usize,
        x: f64,
        layer: i32,
        verdict: Legality,
        dwell_ms: f64,
    },
    Place {
        trial: usize,
        x: f64,
        layer: i32,
        #[serde(default)]
        client_ts: Option<f64>,
        verdict: Legality,
        outcome: CommitOutcome,
    },
    Timeout {
        trial: usize,
    },
    TrialEnd {
        trial: usize,
        reward: f64,
        outcome: Outcome,
    },
    Finalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub t_ms: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
}

/// Append-only JSONL event file.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    pub fn create(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create_new(true).append(true).open(path)?;
        Ok(EventLog {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn open_append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(EventLog {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &SessionEvent) -> Result<()> {
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Vec<SessionEvent>> {
        let mut events = Vec::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                events.push(serde_json::from_str(&line)?);
            }
        }
        Ok(events)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaceResult {
    pub outcome: CommitOutcome,
    pub verdict: Legality,
    /// Index of the trial the commit was judged in.
    pub trial: usize,
    /// Reward of that trial when the commit ended it.
    pub trial_reward: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub condition: Condition,
    pub status: SessionStatus,
    pub trial: usize,
    pub trial_count: usize,
    pub task_id: Option<String>,
    /// Placements made so far in the current trial.
    pub step: usize,
    pub geometry: Vec<PlacedBlock>,
    pub remaining: Vec<BlockSpec>,
    pub score: f64,
    pub trial_rewards: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_ms: Option<u64>,
    pub server_time_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub condition: Condition,
    pub trials: usize,
    pub total_reward: f64,
    pub stable_proportion: f64,
    pub mean_decision_time: Option<f64>,
    pub summary: RunSummary,
}

#[derive(Debug)]
pub struct Session {
    id: String,
    condition: Condition,
    seed: u64,
    tasks: Vec<TaskSpec>,
    trial: usize,
    state: DecisionState,
    step_started_ms: u64,
    status: SessionStatus,
    current: TraceRecord,
    previews: Vec<PreviewEvent>,
    traces: Vec<TraceRecord>,
    events: Vec<SessionEvent>,
    log: Option<EventLog>,
}

impl Session {
    fn blank(id: String, condition: Condition, seed: u64, now: u64) -> Result<Self> {
        let tasks = generate_tasks(TRIALS_PER_SESSION, seed)?;
        let state = DecisionState::initial(&tasks[0]);
        let current = TraceRecord::new(&tasks[0], condition.to_string());
        Ok(Session {
            id,
            condition,
            seed,
            tasks,
            trial: 0,
            state,
            step_started_ms: now,
            status: SessionStatus::Active,
            current,
            previews: Vec::new(),
            traces: Vec::new(),
            events: Vec::new(),
            log: None,
        })
    }

    /// New session with its first trial armed. The `Created` event is the
    /// first line of `log`.
    pub fn create(
        id: impl Into<String>,
        condition: Condition,
        seed: u64,
        now: u64,
        log: Option<EventLog>,
    ) -> Result<Self> {
        let id = id.into();
        let mut session = Self::blank(id.clone(), condition, seed, now)?;
        session.log = log;
        session.record(now, EventPayload::Created { id, condition, seed })?;
        Ok(session)
    }

    /// Rebuilds a session from its events.
    pub fn replay(events: &[SessionEvent]) -> Result<Self> {
        let first = events
            .first()
            .ok_or_else(|| Error::EventLog("empty event log".into()))?;
        let EventPayload::Created { id, condition, seed } = &first.payload else {
            return Err(Error::EventLog("log does not start with a created event".into()));
        };
        let mut session = Self::blank(id.clone(), *condition, *seed, first.t_ms)?;
        session.events.push(first.clone());
        for (i, ev) in events.iter().enumerate().skip(1) {
            if ev.seq != i as u64 {
                return Err(Error::EventLog(format!("event {i} has sequence number {}", ev.seq)));
            }
            session.apply(ev)?;
            session.events.push(ev.clone());
        }
        Ok(session)
    }

    pub fn attach_log(&mut self, log: EventLog) {
        self.log = Some(log);
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn trial(&self) -> usize {
        self.trial
    }

    pub fn state(&self) -> &DecisionState {
        &self.state
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    /// Finished trials, in order.
    pub fn traces(&self) -> &[TraceRecord] {
        &self.traces
    }

    pub fn deadline_ms(&self) -> Option<u64> {
        (self.condition == Condition::TimeConstrained && self.status == SessionStatus::Active)
            .then_some(self.step_started_ms + STEP_DEADLINE_MS)
    }

    pub fn score(&self) -> f64 {
        self.traces.iter().map(|t| t.reward).sum()
    }

    fn record(&mut self, t_ms: u64, payload: EventPayload) -> Result<()> {
        let event = SessionEvent {
            seq: self.events.len() as u64,
            t_ms,
            payload,
        };
        if let Some(log) = &mut self.log {
            log.append(&event)?;
        }
        self.apply(&event)?;
        self.events.push(event);
        Ok(())
    }

    fn apply(&mut self, ev: &SessionEvent) -> Result<()> {
        let diverged = |m: String| Error::EventLog(format!("event {}: {m}", ev.seq));
        let check_trial = |trial: usize, current: usize| {
            if trial == current {
                Ok(())
            } else {
                Err(diverged(format!("trial {trial} while trial {current} is active")))
            }
        };
        if self.status != SessionStatus::Active && !matches!(ev.payload, EventPayload::Finalized) {
            return Err(diverged("session is not active".into()));
        }
        match &ev.payload {
            EventPayload::Created { .. } => {
                if ev.seq != 0 {
                    return Err(diverged("created event after the start".into()));
                }
            }
            EventPayload::Preview {
                trial,
                x,
                layer,
                dwell_ms,
                ..
            } => {
                check_trial(*trial, self.trial)?;
                self.previews.push(PreviewEvent {
                    x: *x,
                    layer: *layer,
                    dwell_ms: *dwell_ms,
                    t_ms: ev.t_ms.saturating_sub(self.step_started_ms) as f64,
                });
            }
            EventPayload::Place {
                trial,
                x,
                layer,
                outcome,
                ..
            } => {
                check_trial(*trial, self.trial)?;
                if matches!(outcome, CommitOutcome::PlacedStable | CommitOutcome::Collapsed) {
                    let action = Action::new(*x, *layer);
                    let next = self
                        .state
                        .apply_action(action)
                        .map_err(|e| diverged(e.to_string()))?;
                    let duration = ev.t_ms.saturating_sub(self.step_started_ms) as f64 / 1000.0;
                    let previews = std::mem::take(&mut self.previews);
                    self.current.push_step(
                        action,
                        duration,
                        previews,
                        *outcome == CommitOutcome::PlacedStable,
                    );
                    self.state = next;
                    self.step_started_ms = ev.t_ms;
                }
            }
            EventPayload::Timeout { trial } => check_trial(*trial, self.trial)?,
            EventPayload::TrialEnd {
                trial,
                reward,
                outcome,
            } => {
                check_trial(*trial, self.trial)?;
                self.end_trial(*reward, *outcome, ev.t_ms);
            }
            EventPayload::Finalized => {
                if self.status == SessionStatus::Active {
                    self.current.outcome = Outcome::Aborted;
                    self.current.reward = 0.0;
                    self.traces.push(self.current.clone());
                }
                self.status = SessionStatus::Finalized;
            }
        }
        Ok(())
    }

    fn end_trial(&mut self, reward: f64, outcome: Outcome, t_ms: u64) {
        let task_index = self.trial + 1;
        let mut finished = std::mem::replace(
            &mut self.current,
            TraceRecord::new(
                &self.tasks[task_index.min(self.tasks.len() - 1)],
                self.condition.to_string(),
            ),
        );
        finished.reward = reward;
        finished.outcome = outcome;
        self.traces.push(finished);
        self.previews.clear();
        self.trial = task_index;
        self.step_started_ms = t_ms;
        if task_index < self.tasks.len() {
            self.state = DecisionState::initial(&self.tasks[task_index]);
        } else {
            self.status = SessionStatus::Completed;
        }
    }

    fn ensure_active(&self) -> Result<()> {
        if self.status == SessionStatus::Active {
            Ok(())
        } else {
            Err(Error::SessionClosed(self.id.clone()))
        }
    }

    fn is_late(&self, now: u64) -> bool {
        self.deadline_ms().is_some_and(|d| now > d)
    }

    /// Ends the current trial if its deadline has passed. Returns whether
    /// it did.
    pub fn tick(&mut self, now: u64) -> Result<bool> {
        if self.status != SessionStatus::Active || !self.is_late(now) {
            return Ok(false);
        }
        let trial = self.trial;
        self.record(now, EventPayload::Timeout { trial })?;
        self.record(
            now,
            EventPayload::TrialEnd {
                trial,
                reward: 0.0,
                outcome: Outcome::TimedOut,
            },
        )?;
        Ok(true)
    }

    /// Geometric legality of a hovered action. Never reveals stability.
    pub fn preview(&mut self, action: Action, dwell_ms: f64, now: u64) -> Result<Legality> {
        self.ensure_active()?;
        self.tick(now)?;
        self.ensure_active()?;
        let verdict = self.state.validate_action(action)?;
        let dwell_ms = if dwell_ms.is_finite() { dwell_ms.max(0.0) } else { 0.0 };
        self.record(
            now,
            EventPayload::Preview {
                trial: self.trial,
                x: action.x,
                layer: action.layer,
                verdict,
                dwell_ms,
            },
        )?;
        Ok(verdict)
    }

    /// Commits a placement: deadline first, then legality, then stability.
    /// `client_ts` is logged but never trusted.
    pub fn place(&mut self, action: Action, client_ts: Option<f64>, now: u64) -> Result<PlaceResult> {
        self.ensure_active()?;
        let trial = self.trial;
        let verdict = self.state.validate_action(action)?;
        let place = |verdict, outcome| EventPayload::Place {
            trial,
            x: action.x,
            layer: action.layer,
            client_ts,
            verdict,
            outcome,
        };
        if self.is_late(now) {
            self.record(now, place(verdict, CommitOutcome::TimedOut))?;
            self.record(
                now,
                EventPayload::TrialEnd {
                    trial,
                    reward: 0.0,
                    outcome: Outcome::TimedOut,
                },
            )?;
            return Ok(PlaceResult {
                outcome: CommitOutcome::TimedOut,
                verdict,
                trial,
                trial_reward: Some(0.0),
            });
        }
        if !verdict.is_valid() {
            self.record(now, place(verdict, CommitOutcome::Rejected))?;
            return Ok(PlaceResult {
                outcome: CommitOutcome::Rejected,
                verdict,
                trial,
                trial_reward: None,
            });
        }
        let post = self.state.preview_geometry(action)?;
        let outcome = if is_stable(&post) {
            CommitOutcome::PlacedStable
        } else {
            CommitOutcome::Collapsed
        };
        self.record(now, place(verdict, outcome))?;
        let ended = match outcome {
            CommitOutcome::Collapsed => Some((0.0, Outcome::Collapsed)),
            _ if self.state.is_terminal() => Some((
                episode_reward(&self.current.prefix_stable, self.state.geometry()),
                Outcome::Completed,
            )),
            _ => None,
        };
        if let Some((reward, outcome)) = ended {
            self.record(now, EventPayload::TrialEnd { trial, reward, outcome })?;
        }
        Ok(PlaceResult {
            outcome,
            verdict,
            trial,
            trial_reward: ended.map(|(r, _)| r),
        })
    }

    /// Closes the session; an unfinished trial is recorded as aborted.
    /// Calling it again returns the same summary.
    pub fn finalize(&mut self, now: u64) -> Result<SessionSummary> {
        if self.status != SessionStatus::Finalized {
            self.tick(now)?;
            self.record(now, EventPayload::Finalized)?;
        }
        Ok(self.summary())
    }

    pub fn summary(&self) -> SessionSummary {
        let summary = summarize_runs(&self.traces);
        SessionSummary {
            id: self.id.clone(),
            condition: self.condition,
            trials: self.traces.len(),
            total_reward: self.score(),
            stable_proportion: summary.stable_proportion.map_or(0.0, |e| e.mean),
            mean_decision_time: summary.decision_time.map(|e| e.mean),
            summary,
        }
    }

    pub fn export_traces(&self, path: &Path) -> Result<()> {
        write_jsonl(std::io::BufWriter::new(File::create(path)?), &self.traces)
    }

    pub fn view(&self, now: u64) -> SessionView {
        let active = self.status == SessionStatus::Active;
        SessionView {
            id: self.id.clone(),
            condition: self.condition,
            status: self.status,
            trial: self.trial,
            trial_count: self.tasks.len(),
            task_id: active.then(|| self.tasks[self.trial].id.clone()),
            step: if active { self.current.steps.len() } else { 0 },
            geometry: if active { self.state.geometry().blocks().to_vec() } else { Vec::new() },
            remaining: if active { self.state.remaining().to_vec() } else { Vec::new() },
            score: self.score(),
            trial_rewards: self.traces.iter().map(|t| t.reward).collect(),
            deadline_ms: self.deadline_ms(),
            server_time_ms: now,
        }
    }
}
