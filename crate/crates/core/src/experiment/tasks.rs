//! Task generation and the versioned task file.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TaskSpec, BLOCK_WIDTHS, TASK_LENGTH};
use crate::rng::seeded;
use crate::sampling::random_task;
use crate::FORMAT_TAG;

/// Seed the frozen 20-task suite was generated from.
pub const FROZEN_SEED: u64 = 20;
pub const FROZEN_TASKS: &str = include_str!("../../data/tasks20.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskFile {
    pub format: String,
    pub tasks: Vec<TaskSpec>,
}

impl TaskFile {
    pub fn new(tasks: Vec<TaskSpec>) -> Self {
        TaskFile {
            format: FORMAT_TAG.into(),
            tasks,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TaskFile = serde_json::from_str(text)?;
        if file.format != FORMAT_TAG {
            return Err(Error::Format(file.format));
        }
        for t in &file.tasks {
            t.check()?;
        }
        Ok(file)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

fn task_id(i: usize, n: usize) -> String {
    let digits = (n.max(2) - 1).to_string().len().max(2);
    format!("task-{i:0digits$}")
}

/// `n` distinct six-block sequences with uniformly drawn widths. The first
/// block of each sequence is the pre-positioned base.
pub fn generate_tasks(n: usize, seed: u64) -> Result<Vec<TaskSpec>> {
    let distinct = BLOCK_WIDTHS.len().pow(TASK_LENGTH as u32);
    if n == 0 || n > distinct {
        return Err(Error::Config(format!("task count must be in 1..={distinct}, got {n}")));
    }
    let mut rng = seeded(seed);
    let mut seen = HashSet::new();
    let mut tasks = Vec::with_capacity(n);
    while tasks.len() < n {
        let id = task_id(tasks.len(), n);
        let task = random_task(&mut rng, &id, TASK_LENGTH);
        let key: Vec<u64> = task.sequence.iter().map(|b| b.width().to_bits()).collect();
        if seen.insert(key) {
            tasks.push(task);
        }
    }
    Ok(tasks)
}

/// The 20-task suite checked into the repository.
pub fn frozen_suite() -> Vec<TaskSpec> {
    TaskFile::from_json(FROZEN_TASKS)
        .expect("bundled task file parses")
        .tasks
}
