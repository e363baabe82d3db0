//! Batch experiments: planner × predictor grids over a task suite,
//! persisted traces and reports, and model-recovery studies.

pub mod tasks;

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{mean_log_likelihood, summarize_runs, Estimate};
use crate::model::TaskSpec;
use crate::planners::{run_episode, PlannerConfig, PlannerKind};
use crate::predictors::{
    generate_dataset, train_classifier, ClassifierModel, DatasetConfig, PerturbationConfig, Predictor,
    PredictorSpec, TrainConfig,
};
use crate::rng::seed_for_label;
use crate::trace::{write_jsonl, Outcome, TraceRecord};

pub use tasks::{frozen_suite, generate_tasks, TaskFile, FROZEN_SEED};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_ENV: &str = "OVERHANG_OUT";
pub const DEFAULT_REPETITIONS: usize = 40;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TaskSource {
    #[default]
    Frozen,
    File {
        path: PathBuf,
    },
    Generate {
        n: usize,
        seed: u64,
    },
}

impl TaskSource {
    pub fn load(&self) -> Result<Vec<TaskSpec>> {
        match self {
            TaskSource::Frozen => Ok(frozen_suite()),
            TaskSource::File { path } => Ok(TaskFile::load(path)?.tasks),
            TaskSource::Generate { n, seed } => generate_tasks(*n, *seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ModelSource {
    File {
        path: PathBuf,
    },
    Train {
        #[serde(default = "default_train_rows")]
        n: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_train_rows() -> usize {
    50_000
}

impl Default for ModelSource {
    fn default() -> Self {
        ModelSource::Train {
            n: default_train_rows(),
            seed: 0,
        }
    }
}

impl ModelSource {
    /// Trained models exclude the given tasks from their dataset.
    pub fn load(&self, exclude: &[TaskSpec]) -> Result<ClassifierModel> {
        match self {
            ModelSource::File { path } => ClassifierModel::load(path),
            ModelSource::Train { n, seed } => {
                let data = generate_dataset(&DatasetConfig::new(*n, *seed).excluding(exclude))?;
                train_classifier(&data, &TrainConfig::default())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub tasks: TaskSource,
    pub planners: Vec<PlannerConfig>,
    /// Repetitions of each stochastic cell; deterministic cells run once.
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelSource,
}

fn default_repetitions() -> usize {
    DEFAULT_REPETITIONS
}

impl ExperimentConfig {
    /// Myopic, depth-2 and depth-3 lookahead with the hybrid predictor.
    pub fn planner_comparison(seed: u64) -> Self {
        ExperimentConfig {
            tasks: TaskSource::Frozen,
            planners: vec![
                PlannerConfig::myopic(PredictorSpec::hybrid()),
                PlannerConfig::lookahead(2, PredictorSpec::hybrid()),
                PlannerConfig::lookahead(3, PredictorSpec::hybrid()),
            ],
            repetitions: DEFAULT_REPETITIONS,
            output_dir: None,
            seed,
            model: ModelSource::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.planners.is_empty() {
            return Err(Error::Config("planner grid is empty".into()));
        }
        let mut labels = Vec::new();
        for p in &self.planners {
            p.validate()?;
            let label = p.label();
            if labels.contains(&label) {
                return Err(Error::Config(format!("duplicate grid cell {label}")));
            }
            labels.push(label);
        }
        Ok(())
    }

    /// `OVERHANG_OUT` wins over the configured directory.
    pub fn resolved_output_dir(&self) -> Option<PathBuf> {
        std::env::var_os(OUTPUT_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .or_else(|| self.output_dir.clone())
    }

    pub fn needs_model(&self) -> bool {
        self.planners.iter().any(|p| p.predictor.needs_model())
    }

    pub fn repetitions_for(&self, planner: &PlannerConfig) -> usize {
        if planner.predictor.is_stochastic() {
            self.repetitions
        } else {
            1
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub task: String,
    pub rep: usize,
    pub seed: u64,
    pub reward: f64,
    pub outcome: Outcome,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub cell: String,
    pub planner: PlannerConfig,
    pub episodes: Vec<EpisodeRecord>,
    pub reward: Option<Estimate>,
    pub failures: usize,
    /// Trace file relative to the output directory, once persisted.
    pub traces_file: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridOutput {
    pub results: Vec<RunResult>,
    /// Traces of each cell, parallel to `results`.
    pub traces: Vec<Vec<TraceRecord>>,
}

/// Seed of one episode; depends only on the global seed and the cell
/// descriptor, so adding cells never perturbs existing ones.
pub fn episode_seed(global: u64, cell: &str, task: &str, rep: usize) -> u64 {
    seed_for_label(global, &format!("{cell}/{task}/{rep}"))
}

/// Runs every (planner, task, repetition) episode. A failing episode is
/// recorded with reward 0 and the grid continues.
pub fn run_cells(
    tasks: &[TaskSpec],
    config: &ExperimentConfig,
    model: Option<&Arc<ClassifierModel>>,
) -> Result<GridOutput> {
    config.validate()?;
    let jobs: Vec<(usize, &TaskSpec, usize)> = config
        .planners
        .iter()
        .enumerate()
        .flat_map(|(c, p)| {
            let reps = config.repetitions_for(p);
            tasks.iter().flat_map(move |t| (0..reps).map(move |r| (c, t, r)))
        })
        .collect();
    let labels: Vec<String> = config.planners.iter().map(|p| p.label()).collect();
    let outcomes: Vec<(usize, EpisodeRecord, Option<TraceRecord>)> = jobs
        .par_iter()
        .map(|&(c, task, rep)| {
            let seed = episode_seed(config.seed, &labels[c], &task.id, rep);
            let planner = config.planners[c].clone().with_seed(seed);
            let mut record = EpisodeRecord {
                task: task.id.clone(),
                rep,
                seed,
                reward: 0.0,
                outcome: Outcome::Aborted,
                error: None,
            };
            match run_episode(task, &planner, model) {
                Ok(ep) => {
                    record.reward = ep.reward;
                    record.outcome = ep.trace.outcome;
                    (c, record, Some(ep.trace))
                }
                Err(e) => {
                    record.error = Some(e.to_string());
                    (c, record, None)
                }
            }
        })
        .collect();

    let mut results: Vec<RunResult> = config
        .planners
        .iter()
        .zip(&labels)
        .map(|(p, label)| RunResult {
            cell: label.clone(),
            planner: p.clone(),
            episodes: Vec::new(),
            reward: None,
            failures: 0,
            traces_file: None,
        })
        .collect();
    let mut traces = vec![Vec::new(); results.len()];
    for (c, record, trace) in outcomes {
        results[c].failures += usize::from(record.error.is_some());
        results[c].episodes.push(record);
        traces[c].extend(trace);
    }
    for r in &mut results {
        let rewards: Vec<f64> = r.episodes.iter().map(|e| e.reward).collect();
        r.reward = Estimate::of(&rewards);
    }
    Ok(GridOutput { results, traces })
}

/// Loads tasks and the classifier, runs the grid and, when an output
/// directory is configured, writes traces and reports.
pub fn run_grid(config: &ExperimentConfig) -> Result<GridOutput> {
    config.validate()?;
    let tasks = config.tasks.load()?;
    let model = if config.needs_model() {
        Some(Arc::new(config.model.load(&tasks)?))
    } else {
        None
    };
    let mut output = run_cells(&tasks, config, model.as_ref())?;
    if let Some(dir) = config.resolved_output_dir() {
        write_report(&mut output, &dir)?;
        let recorded = ExperimentConfig {
            output_dir: None,
            ..config.clone()
        };
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(&recorded)? + "\n")?;
        if let Some(m) = &model {
            fs::write(dir.join("model.json"), m.to_json()? + "\n")?;
        }
    }
    Ok(output)
}

/// Reference terminal rewards reported for the three planners in the
/// original study, used as annotations only.
pub fn reference_reward(planner: &PlannerConfig) -> Option<f64> {
    match (planner.kind, planner.depth) {
        (PlannerKind::Myopic, _) => Some(0.52),
        (PlannerKind::Lookahead, 2) => Some(0.912),
        (PlannerKind::Lookahead, 3) => Some(1.180),
        _ => None,
    }
}

fn file_stem(index: usize, cell: &str) -> String {
    let safe: String = cell
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    format!("{index:02}-{safe}")
}

fn sample_flag(n: usize) -> &'static str {
    match n {
        0 => "n=0",
        1 => "n=1",
        _ => "",
    }
}

pub fn runs_csv(results: &[RunResult]) -> String {
    let mut out = String::from("cell,task,rep,reward,outcome\n");
    for r in results {
        for e in &r.episodes {
            let outcome = serde_json::to_value(e.outcome).expect("enum serializes");
            writeln!(
                out,
                "{},{},{},{},{}",
                r.cell,
                e.task,
                e.rep,
                e.reward,
                outcome.as_str().unwrap_or_default()
            )
            .expect("writing to a String");
        }
    }
    out
}

pub fn summary_csv(results: &[RunResult]) -> String {
    let mut out = String::from("cell,mean,sem,n,failures,flag,reference\n");
    for r in results {
        let reference = reference_reward(&r.planner).map(|v| v.to_string()).unwrap_or_default();
        match r.reward {
            Some(e) => writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.cell,
                e.mean,
                e.sem,
                e.n,
                r.failures,
                sample_flag(e.n),
                reference
            ),
            None => writeln!(out, "{},,,0,{},n=0,{}", r.cell, r.failures, reference),
        }
        .expect("writing to a String");
    }
    out
}

pub fn metrics_csv(results: &[RunResult], traces: &[Vec<TraceRecord>]) -> String {
    let mut out = String::from("cell,metric,mean,sem,n\n");
    for (r, t) in results.iter().zip(traces) {
        for (name, e) in summarize_runs(t).rows() {
            match e {
                Some(e) => writeln!(out, "{},{name},{},{},{}", r.cell, e.mean, e.sem, e.n),
                None => writeln!(out, "{},{name},,,0", r.cell),
            }
            .expect("writing to a String");
        }
    }
    out
}

pub fn summary_text(results: &[RunResult]) -> String {
    let width = results.iter().map(|r| r.cell.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<width$}  {:>16}  {:>5}  {:>9}\n", "cell", "reward", "n", "reference");
    for r in results {
        let reward = match r.reward {
            Some(e) => format!("{:.3} ± {:.3}", e.mean, e.sem),
            None => "-".into(),
        };
        let n = r.reward.map_or(0, |e| e.n);
        let reference = reference_reward(&r.planner).map_or("-".into(), |v| format!("{v:.3}"));
        writeln!(out, "{:<width$}  {reward:>16}  {n:>5}  {reference:>9}", r.cell).expect("writing to a String");
    }
    out
}

/// Writes `runs.csv`, `summary.csv`, `metrics.csv`, `summary.txt` and
/// one JSONL trace file per cell under `dir`.
pub fn write_report(output: &mut GridOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("traces"))?;
    for (i, (r, traces)) in output.results.iter_mut().zip(&output.traces).enumerate() {
        let rel = format!("traces/{}.jsonl", file_stem(i, &r.cell));
        let file = BufWriter::new(fs::File::create(dir.join(&rel))?);
        write_jsonl(file, traces)?;
        r.traces_file = Some(rel);
    }
    fs::write(dir.join("runs.csv"), runs_csv(&output.results))?;
    fs::write(dir.join("summary.csv"), summary_csv(&output.results))?;
    fs::write(dir.join("metrics.csv"), metrics_csv(&output.results, &output.traces))?;
    fs::write(dir.join("summary.txt"), summary_text(&output.results))?;
    fs::write(
        dir.join("results.json"),
        serde_json::to_string_pretty(&output.results)? + "\n",
    )?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub generator: String,
    pub episodes: usize,
    /// Episodes scored strictly higher by the generating predictor.
    pub wins: usize,
    pub fraction: f64,
}

/// Generates episodes with `generator` guiding `planner` and counts how
/// often the generating predictor assigns a higher mean log-likelihood
/// than the rival. Evaluation uses the default simulator seed, independent
/// of the seeds used while planning.
pub fn model_recovery(
    tasks: &[TaskSpec],
    planner: &PlannerConfig,
    generator: &PredictorSpec,
    model: &Arc<ClassifierModel>,
    episodes: usize,
    seed: u64,
) -> Result<RecoveryReport> {
    let ipe = Predictor::Ipe(PerturbationConfig::default());
    let heuristic = Predictor::Heuristic(model.clone());
    let (own, rival) = match generator {
        PredictorSpec::Ipe { .. } => (&ipe, &heuristic),
        PredictorSpec::Heuristic => (&heuristic, &ipe),
        other => {
            return Err(Error::Config(format!(
                "model recovery compares ipe and heuristic, got {}",
                other.label()
            )))
        }
    };
    let config = PlannerConfig {
        predictor: generator.clone(),
        ..planner.clone()
    };
    let wins: Vec<bool> = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let task = &tasks[i % tasks.len()];
            let s = seed_for_label(seed, &format!("recovery/{}/{i}", generator.label()));
            let ep = run_episode(task, &config.clone().with_seed(s), Some(model))?;
            let a = mean_log_likelihood(&ep.trace, own)?;
            let b = mean_log_likelihood(&ep.trace, rival)?;
            Ok(matches!((a, b), (Some(a), Some(b)) if a > b))
        })
        .collect::<Result<_>>()?;
    let wins = wins.into_iter().filter(|w| *w).count();
    Ok(RecoveryReport {
        generator: generator.label(),
        episodes,
        wins,
        fraction: wins as f64 / episodes.max(1) as f64,
    })
}
