use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use overhang_core::experiment::{
    frozen_suite, generate_tasks, run_grid, summary_text, ExperimentConfig, TaskFile, OUTPUT_ENV,
};
use overhang_core::metrics::{
    advantage_csv, order_dependency, relative_advantage, summarize_runs, LikelihoodReport,
};
use overhang_core::planners::{run_episode, PlannerConfig};
use overhang_core::predictors::{
    generate_dataset, train_classifier, ClassifierModel, DatasetConfig, PerturbationConfig,
    Predictor, PredictorSpec, TrainConfig, DEFAULT_SWITCH,
};
use overhang_core::stability::{is_stable_static, Physics, DEFAULT_FRICTION};
use overhang_core::trace::{read_jsonl, write_jsonl};
use overhang_core::{TaskSpec, TowerGeometry};
use overhang_server::SessionManager;

#[derive(Parser)]
#[command(name = "overhang", version, about = "Overhang Tower stability, planning and experiment tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Judge a tower with the static oracle. Exits 1 when it is unstable.
    Stability {
        /// Geometry JSON file (`{"blocks": [{"w":..,"h":..,"x":..,"layer":..}]}`).
        geometry: PathBuf,
        /// Gravity tilt from vertical, degrees (positive toward +x).
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        gravity_angle: f64,
        #[arg(long, default_value_t = DEFAULT_FRICTION)]
        mu: f64,
    },
    /// Generate a labeled dataset and train the heuristic classifier.
    Train {
        #[arg(long, default_value_t = 50_000)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Leave the frozen task suite out of the training data.
        #[arg(long)]
        exclude_frozen: bool,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        dataset_out: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Stability probability of a geometry under one predictor.
    Predict {
        geometry: PathBuf,
        #[command(flatten)]
        predictor: PredictorArgs,
    },
    /// Play one task with a model planner and print its moves.
    Plan {
        /// Task id from the task file (defaults to the frozen suite).
        #[arg(long, default_value = "task-00")]
        task: String,
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Lookahead depth; 0 plays myopically.
        #[arg(long, default_value_t = 0)]
        depth: usize,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        predictor: PredictorArgs,
        /// Append the episode trace to this JSONL file.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Write a task file of distinct random sequences.
    GenTasks {
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        seed: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run an experiment grid and write its report.
    RunGrid {
        /// Experiment config JSON; defaults to the three-planner comparison.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = OUTPUT_ENV)]
        out: Option<PathBuf>,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summary metrics for a trace file.
    Report { traces: PathBuf },
    /// Per-step log-likelihood of traces under each predictor.
    EvalTrace {
        traces: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SWITCH)]
        n_switch: usize,
        /// Print advantage over the veridical baseline instead.
        #[arg(long)]
        advantage: bool,
    },
    /// Count valid and stable build orders of a finished tower.
    Gamma { geometry: PathBuf },
    /// Serve the interactive session API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, default_value = "sessions")]
        data_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PredictorKind {
    Veridical,
    Ipe,
    Heuristic,
    Hybrid,
}

#[derive(Args)]
struct PredictorArgs {
    #[arg(long, value_enum, default_value = "veridical")]
    predictor: PredictorKind,
    /// Classifier JSON for heuristic and hybrid predictors.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 0.03)]
    sigma_pos: f64,
    #[arg(long, default_value_t = DEFAULT_SWITCH)]
    n_switch: usize,
}

impl PredictorArgs {
    fn spec(&self) -> PredictorSpec {
        let perturbation = PerturbationConfig {
            samples: self.samples,
            sigma_pos: self.sigma_pos,
            ..PerturbationConfig::default()
        };
        match self.predictor {
            PredictorKind::Veridical => PredictorSpec::Veridical,
            PredictorKind::Ipe => PredictorSpec::Ipe { perturbation },
            PredictorKind::Heuristic => PredictorSpec::Heuristic,
            PredictorKind::Hybrid => PredictorSpec::Hybrid {
                perturbation,
                n_switch: self.n_switch,
            },
        }
    }

    fn model(&self) -> Result<Option<Arc<ClassifierModel>>> {
        self.model.as_deref().map(load_model).transpose()
    }
}

fn load_model(path: &Path) -> Result<Arc<ClassifierModel>> {
    Ok(Arc::new(
        ClassifierModel::load(path).with_context(|| format!("loading model {}", path.display()))?,
    ))
}

fn load_geometry(path: &Path) -> Result<TowerGeometry> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let geometry: TowerGeometry = serde_json::from_str(&text)?;
    geometry.check_layout()?;
    Ok(geometry)
}

fn load_tasks(path: Option<&Path>) -> Result<Vec<TaskSpec>> {
    Ok(match path {
        Some(p) => TaskFile::load(p)?.tasks,
        None => frozen_suite(),
    })
}

fn load_traces(path: &Path) -> Result<Vec<overhang_core::trace::TraceRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_jsonl(BufReader::new(file))?)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Stability {
            geometry,
            gravity_angle,
            mu,
        } => {
            if !(mu >= 0.0 && mu.is_finite()) {
                bail!("friction must be a non-negative number");
            }
            let physics = Physics::tilted(gravity_angle.to_radians(), mu);
            let verdict = is_stable_static(&load_geometry(&geometry)?, &physics);
            let word = if verdict.stable { "stable" } else { "unstable" };
            println!("{word} margin={:.6}", verdict.margin);
            return Ok(if verdict.stable { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
        Command::Train {
            rows,
            seed,
            exclude_frozen,
            hidden,
            dataset_out,
            out,
        } => {
            let mut cfg = DatasetConfig::new(rows, seed);
            if exclude_frozen {
                cfg = cfg.excluding(&frozen_suite());
            }
            let data = generate_dataset(&cfg)?;
            if let Some(path) = dataset_out {
                data.save_csv(&path)?;
            }
            let model = train_classifier(
                &data,
                &TrainConfig {
                    hidden_units: hidden,
                    seed,
                    ..TrainConfig::default()
                },
            )?;
            std::fs::write(&out, model.to_json()?)?;
            let m = &model.metrics;
            println!(
                "rows={} base_rate={:.4} train_acc={:.4} val_acc={:.4} epochs={}",
                rows,
                data.base_rate(),
                m.train_accuracy,
                m.validation_accuracy,
                m.epochs_run
            );
        }
        Command::Predict { geometry, predictor } => {
            let p = predictor
                .spec()
                .resolve(predictor.model()?.as_ref())?
                .probability(&load_geometry(&geometry)?)?;
            println!("{p:.6}");
        }
        Command::Plan {
            task,
            tasks,
            depth,
            beam,
            seed,
            predictor,
            trace_out,
        } => {
            let tasks = load_tasks(tasks.as_deref())?;
            let Some(task) = tasks.iter().find(|t| t.id == task) else {
                bail!("no task with id {task}");
            };
            let mut config = if depth == 0 {
                PlannerConfig::myopic(predictor.spec())
            } else {
                PlannerConfig::lookahead(depth, predictor.spec())
            };
            if beam.is_some() {
                config.beam_width = beam;
            }
            let episode = run_episode(task, &config.with_seed(seed), predictor.model()?.as_ref())?;
            for (i, step) in episode.trace.steps.iter().enumerate() {
                let ok = episode.trace.prefix_stable[i];
                println!(
                    "step {} x={:.3} layer={} {}",
                    i + 2,
                    step.action.x,
                    step.action.layer,
                    if ok { "ok" } else { "collapsed" }
                );
            }
            println!("reward={:.4}", episode.reward);
            if let Some(path) = trace_out {
                let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
                write_jsonl(BufWriter::new(file), std::slice::from_ref(&episode.trace))?;
            }
        }
        Command::GenTasks { n, seed, out } => {
            let json = TaskFile::new(generate_tasks(n, seed)?).to_json()?;
            match out {
                Some(path) => std::fs::write(path, json)?,
                None => print!("{json}"),
            }
        }
        Command::RunGrid {
            config,
            out,
            repetitions,
            seed,
        } => {
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::planner_comparison(seed),
            };
            if let Some(r) = repetitions {
                cfg.repetitions = r;
            }
            if out.is_some() {
                cfg.output_dir = out;
            }
            let output = run_grid(&cfg)?;
            print!("{}", summary_text(&output.results));
        }
        Command::Report { traces } => {
            print!("{}", summarize_runs(&load_traces(&traces)?).to_csv());
        }
        Command::EvalTrace {
            traces,
            model,
            n_switch,
            advantage,
        } => {
            let traces = load_traces(&traces)?;
            let model = load_model(&model)?;
            let ipe = PerturbationConfig::default();
            let predictors = [
                ("veridical", Predictor::Veridical),
                ("ipe", Predictor::Ipe(ipe)),
                ("heuristic", Predictor::Heuristic(model.clone())),
                ("hybrid", Predictor::Hybrid { ipe, model, n_switch }),
            ];
            let named: Vec<(&str, &Predictor)> = predictors.iter().map(|(n, p)| (*n, p)).collect();
            let report = LikelihoodReport::from_traces(&traces, &named)?;
            if advantage {
                print!("{}", advantage_csv(&relative_advantage(&report)?));
            } else {
                print!("{}", report.to_csv());
            }
        }
        Command::Gamma { geometry } => {
            let r = order_dependency(&load_geometry(&geometry)?)?;
            println!(
                "valid_orders={} stable_orders={} gamma={:.6}",
                r.valid_orders, r.stable_orders, r.gamma
            );
        }
        Command::Serve { addr, data_dir } => {
            let manager = SessionManager::open(&data_dir, Arc::new(overhang_core::session::SystemClock))?;
            eprintln!("loaded {} session(s) from {}", manager.len(), data_dir.display());
            tokio::runtime::Runtime::new()?.block_on(overhang_server::serve(addr, Arc::new(manager)))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
