use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use overhang_core::experiment::{generate_tasks, run_grid, ExperimentConfig, TaskSource};
use overhang_core::planners::PlannerConfig;
use overhang_core::predictors::PredictorSpec;
use overhang_core::trace::read_jsonl;

#[test]
fn generated_widths_are_uniform() {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    let mut total = 0;
    for seed in 0..500 {
        for task in generate_tasks(20, seed).unwrap() {
            assert_eq!(task.sequence.len(), 6);
            for b in &task.sequence {
                *counts.entry(b.width().to_bits()).or_default() += 1;
                total += 1;
            }
        }
    }
    assert_eq!(counts.len(), 3);
    for c in counts.values() {
        let f = *c as f64 / total as f64;
        assert!((f - 1.0 / 3.0).abs() < 0.02, "{f}");
    }
}

fn small_config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        tasks: TaskSource::Generate { n: 3, seed: 4 },
        planners: vec![
            PlannerConfig::myopic(PredictorSpec::ipe()),
            PlannerConfig::lookahead(2, PredictorSpec::Veridical),
        ],
        repetitions: 4,
        output_dir: Some(dir.to_path_buf()),
        seed: 17,
        model: Default::default(),
    }
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn grid_reports_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_grid(&small_config(a.path())).unwrap();
    run_grid(&small_config(b.path())).unwrap();
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert!(ta.contains_key("runs.csv") && ta.len() >= 8);
    assert_eq!(ta, tb);
}

#[test]
fn rewards_survive_trace_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_grid(&small_config(dir.path())).unwrap();
    for r in &out.results {
        let path = dir.path().join(r.traces_file.as_ref().unwrap());
        let traces = read_jsonl(BufReader::new(fs::File::open(path).unwrap())).unwrap();
        assert_eq!(traces.len(), r.episodes.len());
        for (t, e) in traces.iter().zip(&r.episodes) {
            assert_eq!(t.recomputed_reward().unwrap(), e.reward);
            assert_eq!(t.task_id, e.task);
        }
    }
    // deterministic lookahead runs once per task, the noisy cell four times
    assert_eq!(out.results[0].episodes.len(), 12);
    assert_eq!(out.results[1].episodes.len(), 3);
    let runs = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 15);
}

#[test]
fn config_json_round_trip() {
    let cfg = ExperimentConfig::planner_comparison(3);
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
    let minimal: ExperimentConfig =
        serde_json::from_str(r#"{"planners": [{"kind": "myopic", "predictor": {"kind": "veridical"}}]}"#).unwrap();
    assert_eq!(minimal.repetitions, 40);
    assert_eq!(minimal.tasks, TaskSource::Frozen);
}
