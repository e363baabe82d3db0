//! Aggregate statistics over a batch of traces.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::trace::TraceRecord;

use super::order::order_dependency;

/// Mean and standard error of a sample. The standard error is reported as
/// zero when it is undefined (`n < 2`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub sem: f64,
    pub n: usize,
}

impl Estimate {
    /// Order-independent: values are sorted before summation.
    pub fn of(values: &[f64]) -> Option<Estimate> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let sem = if n < 2 {
            0.0
        } else {
            let mut sq: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
            sq.sort_by(f64::total_cmp);
            (sq.iter().sum::<f64>() / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        };
        Some(Estimate { mean, sem, n })
    }

    pub fn sem_defined(&self) -> bool {
        self.n >= 2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n: usize,
    pub reward: Option<Estimate>,
    pub stable_proportion: Option<Estimate>,
    /// Over successful trials only.
    pub overhang: Option<Estimate>,
    pub decision_time: Option<Estimate>,
    /// Over completed towers only.
    pub gamma: Option<Estimate>,
}

pub fn summarize_runs(traces: &[TraceRecord]) -> RunSummary {
    let rewards: Vec<f64> = traces.iter().map(|t| t.reward).collect();
    let success: Vec<f64> = traces.iter().map(|t| f64::from(u8::from(t.is_success()))).collect();
    let overhangs: Vec<f64> = traces.iter().filter(|t| t.is_success()).map(|t| t.reward).collect();
    let times: Vec<f64> = traces.iter().filter_map(|t| t.mean_decision_time()).collect();
    let gammas: Vec<f64> = traces
        .iter()
        .filter(|t| t.is_success())
        .filter_map(|t| order_dependency(&t.final_geometry().ok()?).ok())
        .map(|r| r.gamma)
        .collect();
    RunSummary {
        n: traces.len(),
        reward: Estimate::of(&rewards),
        stable_proportion: Estimate::of(&success),
        overhang: Estimate::of(&overhangs),
        decision_time: Estimate::of(&times),
        gamma: Estimate::of(&gammas),
    }
}

impl RunSummary {
    pub fn rows(&self) -> [(&'static str, Option<Estimate>); 5] {
        [
            ("reward", self.reward),
            ("stable_proportion", self.stable_proportion),
            ("overhang", self.overhang),
            ("decision_time", self.decision_time),
            ("gamma", self.gamma),
        ]
    }

    /// `metric,mean,sem,n`; metrics without data get empty cells and n = 0.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,mean,sem,n\n");
        for (name, e) in self.rows() {
            match e {
                Some(e) => writeln!(out, "{name},{},{},{}", e.mean, e.sem, e.n),
                None => writeln!(out, "{name},,,0"),
            }
            .expect("writing to a String");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Action, BlockSpec, TaskSpec};
    use crate::trace::Outcome;

    fn trace(reward: f64, outcome: Outcome) -> TraceRecord {
        let task = TaskSpec::new("t", vec![BlockSpec::MEDIUM; 2]).unwrap();
        let mut t = TraceRecord::new(&task, "test");
        t.push_step(Action::new(0.0, 1), 2.0, vec![], outcome == Outcome::Completed);
        t.reward = reward;
        t.outcome = outcome;
        t
    }

    #[test]
    fn single_trace_has_zero_sem() {
        let s = summarize_runs(&[trace(1.15, Outcome::Completed)]);
        let r = s.reward.unwrap();
        assert_eq!((r.mean, r.sem, r.n), (1.15, 0.0, 1));
        assert!(!r.sem_defined());
    }

    #[test]
    fn overhang_counts_successes_only() {
        let s = summarize_runs(&[trace(0.0, Outcome::Collapsed), trace(2.0, Outcome::Completed)]);
        assert_eq!(s.stable_proportion.unwrap().mean, 0.5);
        assert_eq!(s.overhang.unwrap().mean, 2.0);
        assert_eq!(s.gamma.unwrap().mean, 0.0);
        assert!(s.to_csv().starts_with("metric,mean,sem,n\nreward,1,"));
    }

    #[test]
    fn sem_arithmetic() {
        let e = Estimate::of(&[0.8, 1.0, 1.2]).unwrap();
        assert!((e.mean - 1.0).abs() < 1e-12);
        assert!((e.sem - 0.2 / 3f64.sqrt()).abs() < 1e-12);
        assert!(Estimate::of(&[]).is_none());
    }
}
