//! Per-step log-likelihood of executed actions under a stability
//! predictor, and the advantage of each predictor over the veridical
//! baseline.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictors::{clamp_probability, Predictor};
use crate::trace::TraceRecord;

pub const BASELINE: &str = "veridical";

/// Log-likelihood of one executed placement. `step` is the 1-based
/// position of the placed block in the task sequence, so the first
/// placement after the base is step 2 and equals the post-placement block
/// count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLikelihood {
    pub step: usize,
    pub log_likelihood: f64,
}

pub fn trace_log_likelihood(trace: &TraceRecord, predictor: &Predictor) -> Result<Vec<StepLikelihood>> {
    let (states, _) = trace.replay()?;
    states
        .iter()
        .zip(&trace.steps)
        .enumerate()
        .map(|(i, (state, step))| {
            let p = predictor.predict(state, step.action)?;
            Ok(StepLikelihood {
                step: i + 2,
                log_likelihood: clamp_probability(p).ln(),
            })
        })
        .collect()
}

/// Mean over the executed steps of one trace.
pub fn mean_log_likelihood(trace: &TraceRecord, predictor: &Predictor) -> Result<Option<f64>> {
    let steps = trace_log_likelihood(trace, predictor)?;
    Ok((!steps.is_empty())
        .then(|| steps.iter().map(|s| s.log_likelihood).sum::<f64>() / steps.len() as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodRow {
    pub step: usize,
    pub model: String,
    pub mean_ll: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodReport {
    pub rows: Vec<LikelihoodRow>,
}

impl LikelihoodReport {
    /// Rows ordered by model (as given), then step.
    pub fn from_traces(traces: &[TraceRecord], models: &[(&str, &Predictor)]) -> Result<Self> {
        let mut rows = Vec::new();
        for (name, predictor) in models {
            let mut by_step: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for trace in traces {
                for s in trace_log_likelihood(trace, predictor)? {
                    by_step.entry(s.step).or_default().push(s.log_likelihood);
                }
            }
            for (step, mut values) in by_step {
                values.sort_by(f64::total_cmp);
                rows.push(LikelihoodRow {
                    step,
                    model: name.to_string(),
                    mean_ll: values.iter().sum::<f64>() / values.len() as f64,
                    n: values.len(),
                });
            }
        }
        Ok(LikelihoodReport { rows })
    }

    pub fn model_rows<'a>(&'a self, model: &'a str) -> impl Iterator<Item = &'a LikelihoodRow> + 'a {
        self.rows.iter().filter(move |r| r.model == model)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,model,mean_ll,n\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.step, r.model, r.mean_ll, r.n).expect("writing to a String");
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvantageRow {
    pub step: usize,
    pub model: String,
    pub advantage: f64,
    pub n: usize,
}

/// Model mean log-likelihood minus the veridical one, per step.
pub fn relative_advantage(report: &LikelihoodReport) -> Result<Vec<AdvantageRow>> {
    let baseline: BTreeMap<usize, f64> = report.model_rows(BASELINE).map(|r| (r.step, r.mean_ll)).collect();
    if baseline.is_empty() {
        return Err(Error::MissingBaseline(BASELINE.into()));
    }
    report
        .rows
        .iter()
        .map(|r| {
            let base = baseline
                .get(&r.step)
                .ok_or_else(|| Error::MissingBaseline(format!("{BASELINE} at step {}", r.step)))?;
            Ok(AdvantageRow {
                step: r.step,
                model: r.model.clone(),
                advantage: r.mean_ll - base,
                n: r.n,
            })
        })
        .collect()
}

pub fn advantage_csv(rows: &[AdvantageRow]) -> String {
    let mut out = String::from("step,model,advantage,n\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.step, r.model, r.advantage, r.n).expect("writing to a String");
    }
    out
}
