//! Action selection. The myopic planner maximizes immediate expected
//! overhang; the lookahead planner runs a beam search over placement
//! sequences and scores each path by its survival probability times the
//! overhang it reaches. Episodes re-plan after every placement.

pub mod candidates;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{overhang, Action, DecisionState, TaskSpec, TowerGeometry};
use crate::predictors::{ClassifierModel, Predictor, PredictorSpec};
use crate::stability::is_stable;
use crate::trace::{Outcome, TraceRecord};

pub use candidates::generate_candidates;

/// Values closer than this are treated as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Myopic,
    Lookahead,
}

/// Last-resort ordering between candidates that differ only in the sign
/// of `x`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    PreferNegative,
    PreferPositive,
}

impl TieBreak {
    pub fn mirrored(self) -> Self {
        match self {
            TieBreak::PreferNegative => TieBreak::PreferPositive,
            TieBreak::PreferPositive => TieBreak::PreferNegative,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub kind: PlannerKind,
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// `None` keeps every node (exhaustive expansion).
    #[serde(default = "default_beam")]
    pub beam_width: Option<usize>,
    #[serde(default = "default_step")]
    pub lattice_step: f64,
    pub predictor: PredictorSpec,
    #[serde(default)]
    pub risk_floor: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tie_break: TieBreak,
}

fn default_depth() -> usize {
    1
}

fn default_beam() -> Option<usize> {
    Some(50)
}

fn default_step() -> f64 {
    0.1
}

impl PlannerConfig {
    pub fn myopic(predictor: PredictorSpec) -> Self {
        PlannerConfig {
            kind: PlannerKind::Myopic,
            depth: 1,
            beam_width: default_beam(),
            lattice_step: default_step(),
            predictor,
            risk_floor: 0.0,
            seed: 0,
            tie_break: TieBreak::default(),
        }
    }

    pub fn lookahead(depth: usize, predictor: PredictorSpec) -> Self {
        PlannerConfig {
            kind: PlannerKind::Lookahead,
            depth,
            ..Self::myopic(predictor)
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        PlannerConfig { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("planner: {m}")));
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if self.kind == PlannerKind::Myopic && self.depth != 1 {
            return bad("myopic planner has depth 1");
        }
        if self.beam_width == Some(0) {
            return bad("beam width must be at least 1");
        }
        if !(self.lattice_step > 0.0 && self.lattice_step.is_finite()) {
            return bad("lattice step must be positive");
        }
        if !(0.0..=1.0).contains(&self.risk_floor) {
            return bad("risk floor must be a probability");
        }
        Ok(())
    }

    /// Cell name, e.g. `lookahead-d3/hybrid3`. Non-default search settings
    /// are appended so distinct configurations get distinct names.
    pub fn label(&self) -> String {
        let mut label = match self.kind {
            PlannerKind::Myopic => format!("myopic/{}", self.predictor.label()),
            PlannerKind::Lookahead => format!("lookahead-d{}/{}", self.depth, self.predictor.label()),
        };
        if self.kind == PlannerKind::Lookahead && self.beam_width != default_beam() {
            match self.beam_width {
                Some(b) => label.push_str(&format!("/b{b}")),
                None => label.push_str("/b-inf"),
            }
        }
        if self.lattice_step != default_step() {
            label.push_str(&format!("/step{}", self.lattice_step));
        }
        if self.risk_floor != 0.0 {
            label.push_str(&format!("/floor{}", self.risk_floor));
        }
        if self.tie_break != TieBreak::default() {
            label.push_str("/tie-pos");
        }
        label
    }
}

impl fmt::Display for PlannerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateAction {
    pub action: Action,
    /// Predicted stability probability after the placement.
    pub probability: f64,
    /// Overhang after the placement.
    pub value: f64,
}

impl CandidateAction {
    pub fn expected_value(&self) -> f64 {
        self.probability * self.value
    }
}

#[derive(Clone, Debug)]
pub struct PlanNode {
    pub state: DecisionState,
    pub path: Vec<Action>,
    pub first: CandidateAction,
    pub survival: f64,
    pub value: f64,
}

impl PlanNode {
    pub fn utility(&self) -> f64 {
        self.survival * self.value
    }
}

fn approx_cmp(a: f64, b: f64) -> Ordering {
    if (a - b).abs() <= TIE_TOL {
        Ordering::Equal
    } else {
        a.total_cmp(&b)
    }
}

/// `Greater` means `a` is preferred.
fn tie_cmp(a: &CandidateAction, b: &CandidateAction, tie: TieBreak) -> Ordering {
    approx_cmp(a.probability, b.probability)
        .then_with(|| b.action.x.abs().total_cmp(&a.action.x.abs()))
        .then_with(|| b.action.layer.cmp(&a.action.layer))
        .then_with(|| match tie {
            TieBreak::PreferNegative => b.action.x.total_cmp(&a.action.x),
            TieBreak::PreferPositive => a.action.x.total_cmp(&b.action.x),
        })
}

fn best_by<T>(items: impl IntoIterator<Item = T>, mut cmp: impl FnMut(&T, &T) -> Ordering) -> Option<T> {
    let mut best: Option<T> = None;
    for item in items {
        match &best {
            Some(b) if cmp(&item, b) != Ordering::Greater => {}
            _ => best = Some(item),
        }
    }
    best
}

/// A resolved planner with a per-episode probability cache keyed by the
/// post-placement geometry.
pub struct Planner {
    config: PlannerConfig,
    predictor: Predictor,
    cache: HashMap<u64, f64>,
}

struct Scored {
    candidate: CandidateAction,
    post: TowerGeometry,
}

impl Planner {
    pub fn new(config: PlannerConfig, model: Option<&Arc<ClassifierModel>>) -> Result<Self> {
        let predictor = config.predictor.resolve(model)?;
        Self::with_predictor(config, predictor)
    }

    /// The predictor's Monte Carlo stream is reseeded from `config.seed`.
    pub fn with_predictor(config: PlannerConfig, predictor: Predictor) -> Result<Self> {
        config.validate()?;
        Ok(Planner {
            predictor: predictor.reseeded(config.seed),
            config,
            cache: HashMap::new(),
        })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }

    fn probability(&mut self, post: &TowerGeometry) -> Result<f64> {
        let key = post.fingerprint();
        if let Some(&p) = self.cache.get(&key) {
            return Ok(p);
        }
        let p = self.predictor.probability(post)?;
        self.cache.insert(key, p);
        Ok(p)
    }

    fn scored(&mut self, state: &DecisionState) -> Result<Vec<Scored>> {
        let actions = generate_candidates(state, self.config.lattice_step);
        let mut out = Vec::with_capacity(actions.len());
        for action in actions {
            let post = state.preview_geometry(action)?;
            let probability = self.probability(&post)?;
            let value = overhang(&post)?;
            out.push(Scored {
                candidate: CandidateAction {
                    action,
                    probability,
                    value,
                },
                post,
            });
        }
        let floor = self.config.risk_floor;
        if out.iter().any(|s| s.candidate.probability >= floor) {
            out.retain(|s| s.candidate.probability >= floor);
        }
        Ok(out)
    }

    /// Candidates with their predicted probability and immediate value,
    /// after the risk floor.
    pub fn score_candidates(&mut self, state: &DecisionState) -> Result<Vec<CandidateAction>> {
        Ok(self.scored(state)?.into_iter().map(|s| s.candidate).collect())
    }

    pub fn myopic_select(&mut self, state: &DecisionState) -> Result<Option<CandidateAction>> {
        let tie = self.config.tie_break;
        let candidates = self.score_candidates(state)?;
        Ok(best_by(candidates, |a, b| {
            approx_cmp(a.expected_value(), b.expected_value()).then_with(|| tie_cmp(a, b, tie))
        }))
    }

    pub fn lookahead_select(&mut self, state: &DecisionState) -> Result<Option<CandidateAction>> {
        let tie = self.config.tie_break;
        let horizon = self.config.depth.min(state.remaining().len());
        if horizon == 0 {
            return Ok(None);
        }
        let mut frontier = Vec::new();
        for s in self.scored(state)? {
            frontier.push(PlanNode {
                state: DecisionState::new(s.post, state.remaining()[1..].to_vec()),
                path: vec![s.candidate.action],
                first: s.candidate,
                survival: s.candidate.probability,
                value: s.candidate.value,
            });
        }
        if frontier.is_empty() {
            return Ok(None);
        }
        for depth in 2..=horizon {
            self.prune(&mut frontier);
            let leaf = depth == horizon;
            let mut next = Vec::new();
            for node in frontier {
                let children = self.scored(&node.state)?;
                if children.is_empty() {
                    next.push(node);
                    continue;
                }
                for s in children {
                    let survival = node.survival * s.candidate.probability;
                    let state = if leaf {
                        DecisionState::new(s.post, Vec::new())
                    } else {
                        DecisionState::new(s.post, node.state.remaining()[1..].to_vec())
                    };
                    let mut path = node.path.clone();
                    path.push(s.candidate.action);
                    next.push(PlanNode {
                        state,
                        path,
                        first: node.first,
                        survival,
                        value: s.candidate.value,
                    });
                }
            }
            frontier = next;
        }
        Ok(best_by(frontier, |a, b| {
            approx_cmp(a.utility(), b.utility()).then_with(|| tie_cmp(&a.first, &b.first, tie))
        })
        .map(|n| n.first))
    }

    fn prune(&self, frontier: &mut Vec<PlanNode>) {
        if let Some(width) = self.config.beam_width {
            if frontier.len() > width {
                let tie = self.config.tie_break;
                frontier.sort_by(|a, b| {
                    b.utility()
                        .total_cmp(&a.utility())
                        .then_with(|| tie_cmp(&b.first, &a.first, tie))
                });
                frontier.truncate(width);
            }
        }
    }

    pub fn select(&mut self, state: &DecisionState) -> Result<Option<CandidateAction>> {
        match self.config.kind {
            PlannerKind::Myopic => self.myopic_select(state),
            PlannerKind::Lookahead => self.lookahead_select(state),
        }
    }
}

pub fn myopic_select(
    state: &DecisionState,
    predictor: &Predictor,
    config: &PlannerConfig,
) -> Result<Option<Action>> {
    let mut planner = Planner::with_predictor(config.clone(), predictor.clone())?;
    Ok(planner.myopic_select(state)?.map(|c| c.action))
}

pub fn lookahead_select(
    state: &DecisionState,
    predictor: &Predictor,
    config: &PlannerConfig,
) -> Result<Option<Action>> {
    let mut planner = Planner::with_predictor(config.clone(), predictor.clone())?;
    Ok(planner.lookahead_select(state)?.map(|c| c.action))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub trace: TraceRecord,
    pub reward: f64,
}

pub fn run_episode(
    task: &TaskSpec,
    config: &PlannerConfig,
    model: Option<&Arc<ClassifierModel>>,
) -> Result<EpisodeResult> {
    let planner = Planner::new(config.clone(), model)?;
    run_episode_with(task, planner)
}

/// Receding-horizon rollout judged by the static oracle. Model decision
/// durations are recorded as zero.
pub fn run_episode_with(task: &TaskSpec, mut planner: Planner) -> Result<EpisodeResult> {
    task.check()?;
    let mut trace = TraceRecord::new(task, format!("model:{}", planner.config.label()));
    let mut state = DecisionState::initial(task);
    trace.outcome = loop {
        if state.is_terminal() {
            break Outcome::Completed;
        }
        let Some(choice) = planner.select(&state)? else {
            break Outcome::Aborted;
        };
        let next = state.apply_action(choice.action)?;
        let stable = is_stable(next.geometry());
        trace.push_step(choice.action, 0.0, Vec::new(), stable);
        if !stable {
            break Outcome::Collapsed;
        }
        state = next;
    };
    trace.reward = trace.recomputed_reward()?;
    Ok(EpisodeResult {
        reward: trace.reward,
        trace,
    })
}
