//! Greedy saliency attack, the homophily-restricted objective and the DICE
//! baseline.
//!
//! The attacker maximizes the cross-entropy of test-node predictions against
//! frozen pseudo-labels. A pair's score is `𝒜ᵢⱼ·(1 − 2Aᵢⱼ)`: a positive
//! gradient favours adding an absent edge, a negative one favours removing a
//! present edge.

use std::collections::HashSet;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Value, Var};
use crate::error::{Error, Result};
use crate::graph::{homophily, normalize_adjacency, Graph, LabelData};
use crate::rng::{self, streams};
use crate::surrogate::{self, Architecture, SurrogateParams, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ce,
    Restricted,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(LossKind::Ce),
            "restricted" => Ok(LossKind::Restricted),
            other => Err(Error::InvalidConfig(format!("unknown loss '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    Saliency,
    Dice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub budget_fraction: f64,
    /// Explicit flip count; overrides `budget_fraction` when set.
    pub budget: Option<usize>,
    pub epsilon: f64,
    pub loss: LossKind,
    pub retrain_every: usize,
    pub architecture: Architecture,
    pub seed: u64,
    pub train: TrainConfig,
}

impl AttackConfig {
    pub fn new(architecture: Architecture, seed: u64) -> Self {
        Self {
            budget_fraction: 0.05,
            budget: None,
            epsilon: 1.0,
            loss: LossKind::Ce,
            retrain_every: 1,
            architecture,
            seed,
            train: TrainConfig::for_architecture(architecture),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon {} outside (0, 1]",
                self.epsilon
            )));
        }
        if self.budget.is_none() && !(self.budget_fraction > 0.0 && self.budget_fraction.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "budget fraction {} must be positive",
                self.budget_fraction
            )));
        }
        if self.budget == Some(0) {
            return Err(Error::InvalidConfig("budget must be >= 1".into()));
        }
        if self.retrain_every == 0 {
            return Err(Error::InvalidConfig("retrain_every must be >= 1".into()));
        }
        self.train.validate()
    }

    /// Number of flips `Δ` for a graph with `edge_count` edges.
    pub fn budget_for(&self, edge_count: usize) -> usize {
        self.budget
            .unwrap_or_else(|| (self.budget_fraction * edge_count as f64).round() as usize)
            .max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Add,
    Remove,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Add => "add",
            Action::Remove => "remove",
        }
    }
}

impl std::str::FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(Action::Add),
            "remove" => Ok(Action::Remove),
            other => Err(Error::InvalidConfig(format!("unknown action '{other}'"))),
        }
    }
}

/// Symmetric gradient of the attack objective with respect to the
/// adjacency, zero on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    values: Array2<f64>,
}

impl SaliencyMap {
    /// Symmetrize `(G + Gᵀ)/2` and clear the diagonal.
    pub fn from_gradient(gradient: &Array2<f64>) -> Result<Self> {
        let (n, m) = gradient.dim();
        if n != m {
            return Err(Error::shape("saliency", format!("{n}x{m} gradient")));
        }
        let mut values = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (gradient[[i, j]] + gradient[[j, i]]);
                values[[i, j]] = v;
                values[[j, i]] = v;
            }
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Flip score `𝒜ᵢⱼ·(1 − 2Aᵢⱼ)`.
    pub fn score(&self, graph: &Graph, i: usize, j: usize) -> f64 {
        let v = self.values[[i, j]];
        if graph.has_edge(i, j) {
            -v
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flip {
    pub i: usize,
    pub j: usize,
    pub action: Action,
    pub saliency: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub iter: usize,
    pub i: usize,
    pub j: usize,
    pub action: Action,
    pub saliency: f64,
    pub intra_pseudo: bool,
    pub intra_gt: bool,
    pub h_pseudo: f64,
    pub h_gt: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackTrace {
    pub method: AttackMethod,
    pub config: AttackConfig,
    pub clean_edge_count: usize,
    pub clean_h_pseudo: f64,
    pub clean_h_gt: f64,
    /// Labels used for the `intra_pseudo` flags: ground truth on train
    /// nodes, frozen pseudo-labels elsewhere.
    pub merged_labels: Vec<usize>,
    pub records: Vec<PerturbationRecord>,
}

impl AttackTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn pseudo_targets(labels: &LabelData) -> Result<&[usize]> {
    labels
        .pseudo_labels
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("pseudo-labels have not been computed".into()))
}

fn merged(labels: &LabelData) -> Result<&[usize]> {
    labels
        .merged_labels
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("merged labels have not been computed".into()))
}

/// Mean cross-entropy of test-node logits against the pseudo-labels.
pub fn attack_loss_ce(logits: &Array2<f64>, labels: &LabelData) -> Result<f64> {
    let mut tape = Tape::new();
    let z = tape.input(Value::Dense(logits.clone()))?;
    let l = attack_loss_ce_on_tape(&mut tape, z, labels)?;
    Ok(tape.scalar(l))
}

pub fn attack_loss_ce_on_tape(tape: &mut Tape, logits: Var, labels: &LabelData) -> Result<Var> {
    tape.softmax_cross_entropy(logits, pseudo_targets(labels)?, &labels.test)
}

/// Relaxed homophily of `A + I` with both triangles counted:
/// `(2·intra + n) / (2·|E| + n)`.
pub fn self_loop_homophily_relaxed(graph: &Graph, labels: &[usize]) -> f64 {
    let intra = graph.edges().filter(|&(i, j)| labels[i] == labels[j]).count();
    let n = graph.n_nodes() as f64;
    (2.0 * intra as f64 + n) / (2.0 * graph.edge_count() as f64 + n)
}

/// Loss weights of the restricted objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictionWeights {
    /// Unclamped drop ratio `(h₀ − hₜ)/(ε·h₀)`.
    pub ratio: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl RestrictionWeights {
    pub const UNRESTRICTED: Self = Self {
        ratio: 0.0,
        lambda1: 1.0,
        lambda2: 0.0,
    };

    pub fn new(h_clean: f64, h_current: f64, epsilon: f64) -> Self {
        let ratio = if h_clean > 0.0 {
            (h_clean - h_current) / (epsilon * h_clean)
        } else {
            0.0
        };
        let r = ratio.clamp(0.0, 1.0);
        Self {
            ratio,
            lambda1: (1.0 - r) * (1.0 - r),
            lambda2: r * r,
        }
    }
}

/// The scalar objective whose adjacency gradient drives selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Ce,
    /// `λ₁·CE − λ₂·(h_sl(A⁰) − h_sl(Aᵗ))²` with the weights and `h_sl(A⁰)`
    /// held constant.
    Restricted {
        h_sl_clean: f64,
        weights: RestrictionWeights,
    },
}

impl Objective {
    pub fn weights(&self) -> RestrictionWeights {
        match self {
            Objective::Ce => RestrictionWeights::UNRESTRICTED,
            Objective::Restricted { weights, .. } => *weights,
        }
    }
}

/// Value of the restricted objective on `current`, with weights derived
/// from the pseudo-label homophily of `clean` and `current`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictedLoss {
    pub value: f64,
    pub ce: f64,
    pub l_h: f64,
    pub weights: RestrictionWeights,
}

pub fn restricted_loss(
    logits: &Array2<f64>,
    labels: &LabelData,
    clean: &Graph,
    current: &Graph,
    epsilon: f64,
) -> Result<RestrictedLoss> {
    let m = merged(labels)?;
    let weights = RestrictionWeights::new(
        homophily(clean, m, false)?,
        homophily(current, m, false)?,
        epsilon,
    );
    let ce = attack_loss_ce(logits, labels)?;
    let diff = self_loop_homophily_relaxed(clean, m) - self_loop_homophily_relaxed(current, m);
    let l_h = diff * diff;
    Ok(RestrictedLoss {
        value: weights.lambda1 * ce - weights.lambda2 * l_h,
        ce,
        l_h,
        weights,
    })
}

/// Records the objective on a tape whose adjacency leaf is `adjacency`.
/// Returns `(objective, adjacency leaf)`.
pub fn objective_on_tape(
    tape: &mut Tape,
    graph: &Graph,
    params: &SurrogateParams,
    labels: &LabelData,
    objective: &Objective,
) -> Result<(Var, Var)> {
    let a = tape.param(Value::Sparse(Arc::new(graph.adjacency())))?;
    let a_hat = tape.gcn_normalize(a)?;
    let x = tape.input(Value::Sparse(Arc::new(graph.features().clone())))?;
    let ws = params
        .weights
        .iter()
        .map(|w| tape.input(Value::Dense(w.clone())))
        .collect::<Result<Vec<_>>>()?;
    let logits = surrogate::logits_on_tape(tape, params.architecture, a_hat, x, &ws)?;
    let ce = attack_loss_ce_on_tape(tape, logits, labels)?;
    let root = match objective {
        Objective::Ce => ce,
        Objective::Restricted {
            h_sl_clean,
            weights,
        } => {
            let h = tape.homophily_ratio_relaxed(a, merged(labels)?, true)?;
            let neg_h = tape.scale(h, -1.0)?;
            let h0 = tape.input(Value::Scalar(*h_sl_clean))?;
            let diff = tape.scalar_add(h0, neg_h)?;
            let l_h = tape.scalar_mul(diff, diff)?;
            let penalty = tape.scale(l_h, -weights.lambda2)?;
            let weighted_ce = tape.scale(ce, weights.lambda1)?;
            tape.scalar_add(weighted_ce, penalty)?
        }
    };
    Ok((root, a))
}

/// Dense gradient of `objective` with respect to the adjacency of `graph`.
pub fn adjacency_gradient(
    params: &SurrogateParams,
    graph: &Graph,
    labels: &LabelData,
    objective: &Objective,
) -> Result<(f64, Array2<f64>)> {
    let mut tape = Tape::new();
    let (root, a) = objective_on_tape(&mut tape, graph, params, labels, objective)?;
    let mut grads = tape.backward(root, &[a])?;
    let g = grads.take(a).expect("requested").into_dense();
    Ok((tape.scalar(root), g))
}

pub fn saliency(
    params: &SurrogateParams,
    graph: &Graph,
    labels: &LabelData,
    objective: &Objective,
) -> Result<SaliencyMap> {
    let (_, g) = adjacency_gradient(params, graph, labels, objective)?;
    SaliencyMap::from_gradient(&g)
}

fn better(a: &Flip, b: &Flip) -> bool {
    a.score > b.score || (a.score == b.score && (a.i, a.j) < (b.i, b.j))
}

/// Highest-scoring admissible pair; ties go to the lexicographically
/// smallest `(i, j)`.
pub fn select_perturbation(
    map: &SaliencyMap,
    graph: &Graph,
    forbidden: &HashSet<(usize, usize)>,
) -> Result<Flip> {
    let n = graph.n_nodes();
    if map.n() != n {
        return Err(Error::shape(
            "select_perturbation",
            format!("{}x{} map for {} nodes", map.n(), map.n(), n),
        ));
    }
    (0..n)
        .into_par_iter()
        .filter_map(|i| {
            let row = map.values.row(i);
            let nbrs = graph.neighbors(i);
            let mut best: Option<Flip> = None;
            for j in (i + 1)..n {
                if forbidden.contains(&(i, j)) {
                    continue;
                }
                let present = nbrs.binary_search(&j).is_ok();
                let saliency = row[j];
                let candidate = Flip {
                    i,
                    j,
                    action: if present { Action::Remove } else { Action::Add },
                    saliency,
                    score: if present { -saliency } else { saliency },
                };
                if best.as_ref().is_none_or(|b| better(&candidate, b)) {
                    best = Some(candidate);
                }
            }
            best
        })
        .reduce_with(|a, b| if better(&b, &a) { b } else { a })
        .ok_or(Error::NoAdmissiblePair)
}

/// Train the clean-graph surrogate and attach frozen pseudo-labels, unless
/// they are already present.
pub fn prepare_labels(graph: &Graph, labels: &LabelData, config: &AttackConfig) -> Result<LabelData> {
    if labels.pseudo_labels.is_some() && labels.merged_labels.is_some() {
        return Ok(labels.clone());
    }
    let norm = normalize_adjacency(graph);
    let mut init = rng::substream(config.seed, streams::ATTACK_INIT, 0);
    let outcome = surrogate::train_on_view(
        &norm,
        graph.features(),
        &labels.labels,
        &labels.train,
        labels.k_classes,
        config.architecture,
        &config.train,
        &mut init,
    )?;
    surrogate::pseudo_labels(&outcome.params, &norm, graph.features(), labels)
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

/// Greedy bi-level attack: at every iteration retrain the surrogate on the
/// current graph, take the adjacency saliency of the configured objective,
/// and apply the best admissible flip. Flipped pairs are never revisited.
pub fn run_attack(graph: &Graph, labels: &LabelData, config: &AttackConfig) -> Result<(Graph, AttackTrace)> {
    run_attack_with(graph, labels, config, |_| {})
}

/// [`run_attack`] with a callback invoked after every flip.
pub fn run_attack_with(
    graph: &Graph,
    labels: &LabelData,
    config: &AttackConfig,
    mut on_flip: impl FnMut(&PerturbationRecord),
) -> Result<(Graph, AttackTrace)> {
    config.validate()?;
    let labels = prepare_labels(graph, labels, config)?;
    let m = merged(&labels)?.to_vec();
    let delta = config.budget_for(graph.edge_count());
    let clean_h_pseudo = homophily(graph, &m, false)?;
    let clean_h_gt = homophily(graph, &labels.labels, false)?;
    let h_sl_clean = self_loop_homophily_relaxed(graph, &m);

    let mut current = graph.clone();
    let mut forbidden = HashSet::new();
    let mut records = Vec::with_capacity(delta);
    let mut params: Option<SurrogateParams> = None;
    let mut h_pseudo = clean_h_pseudo;

    for t in 1..=delta {
        if params.is_none() || (t - 1) % config.retrain_every == 0 {
            let norm = normalize_adjacency(&current);
            let mut init = rng::substream(config.seed, streams::ATTACK_INIT, t as u64);
            let outcome = surrogate::train_on_view(
                &norm,
                current.features(),
                &labels.labels,
                &labels.train,
                labels.k_classes,
                config.architecture,
                &config.train,
                &mut init,
            )?;
            params = Some(outcome.params);
        }
        let objective = match config.loss {
            LossKind::Ce => Objective::Ce,
            LossKind::Restricted => Objective::Restricted {
                h_sl_clean,
                weights: RestrictionWeights::new(clean_h_pseudo, h_pseudo, config.epsilon),
            },
        };
        let weights = objective.weights();
        let map = saliency(params.as_ref().expect("trained"), &current, &labels, &objective)?;
        let flip = select_perturbation(&map, &current, &forbidden)?;
        current.flip(flip.i, flip.j);
        forbidden.insert((flip.i, flip.j));
        h_pseudo = homophily(&current, &m, false)?;
        let record = PerturbationRecord {
            iter: t,
            i: flip.i,
            j: flip.j,
            action: flip.action,
            saliency: flip.saliency,
            intra_pseudo: m[flip.i] == m[flip.j],
            intra_gt: labels.labels[flip.i] == labels.labels[flip.j],
            h_pseudo,
            h_gt: homophily(&current, &labels.labels, false)?,
            lambda1: weights.lambda1,
            lambda2: weights.lambda2,
        };
        on_flip(&record);
        records.push(record);
    }

    let trace = AttackTrace {
        method: AttackMethod::Saliency,
        config: config.clone(),
        clean_edge_count: graph.edge_count(),
        clean_h_pseudo,
        clean_h_gt,
        merged_labels: m,
        records,
    };
    Ok((current, trace))
}

/// Random baseline: each flip removes a uniformly random intra-class edge
/// with probability 0.5 and otherwise adds a uniformly random inter-class
/// non-edge, classes taken from the merged labels (ground truth when no
/// pseudo-labels are attached). Falls back to the other move when one
/// candidate set is empty.
pub fn dice_attack(graph: &Graph, labels: &LabelData, delta: usize, seed: u64) -> Result<(Graph, AttackTrace)> {
    let m = labels.merged_or_truth().to_vec();
    let n = graph.n_nodes();
    let mut rng = rng::substream(seed, streams::DICE, 0);
    let mut current = graph.clone();
    let mut forbidden: HashSet<(usize, usize)> = HashSet::new();
    let mut intra_edges: Vec<(usize, usize)> =
        graph.edges().filter(|&(i, j)| m[i] == m[j]).collect();

    let mut class_sizes = vec![0usize; m.iter().max().map_or(0, |&c| c + 1)];
    for &c in &m {
        class_sizes[c] += 1;
    }
    let total_pairs = n * n.saturating_sub(1) / 2;
    let intra_pairs: usize = class_sizes.iter().map(|&s| s * s.saturating_sub(1) / 2).sum();
    let inter_pairs = total_pairs - intra_pairs;
    let mut inter_edges = graph.edges().filter(|&(i, j)| m[i] != m[j]).count();

    let clean_h_pseudo = homophily(graph, &m, false)?;
    let clean_h_gt = homophily(graph, &labels.labels, false)?;
    let mut records = Vec::with_capacity(delta);

    for t in 1..=delta {
        let can_remove = !intra_edges.is_empty();
        let can_add = inter_edges < inter_pairs;
        let remove = match (can_remove, can_add) {
            (false, false) => return Err(Error::ExhaustedCandidates("DICE")),
            (true, false) => true,
            (false, true) => false,
            (true, true) => rng.random_bool(0.5),
        };
        let (i, j, action) = if remove {
            let k = rng.random_range(0..intra_edges.len());
            let (i, j) = intra_edges.swap_remove(k);
            (i, j, Action::Remove)
        } else {
            loop {
                let (i, j) = ordered(rng.random_range(0..n), rng.random_range(0..n));
                if i != j && m[i] != m[j] && !current.has_edge(i, j) && !forbidden.contains(&(i, j)) {
                    inter_edges += 1;
                    break (i, j, Action::Add);
                }
            }
        };
        current.flip(i, j);
        forbidden.insert((i, j));
        records.push(PerturbationRecord {
            iter: t,
            i,
            j,
            action,
            saliency: 0.0,
            intra_pseudo: m[i] == m[j],
            intra_gt: labels.labels[i] == labels.labels[j],
            h_pseudo: homophily(&current, &m, false)?,
            h_gt: homophily(&current, &labels.labels, false)?,
            lambda1: 1.0,
            lambda2: 0.0,
        });
    }

    let mut config = AttackConfig::new(Architecture::Gcn, seed);
    config.budget = Some(delta.max(1));
    let trace = AttackTrace {
        method: AttackMethod::Dice,
        config,
        clean_edge_count: graph.edge_count(),
        clean_h_pseudo,
        clean_h_gt,
        merged_labels: m,
        records,
    };
    Ok((current, trace))
}

/// Re-apply a trace to the clean graph, checking every recorded action.
pub fn replay(clean: &Graph, records: &[PerturbationRecord]) -> Result<Graph> {
    let mut g = clean.clone();
    let n = g.n_nodes();
    let mut seen = HashSet::new();
    for r in records {
        if r.i >= r.j || r.j >= n {
            return Err(Error::ReplayMismatch(format!(
                "iteration {}: invalid pair ({}, {})",
                r.iter, r.i, r.j
            )));
        }
        if !seen.insert((r.i, r.j)) {
            return Err(Error::ReplayMismatch(format!(
                "iteration {}: pair ({}, {}) flipped twice",
                r.iter, r.i, r.j
            )));
        }
        let added = g.flip(r.i, r.j);
        let expected = r.action == Action::Add;
        if added != expected {
            return Err(Error::ReplayMismatch(format!(
                "iteration {}: recorded {} on ({}, {}) but the edge was {}",
                r.iter,
                r.action.as_str(),
                r.i,
                r.j,
                if added { "absent" } else { "present" }
            )));
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn weights_at_reference_points() {
        let w = RestrictionWeights::new(0.8, 0.8, 0.1);
        assert_eq!((w.lambda1, w.lambda2), (1.0, 0.0));
        let w = RestrictionWeights::new(0.8, 0.8 - 0.1 * 0.8, 0.1);
        assert_abs_diff_eq!(w.lambda1, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.lambda2, 1.0, epsilon = 1e-12);
        let w = RestrictionWeights::new(0.8, 0.8 - 0.5 * 0.1 * 0.8, 0.1);
        assert_abs_diff_eq!(w.lambda1, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(w.lambda2, 0.25, epsilon = 1e-12);
        let w = RestrictionWeights::new(0.5, 0.6, 0.5);
        assert_eq!((w.lambda1, w.lambda2), (1.0, 0.0));
        let w = RestrictionWeights::new(0.5, 0.1, 0.5);
        assert_eq!((w.lambda1, w.lambda2), (0.0, 1.0));
    }

    #[test]
    fn selection_prefers_best_add_then_remove() {
        let g = Graph::from_edges(4, &[(0, 1)]).unwrap();
        let mut grad = Array2::zeros((4, 4));
        grad[[2, 3]] = 0.5;
        grad[[3, 2]] = 0.5;
        let map = SaliencyMap::from_gradient(&grad).unwrap();
        let f = select_perturbation(&map, &g, &HashSet::new()).unwrap();
        assert_eq!((f.i, f.j, f.action), (2, 3, Action::Add));

        grad[[0, 1]] = -0.9;
        grad[[1, 0]] = -0.9;
        let map = SaliencyMap::from_gradient(&grad).unwrap();
        let f = select_perturbation(&map, &g, &HashSet::new()).unwrap();
        assert_eq!((f.i, f.j, f.action), (0, 1, Action::Remove));

        let forbidden: HashSet<_> = [(0, 1)].into_iter().collect();
        let f = select_perturbation(&map, &g, &forbidden).unwrap();
        assert_eq!((f.i, f.j), (2, 3));
    }

    #[test]
    fn ties_go_to_smallest_pair() {
        let g = Graph::from_edges(6, &[]).unwrap();
        let mut grad = Array2::zeros((6, 6));
        for (i, j) in [(1, 5), (2, 3)] {
            grad[[i, j]] = 1.0;
            grad[[j, i]] = 1.0;
        }
        let map = SaliencyMap::from_gradient(&grad).unwrap();
        let f = select_perturbation(&map, &g, &HashSet::new()).unwrap();
        assert_eq!((f.i, f.j), (1, 5));
    }

    #[test]
    fn no_admissible_pair() {
        let g = Graph::from_edges(2, &[]).unwrap();
        let map = SaliencyMap::from_gradient(&Array2::zeros((2, 2))).unwrap();
        let forbidden: HashSet<_> = [(0, 1)].into_iter().collect();
        assert!(matches!(
            select_perturbation(&map, &g, &forbidden),
            Err(Error::NoAdmissiblePair)
        ));
    }

    #[test]
    fn saliency_map_is_symmetric_with_zero_diagonal() {
        let grad = array![[3.0, 1.0, 2.0], [0.0, 3.0, -1.0], [4.0, 1.0, 3.0]];
        let map = SaliencyMap::from_gradient(&grad).unwrap();
        assert_eq!(map.get(0, 1), 0.5);
        assert_eq!(map.get(2, 0), 3.0);
        assert_eq!(map.get(1, 2), 0.0);
        assert!((0..3).all(|i| map.get(i, i) == 0.0));
    }

    #[test]
    fn budget_rounding() {
        let c = AttackConfig::new(Architecture::Multihop, 0);
        assert_eq!(c.budget_for(5429), 271);
        assert_eq!(c.budget_for(3), 1);
        let mut c = c;
        c.budget = Some(7);
        assert_eq!(c.budget_for(5429), 7);
    }

    #[test]
    fn replay_rejects_inconsistent_action() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        let rec = PerturbationRecord {
            iter: 1,
            i: 0,
            j: 1,
            action: Action::Add,
            saliency: 0.0,
            intra_pseudo: true,
            intra_gt: true,
            h_pseudo: 0.0,
            h_gt: 0.0,
            lambda1: 1.0,
            lambda2: 0.0,
        };
        assert!(matches!(replay(&g, &[rec]), Err(Error::ReplayMismatch(_))));
    }

    #[test]
    fn dice_with_no_intra_edges_only_adds() {
        let g = Graph::from_edges(6, &[(0, 1), (2, 3)]).unwrap();
        let labels = LabelData::new(vec![0, 1, 0, 1, 0, 1], 2, vec![0, 1], vec![2, 3, 4, 5]).unwrap();
        let (p, trace) = dice_attack(&g, &labels, 4, 3).unwrap();
        assert!(trace.records.iter().all(|r| r.action == Action::Add && !r.intra_gt));
        assert_eq!(p.edge_count(), 6);
        let (same, empty) = dice_attack(&g, &labels, 0, 3).unwrap();
        assert_eq!(same, g);
        assert!(empty.is_empty());
    }
}
