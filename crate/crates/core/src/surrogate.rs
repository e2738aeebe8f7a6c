//! Surrogate classifiers: the two-layer GCN and the multi-hop aggregation
//! model, a deterministic full-batch trainer, and pseudo-label extraction.
//!
//! The multi-hop layer computes `CONCAT[H, ÂH, Â²H] · W`. On the training
//! and attack paths it is evaluated in the factored form
//! `H·W₀ + Â(H·W₁ + Â(H·W₂))` where `W₀, W₁, W₂` are the three row blocks
//! of `W`: identical in value and gradient, but every sparse product acts on
//! a narrow `n × d_{l+1}` matrix and the wide concatenation is never built.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Value, Var};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, Graph, LabelData, NormalizedView};
use crate::rng::{self, streams, Rng};
use crate::sparse::Csr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Gcn,
    Multihop,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(Architecture::Gcn),
            "multihop" => Ok(Architecture::Multihop),
            other => Err(Error::InvalidConfig(format!("unknown architecture '{other}'"))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::Gcn => "gcn",
            Architecture::Multihop => "multihop",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
    GradientDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// L2 penalty coefficient on the first layer's weights.
    pub weight_decay: f64,
    pub hidden_width: usize,
    /// Number of multi-hop layers; ignored by the GCN.
    pub layers: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl TrainConfig {
    pub fn for_architecture(architecture: Architecture) -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            hidden_width: match architecture {
                Architecture::Gcn => 16,
                Architecture::Multihop => 32,
            },
            layers: 2,
            seed: 0,
            optimizer: Optimizer::Adam,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        if self.hidden_width == 0 || self.layers == 0 {
            return Err(Error::InvalidConfig("hidden width and layers must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub architecture: Architecture,
    pub weights: Vec<Array2<f64>>,
    pub input_dim: usize,
    pub hidden_width: usize,
    pub k_classes: usize,
}

impl SurrogateParams {
    /// Layer shapes `(rows, cols)` for the given architecture.
    pub fn layer_shapes(
        architecture: Architecture,
        input_dim: usize,
        hidden_width: usize,
        k_classes: usize,
        layers: usize,
    ) -> Vec<(usize, usize)> {
        match architecture {
            Architecture::Gcn => vec![(input_dim, hidden_width), (hidden_width, k_classes)],
            Architecture::Multihop => {
                let mut widths = vec![input_dim];
                widths.extend(std::iter::repeat_n(hidden_width, layers - 1));
                widths.push(k_classes);
                widths.windows(2).map(|w| (3 * w[0], w[1])).collect()
            }
        }
    }

    pub fn zeros(
        architecture: Architecture,
        input_dim: usize,
        hidden_width: usize,
        k_classes: usize,
        layers: usize,
    ) -> Self {
        let weights = Self::layer_shapes(architecture, input_dim, hidden_width, k_classes, layers)
            .into_iter()
            .map(Array2::zeros)
            .collect();
        Self {
            architecture,
            weights,
            input_dim,
            hidden_width,
            k_classes,
        }
    }

    /// Glorot-uniform initialization.
    pub fn glorot(
        architecture: Architecture,
        input_dim: usize,
        hidden_width: usize,
        k_classes: usize,
        layers: usize,
        rng: &mut Rng,
    ) -> Self {
        let weights = Self::layer_shapes(architecture, input_dim, hidden_width, k_classes, layers)
            .into_iter()
            .map(|(r, c)| {
                let limit = (6.0 / (r + c) as f64).sqrt();
                Array2::from_shape_simple_fn((r, c), || rng.random_range(-limit..limit))
            })
            .collect();
        Self {
            architecture,
            weights,
            input_dim,
            hidden_width,
            k_classes,
        }
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    fn check_shapes(&self, n_features: usize) -> Result<()> {
        if n_features != self.input_dim {
            return Err(Error::shape(
                "surrogate",
                format!("features have {n_features} columns, model expects {}", self.input_dim),
            ));
        }
        let expected = Self::layer_shapes(
            self.architecture,
            self.input_dim,
            self.hidden_width,
            self.k_classes,
            self.layers(),
        );
        for (w, shape) in self.weights.iter().zip(expected) {
            if w.dim() != shape {
                return Err(Error::shape(
                    "surrogate",
                    format!("weight {:?} where {:?} expected", w.dim(), shape),
                ));
            }
        }
        Ok(())
    }
}

/// `relu(Â·(X·W⁰))` then `Â·(H·W¹)`, recorded on `tape`.
pub fn gcn_logits_on_tape(tape: &mut Tape, a_hat: Var, x: Var, weights: &[Var]) -> Result<Var> {
    let xw = tape.matmul(x, weights[0])?;
    let agg = tape.matmul(a_hat, xw)?;
    let hidden = tape.relu(agg)?;
    let hw = tape.matmul(hidden, weights[1])?;
    tape.matmul(a_hat, hw)
}

/// Factored multi-hop layer `H·W₀ + Â(H·W₁ + Â(H·W₂))`.
pub fn multihop_layer_on_tape(tape: &mut Tape, a_hat: Var, h: Var, weight: Var) -> Result<Var> {
    let (rows, _) = tape.value(weight).shape();
    let (_, width) = tape.value(h).shape();
    if rows != 3 * width {
        return Err(Error::shape(
            "multihop_layer",
            format!("weight has {rows} rows for input width {width}"),
        ));
    }
    let w_self = tape.row_block(weight, 0, width)?;
    let w_one = tape.row_block(weight, width, width)?;
    let w_two = tape.row_block(weight, 2 * width, width)?;
    let self_term = tape.matmul(h, w_self)?;
    let one = tape.matmul(h, w_one)?;
    let two = tape.matmul(h, w_two)?;
    let two = tape.matmul(a_hat, two)?;
    let inner = tape.add(one, two)?;
    let hops = tape.matmul(a_hat, inner)?;
    tape.add(self_term, hops)
}

/// Literal multi-hop layer `CONCAT[H, ÂH, Â(ÂH)] · W` for dense `H`.
pub fn multihop_layer_concat_on_tape(
    tape: &mut Tape,
    a_hat: Var,
    h: Var,
    weight: Var,
) -> Result<Var> {
    let one = tape.matmul(a_hat, h)?;
    let two = tape.matmul(a_hat, one)?;
    let cat = tape.concat_columns(&[h, one, two])?;
    tape.matmul(cat, weight)
}

pub fn multihop_logits_on_tape(tape: &mut Tape, a_hat: Var, x: Var, weights: &[Var]) -> Result<Var> {
    let mut h = x;
    for (l, &w) in weights.iter().enumerate() {
        h = multihop_layer_on_tape(tape, a_hat, h, w)?;
        if l + 1 < weights.len() {
            h = tape.relu(h)?;
        }
    }
    Ok(h)
}

pub fn logits_on_tape(
    tape: &mut Tape,
    architecture: Architecture,
    a_hat: Var,
    x: Var,
    weights: &[Var],
) -> Result<Var> {
    match architecture {
        Architecture::Gcn => gcn_logits_on_tape(tape, a_hat, x, weights),
        Architecture::Multihop => multihop_logits_on_tape(tape, a_hat, x, weights),
    }
}

fn eval_logits(norm: &NormalizedView, features: &Csr, params: &SurrogateParams) -> Result<Array2<f64>> {
    params.check_shapes(features.shape().1)?;
    if params.architecture == Architecture::Gcn && params.layers() != 2 {
        return Err(Error::shape("gcn_forward", "GCN has exactly two layers"));
    }
    let mut tape = Tape::new();
    let a = tape.input(Value::Sparse(Arc::new(norm.a_hat.clone())))?;
    let x = tape.input(Value::Sparse(Arc::new(features.clone())))?;
    let ws = params
        .weights
        .iter()
        .map(|w| tape.input(Value::Dense(w.clone())))
        .collect::<Result<Vec<_>>>()?;
    let out = logits_on_tape(&mut tape, params.architecture, a, x, &ws)?;
    Ok(tape.dense(out).clone())
}

pub fn gcn_forward(norm: &NormalizedView, features: &Csr, params: &SurrogateParams) -> Result<Array2<f64>> {
    if params.architecture != Architecture::Gcn {
        return Err(Error::InvalidConfig("gcn_forward needs GCN parameters".into()));
    }
    eval_logits(norm, features, params)
}

pub fn multihop_forward(
    norm: &NormalizedView,
    features: &Csr,
    params: &SurrogateParams,
) -> Result<Array2<f64>> {
    if params.architecture != Architecture::Multihop {
        return Err(Error::InvalidConfig("multihop_forward needs multi-hop parameters".into()));
    }
    eval_logits(norm, features, params)
}

/// Logits of either architecture.
pub fn forward(norm: &NormalizedView, features: &Csr, params: &SurrogateParams) -> Result<Array2<f64>> {
    eval_logits(norm, features, params)
}

/// One multi-hop layer applied to a dense input.
pub fn multihop_layer(norm: &NormalizedView, h_in: &Array2<f64>, weight: &Array2<f64>) -> Result<Array2<f64>> {
    let mut tape = Tape::new();
    let a = tape.input(Value::Sparse(Arc::new(norm.a_hat.clone())))?;
    let h = tape.input(Value::Dense(h_in.clone()))?;
    let w = tape.input(Value::Dense(weight.clone()))?;
    let out = multihop_layer_on_tape(&mut tape, a, h, w)?;
    Ok(tape.dense(out).clone())
}

struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    step: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(weights: &[Array2<f64>]) -> Self {
        Self {
            m: weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            v: weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            step: 0,
        }
    }

    fn update(&mut self, weights: &mut [Array2<f64>], grads: &[Array2<f64>], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for ((w, g), (m, v)) in weights
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(w)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                });
        }
    }
}

/// Result of a training run: the fitted parameters and the per-epoch
/// training loss (evaluated before each update).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: SurrogateParams,
    pub losses: Vec<f64>,
}

/// Full-batch training on a precomputed normalization. `targets` holds one
/// class per node; only `train_nodes` contribute to the loss.
pub fn train_on_view(
    norm: &NormalizedView,
    features: &Csr,
    targets: &[usize],
    train_nodes: &[usize],
    k_classes: usize,
    architecture: Architecture,
    config: &TrainConfig,
    init_rng: &mut Rng,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_nodes.is_empty() {
        return Err(Error::InvalidConfig("train mask is empty".into()));
    }
    let input_dim = features.shape().1;
    let layers = match architecture {
        Architecture::Gcn => 2,
        Architecture::Multihop => config.layers,
    };
    let mut params = SurrogateParams::glorot(
        architecture,
        input_dim,
        config.hidden_width,
        k_classes,
        layers,
        init_rng,
    );
    let a_hat = Arc::new(norm.a_hat.clone());
    let x = Arc::new(features.clone());
    let mut adam = Adam::new(&params.weights);
    let mut losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut tape = Tape::new();
        let diverged = |e: Error| match e {
            Error::NonFiniteValue(_) => Error::NonFiniteLoss { epoch },
            other => other,
        };
        let a = tape.input(Value::Sparse(a_hat.clone())).map_err(diverged)?;
        let xv = tape.input(Value::Sparse(x.clone())).map_err(diverged)?;
        let ws = params
            .weights
            .iter()
            .map(|w| tape.param(Value::Dense(w.clone())))
            .collect::<Result<Vec<_>>>()
            .map_err(diverged)?;
        let logits = logits_on_tape(&mut tape, architecture, a, xv, &ws).map_err(diverged)?;
        let loss = tape
            .softmax_cross_entropy(logits, targets, train_nodes)
            .map_err(diverged)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        losses.push(value);
        let mut grads = tape.backward(loss, &ws)?;
        let mut gs: Vec<Array2<f64>> = ws
            .iter()
            .map(|w| grads.take(*w).expect("requested").into_dense())
            .collect();
        if config.weight_decay > 0.0 {
            gs[0].scaled_add(config.weight_decay, &params.weights[0]);
        }
        match config.optimizer {
            Optimizer::Adam => adam.update(&mut params.weights, &gs, config.learning_rate),
            Optimizer::GradientDescent => {
                for (w, g) in params.weights.iter_mut().zip(&gs) {
                    w.scaled_add(-config.learning_rate, g);
                }
            }
        }
        if params.weights.iter().any(|w| w.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFiniteLoss { epoch });
        }
    }
    Ok(TrainOutcome { params, losses })
}

/// Train on the ground-truth labels of `labels.train`, seeded from
/// `config.seed`.
pub fn train(
    graph: &Graph,
    labels: &LabelData,
    architecture: Architecture,
    config: &TrainConfig,
) -> Result<SurrogateParams> {
    train_traced(graph, labels, architecture, config).map(|o| o.params)
}

pub fn train_traced(
    graph: &Graph,
    labels: &LabelData,
    architecture: Architecture,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let norm = normalize_adjacency(graph);
    let mut rng = rng::substream(config.seed, streams::TRAIN_INIT, 0);
    train_on_view(
        &norm,
        graph.features(),
        &labels.labels,
        &labels.train,
        labels.k_classes,
        architecture,
        config,
        &mut rng,
    )
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn argmax_rows(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                .0
        })
        .collect()
}

pub fn accuracy(predictions: &[usize], truth: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let hits = nodes.iter().filter(|&&i| predictions[i] == truth[i]).count();
    hits as f64 / nodes.len() as f64
}

/// Label every node with the clean-graph prediction and assemble the merged
/// label set.
pub fn pseudo_labels(
    params: &SurrogateParams,
    norm: &NormalizedView,
    features: &Csr,
    labels: &LabelData,
) -> Result<LabelData> {
    let logits = forward(norm, features, params)?;
    Ok(labels.clone().with_pseudo_labels(argmax_rows(&logits)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_sbm;
    use ndarray::array;

    #[test]
    fn zero_weights_give_zero_logits() {
        let (g, l) = generate_sbm(20, 2, 0.3, 0.05, 1).unwrap();
        let norm = normalize_adjacency(&g);
        for arch in [Architecture::Gcn, Architecture::Multihop] {
            let p = SurrogateParams::zeros(arch, g.feature_dim(), 8, l.k_classes, 2);
            let z = forward(&norm, g.features(), &p).unwrap();
            assert!(z.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_node_gcn_by_hand() {
        let g = Graph::new(1, &[], Csr::from_dense(array![[1.0]].view())).unwrap();
        let p = SurrogateParams {
            architecture: Architecture::Gcn,
            weights: vec![array![[1.0]], array![[2.0, 0.0]]],
            input_dim: 1,
            hidden_width: 1,
            k_classes: 2,
        };
        let z = gcn_forward(&normalize_adjacency(&g), g.features(), &p).unwrap();
        assert_eq!(z, array![[2.0, 0.0]]);
    }

    #[test]
    fn multihop_layer_shapes_and_passthrough() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let norm = normalize_adjacency(&g);
        let h = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.0], [-2.0, 4.0]];
        let mut w = Array2::zeros((6, 2));
        w[[0, 0]] = 1.0;
        w[[1, 1]] = 1.0;
        assert_eq!(multihop_layer(&norm, &h, &w).unwrap(), h);
        assert!(multihop_layer(&norm, &h, &Array2::zeros((5, 2))).is_err());
    }

    #[test]
    fn edgeless_multihop_sums_blocks() {
        let g = Graph::from_edges(3, &[]).unwrap();
        let norm = normalize_adjacency(&g);
        let h = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let w = array![[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]];
        let expected = h.dot(&array![[1.0 + 3.0 + 5.0], [2.0 + 4.0 + 6.0]]);
        let out = multihop_layer(&norm, &h, &w).unwrap();
        for (a, b) in out.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_example() {
        assert_eq!(argmax_rows(&array![[0.1, 2.0, -1.0], [1.0, 1.0, 0.0]]), vec![1, 0]);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::for_architecture(Architecture::Gcn);
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::for_architecture(Architecture::Gcn);
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
    }
}
