//! Oracles shared by the integration tests: plain dense re-implementations
//! of the forward maps and finite differences.
#![allow(dead_code)]

use std::sync::Arc;

use edgepoison::attack::Objective;
use edgepoison::autodiff::{Tape, Value};
use edgepoison::graph::{Graph, LabelData};
use edgepoison::sparse::Csr;
use edgepoison::surrogate::{self, Architecture, SurrogateParams};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    use rand_distr::{Distribution, StandardNormal};
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Connected random graph: random spanning path plus extra edges with
/// probability `p`.
pub fn random_connected(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = std::collections::BTreeSet::new();
    for w in order.windows(2) {
        edges.insert((w[0].min(w[1]), w[0].max(w[1])));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.insert((i, j));
            }
        }
    }
    edges.into_iter().collect()
}

/// Random attributed graph with labels, a split and pseudo-labels.
pub fn random_instance(n: usize, d: usize, k: usize, seed: u64) -> (Graph, LabelData) {
    let mut r = rng(seed);
    let edges = random_connected(n, 0.25, &mut r);
    let x = gaussian(n, d, &mut r);
    let graph = Graph::new(n, &edges, Csr::from_dense(x.view())).unwrap();
    let labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { r.random_range(0..k) }).collect();
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(&mut r);
    let n_train = n / 3;
    let mut train = nodes[..n_train].to_vec();
    let mut test = nodes[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    let pseudo: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
    let data = LabelData::new(labels, k, train, test).unwrap().with_pseudo_labels(pseudo);
    (graph, data)
}

pub fn random_params(arch: Architecture, d: usize, hidden: usize, k: usize, seed: u64) -> SurrogateParams {
    let mut r = rng(seed);
    let mut p = SurrogateParams::glorot(arch, d, hidden, k, 2, &mut r);
    // Larger weights make the loss surface less flat, which sharpens the
    // finite-difference comparison.
    for w in &mut p.weights {
        w.mapv_inplace(|v| 2.0 * v);
    }
    p
}

/// `D̃^{-1/2}(A+I)D̃^{-1/2}` by plain dense arithmetic.
pub fn dense_normalize(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut s = a.clone();
    for i in 0..n {
        s[[i, i]] += 1.0;
    }
    let d: Vec<f64> = s.rows().into_iter().map(|r| r.sum()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| s[[i, j]] / (d[i] * d[j]).sqrt())
}

pub fn relu(m: Array2<f64>) -> Array2<f64> {
    m.mapv(|v| v.max(0.0))
}

/// Dense oracle of both architectures; the multi-hop layer is built by
/// literal column concatenation.
pub fn dense_logits(a: &Array2<f64>, x: &Array2<f64>, p: &SurrogateParams) -> Array2<f64> {
    let ah = dense_normalize(a);
    match p.architecture {
        Architecture::Gcn => {
            let h = relu(ah.dot(&x.dot(&p.weights[0])));
            ah.dot(&h.dot(&p.weights[1]))
        }
        Architecture::Multihop => {
            let mut h = x.clone();
            for (l, w) in p.weights.iter().enumerate() {
                let one = ah.dot(&h);
                let two = ah.dot(&one);
                let cat = ndarray::concatenate(ndarray::Axis(1), &[h.view(), one.view(), two.view()]).unwrap();
                h = cat.dot(w);
                if l + 1 < p.weights.len() {
                    h = relu(h);
                }
            }
            h
        }
    }
}

pub fn dense_ce(logits: &Array2<f64>, targets: &[usize], nodes: &[usize]) -> f64 {
    let mut total = 0.0;
    for &i in nodes {
        let row = logits.row(i);
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[targets[i]];
    }
    total / nodes.len() as f64
}

/// Attack objective evaluated on a dense (possibly non-binary) adjacency by
/// the oracle arithmetic.
pub fn dense_objective(
    a: &Array2<f64>,
    x: &Array2<f64>,
    p: &SurrogateParams,
    labels: &LabelData,
    objective: &Objective,
) -> f64 {
    let logits = dense_logits(a, x, p);
    let ce = dense_ce(&logits, labels.pseudo_labels.as_ref().unwrap(), &labels.test);
    match objective {
        Objective::Ce => ce,
        Objective::Restricted { h_sl_clean, weights } => {
            let merged = labels.merged_labels.as_ref().unwrap();
            let n = a.nrows();
            let (mut num, mut den) = (n as f64, n as f64);
            for ((i, j), &v) in a.indexed_iter() {
                den += v;
                if merged[i] == merged[j] {
                    num += v;
                }
            }
            let diff = h_sl_clean - num / den;
            weights.lambda1 * ce - weights.lambda2 * diff * diff
        }
    }
}

pub const FD_STEP: f64 = 1e-5;

pub fn central_difference(mut f: impl FnMut(f64) -> f64, x0: f64) -> f64 {
    (f(x0 + FD_STEP) - f(x0 - FD_STEP)) / (2.0 * FD_STEP)
}

/// `|fd − g| / (|g| + 1e-8)`.
pub fn rel_err(fd: f64, g: f64) -> f64 {
    (fd - g).abs() / (g.abs() + 1e-8)
}

/// CE of the surrogate on `targets`/`nodes` as a function of its weights,
/// recorded on a tape; returns (loss, gradients per weight).
pub fn weight_loss_and_grad(
    graph: &Graph,
    params: &SurrogateParams,
    targets: &[usize],
    nodes: &[usize],
) -> (f64, Vec<Array2<f64>>) {
    let norm = edgepoison::graph::normalize_adjacency(graph);
    let mut tape = Tape::new();
    let a = tape.input(Value::Sparse(Arc::new(norm.a_hat.clone()))).unwrap();
    let x = tape.input(Value::Sparse(Arc::new(graph.features().clone()))).unwrap();
    let ws: Vec<_> = params
        .weights
        .iter()
        .map(|w| tape.param(Value::Dense(w.clone())).unwrap())
        .collect();
    let logits = surrogate::logits_on_tape(&mut tape, params.architecture, a, x, &ws).unwrap();
    let loss = tape.softmax_cross_entropy(logits, targets, nodes).unwrap();
    let grads = tape.backward(loss, &ws).unwrap();
    (tape.scalar(loss), ws.iter().map(|w| grads.dense(*w).clone()).collect())
}
