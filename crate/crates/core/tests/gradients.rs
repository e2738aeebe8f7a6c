//! Analytic gradients against central finite differences and dense oracles.

mod common;

use std::sync::Arc;

use common::*;
use edgepoison::attack::{self, adjacency_gradient, Objective, RestrictionWeights};
use edgepoison::autodiff::{Tape, Value, Var};
use edgepoison::graph::{normalize_adjacency, Graph};
use edgepoison::sparse::Csr;
use edgepoison::surrogate::{self, Architecture, SurrogateParams};
use ndarray::Array2;
use proptest::prelude::*;

/// Check `build` (a scalar function of one dense leaf) against finite
/// differences at every entry.
fn check_unary(leaf: &Array2<f64>, build: impl Fn(&mut Tape, Var) -> Var, tol: f64) {
    let eval = |m: &Array2<f64>| {
        let mut t = Tape::new();
        let x = t.input(Value::Dense(m.clone())).unwrap();
        let root = build(&mut t, x);
        t.scalar(root)
    };
    let mut t = Tape::new();
    let x = t.param(Value::Dense(leaf.clone())).unwrap();
    let root = build(&mut t, x);
    let g = t.backward(root, &[x]).unwrap();
    let g = g.dense(x);
    for idx in ndarray::indices(leaf.dim()) {
        let fd = central_difference(
            |v| {
                let mut m = leaf.clone();
                m[idx] = v;
                eval(&m)
            },
            leaf[idx],
        );
        let e = rel_err(fd, g[idx]);
        assert!(e < tol, "entry {idx:?}: fd {fd} vs analytic {} (rel {e})", g[idx]);
    }
}

fn weighted_sum(t: &mut Tape, v: Var, w: &Array2<f64>) -> Var {
    let c = t.input(Value::Dense(w.clone())).unwrap();
    let h = t.hadamard(v, c).unwrap();
    t.sum(h).unwrap()
}

#[test]
fn every_primitive_matches_finite_differences() {
    let mut r = rng(11);
    let a = gaussian(5, 5, &mut r);
    let b = gaussian(5, 5, &mut r);
    let proj = gaussian(5, 5, &mut r);
    let tall = gaussian(5, 15, &mut r);
    let proj_wide = gaussian(5, 15, &mut r);
    let tol = 1e-4;

    check_unary(&a, |t, x| {
        let c = t.input(Value::Dense(b.clone())).unwrap();
        let m = t.matmul(x, c).unwrap();
        weighted_sum(t, m, &proj)
    }, tol);
    check_unary(&a, |t, x| {
        let c = t.input(Value::Dense(b.clone())).unwrap();
        let m = t.matmul(c, x).unwrap();
        weighted_sum(t, m, &proj)
    }, tol);
    let sparse_b = Arc::new(Csr::from_dense(b.view()));
    check_unary(&a, |t, x| {
        let c = t.input(Value::Sparse(sparse_b.clone())).unwrap();
        let m = t.matmul(c, x).unwrap();
        weighted_sum(t, m, &proj)
    }, tol);
    check_unary(&a, |t, x| {
        let c = t.input(Value::Dense(b.clone())).unwrap();
        let m = t.add(x, c).unwrap();
        let m = t.hadamard(m, x).unwrap();
        weighted_sum(t, m, &proj)
    }, tol);
    check_unary(&a, |t, x| {
        let c = t.input(Value::Dense(b.clone())).unwrap();
        let m = t.concat_columns(&[x, c, x]).unwrap();
        weighted_sum(t, m, &proj_wide)
    }, tol);
    check_unary(&tall, |t, x| {
        let tr = t.transpose(x).unwrap();
        let block = t.row_block(tr, 5, 5).unwrap();
        weighted_sum(t, block, &proj)
    }, tol);
    check_unary(&a, |t, x| {
        let m = t.relu(x).unwrap();
        let m = t.scale(m, -1.5).unwrap();
        weighted_sum(t, m, &proj)
    }, tol);
    check_unary(&a, |t, x| {
        let s = t.sum(x).unwrap();
        let s2 = t.scalar_mul(s, s).unwrap();
        let c = t.input(Value::Scalar(0.3)).unwrap();
        t.scalar_add(s2, c).unwrap()
    }, tol);
    let targets = [0, 4, 2, 2, 1];
    check_unary(&a, |t, x| t.softmax_cross_entropy(x, &targets, &[0, 2, 3]).unwrap(), tol);
    let nonneg = a.mapv(f64::abs);
    let sym = &nonneg + &nonneg.t();
    check_unary(&sym, |t, x| {
        let n = t.gcn_normalize(x).unwrap();
        weighted_sum(t, n, &proj)
    }, tol);
    check_unary(&sym, |t, x| t.homophily_ratio_relaxed(x, &[0, 1, 0, 1, 1], false).unwrap(), tol);
    check_unary(&sym, |t, x| t.homophily_ratio_relaxed(x, &[0, 1, 0, 2, 1], true).unwrap(), tol);
}

#[test]
fn surrogate_forward_matches_dense_oracle() {
    for arch in [Architecture::Gcn, Architecture::Multihop] {
        let (g, _) = random_instance(6, 4, 3, 5);
        let p = random_params(arch, 4, 5, 3, 9);
        let norm = normalize_adjacency(&g);
        let ours = surrogate::forward(&norm, g.features(), &p).unwrap();
        let oracle = dense_logits(&g.dense_adjacency(), &g.features().to_dense(), &p);
        for (a, b) in ours.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-12, "{arch}: {a} vs {b}");
        }
    }
}

#[test]
fn factored_and_concatenated_multihop_layers_agree() {
    let (g, _) = random_instance(9, 3, 2, 21);
    let norm = normalize_adjacency(&g);
    let mut r = rng(4);
    let h = gaussian(9, 3, &mut r);
    let w = gaussian(9, 4, &mut r);
    let factored = surrogate::multihop_layer(&norm, &h, &w).unwrap();
    let mut t = Tape::new();
    let a = t.input(Value::Sparse(Arc::new(norm.a_hat.clone()))).unwrap();
    let hv = t.input(Value::Dense(h)).unwrap();
    let wv = t.input(Value::Dense(w)).unwrap();
    let out = surrogate::multihop_layer_concat_on_tape(&mut t, a, hv, wv).unwrap();
    for (x, y) in factored.iter().zip(t.dense(out).iter()) {
        assert!((x - y).abs() < 1e-12);
    }
}

/// Attack objective gradients w.r.t. every adjacency entry, taken through
/// the sparse adjacency leaf, against finite differences of the dense
/// oracle.
fn check_adjacency_gradient(arch: Architecture, objective: Objective, graph: &Graph, seed: u64) -> f64 {
    let (_, labels) = random_instance(graph.n_nodes(), graph.feature_dim(), 3, seed);
    let p = random_params(arch, graph.feature_dim(), 6, 3, seed + 1);
    let (value, grad) = adjacency_gradient(&p, graph, &labels, &objective).unwrap();
    let a0 = graph.dense_adjacency();
    let x = graph.features().to_dense();
    let direct = dense_objective(&a0, &x, &p, &labels, &objective);
    assert!((value - direct).abs() < 1e-10, "objective value {value} vs oracle {direct}");
    let mut worst: f64 = 0.0;
    for idx in ndarray::indices(a0.dim()) {
        let fd = central_difference(
            |v| {
                let mut a = a0.clone();
                a[idx] = v;
                dense_objective(&a, &x, &p, &labels, &objective)
            },
            a0[idx],
        );
        worst = worst.max(rel_err(fd, grad[idx]));
    }
    worst
}

#[test]
fn ce_adjacency_gradient_matches_finite_differences() {
    for (arch, seed) in [(Architecture::Gcn, 1), (Architecture::Multihop, 2)] {
        let (g, _) = random_instance(12, 4, 3, seed);
        let worst = check_adjacency_gradient(arch, Objective::Ce, &g, seed + 10);
        assert!(worst < 1e-3, "{arch}: worst relative error {worst}");
    }
}

#[test]
fn restricted_adjacency_gradient_matches_finite_differences() {
    let (mut g, labels) = random_instance(12, 4, 3, 3);
    let merged = labels.merged_labels.clone().unwrap();
    let clean_h = attack::self_loop_homophily_relaxed(&g, &merged);
    g.flip(0, 7);
    g.flip(2, 9);
    let objective = Objective::Restricted {
        h_sl_clean: clean_h,
        weights: RestrictionWeights {
            ratio: 0.5,
            lambda1: 0.25,
            lambda2: 0.25,
        },
    };
    for arch in [Architecture::Gcn, Architecture::Multihop] {
        let worst = check_adjacency_gradient(arch, objective, &g, 13);
        assert!(worst < 1e-3, "{arch}: worst relative error {worst}");
    }
    let penalty_only = Objective::Restricted {
        h_sl_clean: clean_h,
        weights: RestrictionWeights {
            ratio: 1.0,
            lambda1: 0.0,
            lambda2: 1.0,
        },
    };
    let worst = check_adjacency_gradient(Architecture::Gcn, penalty_only, &g, 13);
    assert!(worst < 1e-3, "homophily penalty: worst relative error {worst}");
}

#[test]
fn weight_gradients_match_finite_differences() {
    for arch in [Architecture::Gcn, Architecture::Multihop] {
        let (g, labels) = random_instance(10, 3, 3, 8);
        let p = random_params(arch, 3, 4, 3, 17);
        let targets = labels.labels.clone();
        let (_, grads) = weight_loss_and_grad(&g, &p, &targets, &labels.train);
        for (l, w) in p.weights.iter().enumerate() {
            for idx in ndarray::indices(w.dim()) {
                let fd = central_difference(
                    |v| {
                        let mut q: SurrogateParams = p.clone();
                        q.weights[l][idx] = v;
                        weight_loss_and_grad(&g, &q, &targets, &labels.train).0
                    },
                    w[idx],
                );
                let e = rel_err(fd, grads[l][idx]);
                assert!(e < 1e-4, "{arch} layer {l} {idx:?}: fd {fd} vs {} ({e})", grads[l][idx]);
            }
        }
    }
}

#[test]
fn gradient_is_linear_in_the_objective() {
    let (g, labels) = random_instance(10, 3, 3, 31);
    let p = random_params(Architecture::Gcn, 3, 4, 3, 32);
    let x = Arc::new(g.features().clone());
    let run = |a: f64, b: f64| {
        let mut t = Tape::new();
        let adj = t.param(Value::Sparse(Arc::new(g.adjacency()))).unwrap();
        let ah = t.gcn_normalize(adj).unwrap();
        let xv = t.input(Value::Sparse(x.clone())).unwrap();
        let ws: Vec<_> = p.weights.iter().map(|w| t.input(Value::Dense(w.clone())).unwrap()).collect();
        let z = surrogate::logits_on_tape(&mut t, p.architecture, ah, xv, &ws).unwrap();
        let l1 = t.softmax_cross_entropy(z, labels.pseudo_labels.as_ref().unwrap(), &labels.test).unwrap();
        let l2 = t.homophily_ratio_relaxed(adj, labels.merged_labels.as_ref().unwrap(), true).unwrap();
        let s1 = t.scale(l1, a).unwrap();
        let s2 = t.scale(l2, b).unwrap();
        let root = t.scalar_add(s1, s2).unwrap();
        t.backward(root, &[adj]).unwrap().dense(adj).clone()
    };
    let (g1, g2, mix) = (run(1.0, 0.0), run(0.0, 1.0), run(2.0, -3.0));
    let combined = &g1 * 2.0 - &g2 * 3.0;
    for (u, v) in combined.iter().zip(mix.iter()) {
        assert!((u - v).abs() < 1e-12 * (1.0 + u.abs()));
    }
}

#[test]
fn adjacency_gradient_of_symmetrized_input_is_symmetric() {
    let (g, labels) = random_instance(9, 3, 3, 41);
    let p = random_params(Architecture::Multihop, 3, 4, 3, 42);
    let mut t = Tape::new();
    let raw = t.param(Value::Dense(g.dense_adjacency())).unwrap();
    let tr = t.transpose(raw).unwrap();
    let sum = t.add(raw, tr).unwrap();
    let sym = t.scale(sum, 0.5).unwrap();
    let ah = t.gcn_normalize(sym).unwrap();
    let xv = t.input(Value::Sparse(Arc::new(g.features().clone()))).unwrap();
    let ws: Vec<_> = p.weights.iter().map(|w| t.input(Value::Dense(w.clone())).unwrap()).collect();
    let z = surrogate::logits_on_tape(&mut t, p.architecture, ah, xv, &ws).unwrap();
    let l = t.softmax_cross_entropy(z, labels.pseudo_labels.as_ref().unwrap(), &labels.test).unwrap();
    let grads = t.backward(l, &[raw]).unwrap();
    let m = grads.dense(raw);
    for ((i, j), v) in m.indexed_iter() {
        assert!((v - m[[j, i]]).abs() < 1e-14);
    }
}

#[test]
fn backward_is_bit_reproducible() {
    let (g, labels) = random_instance(10, 3, 3, 51);
    let p = random_params(Architecture::Multihop, 3, 4, 3, 52);
    let a = adjacency_gradient(&p, &g, &labels, &Objective::Ce).unwrap().1;
    let b = adjacency_gradient(&p, &g, &labels, &Objective::Ce).unwrap().1;
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ce_gradient_finite_differences_on_random_graphs(seed in 0u64..10_000, n in 4usize..=10) {
        let (g, _) = random_instance(n, 3, 3, seed);
        let worst = check_adjacency_gradient(Architecture::Gcn, Objective::Ce, &g, seed ^ 0x55);
        prop_assert!(worst < 1e-3, "worst relative error {}", worst);
    }
}

#[test]
fn multihop_passthrough_reconstructs_features_but_gcn_cannot() {
    let g = Graph::new(
        5,
        &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)],
        Csr::from_dense(ndarray::array![[1.0, 0.0], [0.0, 1.0], [2.0, -1.0], [0.5, 0.5], [-1.0, 3.0]].view()),
    )
    .unwrap();
    let norm = normalize_adjacency(&g);
    let x = g.features().to_dense();
    let mut w = Array2::zeros((6, 2));
    w[[0, 0]] = 1.0;
    w[[1, 1]] = 1.0;
    let p = SurrogateParams {
        architecture: Architecture::Multihop,
        weights: vec![w],
        input_dim: 2,
        hidden_width: 2,
        k_classes: 2,
    };
    let out = surrogate::multihop_forward(&norm, g.features(), &p).unwrap();
    assert_eq!(out, x);

    // With the relu inactive a GCN computes Â·Â·X·W⁰·W¹; the least-squares
    // optimum of ‖Â·Â·X·W − X‖ over all W is strictly positive here.
    let ah = norm.a_hat.to_dense();
    let aax = ah.dot(&ah).dot(&x);
    let m = nalgebra::DMatrix::from_fn(5, 2, |i, j| aax[[i, j]]);
    let target = nalgebra::DMatrix::from_fn(5, 2, |i, j| x[[i, j]]);
    let best = m.clone().svd(true, true).solve(&target, 1e-12).unwrap();
    let err = (m * best - target).norm();
    assert!(err > 1e-3, "linearized GCN reconstruction error {err}");
}
