//! Graph representation, adjacency normalization, homophily measures and
//! synthetic graph generation.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::sparse::Csr;

/// Undirected, unweighted attributed graph.
///
/// Adjacency is kept as sorted neighbor lists; self-loops are never stored
/// and only appear inside [`NormalizedView`].
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    neighbors: Vec<Vec<usize>>,
    features: Csr,
    edge_count: usize,
}

impl Graph {
    pub fn new(n_nodes: usize, edges: &[(usize, usize)], features: Csr) -> Result<Self> {
        if features.shape().0 != n_nodes {
            return Err(Error::shape(
                "graph",
                format!(
                    "{} feature rows for {} nodes",
                    features.shape().0,
                    n_nodes
                ),
            ));
        }
        let mut neighbors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_nodes];
        for &(a, b) in edges {
            for idx in [a, b] {
                if idx >= n_nodes {
                    return Err(Error::IndexOutOfRange {
                        index: idx,
                        len: n_nodes,
                    });
                }
            }
            if a == b {
                return Err(Error::SelfLoopInInput(a));
            }
            if !neighbors[a].insert(b) {
                return Err(Error::DuplicateEdge(a.min(b), a.max(b)));
            }
            neighbors[b].insert(a);
        }
        Ok(Self {
            neighbors: neighbors
                .into_iter()
                .map(|s| s.into_iter().collect())
                .collect(),
            features,
            edge_count: edges.len(),
        })
    }

    /// Graph with identity features, handy for structure-only work.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::new(n_nodes, edges, Csr::identity(n_nodes))
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn features(&self) -> &Csr {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.shape().1
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Undirected edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// Toggle the undirected edge `(a, b)`; returns `true` when it was added.
    pub fn flip(&mut self, a: usize, b: usize) -> bool {
        assert!(a != b, "self-loops are not part of the perturbation space");
        match self.neighbors[a].binary_search(&b) {
            Ok(pos) => {
                self.neighbors[a].remove(pos);
                let pos_b = self.neighbors[b]
                    .binary_search(&a)
                    .expect("adjacency is symmetric");
                self.neighbors[b].remove(pos_b);
                self.edge_count -= 1;
                false
            }
            Err(pos) => {
                self.neighbors[a].insert(pos, b);
                let pos_b = self.neighbors[b]
                    .binary_search(&a)
                    .expect_err("adjacency is symmetric");
                self.neighbors[b].insert(pos_b, a);
                self.edge_count += 1;
                true
            }
        }
    }

    /// Binary symmetric adjacency with a zero diagonal.
    pub fn adjacency(&self) -> Csr {
        let triplets = self
            .neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().map(move |&j| (i, j, 1.0)))
            .collect();
        Csr::from_triplets(self.n_nodes(), self.n_nodes(), triplets).expect("valid indices")
    }

    pub fn dense_adjacency(&self) -> Array2<f64> {
        self.adjacency().to_dense()
    }

    /// Number of positions where the two adjacency matrices differ
    /// (both triangles counted).
    pub fn l0_distance(&self, other: &Graph) -> usize {
        assert_eq!(self.n_nodes(), other.n_nodes());
        self.neighbors
            .iter()
            .zip(&other.neighbors)
            .map(|(a, b)| {
                let a: BTreeSet<_> = a.iter().collect();
                let b: BTreeSet<_> = b.iter().collect();
                a.symmetric_difference(&b).count()
            })
            .sum()
    }

    /// Breadth-first connectivity check.
    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }

    /// Two-coloring check on every component.
    pub fn is_bipartite(&self) -> bool {
        let n = self.n_nodes();
        let mut color: Vec<Option<bool>> = vec![None; n];
        for start in 0..n {
            if color[start].is_some() {
                continue;
            }
            color[start] = Some(false);
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                let cu = color[u].expect("colored on enqueue");
                for &v in &self.neighbors[u] {
                    match color[v] {
                        None => {
                            color[v] = Some(!cu);
                            queue.push_back(v);
                        }
                        Some(cv) if cv == cu => return false,
                        Some(_) => {}
                    }
                }
            }
        }
        true
    }
}

/// Ground truth, split and (after clean-graph training) pseudo-labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelData {
    pub labels: Vec<usize>,
    pub k_classes: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub pseudo_labels: Option<Vec<usize>>,
    pub merged_labels: Option<Vec<usize>>,
}

impl LabelData {
    pub fn new(
        labels: Vec<usize>,
        k_classes: usize,
        train: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self> {
        let n = labels.len();
        if let Some(&bad) = labels.iter().find(|&&l| l >= k_classes) {
            return Err(Error::InvalidConfig(format!(
                "label {bad} outside [0, {k_classes})"
            )));
        }
        let mut seen = vec![false; n];
        for &i in &train {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            seen[i] = true;
        }
        for &i in &test {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            if seen[i] {
                return Err(Error::InvalidConfig(format!(
                    "node {i} is in both train and test splits"
                )));
            }
        }
        Ok(Self {
            labels,
            k_classes,
            train,
            test,
            pseudo_labels: None,
            merged_labels: None,
        })
    }

    /// Seeded class-stratified split: `train_fraction` of every class goes to
    /// train (at least one node per non-empty class), the rest to test.
    pub fn stratified(
        labels: Vec<usize>,
        k_classes: usize,
        train_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&train_fraction) {
            return Err(Error::InvalidConfig(format!(
                "train fraction {train_fraction} outside [0, 1)"
            )));
        }
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k_classes];
        for (node, &l) in labels.iter().enumerate() {
            if l >= k_classes {
                return Err(Error::InvalidConfig(format!(
                    "label {l} outside [0, {k_classes})"
                )));
            }
            by_class[l].push(node);
        }
        let mut rng = rng::substream(seed, streams::SPLITS, 0);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for mut members in by_class {
            if members.is_empty() {
                continue;
            }
            members.shuffle(&mut rng);
            let take = ((members.len() as f64 * train_fraction).round() as usize)
                .clamp(1, members.len());
            train.extend_from_slice(&members[..take]);
            test.extend_from_slice(&members[take..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Self::new(labels, k_classes, train, test)
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    /// Attach frozen pseudo-labels and assemble the merged label set:
    /// ground truth on train nodes, pseudo-labels elsewhere.
    pub fn with_pseudo_labels(mut self, pseudo: Vec<usize>) -> Self {
        assert_eq!(pseudo.len(), self.labels.len());
        let mut merged = pseudo.clone();
        for &i in &self.train {
            merged[i] = self.labels[i];
        }
        self.pseudo_labels = Some(pseudo);
        self.merged_labels = Some(merged);
        self
    }

    /// Merged labels when available, ground truth otherwise.
    pub fn merged_or_truth(&self) -> &[usize] {
        self.merged_labels.as_deref().unwrap_or(&self.labels)
    }
}

/// `Â = D̃^{-1/2}(A+I)D̃^{-1/2}` and the degrees of `A+I`.
#[derive(Debug, Clone)]
pub struct NormalizedView {
    pub a_hat: Csr,
    pub degree: Vec<f64>,
}

impl NormalizedView {
    /// Symmetric normalized Laplacian `I − Â`.
    pub fn l_sym(&self) -> Csr {
        let n = self.degree.len();
        let mut triplets: Vec<(usize, usize, f64)> =
            self.a_hat.iter().map(|(i, j, v)| (i, j, -v)).collect();
        triplets.extend((0..n).map(|i| (i, i, 1.0)));
        Csr::from_triplets(n, n, triplets).expect("square")
    }
}

/// Add self-loops to a (possibly real-valued) adjacency and normalize it
/// symmetrically by the row sums of `A + I`.
pub fn normalize_csr(adjacency: &Csr) -> NormalizedView {
    let n = adjacency.shape().0;
    let mut triplets: Vec<(usize, usize, f64)> = adjacency.iter().collect();
    triplets.extend((0..n).map(|i| (i, i, 1.0)));
    let with_loops = Csr::from_triplets(n, n, triplets).expect("square");
    let degree = with_loops.row_sums();
    let a_hat = with_loops.map_values(|i, j, v| v / (degree[i] * degree[j]).sqrt());
    NormalizedView { a_hat, degree }
}

pub fn normalize_adjacency(graph: &Graph) -> NormalizedView {
    normalize_csr(&graph.adjacency())
}

/// Fraction of edges joining same-label endpoints, each undirected edge
/// counted once. With `include_self_loops` every node contributes one
/// intra-class self-loop.
pub fn homophily(graph: &Graph, labels: &[usize], include_self_loops: bool) -> Result<f64> {
    assert_eq!(labels.len(), graph.n_nodes());
    let intra = graph
        .edges()
        .filter(|&(i, j)| labels[i] == labels[j])
        .count();
    let (mut num, mut den) = (intra, graph.edge_count());
    if include_self_loops {
        num += graph.n_nodes();
        den += graph.n_nodes();
    }
    if den == 0 {
        return Err(Error::EmptyEdgeSet);
    }
    Ok(num as f64 / den as f64)
}

/// Pairwise label agreement `H[i][j] = [y_i == y_j]`, stored implicitly
/// through the labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyMatrix {
    labels: Vec<usize>,
}

impl ConsistencyMatrix {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n();
        Array2::from_shape_fn((n, n), |(i, j)| if self.get(i, j) { 1.0 } else { 0.0 })
    }
}

pub fn consistency_matrix(labels: &[usize]) -> ConsistencyMatrix {
    ConsistencyMatrix {
        labels: labels.to_vec(),
    }
}

/// Homophily after `delta` inter-class additions to a graph with
/// `edge_count` edges and homophily `h0`.
pub fn predicted_homophily_after_additions(h0: f64, edge_count: usize, delta: usize) -> f64 {
    let e = edge_count as f64;
    h0 * e / (e + delta as f64)
}

/// Homophily lost to `delta` inter-class additions.
pub fn homophily_drop(h0: f64, edge_count: usize, delta: usize) -> f64 {
    let e = edge_count as f64;
    let d = delta as f64;
    h0 * d / (e + d)
}

/// Homophily after `delta` intra-class additions; the upper envelope of a
/// perturbation trajectory.
pub fn homophily_after_intra_additions(h0: f64, edge_count: usize, delta: usize) -> f64 {
    let e = edge_count as f64;
    let d = delta as f64;
    (h0 * e + d) / (e + d)
}

/// Standard deviation of the Gaussian noise added to SBM one-hot features.
pub const SBM_FEATURE_NOISE: f64 = 0.1;

/// Stochastic block model with evenly sized contiguous blocks, one-hot class
/// features plus Gaussian noise, and a stratified 10% train split.
pub fn generate_sbm(
    n: usize,
    k: usize,
    p_intra: f64,
    p_inter: f64,
    seed: u64,
) -> Result<(Graph, LabelData)> {
    if !(0.0..=1.0).contains(&p_intra) || !(0.0..=1.0).contains(&p_inter) || p_inter > p_intra {
        return Err(Error::InvalidProbability(format!(
            "need 0 <= p_inter ({p_inter}) <= p_intra ({p_intra}) <= 1"
        )));
    }
    if k == 0 || n < k {
        return Err(Error::InvalidConfig(format!(
            "need n ({n}) >= k ({k}) >= 1"
        )));
    }
    let labels: Vec<usize> = (0..n).map(|i| i * k / n).collect();
    let mut rng = rng::substream(seed, streams::SBM, 0);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { p_intra } else { p_inter };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let mut frng = rng::substream(seed, streams::SBM_FEATURES, 0);
    let noise = Normal::new(0.0, SBM_FEATURE_NOISE).expect("positive sigma");
    let features = Array2::from_shape_fn((n, k), |(i, c)| {
        let base = if labels[i] == c { 1.0 } else { 0.0 };
        base + noise.sample(&mut frng)
    });
    let graph = Graph::new(n, &edges, Csr::from_dense(features.view()))?;
    let labels = LabelData::stratified(labels, k, 0.1, seed)?;
    Ok((graph, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn path3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn normalize_single_node() {
        let g = Graph::from_edges(1, &[]).unwrap();
        assert_eq!(normalize_adjacency(&g).a_hat.to_dense(), ndarray::array![[1.0]]);
    }

    #[test]
    fn normalize_one_edge() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let a = normalize_adjacency(&g).a_hat.to_dense();
        assert_eq!(a, ndarray::array![[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn normalize_path() {
        let a = normalize_adjacency(&path3()).a_hat.to_dense();
        let s6 = 1.0 / 6f64.sqrt();
        let expected = ndarray::array![[0.5, s6, 0.0], [s6, 1.0 / 3.0, s6], [0.0, s6, 0.5]];
        for (x, y) in a.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
        let l = normalize_adjacency(&path3()).l_sym().to_dense();
        assert_abs_diff_eq!(l[[1, 1]], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(matches!(
            Graph::from_edges(3, &[(1, 1)]),
            Err(Error::SelfLoopInInput(1))
        ));
        assert!(matches!(
            Graph::from_edges(3, &[(0, 1), (1, 0)]),
            Err(Error::DuplicateEdge(0, 1))
        ));
        assert!(matches!(
            Graph::from_edges(3, &[(0, 3)]),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn flip_round_trip() {
        let mut g = path3();
        assert!(g.flip(0, 2));
        assert_eq!(g.edge_count(), 3);
        assert!(g.has_edge(2, 0));
        assert!(!g.flip(2, 0));
        assert_eq!(g, path3());
    }

    #[test]
    fn homophily_examples() {
        let tri = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(homophily(&tri, &[4, 4, 4], false).unwrap(), 1.0);
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        assert_eq!(homophily(&g, &[0, 0, 0, 1, 0], false).unwrap(), 0.5);
        let empty = Graph::from_edges(2, &[]).unwrap();
        assert!(matches!(
            homophily(&empty, &[0, 1], false),
            Err(Error::EmptyEdgeSet)
        ));
        assert_eq!(homophily(&empty, &[0, 1], true).unwrap(), 1.0);
    }

    #[test]
    fn consistency_examples() {
        assert_eq!(
            consistency_matrix(&[0, 0, 1]).to_dense(),
            ndarray::array![[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        );
        assert_eq!(consistency_matrix(&[2, 2]).to_dense(), Array2::<f64>::ones((2, 2)));
        assert_eq!(
            consistency_matrix(&[0, 1, 2]).to_dense(),
            Array2::<f64>::eye(3)
        );
    }

    #[test]
    fn homophily_prediction_examples() {
        assert_abs_diff_eq!(
            predicted_homophily_after_additions(0.8, 100, 5),
            0.8 * 100.0 / 105.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            predicted_homophily_after_additions(0.8, 100, 5),
            0.761_904_761_904_761_9,
            epsilon = 1e-12
        );
        assert_eq!(predicted_homophily_after_additions(0.8, 100, 0), 0.8);
        assert_abs_diff_eq!(
            predicted_homophily_after_additions(0.744, 5429, 271),
            0.708_627_368_421_052_6,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(homophily_drop(0.8, 100, 5), 0.038_095_238_095_238_1, epsilon = 1e-12);
        assert_eq!(homophily_drop(0.8, 100, 0), 0.0);
    }

    #[test]
    fn sbm_validation_and_limits() {
        assert!(matches!(
            generate_sbm(10, 2, 0.1, 0.2, 0),
            Err(Error::InvalidProbability(_))
        ));
        assert!(matches!(
            generate_sbm(10, 2, 1.5, 0.2, 0),
            Err(Error::InvalidProbability(_))
        ));
        let (g, l) = generate_sbm(60, 3, 0.3, 0.0, 1).unwrap();
        assert_eq!(homophily(&g, &l.labels, false).unwrap(), 1.0);
        let (g, l) = generate_sbm(10, 2, 1.0, 1.0, 1).unwrap();
        // complete graph: 2 * C(5,2) intra pairs out of C(10,2)
        assert_abs_diff_eq!(
            homophily(&g, &l.labels, false).unwrap(),
            20.0 / 45.0,
            epsilon = 1e-15
        );
        let (g2, l2) = generate_sbm(10, 2, 1.0, 1.0, 1).unwrap();
        assert_eq!(g, g2);
        assert_eq!(l, l2);
    }

    #[test]
    fn stratified_split_is_disjoint_and_covers() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let l = LabelData::stratified(labels, 4, 0.1, 3).unwrap();
        assert_eq!(l.train.len() + l.test.len(), 100);
        assert_eq!(l.train.len(), 12); // round(2.5) = 3 per class
        let again = LabelData::stratified((0..100).map(|i| i % 4).collect(), 4, 0.1, 3).unwrap();
        assert_eq!(l, again);
    }

    #[test]
    fn merged_labels_follow_split() {
        let l = LabelData::new(vec![0, 1, 1], 2, vec![0], vec![1, 2])
            .unwrap()
            .with_pseudo_labels(vec![1, 0, 1]);
        assert_eq!(l.merged_labels.unwrap(), vec![0, 0, 1]);
        assert!(LabelData::new(vec![0, 1], 2, vec![0], vec![0]).is_err());
    }
}
