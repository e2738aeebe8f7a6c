//! Numerical checks for the arguments behind the attack: the label
//! propagation toy model, gradient-versus-perturbation ranking, spectral
//! smoothing of repeated normalized aggregation, and inter-class statistics
//! of attack traces.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attack::{Action, AttackTrace};
use crate::autodiff::{Tape, Value};
use crate::error::{Error, Result};
use crate::graph::{
    homophily_after_intra_additions, normalize_adjacency, predicted_homophily_after_additions,
    Graph,
};
use crate::rng::{self, streams, Rng};
use crate::sparse::Csr;
use crate::surrogate::{self, Architecture, SurrogateParams};

// ---------------------------------------------------------------------------
// Label propagation toy model

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpaScenario {
    pub n1: usize,
    pub n2: usize,
    pub delta: f64,
}

impl LpaScenario {
    pub fn new(n1: usize, n2: usize, delta: f64) -> Result<Self> {
        if n1 == 0 || n2 > n1 {
            return Err(Error::InvalidConfig(format!("need n1 ({n1}) >= n2 ({n2}) and n1 >= 1")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidConfig(format!("delta {delta} outside (0, 1)")));
        }
        Ok(Self { n1, n2, delta })
    }
}

/// The two minimal perturbations of the toy model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpaPerturbation {
    /// Weight `δ` on a new edge to a class-2 neighbor.
    AddInterClass,
    /// Weight `δ` removed from an existing class-1 edge.
    RemoveIntraClass,
}

/// Class-1 vote share after the given perturbation.
pub fn lpa_confidence(s: &LpaScenario, which: LpaPerturbation) -> f64 {
    let (n1, n2, d) = (s.n1 as f64, s.n2 as f64, s.delta);
    match which {
        LpaPerturbation::AddInterClass => n1 / (n1 + n2 + d),
        LpaPerturbation::RemoveIntraClass => (n1 - d) / (n1 - d + n2),
    }
}

/// Closed form of `p(δ₁) − p(δ₂)`.
pub fn lpa_gap(s: &LpaScenario) -> f64 {
    let (n1, n2, d) = (s.n1 as f64, s.n2 as f64, s.delta);
    (d * n2 - d * n1 + d * d) / ((n1 + n2).powi(2) - d * d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpaReport {
    pub scenario: LpaScenario,
    pub p_add_inter: f64,
    pub p_remove_intra: f64,
    pub gap: f64,
    pub identity_residual: f64,
}

pub fn lpa_report(s: &LpaScenario) -> LpaReport {
    let p1 = lpa_confidence(s, LpaPerturbation::AddInterClass);
    let p2 = lpa_confidence(s, LpaPerturbation::RemoveIntraClass);
    let gap = lpa_gap(s);
    LpaReport {
        scenario: *s,
        p_add_inter: p1,
        p_remove_intra: p2,
        gap,
        identity_residual: (gap - (p1 - p2)).abs(),
    }
}

// ---------------------------------------------------------------------------
// Gradient ranking versus discrete perturbation ranking

/// A differentiable scalar function of a real vector.
pub trait SmoothObjective {
    fn dim(&self) -> usize;
    fn value(&self, a: &[f64]) -> Result<f64>;
    fn gradient(&self, a: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub delta_a: f64,
    pub trials: usize,
    /// Trials whose two smallest gradient components are separated by more
    /// than the curvature margin.
    pub counted: usize,
    pub agreed: usize,
    pub near_ties: usize,
    pub agreement_rate: f64,
}

impl Lemma1Report {
    pub fn merge(&mut self, other: &Lemma1Report) {
        self.trials += other.trials;
        self.counted += other.counted;
        self.agreed += other.agreed;
        self.near_ties += other.near_ties;
        self.finish();
    }

    fn finish(&mut self) {
        self.agreement_rate = if self.counted == 0 {
            1.0
        } else {
            self.agreed as f64 / self.counted as f64
        };
    }
}

fn argmin(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (k, &v)| if v < best.1 { (k, v) } else { best })
        .0
}

const CURVATURE_STEP: f64 = 1e-3;

/// Compare `argmin_k [L(a + δa·e_k) − L(a)]` with `argmin_k ∂L/∂a_k` at each
/// point. A point is counted only when the gap between the two smallest
/// gradient components exceeds `10·δa·C`, with `C` the largest diagonal
/// second difference at the point.
pub fn verify_lemma1(
    loss: &dyn SmoothObjective,
    points: &[Vec<f64>],
    delta_a: f64,
) -> Result<Lemma1Report> {
    let mut report = Lemma1Report {
        delta_a,
        ..Default::default()
    };
    for a in points {
        let dim = loss.dim();
        if a.len() != dim {
            return Err(Error::shape("verify_lemma1", format!("{} coordinates for dim {dim}", a.len())));
        }
        let base = loss.value(a)?;
        let grad = loss.gradient(a)?;
        let mut p = Vec::with_capacity(dim);
        let mut curvature: f64 = 0.0;
        let mut probe = a.clone();
        for k in 0..dim {
            probe[k] = a[k] + delta_a;
            p.push(loss.value(&probe)? - base);
            probe[k] = a[k] + CURVATURE_STEP;
            let up = loss.value(&probe)?;
            probe[k] = a[k] - CURVATURE_STEP;
            let down = loss.value(&probe)?;
            probe[k] = a[k];
            curvature = curvature.max(((up - 2.0 * base + down) / CURVATURE_STEP.powi(2)).abs());
        }
        report.trials += 1;
        let mut sorted = grad.clone();
        sorted.sort_by(f64::total_cmp);
        let margin = if dim > 1 { sorted[1] - sorted[0] } else { f64::INFINITY };
        if margin <= 10.0 * delta_a * curvature {
            report.near_ties += 1;
            continue;
        }
        report.counted += 1;
        if argmin(&p) == argmin(&grad) {
            report.agreed += 1;
        }
    }
    report.finish();
    Ok(report)
}

/// `‖a − c‖²`.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    pub center: Vec<f64>,
}

impl SmoothObjective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, a: &[f64]) -> Result<f64> {
        Ok(a.iter().zip(&self.center).map(|(x, c)| (x - c).powi(2)).sum())
    }

    fn gradient(&self, a: &[f64]) -> Result<Vec<f64>> {
        Ok(a.iter().zip(&self.center).map(|(x, c)| 2.0 * (x - c)).collect())
    }
}

/// `wᵀa`.
#[derive(Debug, Clone)]
pub struct LinearObjective {
    pub weights: Vec<f64>,
}

impl SmoothObjective for LinearObjective {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn value(&self, a: &[f64]) -> Result<f64> {
        Ok(a.iter().zip(&self.weights).map(|(x, w)| x * w).sum())
    }

    fn gradient(&self, _a: &[f64]) -> Result<Vec<f64>> {
        Ok(self.weights.clone())
    }
}

/// Surrogate cross-entropy as a function of a few symmetric adjacency
/// entries, everything else held fixed.
#[derive(Debug, Clone)]
pub struct AdjacencySlice {
    pub base: Array2<f64>,
    pub entries: Vec<(usize, usize)>,
    pub features: Arc<Csr>,
    pub params: SurrogateParams,
    pub targets: Vec<usize>,
    pub nodes: Vec<usize>,
}

impl AdjacencySlice {
    fn adjacency(&self, a: &[f64]) -> Array2<f64> {
        let mut m = self.base.clone();
        for (&(i, j), &v) in self.entries.iter().zip(a) {
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
        m
    }

    fn record(&self, a: &[f64]) -> Result<(Tape, crate::autodiff::Var, crate::autodiff::Var)> {
        let mut tape = Tape::new();
        let adj = tape.param(Value::Dense(self.adjacency(a)))?;
        let a_hat = tape.gcn_normalize(adj)?;
        let x = tape.input(Value::Sparse(self.features.clone()))?;
        let ws = self
            .params
            .weights
            .iter()
            .map(|w| tape.input(Value::Dense(w.clone())))
            .collect::<Result<Vec<_>>>()?;
        let logits = surrogate::logits_on_tape(&mut tape, self.params.architecture, a_hat, x, &ws)?;
        let loss = tape.softmax_cross_entropy(logits, &self.targets, &self.nodes)?;
        Ok((tape, loss, adj))
    }
}

impl SmoothObjective for AdjacencySlice {
    fn dim(&self) -> usize {
        self.entries.len()
    }

    fn value(&self, a: &[f64]) -> Result<f64> {
        let (tape, loss, _) = self.record(a)?;
        Ok(tape.scalar(loss))
    }

    fn gradient(&self, a: &[f64]) -> Result<Vec<f64>> {
        let (tape, loss, adj) = self.record(a)?;
        let grads = tape.backward(loss, &[adj])?;
        let g = grads.dense(adj);
        Ok(self.entries.iter().map(|&(i, j)| g[[i, j]] + g[[j, i]]).collect())
    }
}

/// Random connected, non-bipartite graph: a random spanning path, one
/// triangle, and independent extra edges with probability `p`.
pub fn random_connected_graph(n: usize, p: f64, rng: &mut Rng) -> Result<Graph> {
    if n < 3 {
        return Err(Error::InvalidConfig("need at least 3 nodes".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = std::collections::BTreeSet::new();
    for w in order.windows(2) {
        edges.insert((w[0].min(w[1]), w[0].max(w[1])));
    }
    let (a, c) = (order[0], order[2]);
    edges.insert((a.min(c), a.max(c)));
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.insert((i, j));
            }
        }
    }
    let edges: Vec<_> = edges.into_iter().collect();
    Graph::from_edges(n, &edges)
}

/// Random adjacency-slice instances on small SBM-like graphs with Glorot
/// GCN weights, evaluated at their binary point.
pub fn lemma1_gcn_trials(trials: usize, dim: usize, delta_a: f64, seed: u64) -> Result<Lemma1Report> {
    let mut total = Lemma1Report {
        delta_a,
        ..Default::default()
    };
    for t in 0..trials {
        let mut rng = rng::substream(seed, streams::DIAGNOSTICS, t as u64);
        let n = rng.random_range(12..=20);
        let graph = random_connected_graph(n, 0.2, &mut rng)?;
        let k = 3;
        let d = 5;
        let x = Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng));
        let params = SurrogateParams::glorot(Architecture::Gcn, d, 8, k, 2, &mut rng);
        let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut pairs: Vec<(usize, usize)> =
            (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        pairs.shuffle(&mut rng);
        pairs.truncate(dim);
        let base = graph.dense_adjacency();
        let point: Vec<f64> = pairs.iter().map(|&(i, j)| base[[i, j]]).collect();
        let slice = AdjacencySlice {
            base,
            entries: pairs,
            features: Arc::new(Csr::from_dense(x.view())),
            params,
            targets,
            nodes: (0..n).collect(),
        };
        total.merge(&verify_lemma1(&slice, &[point], delta_a)?);
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Spectral smoothing

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BipartitePolicy {
    Error,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Eigenvalues of `Â = I − L_sym`, ascending.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvector of the largest eigenvalue, sign fixed positive.
    pub leading_eigenvector: Vec<f64>,
    /// `|cos|` between the leading eigenvector and `D̃^{1/2}𝟙`.
    pub stationary_alignment: f64,
    pub connected: bool,
    /// Smallest eigenvalue of `D^{-1/2} A D^{-1/2}` (no self-loops); it
    /// equals −1 exactly when a connected graph is bipartite. The
    /// self-looped operator above never reaches −1.
    pub plain_min_eigenvalue: f64,
    pub bipartite_spectral: bool,
    pub bipartite_coloring: bool,
    /// `λ_{n−1} − 1`, the limiting per-step relative change of distances
    /// once the stationary component is removed.
    pub limit_target: f64,
}

impl SpectralReport {
    pub fn bipartite(&self) -> bool {
        self.bipartite_spectral || self.bipartite_coloring
    }
}

fn eigen(graph: &Graph) -> (Vec<f64>, DMatrix<f64>) {
    let n = graph.n_nodes();
    let a_hat = normalize_adjacency(graph).a_hat;
    let mut m = DMatrix::zeros(n, n);
    for (i, j, v) in a_hat.iter() {
        m[(i, j)] = v;
    }
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn plain_min_eigenvalue(graph: &Graph) -> f64 {
    let n = graph.n_nodes();
    let mut m = DMatrix::zeros(n, n);
    for (i, j) in graph.edges() {
        let v = 1.0 / ((graph.degree(i) * graph.degree(j)) as f64).sqrt();
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn spectral_analysis(graph: &Graph, policy: BipartitePolicy) -> Result<SpectralReport> {
    let n = graph.n_nodes();
    if n == 0 || !graph.is_connected() {
        return Err(Error::DisconnectedGraph);
    }
    let (values, vectors) = eigen(graph);
    let plain_min_eigenvalue = plain_min_eigenvalue(graph);
    let bipartite_spectral = plain_min_eigenvalue <= -1.0 + 1e-8;
    let bipartite_coloring = graph.is_bipartite();
    if (bipartite_spectral || bipartite_coloring) && policy == BipartitePolicy::Error {
        return Err(Error::BipartiteGraph);
    }
    let mut lead: Vec<f64> = vectors.column(n - 1).iter().copied().collect();
    if lead.iter().sum::<f64>() < 0.0 {
        lead.iter_mut().for_each(|x| *x = -*x);
    }
    let root_degree: Vec<f64> = (0..n).map(|i| ((graph.degree(i) + 1) as f64).sqrt()).collect();
    let norm = root_degree.iter().map(|x| x * x).sum::<f64>().sqrt();
    let alignment = lead.iter().zip(&root_degree).map(|(a, b)| a * b).sum::<f64>().abs() / norm;
    Ok(SpectralReport {
        limit_target: if n >= 2 { values[n - 2] - 1.0 } else { 0.0 },
        eigenvalues: values,
        leading_eigenvector: lead,
        stationary_alignment: alignment,
        connected: true,
        plain_min_eigenvalue,
        bipartite_spectral,
        bipartite_coloring,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingTrace {
    pub tau_max: usize,
    pub pairs: Vec<(usize, usize)>,
    /// `distances[τ][p]`: distance of pair `p` after `τ` aggregations.
    pub distances: Vec<Vec<f64>>,
    /// `kappa[τ][p] = (d_{τ+1} − d_τ)/d_τ`, for `τ < tau_max`.
    pub kappa: Vec<Vec<f64>>,
    /// Same quantities with the stationary component removed. Each row of
    /// `transient_distances` is rescaled by a common factor, which leaves
    /// `transient_kappa` unchanged.
    pub transient_distances: Vec<Vec<f64>>,
    pub transient_kappa: Vec<Vec<f64>>,
    pub limit_target: f64,
    pub features_regenerated: bool,
}

impl SmoothingTrace {
    /// Whether every pair distance at `tau` is at most its initial value.
    pub fn shrinks_at(&self, tau: usize) -> bool {
        self.distances[tau]
            .iter()
            .zip(&self.distances[0])
            .all(|(d, d0)| *d <= *d0 + 1e-12)
    }

    /// Pairs whose transient distance has collapsed to rounding level by
    /// `tau` (twins, for instance); `κ` is undefined for them.
    pub fn collapsed_pairs(&self, tau: usize) -> Vec<usize> {
        collapsed(&self.transient_distances[tau])
    }

    /// Largest `|κ_τ − (λ_{n−1} − 1)|` over pairs, for the transient
    /// sequence, skipping collapsed pairs.
    pub fn transient_kappa_error(&self, tau: usize) -> f64 {
        kappa_error(&self.transient_kappa[tau], &self.transient_distances[tau], self.limit_target)
    }

    pub fn raw_kappa_error(&self, tau: usize) -> f64 {
        kappa_error(&self.kappa[tau], &self.distances[tau], self.limit_target)
    }
}

fn collapsed(d: &[f64]) -> Vec<usize> {
    let scale = d.iter().copied().fold(0.0, f64::max);
    (0..d.len()).filter(|&p| d[p] <= 1e-12 * scale).collect()
}

fn kappa_error(kappa: &[f64], d: &[f64], target: f64) -> f64 {
    let skip = collapsed(d);
    kappa
        .iter()
        .enumerate()
        .filter(|(p, _)| skip.binary_search(p).is_err())
        .map(|(_, k)| (k - target).abs())
        .fold(0.0, f64::max)
}

fn pair_distances(x: &Array2<f64>, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(i, j)| {
            x.row(i)
                .iter()
                .zip(x.row(j).iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

fn ratios(d: &[Vec<f64>]) -> Vec<Vec<f64>> {
    d.windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| if *a == 0.0 { 0.0 } else { (b - a) / a })
                .collect()
        })
        .collect()
}

/// Scale to unit max-norm; the transient part decays geometrically and
/// would otherwise underflow when squared.
fn rescale(y: &mut Array2<f64>) {
    let m = y.fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        y.mapv_inplace(|v| v / m);
    }
}

fn project_out(y: &mut Array2<f64>, e: &[f64]) {
    for c in 0..y.ncols() {
        let coef: f64 = e.iter().enumerate().map(|(i, ei)| ei * y[[i, c]]).sum();
        for (i, ei) in e.iter().enumerate() {
            y[[i, c]] -= coef * ei;
        }
    }
}

/// Iterate `X ← Â·X` for `τ = 0..=tau_max`, recording pairwise distances
/// and their per-step relative change. `pairs` defaults to all pairs.
///
/// The transient sequence iterates `Y = X − e_n e_nᵀ X` (with `e_n` the
/// unit eigenvector of eigenvalue 1), projecting `e_n` out again after
/// every step so that rounding cannot reintroduce it. Its `κ` converges to
/// `λ_{n−1} − 1`; the raw sequence converges to the nonzero stationary
/// distances and its `κ` tends to zero whenever degrees differ.
pub fn smoothing_trace(
    graph: &Graph,
    features: &Array2<f64>,
    tau_max: usize,
    pairs: Option<Vec<(usize, usize)>>,
    seed: u64,
) -> Result<SmoothingTrace> {
    let n = graph.n_nodes();
    if features.nrows() != n {
        return Err(Error::shape("smoothing_trace", format!("{} rows for {n} nodes", features.nrows())));
    }
    let report = spectral_analysis(graph, BipartitePolicy::Error)?;
    let (_, vectors) = eigen(graph);
    let e_n: Vec<f64> = report.leading_eigenvector.clone();
    let e_sub: Vec<f64> = vectors.column(n - 2).iter().copied().collect();

    let mut x = features.clone();
    let component = (0..x.ncols())
        .map(|c| (0..n).map(|i| e_sub[i] * x[[i, c]]).sum::<f64>().powi(2))
        .sum::<f64>()
        .sqrt();
    let regenerate = component < 1e-8;
    if regenerate {
        let mut rng = rng::substream(seed, streams::DIAGNOSTICS, u64::MAX);
        x.mapv_inplace(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + 1e-3 * z
        });
    }
    let pairs = pairs.unwrap_or_else(|| (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect());
    let a_hat = normalize_adjacency(graph).a_hat;

    let mut y = x.clone();
    project_out(&mut y, &e_n);
    rescale(&mut y);
    let mut distances = vec![pair_distances(&x, &pairs)];
    let mut transient = vec![pair_distances(&y, &pairs)];
    let mut transient_kappa = Vec::with_capacity(tau_max);
    for _ in 0..tau_max {
        x = a_hat.mul_dense(x.view())?;
        y = a_hat.mul_dense(y.view())?;
        project_out(&mut y, &e_n);
        let before = transient.last().expect("initial row");
        let after = pair_distances(&y, &pairs);
        transient_kappa.push(
            before
                .iter()
                .zip(&after)
                .map(|(a, b)| if *a == 0.0 { 0.0 } else { (b - a) / a })
                .collect(),
        );
        rescale(&mut y);
        distances.push(pair_distances(&x, &pairs));
        transient.push(pair_distances(&y, &pairs));
    }
    Ok(SmoothingTrace {
        tau_max,
        kappa: ratios(&distances),
        transient_kappa,
        pairs,
        distances,
        transient_distances: transient,
        limit_target: report.limit_target,
        features_regenerated: regenerate,
    })
}

// ---------------------------------------------------------------------------
// Inter-class tendency of traces

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlipCounts {
    pub add_intra: usize,
    pub add_inter: usize,
    pub remove_intra: usize,
    pub remove_inter: usize,
}

impl FlipCounts {
    pub fn additions(&self) -> usize {
        self.add_intra + self.add_inter
    }

    /// Share of additions that join different classes.
    pub fn inter_fraction_of_additions(&self) -> f64 {
        match self.additions() {
            0 => 0.0,
            a => self.add_inter as f64 / a as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iter: usize,
    pub h_gt: f64,
    pub h_pseudo: f64,
    pub lower_limit: f64,
    pub upper_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterclassStats {
    pub flips: usize,
    pub addition_fraction: f64,
    pub removal_fraction: f64,
    pub pseudo: FlipCounts,
    pub ground_truth: FlipCounts,
    pub inter_fraction_pseudo: f64,
    pub inter_fraction_gt: f64,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Iterations at which `h_gt` leaves `[lower_limit, upper_limit]`.
    pub envelope_violations: Vec<usize>,
    pub final_gap_to_lower: f64,
}

/// Ground-truth homophily envelope after `t` flips starting from `h0` on
/// `edge_count` edges: every flip an inter-class addition (lower) or an
/// intra-class addition (upper).
pub fn homophily_limits(h0: f64, edge_count: usize, t: usize) -> (f64, f64) {
    (
        predicted_homophily_after_additions(h0, edge_count, t),
        homophily_after_intra_additions(h0, edge_count, t),
    )
}

/// Trajectory row for iteration 0 (the clean graph) followed by one row per
/// record.
pub fn homophily_trajectory(trace: &AttackTrace) -> Vec<TrajectoryPoint> {
    let mut out = vec![TrajectoryPoint {
        iter: 0,
        h_gt: trace.clean_h_gt,
        h_pseudo: trace.clean_h_pseudo,
        lower_limit: trace.clean_h_gt,
        upper_limit: trace.clean_h_gt,
    }];
    for r in &trace.records {
        let (lower, upper) = homophily_limits(trace.clean_h_gt, trace.clean_edge_count, r.iter);
        out.push(TrajectoryPoint {
            iter: r.iter,
            h_gt: r.h_gt,
            h_pseudo: r.h_pseudo,
            lower_limit: lower,
            upper_limit: upper,
        });
    }
    out
}

pub fn interclass_fraction(trace: &AttackTrace) -> InterclassStats {
    let mut pseudo = FlipCounts::default();
    let mut gt = FlipCounts::default();
    for r in &trace.records {
        for (counts, intra) in [(&mut pseudo, r.intra_pseudo), (&mut gt, r.intra_gt)] {
            match (r.action, intra) {
                (Action::Add, true) => counts.add_intra += 1,
                (Action::Add, false) => counts.add_inter += 1,
                (Action::Remove, true) => counts.remove_intra += 1,
                (Action::Remove, false) => counts.remove_inter += 1,
            }
        }
    }
    let flips = trace.records.len();
    let share = |x: usize| if flips == 0 { 0.0 } else { x as f64 / flips as f64 };
    let trajectory = homophily_trajectory(trace);
    const SLACK: f64 = 1e-12;
    let envelope_violations = trajectory
        .iter()
        .filter(|p| p.h_gt < p.lower_limit - SLACK || p.h_gt > p.upper_limit + SLACK)
        .map(|p| p.iter)
        .collect();
    let last = trajectory.last().expect("clean row");
    InterclassStats {
        flips,
        addition_fraction: share(pseudo.additions()),
        removal_fraction: share(flips - pseudo.additions()),
        inter_fraction_pseudo: pseudo.inter_fraction_of_additions(),
        inter_fraction_gt: gt.inter_fraction_of_additions(),
        pseudo,
        ground_truth: gt,
        final_gap_to_lower: last.h_gt - last.lower_limit,
        envelope_violations,
        trajectory,
    }
}
