//! Victim evaluation: independently seeded GCNs retrained on a (possibly
//! poisoned) graph, scored on the test split against ground truth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{normalize_adjacency, Graph, LabelData};
use crate::rng::{self, streams};
use crate::surrogate::{self, Architecture, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `"clean"` or `"poisoned:<trace hash>"`.
    pub graph: String,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (zero for a single run).
    pub std: f64,
    pub runs: usize,
}

impl EvalReport {
    pub fn from_runs(graph: impl Into<String>, seeds: Vec<u64>, accuracies: Vec<f64>) -> Self {
        let runs = accuracies.len();
        let mean = if runs == 0 {
            0.0
        } else {
            accuracies.iter().sum::<f64>() / runs as f64
        };
        let std = if runs < 2 {
            0.0
        } else {
            (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt()
        };
        Self {
            graph: graph.into(),
            seeds,
            accuracies,
            mean,
            std,
            runs,
        }
    }
}

/// Test accuracy of one GCN victim trained with `seed`.
pub fn victim_accuracy(graph: &Graph, labels: &LabelData, seed: u64) -> Result<f64> {
    let norm = normalize_adjacency(graph);
    let mut config = TrainConfig::for_architecture(Architecture::Gcn);
    config.seed = seed;
    let mut init = rng::substream(seed, streams::TRAIN_INIT, 0);
    let outcome = surrogate::train_on_view(
        &norm,
        graph.features(),
        &labels.labels,
        &labels.train,
        labels.k_classes,
        Architecture::Gcn,
        &config,
        &mut init,
    )?;
    let logits = surrogate::forward(&norm, graph.features(), &outcome.params)?;
    let predictions = surrogate::argmax_rows(&logits);
    Ok(surrogate::accuracy(&predictions, &labels.labels, &labels.test))
}

/// Train `runs` victims with seeds `base_seed..base_seed + runs` in
/// parallel; results are ordered by seed.
pub fn evaluate_victim(graph: &Graph, labels: &LabelData, runs: usize, base_seed: u64) -> Result<EvalReport> {
    evaluate_victim_labeled(graph, labels, runs, base_seed, "clean")
}

pub fn evaluate_victim_labeled(
    graph: &Graph,
    labels: &LabelData,
    runs: usize,
    base_seed: u64,
    identity: &str,
) -> Result<EvalReport> {
    let seeds: Vec<u64> = (0..runs as u64).map(|r| base_seed + r).collect();
    let accuracies = seeds
        .par_iter()
        .map(|&s| victim_accuracy(graph, labels, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_runs(identity, seeds, accuracies))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn statistics_are_recomputable() {
        let r = EvalReport::from_runs("clean", vec![0, 1, 2], vec![0.5, 0.7, 0.9]);
        assert_abs_diff_eq!(r.mean, 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(r.std, 0.2, epsilon = 1e-15);
        assert_eq!(r.runs, 3);
        assert_eq!(EvalReport::from_runs("clean", vec![4], vec![0.3]).std, 0.0);
    }
}
