//! Standard stochastic blockmodel used as a classifier: roles are classes,
//! TRAIN nodes are clamped to their class and only TEST nodes are inferred.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, LabelTable};
use crate::node_cvb::{
    argmax, jittered_uniform, normalize_log, one_hot, structural_log_weights, ConvergeSpec,
    Diagonal, NodeCvb, SbmHyper,
};
use crate::rng;
use crate::stats::SuffStats;

/// Per-node role distributions. Clamped rows are one-hot and never updated.
#[derive(Clone, Debug, PartialEq)]
pub struct RolePosterior {
    pub lambda: Array2<f64>,
    pub clamped: Vec<bool>,
}

impl RolePosterior {
    pub fn num_nodes(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn num_roles(&self) -> usize {
        self.lambda.ncols()
    }

    pub(crate) fn from_flat(n: usize, k: usize, flat: Vec<f64>, clamped: Vec<bool>) -> Self {
        RolePosterior {
            lambda: Array2::from_shape_vec((n, k), flat).expect("posterior shape"),
            clamped,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct FitDiagnostics {
    pub sweeps: usize,
    pub converged: bool,
    /// Free energy before the first sweep and after each sweep.
    pub free_energy: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SbmFit {
    pub posterior: RolePosterior,
    pub stats: SuffStats,
    pub diagnostics: FitDiagnostics,
}

/// Role distribution of `v` from statistics that exclude `v`.
pub fn update_node_sbm(
    v: usize,
    stats: &SuffStats,
    hyper: &SbmHyper,
    graph: &DirectedGraph,
    diagonal: Diagonal,
) -> Result<Vec<f64>> {
    let k = stats.num_roles();
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 roles, got {k}")));
    }
    let self_loop = diagonal.self_pairs() && graph.multiplicity(v, v) > 0;
    let mut w = vec![0.0; k];
    structural_log_weights(stats, v, hyper, diagonal, self_loop, &mut w);
    normalize_log(&mut w, || format!("node {v}"))?;
    Ok(w)
}

/// Fit with `K = C`. TEST rows start near uniform and are swept in a fixed
/// shuffled order until the largest change drops below `schedule.tol`.
pub fn fit_sbm(
    graph: &DirectedGraph,
    labels: &LabelTable,
    hyper: &SbmHyper,
    schedule: &ConvergeSpec,
    diagonal: Diagonal,
    seed: u64,
) -> Result<SbmFit> {
    hyper.validate()?;
    let n = graph.num_nodes();
    let k = labels.num_classes();
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {k}")));
    }
    if labels.train_nodes().is_empty() {
        return Err(Error::NoTrainNodes);
    }
    let links = graph.binary_links(diagonal.self_pairs());
    let mut rng = rng::substream(seed, "init", 0);
    let mut lambda = Vec::with_capacity(n * k);
    let mut clamped = vec![false; n];
    let mut test = Vec::new();
    for v in 0..n {
        match labels.train_label(v) {
            Some(y) => {
                lambda.extend(one_hot(k, y));
                clamped[v] = true;
            }
            None => {
                lambda.extend(jittered_uniform(&mut rng, k));
                test.push(v);
            }
        }
    }
    let mut cvb = NodeCvb::new(
        &links,
        k,
        k,
        *hyper,
        None,
        diagonal,
        vec![None; n],
        lambda,
        test,
        &mut rng,
    )?;
    let outcome = cvb.run(schedule)?;
    Ok(SbmFit {
        posterior: RolePosterior::from_flat(n, k, cvb.lambda, clamped),
        stats: cvb.stats,
        diagnostics: FitDiagnostics {
            sweeps: outcome.sweeps,
            converged: outcome.converged,
            free_energy: outcome.free_energy,
        },
    })
}

/// Most probable role, which is the class. Ties go to the lowest index.
pub fn predict_sbm(posterior: &RolePosterior, v: usize) -> usize {
    argmax(posterior.lambda.row(v).iter().copied())
}
