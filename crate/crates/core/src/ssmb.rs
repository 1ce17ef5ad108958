//! Supervised single-membership blockmodel: roles and classes are distinct,
//! coupled through per-role class distributions `μ_k`.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, LabelTable};
use crate::node_cvb::{
    add_label_log_weights, argmax, normalize_log, structural_log_weights, ConvergeSpec, Diagonal,
    NodeCvb, SbmHyper,
};
use crate::rng;
use crate::sbm::{FitDiagnostics, RolePosterior};
use crate::stats::SuffStats;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsmbHyper {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Symmetric Dirichlet concentration of each role's class distribution.
    pub eta_dir: f64,
}

impl Default for SsmbHyper {
    fn default() -> Self {
        SsmbHyper {
            alpha: 1.0,
            beta1: 1.0,
            beta2: 1.0,
            eta_dir: 1.0,
        }
    }
}

impl SsmbHyper {
    pub fn structural(&self) -> SbmHyper {
        SbmHyper {
            alpha: self.alpha,
            beta1: self.beta1,
            beta2: self.beta2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.structural().validate()?;
        if !(self.eta_dir > 0.0 && self.eta_dir.is_finite()) {
            return Err(Error::Config(format!(
                "eta_dir must be positive, got {}",
                self.eta_dir
            )));
        }
        Ok(())
    }
}

/// `μ̂`, C×K; column `k` is the class distribution of role `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassRoleModel {
    pub mu_hat: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct SsmbFit {
    pub posterior: RolePosterior,
    pub mu: ClassRoleModel,
    pub stats: SuffStats,
    pub diagnostics: FitDiagnostics,
    /// Final free energy of every restart; the fit kept is the largest.
    pub restart_free_energy: Vec<f64>,
    pub best_restart: usize,
}

/// Role distribution of `v` from statistics that exclude `v`. The class term
/// is applied only when `label` is known.
pub fn update_node_ssmb(
    v: usize,
    stats: &SuffStats,
    hyper: &SsmbHyper,
    graph: &DirectedGraph,
    diagonal: Diagonal,
    label: Option<usize>,
) -> Result<Vec<f64>> {
    let k = stats.num_roles();
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 roles, got {k}")));
    }
    let self_loop = diagonal.self_pairs() && graph.multiplicity(v, v) > 0;
    let mut w = vec![0.0; k];
    structural_log_weights(stats, v, &hyper.structural(), diagonal, self_loop, &mut w);
    if let Some(y) = label {
        add_label_log_weights(stats, y, hyper.eta_dir, &mut w);
    }
    normalize_log(&mut w, || format!("node {v}"))?;
    Ok(w)
}

/// `μ̂_{c,k} = (m_{c,k} + η)/(m_{·,k} + Cη)`.
pub fn estimate_mu(stats: &SuffStats, hyper: &SsmbHyper) -> ClassRoleModel {
    let c = stats.num_classes();
    let k = stats.num_roles();
    let eta = hyper.eta_dir;
    let mu_hat = Array2::from_shape_fn((c, k), |(y, role)| {
        (stats.m(y, role) + eta) / (stats.m_col_total(role) + c as f64 * eta)
    });
    ClassRoleModel { mu_hat }
}

struct Restart {
    lambda: Vec<f64>,
    stats: SuffStats,
    diagnostics: FitDiagnostics,
}

/// Random start: every row is a Dirichlet(1) draw; a TRAIN node's row is
/// averaged with the uniform distribution over the roles `r ≡ y (mod C)`
/// reserved for its class. Without this, symmetric starts on sparse graphs
/// often merge all nodes into one role.
pub fn initial_roles(
    visible: &[Option<usize>],
    k: usize,
    c: usize,
    rng: &mut rng::StreamRng,
) -> Vec<f64> {
    let mut lambda = Vec::with_capacity(visible.len() * k);
    for y in visible {
        let mut row = rng::dirichlet(rng, 1.0, k);
        if let Some(y) = *y {
            let own: Vec<usize> = (0..k).filter(|r| r % c == y % k.min(c)).collect();
            for (r, x) in row.iter_mut().enumerate() {
                let prior = if own.contains(&r) {
                    1.0 / own.len() as f64
                } else {
                    0.0
                };
                *x = 0.5 * *x + 0.5 * prior;
            }
        }
        lambda.extend(row);
    }
    lambda
}

fn fit_once(
    graph: &DirectedGraph,
    labels: &LabelTable,
    hyper: &SsmbHyper,
    k: usize,
    schedule: &ConvergeSpec,
    diagonal: Diagonal,
    seed: u64,
    restart: usize,
) -> Result<Restart> {
    let n = graph.num_nodes();
    let links = graph.binary_links(diagonal.self_pairs());
    let mut rng = rng::substream(seed, "restart", restart as u64);
    let visible: Vec<Option<usize>> = (0..n).map(|v| labels.train_label(v)).collect();
    let lambda = initial_roles(&visible, k, labels.num_classes(), &mut rng);
    let mut cvb = NodeCvb::new(
        &links,
        k,
        labels.num_classes(),
        hyper.structural(),
        Some(hyper.eta_dir),
        diagonal,
        visible,
        lambda,
        (0..n).collect(),
        &mut rng,
    )?;
    let outcome = cvb.run(schedule)?;
    Ok(Restart {
        lambda: cvb.lambda,
        stats: cvb.stats,
        diagnostics: FitDiagnostics {
            sweeps: outcome.sweeps,
            converged: outcome.converged,
            free_energy: outcome.free_energy,
        },
    })
}

/// Fit with `k` roles from `restarts` random starts, keeping the start with
/// the highest final free energy. Every node, TRAIN and TEST, is updated.
#[allow(clippy::too_many_arguments)]
pub fn fit_ssmb(
    graph: &DirectedGraph,
    labels: &LabelTable,
    hyper: &SsmbHyper,
    k: usize,
    schedule: &ConvergeSpec,
    diagonal: Diagonal,
    restarts: usize,
    seed: u64,
) -> Result<SsmbFit> {
    hyper.validate()?;
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 roles, got {k}")));
    }
    if k < labels.num_classes() {
        log::warn!(
            "K = {k} is smaller than the number of classes ({})",
            labels.num_classes()
        );
    }
    if labels.train_nodes().is_empty() {
        return Err(Error::NoTrainNodes);
    }
    let restarts = restarts.max(1);
    let runs: Vec<Restart> = (0..restarts)
        .into_par_iter()
        .map(|r| fit_once(graph, labels, hyper, k, schedule, diagonal, seed, r))
        .collect::<Result<_>>()?;
    let finals: Vec<f64> = runs
        .iter()
        .map(|r| *r.diagnostics.free_energy.last().unwrap())
        .collect();
    let best = argmax(finals.iter().copied());
    let run = runs.into_iter().nth(best).unwrap();
    let n = graph.num_nodes();
    Ok(SsmbFit {
        posterior: RolePosterior::from_flat(n, k, run.lambda, vec![false; n]),
        mu: estimate_mu(&run.stats, hyper),
        stats: run.stats,
        diagnostics: run.diagnostics,
        restart_free_energy: finals,
        best_restart: best,
    })
}

/// `argmax_c μ̂_c · λ_v`, ties to the lowest class.
pub fn predict_ssmb(posterior: &RolePosterior, mu: &ClassRoleModel, v: usize) -> usize {
    let lam = posterior.lambda.row(v);
    argmax(mu.mu_hat.rows().into_iter().map(|row| row.dot(&lam)))
}
