//! Common interface over the three blockmodels and a name-keyed registry.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, LabelTable};
use crate::node_cvb::{argmax, ConvergeSpec, Diagonal, SbmHyper};
use crate::sbm::{fit_sbm, predict_sbm, SbmFit};
use crate::smmb::{
    fit_smmb, predict_smmb, PairUpdate, SmmbFit, SmmbHyper, SmmbOptions, SmmbSchedule,
};
use crate::softmax::CgOptions;
use crate::ssmb::{fit_ssmb, predict_ssmb, SsmbFit, SsmbHyper};
use crate::stats::SuffStats;
use crate::summary::{
    build_summary, role_class_empirical, role_class_from_mu, RoleClassTable, SummaryNetwork,
    SummaryPrior,
};

/// Resolved fitting configuration shared by all models. Fields a model does
/// not use are ignored by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Number of roles; `None` picks the model default.
    pub k: Option<usize>,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eta_dir: f64,
    pub alpha_pair: f64,
    pub beta_smmb: f64,
    pub l2_eta: f64,
    pub restarts: usize,
    pub tol: f64,
    pub max_sweeps: usize,
    pub max_outer: usize,
    /// Count self-pairs and self-loops in single-membership likelihoods.
    pub self_loops: bool,
    /// Literal update forms: self-pairs included and a per-pair receiver
    /// factor in SMMB.
    pub verbatim_updates: bool,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            k: None,
            alpha: 1.0,
            beta1: 1.0,
            beta2: 1.0,
            eta_dir: 1.0,
            alpha_pair: 1.0,
            beta_smmb: 1.0,
            l2_eta: 0.0,
            restarts: 5,
            tol: 1e-6,
            max_sweeps: 200,
            max_outer: 100,
            self_loops: false,
            verbatim_updates: false,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn diagonal(&self) -> Diagonal {
        if self.self_loops || self.verbatim_updates {
            Diagonal::IncludeSelfPairs
        } else {
            Diagonal::ExcludeSelfPairs
        }
    }

    pub fn converge(&self) -> ConvergeSpec {
        ConvergeSpec {
            tol: self.tol,
            max_sweeps: self.max_sweeps,
        }
    }

    pub fn sbm_hyper(&self) -> SbmHyper {
        SbmHyper {
            alpha: self.alpha,
            beta1: self.beta1,
            beta2: self.beta2,
        }
    }

    pub fn ssmb_hyper(&self) -> SsmbHyper {
        SsmbHyper {
            alpha: self.alpha,
            beta1: self.beta1,
            beta2: self.beta2,
            eta_dir: self.eta_dir,
        }
    }

    pub fn smmb_options(&self) -> SmmbOptions {
        SmmbOptions {
            schedule: SmmbSchedule {
                objective_tol: self.tol,
                max_outer: self.max_outer,
                posterior_tol: self.tol,
            },
            cg: CgOptions {
                l2: self.l2_eta,
                ..CgOptions::default()
            },
            update: if self.verbatim_updates {
                PairUpdate::Verbatim
            } else {
                PairUpdate::Collapsed
            },
            ..SmmbOptions::default()
        }
    }
}

/// Prior used for the summary network of `model` fitted with `config` and `k` roles.
pub fn summary_prior_for(model: &str, config: &FitConfig, k: usize) -> SummaryPrior {
    if model == "smmb" {
        SummaryPrior::Pairs {
            alpha_pair: Array2::from_elem((k, k), config.alpha_pair),
        }
    } else {
        SummaryPrior::Bernoulli {
            beta1: config.beta1,
            beta2: config.beta2,
            diagonal: config.diagonal(),
        }
    }
}

/// A fitting strategy registered under a name.
pub trait Blockmodel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Number of roles this model will use for `num_classes` classes.
    fn resolve_k(&self, config: &FitConfig, num_classes: usize) -> Result<usize>;

    fn fit(
        &self,
        graph: &DirectedGraph,
        labels: &LabelTable,
        config: &FitConfig,
    ) -> Result<Box<dyn FittedModel>>;
}

/// Class-role parameters of a fitted model, C×K.
#[derive(Clone, Debug, PartialEq)]
pub enum ClassParameters {
    /// Classes are roles; no parameters.
    None,
    /// Column-stochastic class distributions per role.
    Mu(Array2<f64>),
    /// Softmax weights.
    Eta(Array2<f64>),
}

/// Everything downstream code needs from a fit.
pub trait FittedModel: Send {
    fn model_name(&self) -> &'static str;

    fn num_roles(&self) -> usize;

    /// Role distribution per node, N×K: `λ_v`, or `λ̄_v` for mixed membership.
    fn node_roles(&self) -> Array2<f64>;

    fn class_parameters(&self) -> ClassParameters;

    fn predict(&self, v: usize) -> usize;

    fn stats(&self) -> &SuffStats;

    fn summary_prior(&self) -> SummaryPrior;

    fn role_class(&self, labels: &LabelTable) -> RoleClassTable;

    fn sweeps(&self) -> usize;

    fn converged(&self) -> bool;

    /// Free energy per sweep, or the η objective per outer iteration.
    fn trace(&self) -> Vec<f64>;

    fn diagnostics(&self) -> serde_json::Value;

    /// Per-interaction role-pair posteriors (I×K², row-major), for mixed membership.
    fn pair_posterior(&self) -> Option<&[f64]> {
        None
    }

    fn summary(&self) -> SummaryNetwork {
        build_summary(self.stats(), &self.summary_prior())
    }
}

/// Prediction from exported node roles and class parameters.
pub fn predict_from_parameters(
    node_roles: &Array2<f64>,
    params: &ClassParameters,
    v: usize,
) -> usize {
    let lam = node_roles.row(v);
    match params {
        ClassParameters::None => argmax(lam.iter().copied()),
        ClassParameters::Mu(m) | ClassParameters::Eta(m) => {
            argmax(m.rows().into_iter().map(|row| row.dot(&lam)))
        }
    }
}

pub struct Sbm;
pub struct Ssmb;
pub struct Smmb;

struct SbmFitted {
    fit: SbmFit,
    beta: (f64, f64),
    diagonal: Diagonal,
}

struct SsmbFitted {
    fit: SsmbFit,
    beta: (f64, f64),
    diagonal: Diagonal,
}

struct SmmbFitted {
    fit: SmmbFit,
    node_roles: Array2<f64>,
    alpha_pair: Array2<f64>,
}

impl Blockmodel for Sbm {
    fn name(&self) -> &'static str {
        "sbm"
    }

    fn resolve_k(&self, config: &FitConfig, num_classes: usize) -> Result<usize> {
        match config.k {
            Some(k) if k != num_classes => Err(Error::Config(format!(
                "the SBM identifies roles with classes, so K must equal the number of classes \
                 (K = {k}, C = {num_classes})"
            ))),
            _ => Ok(num_classes),
        }
    }

    fn fit(
        &self,
        graph: &DirectedGraph,
        labels: &LabelTable,
        config: &FitConfig,
    ) -> Result<Box<dyn FittedModel>> {
        self.resolve_k(config, labels.num_classes())?;
        let fit = fit_sbm(
            graph,
            labels,
            &config.sbm_hyper(),
            &config.converge(),
            config.diagonal(),
            config.seed,
        )?;
        Ok(Box::new(SbmFitted {
            fit,
            beta: (config.beta1, config.beta2),
            diagonal: config.diagonal(),
        }))
    }
}

impl FittedModel for SbmFitted {
    fn model_name(&self) -> &'static str {
        "sbm"
    }

    fn num_roles(&self) -> usize {
        self.fit.posterior.num_roles()
    }

    fn node_roles(&self) -> Array2<f64> {
        self.fit.posterior.lambda.clone()
    }

    fn class_parameters(&self) -> ClassParameters {
        ClassParameters::None
    }

    fn predict(&self, v: usize) -> usize {
        predict_sbm(&self.fit.posterior, v)
    }

    fn stats(&self) -> &SuffStats {
        &self.fit.stats
    }

    fn summary_prior(&self) -> SummaryPrior {
        SummaryPrior::Bernoulli {
            beta1: self.beta.0,
            beta2: self.beta.1,
            diagonal: self.diagonal,
        }
    }

    fn role_class(&self, labels: &LabelTable) -> RoleClassTable {
        role_class_empirical(&self.fit.posterior.lambda, labels)
    }

    fn sweeps(&self) -> usize {
        self.fit.diagnostics.sweeps
    }

    fn converged(&self) -> bool {
        self.fit.diagnostics.converged
    }

    fn trace(&self) -> Vec<f64> {
        self.fit.diagnostics.free_energy.clone()
    }

    fn diagnostics(&self) -> serde_json::Value {
        json!({ "sweeps": self.sweeps(), "converged": self.converged() })
    }
}

impl Blockmodel for Ssmb {
    fn name(&self) -> &'static str {
        "ssmb"
    }

    fn resolve_k(&self, config: &FitConfig, num_classes: usize) -> Result<usize> {
        Ok(config.k.unwrap_or(num_classes + 2))
    }

    fn fit(
        &self,
        graph: &DirectedGraph,
        labels: &LabelTable,
        config: &FitConfig,
    ) -> Result<Box<dyn FittedModel>> {
        let k = self.resolve_k(config, labels.num_classes())?;
        let fit = fit_ssmb(
            graph,
            labels,
            &config.ssmb_hyper(),
            k,
            &config.converge(),
            config.diagonal(),
            config.restarts,
            config.seed,
        )?;
        Ok(Box::new(SsmbFitted {
            fit,
            beta: (config.beta1, config.beta2),
            diagonal: config.diagonal(),
        }))
    }
}

impl FittedModel for SsmbFitted {
    fn model_name(&self) -> &'static str {
        "ssmb"
    }

    fn num_roles(&self) -> usize {
        self.fit.posterior.num_roles()
    }

    fn node_roles(&self) -> Array2<f64> {
        self.fit.posterior.lambda.clone()
    }

    fn class_parameters(&self) -> ClassParameters {
        ClassParameters::Mu(self.fit.mu.mu_hat.clone())
    }

    fn predict(&self, v: usize) -> usize {
        predict_ssmb(&self.fit.posterior, &self.fit.mu, v)
    }

    fn stats(&self) -> &SuffStats {
        &self.fit.stats
    }

    fn summary_prior(&self) -> SummaryPrior {
        SummaryPrior::Bernoulli {
            beta1: self.beta.0,
            beta2: self.beta.1,
            diagonal: self.diagonal,
        }
    }

    fn role_class(&self, _labels: &LabelTable) -> RoleClassTable {
        role_class_from_mu(&self.fit.mu.mu_hat)
    }

    fn sweeps(&self) -> usize {
        self.fit.diagnostics.sweeps
    }

    fn converged(&self) -> bool {
        self.fit.diagnostics.converged
    }

    fn trace(&self) -> Vec<f64> {
        self.fit.diagnostics.free_energy.clone()
    }

    fn diagnostics(&self) -> serde_json::Value {
        json!({
            "sweeps": self.sweeps(),
            "converged": self.converged(),
            "restart_free_energy": self.fit.restart_free_energy,
            "best_restart": self.fit.best_restart,
            "prediction": "argmax over classes of mu_hat_c . lambda_v",
        })
    }
}

impl Blockmodel for Smmb {
    fn name(&self) -> &'static str {
        "smmb"
    }

    fn resolve_k(&self, config: &FitConfig, num_classes: usize) -> Result<usize> {
        Ok(config.k.unwrap_or(num_classes + 2))
    }

    fn fit(
        &self,
        graph: &DirectedGraph,
        labels: &LabelTable,
        config: &FitConfig,
    ) -> Result<Box<dyn FittedModel>> {
        let k = self.resolve_k(config, labels.num_classes())?;
        let hyper = SmmbHyper::symmetric(k, config.alpha_pair, config.beta_smmb);
        let fit = fit_smmb(graph, labels, &hyper, &config.smmb_options(), config.seed)?;
        let node_roles = fit.posterior.node_means(graph);
        Ok(Box::new(SmmbFitted {
            fit,
            node_roles,
            alpha_pair: hyper.alpha_pair,
        }))
    }
}

impl FittedModel for SmmbFitted {
    fn model_name(&self) -> &'static str {
        "smmb"
    }

    fn num_roles(&self) -> usize {
        self.fit.posterior.num_roles()
    }

    fn node_roles(&self) -> Array2<f64> {
        self.node_roles.clone()
    }

    fn class_parameters(&self) -> ClassParameters {
        ClassParameters::Eta(self.fit.eta.eta.clone())
    }

    fn predict(&self, v: usize) -> usize {
        predict_smmb(&self.node_roles.row(v).to_vec(), &self.fit.eta)
    }

    fn stats(&self) -> &SuffStats {
        &self.fit.stats
    }

    fn summary_prior(&self) -> SummaryPrior {
        SummaryPrior::Pairs {
            alpha_pair: self.alpha_pair.clone(),
        }
    }

    fn role_class(&self, labels: &LabelTable) -> RoleClassTable {
        role_class_empirical(&self.node_roles, labels)
    }

    fn sweeps(&self) -> usize {
        self.fit.diagnostics.outer_iterations
    }

    fn converged(&self) -> bool {
        self.fit.diagnostics.converged
    }

    fn trace(&self) -> Vec<f64> {
        self.fit.diagnostics.objective.clone()
    }

    fn diagnostics(&self) -> serde_json::Value {
        serde_json::to_value(&self.fit.diagnostics).unwrap_or_default()
    }

    fn pair_posterior(&self) -> Option<&[f64]> {
        Some(self.fit.posterior.flat())
    }
}

/// Models by name.
pub struct ModelRegistry {
    models: BTreeMap<&'static str, Box<dyn Blockmodel>>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        ModelRegistry {
            models: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Sbm));
        r.register(Box::new(Ssmb));
        r.register(Box::new(Smmb));
        r
    }

    pub fn register(&mut self, model: Box<dyn Blockmodel>) {
        self.models.insert(model.name(), model);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Blockmodel> {
        self.models
            .get(name.to_ascii_lowercase().as_str())
            .map(|m| m.as_ref())
            .ok_or_else(|| Error::UnknownModel(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.models.keys().copied().collect()
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
