//! Collapsed variational sweeps shared by the single-membership models.
//!
//! A node's role weight is the exact collapsed conditional evaluated at the
//! expected counts: `log(n_k + α)` plus, for every block whose counts move
//! when the node takes role `k`, the change in collapsed Beta-Bernoulli
//! evidence `log B(d + β₁, P − d + β₂)`. The SSMB adds a Dirichlet-categorical
//! class term.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::BinaryLinks;
use crate::rng::{self, StreamRng};
use crate::stats::SuffStats;

/// Hyperparameters of the Bernoulli-link blockmodel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmHyper {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for SbmHyper {
    fn default() -> Self {
        SbmHyper {
            alpha: 1.0,
            beta1: 1.0,
            beta2: 1.0,
        }
    }
}

impl SbmHyper {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("alpha", self.alpha),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {x}")));
            }
        }
        Ok(())
    }
}

/// Which ordered node pairs enter the Bernoulli likelihood.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Diagonal {
    /// Pairs `(v,v)` carry no likelihood; self-loop edges are ignored.
    #[default]
    ExcludeSelfPairs,
    /// All N×N pairs, self-loops counted as links.
    IncludeSelfPairs,
}

impl Diagonal {
    pub fn self_pairs(self) -> bool {
        self == Diagonal::IncludeSelfPairs
    }
}

/// Sweep stopping rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergeSpec {
    /// Stop once the largest change of any posterior entry over a sweep falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for ConvergeSpec {
    fn default() -> Self {
        ConvergeSpec {
            tol: 1e-6,
            max_sweeps: 200,
        }
    }
}

/// Sweeps between full recounts of the statistics.
pub const RECOUNT_EVERY: usize = 10;

#[inline]
/// `ln Γ(x)` for `x > 0`: shift up to `x ≥ 10`, then the Stirling series.
/// Absolute error below 1e-13; several times cheaper than a Lanczos sum.
pub fn ln_gamma(x: f64) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
    let mut x = x;
    let mut prod = 1.0;
    while x < 10.0 {
        prod *= x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))));
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + series - prod.ln()
}

pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Unnormalised log weights for node `v` taking each role, given statistics
/// that exclude `v`. `self_loop` says whether `v` has a counted self-link.
pub(crate) fn structural_log_weights(
    stats: &SuffStats,
    v: usize,
    hyper: &SbmHyper,
    diagonal: Diagonal,
    self_loop: bool,
    out: &mut [f64],
) {
    let k = stats.num_roles();
    let self_pairs = diagonal.self_pairs();
    let fv = stats.f_row(v);
    let gv = stats.g_row(v);
    let (b1, b2) = (hyper.beta1, hyper.beta2);
    // evidence of every block before `v` joins, shared by all candidate roles
    let mut before = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            let d0 = stats.d(a, b);
            let nd0 = (stats.block_pairs(a, b, self_pairs) - d0).max(0.0);
            before[a * k + b] = ln_beta(d0 + b1, nd0 + b2);
        }
    }
    let block = |a: usize, b: usize, dl: f64, dp: f64| -> f64 {
        let d0 = stats.d(a, b);
        let nd0 = (stats.block_pairs(a, b, self_pairs) - d0).max(0.0);
        let nd1 = (nd0 + dp - dl).max(0.0);
        ln_beta(d0 + dl + b1, nd1 + b2) - before[a * k + b]
    };
    for role in 0..k {
        let mut w = (stats.n_k(role) + hyper.alpha).ln();
        for b in 0..k {
            if b == role {
                let dl = fv[role] + gv[role] + if self_loop { 1.0 } else { 0.0 };
                let dp = 2.0 * stats.n_k(role) + if self_pairs { 1.0 } else { 0.0 };
                w += block(role, role, dl, dp);
            } else {
                w += block(role, b, fv[b], stats.n_k(b));
                w += block(b, role, gv[b], stats.n_k(b));
            }
        }
        out[role] = w;
    }
}

/// Adds `log((m[y,k] + η)/(m[·,k] + Cη))` for a labelled node.
pub(crate) fn add_label_log_weights(stats: &SuffStats, y: usize, eta_dir: f64, out: &mut [f64]) {
    let c = stats.num_classes() as f64;
    for (role, w) in out.iter_mut().enumerate() {
        *w += ((stats.m(y, role) + eta_dir) / (stats.m_col_total(role) + c * eta_dir)).ln();
    }
}

/// In-place softmax of log weights. Errors on non-finite input.
pub(crate) fn normalize_log(w: &mut [f64], site: impl FnOnce() -> String) -> Result<()> {
    let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || w.iter().any(|x| x.is_nan()) {
        return Err(Error::numerical(site(), "non-finite log weight"));
    }
    let mut total = 0.0;
    for x in w.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in w.iter_mut() {
        *x /= total;
    }
    Ok(())
}

/// Per-run state of a single-membership CVB fit.
pub(crate) struct NodeCvb<'a> {
    pub links: &'a BinaryLinks,
    pub k: usize,
    pub c: usize,
    pub hyper: SbmHyper,
    /// `Some` turns on the class-role term (SSMB).
    pub eta_dir: Option<f64>,
    pub diagonal: Diagonal,
    /// Labels visible to the model, one per node.
    pub labels: Vec<Option<usize>>,
    pub lambda: Vec<f64>,
    pub stats: SuffStats,
    /// Nodes updated each sweep, in sweep order.
    pub order: Vec<usize>,
}

pub(crate) struct SweepOutcome {
    pub sweeps: usize,
    pub converged: bool,
    pub free_energy: Vec<f64>,
}

impl<'a> NodeCvb<'a> {
    /// Fold all nodes in and fix the sweep order by shuffling `updated`.
    pub fn new(
        links: &'a BinaryLinks,
        k: usize,
        c: usize,
        hyper: SbmHyper,
        eta_dir: Option<f64>,
        diagonal: Diagonal,
        labels: Vec<Option<usize>>,
        lambda: Vec<f64>,
        mut updated: Vec<usize>,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        let n = labels.len();
        let stats = SuffStats::recount_nodes(k, c, links, &lambda, &vec![true; n], |v| {
            if eta_dir.is_some() {
                labels[v]
            } else {
                None
            }
        });
        updated.shuffle(rng);
        Ok(NodeCvb {
            links,
            k,
            c,
            hyper,
            eta_dir,
            diagonal,
            labels,
            lambda,
            stats,
            order: updated,
        })
    }

    fn stat_label(&self, v: usize) -> Option<usize> {
        self.eta_dir.and(self.labels[v])
    }

    fn self_loop(&self, v: usize) -> bool {
        self.diagonal.self_pairs() && self.links.self_loop[v]
    }

    /// Role distribution for `v` given the current statistics, which must exclude `v`.
    pub fn conditional(&self, v: usize, out: &mut [f64]) -> Result<()> {
        structural_log_weights(
            &self.stats,
            v,
            &self.hyper,
            self.diagonal,
            self.self_loop(v),
            out,
        );
        if let (Some(eta), Some(y)) = (self.eta_dir, self.labels[v]) {
            add_label_log_weights(&self.stats, y, eta, out);
        }
        normalize_log(out, || format!("node {v}"))
    }

    /// One pass over the sweep order; returns the largest posterior change.
    pub fn sweep(&mut self) -> Result<f64> {
        let k = self.k;
        let mut fresh = vec![0.0; k];
        let mut max_change: f64 = 0.0;
        let links = self.links;
        for idx in 0..self.order.len() {
            let v = self.order[idx];
            let label = self.stat_label(v);
            let old = self.lambda[v * k..(v + 1) * k].to_vec();
            self.stats.remove_node(v, &old, links, label)?;
            self.conditional(v, &mut fresh)?;
            for a in 0..k {
                max_change = max_change.max((fresh[a] - old[a]).abs());
            }
            self.lambda[v * k..(v + 1) * k].copy_from_slice(&fresh);
            self.stats.add_node(v, &fresh, links, label)?;
        }
        Ok(max_change)
    }

    pub fn recount(&mut self) {
        let eta = self.eta_dir;
        let labels = &self.labels;
        self.stats = SuffStats::recount_nodes(
            self.k,
            self.c,
            self.links,
            &self.lambda,
            &vec![true; labels.len()],
            |v| eta.and(labels[v]),
        );
    }

    pub fn run(&mut self, schedule: &ConvergeSpec) -> Result<SweepOutcome> {
        let mut free_energy = vec![self.free_energy()];
        if self.order.is_empty() {
            return Ok(SweepOutcome {
                sweeps: 0,
                converged: true,
                free_energy,
            });
        }
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < schedule.max_sweeps {
            let change = self.sweep()?;
            sweeps += 1;
            if sweeps % RECOUNT_EVERY == 0 {
                self.recount();
            }
            free_energy.push(self.free_energy());
            if change < schedule.tol {
                converged = true;
                break;
            }
        }
        Ok(SweepOutcome {
            sweeps,
            converged,
            free_energy,
        })
    }

    /// Collapsed log joint at the expected counts plus the entropy of the
    /// updated rows. Used to rank restarts and as a convergence trace.
    pub fn free_energy(&self) -> f64 {
        free_energy_nodes(
            &self.stats,
            &self.hyper,
            self.eta_dir,
            self.diagonal,
            &self.lambda,
            &self.order,
        )
    }
}

pub(crate) fn free_energy_nodes(
    stats: &SuffStats,
    hyper: &SbmHyper,
    eta_dir: Option<f64>,
    diagonal: Diagonal,
    lambda: &[f64],
    updated: &[usize],
) -> f64 {
    let k = stats.num_roles();
    let kf = k as f64;
    let total: f64 = stats.n().iter().sum();
    let mut f = ln_gamma(kf * hyper.alpha) - ln_gamma(total + kf * hyper.alpha);
    for a in 0..k {
        f += ln_gamma(stats.n_k(a) + hyper.alpha) - ln_gamma(hyper.alpha);
        for b in 0..k {
            let d = stats.d(a, b);
            let p = stats.block_pairs(a, b, diagonal.self_pairs());
            f += ln_beta(d + hyper.beta1, (p - d).max(0.0) + hyper.beta2)
                - ln_beta(hyper.beta1, hyper.beta2);
        }
    }
    if let Some(eta) = eta_dir {
        let c = stats.num_classes();
        let cf = c as f64;
        for a in 0..k {
            f += ln_gamma(cf * eta) - ln_gamma(stats.m_col_total(a) + cf * eta);
            for y in 0..c {
                f += ln_gamma(stats.m(y, a) + eta) - ln_gamma(eta);
            }
        }
    }
    for &v in updated {
        for a in 0..k {
            let p = lambda[v * k + a];
            if p > 0.0 {
                f -= p * p.ln();
            }
        }
    }
    f
}

/// `0.99 · uniform + 0.01 · Dirichlet(1)`.
pub(crate) fn jittered_uniform(rng: &mut StreamRng, k: usize) -> Vec<f64> {
    let jitter = rng::dirichlet(rng, 1.0, k);
    jitter.iter().map(|j| 0.99 / k as f64 + 0.01 * j).collect()
}

pub(crate) fn one_hot(k: usize, at: usize) -> Vec<f64> {
    let mut x = vec![0.0; k];
    x[at] = 1.0;
    x
}

/// Argmax with ties broken towards the lowest index.
pub(crate) fn argmax(xs: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, x) in xs.into_iter().enumerate() {
        if x > best_val {
            best = i;
            best_val = x;
        }
    }
    best
}
