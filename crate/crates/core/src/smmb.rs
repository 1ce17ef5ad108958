//! Supervised mixed-membership blockmodel.
//!
//! Each interaction `i = (s_i, r_i)` carries a K×K posterior over its
//! (sender role, receiver role) pair. Labels enter through a softmax on each
//! node's average endpoint role vector `λ̄_v`, with weights `η` refit by
//! conjugate gradient after every sweep.

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, LabelTable};
use crate::node_cvb::argmax;
use crate::rng;
use crate::softmax::{self, CgOptions, CgTraceRow, NodeTerm, SoftmaxData, SoftmaxWeights};
use crate::stats::SuffStats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmmbHyper {
    /// K×K Dirichlet concentration over role pairs.
    pub alpha_pair: Array2<f64>,
    /// Symmetric Dirichlet concentration of each role's distribution over nodes.
    pub beta: f64,
}

impl SmmbHyper {
    pub fn symmetric(k: usize, alpha_pair: f64, beta: f64) -> Self {
        SmmbHyper {
            alpha_pair: Array2::from_elem((k, k), alpha_pair),
            beta,
        }
    }

    pub fn num_roles(&self) -> usize {
        self.alpha_pair.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha_pair.nrows() != self.alpha_pair.ncols() {
            return Err(Error::Config("alpha_pair must be square".into()));
        }
        if self.alpha_pair.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::Config("alpha_pair entries must be positive".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Which form of the structural factor to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairUpdate {
    /// Exact collapsed conditional of the generative process: sender and
    /// receiver slots share each role's node distribution, so both use the
    /// combined endpoint counts `f + g`.
    #[default]
    Collapsed,
    /// Sender counts `f` for the sender and receiver counts `g` for the
    /// receiver, with the `δ_{k1,k2}` receiver-denominator correction.
    Verbatim,
}

/// Per-interaction role-pair posteriors, row-major `I × K × K`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionPosterior {
    k: usize,
    lambda: Vec<f64>,
}

impl InteractionPosterior {
    pub fn new(k: usize, lambda: Vec<f64>) -> Self {
        assert_eq!(lambda.len() % (k * k), 0);
        InteractionPosterior { k, lambda }
    }

    pub fn num_roles(&self) -> usize {
        self.k
    }

    pub fn num_interactions(&self) -> usize {
        self.lambda.len() / (self.k * self.k)
    }

    pub fn pair(&self, i: usize) -> &[f64] {
        let kk = self.k * self.k;
        &self.lambda[i * kk..(i + 1) * kk]
    }

    pub fn flat(&self) -> &[f64] {
        &self.lambda
    }

    /// `λ_{s_i}`: row sums.
    pub fn sender_marginal(&self, i: usize) -> Vec<f64> {
        let k = self.k;
        let p = self.pair(i);
        (0..k).map(|a| p[a * k..(a + 1) * k].iter().sum()).collect()
    }

    /// `λ_{r_i}`: column sums.
    pub fn receiver_marginal(&self, i: usize) -> Vec<f64> {
        let k = self.k;
        let p = self.pair(i);
        (0..k).map(|b| (0..k).map(|a| p[a * k + b]).sum()).collect()
    }

    /// Marginal of endpoint slot `2i` (sender) or `2i + 1` (receiver).
    pub fn slot_marginal(&self, slot: usize) -> Vec<f64> {
        if slot % 2 == 0 {
            self.sender_marginal(slot / 2)
        } else {
            self.receiver_marginal(slot / 2)
        }
    }

    /// `λ̄_v` for every node, recomputed from scratch. Nodes with no
    /// interactions get a zero row.
    pub fn node_means(&self, graph: &DirectedGraph) -> Array2<f64> {
        let k = self.k;
        let mut out = Array2::zeros((graph.num_nodes(), k));
        for (i, &(s, r)) in graph.edges().iter().enumerate() {
            let ms = self.sender_marginal(i);
            let mr = self.receiver_marginal(i);
            for a in 0..k {
                out[[s, a]] += ms[a];
                out[[r, a]] += mr[a];
            }
        }
        for v in 0..graph.num_nodes() {
            let n = graph.degree(v);
            if n > 0 {
                out.row_mut(v).mapv_inplace(|x| x / n as f64);
            }
        }
        out
    }
}

/// Endpoint slots of each node: `2i` when `v = s_i`, `2i + 1` when `v = r_i`.
pub fn node_slots(graph: &DirectedGraph) -> Vec<Vec<usize>> {
    let mut slots = vec![Vec::new(); graph.num_nodes()];
    for (i, &(s, r)) in graph.edges().iter().enumerate() {
        slots[s].push(2 * i);
        slots[r].push(2 * i + 1);
    }
    slots.iter_mut().for_each(|s| s.sort_unstable());
    slots
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log h_{i,v,k}` evaluated directly from its definition, excluding endpoint
/// `slot` of node `v`:
///
/// `h_{i,v,k} = Σ_c exp(η_{c,k}/n_v) Π_{j≠slot} Σ_l λ_{j,l} exp(η_{c,l}/n_v)`
pub fn compute_log_h(
    v: usize,
    slot: usize,
    eta: &SoftmaxWeights,
    posterior: &InteractionPosterior,
    graph: &DirectedGraph,
) -> Vec<f64> {
    let k = posterior.num_roles();
    let c = eta.num_classes();
    let n = graph.degree(v) as f64;
    let slots = node_slots(graph);
    let mut log_prod = vec![0.0; c];
    for &j in &slots[v] {
        if j == slot {
            continue;
        }
        let lam = posterior.slot_marginal(j);
        for y in 0..c {
            let terms: Vec<f64> = (0..k).map(|l| lam[l].ln() + eta.eta[[y, l]] / n).collect();
            log_prod[y] += log_sum_exp(&terms);
        }
    }
    (0..k)
        .map(|a| {
            let terms: Vec<f64> = (0..c).map(|y| eta.eta[[y, a]] / n + log_prod[y]).collect();
            log_sum_exp(&terms)
        })
        .collect()
}

/// `h_{i,v}` as a plain vector; see [`compute_log_h`].
pub fn compute_h(
    v: usize,
    slot: usize,
    eta: &SoftmaxWeights,
    posterior: &InteractionPosterior,
    graph: &DirectedGraph,
) -> Vec<f64> {
    compute_log_h(v, slot, eta, posterior, graph)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Running per-node, per-class products `Π_j Σ_l λ_{j,l} exp(η_{c,l}/n_v)`
/// over a labelled node's endpoints, kept as sums of logs so each
/// interaction update divides one factor out and multiplies one in.
#[derive(Clone, Debug)]
pub struct HCache {
    k: usize,
    c: usize,
    active: Vec<bool>,
    /// `exp(η_{c,k}/n_v − M_{v,c})`, N × C × K
    scaled: Vec<f64>,
    /// `M_{v,c} = max_k η_{c,k}/n_v`
    shift: Vec<f64>,
    /// `Σ_j log factor_{j,c}`, N × C
    log_prod: Vec<f64>,
    /// `log factor_{slot,c}`, 2I × C
    slot_log: Vec<f64>,
    slot_node: Vec<usize>,
    recomputes: usize,
}

/// Factors below this trigger a from-scratch product for the node.
const FACTOR_FLOOR: f64 = 1e-12;

impl HCache {
    /// Cache over the nodes flagged in `active` (labelled nodes).
    pub fn build(
        graph: &DirectedGraph,
        posterior: &InteractionPosterior,
        eta: &SoftmaxWeights,
        active: Vec<bool>,
    ) -> Self {
        let k = posterior.num_roles();
        let c = eta.num_classes();
        let n = graph.num_nodes();
        let mut cache = HCache {
            k,
            c,
            active,
            scaled: vec![0.0; n * c * k],
            shift: vec![0.0; n * c],
            log_prod: vec![0.0; n * c],
            slot_log: vec![0.0; 2 * graph.num_edges() * c],
            slot_node: graph.edges().iter().flat_map(|&(s, r)| [s, r]).collect(),
            recomputes: 0,
        };
        for v in 0..n {
            let deg = graph.degree(v);
            if !cache.active[v] || deg == 0 {
                cache.active[v] = false;
                continue;
            }
            let nf = deg as f64;
            for y in 0..c {
                let m = (0..k)
                    .map(|a| eta.eta[[y, a]] / nf)
                    .fold(f64::NEG_INFINITY, f64::max);
                cache.shift[v * c + y] = m;
                for a in 0..k {
                    cache.scaled[(v * c + y) * k + a] = (eta.eta[[y, a]] / nf - m).exp();
                }
            }
        }
        for slot in 0..cache.slot_node.len() {
            let v = cache.slot_node[slot];
            if cache.active[v] {
                let lam = posterior.slot_marginal(slot);
                cache.set_slot(slot, &lam);
            }
        }
        cache
    }

    pub fn is_active(&self, v: usize) -> bool {
        self.active[v]
    }

    /// How many guarded from-scratch recomputations have run.
    pub fn recomputes(&self) -> usize {
        self.recomputes
    }

    fn factor_log(&self, v: usize, lam: &[f64], out: &mut [f64]) -> bool {
        let (k, c) = (self.k, self.c);
        let mut tiny = false;
        for y in 0..c {
            let sc = &self.scaled[(v * c + y) * k..(v * c + y + 1) * k];
            let s: f64 = lam.iter().zip(sc).map(|(l, e)| l * e).sum();
            tiny |= s < FACTOR_FLOOR;
            out[y] = s.ln() + self.shift[v * c + y];
        }
        tiny
    }

    fn set_slot(&mut self, slot: usize, lam: &[f64]) {
        let c = self.c;
        let v = self.slot_node[slot];
        let mut fresh = vec![0.0; c];
        self.factor_log(v, lam, &mut fresh);
        for y in 0..c {
            self.log_prod[v * c + y] += fresh[y] - self.slot_log[slot * c + y];
            self.slot_log[slot * c + y] = fresh[y];
        }
    }

    /// Replace endpoint `slot`'s factor after its interaction was updated.
    pub fn update_slot(&mut self, slot: usize, lam: &[f64], slots_of_node: &[usize]) {
        let v = self.slot_node[slot];
        if !self.active[v] {
            return;
        }
        let c = self.c;
        let mut fresh = vec![0.0; c];
        let tiny = self.factor_log(v, lam, &mut fresh);
        for y in 0..c {
            self.log_prod[v * c + y] += fresh[y] - self.slot_log[slot * c + y];
            self.slot_log[slot * c + y] = fresh[y];
        }
        if tiny {
            self.recomputes += 1;
            for y in 0..c {
                self.log_prod[v * c + y] = slots_of_node
                    .iter()
                    .map(|&j| self.slot_log[j * c + y])
                    .sum();
            }
        }
    }

    /// `log h_{i,v,k}` from cached products, excluding endpoint `slot`.
    pub fn log_h(&self, slot: usize) -> Vec<f64> {
        let (k, c) = (self.k, self.c);
        let v = self.slot_node[slot];
        (0..k)
            .map(|a| {
                let terms: Vec<f64> = (0..c)
                    .map(|y| {
                        self.scaled[(v * c + y) * k + a].ln()
                            + self.shift[v * c + y]
                            + self.log_prod[v * c + y]
                            - self.slot_log[slot * c + y]
                    })
                    .collect();
                log_sum_exp(&terms)
            })
            .collect()
    }

    /// `h_{i,v,k} / (h_{i,v} · λ_v^old)` for every role `k`, where the old
    /// marginal is the one currently cached for `slot`.
    pub fn normalized_h(&self, slot: usize, out: &mut [f64]) -> Result<()> {
        let (k, c) = (self.k, self.c);
        let v = self.slot_node[slot];
        let lp = &self.log_prod[v * c..(v + 1) * c];
        let top = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = lp.iter().map(|l| (l - top).exp()).sum();
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::numerical(
                format!("h cache, slot {slot}"),
                "denominator ≤ 0",
            ));
        }
        for a in 0..k {
            let mut num = 0.0;
            for y in 0..c {
                let w = self.shift[v * c + y] + lp[y] - self.slot_log[slot * c + y] - top;
                num += self.scaled[(v * c + y) * k + a] * w.exp();
            }
            out[a] = num / denom;
        }
        Ok(())
    }
}

/// Whether `η` is learned or held fixed.
#[derive(Clone, Debug, PartialEq)]
pub enum EtaMode {
    Learn,
    Frozen(SoftmaxWeights),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmmbSchedule {
    /// Relative change of the η objective between outer iterations.
    pub objective_tol: f64,
    pub max_outer: usize,
    /// Largest posterior change over a sweep; the stopping rule when η is frozen
    /// and for held-out inference.
    pub posterior_tol: f64,
}

impl Default for SmmbSchedule {
    fn default() -> Self {
        SmmbSchedule {
            objective_tol: 1e-6,
            max_outer: 100,
            posterior_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct SmmbDiagnostics {
    pub outer_iterations: usize,
    pub converged: bool,
    /// η objective after each CG maximisation.
    pub objective: Vec<f64>,
    /// Largest posterior change of each sweep.
    pub max_change: Vec<f64>,
    /// CG trace of the final outer iteration.
    pub cg_trace: Vec<CgTraceRow>,
    pub cg_failures: usize,
    pub h_recomputes: usize,
}

#[derive(Clone, Debug)]
pub struct SmmbFit {
    pub posterior: InteractionPosterior,
    pub eta: SoftmaxWeights,
    pub stats: SuffStats,
    pub diagnostics: SmmbDiagnostics,
}

/// Working state of one SMMB run.
pub struct SmmbState<'a> {
    graph: &'a DirectedGraph,
    hyper: SmmbHyper,
    update: PairUpdate,
    /// Labels that enter the softmax terms.
    visible: Vec<Option<usize>>,
    slots: Vec<Vec<usize>>,
    pub posterior: InteractionPosterior,
    pub eta: SoftmaxWeights,
    pub stats: SuffStats,
    cache: HCache,
    /// Σ of endpoint marginals per node, N × K
    node_sum: Vec<f64>,
}

impl<'a> SmmbState<'a> {
    pub fn new(
        graph: &'a DirectedGraph,
        hyper: SmmbHyper,
        update: PairUpdate,
        visible: Vec<Option<usize>>,
        posterior: InteractionPosterior,
        eta: SoftmaxWeights,
    ) -> Self {
        let k = posterior.num_roles();
        let stats = SuffStats::recount_interactions(
            graph,
            k,
            posterior.flat(),
            &vec![true; graph.num_edges()],
        );
        let active = visible.iter().map(Option::is_some).collect();
        let cache = HCache::build(graph, &posterior, &eta, active);
        let mut state = SmmbState {
            graph,
            hyper,
            update,
            visible,
            slots: node_slots(graph),
            posterior,
            eta,
            stats,
            cache,
            node_sum: Vec::new(),
        };
        state.node_sum = state.recompute_node_sum();
        state
    }

    fn recompute_node_sum(&self) -> Vec<f64> {
        let k = self.posterior.k;
        let means = self.posterior.node_means(self.graph);
        let mut out = vec![0.0; self.graph.num_nodes() * k];
        for v in 0..self.graph.num_nodes() {
            let n = self.graph.degree(v) as f64;
            for a in 0..k {
                out[v * k + a] = means[[v, a]] * n;
            }
        }
        out
    }

    /// Incrementally maintained `λ̄_v`.
    pub fn node_mean(&self, v: usize) -> Vec<f64> {
        let k = self.posterior.k;
        let n = self.graph.degree(v).max(1) as f64;
        self.node_sum[v * k..(v + 1) * k]
            .iter()
            .map(|x| x / n)
            .collect()
    }

    pub fn cache(&self) -> &HCache {
        &self.cache
    }

    pub fn set_eta(&mut self, eta: SoftmaxWeights) {
        self.eta = eta;
        self.rebuild_cache();
    }

    pub fn rebuild_cache(&mut self) {
        let active = self.visible.iter().map(Option::is_some).collect();
        self.cache = HCache::build(self.graph, &self.posterior, &self.eta, active);
    }

    pub fn recount(&mut self) {
        let k = self.posterior.k;
        self.stats = SuffStats::recount_interactions(
            self.graph,
            k,
            self.posterior.flat(),
            &vec![true; self.graph.num_edges()],
        );
        self.node_sum = self.recompute_node_sum();
    }

    /// Softmax term of one endpoint, centred to a zero maximum.
    fn endpoint_term(&self, v: usize, slot: usize, out: &mut [f64]) -> Result<()> {
        let y = self.visible[v].expect("endpoint term needs a label");
        self.cache.normalized_h(slot, out)?;
        let n = self.graph.degree(v) as f64;
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.eta.eta[[y, a]] / n - *o;
        }
        let top = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.iter_mut().for_each(|o| *o -= top);
        Ok(())
    }

    /// Role-pair posterior for interaction `i` from statistics that exclude it.
    pub fn conditional(&self, i: usize, out: &mut [f64]) -> Result<()> {
        let k = self.posterior.k;
        let (s, r) = self.graph.edge(i);
        let st = &self.stats;
        let beta = self.hyper.beta;
        let nbeta = self.graph.num_nodes() as f64 * beta;
        let mut send = vec![0.0; k];
        let mut recv = vec![0.0; k];
        if self.visible[s].is_some() && self.cache.is_active(s) {
            self.endpoint_term(s, 2 * i, &mut send)?;
        }
        if self.visible[r].is_some() && self.cache.is_active(r) {
            self.endpoint_term(r, 2 * i + 1, &mut recv)?;
        }
        let same = (s == r) as u8 as f64;
        // per-role sender and receiver factors; `_diag` variants apply when a == b
        let mut sender = vec![0.0; k];
        let mut recv_off = vec![0.0; k];
        let mut recv_diag = vec![0.0; k];
        for a in 0..k {
            let (es, er) = (send[a].exp(), recv[a].exp());
            match self.update {
                PairUpdate::Collapsed => {
                    let cs = st.f(s, a) + st.g(s, a);
                    let cr = st.f(r, a) + st.g(r, a);
                    let ca = st.f_total(a) + st.g_total(a);
                    sender[a] = es * (cs + beta) / (ca + nbeta);
                    recv_off[a] = er * (cr + beta) / (ca + nbeta);
                    recv_diag[a] = er * (cr + beta + same) / (ca + nbeta + 1.0);
                }
                PairUpdate::Verbatim => {
                    sender[a] = es * (st.f(s, a) + beta) / (st.f_total(a) + nbeta);
                    recv_off[a] = er * (st.g(r, a) + beta) / (st.g_total(a) + nbeta);
                    recv_diag[a] = er * (st.g(r, a) + beta) / (st.g_total(a) + nbeta + 1.0);
                }
            }
        }
        let d = st.d_matrix();
        let alpha = &self.hyper.alpha_pair;
        let mut total = 0.0;
        for a in 0..k {
            for b in 0..k {
                let rb = if a == b { recv_diag[b] } else { recv_off[b] };
                let w = (d[a * k + b] + alpha[[a, b]]) * sender[a] * rb;
                out[a * k + b] = w;
                total += w;
            }
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::numerical(
                format!("interaction {i}"),
                "non-finite pair weight",
            ));
        }
        out.iter_mut().for_each(|w| *w /= total);
        Ok(())
    }

    /// Remove, recompute and re-add interaction `i`; returns the largest entry change.
    pub fn update_interaction(&mut self, i: usize) -> Result<f64> {
        let k = self.posterior.k;
        let kk = k * k;
        let (s, r) = self.graph.edge(i);
        let old = self.posterior.pair(i).to_vec();
        self.stats.remove_interaction(i, s, r, &old)?;
        let mut fresh = vec![0.0; kk];
        self.conditional(i, &mut fresh)?;
        self.stats.add_interaction(i, s, r, &fresh)?;
        let old_s = self.posterior.sender_marginal(i);
        let old_r = self.posterior.receiver_marginal(i);
        self.posterior.lambda[i * kk..(i + 1) * kk].copy_from_slice(&fresh);
        let new_s = self.posterior.sender_marginal(i);
        let new_r = self.posterior.receiver_marginal(i);
        for a in 0..k {
            self.node_sum[s * k + a] += new_s[a] - old_s[a];
            self.node_sum[r * k + a] += new_r[a] - old_r[a];
        }
        self.cache.update_slot(2 * i, &new_s, &self.slots[s]);
        self.cache.update_slot(2 * i + 1, &new_r, &self.slots[r]);
        Ok(old
            .iter()
            .zip(&fresh)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn sweep(&mut self, order: &[usize]) -> Result<f64> {
        let mut change: f64 = 0.0;
        for &i in order {
            change = change.max(self.update_interaction(i)?);
        }
        Ok(change)
    }

    /// Objective inputs: every visible-labelled node with at least one endpoint.
    pub fn softmax_data(&self) -> Result<SoftmaxData> {
        softmax_data(
            self.graph,
            &self.posterior,
            &self.slots,
            &self.visible,
            self.eta.num_classes(),
        )
    }
}

fn softmax_data(
    graph: &DirectedGraph,
    posterior: &InteractionPosterior,
    slots: &[Vec<usize>],
    visible: &[Option<usize>],
    c: usize,
) -> Result<SoftmaxData> {
    let k = posterior.num_roles();
    let nodes = (0..graph.num_nodes())
        .filter_map(|v| {
            let y = visible[v]?;
            if slots[v].is_empty() {
                return None;
            }
            let marginals = slots[v]
                .iter()
                .flat_map(|&j| posterior.slot_marginal(j))
                .collect();
            Some(NodeTerm {
                label: y,
                marginals,
            })
        })
        .collect();
    SoftmaxData::new(k, c, nodes)
}

/// The η-objective inputs of a fitted posterior over the TRAIN nodes.
pub fn training_data(
    graph: &DirectedGraph,
    labels: &LabelTable,
    posterior: &InteractionPosterior,
) -> Result<SoftmaxData> {
    let visible: Vec<Option<usize>> = (0..graph.num_nodes())
        .map(|v| labels.train_label(v))
        .collect();
    softmax_data(
        graph,
        posterior,
        &node_slots(graph),
        &visible,
        labels.num_classes(),
    )
}

/// Options of an SMMB fit beyond the hyperparameters.
#[derive(Clone, Debug)]
pub struct SmmbOptions {
    pub schedule: SmmbSchedule,
    pub cg: CgOptions,
    pub update: PairUpdate,
    pub eta: EtaMode,
}

impl Default for SmmbOptions {
    fn default() -> Self {
        SmmbOptions {
            schedule: SmmbSchedule::default(),
            cg: CgOptions::default(),
            update: PairUpdate::default(),
            eta: EtaMode::Learn,
        }
    }
}

fn run(
    graph: &DirectedGraph,
    visible: Vec<Option<usize>>,
    c: usize,
    hyper: &SmmbHyper,
    opts: &SmmbOptions,
    seed: u64,
) -> Result<SmmbFit> {
    hyper.validate()?;
    let k = hyper.num_roles();
    let kk = k * k;
    let mut rng = rng::substream(seed, "init", 0);
    let mut lambda = Vec::with_capacity(graph.num_edges() * kk);
    for _ in 0..graph.num_edges() {
        lambda.extend(rng::dirichlet(&mut rng, 1.0, kk));
    }
    let mut order: Vec<usize> = (0..graph.num_edges()).collect();
    order.shuffle(&mut rng);
    let eta0 = match &opts.eta {
        EtaMode::Learn => SoftmaxWeights::zeros(c, k),
        EtaMode::Frozen(eta) => {
            if eta.num_classes() != c || eta.num_roles() != k {
                return Err(Error::Config("frozen η has the wrong shape".into()));
            }
            eta.clone()
        }
    };
    let learn = opts.eta == EtaMode::Learn;
    let mut state = SmmbState::new(
        graph,
        hyper.clone(),
        opts.update,
        visible,
        InteractionPosterior::new(k, lambda),
        eta0,
    );
    let mut diag = SmmbDiagnostics::default();
    let mut previous: Option<f64> = None;
    for outer in 1..=opts.schedule.max_outer {
        let change = state.sweep(&order)?;
        diag.max_change.push(change);
        diag.outer_iterations = outer;
        if outer % crate::node_cvb::RECOUNT_EVERY == 0 {
            state.recount();
        }
        if learn {
            let data = state.softmax_data()?;
            let cg = softmax::maximize(&state.eta, &data, &opts.cg)?;
            if cg.line_search_failed {
                diag.cg_failures += 1;
            }
            diag.objective.push(cg.value);
            diag.cg_trace = cg.trace;
            diag.h_recomputes += state.cache().recomputes();
            state.set_eta(cg.weights);
            if let Some(prev) = previous {
                let rel = (cg.value - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
                if rel < opts.schedule.objective_tol {
                    diag.converged = true;
                    break;
                }
            }
            previous = Some(cg.value);
        } else {
            if outer % crate::node_cvb::RECOUNT_EVERY == 0 {
                diag.h_recomputes += state.cache().recomputes();
                state.rebuild_cache();
            }
            if change < opts.schedule.posterior_tol {
                diag.converged = true;
                break;
            }
        }
    }
    Ok(SmmbFit {
        posterior: state.posterior,
        eta: state.eta,
        stats: state.stats,
        diagnostics: diag,
    })
}

/// Fit on the TRAIN labels of `labels` with `hyper.num_roles()` roles.
pub fn fit_smmb(
    graph: &DirectedGraph,
    labels: &LabelTable,
    hyper: &SmmbHyper,
    opts: &SmmbOptions,
    seed: u64,
) -> Result<SmmbFit> {
    if graph.num_edges() == 0 {
        return Err(Error::Config("SMMB needs at least one interaction".into()));
    }
    let visible: Vec<Option<usize>> = (0..graph.num_nodes())
        .map(|v| labels.train_label(v))
        .collect();
    if !visible
        .iter()
        .enumerate()
        .any(|(v, y)| y.is_some() && graph.degree(v) > 0)
    {
        return Err(Error::NoTrainNodes);
    }
    run(graph, visible, labels.num_classes(), hyper, opts, seed)
}

/// Unsupervised mixed-membership fit: the same sweeps with no label terms.
pub fn fit_unsupervised(
    graph: &DirectedGraph,
    num_classes: usize,
    hyper: &SmmbHyper,
    opts: &SmmbOptions,
    seed: u64,
) -> Result<SmmbFit> {
    let k = hyper.num_roles();
    let opts = SmmbOptions {
        eta: EtaMode::Frozen(SoftmaxWeights::zeros(num_classes, k)),
        ..opts.clone()
    };
    run(
        graph,
        vec![None; graph.num_nodes()],
        num_classes,
        hyper,
        &opts,
        seed,
    )
}

/// Re-infer the interactions touching `test_nodes` with `η` fixed. Softmax
/// terms stay on TRAIN endpoints and are dropped on TEST endpoints.
pub fn infer_heldout(
    graph: &DirectedGraph,
    labels: &LabelTable,
    fit: &SmmbFit,
    hyper: &SmmbHyper,
    test_nodes: &[usize],
    update: PairUpdate,
    schedule: &SmmbSchedule,
) -> Result<InteractionPosterior> {
    let mut is_test = vec![false; graph.num_nodes()];
    test_nodes.iter().for_each(|&v| is_test[v] = true);
    let visible: Vec<Option<usize>> = (0..graph.num_nodes())
        .map(|v| {
            if is_test[v] {
                None
            } else {
                labels.train_label(v)
            }
        })
        .collect();
    let order: Vec<usize> = (0..graph.num_edges())
        .filter(|&i| {
            let (s, r) = graph.edge(i);
            is_test[s] || is_test[r]
        })
        .collect();
    let mut state = SmmbState::new(
        graph,
        hyper.clone(),
        update,
        visible,
        fit.posterior.clone(),
        fit.eta.clone(),
    );
    for _ in 0..schedule.max_outer {
        if state.sweep(&order)? < schedule.posterior_tol {
            break;
        }
    }
    Ok(state.posterior)
}

/// `argmax_c η_c · λ̄_v`, ties to the lowest class.
pub fn predict_smmb(node_mean: &[f64], eta: &SoftmaxWeights) -> usize {
    argmax(
        eta.eta
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(node_mean).map(|(e, l)| e * l).sum::<f64>()),
    )
}
