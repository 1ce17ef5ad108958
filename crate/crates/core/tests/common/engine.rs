//! Adapters that run the library's updates on the oracle instances.

use supblock::node_cvb::{Diagonal, SbmHyper};
use supblock::sbm::update_node_sbm;
use supblock::smmb::{InteractionPosterior, PairUpdate, SmmbHyper, SmmbState};
use supblock::softmax::SoftmaxWeights;
use supblock::ssmb::{update_node_ssmb, SsmbHyper};
use supblock::{DirectedGraph, SuffStats};

use super::{NodeInstance, PairInstance};

fn diagonal(inst: &NodeInstance) -> Diagonal {
    if inst.self_pairs {
        Diagonal::IncludeSelfPairs
    } else {
        Diagonal::ExcludeSelfPairs
    }
}

/// Statistics of every node except `v`.
fn stats_without(
    inst: &NodeInstance,
    graph: &DirectedGraph,
    v: usize,
    labelled: bool,
) -> SuffStats {
    let links = graph.binary_links(inst.self_pairs);
    let mut assigned = vec![true; inst.n];
    assigned[v] = false;
    let c = if labelled { inst.c } else { 1 };
    SuffStats::recount_nodes(inst.k, c, &links, &inst.one_hot_lambda(), &assigned, |u| {
        if labelled {
            inst.labels[u]
        } else {
            None
        }
    })
}

pub fn sbm_update(inst: &NodeInstance, v: usize) -> Vec<f64> {
    let graph = DirectedGraph::new(inst.n, inst.edges.clone());
    let stats = stats_without(inst, &graph, v, false);
    let hyper = SbmHyper {
        alpha: inst.alpha,
        beta1: inst.beta1,
        beta2: inst.beta2,
    };
    update_node_sbm(v, &stats, &hyper, &graph, diagonal(inst)).unwrap()
}

pub fn ssmb_update(inst: &NodeInstance, v: usize) -> Vec<f64> {
    let graph = DirectedGraph::new(inst.n, inst.edges.clone());
    let stats = stats_without(inst, &graph, v, true);
    let hyper = SsmbHyper {
        alpha: inst.alpha,
        beta1: inst.beta1,
        beta2: inst.beta2,
        eta_dir: inst.eta_dir,
    };
    update_node_ssmb(v, &stats, &hyper, &graph, diagonal(inst), inst.labels[v]).unwrap()
}

/// Pair posterior of interaction `i` with `η = 0` and no labels.
pub fn smmb_conditional(inst: &PairInstance, i: usize) -> Vec<f64> {
    let graph = DirectedGraph::new(inst.n, inst.edges.clone());
    let hyper = SmmbHyper {
        alpha_pair: inst.alpha_pair.clone(),
        beta: inst.beta,
    };
    let mut state = SmmbState::new(
        &graph,
        hyper,
        PairUpdate::Collapsed,
        vec![None; inst.n],
        InteractionPosterior::new(inst.k, inst.one_hot_lambda()),
        SoftmaxWeights::zeros(2, inst.k),
    );
    let (s, r) = graph.edge(i);
    let own = state.posterior.pair(i).to_vec();
    state.stats.remove_interaction(i, s, r, &own).unwrap();
    let mut out = vec![0.0; inst.k * inst.k];
    state.conditional(i, &mut out).unwrap();
    out
}
