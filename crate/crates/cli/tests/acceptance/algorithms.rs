use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use supblock::generator;
use supblock::graph::split_train_test;
use supblock::node_cvb::{Diagonal, SbmHyper};
use supblock::rng::dirichlet;
use supblock::sbm::update_node_sbm;
use supblock::smmb::{
    compute_log_h, fit_smmb, fit_unsupervised, node_slots, EtaMode, HCache, InteractionPosterior,
    PairUpdate, SmmbHyper, SmmbOptions, SmmbState,
};
use supblock::softmax::{self, CgOptions, NodeTerm, SoftmaxData, SoftmaxWeights};
use supblock::ssmb::{initial_roles, update_node_ssmb, SsmbHyper};
use supblock::{DirectedGraph, FitConfig, ModelRegistry, SuffStats};

use crate::common::engine::{sbm_update, smmb_conditional, ssmb_update};
use crate::common::{
    is_simplex, l1, max_rel_err, random_node_terms, rel_err, rng, NodeInstance, PairInstance,
};
use crate::{verdict, Outcome};

fn node_oracle(labelled: bool, seed0: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut r = rng(seed0 + seed);
        let c = if labelled { 2 } else { 1 };
        let inst = NodeInstance::random(&mut r, 8, 2, c, false);
        let v = r.random_range(0..inst.n);
        let got = if labelled {
            ssmb_update(&inst, v)
        } else {
            sbm_update(&inst, v)
        };
        worst = worst.max(max_rel_err(&got, &inst.gibbs_conditional(v, labelled)));
    }
    worst
}

pub fn sbm_oracle() -> Outcome {
    let start = Instant::now();
    let worst = node_oracle(false, 1_000);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-6 && secs < 30.0,
        format!("max rel. err {worst:.1e} over 100 graphs (limit 1e-6), {secs:.2}s (limit 30s)"),
    )
}

pub fn ssmb_oracle() -> Outcome {
    let worst = node_oracle(true, 2_000);
    verdict(
        worst <= 1e-6,
        format!("max rel. err {worst:.1e} over 100 graphs (limit 1e-6)"),
    )
}

pub fn smmb_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut r = rng(3_000 + seed);
        let inst = PairInstance::random(&mut r, 4, 2);
        let i = r.random_range(0..4);
        worst = worst.max(max_rel_err(
            &smmb_conditional(&inst, i),
            &inst.conditional(i),
        ));
    }
    verdict(
        worst <= 1e-6,
        format!("max rel. err {worst:.1e} over 100 instances (limit 1e-6)"),
    )
}

fn softmax_instance(seed: u64) -> (SoftmaxWeights, SoftmaxData) {
    let mut r = rng(seed);
    let c = r.random_range(2..=3);
    let k = r.random_range(1..=4);
    let nodes = r.random_range(1..=10);
    let terms = random_node_terms(&mut r, nodes, k, c);
    let data = SoftmaxData::new(
        k,
        c,
        terms
            .into_iter()
            .map(|(label, marginals)| NodeTerm { label, marginals })
            .collect(),
    )
    .unwrap();
    let eta = SoftmaxWeights {
        eta: Array2::from_shape_fn((c, k), |_| r.random_range(-2.0..2.0)),
    };
    (eta, data)
}

pub fn gradient_check() -> Outcome {
    let start = Instant::now();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let (eta, data) = softmax_instance(4_000 + seed);
        let grad = softmax::gradient(&eta, &data, 0.0).unwrap();
        for ((y, a), g) in grad.indexed_iter() {
            let mut plus = eta.clone();
            plus.eta[[y, a]] += h;
            let mut minus = eta.clone();
            minus.eta[[y, a]] -= h;
            let fd = (softmax::objective(&plus, &data, 0.0)
                - softmax::objective(&minus, &data, 0.0))
                / (2.0 * h);
            worst = worst.max(rel_err(*g, fd));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-4 && secs < 20.0,
        format!("max rel. err {worst:.1e} over 50 instances (limit 1e-4), {secs:.2}s (limit 20s)"),
    )
}

pub fn ascent() -> Outcome {
    let mut violations = 0;
    let mut steps = 0;
    for seed in 0..20 {
        let (_, data) = softmax_instance(5_000 + seed);
        let start = SoftmaxWeights::zeros(data.num_classes(), data.num_roles());
        let out = softmax::maximize(&start, &data, &CgOptions::default()).unwrap();
        steps += out.accepted_steps;
        violations += out
            .trace
            .windows(2)
            .filter(|w| w[1].value < w[0].value)
            .count();
    }
    verdict(
        violations == 0,
        format!("{violations} decreases in {steps} accepted steps on 20 instances"),
    )
}

pub fn reductions() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut r = rng(6_000 + seed);
        let k = r.random_range(2..=4);
        let mut inst = NodeInstance::random(&mut r, 8, k, 2, false);
        inst.eta_dir = 1e6;
        let v = r.random_range(0..inst.n);
        inst.labels[v] = Some(r.random_range(0..2));
        worst = worst.max(l1(&ssmb_update(&inst, v), &sbm_update(&inst, v)));
    }
    if worst > 1e-4 {
        return Err(format!(
            "(a) L1 distance {worst:.1e} between SSMB (eta_dir = 1e6) and SBM updates (limit 1e-4)"
        ));
    }
    let k = 4;
    let hyper = SmmbHyper::symmetric(k, 1.0, 1.0);
    for seed in 0..3 {
        let planted = generator::sample(&generator::preset("mixed", 100).unwrap(), seed).unwrap();
        let split = split_train_test(&planted.labels, 0.5, seed).unwrap();
        let frozen = SmmbOptions {
            eta: EtaMode::Frozen(SoftmaxWeights::zeros(2, k)),
            ..SmmbOptions::default()
        };
        let a = fit_smmb(&planted.graph, &split, &hyper, &frozen, seed).unwrap();
        let b = fit_unsupervised(&planted.graph, 2, &hyper, &SmmbOptions::default(), seed).unwrap();
        if a.posterior.flat() != b.posterior.flat() {
            return Err(format!(
                "(b) frozen eta = 0 fit differs from the unsupervised fit (seed {seed})"
            ));
        }
    }
    Ok(format!("(a) max L1 {worst:.1e} over 100 instances (limit 1e-4); (b) bit-identical posteriors on 3 fits"))
}

fn random_graph(r: &mut impl Rng, n: usize, interactions: usize) -> DirectedGraph {
    DirectedGraph::new(
        n,
        (0..interactions)
            .map(|_| (r.random_range(0..n), r.random_range(0..n)))
            .collect(),
    )
}

/// 1000 random add/remove operations on node and interaction statistics.
fn incremental_vs_batch() -> Result<(f64, f64), String> {
    let mut r = rng(7_000);
    let (n, k, c) = (30, 4, 3);
    let g = random_graph(&mut r, n, 150);
    let links = g.binary_links(false);
    let labels: Vec<Option<usize>> = (0..n).map(|v| (v % 4 != 0).then_some(v % c)).collect();
    let mut lam = vec![0.0; n * k];
    let mut assigned = vec![false; n];
    let mut s = SuffStats::for_nodes(n, k, c);
    let mut inverse: f64 = 0.0;
    for _ in 0..1000 {
        let v = r.random_range(0..n);
        if assigned[v] {
            s.remove_node(v, &lam[v * k..(v + 1) * k], &links, labels[v])
                .map_err(|e| e.to_string())?;
            assigned[v] = false;
        } else {
            let p = dirichlet(&mut r, 0.5, k);
            let before = s.clone();
            s.add_node(v, &p, &links, labels[v])
                .map_err(|e| e.to_string())?;
            let mut probe = s.clone();
            probe
                .remove_node(v, &p, &links, labels[v])
                .map_err(|e| e.to_string())?;
            inverse = inverse.max(probe.max_abs_diff(&before));
            lam[v * k..(v + 1) * k].copy_from_slice(&p);
            assigned[v] = true;
        }
        s.check_node_invariants(&links).map_err(|e| e.to_string())?;
    }
    let mut drift = s.max_abs_diff(&SuffStats::recount_nodes(
        k,
        c,
        &links,
        &lam,
        &assigned,
        |v| labels[v],
    ));

    let kk = k * k;
    let mut pl = vec![0.0; g.num_edges() * kk];
    let mut added = vec![false; g.num_edges()];
    let mut s = SuffStats::for_interactions(&g, k);
    for _ in 0..1000 {
        let i = r.random_range(0..g.num_edges());
        let (src, dst) = g.edge(i);
        if added[i] {
            s.remove_interaction(i, src, dst, &pl[i * kk..(i + 1) * kk])
                .map_err(|e| e.to_string())?;
            added[i] = false;
        } else {
            let p = dirichlet(&mut r, 0.5, kk);
            let before = s.clone();
            s.add_interaction(i, src, dst, &p)
                .map_err(|e| e.to_string())?;
            let mut probe = s.clone();
            probe
                .remove_interaction(i, src, dst, &p)
                .map_err(|e| e.to_string())?;
            inverse = inverse.max(probe.max_abs_diff(&before));
            pl[i * kk..(i + 1) * kk].copy_from_slice(&p);
            added[i] = true;
        }
        s.check_interaction_invariants()
            .map_err(|e| e.to_string())?;
    }
    drift = drift.max(s.max_abs_diff(&SuffStats::recount_interactions(&g, k, &pl, &added)));
    Ok((drift, inverse))
}

fn cache_error() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut r = rng(8_000 + seed);
        let (k, c) = (3, 3);
        let kk = k * k;
        let g = random_graph(&mut r, 8, 40);
        let mut flat: Vec<f64> = (0..g.num_edges())
            .flat_map(|_| dirichlet(&mut r, 1.0, kk))
            .collect();
        let scale = if seed % 2 == 0 { 1.0 } else { 60.0 };
        let eta = SoftmaxWeights {
            eta: Array2::from_shape_fn((c, k), |_| r.random_range(-scale..scale)),
        };
        let mut cache = HCache::build(
            &g,
            &InteractionPosterior::new(k, flat.clone()),
            &eta,
            vec![true; 8],
        );
        let slots = node_slots(&g);
        for _ in 0..300 {
            let i = r.random_range(0..g.num_edges());
            flat[i * kk..(i + 1) * kk].copy_from_slice(&dirichlet(&mut r, 0.3, kk));
            let post = InteractionPosterior::new(k, flat.clone());
            let (s, t) = g.edge(i);
            cache.update_slot(2 * i, &post.sender_marginal(i), &slots[s]);
            cache.update_slot(2 * i + 1, &post.receiver_marginal(i), &slots[t]);
        }
        let post = InteractionPosterior::new(k, flat);
        for (i, &(s, t)) in g.edges().iter().enumerate() {
            for (slot, v) in [(2 * i, s), (2 * i + 1, t)] {
                let want = compute_log_h(v, slot, &eta, &post, &g);
                for (x, y) in cache.log_h(slot).iter().zip(&want) {
                    worst = worst.max(rel_err(x.exp(), y.exp()));
                }
            }
        }
    }
    worst
}

/// Node-model sweeps driven through the public update functions, checking
/// every emitted row and the statistics after each update.
fn node_fit_invariants(
    graph: &DirectedGraph,
    split: &supblock::LabelTable,
    supervised: bool,
) -> Result<usize, String> {
    let n = graph.num_nodes();
    let c = split.num_classes();
    let k = if supervised { 4 } else { c };
    let links = graph.binary_links(false);
    let visible: Vec<Option<usize>> = (0..n).map(|v| split.train_label(v)).collect();
    let mut r = supblock::rng::substream(1, "init", 0);
    let mut lam = if supervised {
        initial_roles(&visible, k, c, &mut r)
    } else {
        (0..n)
            .flat_map(|v| match visible[v] {
                Some(y) => (0..k).map(|a| (a == y) as u8 as f64).collect::<Vec<_>>(),
                None => dirichlet(&mut r, 1.0, k),
            })
            .collect()
    };
    let stat_label = |v: usize| if supervised { visible[v] } else { None };
    let mut stats = SuffStats::recount_nodes(
        k,
        if supervised { c } else { 1 },
        &links,
        &lam,
        &vec![true; n],
        stat_label,
    );
    let order: Vec<usize> = (0..n)
        .filter(|&v| supervised || visible[v].is_none())
        .collect();
    let sbm = SbmHyper::default();
    let ssmb = SsmbHyper::default();
    let mut updates = 0;
    for _ in 0..200 {
        let mut change: f64 = 0.0;
        for &v in &order {
            let old = lam[v * k..(v + 1) * k].to_vec();
            stats
                .remove_node(v, &old, &links, stat_label(v))
                .map_err(|e| e.to_string())?;
            let fresh = if supervised {
                update_node_ssmb(v, &stats, &ssmb, graph, Diagonal::default(), visible[v])
            } else {
                update_node_sbm(v, &stats, &sbm, graph, Diagonal::default())
            }
            .map_err(|e| e.to_string())?;
            if !is_simplex(&fresh, 1e-9) {
                return Err(format!("node {v}: row {fresh:?} is not a simplex"));
            }
            stats
                .add_node(v, &fresh, &links, stat_label(v))
                .map_err(|e| e.to_string())?;
            stats
                .check_node_invariants(&links)
                .map_err(|e| e.to_string())?;
            change = change.max(l1(&old, &fresh));
            lam[v * k..(v + 1) * k].copy_from_slice(&fresh);
            updates += 1;
        }
        if change < 1e-6 {
            break;
        }
    }
    Ok(updates)
}

fn interaction_fit_invariants(
    graph: &DirectedGraph,
    split: &supblock::LabelTable,
) -> Result<usize, String> {
    let k = 4;
    let kk = k * k;
    let mut r = supblock::rng::substream(1, "init", 0);
    let flat: Vec<f64> = (0..graph.num_edges())
        .flat_map(|_| dirichlet(&mut r, 1.0, kk))
        .collect();
    let visible = (0..graph.num_nodes())
        .map(|v| split.train_label(v))
        .collect();
    let mut state = SmmbState::new(
        graph,
        SmmbHyper::symmetric(k, 1.0, 1.0),
        PairUpdate::Collapsed,
        visible,
        InteractionPosterior::new(k, flat),
        SoftmaxWeights::zeros(split.num_classes(), k),
    );
    let mut updates = 0;
    for _ in 0..10 {
        for i in 0..graph.num_edges() {
            state.update_interaction(i).map_err(|e| e.to_string())?;
            if !is_simplex(state.posterior.pair(i), 1e-9) {
                return Err(format!("interaction {i} is not a simplex"));
            }
            state
                .stats
                .check_interaction_invariants()
                .map_err(|e| e.to_string())?;
            updates += 1;
        }
        let means = state.posterior.node_means(graph);
        for v in (0..graph.num_nodes()).filter(|&v| graph.degree(v) > 0) {
            if l1(&state.node_mean(v), &means.row(v).to_vec()) > 1e-6 {
                return Err(format!("node {v}: incremental mean drifted"));
            }
        }
        let cg = softmax::maximize(
            &state.eta,
            &state.softmax_data().unwrap(),
            &CgOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        state.set_eta(cg.weights);
    }
    Ok(updates)
}

pub fn consistency() -> Outcome {
    let (drift, inverse) = incremental_vs_batch()?;
    if drift > 1e-6 || inverse > 1e-9 {
        return Err(format!(
            "recount drift {drift:.1e} (limit 1e-6), add/remove residue {inverse:.1e} (limit 1e-9)"
        ));
    }
    let cache = cache_error();
    if cache > 1e-8 {
        return Err(format!("h cache rel. err {cache:.1e} (limit 1e-8)"));
    }
    let fixture = generator::sample(&generator::preset("heterogeneous", 200).unwrap(), 0).unwrap();
    let split = split_train_test(&fixture.labels, 0.5, 0).unwrap();
    let mut updates = node_fit_invariants(&fixture.graph, &split, false)?;
    updates += node_fit_invariants(&fixture.graph, &split, true)?;
    let mixed = generator::sample(&generator::preset("mixed", 200).unwrap(), 0).unwrap();
    let mixed_split = split_train_test(&mixed.labels, 0.5, 0).unwrap();
    updates += interaction_fit_invariants(&mixed.graph, &mixed_split)?;

    let registry = ModelRegistry::with_builtins();
    for name in registry.names() {
        let fitted = registry
            .get(name)
            .unwrap()
            .fit(&fixture.graph, &split, &FitConfig::default())
            .map_err(|e| e.to_string())?;
        let roles = fitted.node_roles();
        for v in (0..fixture.graph.num_nodes()).filter(|&v| fixture.graph.degree(v) > 0) {
            if !is_simplex(&roles.row(v).to_vec(), 1e-9) {
                return Err(format!("{name}: node {v} posterior is not a simplex"));
            }
        }
    }
    Ok(format!(
        "recount drift {drift:.1e}, add/remove residue {inverse:.1e}, h cache rel. err {cache:.1e}, \
         {updates} checked updates on the 200-node fixtures"
    ))
}
