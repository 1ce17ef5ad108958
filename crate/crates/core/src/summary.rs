//! Interpretable exports of a fitted blockmodel: the role-interaction summary
//! network, the node-role matrix and per-role class distributions.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::Serialize;

use crate::graph::{DirectedGraph, LabelTable};
use crate::node_cvb::Diagonal;
use crate::stats::SuffStats;

/// Prior used to turn counts into posterior-mean interaction intensities.
#[derive(Clone, Debug, PartialEq)]
pub enum SummaryPrior {
    /// Beta prior on each block's link probability.
    Bernoulli {
        beta1: f64,
        beta2: f64,
        diagonal: Diagonal,
    },
    /// Dirichlet prior over role pairs.
    Pairs { alpha_pair: Array2<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// Each weight is a link probability in [0,1].
    LinkProbability,
    /// Weights form one distribution over all K² pairs.
    PairDistribution,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryNetwork {
    pub weights: Array2<f64>,
    /// Expected nodes per role (single membership) or endpoints per role (mixed).
    pub sizes: Vec<f64>,
    pub kind: WeightKind,
}

impl SummaryNetwork {
    pub fn num_roles(&self) -> usize {
        self.sizes.len()
    }
}

pub fn build_summary(stats: &SuffStats, prior: &SummaryPrior) -> SummaryNetwork {
    let k = stats.num_roles();
    match prior {
        SummaryPrior::Bernoulli {
            beta1,
            beta2,
            diagonal,
        } => SummaryNetwork {
            weights: Array2::from_shape_fn((k, k), |(a, b)| {
                let pairs = stats.block_pairs(a, b, diagonal.self_pairs());
                (stats.d(a, b) + beta1) / (pairs + beta1 + beta2)
            }),
            sizes: stats.n().to_vec(),
            kind: WeightKind::LinkProbability,
        },
        SummaryPrior::Pairs { alpha_pair } => {
            let total: f64 = stats.d_matrix().iter().sum();
            let alpha_total: f64 = alpha_pair.sum();
            SummaryNetwork {
                weights: Array2::from_shape_fn((k, k), |(a, b)| {
                    (stats.d(a, b) + alpha_pair[[a, b]]) / (total + alpha_total)
                }),
                sizes: (0..k)
                    .map(|a| stats.f_total(a) + stats.g_total(a))
                    .collect(),
                kind: WeightKind::PairDistribution,
            }
        }
    }
}

/// `1/K²` for pair distributions, the prior mean `β₁/(β₁+β₂)` for link probabilities.
pub fn default_threshold(prior: &SummaryPrior) -> f64 {
    match prior {
        SummaryPrior::Bernoulli { beta1, beta2, .. } => beta1 / (beta1 + beta2),
        SummaryPrior::Pairs { alpha_pair } => {
            let k = alpha_pair.nrows().max(1) as f64;
            1.0 / (k * k)
        }
    }
}

/// Grey level (0 = black, 90 = light) for weight `w`, linear from `threshold` to `max`.
pub fn edge_grey(w: f64, threshold: f64, max: f64) -> u32 {
    let shade = if max > threshold {
        ((w - threshold) / (max - threshold)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (90.0 * (1.0 - shade)).round() as u32
}

/// Graphviz text: one node per role labelled with its size, one edge per
/// weight at or above `threshold`, darker for heavier weights.
pub fn export_dot(summary: &SummaryNetwork, threshold: f64) -> String {
    let k = summary.num_roles();
    let mut out = String::from("digraph summary {\n  node [shape=circle];\n");
    for a in 0..k {
        writeln!(
            out,
            "  r{a} [label=\"role {a}\\nsize {:.2}\"];",
            summary.sizes[a]
        )
        .unwrap();
    }
    let kept: Vec<(usize, usize, f64)> = (0..k)
        .flat_map(|a| (0..k).map(move |b| (a, b)))
        .map(|(a, b)| (a, b, summary.weights[[a, b]]))
        .filter(|(_, _, w)| *w >= threshold)
        .collect();
    let max = kept.iter().map(|e| e.2).fold(f64::NEG_INFINITY, f64::max);
    for (a, b, w) in kept {
        writeln!(
            out,
            "  r{a} -> r{b} [color=\"gray{}\", label=\"{w:.4}\", weight={w:.6}];",
            edge_grey(w, threshold, max)
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}

fn class_name(labels: &LabelTable, v: usize) -> String {
    match labels.label(v) {
        Some(c) => labels.class_names()[c].clone(),
        None => "UNKNOWN".to_string(),
    }
}

/// Node-role matrix with rows grouped by class (unlabelled last), then by node id.
pub fn export_node_role_matrix(
    node_roles: &Array2<f64>,
    labels: &LabelTable,
    graph: &DirectedGraph,
) -> String {
    let k = node_roles.ncols();
    let mut order: Vec<usize> = (0..node_roles.nrows()).collect();
    order.sort_by_key(|&v| (labels.label(v).unwrap_or(usize::MAX), v));
    let mut out = String::from("node,class");
    for a in 0..k {
        write!(out, ",role_{a}").unwrap();
    }
    out.push('\n');
    for v in order {
        write!(out, "{},{}", graph.node_name(v), class_name(labels, v)).unwrap();
        for x in node_roles.row(v) {
            write!(out, ",{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// `p(class | role)`, K×C, with roles that carried no labelled mass flagged.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoleClassTable {
    pub dist: Array2<f64>,
    pub zero_support: Vec<bool>,
}

/// Columns of `μ̂` (C×K) as role rows.
pub fn role_class_from_mu(mu_hat: &Array2<f64>) -> RoleClassTable {
    RoleClassTable {
        dist: mu_hat.t().to_owned(),
        zero_support: vec![false; mu_hat.ncols()],
    }
}

/// `p(c|k) ∝ Σ_{v labelled} λ_{v,k} [y_v = c]` over TRAIN labels. Roles with
/// zero mass get a uniform row.
pub fn role_class_empirical(node_roles: &Array2<f64>, labels: &LabelTable) -> RoleClassTable {
    let k = node_roles.ncols();
    let c = labels.num_classes();
    let mut dist = Array2::<f64>::zeros((k, c));
    for v in 0..node_roles.nrows() {
        if let Some(y) = labels.train_label(v) {
            for a in 0..k {
                dist[[a, y]] += node_roles[[v, a]];
            }
        }
    }
    let mut zero_support = vec![false; k];
    for a in 0..k {
        let total = dist.row(a).sum();
        if total > 0.0 {
            dist.row_mut(a).mapv_inplace(|x| x / total);
        } else {
            zero_support[a] = true;
            dist.row_mut(a).fill(1.0 / c.max(1) as f64);
        }
    }
    RoleClassTable { dist, zero_support }
}

pub fn export_role_class_dists(table: &RoleClassTable, class_names: &[String]) -> String {
    let mut out = String::from("role,zero_support");
    for name in class_names {
        write!(out, ",{name}").unwrap();
    }
    out.push('\n');
    for (a, row) in table.dist.rows().into_iter().enumerate() {
        write!(out, "{a},{}", table.zero_support[a]).unwrap();
        for x in row {
            write!(out, ",{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Generic numeric matrix CSV with named rows and columns.
pub fn matrix_csv(
    corner: &str,
    row_names: &[String],
    col_names: &[String],
    m: &Array2<f64>,
) -> String {
    let mut out = String::from(corner);
    for name in col_names {
        write!(out, ",{name}").unwrap();
    }
    out.push('\n');
    for (r, row) in m.rows().into_iter().enumerate() {
        out.push_str(&row_names[r]);
        for x in row {
            write!(out, ",{x}").unwrap();
        }
        out.push('\n');
    }
    out
}
