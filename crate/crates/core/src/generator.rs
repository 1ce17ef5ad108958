//! Samplers for the three generative processes, with known ground truth.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, LabelTable};
use crate::rng::{self, StreamRng};

/// Role proportions: fixed, or drawn from a symmetric Dirichlet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RoleMix {
    Theta(Vec<f64>),
    Alpha { alpha: f64, k: usize },
}

/// Bernoulli-link blockmodel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmPlanted {
    pub num_nodes: usize,
    pub roles: RoleMix,
    /// K×K link probabilities, sender role by receiver role.
    pub pi: Array2<f64>,
    #[serde(default)]
    pub self_loops: bool,
}

/// SBM plus a class distribution per role (rows of `mu`, K×C).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsmbPlanted {
    pub sbm: SbmPlanted,
    pub mu: Array2<f64>,
}

/// Mixed-membership interaction process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmmbPlanted {
    pub num_nodes: usize,
    pub num_interactions: usize,
    /// K×K distribution over (sender role, receiver role).
    pub pair: Array2<f64>,
    /// K×N: row `k` is role `k`'s distribution over nodes.
    pub phi: Array2<f64>,
    /// C×K softmax weights.
    pub eta: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum PlantedSpec {
    Sbm(SbmPlanted),
    Ssmb(SsmbPlanted),
    Smmb(SmmbPlanted),
}

#[derive(Clone, Debug, PartialEq)]
pub enum GroundTruth {
    /// Hard role per node.
    Roles(Vec<usize>),
    /// Realised role frequencies `z̄_v`, N×K (zero rows for isolated nodes).
    RoleFrequencies(Array2<f64>),
}

#[derive(Clone, Debug)]
pub struct Planted {
    pub graph: DirectedGraph,
    /// Every labelled node starts as TRAIN; split before fitting.
    pub labels: LabelTable,
    pub truth: GroundTruth,
}

fn check_simplex(xs: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    let xs: Vec<f64> = xs.into_iter().collect();
    let s: f64 = xs.iter().sum();
    if xs.iter().any(|x| !(*x >= 0.0)) || (s - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "{what} is not a distribution (sum {s})"
        )));
    }
    Ok(())
}

fn check_pi(pi: &Array2<f64>, k: usize) -> Result<()> {
    if pi.dim() != (k, k) {
        return Err(Error::Config(format!(
            "pi must be {k}×{k}, got {:?}",
            pi.dim()
        )));
    }
    if pi.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Config("pi entries must lie in [0,1]".into()));
    }
    Ok(())
}

fn theta(mix: &RoleMix, rng: &mut StreamRng) -> Result<Vec<f64>> {
    match mix {
        RoleMix::Theta(t) => {
            check_simplex(t.iter().copied(), "theta")?;
            Ok(t.clone())
        }
        RoleMix::Alpha { alpha, k } => {
            if !(*alpha > 0.0) || *k == 0 {
                return Err(Error::Config("role prior needs alpha > 0 and k ≥ 1".into()));
            }
            Ok(rng::dirichlet(rng, *alpha, *k))
        }
    }
}

fn sample_links(
    spec: &SbmPlanted,
    rng: &mut StreamRng,
) -> Result<(Vec<usize>, Vec<(usize, usize)>)> {
    let th = theta(&spec.roles, rng)?;
    let k = th.len();
    check_pi(&spec.pi, k)?;
    let roles: Vec<usize> = (0..spec.num_nodes)
        .map(|_| rng::categorical(rng, &th))
        .collect();
    let mut edges = Vec::new();
    for s in 0..spec.num_nodes {
        for r in 0..spec.num_nodes {
            if s == r && !spec.self_loops {
                continue;
            }
            let p = spec.pi[[roles[s], roles[r]]];
            if p > 0.0 && rng.random::<f64>() < p {
                edges.push((s, r));
            }
        }
    }
    Ok((roles, edges))
}

/// Label = role.
pub fn sample_sbm(spec: &SbmPlanted, seed: u64) -> Result<Planted> {
    let mut rng = rng::substream(seed, "generate", 0);
    let (roles, edges) = sample_links(spec, &mut rng)?;
    let k = spec.pi.nrows();
    Ok(Planted {
        graph: DirectedGraph::new(spec.num_nodes, edges),
        labels: LabelTable::from_indices(k, roles.iter().map(|&r| Some(r)).collect()),
        truth: GroundTruth::Roles(roles),
    })
}

/// As [`sample_sbm`], then each label is drawn from its role's class distribution.
pub fn sample_ssmb(spec: &SsmbPlanted, seed: u64) -> Result<Planted> {
    let mut rng = rng::substream(seed, "generate", 0);
    let (roles, edges) = sample_links(&spec.sbm, &mut rng)?;
    let k = spec.sbm.pi.nrows();
    if spec.mu.nrows() != k {
        return Err(Error::Config(format!("mu needs one row per role ({k})")));
    }
    for row in spec.mu.rows() {
        check_simplex(row.iter().copied(), "mu row")?;
    }
    let c = spec.mu.ncols();
    let labels = roles
        .iter()
        .map(|&z| Some(rng::categorical(&mut rng, &spec.mu.row(z).to_vec())))
        .collect();
    Ok(Planted {
        graph: DirectedGraph::new(spec.sbm.num_nodes, edges),
        labels: LabelTable::from_indices(c, labels),
        truth: GroundTruth::Roles(roles),
    })
}

/// Interactions first, then labels from the softmax of each node's realised
/// role frequencies. Nodes without interactions stay unlabelled.
pub fn sample_smmb(spec: &SmmbPlanted, seed: u64) -> Result<Planted> {
    let mut rng = rng::substream(seed, "generate", 0);
    let k = spec.pair.nrows();
    let n = spec.num_nodes;
    if spec.pair.ncols() != k {
        return Err(Error::Config("pair distribution must be square".into()));
    }
    check_simplex(spec.pair.iter().copied(), "pair distribution")?;
    if spec.phi.dim() != (k, n) {
        return Err(Error::Config(format!("phi must be {k}×{n}")));
    }
    for row in spec.phi.rows() {
        check_simplex(row.iter().copied(), "phi row")?;
    }
    if spec.eta.ncols() != k || spec.eta.nrows() == 0 {
        return Err(Error::Config(format!("eta must be C×{k}")));
    }
    let c = spec.eta.nrows();
    let pair: Vec<f64> = spec.pair.iter().copied().collect();
    let phi: Vec<Vec<f64>> = spec.phi.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut counts = Array2::<f64>::zeros((n, k));
    let mut edges = Vec::with_capacity(spec.num_interactions);
    for _ in 0..spec.num_interactions {
        let p = rng::categorical(&mut rng, &pair);
        let (zs, zr) = (p / k, p % k);
        let s = rng::categorical(&mut rng, &phi[zs]);
        let r = rng::categorical(&mut rng, &phi[zr]);
        counts[[s, zs]] += 1.0;
        counts[[r, zr]] += 1.0;
        edges.push((s, r));
    }
    let mut labels = vec![None; n];
    for v in 0..n {
        let total: f64 = counts.row(v).sum();
        if total == 0.0 {
            continue;
        }
        counts.row_mut(v).mapv_inplace(|x| x / total);
        let scores: Vec<f64> = spec
            .eta
            .rows()
            .into_iter()
            .map(|row| row.dot(&counts.row(v)))
            .collect();
        let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
        labels[v] = Some(rng::categorical(&mut rng, &weights));
    }
    Ok(Planted {
        graph: DirectedGraph::new(n, edges),
        labels: LabelTable::from_indices(c, labels),
        truth: GroundTruth::RoleFrequencies(counts),
    })
}

pub fn sample(spec: &PlantedSpec, seed: u64) -> Result<Planted> {
    match spec {
        PlantedSpec::Sbm(s) => sample_sbm(s, seed),
        PlantedSpec::Ssmb(s) => sample_ssmb(s, seed),
        PlantedSpec::Smmb(s) => sample_smmb(s, seed),
    }
}

/// Two-parameter block matrix: `p_in` on the diagonal, `p_out` elsewhere.
pub fn planted_partition(num_nodes: usize, k: usize, p_in: f64, p_out: f64) -> SbmPlanted {
    SbmPlanted {
        num_nodes,
        roles: RoleMix::Theta(vec![1.0 / k as f64; k]),
        pi: Array2::from_shape_fn((k, k), |(a, b)| if a == b { p_in } else { p_out }),
        self_loops: false,
    }
}

/// Built-in synthetic designs, all with two classes:
///
/// - `assortative`: two blocks, links within at 0.3 and across at 0.01.
/// - `disassortative`: two blocks, links only across, at 0.3.
/// - `heterogeneous`: four roles, two per class, wired so that class-level
///   link rates are identical and only the roles carry signal.
/// - `homogeneous`: two roles, one per class, within 0.2 and across 0.02.
/// - `mixed`: mixed-membership interactions over four roles, `10·N`
///   interactions, classes driven by which roles a node plays.
pub fn preset(name: &str, num_nodes: usize) -> Result<PlantedSpec> {
    let two_class_mu =
        |k: usize| Array2::from_shape_fn((k, 2), |(a, c)| if a * 2 / k == c { 1.0 } else { 0.0 });
    Ok(match name {
        "assortative" => PlantedSpec::Sbm(planted_partition(num_nodes, 2, 0.3, 0.01)),
        "disassortative" => PlantedSpec::Sbm(planted_partition(num_nodes, 2, 0.0, 0.3)),
        "heterogeneous" => {
            let mut pi = Array2::from_elem((4, 4), 0.01);
            for (a, b) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
                pi[[a, b]] = 0.3;
            }
            PlantedSpec::Ssmb(SsmbPlanted {
                sbm: SbmPlanted {
                    num_nodes,
                    roles: RoleMix::Theta(vec![0.25; 4]),
                    pi,
                    self_loops: false,
                },
                mu: two_class_mu(4),
            })
        }
        "homogeneous" => PlantedSpec::Ssmb(SsmbPlanted {
            sbm: planted_partition(num_nodes, 2, 0.2, 0.02),
            mu: two_class_mu(2),
        }),
        "mixed" => {
            let k = 4;
            let mut pair = Array2::from_elem((k, k), 0.2 / 12.0);
            for a in 0..k {
                pair[[a, (a + 1) % k]] = 0.2;
            }
            // role a favours its own quarter of the nodes
            let group = |v: usize| v * k / num_nodes.max(1);
            let mut phi =
                Array2::from_shape_fn(
                    (k, num_nodes),
                    |(a, v)| if group(v) == a { 9.0 } else { 1.0 / 3.0 },
                );
            for mut row in phi.rows_mut() {
                let t = row.sum();
                row.mapv_inplace(|x| x / t);
            }
            let eta =
                Array2::from_shape_fn((2, k), |(c, a)| if a * 2 / k == c { 4.0 } else { 0.0 });
            PlantedSpec::Smmb(SmmbPlanted {
                num_nodes,
                num_interactions: 10 * num_nodes,
                pair,
                phi,
                eta,
            })
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    })
}

pub const PRESETS: [&str; 5] = [
    "assortative",
    "disassortative",
    "heterogeneous",
    "homogeneous",
    "mixed",
];

/// `node<TAB>role` for hard truth, `node<TAB>z̄_1 … z̄_K` otherwise.
pub fn ground_truth_text(graph: &DirectedGraph, truth: &GroundTruth) -> String {
    let mut out = String::new();
    match truth {
        GroundTruth::Roles(roles) => {
            for (v, r) in roles.iter().enumerate() {
                writeln!(out, "{}\t{r}", graph.node_name(v)).unwrap();
            }
        }
        GroundTruth::RoleFrequencies(z) => {
            for (v, row) in z.rows().into_iter().enumerate() {
                let cols: Vec<String> = row.iter().map(|x| x.to_string()).collect();
                writeln!(out, "{}\t{}", graph.node_name(v), cols.join("\t")).unwrap();
            }
        }
    }
    out
}

/// Writes `edges.txt`, `labels.txt` and `truth.txt` under `dir`, each
/// starting with `header` as a `#` comment when given. Nodes without edges
/// cannot appear in an edge list, so their labels and truth rows are dropped.
pub fn write_planted(planted: &Planted, dir: &Path, header: Option<&str>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let g = &planted.graph;
    let head = header.map(|h| format!("# {h}\n")).unwrap_or_default();
    let isolated = (0..g.num_nodes()).filter(|&v| g.degree(v) == 0).count();
    if isolated > 0 {
        log::warn!("{isolated} node(s) without edges left out of the written files");
    }
    let mut edges = head.clone();
    for &(s, r) in g.edges() {
        writeln!(edges, "{}\t{}", g.node_name(s), g.node_name(r)).unwrap();
    }
    std::fs::write(dir.join("edges.txt"), edges)?;
    let mut labels = head.clone();
    for v in 0..g.num_nodes() {
        if let (Some(c), true) = (planted.labels.label(v), g.degree(v) > 0) {
            writeln!(
                labels,
                "{}\t{}",
                g.node_name(v),
                planted.labels.class_names()[c]
            )
            .unwrap();
        }
    }
    std::fs::write(dir.join("labels.txt"), labels)?;
    let truth: String = ground_truth_text(g, &planted.truth)
        .lines()
        .enumerate()
        .filter(|(v, _)| g.degree(*v) > 0)
        .map(|(_, line)| format!("{line}\n"))
        .collect();
    std::fs::write(dir.join("truth.txt"), head + &truth)?;
    Ok(())
}
