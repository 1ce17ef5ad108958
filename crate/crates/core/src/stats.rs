//! Expected count statistics consumed by the collapsed updates.
//!
//! Node models (SBM/SSMB) keep, under the mean-field factorisation,
//!
//! * `n[k]`      expected role occupancy,
//! * `pair[a,b]` `Σ_v λ_{v,a} λ_{v,b}`, needed for exact expected pair counts,
//! * `d[a,b]`    expected links from role `a` to role `b`,
//! * `f[v,k]`    expected links from `v` to assigned nodes of role `k`,
//! * `g[v,k]`    expected links into `v` from assigned nodes of role `k`,
//! * `m[c,k]`    class-role co-occurrence over labelled assigned nodes.
//!
//! `f`/`g` never include a self-loop; those enter `d[k,k]` directly.
//!
//! Interaction models (SMMB) reuse `d`, `f` and `g` with per-interaction
//! meaning: `f[v,k]` is the expected number of times `v` sends *as* role `k`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{BinaryLinks, DirectedGraph};

const SIMPLEX_TOL: f64 = 1e-9;
const NEG_TOL: f64 = 1e-6;

fn check_nonnegative(groups: &[(&str, &[f64])]) -> Result<()> {
    for (name, xs) in groups {
        if let Some(x) = xs.iter().find(|x| !(**x >= -NEG_TOL) || !x.is_finite()) {
            return Err(Error::Consistency(format!(
                "{name} entry {x} after removal"
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuffStats {
    k: usize,
    c: usize,
    n: Vec<f64>,
    pair: Vec<f64>,
    d: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    f_tot: Vec<f64>,
    g_tot: Vec<f64>,
    m: Vec<f64>,
    n_v: Vec<f64>,
    assigned: Vec<bool>,
}

fn check_simplex(x: &[f64], what: &str) -> Result<()> {
    let s: f64 = x.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL || x.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Config(format!("{what} is not a simplex (sum {s})")));
    }
    Ok(())
}

impl SuffStats {
    /// Empty statistics for a node model over `num_nodes` nodes.
    pub fn for_nodes(num_nodes: usize, k: usize, c: usize) -> Self {
        SuffStats {
            k,
            c,
            n: vec![0.0; k],
            pair: vec![0.0; k * k],
            d: vec![0.0; k * k],
            f: vec![0.0; num_nodes * k],
            g: vec![0.0; num_nodes * k],
            f_tot: vec![0.0; k],
            g_tot: vec![0.0; k],
            m: vec![0.0; c * k],
            n_v: vec![0.0; num_nodes],
            assigned: vec![false; num_nodes],
        }
    }

    /// Empty statistics for an interaction model. `n_v` is fixed at each
    /// node's endpoint count.
    pub fn for_interactions(graph: &DirectedGraph, k: usize) -> Self {
        let mut s = Self::for_nodes(graph.num_nodes(), k, 0);
        s.assigned = vec![false; graph.num_edges()];
        for v in 0..graph.num_nodes() {
            s.n_v[v] = graph.degree(v) as f64;
        }
        s
    }

    pub fn num_roles(&self) -> usize {
        self.k
    }

    pub fn num_classes(&self) -> usize {
        self.c
    }

    pub fn n(&self) -> &[f64] {
        &self.n
    }

    pub fn n_k(&self, k: usize) -> f64 {
        self.n[k]
    }

    pub fn d(&self, a: usize, b: usize) -> f64 {
        self.d[a * self.k + b]
    }

    /// Row-major K×K link counts.
    pub fn d_matrix(&self) -> &[f64] {
        &self.d
    }

    pub fn pair_moment(&self, a: usize, b: usize) -> f64 {
        self.pair[a * self.k + b]
    }

    pub fn f_row(&self, v: usize) -> &[f64] {
        &self.f[v * self.k..(v + 1) * self.k]
    }

    pub fn g_row(&self, v: usize) -> &[f64] {
        &self.g[v * self.k..(v + 1) * self.k]
    }

    pub fn f(&self, v: usize, k: usize) -> f64 {
        self.f[v * self.k + k]
    }

    pub fn g(&self, v: usize, k: usize) -> f64 {
        self.g[v * self.k + k]
    }

    /// `f[·,k]`, interaction models only.
    pub fn f_total(&self, k: usize) -> f64 {
        self.f_tot[k]
    }

    pub fn g_total(&self, k: usize) -> f64 {
        self.g_tot[k]
    }

    pub fn m(&self, c: usize, k: usize) -> f64 {
        self.m[c * self.k + k]
    }

    /// `m[·,k]`.
    pub fn m_col_total(&self, k: usize) -> f64 {
        (0..self.c).map(|c| self.m[c * self.k + k]).sum()
    }

    pub fn n_v(&self, v: usize) -> f64 {
        self.n_v[v]
    }

    pub fn is_assigned(&self, unit: usize) -> bool {
        self.assigned[unit]
    }

    /// Expected number of ordered node pairs in block `(a,b)`. Self-pairs
    /// count only when `self_pairs` is set.
    pub fn block_pairs(&self, a: usize, b: usize, self_pairs: bool) -> f64 {
        let mut p = self.n[a] * self.n[b] - self.pair[a * self.k + b];
        if self_pairs && a == b {
            p += self.n[a];
        }
        p.max(0.0)
    }

    /// Fold node `v` into the statistics with role posterior `lambda`.
    pub fn add_node(
        &mut self,
        v: usize,
        lambda: &[f64],
        links: &BinaryLinks,
        label: Option<usize>,
    ) -> Result<()> {
        check_simplex(lambda, "node posterior")?;
        if self.assigned[v] {
            return Err(Error::Consistency(format!("node {v} added twice")));
        }
        self.apply_node(v, lambda, links, label, 1.0);
        self.assigned[v] = true;
        Ok(())
    }

    /// Exact inverse of [`add_node`](Self::add_node) when given the same posterior.
    pub fn remove_node(
        &mut self,
        v: usize,
        lambda: &[f64],
        links: &BinaryLinks,
        label: Option<usize>,
    ) -> Result<()> {
        if !self.assigned[v] {
            return Err(Error::Consistency(format!(
                "node {v} removed but not present"
            )));
        }
        self.apply_node(v, lambda, links, label, -1.0);
        self.assigned[v] = false;
        let k = self.k;
        check_nonnegative(&[
            ("n", &self.n),
            ("pair", &self.pair),
            ("d", &self.d),
            ("m", &self.m),
        ])?;
        for &r in &links.out[v] {
            check_nonnegative(&[("g", &self.g[r * k..(r + 1) * k])])?;
        }
        for &s in &links.inn[v] {
            check_nonnegative(&[("f", &self.f[s * k..(s + 1) * k])])?;
        }
        Ok(())
    }

    fn apply_node(
        &mut self,
        v: usize,
        lambda: &[f64],
        links: &BinaryLinks,
        label: Option<usize>,
        sign: f64,
    ) {
        let k = self.k;
        for a in 0..k {
            self.n[a] += sign * lambda[a];
            for b in 0..k {
                self.pair[a * k + b] += sign * lambda[a] * lambda[b];
            }
        }
        // v's row of f/g already reflects its assigned neighbours.
        for a in 0..k {
            for b in 0..k {
                let fv = self.f[v * k + b];
                let gv = self.g[v * k + a];
                self.d[a * k + b] += sign * (lambda[a] * fv + gv * lambda[b]);
            }
        }
        if links.self_loop[v] {
            for a in 0..k {
                self.d[a * k + a] += sign * lambda[a];
            }
        }
        for &r in &links.out[v] {
            for a in 0..k {
                self.g[r * k + a] += sign * lambda[a];
            }
        }
        for &s in &links.inn[v] {
            for a in 0..k {
                self.f[s * k + a] += sign * lambda[a];
            }
        }
        if let Some(c) = label {
            for a in 0..k {
                self.m[c * k + a] += sign * lambda[a];
            }
        }
    }

    /// Fold interaction `i = (s,r)` in with its K×K row-major posterior.
    pub fn add_interaction(&mut self, i: usize, s: usize, r: usize, lambda: &[f64]) -> Result<()> {
        check_simplex(lambda, "interaction posterior")?;
        if self.assigned[i] {
            return Err(Error::Consistency(format!("interaction {i} added twice")));
        }
        self.apply_interaction(s, r, lambda, 1.0);
        self.assigned[i] = true;
        Ok(())
    }

    pub fn remove_interaction(
        &mut self,
        i: usize,
        s: usize,
        r: usize,
        lambda: &[f64],
    ) -> Result<()> {
        if !self.assigned[i] {
            return Err(Error::Consistency(format!(
                "interaction {i} removed but not present"
            )));
        }
        self.apply_interaction(s, r, lambda, -1.0);
        self.assigned[i] = false;
        let k = self.k;
        check_nonnegative(&[
            ("d", &self.d),
            ("f", &self.f[s * k..(s + 1) * k]),
            ("g", &self.g[r * k..(r + 1) * k]),
            ("f_total", &self.f_tot),
            ("g_total", &self.g_tot),
        ])
    }

    fn check_all_nonnegative(&self) -> Result<()> {
        check_nonnegative(&[
            ("n", &self.n),
            ("d", &self.d),
            ("f", &self.f),
            ("g", &self.g),
            ("m", &self.m),
            ("pair", &self.pair),
        ])
    }

    fn apply_interaction(&mut self, s: usize, r: usize, lambda: &[f64], sign: f64) {
        let k = self.k;
        for a in 0..k {
            for b in 0..k {
                let x = sign * lambda[a * k + b];
                self.d[a * k + b] += x;
                self.f[s * k + a] += x;
                self.f_tot[a] += x;
                self.g[r * k + b] += x;
                self.g_tot[b] += x;
            }
        }
    }

    /// Recount node-model statistics from scratch.
    pub fn recount_nodes(
        k: usize,
        c: usize,
        links: &BinaryLinks,
        lambda: &[f64],
        assigned: &[bool],
        labels: impl Fn(usize) -> Option<usize>,
    ) -> Self {
        let num_nodes = assigned.len();
        let mut s = Self::for_nodes(num_nodes, k, c);
        for v in 0..num_nodes {
            if !assigned[v] {
                continue;
            }
            let lv = &lambda[v * k..(v + 1) * k];
            for a in 0..k {
                s.n[a] += lv[a];
                for b in 0..k {
                    s.pair[a * k + b] += lv[a] * lv[b];
                }
            }
            if let Some(y) = labels(v) {
                for a in 0..k {
                    s.m[y * k + a] += lv[a];
                }
            }
            if links.self_loop[v] {
                for a in 0..k {
                    s.d[a * k + a] += lv[a];
                }
            }
            for &r in &links.out[v] {
                let lr = &lambda[r * k..(r + 1) * k];
                for a in 0..k {
                    s.g[r * k + a] += lv[a];
                }
                if assigned[r] {
                    for a in 0..k {
                        s.f[v * k + a] += lr[a];
                        for b in 0..k {
                            s.d[a * k + b] += lv[a] * lr[b];
                        }
                    }
                }
            }
        }
        // g[r] above counted every assigned sender; f[v] only assigned receivers.
        // f of unassigned nodes must still count assigned receivers.
        for v in 0..num_nodes {
            if assigned[v] {
                continue;
            }
            for &r in &links.out[v] {
                if assigned[r] {
                    for a in 0..k {
                        s.f[v * k + a] += lambda[r * k + a];
                    }
                }
            }
        }
        s.assigned = assigned.to_vec();
        s
    }

    /// Recount interaction-model statistics from scratch.
    pub fn recount_interactions(
        graph: &DirectedGraph,
        k: usize,
        lambda: &[f64],
        added: &[bool],
    ) -> Self {
        let mut s = Self::for_interactions(graph, k);
        let kk = k * k;
        for (i, &(src, dst)) in graph.edges().iter().enumerate() {
            if added[i] {
                s.apply_interaction(src, dst, &lambda[i * kk..(i + 1) * kk], 1.0);
            }
        }
        s.assigned = added.to_vec();
        s
    }

    /// Largest absolute entry-wise difference between two statistics.
    pub fn max_abs_diff(&self, other: &SuffStats) -> f64 {
        let pairs: [(&[f64], &[f64]); 8] = [
            (&self.n, &other.n),
            (&self.pair, &other.pair),
            (&self.d, &other.d),
            (&self.f, &other.f),
            (&self.g, &other.g),
            (&self.f_tot, &other.f_tot),
            (&self.g_tot, &other.g_tot),
            (&self.m, &other.m),
        ];
        pairs
            .iter()
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Node-model invariants: nonnegativity, occupancy and link totals.
    pub fn check_node_invariants(&self, links: &BinaryLinks) -> Result<()> {
        self.check_all_nonnegative()?;
        let assigned = self.assigned.iter().filter(|a| **a).count() as f64;
        let total_n: f64 = self.n.iter().sum();
        if (total_n - assigned).abs() > 1e-6 {
            return Err(Error::Consistency(format!(
                "Σn = {total_n}, assigned = {assigned}"
            )));
        }
        let mut links_assigned = 0usize;
        for (s, outs) in links.out.iter().enumerate() {
            if self.assigned[s] {
                links_assigned += outs.iter().filter(|&&r| self.assigned[r]).count();
                links_assigned += links.self_loop[s] as usize;
            }
        }
        let total_d: f64 = self.d.iter().sum();
        if (total_d - links_assigned as f64).abs() > 1e-6 {
            return Err(Error::Consistency(format!(
                "Σd = {total_d}, links between assigned nodes = {links_assigned}"
            )));
        }
        Ok(())
    }

    /// Interaction-model invariants; the per-node total holds once every
    /// interaction is folded in.
    pub fn check_interaction_invariants(&self) -> Result<()> {
        self.check_all_nonnegative()?;
        if self.assigned.iter().all(|a| *a) {
            for v in 0..self.n_v.len() {
                let total: f64 =
                    self.f_row(v).iter().sum::<f64>() + self.g_row(v).iter().sum::<f64>();
                if (total - self.n_v[v]).abs() > 1e-6 {
                    return Err(Error::Consistency(format!(
                        "node {v}: Σf+Σg = {total}, n_v = {}",
                        self.n_v[v]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Long-form CSV (`matrix,row,col,value`) of every count matrix.
    pub fn to_csv(&self) -> String {
        let k = self.k;
        let mut out = String::from("matrix,row,col,value\n");
        let mut emit = |name: &str, xs: &[f64], cols: usize| {
            for (idx, x) in xs.iter().enumerate() {
                writeln!(out, "{name},{},{},{x}", idx / cols, idx % cols).unwrap();
            }
        };
        emit("n", &self.n, k);
        emit("d", &self.d, k);
        emit("f", &self.f, k);
        emit("g", &self.g, k);
        emit("m", &self.m, k);
        emit("n_v", &self.n_v, 1);
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}
