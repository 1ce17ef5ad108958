//! Reference computations shared by the integration tests and the acceptance
//! suite. The oracles here never call into the library: likelihoods are
//! evaluated from scratch by enumeration. `engine` runs the library's own
//! updates on the same instances.
#![allow(dead_code)]

pub mod engine;

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn normalise_logs(logs: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(logs);
    logs.iter().map(|l| (l - z).exp()).collect()
}

/// Dirichlet-multinomial evidence `log p(counts)` with concentrations `alpha`,
/// for one particular sequence of draws.
fn log_dirmult(counts: &[f64], alpha: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    let a: f64 = alpha.iter().sum();
    let mut out = ln_gamma(a) - ln_gamma(n + a);
    for (c, al) in counts.iter().zip(alpha) {
        out += ln_gamma(c + al) - ln_gamma(*al);
    }
    out
}

/// A small node-model instance with hard roles.
#[derive(Clone, Debug)]
pub struct NodeInstance {
    pub n: usize,
    pub k: usize,
    pub c: usize,
    pub edges: Vec<(usize, usize)>,
    pub roles: Vec<usize>,
    /// Labels visible to the class term.
    pub labels: Vec<Option<usize>>,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eta_dir: f64,
    pub self_pairs: bool,
}

impl NodeInstance {
    pub fn random(rng: &mut impl Rng, max_n: usize, k: usize, c: usize, self_pairs: bool) -> Self {
        let n = rng.random_range(2..=max_n);
        let density = rng.random_range(0.1..0.6);
        let mut edges = Vec::new();
        for s in 0..n {
            for r in 0..n {
                if (s != r || self_pairs) && rng.random::<f64>() < density {
                    edges.push((s, r));
                }
            }
        }
        // an occasional duplicate must not change the binary likelihood
        if !edges.is_empty() && rng.random::<f64>() < 0.3 {
            edges.push(edges[0]);
        }
        NodeInstance {
            n,
            k,
            c,
            edges,
            roles: (0..n).map(|_| rng.random_range(0..k)).collect(),
            labels: (0..n)
                .map(|_| (rng.random::<f64>() < 0.7).then(|| rng.random_range(0..c)))
                .collect(),
            alpha: rng.random_range(0.2..3.0),
            beta1: rng.random_range(0.2..3.0),
            beta2: rng.random_range(0.2..3.0),
            eta_dir: rng.random_range(0.2..3.0),
            self_pairs,
        }
    }

    /// `log p(A, z)`, plus `log p(y | z)` when `with_labels`, with every
    /// ordered pair enumerated explicitly.
    pub fn log_joint(&self, roles: &[usize], with_labels: bool) -> f64 {
        let (n, k) = (self.n, self.k);
        let links: BTreeSet<(usize, usize)> = self
            .edges
            .iter()
            .copied()
            .filter(|&(s, r)| s != r || self.self_pairs)
            .collect();
        let mut occupancy = vec![0.0; k];
        roles.iter().for_each(|&z| occupancy[z] += 1.0);
        let mut out = log_dirmult(&occupancy, &vec![self.alpha; k]);
        let mut pairs = vec![0.0; k * k];
        let mut ones = vec![0.0; k * k];
        for s in 0..n {
            for r in 0..n {
                if s == r && !self.self_pairs {
                    continue;
                }
                let block = roles[s] * k + roles[r];
                pairs[block] += 1.0;
                if links.contains(&(s, r)) {
                    ones[block] += 1.0;
                }
            }
        }
        for b in 0..k * k {
            out += ln_beta(ones[b] + self.beta1, pairs[b] - ones[b] + self.beta2)
                - ln_beta(self.beta1, self.beta2);
        }
        if with_labels {
            for role in 0..k {
                let counts: Vec<f64> = (0..self.c)
                    .map(|y| {
                        (0..n)
                            .filter(|&v| roles[v] == role && self.labels[v] == Some(y))
                            .count() as f64
                    })
                    .collect();
                out += log_dirmult(&counts, &vec![self.eta_dir; self.c]);
            }
        }
        out
    }

    /// Exact collapsed conditional of `z_v` given every other role.
    pub fn gibbs_conditional(&self, v: usize, with_labels: bool) -> Vec<f64> {
        let logs: Vec<f64> = (0..self.k)
            .map(|role| {
                let mut z = self.roles.clone();
                z[v] = role;
                self.log_joint(&z, with_labels)
            })
            .collect();
        normalise_logs(&logs)
    }

    pub fn one_hot_lambda(&self) -> Vec<f64> {
        let mut lam = vec![0.0; self.n * self.k];
        for (v, &z) in self.roles.iter().enumerate() {
            lam[v * self.k + z] = 1.0;
        }
        lam
    }
}

/// A small interaction-model instance with hard role pairs.
#[derive(Clone, Debug)]
pub struct PairInstance {
    pub n: usize,
    pub k: usize,
    pub edges: Vec<(usize, usize)>,
    /// `(sender role, receiver role)` per interaction.
    pub pairs: Vec<(usize, usize)>,
    pub alpha_pair: Array2<f64>,
    pub beta: f64,
}

impl PairInstance {
    pub fn random(rng: &mut impl Rng, interactions: usize, k: usize) -> Self {
        let n = rng.random_range(2..=5);
        let edges = (0..interactions)
            .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
            .collect();
        PairInstance {
            n,
            k,
            edges,
            pairs: (0..interactions)
                .map(|_| (rng.random_range(0..k), rng.random_range(0..k)))
                .collect(),
            alpha_pair: Array2::from_shape_fn((k, k), |_| rng.random_range(0.2..3.0)),
            beta: rng.random_range(0.2..3.0),
        }
    }

    /// `log p(pairs, endpoints)` with the role pairs' Dirichlet and each
    /// role's node distribution (shared by senders and receivers) integrated out.
    pub fn log_joint(&self, pairs: &[(usize, usize)]) -> f64 {
        let k = self.k;
        let mut d = vec![0.0; k * k];
        let mut node_counts = vec![vec![0.0; self.n]; k];
        for (&(a, b), &(s, r)) in pairs.iter().zip(&self.edges) {
            d[a * k + b] += 1.0;
            node_counts[a][s] += 1.0;
            node_counts[b][r] += 1.0;
        }
        let mut out = log_dirmult(&d, self.alpha_pair.as_slice().unwrap());
        for counts in &node_counts {
            out += log_dirmult(counts, &vec![self.beta; self.n]);
        }
        out
    }

    /// Exact conditional of interaction `i`'s role pair, row-major K×K.
    pub fn conditional(&self, i: usize) -> Vec<f64> {
        let logs: Vec<f64> = (0..self.k * self.k)
            .map(|ab| {
                let mut p = self.pairs.clone();
                p[i] = (ab / self.k, ab % self.k);
                self.log_joint(&p)
            })
            .collect();
        normalise_logs(&logs)
    }

    pub fn one_hot_lambda(&self) -> Vec<f64> {
        let kk = self.k * self.k;
        let mut lam = vec![0.0; self.edges.len() * kk];
        for (i, &(a, b)) in self.pairs.iter().enumerate() {
            lam[i * kk + a * self.k + b] = 1.0;
        }
        lam
    }
}

/// Random labelled node terms: `(label, n_v × K marginals)`.
pub fn random_node_terms(
    rng: &mut impl Rng,
    nodes: usize,
    k: usize,
    c: usize,
) -> Vec<(usize, Vec<f64>)> {
    (0..nodes)
        .map(|_| {
            let endpoints = rng.random_range(1..=5);
            let mut marg = Vec::with_capacity(endpoints * k);
            for _ in 0..endpoints {
                let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = raw.iter().sum();
                marg.extend(raw.iter().map(|x| x / s));
            }
            (rng.random_range(0..c), marg)
        })
        .collect()
}

/// `Σ_v η_{y_v}·λ̄_v − log Σ_c Π_j Σ_k λ_{j,k} exp(η_{c,k}/n_v)`, evaluated
/// literally with no shifting or log-space tricks.
pub fn softmax_objective(eta: &Array2<f64>, terms: &[(usize, Vec<f64>)]) -> f64 {
    let (c, k) = eta.dim();
    let mut total = 0.0;
    for (y, marg) in terms {
        let n = marg.len() / k;
        let mut lbar = vec![0.0; k];
        for j in 0..n {
            for a in 0..k {
                lbar[a] += marg[j * k + a] / n as f64;
            }
        }
        let linear: f64 = (0..k).map(|a| eta[[*y, a]] * lbar[a]).sum();
        let mut z = 0.0;
        for cls in 0..c {
            let mut prod = 1.0;
            for j in 0..n {
                prod *= (0..k)
                    .map(|a| marg[j * k + a] * (eta[[cls, a]] / n as f64).exp())
                    .sum::<f64>();
            }
            z += prod;
        }
        total += linear - z.ln();
    }
    total
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| rel_err(*x, *y))
        .fold(0.0, f64::max)
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn is_simplex(xs: &[f64], tol: f64) -> bool {
    xs.iter().all(|x| *x >= 0.0) && (xs.iter().sum::<f64>() - 1.0).abs() <= tol
}
