//! Free-energy terms of the softmax class likelihood as a function of the
//! weights `η` (C×K), their gradient, and a conjugate-gradient maximiser.
//!
//! For every labelled node `v` with `n_v` interaction endpoints and endpoint
//! marginals `λ_{j,v}`:
//!
//! ```text
//! F(η) = Σ_v  η_{y_v}·λ̄_v − log Σ_c Π_j ( Σ_k λ_{j,v,k} exp(η_{c,k} / n_v) )
//! ```
//!
//! Products over a node's endpoints are accumulated as sums of logs.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};

/// Softmax weights, one row per class.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxWeights {
    pub eta: Array2<f64>,
}

impl SoftmaxWeights {
    pub fn zeros(c: usize, k: usize) -> Self {
        SoftmaxWeights {
            eta: Array2::zeros((c, k)),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.eta.nrows()
    }

    pub fn num_roles(&self) -> usize {
        self.eta.ncols()
    }
}

/// A labelled node's contribution: its class and the role marginal of each
/// interaction endpoint it occupies (row-major, `n_v × K`).
#[derive(Clone, Debug, PartialEq)]
pub struct NodeTerm {
    pub label: usize,
    pub marginals: Vec<f64>,
}

impl NodeTerm {
    pub fn endpoints(&self, k: usize) -> usize {
        self.marginals.len() / k
    }

    /// `λ̄_v`, the average endpoint marginal.
    pub fn mean_marginal(&self, k: usize) -> Vec<f64> {
        let n = self.endpoints(k);
        let mut out = vec![0.0; k];
        for j in 0..n {
            for a in 0..k {
                out[a] += self.marginals[j * k + a];
            }
        }
        out.iter_mut().for_each(|x| *x /= n as f64);
        out
    }
}

/// Inputs of the objective: labelled nodes with at least one endpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxData {
    k: usize,
    c: usize,
    nodes: Vec<NodeTerm>,
    /// `λ̄_v` per node
    means: Vec<Vec<f64>>,
}

impl SoftmaxData {
    pub fn new(k: usize, c: usize, nodes: Vec<NodeTerm>) -> Result<Self> {
        for node in &nodes {
            if node.label >= c {
                return Err(Error::Config(format!(
                    "label {} outside {c} classes",
                    node.label
                )));
            }
            if node.marginals.is_empty() || node.marginals.len() % k != 0 {
                return Err(Error::Config(
                    "node term needs n_v ≥ 1 full marginals".into(),
                ));
            }
        }
        let means = nodes.iter().map(|n| n.mean_marginal(k)).collect();
        Ok(SoftmaxData { k, c, nodes, means })
    }

    pub fn num_roles(&self) -> usize {
        self.k
    }

    pub fn num_classes(&self) -> usize {
        self.c
    }

    pub fn nodes(&self) -> &[NodeTerm] {
        &self.nodes
    }
}

/// Objective value and gradient at one `η`.
#[derive(Clone, Debug)]
pub struct ObjectiveState {
    pub value: f64,
    pub gradient: Array2<f64>,
}

/// Buffers reused across nodes.
#[derive(Default)]
struct Scratch {
    /// `exp(η_{c,k}/n − M_c)`, with `M_c` the row max so every factor is ≤ 1
    scaled: Vec<f64>,
    shift: Vec<f64>,
    /// `Σ_j log s_{j,c}` per class
    log_prod: Vec<f64>,
    /// `s_{j,c} = Σ_k λ_{j,k} scaled_{c,k}`
    factors: Vec<f64>,
}

/// `log Σ_c Π_j s_{j,c}` for one node; adds the node's gradient to `grad`
/// (flat C×K) when given.
fn eval_node(
    eta: &[f64],
    c: usize,
    k: usize,
    node: &NodeTerm,
    lbar: &[f64],
    sc: &mut Scratch,
    grad: Option<&mut [f64]>,
) -> f64 {
    let n = node.endpoints(k);
    let nf = n as f64;
    sc.scaled.resize(c * k, 0.0);
    sc.shift.resize(c, 0.0);
    sc.log_prod.clear();
    sc.log_prod.resize(c, 0.0);
    sc.factors.resize(n * c, 0.0);
    for y in 0..c {
        let row = &eta[y * k..(y + 1) * k];
        let m = row.iter().fold(f64::NEG_INFINITY, |m, e| m.max(e / nf));
        sc.shift[y] = m;
        for a in 0..k {
            sc.scaled[y * k + a] = (row[a] / nf - m).exp();
        }
    }
    for j in 0..n {
        let lam = &node.marginals[j * k..(j + 1) * k];
        for y in 0..c {
            let srow = &sc.scaled[y * k..(y + 1) * k];
            let s: f64 = lam.iter().zip(srow).map(|(l, e)| l * e).sum();
            sc.factors[j * c + y] = s;
            sc.log_prod[y] += s.ln();
        }
    }
    for y in 0..c {
        sc.log_prod[y] += nf * sc.shift[y];
    }
    let max = sc
        .log_prod
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = sc.log_prod.iter().map(|l| (l - max).exp()).sum();
    let log_norm = max + z.ln();
    if let Some(grad) = grad {
        for y in 0..c {
            let resp = (sc.log_prod[y] - log_norm).exp();
            if resp == 0.0 {
                continue;
            }
            let srow = &sc.scaled[y * k..(y + 1) * k];
            let g = &mut grad[y * k..(y + 1) * k];
            for j in 0..n {
                let lam = &node.marginals[j * k..(j + 1) * k];
                let coef = resp / (nf * sc.factors[j * c + y]);
                for a in 0..k {
                    g[a] -= coef * lam[a] * srow[a];
                }
            }
        }
        let g = &mut grad[node.label * k..(node.label + 1) * k];
        for a in 0..k {
            g[a] += lbar[a];
        }
    }
    log_norm
}

fn accumulate(eta: &SoftmaxWeights, data: &SoftmaxData, mut grad: Option<&mut [f64]>) -> f64 {
    let (c, k) = (data.c, data.k);
    let eta = eta.eta.as_standard_layout();
    let eta = eta.as_slice().expect("standard layout");
    let mut sc = Scratch::default();
    let mut f = 0.0;
    for (node, lbar) in data.nodes.iter().zip(&data.means) {
        let row = &eta[node.label * k..(node.label + 1) * k];
        let lin: f64 = row.iter().zip(lbar).map(|(e, l)| e * l).sum();
        f += lin - eval_node(eta, c, k, node, lbar, &mut sc, grad.as_deref_mut());
    }
    f
}

/// `F(η)`, optionally minus `(l2/2)‖η‖²`.
pub fn objective(eta: &SoftmaxWeights, data: &SoftmaxData, l2: f64) -> f64 {
    accumulate(eta, data, None) - 0.5 * l2 * eta.eta.iter().map(|x| x * x).sum::<f64>()
}

/// Value and analytic gradient together.
pub fn evaluate(eta: &SoftmaxWeights, data: &SoftmaxData, l2: f64) -> Result<ObjectiveState> {
    let mut flat = vec![0.0; data.c * data.k];
    let mut value = accumulate(eta, data, Some(&mut flat));
    let mut grad = Array2::from_shape_vec((data.c, data.k), flat).expect("gradient shape");
    if l2 > 0.0 {
        value -= 0.5 * l2 * eta.eta.iter().map(|x| x * x).sum::<f64>();
        grad.zip_mut_with(&eta.eta, |g, e| *g -= l2 * e);
    }
    if let Some(((y, a), x)) = grad.indexed_iter().find(|(_, x)| !x.is_finite()) {
        return Err(Error::numerical(
            format!("gradient entry ({y},{a})"),
            format!("value {x}"),
        ));
    }
    if !value.is_finite() {
        return Err(Error::numerical(
            "softmax objective",
            format!("value {value}"),
        ));
    }
    Ok(ObjectiveState {
        value,
        gradient: grad,
    })
}

pub fn gradient(eta: &SoftmaxWeights, data: &SoftmaxData, l2: f64) -> Result<Array2<f64>> {
    evaluate(eta, data, l2).map(|s| s.gradient)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CgOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    pub l2: f64,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            grad_tol: 1e-5,
            max_iter: 200,
            armijo: 1e-4,
            shrink: 0.5,
            max_backtracks: 60,
            l2: 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CgTraceRow {
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub weights: SoftmaxWeights,
    pub value: f64,
    pub accepted_steps: usize,
    pub grad_norm: f64,
    /// Set when the line search failed along steepest ascent too.
    pub line_search_failed: bool,
    pub trace: Vec<CgTraceRow>,
}

fn inf_norm(x: &Array2<f64>) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Polak–Ribière conjugate-gradient ascent with Armijo backtracking. The
/// direction resets to the gradient every `C·K` iterations and whenever it
/// stops being an ascent direction.
pub fn maximize(eta0: &SoftmaxWeights, data: &SoftmaxData, opts: &CgOptions) -> Result<CgOutcome> {
    let restart_every = (data.c * data.k).max(1);
    let mut x = eta0.clone();
    let mut state = evaluate(&x, data, opts.l2)?;
    let mut dir = state.gradient.clone();
    let mut step = 1.0 / inf_norm(&state.gradient).max(1.0);
    let mut accepted = 0;
    let mut failed = false;
    let mut trace = vec![CgTraceRow {
        iteration: 0,
        value: state.value,
        grad_norm: inf_norm(&state.gradient),
        step: 0.0,
    }];
    let mut since_restart = 0;
    for iter in 1..=opts.max_iter {
        if inf_norm(&state.gradient) < opts.grad_tol {
            break;
        }
        let mut slope = dot(&state.gradient, &dir);
        if !(slope > 0.0) {
            dir = state.gradient.clone();
            slope = dot(&state.gradient, &dir);
            since_restart = 0;
        }
        let mut found = None;
        for attempt in 0..2 {
            let mut t = step;
            for _ in 0..opts.max_backtracks {
                let cand = SoftmaxWeights {
                    eta: &x.eta + &(&dir * t),
                };
                let value = objective(&cand, data, opts.l2);
                if value.is_finite() && value >= state.value + opts.armijo * t * slope {
                    found = Some((cand, t));
                    break;
                }
                t *= opts.shrink;
            }
            if found.is_some() || attempt == 1 {
                break;
            }
            if dir == state.gradient {
                break;
            }
            log::debug!("line search failed, restarting along the gradient");
            dir = state.gradient.clone();
            slope = dot(&state.gradient, &dir);
            step = 1.0 / inf_norm(&state.gradient).max(1.0);
            since_restart = 0;
        }
        let Some((cand, t)) = found else {
            log::warn!("conjugate gradient line search failed at iteration {iter}");
            failed = true;
            break;
        };
        let next = evaluate(&cand, data, opts.l2)?;
        accepted += 1;
        since_restart += 1;
        let beta = if since_restart >= restart_every {
            since_restart = 0;
            0.0
        } else {
            let denom = dot(&state.gradient, &state.gradient);
            let num = dot(&next.gradient, &(&next.gradient - &state.gradient));
            (num / denom).max(0.0)
        };
        dir = &next.gradient + &(&dir * beta);
        x = cand;
        state = next;
        step = (t * 2.0).min(1e6);
        trace.push(CgTraceRow {
            iteration: iter,
            value: state.value,
            grad_norm: inf_norm(&state.gradient),
            step: t,
        });
    }
    Ok(CgOutcome {
        grad_norm: inf_norm(&state.gradient),
        weights: x,
        value: state.value,
        accepted_steps: accepted,
        line_search_failed: failed,
        trace,
    })
}

pub fn trace_csv(trace: &[CgTraceRow]) -> String {
    let mut out = String::from("iteration,value,grad_norm,step\n");
    for row in trace {
        writeln!(
            out,
            "{},{},{},{}",
            row.iteration, row.value, row.grad_norm, row.step
        )
        .unwrap();
    }
    out
}
