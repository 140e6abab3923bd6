//! Sequential vine structure selection: pseudo-observations, maximum spanning
//! trees on |Kendall's τ| under the proximity condition, per-edge copula
//! selection, and truncation with Independence above level K.

use std::cmp::Ordering;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::csv_to_io;
use crate::matrix::Matrix;
use crate::numerics::kendall_tau;
use crate::pair_copulas::{fit_pair, Candidate, PairCopula, PairFit};
use crate::vine_model::slots::with;
use crate::vine_model::{UnionFind, VineEdge, VineModel, VineStructure};

/// Column-wise ranks divided by n + 1, with average ranks for ties.
pub fn pseudo_obs(x: &Matrix) -> Result<Matrix> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 observations, got {n}")));
    }
    let mut out = Matrix::zeros(n, x.cols());
    let mut idx: Vec<usize> = Vec::with_capacity(n);
    for j in 0..x.cols() {
        idx.clear();
        idx.extend(0..n);
        idx.sort_by(|&a, &b| x.get(a, j).total_cmp(&x.get(b, j)));
        if x.get(idx[0], j) == x.get(idx[n - 1], j) {
            return Err(Error::Degenerate(format!("column {} is constant", j + 1)));
        }
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && x.get(idx[end], j) == x.get(idx[start], j) {
                end += 1;
            }
            // positions start..end hold ranks start+1..=end
            let rank = (start + end + 1) as f64 / 2.0;
            for &i in &idx[start..end] {
                out.set(i, j, rank / (n + 1) as f64);
            }
            start = end;
        }
    }
    Ok(out)
}

/// Tie-adjusted Kendall's τ-b of two samples.
pub fn kendall_tau_empirical(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.len() < 2 {
        return Err(Error::Domain(format!(
            "Kendall's tau needs two samples of equal length ≥ 2 (got {} and {})",
            u.len(),
            v.len()
        )));
    }
    let constant = |s: &[f64]| s.iter().all(|&x| x == s[0]);
    if constant(u) || constant(v) {
        return Err(Error::Degenerate("Kendall's tau of a constant sample".into()));
    }
    Ok(kendall_tau(u, v))
}

/// The next-tree inputs of an edge: (F(a | b, D), F(b | a, D)) computed from
/// (F(a | D), F(b | D)) via the h-functions of the edge copula.
pub fn conditional_pseudo_obs(copula: &PairCopula, u_left: &[f64], u_right: &[f64]) -> (Vec<f64>, Vec<f64>) {
    u_left
        .iter()
        .zip(u_right)
        .map(|(&a, &b)| (copula.h(a, b), copula.h_rev(a, b)))
        .unzip()
}

/// Per-edge summary of a structure selection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeReport {
    pub tree: usize,
    pub edge: String,
    pub family: String,
    pub rotation: u16,
    pub theta: Option<f64>,
    pub tau_empirical: Option<f64>,
    pub tau_model: f64,
    pub loglik: Option<f64>,
    pub aic: Option<f64>,
}

/// A node of the tree currently being built: an edge of the previous tree,
/// or a variable for the first tree.
struct Node {
    conditioned: [usize; 2],
    conditioning: Vec<usize>,
    /// Parents in the tree before; variables for first-tree edges.
    parents: [usize; 2],
    /// F(a | D ∪ b) and F(b | D ∪ a), present while later fitted trees need them.
    data: Option<[Vec<f64>; 2]>,
}

impl Node {
    fn complete_union(&self) -> Vec<usize> {
        with(&with(&self.conditioning, self.conditioned[0]), self.conditioned[1])
    }
}

/// Admissible edge between nodes `p` and `q` of the current tree.
struct Proposal {
    p: usize,
    q: usize,
    conditioned: [usize; 2],
    conditioning: Vec<usize>,
    weight: f64,
}

impl Proposal {
    fn id(&self) -> ([usize; 2], &[usize]) {
        (self.conditioned, &self.conditioning)
    }
}

/// Greedy maximum spanning tree: heaviest first, ties by smallest edge id.
fn spanning_tree(n_nodes: usize, mut proposals: Vec<Proposal>) -> Result<Vec<Proposal>> {
    proposals.sort_by(|x, y| {
        y.weight
            .partial_cmp(&x.weight)
            .unwrap_or(Ordering::Equal)
            .then_with(|| x.id().cmp(&y.id()))
    });
    let mut uf = UnionFind::new(n_nodes);
    let mut chosen: Vec<Proposal> = proposals.into_iter().filter(|e| uf.union(e.p, e.q)).collect();
    if chosen.len() + 1 != n_nodes {
        return Err(Error::Structure(format!(
            "only {} admissible edges connect {n_nodes} nodes",
            chosen.len()
        )));
    }
    chosen.sort_by(|x, y| x.id().cmp(&y.id()));
    Ok(chosen)
}

/// Admissible edges of the tree on `nodes`, with zero weights.
fn proposals(nodes: &[Node], first_tree: bool) -> Vec<Proposal> {
    let mut out = Vec::new();
    for p in 0..nodes.len() {
        for q in p + 1..nodes.len() {
            let (np, nq) = (&nodes[p], &nodes[q]);
            let shared = np.parents.iter().any(|x| nq.parents.contains(x));
            if !first_tree && !shared {
                continue;
            }
            let (x, y, conditioning) = if first_tree {
                (np.conditioned[0], nq.conditioned[0], Vec::new())
            } else {
                let (union_p, union_q) = (np.complete_union(), nq.complete_union());
                let x = *union_p.iter().find(|v| !union_q.contains(v)).expect("distinct unions");
                let y = *union_q.iter().find(|v| !union_p.contains(v)).expect("distinct unions");
                let d = union_p.iter().copied().filter(|v| union_q.contains(v)).collect();
                (x, y, d)
            };
            let (p, q, conditioned) = if x < y { (p, q, [x, y]) } else { (q, p, [y, x]) };
            out.push(Proposal {
                p,
                q,
                conditioned,
                conditioning,
                weight: 0.0,
            });
        }
    }
    out
}

/// F(x | D) carried by `node`, where x is one of its conditioned variables.
fn node_column(node: &Node, x: usize) -> &[f64] {
    let data = node.data.as_ref().expect("fitted trees keep their data");
    if node.conditioned[0] == x {
        &data[0]
    } else {
        &data[1]
    }
}

/// Selects a vine structure for the pseudo-observations `u`, fitting pair
/// copulas on trees 1..=K and completing higher trees with Independence.
pub fn select_structure(u: &Matrix, truncation: usize, candidates: &[Candidate]) -> Result<VineModel> {
    select_structure_with_report(u, truncation, candidates).map(|(m, _)| m)
}

/// As [`select_structure`], also returning a report row per edge.
pub fn select_structure_with_report(
    u: &Matrix,
    truncation: usize,
    candidates: &[Candidate],
) -> Result<(VineModel, Vec<EdgeReport>)> {
    let dim = u.cols();
    if dim < 2 {
        return Err(Error::Config(format!("need at least 2 variables, got {dim}")));
    }
    if truncation < 1 || truncation > dim - 1 {
        return Err(Error::Config(format!(
            "truncation level {truncation} outside [1, {}]",
            dim - 1
        )));
    }

    let mut nodes: Vec<Node> = (0..dim)
        .map(|j| Node {
            conditioned: [j, j],
            conditioning: Vec::new(),
            parents: [j, j],
            data: Some([u.column(j), Vec::new()]),
        })
        .collect();
    let mut trees = Vec::with_capacity(dim - 1);
    let mut report = Vec::new();

    for level in 1..dim {
        let fitted = level <= truncation;
        let mut props = proposals(&nodes, level == 1);
        if fitted {
            let weights: Vec<f64> = props
                .par_iter()
                .map(|e| {
                    let (a, b) = (node_column(&nodes[e.p], e.conditioned[0]), node_column(&nodes[e.q], e.conditioned[1]));
                    kendall_tau(a, b).abs()
                })
                .collect();
            for (e, w) in props.iter_mut().zip(weights) {
                e.weight = w;
            }
        }
        let chosen = spanning_tree(nodes.len(), props)?;

        let fits: Vec<Option<PairFit>> = if fitted {
            chosen
                .par_iter()
                .map(|e| {
                    let a = node_column(&nodes[e.p], e.conditioned[0]);
                    let b = node_column(&nodes[e.q], e.conditioned[1]);
                    fit_pair(a, b, candidates).map(Some)
                })
                .collect::<Result<_>>()?
        } else {
            vec![None; chosen.len()]
        };

        let keep_data = level < truncation;
        let mut next = Vec::with_capacity(chosen.len());
        let mut edges = Vec::with_capacity(chosen.len());
        for (e, fit) in chosen.iter().zip(&fits) {
            let copula = fit.map_or_else(PairCopula::independence, |f| f.copula);
            let edge = VineEdge::new(e.conditioned, e.conditioning.clone(), copula);
            report.push(EdgeReport {
                tree: level,
                edge: edge.to_string(),
                family: copula.family().to_string(),
                rotation: copula.rotation().degrees(),
                theta: (!copula.is_independence()).then_some(copula.theta()),
                tau_empirical: fit.map(|f| f.tau_empirical),
                tau_model: copula.tau(),
                loglik: fit.map(|f| f.loglik),
                aic: fit.map(|f| f.aic),
            });
            let data = keep_data.then(|| {
                let a = node_column(&nodes[e.p], e.conditioned[0]);
                let b = node_column(&nodes[e.q], e.conditioned[1]);
                let (fa, fb) = conditional_pseudo_obs(&copula, a, b);
                [fa, fb]
            });
            next.push(Node {
                conditioned: e.conditioned,
                conditioning: e.conditioning.clone(),
                parents: [e.p, e.q],
                data,
            });
            edges.push(edge);
        }
        trees.push(edges);
        nodes = next;
    }

    let model = VineModel::new(VineStructure {
        dim,
        truncation,
        trees,
    })?;
    Ok((model, report))
}

/// Writes the per-edge report as CSV.
pub fn write_edge_report(path: &Path, rows: &[EdgeReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_to_io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_to_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests;
