//! Regular-vine structures, validity checking and the pair-copula
//! construction log-density of a (truncated) vine copula.
//!
//! Variable indices are 0-based in memory and 1-based in files and messages.

pub(crate) mod slots;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pair_copulas::PairCopula;
use slots::{with, SlotMap};

/// One edge of tree `level`: the pair copula of (x_a, x_b) given x_D.
#[derive(Debug, Clone, PartialEq)]
pub struct VineEdge {
    /// Tree level, starting at 1.
    pub level: usize,
    /// Conditioned pair (a, b); the copula's first argument is F(a | D).
    pub conditioned: [usize; 2],
    /// Sorted conditioning set D, of size `level − 1`.
    pub conditioning: Vec<usize>,
    pub copula: PairCopula,
}

impl VineEdge {
    pub fn new(conditioned: [usize; 2], mut conditioning: Vec<usize>, copula: PairCopula) -> Self {
        conditioning.sort_unstable();
        Self {
            level: conditioning.len() + 1,
            conditioned,
            conditioning,
            copula,
        }
    }

    /// Conditioned and conditioning variables together, sorted.
    pub fn complete_union(&self) -> Vec<usize> {
        with(&with(&self.conditioning, self.conditioned[0]), self.conditioned[1])
    }

    /// Canonical identity: sorted conditioned pair and conditioning set.
    pub fn key(&self) -> ([usize; 2], &[usize]) {
        let [a, b] = self.conditioned;
        ([a.min(b), a.max(b)], &self.conditioning)
    }
}

impl fmt::Display for VineEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.conditioned[0] + 1, self.conditioned[1] + 1)?;
        if !self.conditioning.is_empty() {
            let d: Vec<String> = self.conditioning.iter().map(|x| (x + 1).to_string()).collect();
            write!(f, "|{}", d.join(","))?;
        }
        Ok(())
    }
}

/// A failed validity condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Tree level the violation refers to; 0 for global conditions.
    pub level: usize,
    /// Offending edge, when there is one.
    pub edge: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.edge {
            Some(e) => write!(f, "tree {}, edge {e}: {}", self.level, self.message),
            None if self.level == 0 => f.write_str(&self.message),
            None => write!(f, "tree {}: {}", self.level, self.message),
        }
    }
}

/// Trees of a regular vine on `dim` variables, truncated after `truncation`.
#[derive(Debug, Clone, PartialEq)]
pub struct VineStructure {
    pub dim: usize,
    pub truncation: usize,
    /// `trees[i]` holds the edges of tree level `i + 1`.
    pub trees: Vec<Vec<VineEdge>>,
}

/// Disjoint sets over `0..n` with path halving.
pub(crate) struct UnionFind(Vec<usize>);

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    /// Joins the sets of `a` and `b`; false if they were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

impl VineStructure {
    /// D-vine along the path `order`. `copulas[i][j]` is the copula of the
    /// j-th edge of tree i + 1, i.e. of (order[j], order[j+i+1]) given the
    /// variables between them; missing entries are Independence.
    pub fn dvine(order: &[usize], copulas: &[Vec<PairCopula>], truncation: usize) -> Self {
        let dim = order.len();
        let trees = (1..dim)
            .map(|level| {
                (0..dim - level)
                    .map(|j| {
                        let copula = copulas
                            .get(level - 1)
                            .and_then(|t| t.get(j))
                            .copied()
                            .unwrap_or_else(PairCopula::independence);
                        VineEdge::new([order[j], order[j + level]], order[j + 1..j + level].to_vec(), copula)
                    })
                    .collect()
            })
            .collect();
        Self {
            dim,
            truncation,
            trees,
        }
    }

    /// C-vine with root sequence `order`. Tree i + 1 pairs `order[i]` with
    /// each later variable given `order[..i]`; `copulas` as for [`Self::dvine`].
    pub fn cvine(order: &[usize], copulas: &[Vec<PairCopula>], truncation: usize) -> Self {
        let dim = order.len();
        let trees = (1..dim)
            .map(|level| {
                (0..dim - level)
                    .map(|j| {
                        let copula = copulas
                            .get(level - 1)
                            .and_then(|t| t.get(j))
                            .copied()
                            .unwrap_or_else(PairCopula::independence);
                        VineEdge::new([order[level - 1], order[level + j]], order[..level - 1].to_vec(), copula)
                    })
                    .collect()
            })
            .collect();
        Self {
            dim,
            truncation,
            trees,
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = &VineEdge> {
        self.trees.iter().flatten()
    }

    /// Complete union of the edge at `(level, index)`, with `level` 1-based.
    pub fn complete_union(&self, level: usize, index: usize) -> Result<Vec<usize>> {
        self.trees
            .get(level.wrapping_sub(1))
            .and_then(|t| t.get(index))
            .map(VineEdge::complete_union)
            .ok_or_else(|| Error::Structure(format!("no edge {index} in tree {level}")))
    }

    /// Every violated validity condition; empty for a valid regular vine.
    pub fn validate(&self) -> Vec<Violation> {
        self.check().1
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// For each tree level ≥ 2, the indices of the two parent edges in the
    /// previous tree joined by each edge (entry 0 is empty), together with the
    /// violations found along the way.
    fn check(&self) -> (Vec<Vec<[usize; 2]>>, Vec<Violation>) {
        let mut v = Vec::new();
        let global = |message: String| Violation {
            level: 0,
            edge: None,
            message,
        };
        if self.dim < 2 {
            v.push(global(format!("a vine needs at least 2 variables, got {}", self.dim)));
            return (Vec::new(), v);
        }
        if self.trees.len() != self.dim - 1 {
            v.push(global(format!(
                "expected {} trees for {} variables, got {}",
                self.dim - 1,
                self.dim,
                self.trees.len()
            )));
        }
        if self.truncation < 1 || self.truncation > self.dim - 1 {
            v.push(global(format!(
                "truncation level {} outside [1, {}]",
                self.truncation,
                self.dim - 1
            )));
        }

        let mut parents = vec![Vec::new()];
        for (t, edges) in self.trees.iter().enumerate() {
            let level = t + 1;
            let mut here = |edge: Option<&VineEdge>, message: String| {
                v.push(Violation {
                    level,
                    edge: edge.map(|e| e.to_string()),
                    message,
                })
            };
            if edges.len() + level != self.dim {
                here(None, format!("expected {} edges, got {}", self.dim - level, edges.len()));
            }
            let mut local_ok = true;
            let mut seen = HashMap::new();
            for e in edges {
                let [a, b] = e.conditioned;
                let mut bad = |m: &str| {
                    here(Some(e), m.to_string());
                    local_ok = false;
                };
                if e.level != level {
                    bad("edge stored at the wrong tree level");
                }
                if a == b {
                    bad("conditioned set must contain two distinct variables");
                }
                if a >= self.dim || b >= self.dim || e.conditioning.iter().any(|&d| d >= self.dim) {
                    bad("variable index out of range");
                }
                if e.conditioning.len() != level - 1 {
                    bad("conditioning set size must equal tree level − 1");
                }
                if e.conditioning.windows(2).any(|w| w[0] >= w[1]) {
                    bad("conditioning set must be sorted without repeats");
                }
                if e.conditioning.contains(&a) || e.conditioning.contains(&b) {
                    bad("conditioned and conditioning sets overlap");
                }
                if level > self.truncation && !e.copula.is_independence() {
                    bad("edges above the truncation level must carry the independence copula");
                }
                if seen.insert(e.key(), ()).is_some() {
                    bad("duplicate edge");
                }
            }
            if !local_ok {
                parents.push(Vec::new());
                continue;
            }

            if level == 1 {
                let mut uf = UnionFind::new(self.dim);
                for e in edges {
                    if !uf.union(e.conditioned[0], e.conditioned[1]) {
                        here(Some(e), "tree 1 not acyclic".into());
                    }
                }
                continue;
            }

            let Some(prev) = self.trees.get(t - 1) else { continue };
            let by_union: HashMap<Vec<usize>, usize> =
                prev.iter().enumerate().map(|(i, p)| (p.complete_union(), i)).collect();
            let mut links = Vec::with_capacity(edges.len());
            let mut uf = UnionFind::new(prev.len());
            for e in edges {
                let pa = by_union.get(&with(&e.conditioning, e.conditioned[0]));
                let pb = by_union.get(&with(&e.conditioning, e.conditioned[1]));
                match (pa, pb) {
                    (Some(&pa), Some(&pb)) => {
                        if !uf.union(pa, pb) {
                            here(Some(e), format!("tree {level} not acyclic"));
                        }
                        links.push([pa, pb]);
                    }
                    _ => here(
                        Some(e),
                        "proximity condition violated: the joined edges share no common node".into(),
                    ),
                }
            }
            parents.push(links);
        }
        (parents, v)
    }

    /// All nodes of the first tree have degree at most 2.
    pub fn is_dvine(&self) -> bool {
        self.is_valid() && self.degrees(1).iter().all(|&d| d <= 2)
    }

    /// Every tree i has a node of degree `dim − i`.
    pub fn is_cvine(&self) -> bool {
        self.is_valid() && (1..self.dim).all(|i| self.degrees(i).contains(&(self.dim - i)))
    }

    fn degrees(&self, level: usize) -> Vec<usize> {
        if level == 1 {
            let mut deg = vec![0; self.dim];
            for e in &self.trees[0] {
                deg[e.conditioned[0]] += 1;
                deg[e.conditioned[1]] += 1;
            }
            return deg;
        }
        let (parents, _) = self.check();
        let mut deg = vec![0; self.trees[level - 2].len()];
        for [a, b] in &parents[level - 1] {
            deg[*a] += 1;
            deg[*b] += 1;
        }
        deg
    }
}

/// One pair-copula factor of the density.
#[derive(Debug, Clone)]
struct DensityStep {
    copula: PairCopula,
    a: usize,
    b: usize,
    /// Slots receiving F(a | D ∪ b) and F(b | D ∪ a), when later trees need them.
    outputs: Option<[usize; 2]>,
}

/// A validated vine copula with cached model-implied Kendall's τ per edge.
#[derive(Debug, Clone)]
pub struct VineModel {
    structure: VineStructure,
    taus: Vec<Vec<f64>>,
    steps: Vec<DensityStep>,
    n_slots: usize,
}

impl PartialEq for VineModel {
    fn eq(&self, other: &Self) -> bool {
        self.structure == other.structure
    }
}

impl VineModel {
    pub fn new(structure: VineStructure) -> Result<Self> {
        let violations = structure.validate();
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(Error::Structure(format!("invalid vine: {}", list.join("; "))));
        }
        let taus = structure
            .trees
            .iter()
            .map(|t| t.iter().map(|e| e.copula.tau()).collect())
            .collect();

        let mut slots = SlotMap::new(structure.dim);
        let mut steps = Vec::new();
        for edges in structure.trees.iter().take(structure.truncation) {
            for e in edges {
                let [a, b] = e.conditioned;
                let sa = slots.get(a, &e.conditioning)?;
                let sb = slots.get(b, &e.conditioning)?;
                let needs_outputs = e.level < structure.truncation;
                if e.copula.is_independence() {
                    if needs_outputs {
                        slots.insert(a, with(&e.conditioning, b), Some(sa));
                        slots.insert(b, with(&e.conditioning, a), Some(sb));
                    }
                    continue;
                }
                let outputs = needs_outputs.then(|| {
                    [
                        slots.insert(a, with(&e.conditioning, b), None),
                        slots.insert(b, with(&e.conditioning, a), None),
                    ]
                });
                steps.push(DensityStep {
                    copula: e.copula,
                    a: sa,
                    b: sb,
                    outputs,
                });
            }
        }
        Ok(Self {
            structure,
            taus,
            steps,
            n_slots: slots.len(),
        })
    }

    pub fn structure(&self) -> &VineStructure {
        &self.structure
    }

    pub fn dim(&self) -> usize {
        self.structure.dim
    }

    pub fn truncation(&self) -> usize {
        self.structure.truncation
    }

    pub fn trees(&self) -> &[Vec<VineEdge>] {
        &self.structure.trees
    }

    /// Model-implied Kendall's τ of the edge at `(level, index)`, `level` 1-based.
    pub fn tau(&self, level: usize, index: usize) -> f64 {
        self.taus[level - 1][index]
    }

    pub fn taus(&self) -> &[Vec<f64>] {
        &self.taus
    }

    /// Log of the vine copula density at `u`: the sum over trees 1..=K of the
    /// pair-copula log-densities at their conditional arguments.
    pub fn log_density(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(Error::Domain(format!(
                "point has {} coordinates, model has {}",
                u.len(),
                self.dim()
            )));
        }
        if let Some(bad) = u.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
            return Err(Error::Domain(format!("coordinate {bad} outside (0,1)")));
        }
        let mut scratch = Vec::new();
        Ok(self.log_density_with(u, &mut scratch))
    }

    /// As [`Self::log_density`] without input checks, reusing `scratch`.
    pub fn log_density_with(&self, u: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        scratch.resize(self.n_slots, 0.0);
        scratch[..u.len()].copy_from_slice(u);
        let mut total = 0.0;
        for s in &self.steps {
            let (x, y) = (scratch[s.a], scratch[s.b]);
            total += s.copula.log_pdf(x, y);
            if let Some([oa, ob]) = s.outputs {
                scratch[oa] = s.copula.h(x, y);
                scratch[ob] = s.copula.h_rev(x, y);
            }
        }
        total
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    #[serde(rename = "M")]
    dim: usize,
    #[serde(rename = "K")]
    truncation: usize,
    trees: Vec<Vec<EdgeFile>>,
}

#[derive(Serialize, Deserialize)]
struct EdgeFile {
    conditioned: [usize; 2],
    conditioning: Vec<usize>,
    copula: PairCopula,
}

impl Serialize for VineModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let file = ModelFile {
            dim: self.dim(),
            truncation: self.truncation(),
            trees: self
                .trees()
                .iter()
                .map(|t| {
                    t.iter()
                        .map(|e| EdgeFile {
                            conditioned: [e.conditioned[0] + 1, e.conditioned[1] + 1],
                            conditioning: e.conditioning.iter().map(|d| d + 1).collect(),
                            copula: e.copula,
                        })
                        .collect()
                })
                .collect(),
        };
        file.serialize(s)
    }
}

impl<'de> Deserialize<'de> for VineModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let file = ModelFile::deserialize(d)?;
        let zero = || D::Error::custom("variable indices in a model file start at 1");
        let mut trees = Vec::with_capacity(file.trees.len());
        for t in file.trees {
            let mut edges = Vec::with_capacity(t.len());
            for e in t {
                let [a, b] = e.conditioned;
                if a == 0 || b == 0 || e.conditioning.contains(&0) {
                    return Err(zero());
                }
                let mut conditioning: Vec<usize> = e.conditioning.iter().map(|x| x - 1).collect();
                conditioning.sort_unstable();
                edges.push(VineEdge {
                    level: trees.len() + 1,
                    conditioned: [a - 1, b - 1],
                    conditioning,
                    copula: e.copula,
                });
            }
            trees.push(edges);
        }
        VineModel::new(VineStructure {
            dim: file.dim,
            truncation: file.truncation,
            trees,
        })
        .map_err(D::Error::custom)
    }
}
