//! Greedy partition of the coordinates into blocks of strongly dependent
//! variables, driven by the first two trees of a fitted vine.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::vine_model::VineModel;

/// Blocks of coordinates, each listed in insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "GroupingRepr", try_from = "GroupingRepr")]
pub struct Grouping {
    pub blocks: Vec<Vec<usize>>,
    pub target_size: usize,
    /// Whether any coordinate was placed by the final fill step.
    pub leftovers_assigned: bool,
}

/// On-disk form with 1-based coordinates.
#[derive(Serialize, Deserialize)]
struct GroupingRepr {
    blocks: Vec<Vec<usize>>,
    target_size: usize,
    #[serde(default)]
    leftovers_assigned: bool,
}

impl From<Grouping> for GroupingRepr {
    fn from(g: Grouping) -> Self {
        Self {
            blocks: g.blocks.iter().map(|b| b.iter().map(|x| x + 1).collect()).collect(),
            target_size: g.target_size,
            leftovers_assigned: g.leftovers_assigned,
        }
    }
}

impl TryFrom<GroupingRepr> for Grouping {
    type Error = String;

    fn try_from(r: GroupingRepr) -> std::result::Result<Self, String> {
        let blocks = r
            .blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|&x| x.checked_sub(1).ok_or_else(|| "coordinates are 1-based".to_string()))
                    .collect()
            })
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self {
            blocks,
            target_size: r.target_size,
            leftovers_assigned: r.leftovers_assigned,
        })
    }
}

impl Grouping {
    /// Number of coordinates covered.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks that the blocks partition {0, …, dim − 1} with no empty block.
    pub fn check_partition(&self, dim: usize) -> Result<()> {
        let mut seen = vec![false; dim];
        for b in &self.blocks {
            if b.is_empty() {
                return Err(Error::Config("grouping has an empty block".into()));
            }
            for &x in b {
                if x >= dim || std::mem::replace(&mut seen[x], true) {
                    return Err(Error::Config(format!("coordinate {} is out of range or repeated", x + 1)));
                }
            }
        }
        if let Some(x) = seen.iter().position(|s| !s) {
            return Err(Error::Config(format!("coordinate {} is in no block", x + 1)));
        }
        Ok(())
    }

    /// One line per block, 1-based: `block 1: 1 4 7`.
    pub fn report(&self) -> String {
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let items: Vec<String> = b.iter().map(|x| (x + 1).to_string()).collect();
                format!("block {}: {}\n", i + 1, items.join(" "))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Model-implied |τ| of the first two trees, indexed for neighbor lookups.
struct TauIndex {
    /// Tree-1 neighbours of each variable with the edge |τ|.
    adjacent: Vec<Vec<(usize, f64)>>,
    /// |τ| of tree-2 edges keyed by (sorted conditioned pair, conditioning variable).
    conditional: HashMap<([usize; 2], usize), f64>,
}

impl TauIndex {
    fn new(model: &VineModel) -> Self {
        let mut adjacent = vec![Vec::new(); model.dim()];
        let mut conditional = HashMap::new();
        for (i, e) in model.trees()[0].iter().enumerate() {
            let [a, b] = e.conditioned;
            let t = model.tau(1, i).abs();
            adjacent[a].push((b, t));
            adjacent[b].push((a, t));
        }
        if let Some(tree) = model.trees().get(1) {
            for (i, e) in tree.iter().enumerate() {
                let [a, b] = e.conditioned;
                conditional.insert(([a.min(b), a.max(b)], e.conditioning[0]), model.tau(2, i).abs());
            }
        }
        for list in &mut adjacent {
            list.sort_by_key(|&(x, _)| x);
        }
        Self { adjacent, conditional }
    }

    fn score(&self, n: usize, in_group: &[bool]) -> Result<f64> {
        let mut anchors = self.adjacent[n].iter().filter(|&&(x, _)| in_group[x]);
        let (g, t) = match (anchors.next(), anchors.next()) {
            (Some(&first), None) => first,
            _ => {
                return Err(Error::Domain(format!(
                    "variable {} must share a first-tree edge with exactly one group member",
                    n + 1
                )))
            }
        };
        let conditional: f64 = self.adjacent[g]
            .iter()
            .filter(|&&(i, _)| in_group[i])
            .filter_map(|&(i, _)| self.conditional.get(&([n.min(i), n.max(i)], g)))
            .sum();
        Ok(t + conditional)
    }
}

/// Strength of dependence between candidate `n` and `group`: |τ| to its
/// unique first-tree anchor g plus |τ(n, i | g)| over tree-2 edges to the
/// anchor's group neighbours i.
pub fn neighbor_score(model: &VineModel, n: usize, group: &[usize]) -> Result<f64> {
    let mut in_group = vec![false; model.dim()];
    for &g in group {
        in_group[g] = true;
    }
    TauIndex::new(model).score(n, &in_group)
}

/// How coordinates left over by the greedy phase are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fill {
    /// Seeded random assignment.
    #[default]
    Random,
    /// Ascending coordinates go to the first block with room.
    Deterministic,
}

/// Greedy grouping of the model's coordinates into `n_blocks` blocks.
pub fn greedy_grouping(model: &VineModel, n_blocks: usize, target_size: usize, rng: RngStream, fill: Fill) -> Result<Grouping> {
    let dim = model.dim();
    if n_blocks == 0 || n_blocks > dim {
        return Err(Error::Config(format!("number of blocks {n_blocks} outside [1, {dim}]")));
    }
    if target_size == 0 || target_size > dim {
        return Err(Error::Config(format!("target block size {target_size} outside [1, {dim}]")));
    }
    let index = TauIndex::new(model);
    let mut assigned = vec![false; dim];
    let mut blocks: Vec<Vec<usize>> = Vec::with_capacity(n_blocks);

    for _ in 0..n_blocks {
        let mut block = Vec::new();
        if target_size >= 2 {
            if let Some([a, b]) = strongest_free_edge(model, &assigned) {
                let mut in_group = vec![false; dim];
                for x in [a, b] {
                    in_group[x] = true;
                    assigned[x] = true;
                    block.push(x);
                }
                while block.len() < target_size {
                    let mut best: Option<(usize, f64)> = None;
                    for n in 0..dim {
                        if assigned[n] || !index.adjacent[n].iter().any(|&(x, _)| in_group[x]) {
                            continue;
                        }
                        let s = index.score(n, &in_group)?;
                        if best.is_none_or(|(_, b)| s > b) {
                            best = Some((n, s));
                        }
                    }
                    let Some((n, _)) = best else { break };
                    in_group[n] = true;
                    assigned[n] = true;
                    block.push(n);
                }
            }
        }
        blocks.push(block);
    }

    let mut leftovers: Vec<usize> = (0..dim).filter(|&x| !assigned[x]).collect();
    let leftovers_assigned = !leftovers.is_empty();
    let cap = target_size.max(dim.div_ceil(n_blocks));
    let mut gen = rng.generator();
    if fill == Fill::Random {
        leftovers.shuffle(&mut gen);
    }
    for x in leftovers {
        let room = |limit: usize| -> Vec<usize> { (0..n_blocks).filter(|&b| blocks[b].len() < limit).collect() };
        let mut open = room(target_size);
        if open.is_empty() {
            open = room(cap);
        }
        let b = match fill {
            Fill::Random => open[gen.random_range(0..open.len())],
            Fill::Deterministic => open[0],
        };
        blocks[b].push(x);
    }
    // only reachable when an overridden target size lets early blocks absorb everything
    blocks.retain(|b| !b.is_empty());
    let grouping = Grouping {
        blocks,
        target_size,
        leftovers_assigned,
    };
    grouping.check_partition(dim)?;
    Ok(grouping)
}

/// First-tree edge with both ends unassigned and maximal |τ|; ties go to the
/// lexicographically smallest pair.
fn strongest_free_edge(model: &VineModel, assigned: &[bool]) -> Option<[usize; 2]> {
    let mut best: Option<([usize; 2], f64)> = None;
    for (i, e) in model.trees()[0].iter().enumerate() {
        let [a, b] = e.conditioned;
        if assigned[a] || assigned[b] {
            continue;
        }
        let pair = [a.min(b), a.max(b)];
        let t = model.tau(1, i).abs();
        let better = match best {
            None => true,
            Some((p, bt)) => t > bt || (t == bt && pair < p),
        };
        if better {
            best = Some((pair, t));
        }
    }
    best.map(|(p, _)| p)
}
