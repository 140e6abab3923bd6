//! Inverse-Rosenblatt sampling from a (truncated) regular-vine copula.
//!
//! Variables are sampled in the reverse of an elimination order: repeatedly
//! remove a conditioned variable of the single top-level edge together with
//! the one edge per tree that has it in its conditioned set. When a variable
//! is sampled, the edges removed with it link it to the variables sampled
//! before, and a fresh uniform is pushed through their inverse h-functions.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::write_matrix_csv;
use crate::matrix::Matrix;
use crate::numerics::{uniform01, RngStream};
use crate::pair_copulas::PairCopula;
use crate::vine_model::slots::{with, SlotMap};
use crate::vine_model::VineModel;

/// Rows generated per random stream; batch `b` uses `rng.child(b)`.
pub const BATCH_SIZE: usize = 4096;

#[derive(Debug, Clone)]
enum Op {
    /// slot ← fresh uniform
    Draw { out: usize },
    /// Solve for F(x | D) given F(x | D ∪ c) in `w` and F(c | D) in `partner`.
    Invert {
        copula: PairCopula,
        x_first: bool,
        w: usize,
        partner: usize,
        out: usize,
    },
    /// F(c | D ∪ x) from F(x | D) and F(c | D).
    Forward {
        copula: PairCopula,
        x_first: bool,
        x: usize,
        partner: usize,
        out: usize,
    },
}

/// Precomputed sampling program for one model.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    dim: usize,
    n_slots: usize,
    ops: Vec<Op>,
    /// Variables in the order they are sampled.
    order: Vec<usize>,
}

/// One edge removed together with an eliminated variable.
struct Link {
    edge_level: usize,
    edge_index: usize,
    partner: usize,
    conditioning: Vec<usize>,
}

impl SamplingPlan {
    pub fn new(model: &VineModel) -> Result<Self> {
        let dim = model.dim();
        let trees = model.trees();
        let mut alive: Vec<Vec<bool>> = trees.iter().map(|t| vec![true; t.len()]).collect();
        let mut remaining: Vec<bool> = vec![true; dim];
        let mut eliminated: Vec<(usize, Vec<Link>)> = Vec::with_capacity(dim);

        for m in (2..=dim).rev() {
            let top = m - 1;
            let top_idx = alive[top - 1]
                .iter()
                .position(|&a| a)
                .ok_or_else(|| Error::Structure(format!("tree {top} has no remaining edge")))?;
            let x = trees[top - 1][top_idx].conditioned[1];
            let mut links = Vec::with_capacity(top);
            for level in 1..=top {
                let mut found = None;
                for (i, e) in trees[level - 1].iter().enumerate() {
                    if !alive[level - 1][i] {
                        continue;
                    }
                    if e.conditioning.contains(&x) {
                        return Err(Error::Structure(format!(
                            "variable {} cannot be eliminated: it conditions edge {e}",
                            x + 1
                        )));
                    }
                    if e.conditioned.contains(&x) {
                        if found.is_some() {
                            return Err(Error::Structure(format!(
                                "variable {} is conditioned in two edges of tree {level}",
                                x + 1
                            )));
                        }
                        found = Some(i);
                    }
                }
                let i = found.ok_or_else(|| {
                    Error::Structure(format!("variable {} has no edge in tree {level}", x + 1))
                })?;
                alive[level - 1][i] = false;
                let e = &trees[level - 1][i];
                let partner = if e.conditioned[0] == x { e.conditioned[1] } else { e.conditioned[0] };
                links.push(Link {
                    edge_level: level,
                    edge_index: i,
                    partner,
                    conditioning: e.conditioning.clone(),
                });
            }
            remaining[x] = false;
            eliminated.push((x, links));
        }
        let first = remaining.iter().position(|&r| r).expect("one variable remains");

        let mut slots = SlotMap::new(dim);
        let mut ops = vec![Op::Draw { out: first }];
        let mut order = vec![first];
        for (x, links) in eliminated.into_iter().rev() {
            // x_slots[i] holds F(x | D_i ∪ c_i) for link i; x_slots[0..] built bottom-up.
            let mut below = x;
            let mut x_out = Vec::with_capacity(links.len());
            for l in &links {
                let copula = trees[l.edge_level - 1][l.edge_index].copula;
                let alias = copula.is_independence().then_some(below);
                let s = slots.insert(x, with(&l.conditioning, l.partner), alias);
                x_out.push(s);
                below = s;
            }
            ops.push(Op::Draw { out: below });
            let mut partners = Vec::with_capacity(links.len());
            for l in &links {
                partners.push(slots.get(l.partner, &l.conditioning)?);
            }
            for (i, l) in links.iter().enumerate().rev() {
                let e = &trees[l.edge_level - 1][l.edge_index];
                if e.copula.is_independence() {
                    continue;
                }
                let x_in = if i == 0 { x } else { x_out[i - 1] };
                ops.push(Op::Invert {
                    copula: e.copula,
                    x_first: e.conditioned[0] == x,
                    w: x_out[i],
                    partner: partners[i],
                    out: x_in,
                });
            }
            for (i, l) in links.iter().enumerate() {
                let e = &trees[l.edge_level - 1][l.edge_index];
                let x_in = if i == 0 { x } else { x_out[i - 1] };
                if e.copula.is_independence() {
                    slots.insert(l.partner, with(&l.conditioning, x), Some(partners[i]));
                    continue;
                }
                let out = slots.insert(l.partner, with(&l.conditioning, x), None);
                ops.push(Op::Forward {
                    copula: e.copula,
                    x_first: e.conditioned[0] == x,
                    x: x_in,
                    partner: partners[i],
                    out,
                });
            }
            order.push(x);
        }
        Ok(Self {
            dim,
            n_slots: slots.len(),
            ops,
            order,
        })
    }

    /// Variables in sampling order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    fn draw_row<R: rand::Rng>(&self, rng: &mut R, scratch: &mut [f64], row: &mut [f64]) -> Result<()> {
        for op in &self.ops {
            match *op {
                Op::Draw { out } => scratch[out] = uniform01(rng),
                Op::Invert {
                    copula,
                    x_first,
                    w,
                    partner,
                    out,
                } => {
                    scratch[out] = if x_first {
                        copula.h_inv(scratch[w], scratch[partner])?
                    } else {
                        copula.h_rev_inv(scratch[partner], scratch[w])?
                    };
                }
                Op::Forward {
                    copula,
                    x_first,
                    x,
                    partner,
                    out,
                } => {
                    scratch[out] = if x_first {
                        copula.h_rev(scratch[x], scratch[partner])
                    } else {
                        copula.h(scratch[partner], scratch[x])
                    };
                }
            }
        }
        row.copy_from_slice(&scratch[..self.dim]);
        Ok(())
    }

    /// `n` rows from the vine copula; reproducible for a given `rng`.
    pub fn sample(&self, n: usize, rng: RngStream) -> Result<Matrix> {
        let mut data = vec![0.0; n * self.dim];
        data.par_chunks_mut(BATCH_SIZE * self.dim.max(1))
            .enumerate()
            .try_for_each(|(b, chunk)| {
                let mut gen = rng.child(b as u64).generator();
                let mut scratch = vec![0.0; self.n_slots];
                for row in chunk.chunks_exact_mut(self.dim) {
                    self.draw_row(&mut gen, &mut scratch, row)?;
                }
                Ok::<_, Error>(())
            })?;
        Matrix::new(n, self.dim, data)
    }
}

/// `n` i.i.d. rows from the vine copula of `model`.
pub fn sample(model: &VineModel, n: usize, rng: RngStream) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    SamplingPlan::new(model)?.sample(n, rng)
}

/// A univariate quantile function.
pub trait Quantile: Sync {
    fn quantile(&self, p: f64) -> f64;
}

impl<F: Fn(f64) -> f64 + Sync> Quantile for F {
    fn quantile(&self, p: f64) -> f64 {
        self(p)
    }
}

/// As [`sample`], with column j transformed by `marginals[j]`.
pub fn sample_with_marginals<Q: Quantile>(model: &VineModel, marginals: &[Q], n: usize, rng: RngStream) -> Result<Matrix> {
    if marginals.len() != model.dim() {
        return Err(Error::Config(format!(
            "{} marginals supplied for a {}-dimensional model",
            marginals.len(),
            model.dim()
        )));
    }
    let u = sample(model, n, rng)?;
    let cols = u.cols();
    let mut data = u.into_vec();
    data.par_chunks_mut(cols).for_each(|row| {
        for (x, q) in row.iter_mut().zip(marginals) {
            *x = q.quantile(*x);
        }
    });
    Matrix::new(n, cols, data)
}

/// Writes a sample as CSV with header `u1, …, uM`.
pub fn write_sample_csv(path: &Path, sample: &Matrix) -> Result<()> {
    let header: Vec<String> = (1..=sample.cols()).map(|j| format!("u{j}")).collect();
    write_matrix_csv(path, sample, Some(&header))
}
