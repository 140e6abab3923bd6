//! Storage plan for conditional distribution values F(x | S).
//!
//! Every value needed while evaluating a vine is identified by the variable
//! `x` and the sorted conditioning set `S`. Slots `0..dim` hold the uniform
//! margins F(x | ∅) = u_x. Independence edges do not change a conditional
//! distribution, so their outputs alias their inputs instead of taking a new
//! slot.

use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub(crate) struct SlotMap {
    slots: HashMap<(usize, Vec<usize>), usize>,
    len: usize,
}

impl SlotMap {
    pub(crate) fn new(dim: usize) -> Self {
        let slots = (0..dim).map(|x| ((x, Vec::new()), x)).collect();
        Self { slots, len: dim }
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    pub(crate) fn get(&self, var: usize, cond: &[usize]) -> Result<usize> {
        self.slots.get(&(var, cond.to_vec())).copied().ok_or_else(|| {
            Error::Structure(format!(
                "conditional value of variable {} given {:?} is not available",
                var + 1,
                cond.iter().map(|c| c + 1).collect::<Vec<_>>()
            ))
        })
    }

    /// Registers F(var | cond), either as an alias of `alias` or as a new slot.
    pub(crate) fn insert(&mut self, var: usize, cond: Vec<usize>, alias: Option<usize>) -> usize {
        let slot = alias.unwrap_or_else(|| {
            self.len += 1;
            self.len - 1
        });
        self.slots.insert((var, cond), slot);
        slot
    }
}

/// `set ∪ {x}`, kept sorted.
pub(crate) fn with(set: &[usize], x: usize) -> Vec<usize> {
    let mut out = set.to_vec();
    let pos = out.partition_point(|&y| y < x);
    out.insert(pos, x);
    out
}
