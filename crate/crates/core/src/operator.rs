//! Matrix-free application of the mean matrix.
//!
//! For a fixed parent tag and direction, the expected contribution of all
//! children to `x` is a sum over child patterns of a product of per-slot
//! factors, each depending on the parent bits of a few in-neighbors. The
//! sum is contracted one child slot at a time, from the last slot to the
//! first, over a tensor indexed by the not-yet-summed child prefix and the
//! parent bits the summed slots depended on. This evaluates one row block
//! for every parent pattern at once in about `n * 2^(n+2)` operations, where
//! the materialized matrix would need far more storage for long windows.

use rayon::prelude::*;

use crate::error::Result;
use crate::model::VariantTag;
use crate::poly::{Poly, PolyPool};
use crate::spectral::{check_params, LinearOperator};
use crate::space::StateSpace;
use crate::transition::{existence_factor, slot_factor};

#[derive(Debug, Clone)]
struct Step {
    /// Child slot summed out in this step.
    slot: usize,
    /// Parent-suffix widths before and after the step.
    w_in: usize,
    w_out: usize,
    /// For every parent suffix of width `w_out`, the index of its
    /// in-neighbor occupancy pattern into `ones` / `zeros`.
    subset_of: Vec<u16>,
    ones: Vec<u32>,
    zeros: Vec<u32>,
}

#[derive(Debug, Clone)]
struct Block {
    tag: VariantTag,
    child_tag: VariantTag,
    steps: Vec<Step>,
    /// Final parent-suffix width.
    width: usize,
}

/// Parameter-free description of the operator. Factor and existence
/// probabilities are ids into a shared polynomial pool.
#[derive(Debug, Clone)]
pub struct TransferPlan {
    dirs: usize,
    arity: usize,
    codes: Vec<u32>,
    tags: Vec<u8>,
    blocks: Vec<Block>,
    /// `existence[state * dirs + d]`
    existence: Vec<u32>,
    projections: Vec<Vec<u32>>,
    pool: PolyPool,
}

fn slot_mask(n: usize, slot: usize) -> usize {
    1 << (n - 1 - slot)
}

impl TransferPlan {
    pub fn new(space: &StateSpace) -> Result<Self> {
        let model = &space.model;
        let geometry = &space.geometry;
        let n = geometry.len();
        let dirs = geometry.num_directions();
        let mut pool = PolyPool::new();
        let mut blocks = Vec::new();
        for tag in model.tags() {
            for d in 0..dirs {
                let child = &geometry.children[d];
                let mut steps = Vec::with_capacity(n);
                let mut lo = n;
                for slot in (0..n).rev() {
                    let successor = child.slots[slot];
                    let (nbs, polys): (Vec<usize>, Vec<(Poly, Poly)>) = if slot == geometry.root {
                        (Vec::new(), vec![(Poly::one(), Poly::zero())])
                    } else {
                        let nbs = &geometry.in_neighbors[successor];
                        let mut polys = Vec::with_capacity(1 << nbs.len());
                        for mask in 0..1usize << nbs.len() {
                            let occ: Vec<_> =
                                nbs.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, nb)| *nb).collect();
                            polys.push(slot_factor(model, geometry, tag, successor, &occ)?);
                        }
                        (nbs.iter().map(|nb| nb.slot).collect(), polys)
                    };
                    let new_lo = nbs.iter().copied().fold(lo, usize::min);
                    let (w_in, w_out) = (n - lo, n - new_lo);
                    let subset_of = (0..1usize << w_out)
                        .map(|suffix| {
                            nbs.iter()
                                .enumerate()
                                .filter(|(_, &s)| suffix & slot_mask(n, s) != 0)
                                .fold(0u16, |acc, (b, _)| acc | 1 << b)
                        })
                        .collect();
                    let (ones, zeros) = polys.into_iter().map(|(o, z)| (pool.intern(o), pool.intern(z))).unzip();
                    steps.push(Step { slot, w_in, w_out, subset_of, ones, zeros });
                    lo = new_lo;
                }
                blocks.push(Block { tag, child_tag: model.child_tag(tag, d), steps, width: n - lo });
            }
        }
        let mut existence = Vec::with_capacity(space.len() * dirs);
        for &(bits, tag) in space.states() {
            for d in 0..dirs {
                existence.push(pool.intern(existence_factor(model, geometry, tag, bits, d)?));
            }
        }
        let projections = model.tags().map(|t| space.projection_table(t)).collect::<Result<_>>()?;
        Ok(TransferPlan {
            dirs,
            arity: model.arity(),
            codes: space.states().iter().map(|(b, _)| b.code).collect(),
            tags: space.states().iter().map(|(_, t)| t.0).collect(),
            blocks,
            existence,
            projections,
            pool,
        })
    }

    pub fn distinct_polys(&self) -> usize {
        self.pool.len()
    }

    pub fn evaluate(&self, params: &[f64]) -> Result<TransferOperator<'_>> {
        check_params(params, self.arity)?;
        let values = self.pool.eval_all(params);
        let existence = self.existence.iter().map(|&id| values[id as usize]).collect();
        Ok(TransferOperator { plan: self, values, existence })
    }
}

/// A transfer plan evaluated at fixed parameters.
pub struct TransferOperator<'a> {
    plan: &'a TransferPlan,
    values: Vec<f64>,
    existence: Vec<f64>,
}

impl TransferOperator<'_> {
    /// Contracts one block, returning the tensor over final parent suffixes.
    fn contract(&self, block: &Block, x: &[f64]) -> Vec<f64> {
        let plan = self.plan;
        let proj = &plan.projections[block.child_tag.0 as usize];
        let mut t: Vec<f64> =
            proj.par_iter().with_min_len(4096).map(|&o| if o == u32::MAX { 0.0 } else { x[o as usize] }).collect();
        for step in &block.steps {
            let ones: Vec<f64> = step.ones.iter().map(|&id| self.values[id as usize]).collect();
            let zeros: Vec<f64> = step.zeros.iter().map(|&id| self.values[id as usize]).collect();
            let prefixes = 1usize << step.slot;
            let (w_in, w_out) = (step.w_in, step.w_out);
            let in_mask = (1usize << w_in) - 1;
            let src = &t;
            let next: Vec<f64> = (0..prefixes << w_out)
                .into_par_iter()
                .with_min_len(4096)
                .map(|o| {
                    let prefix = o >> w_out;
                    let suffix = o & ((1 << w_out) - 1);
                    let s = step.subset_of[suffix] as usize;
                    let base = (prefix << 1) << w_in | (suffix & in_mask);
                    zeros[s] * src[base] + ones[s] * src[base | 1 << w_in]
                })
                .collect();
            t = next;
        }
        debug_assert_eq!(t.len(), 1 << block.width);
        t
    }
}

impl LinearOperator for TransferOperator<'_> {
    fn dim(&self) -> usize {
        self.plan.codes.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let plan = self.plan;
        let dirs = plan.dirs;
        y.iter_mut().for_each(|v| *v = 0.0);
        for (b, block) in plan.blocks.iter().enumerate() {
            let d = b % dirs;
            let t = self.contract(block, x);
            let mask = (1usize << block.width) - 1;
            y.par_iter_mut().with_min_len(1024).enumerate().for_each(|(i, yi)| {
                if plan.tags[i] == block.tag.0 {
                    *yi += self.existence[i * dirs + d] * t[plan.codes[i] as usize & mask];
                }
            });
        }
    }
}
