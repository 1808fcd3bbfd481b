//! Symbolic mean matrix of the multitype Galton-Watson process.
//!
//! For a fixed parent state and direction, the child exists when the root's
//! infection of its successor along that direction is good, and each other
//! child slot is occupied independently: every edge (or site) feeds exactly
//! one successor, so the existence event and the slot events depend on
//! disjoint randomness and the child law is a product measure.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{InNeighbor, ModelSpec, Percolation, VariantTag, WindowGeometry};
use crate::poly::{Poly, PolyPool};
use crate::space::{SpaceSpec, StateBits, StateSpace};

/// Occupancy law of one non-root child slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotLaw {
    pub child_slot: usize,
    pub successor: usize,
    pub one: Poly,
    pub zero: Poly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChildLaw {
    pub direction: usize,
    pub child_tag: VariantTag,
    /// Probability that the child exists.
    pub existence: Poly,
    pub slots: Vec<SlotLaw>,
}

/// Law of a successor's occupancy given which of its in-neighbors are
/// occupied: `(P(occupied), P(vacant))`.
pub fn slot_factor(
    model: &ModelSpec,
    geometry: &WindowGeometry,
    tag: VariantTag,
    successor: usize,
    occupied: &[InNeighbor],
) -> Result<(Poly, Poly)> {
    if occupied.is_empty() {
        return Ok((Poly::zero(), Poly::one()));
    }
    match model.percolation {
        Percolation::Site => {
            let param = model.param_index(tag, geometry.successors[successor]);
            Ok((Poly::var(param, true), Poly::var(param, false)))
        }
        Percolation::Bond => {
            // first open edge in priority order
            let mut one = Poly::zero();
            let mut closed = Poly::one();
            for nb in occupied {
                let param = model.edge_param(nb.direction);
                one.add_assign(&closed.mul(&Poly::var(param, true))?)?;
                closed = closed.mul(&Poly::var(param, false))?;
            }
            Ok((one, closed))
        }
    }
}

/// Probability that the root infects its successor along `dir` through a
/// good edge: the edge (or target site) is open and no occupied window slot
/// infects the same successor along a higher-priority direction.
pub fn existence_factor(
    model: &ModelSpec,
    geometry: &WindowGeometry,
    tag: VariantTag,
    bits: StateBits,
    dir: usize,
) -> Result<Poly> {
    let target = geometry.child_root(dir);
    let blockers = geometry.in_neighbors[target].iter().filter(|nb| nb.direction < dir && bits.get(nb.slot));
    match model.percolation {
        Percolation::Site => {
            if blockers.count() > 0 {
                Ok(Poly::zero())
            } else {
                Ok(Poly::var(model.param_index(tag, geometry.successors[target]), true))
            }
        }
        Percolation::Bond => {
            let mut poly = Poly::var(model.edge_param(dir), true);
            for nb in blockers {
                poly = poly.mul(&Poly::var(model.edge_param(nb.direction), false))?;
            }
            Ok(poly)
        }
    }
}

pub fn occupied_in_neighbors(geometry: &WindowGeometry, bits: StateBits, successor: usize) -> Vec<InNeighbor> {
    geometry.in_neighbors[successor].iter().copied().filter(|nb| bits.get(nb.slot)).collect()
}

pub fn child_law(space: &StateSpace, ordinal: usize, dir: usize) -> Result<ChildLaw> {
    let geometry = &space.geometry;
    if dir >= geometry.num_directions() {
        return Err(Error::InvalidDirection(dir));
    }
    let model = &space.model;
    let (bits, tag) = space.state(ordinal);
    let existence = existence_factor(model, geometry, tag, bits, dir)?;
    let mut slots = Vec::with_capacity(geometry.len() - 1);
    for (child_slot, &successor) in geometry.children[dir].slots.iter().enumerate() {
        if child_slot == geometry.root {
            continue;
        }
        let occ = occupied_in_neighbors(geometry, bits, successor);
        let (one, zero) = slot_factor(model, geometry, tag, successor, &occ)?;
        slots.push(SlotLaw { child_slot, successor, one, zero });
    }
    Ok(ChildLaw { direction: dir, child_tag: model.child_tag(tag, dir), existence, slots })
}

/// Expands a child law over all child slot patterns with nonzero
/// probability, calling `emit(raw_child_code, probability)`.
pub fn expand_law(law: &ChildLaw, n: usize, root: usize, emit: &mut dyn FnMut(u32, &Poly) -> Result<()>) -> Result<()> {
    fn rec(
        slots: &[SlotLaw],
        n: usize,
        code: u32,
        prefix: &Poly,
        emit: &mut dyn FnMut(u32, &Poly) -> Result<()>,
    ) -> Result<()> {
        let Some((first, rest)) = slots.split_first() else {
            return emit(code, prefix);
        };
        let bit = 1u32 << (n - 1 - first.child_slot);
        if !first.one.is_zero() {
            rec(rest, n, code | bit, &prefix.mul(&first.one)?, emit)?;
        }
        if !first.zero.is_zero() {
            rec(rest, n, code, &prefix.mul(&first.zero)?, emit)?;
        }
        Ok(())
    }
    if law.existence.is_zero() {
        return Ok(());
    }
    rec(&law.slots, n, 1u32 << (n - 1 - root), &law.existence, emit)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BuildStats {
    pub nonzeros: u64,
    pub distinct_polys: usize,
    pub build_seconds: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    /// Abort once the stored entry count would exceed this.
    pub max_nonzeros: Option<u64>,
}

/// Row-sparse mean matrix whose entries are ids into a polynomial pool.
#[derive(Debug, Clone)]
pub struct MeanMatrix {
    pub model: ModelSpec,
    pub spec: SpaceSpec,
    pub root: usize,
    pub row_ptr: Vec<u64>,
    pub cols: Vec<u32>,
    pub poly_ids: Vec<u32>,
    pub pool: PolyPool,
    pub stats: BuildStats,
}

impl MeanMatrix {
    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, &Poly)> + '_ {
        let (a, b) = (self.row_ptr[i] as usize, self.row_ptr[i + 1] as usize);
        self.cols[a..b].iter().zip(&self.poly_ids[a..b]).map(|(&c, &id)| (c as usize, self.pool.get(id)))
    }

    /// Numeric entry values at `params`, parallel to `cols`.
    pub fn values_at(&self, params: &[f64]) -> Vec<f64> {
        let pool_values = self.pool.eval_all(params);
        self.poly_ids.par_iter().map(|&id| pool_values[id as usize]).collect()
    }
}

/// Symbolic row of one state: sorted `(column, polynomial)` pairs.
pub fn build_row(space: &StateSpace, projections: &[Vec<u32>], ordinal: usize) -> Result<Vec<(u32, Poly)>> {
    let geometry = &space.geometry;
    let n = geometry.len();
    let mut acc: BTreeMap<u32, Poly> = BTreeMap::new();
    for dir in 0..geometry.num_directions() {
        let law = child_law(space, ordinal, dir)?;
        let table = &projections[law.child_tag.0 as usize];
        expand_law(&law, n, geometry.root, &mut |code, poly| {
            let col = table[code as usize];
            if col == u32::MAX {
                return Err(Error::NotRepresentable(space.render(StateBits::new(code, n), law.child_tag)));
            }
            acc.entry(col).or_default().add_assign(poly)
        })?;
    }
    Ok(acc.into_iter().collect())
}

const CHUNK_ROWS: usize = 256;

pub fn build_matrix(space: &StateSpace, options: &BuildOptions) -> Result<MeanMatrix> {
    let start = Instant::now();
    let projections: Vec<Vec<u32>> =
        space.model.tags().map(|t| space.projection_table(t)).collect::<Result<_>>()?;
    let dim = space.len();
    let mut row_ptr = Vec::with_capacity(dim + 1);
    row_ptr.push(0u64);
    let mut cols = Vec::new();
    let mut poly_ids = Vec::new();
    let mut pool = PolyPool::new();
    for chunk_start in (0..dim).step_by(CHUNK_ROWS) {
        let chunk_end = (chunk_start + CHUNK_ROWS).min(dim);
        let rows: Vec<Vec<(u32, Poly)>> = (chunk_start..chunk_end)
            .into_par_iter()
            .map(|i| build_row(space, &projections, i))
            .collect::<Result<_>>()?;
        for (offset, row) in rows.into_iter().enumerate() {
            if let Some(budget) = options.max_nonzeros {
                if (cols.len() + row.len()) as u64 > budget {
                    return Err(Error::MemoryBudget { row: chunk_start + offset, budget });
                }
            }
            for (col, poly) in row {
                cols.push(col);
                poly_ids.push(pool.intern(poly));
            }
            row_ptr.push(cols.len() as u64);
        }
    }
    let stats = BuildStats {
        nonzeros: cols.len() as u64,
        distinct_polys: pool.len(),
        build_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(MeanMatrix { model: space.model, spec: space.spec, root: space.root_state(), row_ptr, cols, poly_ids, pool, stats })
}

/// Human-readable listing of one row.
pub fn render_row(space: &StateSpace, matrix: &MeanMatrix, ordinal: usize, params: Option<&[f64]>) -> Vec<String> {
    matrix
        .row(ordinal)
        .map(|(col, poly)| match params {
            Some(p) => format!("{} -> {} : {:.12e}", space.render_ordinal(ordinal), space.render_ordinal(col), poly.eval(p)),
            None => format!("{} -> {} : {}", space.render_ordinal(ordinal), space.render_ordinal(col), poly),
        })
        .collect()
}

/// Textual dump of the whole matrix, one entry per line.
pub fn dump_text(space: &StateSpace, matrix: &MeanMatrix) -> String {
    let mut out = format!("# {} {} states={} nonzeros={}\n", matrix.model, matrix.spec, matrix.dim(), matrix.nnz());
    for i in 0..matrix.dim() {
        for line in render_row(space, matrix, i, None) {
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}
