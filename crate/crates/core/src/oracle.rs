//! Independent checks: exact reachability of a level, the expected number
//! of alive particles, Monte Carlo survival and brute-force child laws.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{add, Coord, ModelSpec, Percolation, VariantTag};
use crate::poly::{Mono, Poly};
use crate::space::{StateBits, StateSpace};
use crate::spectral::{check_params, evaluate, LinearOperator};
use crate::transition::MeanMatrix;

/// Largest number of distinct partial configurations kept by the exact DP.
pub const EXACT_BUDGET: usize = 1 << 24;

/// Deepest level the exact DP accepts, by lattice dimension.
pub const EXACT_MAX_DEPTH_2D: usize = 14;
pub const EXACT_MAX_DEPTH_3D: usize = 8;

fn sub(a: Coord, b: Coord) -> Coord {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Probability that `w` is occupied given which of its in-neighbors are.
/// `occupied` holds the directions of the occupied in-neighbors.
fn occupation_prob(model: &ModelSpec, params: &[f64], w: Coord, occupied: &[usize]) -> f64 {
    if occupied.is_empty() {
        return 0.0;
    }
    match model.percolation {
        Percolation::Site => params[model.site_param_at(w)],
        Percolation::Bond => 1.0 - occupied.iter().map(|&d| 1.0 - params[model.edge_param(d)]).product::<f64>(),
    }
}

fn merge(mut entries: Vec<(u128, f64)>) -> Vec<(u128, f64)> {
    entries.sort_by_key(|e| e.0);
    let mut out: Vec<(u128, f64)> = Vec::with_capacity(entries.len());
    for (k, v) in entries {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += v,
            _ => out.push((k, v)),
        }
    }
    out
}

/// `P(O -> L_n)`: probability that some vertex at height `n` is reachable
/// from the origin, which is taken as occupied. Exact dynamic programming
/// over occupancy subsets, one new vertex at a time.
pub fn exact_reach_probability(model: &ModelSpec, n: usize, params: &[f64]) -> Result<f64> {
    check_params(params, model.arity())?;
    let lattice = model.lattice;
    let max_depth = if lattice.dimension() == 3 { EXACT_MAX_DEPTH_3D } else { EXACT_MAX_DEPTH_2D };
    if n > max_depth {
        return Err(Error::TooLarge(format!("depth {n} exceeds the exact limit {max_depth}")));
    }
    let dirs = lattice.directions();
    // distribution over occupancy subsets of the current level, as bitmasks
    let mut dist: Vec<(u128, f64)> = vec![(1, 1.0)];
    for m in 0..n {
        let old = lattice.level(m);
        let new = lattice.level(m + 1);
        if old.len() > 64 || new.len() > 64 {
            return Err(Error::TooLarge(format!("level {} has {} vertices", m + 1, new.len())));
        }
        let last = m + 1 == n;
        let old_pos: HashMap<Coord, usize> = old.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let nbrs: Vec<Vec<(usize, usize)>> = new
            .iter()
            .map(|w| {
                dirs.iter()
                    .enumerate()
                    .filter_map(|(d, dir)| old_pos.get(&sub(*w, dir.vector)).map(|&v| (v, d)))
                    .collect()
            })
            .collect();
        let mut last_use = vec![usize::MAX; old.len()];
        for (t, list) in nbrs.iter().enumerate() {
            for &(v, _) in list {
                last_use[v] = t;
            }
        }
        // keys: low 64 bits are live old vertices, high 64 bits the new
        // vertices decided so far (a single "any occupied" bit on the last level)
        for (t, w) in new.iter().enumerate() {
            let mut next = Vec::with_capacity(dist.len() * 2);
            let drop_mask: u64 = nbrs[t].iter().filter(|(v, _)| last_use[*v] == t).fold(0, |m, (v, _)| m | 1 << v);
            for &(key, prob) in &dist {
                let old_bits = key as u64;
                let occ: Vec<usize> = nbrs[t].iter().filter(|(v, _)| old_bits >> v & 1 == 1).map(|&(_, d)| d).collect();
                let q = occupation_prob(model, params, *w, &occ);
                let base = key & !(drop_mask as u128);
                let one = if last { base | 1u128 << 64 } else { base | 1u128 << (64 + t) };
                if q > 0.0 {
                    next.push((one, prob * q));
                }
                if q < 1.0 {
                    next.push((base, prob * (1.0 - q)));
                }
            }
            dist = merge(next);
            if dist.len() > EXACT_BUDGET {
                return Err(Error::TooLarge(format!("exact DP exceeded {EXACT_BUDGET} entries at depth {}", m + 1)));
            }
        }
        dist = merge(dist.into_iter().map(|(k, p)| (k >> 64, p)).collect());
        if dist.iter().all(|(k, _)| *k == 0) {
            return Ok(0.0);
        }
    }
    if n == 0 {
        return Ok(1.0);
    }
    Ok(dist.iter().filter(|(k, _)| *k != 0).map(|(_, p)| p).sum())
}

/// `e_root^T M^n 1`: expected number of particles of the Galton-Watson
/// process alive at generation `n`.
pub fn expected_alive_op(op: &dyn LinearOperator, root: usize, n: usize) -> f64 {
    let mut v = vec![1.0; op.dim()];
    let mut w = vec![0.0; op.dim()];
    for _ in 0..n {
        op.apply(&v, &mut w);
        std::mem::swap(&mut v, &mut w);
    }
    v[root]
}

pub fn expected_alive(matrix: &MeanMatrix, params: &[f64], n: usize) -> Result<f64> {
    let op = evaluate(matrix, params)?;
    Ok(expected_alive_op(&op, matrix.root, n))
}

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.5758293035489004;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub trials: u64,
    pub survived: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Grows the cluster of the origin level by level up to `depth` and
/// reports whether it reached that height.
fn survives(model: &ModelSpec, params: &[f64], depth: usize, rng: &mut ChaCha8Rng) -> bool {
    let dirs = model.lattice.directions();
    let mut frontier: Vec<Coord> = vec![[0, 0, 0]];
    let mut candidates: Vec<Coord> = Vec::new();
    for _ in 0..depth {
        candidates.clear();
        match model.percolation {
            Percolation::Bond => {
                for v in &frontier {
                    for (d, dir) in dirs.iter().enumerate() {
                        if rng.random::<f64>() < params[model.edge_param(d)] {
                            candidates.push(add(*v, dir.vector));
                        }
                    }
                }
                candidates.sort_unstable();
                candidates.dedup();
            }
            Percolation::Site => {
                for v in &frontier {
                    for dir in dirs {
                        candidates.push(add(*v, dir.vector));
                    }
                }
                candidates.sort_unstable();
                candidates.dedup();
                candidates.retain(|w| rng.random::<f64>() < params[model.site_param_at(*w)]);
            }
        }
        if candidates.is_empty() {
            return false;
        }
        std::mem::swap(&mut frontier, &mut candidates);
    }
    true
}

/// Fraction of clusters of the origin reaching height `depth`, with a 99%
/// Wilson interval. Trial `t` draws from stream `t` of a generator seeded
/// with `seed`, so the result does not depend on the number of threads.
pub fn mc_survival(model: &ModelSpec, params: &[f64], depth: usize, trials: u64, seed: u64) -> Result<McEstimate> {
    check_params(params, model.arity())?;
    if trials == 0 {
        return Err(Error::InvalidParams("at least one trial is required".into()));
    }
    let survived: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            u64::from(survives(model, params, depth, &mut rng))
        })
        .sum();
    let (lower, upper) = wilson_interval(survived, trials, Z99);
    Ok(McEstimate { trials, survived, estimate: survived as f64 / trials as f64, lower, upper })
}

/// Most random variables a brute-force enumeration may range over.
pub const BRUTE_FORCE_VARIABLES: usize = 22;

/// An absolute reference vertex whose residue matches `tag`.
fn reference_for(model: &ModelSpec, tag: VariantTag) -> Coord {
    (0..8).map(|x| [x, 0, 0]).find(|c| model.coordinate_residue(*c) == tag.0).unwrap_or([0, 0, 0])
}

/// A randomness variable of the brute-force enumeration: an edge from an
/// occupied window vertex, or a successor site.
#[derive(Debug, Clone, Copy)]
struct Variable {
    from: Option<Coord>,
    to: Coord,
    dir: usize,
    param: usize,
}

/// Local picture of one parent window: its occupied vertices, the
/// vertices one step above them and which variables feed each of those.
struct Neighborhood {
    percolation: Percolation,
    /// Successor coordinates, each with the variables that can infect it as
    /// `(variable, direction)`. For site models every entry shares the
    /// successor's own site variable.
    successors: Vec<(Coord, Vec<(usize, usize)>)>,
    /// `slot_successor[d][s]`: index of `window[s] + d` in `successors`.
    slot_successor: Vec<Vec<usize>>,
    root_edge: Vec<Option<usize>>,
}

impl Neighborhood {
    fn new(model: &ModelSpec, window: &[Coord], bits: StateBits, root: usize, vars: &[Variable]) -> Self {
        let dirs = model.lattice.directions();
        let occupied: Vec<Coord> = (0..window.len()).filter(|&s| bits.get(s)).map(|s| window[s]).collect();
        let mut coords: Vec<Coord> = window.iter().flat_map(|c| dirs.iter().map(move |d| add(*c, d.vector))).collect();
        coords.sort_unstable();
        coords.dedup();
        let successors: Vec<(Coord, Vec<(usize, usize)>)> = coords
            .iter()
            .map(|&w| {
                let mut feeds = Vec::new();
                match model.percolation {
                    Percolation::Bond => {
                        for (i, v) in vars.iter().enumerate() {
                            if v.to == w {
                                feeds.push((i, v.dir));
                            }
                        }
                    }
                    Percolation::Site => {
                        if let Some(i) = vars.iter().position(|v| v.to == w) {
                            for (d, dir) in dirs.iter().enumerate() {
                                if occupied.contains(&sub(w, dir.vector)) {
                                    feeds.push((i, d));
                                }
                            }
                        }
                    }
                }
                feeds.sort_by_key(|f| f.1);
                (w, feeds)
            })
            .collect();
        let find = |c: Coord| coords.binary_search(&c).expect("successor listed");
        let slot_successor =
            dirs.iter().map(|d| window.iter().map(|c| find(add(*c, d.vector))).collect()).collect();
        let root_edge = (0..dirs.len())
            .map(|d| vars.iter().position(|v| v.from == Some(window[root]) && v.dir == d))
            .collect();
        Neighborhood { percolation: model.percolation, successors, slot_successor, root_edge }
    }

    /// Raw child patterns produced by one configuration of the variables.
    fn children(&self, root: usize, open: &dyn Fn(usize) -> bool) -> Vec<(usize, StateBits)> {
        // highest-priority direction infecting each successor, if any
        let first: Vec<Option<usize>> =
            self.successors.iter().map(|(_, feeds)| feeds.iter().find(|(i, _)| open(*i)).map(|f| f.1)).collect();
        let n = self.slot_successor[0].len();
        let mut result = Vec::new();
        for (d, slots) in self.slot_successor.iter().enumerate() {
            let target = slots[root];
            let root_infects = match self.percolation {
                Percolation::Bond => self.root_edge[d].is_some_and(open),
                Percolation::Site => self.successors[target].1.iter().any(|&(i, dir)| dir == d && open(i)),
            };
            // good: the root's infection is the highest-priority one
            if !root_infects || first[target] != Some(d) {
                continue;
            }
            let mut child = StateBits::new(0, n);
            for (s, &w) in slots.iter().enumerate() {
                if first[w].is_some() {
                    child = child.with(s, true);
                }
            }
            result.push((d, child));
        }
        result
    }
}

/// Expected number of children of each state ordinal, as exact
/// polynomials, by enumerating every configuration of the relevant edges
/// (bond) or successor sites (site) and applying the good-infection rule
/// literally on lattice coordinates.
pub fn brute_force_children(space: &StateSpace, ordinal: usize) -> Result<BTreeMap<usize, Poly>> {
    let model = &space.model;
    let dirs = model.lattice.directions();
    let window = &space.geometry.slots;
    let root = space.geometry.root;
    let (bits, tag) = space.state(ordinal);
    let reference = reference_for(model, tag);
    let mut vars = Vec::new();
    match model.percolation {
        Percolation::Bond => {
            for (s, c) in window.iter().enumerate() {
                if bits.get(s) {
                    for (d, dir) in dirs.iter().enumerate() {
                        vars.push(Variable { from: Some(*c), to: add(*c, dir.vector), dir: d, param: model.edge_param(d) });
                    }
                }
            }
        }
        Percolation::Site => {
            let mut sites: Vec<Coord> = window.iter().flat_map(|c| dirs.iter().map(move |dir| add(*c, dir.vector))).collect();
            sites.sort_unstable();
            sites.dedup();
            for w in sites {
                let param = model.site_param_at(add(reference, w));
                vars.push(Variable { from: None, to: w, dir: 0, param });
            }
        }
    }
    if vars.len() > BRUTE_FORCE_VARIABLES {
        return Err(Error::TooLarge(format!("{} random variables", vars.len())));
    }
    let hood = Neighborhood::new(model, window, bits, root, &vars);
    let child_tags: Vec<VariantTag> =
        dirs.iter().map(|d| VariantTag(model.coordinate_residue(add(reference, d.vector)))).collect();
    let mut table: BTreeMap<usize, BTreeMap<Mono, u64>> = BTreeMap::new();
    for config in 0u64..1 << vars.len() {
        let open = |i: usize| config >> i & 1 == 1;
        let mut exps = [0u8; 4];
        for (i, v) in vars.iter().enumerate() {
            exps[2 * v.param + usize::from(!open(i))] += 1;
        }
        let weight = Mono::new(exps);
        for (d, child) in hood.children(root, &open) {
            let o = space.project(child, child_tags[d])?;
            *table.entry(o).or_default().entry(weight).or_default() += 1;
        }
    }
    table.into_iter().map(|(o, terms)| Ok((o, Poly::from_terms(terms)?))).collect()
}

pub fn brute_force_children_at(space: &StateSpace, ordinal: usize, params: &[f64]) -> Result<BTreeMap<usize, f64>> {
    check_params(params, space.model.arity())?;
    Ok(brute_force_children(space, ordinal)?.into_iter().map(|(o, p)| (o, p.eval(params))).collect())
}

/// Children produced by one explicit configuration: the listed open edges
/// `(window slot, direction)` for bond models, or open successor sites
/// given as offsets from the window reference vertex for site models.
pub fn children_with_open(
    space: &StateSpace,
    ordinal: usize,
    open_edges: &[(usize, usize)],
    open_sites: &[Coord],
) -> Vec<(usize, StateBits)> {
    let model = &space.model;
    let dirs = model.lattice.directions();
    let window = &space.geometry.slots;
    let root = space.geometry.root;
    let (bits, _) = space.state(ordinal);
    let vars: Vec<Variable> = match model.percolation {
        Percolation::Bond => open_edges
            .iter()
            .filter(|(s, _)| bits.get(*s))
            .map(|&(s, d)| Variable { from: Some(window[s]), to: add(window[s], dirs[d].vector), dir: d, param: 0 })
            .collect(),
        Percolation::Site => open_sites.iter().map(|&w| Variable { from: None, to: w, dir: 0, param: 0 }).collect(),
    };
    Neighborhood::new(model, window, bits, root, &vars).children(root, &|_| true)
}
