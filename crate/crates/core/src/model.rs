//! Percolation model catalog: lattices, site/bond variants, parameter
//! assignment for the inhomogeneous models and the window geometry used by
//! the transition builder.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lattice coordinate; two-dimensional lattices keep `z = 0`.
pub type Coord = [i32; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lattice {
    /// Z^2 with edges to (x+1, y) and (x, y+1).
    Vl2,
    /// Z^2 with edges to (x-1, y+1), (x, y+1), (x+1, y+1).
    Alt2,
    /// Z^3 with edges along e1, e2, e3.
    Vl3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Percolation {
    Site,
    Bond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Inhomogeneity {
    None,
    ModelI,
    ModelII,
    ModelIII,
    ModelIV,
    ModelV,
}

/// An oriented edge direction. Directions of a lattice are listed in
/// decreasing priority: when several occupied vertices infect the same
/// successor, only the infection along the earliest direction is good.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Direction {
    pub name: &'static str,
    pub vector: Coord,
}

const VL2_DIRS: [Direction; 2] = [
    Direction { name: "up", vector: [0, 1, 0] },
    Direction { name: "right", vector: [1, 0, 0] },
];

const ALT2_DIRS: [Direction; 3] = [
    Direction { name: "left-diag", vector: [-1, 1, 0] },
    Direction { name: "vertical", vector: [0, 1, 0] },
    Direction { name: "right-diag", vector: [1, 1, 0] },
];

const VL3_DIRS: [Direction; 3] = [
    Direction { name: "e3", vector: [0, 0, 1] },
    Direction { name: "e2", vector: [0, 1, 0] },
    Direction { name: "e1", vector: [1, 0, 0] },
];

impl Lattice {
    /// Directions in decreasing priority order.
    pub fn directions(self) -> &'static [Direction] {
        match self {
            Lattice::Vl2 => &VL2_DIRS,
            Lattice::Alt2 => &ALT2_DIRS,
            Lattice::Vl3 => &VL3_DIRS,
        }
    }

    pub fn dimension(self) -> usize {
        match self {
            Lattice::Vl2 | Lattice::Alt2 => 2,
            Lattice::Vl3 => 3,
        }
    }

    pub fn direction_index(self, name: &str) -> Option<usize> {
        self.directions().iter().position(|d| d.name == name)
    }

    /// Vertices reachable from the origin in exactly `n` steps, in a fixed
    /// order.
    pub fn level(self, n: usize) -> Vec<Coord> {
        let n = n as i32;
        match self {
            Lattice::Vl2 => (0..=n).map(|x| [x, n - x, 0]).collect(),
            Lattice::Alt2 => (-n..=n).map(|x| [x, n, 0]).collect(),
            Lattice::Vl3 => {
                let mut out = Vec::new();
                for z in (0..=n).rev() {
                    for y in 0..=(n - z) {
                        out.push([n - z - y, y, z]);
                    }
                }
                out
            }
        }
    }
}

/// Index of a model parameter: 0 for `p` (or `p1`), 1 for `p2`.
pub type ParamIndex = usize;

/// Residue class of the reference vertex of a window, for the models whose
/// parameters depend on coordinates. Homogeneous models use the single tag 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct VariantTag(pub u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    pub lattice: Lattice,
    pub percolation: Percolation,
    pub inhomogeneity: Inhomogeneity,
}

pub const MODEL_IDS: [&str; 11] = [
    "site-vl2", "bond-vl2", "site-alt2", "bond-alt2", "site-vl3", "bond-vl3", "inhom-1", "inhom-2",
    "inhom-3", "inhom-4", "inhom-5",
];

impl ModelSpec {
    pub fn new(lattice: Lattice, percolation: Percolation, inhomogeneity: Inhomogeneity) -> Result<Self> {
        use Inhomogeneity::*;
        let ok = match inhomogeneity {
            None => true,
            ModelI | ModelII | ModelIII | ModelIV => {
                lattice == Lattice::Vl2 && percolation == Percolation::Site
            }
            ModelV => lattice == Lattice::Vl2 && percolation == Percolation::Bond,
        };
        if !ok {
            return Err(Error::InvalidModel(format!(
                "{inhomogeneity:?} is not defined for {percolation:?} percolation on {lattice:?}"
            )));
        }
        Ok(ModelSpec { lattice, percolation, inhomogeneity })
    }

    pub fn homogeneous(lattice: Lattice, percolation: Percolation) -> Self {
        ModelSpec { lattice, percolation, inhomogeneity: Inhomogeneity::None }
    }

    pub fn id(&self) -> &'static str {
        use Inhomogeneity as I;
        use Lattice as L;
        use Percolation as P;
        match (self.inhomogeneity, self.lattice, self.percolation) {
            (I::ModelI, ..) => "inhom-1",
            (I::ModelII, ..) => "inhom-2",
            (I::ModelIII, ..) => "inhom-3",
            (I::ModelIV, ..) => "inhom-4",
            (I::ModelV, ..) => "inhom-5",
            (I::None, L::Vl2, P::Site) => "site-vl2",
            (I::None, L::Vl2, P::Bond) => "bond-vl2",
            (I::None, L::Alt2, P::Site) => "site-alt2",
            (I::None, L::Alt2, P::Bond) => "bond-alt2",
            (I::None, L::Vl3, P::Site) => "site-vl3",
            (I::None, L::Vl3, P::Bond) => "bond-vl3",
        }
    }

    /// Number of model parameters (1 or 2).
    pub fn arity(&self) -> usize {
        if self.inhomogeneity == Inhomogeneity::None {
            1
        } else {
            2
        }
    }

    /// Number of distinct variant tags.
    pub fn tag_period(&self) -> u8 {
        match self.inhomogeneity {
            Inhomogeneity::ModelI | Inhomogeneity::ModelII => 2,
            Inhomogeneity::ModelIII | Inhomogeneity::ModelIV => 4,
            _ => 1,
        }
    }

    pub fn tags(&self) -> impl Iterator<Item = VariantTag> {
        (0..self.tag_period()).map(VariantTag)
    }

    /// Linear coordinate functional whose residue decides a site's
    /// parameter. Only meaningful for Models I-IV.
    pub fn coordinate_residue(&self, c: Coord) -> u8 {
        let (x, y) = (c[0], c[1]);
        let (value, period) = match self.inhomogeneity {
            Inhomogeneity::ModelI => (x, 2),
            Inhomogeneity::ModelII => (x + y, 2),
            Inhomogeneity::ModelIII => (x - y, 4),
            Inhomogeneity::ModelIV => (x, 4),
            _ => return 0,
        };
        value.rem_euclid(period) as u8
    }

    fn residue_param(&self, residue: u8) -> ParamIndex {
        match self.inhomogeneity {
            Inhomogeneity::ModelI | Inhomogeneity::ModelII => usize::from(residue != 0),
            Inhomogeneity::ModelIII | Inhomogeneity::ModelIV => usize::from(residue > 1),
            _ => 0,
        }
    }

    /// Parameter of a site at absolute lattice coordinate `c`.
    pub fn site_param_at(&self, c: Coord) -> ParamIndex {
        self.residue_param(self.coordinate_residue(c))
    }

    /// Parameter of the site at `offset` from a window reference vertex
    /// carrying `tag`.
    pub fn param_index(&self, tag: VariantTag, offset: Coord) -> ParamIndex {
        let period = self.tag_period();
        if period == 1 {
            return 0;
        }
        let r = (tag.0 + self.coordinate_residue(offset)) % period;
        self.residue_param(r)
    }

    /// Parameter of an edge along direction `dir` (index into the lattice
    /// direction list). Only Model V distinguishes edges: horizontal edges
    /// use `p1`, vertical ones `p2`.
    pub fn edge_param(&self, dir: usize) -> ParamIndex {
        if self.inhomogeneity == Inhomogeneity::ModelV {
            match self.lattice.directions()[dir].vector {
                [1, 0, 0] => 0,
                _ => 1,
            }
        } else {
            0
        }
    }

    /// Tag of the child window obtained by moving the reference vertex along
    /// direction `dir`.
    pub fn child_tag(&self, tag: VariantTag, dir: usize) -> VariantTag {
        let period = self.tag_period();
        if period == 1 {
            return VariantTag(0);
        }
        let v = self.lattice.directions()[dir].vector;
        VariantTag((tag.0 + self.coordinate_residue(v)) % period)
    }

    /// Letter used for a tag in dumps. Models III and IV name the residues
    /// by the types of the reference vertex and of its right successor.
    pub fn tag_letter(&self, tag: VariantTag) -> char {
        match self.inhomogeneity {
            Inhomogeneity::ModelIII | Inhomogeneity::ModelIV => ['a', 'b', 'd', 'c'][tag.0 as usize % 4],
            Inhomogeneity::ModelI | Inhomogeneity::ModelII => ['a', 'b'][tag.0 as usize % 2],
            _ => '-',
        }
    }

    pub fn tag_from_letter(&self, letter: char) -> Option<VariantTag> {
        self.tags().find(|t| self.tag_letter(*t) == letter)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use Inhomogeneity as I;
        use Lattice as L;
        use Percolation as P;
        let (l, p, i) = match s {
            "site-vl2" => (L::Vl2, P::Site, I::None),
            "bond-vl2" => (L::Vl2, P::Bond, I::None),
            "site-alt2" => (L::Alt2, P::Site, I::None),
            "bond-alt2" => (L::Alt2, P::Bond, I::None),
            "site-vl3" => (L::Vl3, P::Site, I::None),
            "bond-vl3" => (L::Vl3, P::Bond, I::None),
            "inhom-1" => (L::Vl2, P::Site, I::ModelI),
            "inhom-2" => (L::Vl2, P::Site, I::ModelII),
            "inhom-3" => (L::Vl2, P::Site, I::ModelIII),
            "inhom-4" => (L::Vl2, P::Site, I::ModelIV),
            "inhom-5" => (L::Vl2, P::Bond, I::ModelV),
            _ => {
                return Err(Error::InvalidModel(format!(
                    "unknown model `{s}` (expected one of {})",
                    MODEL_IDS.join(", ")
                )))
            }
        };
        ModelSpec::new(l, p, i)
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Shape of a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowSize {
    /// `len` consecutive same-height vertices (2D lattices).
    Interval(usize),
    /// Triangle of the given side; `focus` is the 0-based row-major index of
    /// the root slot.
    Triangle { side: usize, focus: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InNeighbor {
    pub slot: usize,
    pub direction: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChildWindow {
    pub direction: usize,
    /// Successor index of every child slot, in child slot order.
    pub slots: Vec<usize>,
}

/// Window slots, their successors and the in-neighbor structure of each
/// successor. Slot coordinates are offsets from the window's reference
/// vertex (the rightmost vertex for 2D lattices).
#[derive(Debug, Clone)]
pub struct WindowGeometry {
    pub lattice: Lattice,
    pub slots: Vec<Coord>,
    pub root: usize,
    pub successors: Vec<Coord>,
    /// In-neighbors of every successor, highest priority first.
    pub in_neighbors: Vec<Vec<InNeighbor>>,
    /// `out_edges[slot][dir]` is the successor reached from `slot` along `dir`.
    pub out_edges: Vec<Vec<usize>>,
    pub children: Vec<ChildWindow>,
}

/// Default focus slot (1-based, row-major) for a triangle side.
pub fn default_focus(side: usize) -> usize {
    match side {
        5 => 6,
        _ => 3,
    }
}

/// Row-major triangle position (1-based row and column) of a 0-based slot.
pub fn triangle_position(index: usize) -> (usize, usize) {
    let mut r = 1;
    let mut start = 0;
    while start + r <= index {
        start += r;
        r += 1;
    }
    (r, index - start + 1)
}

pub fn triangle_coord(side: usize, r: usize, c: usize) -> Coord {
    [(r - c) as i32, (c - 1) as i32, (side - r) as i32]
}

pub fn window_geometry(model: &ModelSpec, size: WindowSize) -> Result<WindowGeometry> {
    let lattice = model.lattice;
    let (slots, root): (Vec<Coord>, usize) = match (lattice, size) {
        (Lattice::Vl2 | Lattice::Alt2, WindowSize::Interval(len)) => {
            if len < 2 {
                return Err(Error::InvalidSize(format!("window length {len} is below the minimum of 2")));
            }
            let last = len as i32 - 1;
            let slots = (0..len as i32)
                .map(|j| match lattice {
                    Lattice::Vl2 => [j - last, last - j, 0],
                    _ => [j - last, 0, 0],
                })
                .collect();
            (slots, 0)
        }
        (Lattice::Vl3, WindowSize::Triangle { side, focus }) => {
            if side < 2 {
                return Err(Error::InvalidSize(format!("triangle side {side} is below the minimum of 2")));
            }
            let n = side * (side + 1) / 2;
            if focus >= n {
                return Err(Error::InvalidSize(format!(
                    "focus slot {} outside a triangle of {n} slots",
                    focus + 1
                )));
            }
            let slots = (0..n)
                .map(|s| {
                    let (r, c) = triangle_position(s);
                    triangle_coord(side, r, c)
                })
                .collect();
            (slots, focus)
        }
        _ => {
            return Err(Error::InvalidSize(format!("window shape {size:?} does not fit lattice {lattice:?}")));
        }
    };

    let dirs = lattice.directions();
    let mut successors: Vec<Coord> = Vec::new();
    for s in &slots {
        for d in dirs {
            let t = add(*s, d.vector);
            if !successors.contains(&t) {
                successors.push(t);
            }
        }
    }
    // Display order: left to right along the row for 2D, row-major in the
    // enlarged triangle for 3D.
    match lattice {
        Lattice::Vl2 | Lattice::Alt2 => successors.sort_by_key(|c| c[0]),
        Lattice::Vl3 => successors.sort_by_key(|c| (-c[2], c[1])),
    }
    let index_of = |c: Coord| successors.iter().position(|s| *s == c).expect("successor listed");

    let out_edges: Vec<Vec<usize>> =
        slots.iter().map(|s| dirs.iter().map(|d| index_of(add(*s, d.vector))).collect()).collect();

    let mut in_neighbors = vec![Vec::new(); successors.len()];
    for (dir, _) in dirs.iter().enumerate() {
        for (slot, outs) in out_edges.iter().enumerate() {
            in_neighbors[outs[dir]].push(InNeighbor { slot, direction: dir });
        }
    }

    let children = (0..dirs.len())
        .map(|dir| ChildWindow { direction: dir, slots: out_edges.iter().map(|o| o[dir]).collect() })
        .collect();

    Ok(WindowGeometry { lattice, slots, root, successors, in_neighbors, out_edges, children })
}

impl WindowGeometry {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn num_directions(&self) -> usize {
        self.children.len()
    }

    /// Successor reached by the root along `dir` (the child's root).
    pub fn child_root(&self, dir: usize) -> usize {
        self.out_edges[self.root][dir]
    }
}

pub(crate) fn add(a: Coord, b: Coord) -> Coord {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
