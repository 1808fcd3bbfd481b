//! Automaton state spaces: plain windows, the intermediate `S(k, i, j)`
//! spaces between window lengths `k` and `k + 1`, and 3D triangles.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{default_focus, window_geometry, Lattice, ModelSpec, VariantTag, WindowGeometry, WindowSize};

/// Largest supported window (the reverse index is a dense table over all
/// bit patterns).
pub const MAX_WINDOW: usize = 24;

/// Occupancy pattern of a window. Slot 0 is the most significant bit, so
/// numeric order equals lexicographic order of the bit string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateBits {
    pub code: u32,
    pub len: u8,
}

impl StateBits {
    pub fn new(code: u32, len: usize) -> Self {
        StateBits { code, len: len as u8 }
    }

    pub fn get(&self, slot: usize) -> bool {
        self.code >> (self.len as usize - 1 - slot) & 1 == 1
    }

    pub fn with(self, slot: usize, value: bool) -> Self {
        let bit = 1 << (self.len as usize - 1 - slot);
        let code = if value { self.code | bit } else { self.code & !bit };
        StateBits { code, len: self.len }
    }

    pub fn count_ones(&self) -> u32 {
        self.code.count_ones()
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s.is_empty() || s.len() > MAX_WINDOW || !s.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(Error::InvalidSpace(format!("`{s}` is not a bit string")));
        }
        Ok(StateBits::new(u32::from_str_radix(s, 2).unwrap(), s.len()))
    }
}

impl fmt::Display for StateBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$b}", self.code, width = self.len as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceSpec {
    Plain { k: usize },
    Truncated { k: usize, i: usize, j: usize },
    /// Triangle of side `side`; `focus` is the 1-based row-major root slot.
    Triangle { side: usize, focus: usize },
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, t| acc * (n - t) as u64 / (t + 1) as u64)
}

impl SpaceSpec {
    pub fn window_len(&self) -> usize {
        match *self {
            SpaceSpec::Plain { k } => k,
            SpaceSpec::Truncated { k, .. } => k + 1,
            SpaceSpec::Triangle { side, .. } => side * (side + 1) / 2,
        }
    }

    pub fn window_size(&self) -> WindowSize {
        match *self {
            SpaceSpec::Plain { .. } | SpaceSpec::Truncated { .. } => WindowSize::Interval(self.window_len()),
            SpaceSpec::Triangle { side, focus } => WindowSize::Triangle { side, focus: focus.saturating_sub(1) },
        }
    }

    /// Number of states per tag value.
    pub fn cardinality(&self) -> u64 {
        match *self {
            SpaceSpec::Plain { k } => 1 << (k - 1),
            SpaceSpec::Truncated { k, i, j } => {
                (1u64 << (k - 1)) + (0..i).map(|t| binomial(k - 1, t)).sum::<u64>() + j as u64
            }
            SpaceSpec::Triangle { side, .. } => 1 << (side * (side + 1) / 2 - 1),
        }
    }

    pub fn validate(&self, lattice: Lattice) -> Result<()> {
        match (*self, lattice) {
            (SpaceSpec::Plain { k }, Lattice::Vl2 | Lattice::Alt2) => {
                if !(2..=MAX_WINDOW).contains(&k) {
                    return Err(Error::InvalidSpace(format!("k = {k} must lie in 2..={MAX_WINDOW}")));
                }
            }
            (SpaceSpec::Truncated { k, i, j }, Lattice::Vl2 | Lattice::Alt2) => {
                if !(2..MAX_WINDOW).contains(&k) {
                    return Err(Error::InvalidSpace(format!("k = {k} must lie in 2..{MAX_WINDOW}")));
                }
                if i + 1 > k {
                    return Err(Error::InvalidSpace(format!("i = {i} too large for k = {k}")));
                }
                let max_j = binomial(k - 1, i);
                if j as u64 > max_j {
                    return Err(Error::InvalidSpace(format!(
                        "j = {j} exceeds the {max_j} sequences with exactly {} ones ending in 1",
                        i + 2
                    )));
                }
            }
            (SpaceSpec::Triangle { side, focus }, Lattice::Vl3) => {
                if side != 4 && side != 5 {
                    return Err(Error::InvalidSpace(format!("triangle side must be 4 or 5, got {side}")));
                }
                let n = side * (side + 1) / 2;
                if focus == 0 || focus > n {
                    return Err(Error::InvalidSpace(format!("focus slot {focus} outside 1..={n}")));
                }
            }
            (spec, lattice) => {
                return Err(Error::InvalidSpace(format!("space {spec} does not fit lattice {lattice:?}")));
            }
        }
        Ok(())
    }

    /// Parses the command-line form: `k`, `k,i,j` for 2D lattices, `L` or
    /// `L,focus` for the 3D lattice. The display forms `P(..)`, `S(..)` and
    /// `T(..)` are accepted too.
    pub fn parse(s: &str, lattice: Lattice) -> Result<Self> {
        let s = s.trim();
        let (tag, body) = match s.find('(') {
            Some(open) if s.ends_with(')') => (Some(&s[..open]), &s[open + 1..s.len() - 1]),
            _ => (None, s),
        };
        let nums: Vec<usize> = body
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidSpace(format!("cannot parse space `{s}`")))?;
        let spec = match (tag, lattice, nums.as_slice()) {
            (Some("T") | None, Lattice::Vl3, [side]) => SpaceSpec::Triangle { side: *side, focus: default_focus(*side) },
            (Some("T") | None, Lattice::Vl3, [side, focus]) => SpaceSpec::Triangle { side: *side, focus: *focus },
            (Some("P") | None, Lattice::Vl2 | Lattice::Alt2, [k]) => SpaceSpec::Plain { k: *k },
            (Some("S") | None, Lattice::Vl2 | Lattice::Alt2, [k, i, j]) => SpaceSpec::Truncated { k: *k, i: *i, j: *j },
            _ => return Err(Error::InvalidSpace(format!("cannot parse space `{s}` for lattice {lattice:?}"))),
        };
        spec.validate(lattice)?;
        Ok(spec)
    }
}

impl fmt::Display for SpaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceSpec::Plain { k } => write!(f, "P({k})"),
            SpaceSpec::Truncated { k, i, j } => write!(f, "S({k},{i},{j})"),
            SpaceSpec::Triangle { side, focus } => write!(f, "T({side},{focus})"),
        }
    }
}

impl Serialize for SpaceSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SpaceSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let lattice = if s.starts_with('T') { Lattice::Vl3 } else { Lattice::Vl2 };
        SpaceSpec::parse(&s, lattice).map_err(serde::de::Error::custom)
    }
}

const ABSENT: u32 = u32::MAX;

/// Materialized, ordered state space with exact reverse lookup. States are
/// ordered by tag, then by ascending bit pattern.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub model: ModelSpec,
    pub spec: SpaceSpec,
    pub geometry: WindowGeometry,
    states: Vec<(StateBits, VariantTag)>,
    /// `index[tag * 2^n + code]` is the ordinal or `ABSENT`.
    index: Vec<u32>,
    root: u32,
}

impl StateSpace {
    pub fn enumerate(model: &ModelSpec, spec: SpaceSpec) -> Result<Self> {
        spec.validate(model.lattice)?;
        let geometry = window_geometry(model, spec.window_size())?;
        let n = spec.window_len();
        let root_bit = 1u32 << (n - 1 - geometry.root);
        let patterns: Vec<u32> = match spec {
            SpaceSpec::Plain { .. } | SpaceSpec::Triangle { .. } => {
                (0..1u32 << n).filter(|c| c & root_bit != 0).collect()
            }
            SpaceSpec::Truncated { i, j, .. } => {
                let full: Vec<u32> = (0..1u32 << n).filter(|c| c & root_bit != 0).collect();
                // the j extra sequences are the largest codes, i.e. those whose
                // ones sit closest to the root
                let mut extra: Vec<u32> =
                    full.iter().rev().copied().filter(|c| c & 1 == 1 && c.count_ones() as usize == i + 2).take(j).collect();
                extra.reverse();
                full.into_iter()
                    .filter(|c| c & 1 == 0 || c.count_ones() as usize <= i + 1 || extra.binary_search(c).is_ok())
                    .collect()
            }
        };
        let period = model.tag_period() as usize;
        let mut states = Vec::with_capacity(patterns.len() * period);
        let mut index = vec![ABSENT; period << n];
        for tag in model.tags() {
            for &code in &patterns {
                index[((tag.0 as usize) << n) | code as usize] = states.len() as u32;
                states.push((StateBits::new(code, n), tag));
            }
        }
        let root_tag = root_tag(model, &geometry);
        let root = index[((root_tag.0 as usize) << n) | root_bit as usize];
        Ok(StateSpace { model: *model, spec, geometry, states, index, root })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.geometry.len()
    }

    pub fn state(&self, ordinal: usize) -> (StateBits, VariantTag) {
        self.states[ordinal]
    }

    pub fn states(&self) -> &[(StateBits, VariantTag)] {
        &self.states
    }

    pub fn lookup(&self, bits: StateBits, tag: VariantTag) -> Option<usize> {
        if bits.len as usize != self.window_len() || tag.0 >= self.model.tag_period() {
            return None;
        }
        let n = self.window_len();
        match self.index[((tag.0 as usize) << n) | bits.code as usize] {
            ABSENT => None,
            o => Some(o as usize),
        }
    }

    /// Maps a raw child pattern into the space, clearing the last-position
    /// bit when the pattern itself is not a member.
    pub fn project(&self, raw: StateBits, tag: VariantTag) -> Result<usize> {
        if let Some(o) = self.lookup(raw, tag) {
            return Ok(o);
        }
        let n = self.window_len();
        let cleared = raw.with(n - 1, false);
        self.lookup(cleared, tag).ok_or_else(|| Error::NotRepresentable(self.render(raw, tag)))
    }

    /// Projection table over every raw code for one tag; `u32::MAX` marks
    /// codes that cannot be a child (root bit clear).
    pub fn projection_table(&self, tag: VariantTag) -> Result<Vec<u32>> {
        let n = self.window_len();
        let root_bit = 1u32 << (n - 1 - self.geometry.root);
        (0..1u32 << n)
            .map(|c| {
                if c & root_bit == 0 {
                    Ok(ABSENT)
                } else {
                    self.project(StateBits::new(c, n), tag).map(|o| o as u32)
                }
            })
            .collect()
    }

    pub fn root_state(&self) -> usize {
        self.root as usize
    }

    pub fn render(&self, bits: StateBits, tag: VariantTag) -> String {
        if self.model.tag_period() > 1 {
            format!("{bits}/{}", self.model.tag_letter(tag))
        } else {
            bits.to_string()
        }
    }

    pub fn render_ordinal(&self, ordinal: usize) -> String {
        let (b, t) = self.states[ordinal];
        self.render(b, t)
    }

    /// Parses `bits` or `bits/letter`.
    pub fn parse_state(&self, s: &str) -> Result<usize> {
        let (bits, tag) = match s.split_once('/') {
            Some((b, l)) => {
                let letter = l.chars().next().unwrap_or(' ');
                let tag = self
                    .model
                    .tag_from_letter(letter)
                    .ok_or_else(|| Error::InvalidSpace(format!("unknown tag `{l}`")))?;
                (b, tag)
            }
            None => (s, VariantTag(0)),
        };
        let bits = StateBits::parse(bits)?;
        self.lookup(bits, tag).ok_or_else(|| Error::InvalidSpace(format!("state `{s}` is not in {}", self.spec)))
    }
}

/// Tag of the root window when the root slot sits at the origin.
pub fn root_tag(model: &ModelSpec, geometry: &WindowGeometry) -> VariantTag {
    let o = geometry.slots[geometry.root];
    VariantTag(model.coordinate_residue([-o[0], -o[1], -o[2]]))
}
