//! Sparse polynomials in the product basis `p^a (1-p)^b` (optionally with a
//! second parameter `r^c (1-r)^d`) with positive integer coefficients.
//!
//! Every transition probability of the automaton is a sum of products of
//! open/closed factors, so it has a representation with nonnegative
//! coefficients in this basis and evaluates without cancellation.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Exponents `(a1, b1, a2, b2)` packed big-endian so that integer order is
/// lexicographic order of the tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mono(u32);

impl Mono {
    pub const ONE: Mono = Mono(0);

    pub fn new(exps: [u8; 4]) -> Self {
        Mono(u32::from_be_bytes(exps))
    }

    pub fn exps(self) -> [u8; 4] {
        self.0.to_be_bytes()
    }

    /// Single factor: the open (`p`) or closed (`1-p`) factor of parameter
    /// `param`.
    pub fn var(param: usize, open: bool) -> Self {
        let mut e = [0u8; 4];
        e[2 * param + usize::from(!open)] = 1;
        Mono::new(e)
    }

    fn checked_mul(self, other: Mono) -> Result<Mono> {
        let (a, b) = (self.exps(), other.exps());
        let mut e = [0u8; 4];
        for t in 0..4 {
            e[t] = a[t].checked_add(b[t]).ok_or(Error::CoefficientOverflow)?;
        }
        Ok(Mono::new(e))
    }

    pub fn degree(self, param: usize) -> u32 {
        let e = self.exps();
        e[2 * param] as u32 + e[2 * param + 1] as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Poly {
    /// Sorted by monomial, coefficients strictly positive.
    terms: Vec<(Mono, u64)>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { terms: Vec::new() }
    }

    pub fn one() -> Self {
        Poly::monomial(Mono::ONE, 1)
    }

    pub fn monomial(m: Mono, coeff: u64) -> Self {
        if coeff == 0 {
            Poly::zero()
        } else {
            Poly { terms: vec![(m, coeff)] }
        }
    }

    pub fn var(param: usize, open: bool) -> Self {
        Poly::monomial(Mono::var(param, open), 1)
    }

    /// Builds a canonical polynomial from arbitrary terms.
    pub fn from_terms(terms: impl IntoIterator<Item = (Mono, u64)>) -> Result<Self> {
        let mut v: Vec<(Mono, u64)> = terms.into_iter().filter(|t| t.1 != 0).collect();
        v.sort_unstable_by_key(|t| t.0);
        let mut out: Vec<(Mono, u64)> = Vec::with_capacity(v.len());
        for (m, c) in v {
            match out.last_mut() {
                Some(last) if last.0 == m => last.1 = last.1.checked_add(c).ok_or(Error::CoefficientOverflow)?,
                _ => out.push((m, c)),
            }
        }
        Ok(Poly { terms: out })
    }

    pub fn terms(&self) -> &[(Mono, u64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &Poly) -> Result<Poly> {
        let (a, b) = (&self.terms, &other.terms);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push((a[i].0, a[i].1.checked_add(b[j].1).ok_or(Error::CoefficientOverflow)?));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Ok(Poly { terms: out })
    }

    pub fn add_assign(&mut self, other: &Poly) -> Result<()> {
        if self.is_zero() {
            self.terms.clone_from(&other.terms);
            return Ok(());
        }
        *self = self.add(other)?;
        Ok(())
    }

    pub fn mul(&self, other: &Poly) -> Result<Poly> {
        if self.is_zero() || other.is_zero() {
            return Ok(Poly::zero());
        }
        if other.terms.len() == 1 && other.terms[0] == (Mono::ONE, 1) {
            return Ok(self.clone());
        }
        let mut prod = Vec::with_capacity(self.terms.len() * other.terms.len());
        for &(ma, ca) in &self.terms {
            for &(mb, cb) in &other.terms {
                prod.push((ma.checked_mul(mb)?, ca.checked_mul(cb).ok_or(Error::CoefficientOverflow)?));
            }
        }
        Poly::from_terms(prod)
    }

    /// Evaluates at `params` (one value per model parameter, each in [0, 1]).
    pub fn eval(&self, params: &[f64]) -> f64 {
        let p1 = params[0];
        let p2 = params.get(1).copied().unwrap_or(0.0);
        let base = [p1, 1.0 - p1, p2, 1.0 - p2];
        self.terms
            .iter()
            .map(|&(m, c)| {
                let e = m.exps();
                let mut v = c as f64;
                for t in 0..4 {
                    if e[t] > 0 {
                        v *= base[t].powi(e[t] as i32);
                    }
                }
                v
            })
            .sum()
    }

    pub fn max_degree(&self, param: usize) -> u32 {
        self.terms.iter().map(|t| t.0.degree(param)).max().unwrap_or(0)
    }

    /// Sum of coefficients of terms without any open factor: the value at
    /// all parameters equal to zero.
    pub fn constant_at_zero(&self) -> u64 {
        self.terms.iter().filter(|(m, _)| m.exps()[0] == 0 && m.exps()[2] == 0).map(|t| t.1).sum()
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        const SYMBOLS: [char; 4] = ['p', 'q', 'r', 's'];
        for (t, (m, c)) in self.terms.iter().enumerate() {
            if t > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{c}")?;
            for (sym, e) in SYMBOLS.iter().zip(m.exps()) {
                if e > 0 {
                    write!(f, "·{sym}^{e}")?;
                }
            }
        }
        Ok(())
    }
}

/// Interning pool assigning stable ids to distinct polynomials.
#[derive(Debug, Clone, Default)]
pub struct PolyPool {
    ids: HashMap<Poly, u32>,
    polys: Vec<Poly>,
}

impl PolyPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, poly: Poly) -> u32 {
        if let Some(&id) = self.ids.get(&poly) {
            return id;
        }
        let id = self.polys.len() as u32;
        self.polys.push(poly.clone());
        self.ids.insert(poly, id);
        id
    }

    pub fn get(&self, id: u32) -> &Poly {
        &self.polys[id as usize]
    }

    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    pub fn polys(&self) -> &[Poly] {
        &self.polys
    }

    pub fn eval_all(&self, params: &[f64]) -> Vec<f64> {
        self.polys.iter().map(|p| p.eval(params)).collect()
    }

    pub fn from_polys(polys: Vec<Poly>) -> Self {
        let ids = polys.iter().enumerate().map(|(i, p)| (p.clone(), i as u32)).collect();
        PolyPool { ids, polys }
    }
}
