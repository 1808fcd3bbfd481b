//! Binary cache of a symbolic mean matrix.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "PBM1"
//! u32 length, model id bytes
//! u8 variant (0 plain, 1 truncated, 2 triangle), u32 x 3 space parameters
//! u64 state count
//! u32 pool size, then per polynomial: u32 term count, per term 4 x u8 exponents, u64 coefficient
//! u64 row count, then per row: u32 entry count, per entry u32 column, u32 polynomial id
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::poly::{Mono, Poly, PolyPool};
use crate::space::{SpaceSpec, StateSpace};
use crate::transition::{BuildStats, MeanMatrix};

const MAGIC: &[u8; 4] = b"PBM1";

pub fn write_matrix(matrix: &MeanMatrix, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    let id = matrix.model.id().as_bytes();
    w.write_all(&(id.len() as u32).to_le_bytes())?;
    w.write_all(id)?;
    let (variant, a, b, c) = match matrix.spec {
        SpaceSpec::Plain { k } => (0u8, k, 0, 0),
        SpaceSpec::Truncated { k, i, j } => (1, k, i, j),
        SpaceSpec::Triangle { side, focus } => (2, side, focus, 0),
    };
    w.write_all(&[variant])?;
    for x in [a, b, c] {
        w.write_all(&(x as u32).to_le_bytes())?;
    }
    w.write_all(&(matrix.dim() as u64).to_le_bytes())?;
    w.write_all(&(matrix.pool.len() as u32).to_le_bytes())?;
    for poly in matrix.pool.polys() {
        w.write_all(&(poly.terms().len() as u32).to_le_bytes())?;
        for (mono, coeff) in poly.terms() {
            w.write_all(&mono.exps())?;
            w.write_all(&coeff.to_le_bytes())?;
        }
    }
    w.write_all(&(matrix.dim() as u64).to_le_bytes())?;
    for i in 0..matrix.dim() {
        let (lo, hi) = (matrix.row_ptr[i] as usize, matrix.row_ptr[i + 1] as usize);
        w.write_all(&((hi - lo) as u32).to_le_bytes())?;
        for k in lo..hi {
            w.write_all(&matrix.cols[k].to_le_bytes())?;
            w.write_all(&matrix.poly_ids[k].to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| Error::Cache(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

pub fn read_matrix(r: &mut impl Read) -> Result<MeanMatrix> {
    if &read_array::<4>(r)? != MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let len = read_u32(r)? as usize;
    if len > 64 {
        return Err(Error::Cache(format!("model id of {len} bytes")));
    }
    let mut id = vec![0u8; len];
    r.read_exact(&mut id).map_err(|e| Error::Cache(format!("truncated file: {e}")))?;
    let id = String::from_utf8(id).map_err(|_| Error::Cache("model id is not UTF-8".into()))?;
    let model: ModelSpec = id.parse()?;
    let [variant] = read_array::<1>(r)?;
    let (a, b, c) = (read_u32(r)? as usize, read_u32(r)? as usize, read_u32(r)? as usize);
    let spec = match variant {
        0 => SpaceSpec::Plain { k: a },
        1 => SpaceSpec::Truncated { k: a, i: b, j: c },
        2 => SpaceSpec::Triangle { side: a, focus: b },
        v => return Err(Error::Cache(format!("unknown space variant {v}"))),
    };
    let space = StateSpace::enumerate(&model, spec)?;
    let states = read_u64(r)? as usize;
    if states != space.len() {
        return Err(Error::Cache(format!("{states} states recorded, the space has {}", space.len())));
    }
    let pool_len = read_u32(r)? as usize;
    let mut polys = Vec::with_capacity(pool_len.min(1 << 20));
    for _ in 0..pool_len {
        let terms = read_u32(r)? as usize;
        let mut list = Vec::with_capacity(terms.min(1 << 16));
        for _ in 0..terms {
            let exps = read_array::<4>(r)?;
            list.push((Mono::new(exps), read_u64(r)?));
        }
        let poly = Poly::from_terms(list.iter().copied())?;
        if poly.terms() != list.as_slice() {
            return Err(Error::Cache("polynomial terms are not in canonical order".into()));
        }
        polys.push(poly);
    }
    let rows = read_u64(r)? as usize;
    if rows != states {
        return Err(Error::Cache(format!("{rows} rows for {states} states")));
    }
    let mut row_ptr = Vec::with_capacity(rows + 1);
    row_ptr.push(0u64);
    let (mut cols, mut poly_ids) = (Vec::new(), Vec::new());
    for _ in 0..rows {
        let count = read_u32(r)?;
        for _ in 0..count {
            let (col, id) = (read_u32(r)?, read_u32(r)?);
            if col as usize >= states || id as usize >= pool_len {
                return Err(Error::Cache(format!("entry ({col}, {id}) out of range")));
            }
            cols.push(col);
            poly_ids.push(id);
        }
        row_ptr.push(cols.len() as u64);
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Cache("trailing bytes".into()));
    }
    let stats = BuildStats { nonzeros: cols.len() as u64, distinct_polys: pool_len, build_seconds: 0.0 };
    Ok(MeanMatrix {
        model,
        spec,
        root: space.root_state(),
        row_ptr,
        cols,
        poly_ids,
        pool: PolyPool::from_polys(polys),
        stats,
    })
}

pub fn save(matrix: &MeanMatrix, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(matrix, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<MeanMatrix> {
    read_matrix(&mut BufReader::new(File::open(path)?))
}
