// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

//! Dataset files: the `.fvecs` / `.ivecs` layout used by the SIFT/GIST
//! corpora, and a compact point-set dump.
//!
//! A vecs record is a little-endian `u32` dimension followed by `d`
//! little-endian 4-byte values. Every record in one file has the same `d`.
//!
//! The dump is `b"HENNPTS1"`, `u32 n`, `u32 d`, then `n * d` `f32`s, all
//! little-endian.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::points::{Metric, PointSet};

pub const POINTS_MAGIC: &[u8; 8] = b"HENNPTS1";

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Splits a vecs buffer into `(dim, payload words)`.
fn parse_vecs(bytes: &[u8]) -> Result<(usize, Vec<[u8; 4]>)> {
    if bytes.len() < 4 {
        return Err(Error::format(0, "file is empty or shorter than one header"));
    }
    let d = le_u32(bytes, 0) as usize;
    if d == 0 {
        return Err(Error::format(0, "record dimension is zero"));
    }
    let record = 4 + 4 * d;
    let mut words = Vec::with_capacity(bytes.len() / 4);
    let mut at = 0usize;
    while at < bytes.len() {
        if bytes.len() - at < record {
            return Err(Error::format(
                at as u64,
                format!("truncated record: {} bytes left, need {record}", bytes.len() - at),
            ));
        }
        let rd = le_u32(bytes, at) as usize;
        if rd != d {
            return Err(Error::format(
                at as u64,
                format!("inconsistent dimension {rd}, expected {d}"),
            ));
        }
        for w in bytes[at + 4..at + record].chunks_exact(4) {
            words.push(w.try_into().unwrap());
        }
        at += record;
    }
    Ok((d, words))
}

pub fn parse_fvecs(bytes: &[u8], metric: Metric) -> Result<PointSet> {
    let (d, words) = parse_vecs(bytes)?;
    let data: Vec<f32> = words.into_iter().map(f32::from_le_bytes).collect();
    PointSet::new(d, data, metric)
}

pub fn parse_fvecs_rows(bytes: &[u8]) -> Result<Vec<Vec<f32>>> {
    let (d, words) = parse_vecs(bytes)?;
    let flat: Vec<f32> = words.into_iter().map(f32::from_le_bytes).collect();
    Ok(flat.chunks_exact(d).map(<[f32]>::to_vec).collect())
}

pub fn parse_ivecs(bytes: &[u8]) -> Result<Vec<Vec<u32>>> {
    let (d, words) = parse_vecs(bytes)?;
    let flat: Vec<i32> = words.into_iter().map(i32::from_le_bytes).collect();
    flat.chunks_exact(d)
        .enumerate()
        .map(|(r, row)| {
            row.iter()
                .map(|&v| {
                    u32::try_from(v).map_err(|_| Error::format((r * (4 + 4 * d)) as u64, format!("negative id {v}")))
                })
                .collect()
        })
        .collect()
}

pub fn load_fvecs(path: impl AsRef<Path>, metric: Metric) -> Result<PointSet> {
    parse_fvecs(&fs::read(path)?, metric)
}

/// Loads an fvecs file as raw rows (queries are normalized at search time).
pub fn load_fvecs_rows(path: impl AsRef<Path>) -> Result<Vec<Vec<f32>>> {
    parse_fvecs_rows(&fs::read(path)?)
}

pub fn load_ivecs(path: impl AsRef<Path>) -> Result<Vec<Vec<u32>>> {
    parse_ivecs(&fs::read(path)?)
}

fn write_vecs<T: Copy>(path: &Path, rows: impl Iterator<Item = Vec<T>>, to_le: impl Fn(T) -> [u8; 4]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        let d = u32::try_from(row.len()).map_err(|_| Error::invalid("row too long"))?;
        if d == 0 {
            return Err(Error::invalid("cannot write a zero-length record"));
        }
        w.write_all(&d.to_le_bytes())?;
        for v in row {
            w.write_all(&to_le(v))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_fvecs<R: AsRef<[f32]>>(path: impl AsRef<Path>, rows: &[R]) -> Result<()> {
    write_vecs(
        path.as_ref(),
        rows.iter().map(|r| r.as_ref().to_vec()),
        f32::to_le_bytes,
    )
}

pub fn save_point_set_fvecs(path: impl AsRef<Path>, ps: &PointSet) -> Result<()> {
    write_vecs(path.as_ref(), ps.rows().map(<[f32]>::to_vec), f32::to_le_bytes)
}

pub fn save_ivecs<R: AsRef<[u32]>>(path: impl AsRef<Path>, rows: &[R]) -> Result<()> {
    write_vecs(path.as_ref(), rows.iter().map(|r| r.as_ref().to_vec()), |v: u32| {
        (v as i32).to_le_bytes()
    })
}

pub fn encode_points(ps: &PointSet, out: &mut Vec<u8>) {
    out.extend_from_slice(POINTS_MAGIC);
    out.extend_from_slice(&(ps.len() as u32).to_le_bytes());
    out.extend_from_slice(&(ps.dim() as u32).to_le_bytes());
    out.reserve(ps.as_flat().len() * 4);
    for v in ps.as_flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Decodes a dump starting at `bytes[0]`; offsets in errors are shifted by
/// `base`. Returns the set and the number of bytes consumed.
pub fn decode_points(bytes: &[u8], base: u64, metric: Metric, allow_empty: bool) -> Result<(PointSet, usize)> {
    if bytes.len() < 16 {
        return Err(Error::format(base, "truncated point dump header"));
    }
    if &bytes[..8] != POINTS_MAGIC {
        return Err(Error::format(base, "bad magic, expected HENNPTS1"));
    }
    let n = le_u32(bytes, 8) as usize;
    let d = le_u32(bytes, 12) as usize;
    let need = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| Error::format(base + 8, "point dump size overflows"))?;
    if bytes.len() - 16 < need {
        return Err(Error::format(
            base + 16,
            format!("truncated point data: need {need} bytes, have {}", bytes.len() - 16),
        ));
    }
    let data: Vec<f32> = bytes[16..16 + need]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let ps = if allow_empty && n == 0 {
        PointSet::empty(d, metric)
    } else {
        PointSet::new(d, data, metric)
    }
    .map_err(|e| Error::format(base + 16, e.to_string()))?;
    Ok((ps, 16 + need))
}

pub fn save_points(path: impl AsRef<Path>, ps: &PointSet) -> Result<()> {
    let mut buf = Vec::new();
    encode_points(ps, &mut buf);
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_points(path: impl AsRef<Path>, metric: Metric) -> Result<PointSet> {
    let bytes = fs::read(path)?;
    let (ps, used) = decode_points(&bytes, 0, metric, false)?;
    if used != bytes.len() {
        return Err(Error::format(used as u64, "trailing bytes after point dump"));
    }
    Ok(ps)
}

/// Loads either a point dump or an fvecs file, sniffing the magic.
pub fn load_dataset(path: impl AsRef<Path>, metric: Metric) -> Result<PointSet> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(POINTS_MAGIC) {
        let (ps, used) = decode_points(&bytes, 0, metric, false)?;
        if used != bytes.len() {
            return Err(Error::format(used as u64, "trailing bytes after point dump"));
        }
        Ok(ps)
    } else {
        parse_fvecs(&bytes, metric)
    }
}
