//! Little-endian snapshot and basis files.
//!
//! Both share one header:
//!
//! | bytes | field                          |
//! |-------|--------------------------------|
//! | 4     | magic `ROMD`                   |
//! | 4     | format version, u32            |
//! | 8     | M (grid points), u64           |
//! | 8     | K (columns / singular values)  |
//! | 12    | grid dimensions, 3×u32         |
//! | 24    | box lengths, 3×f64             |
//!
//! A snapshot file continues with M·K f64 values, column-major. A basis file
//! continues with r (u64), the K singular values and the M·r entries of Q.
//! Metadata that is not needed to parse the payload (configuration hash,
//! provenance) lives in a JSON sidecar next to the file.

use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::orthonormalize;
use crate::grid::{weighted_tr_mul, FieldMatrix, Grid3};
use crate::rom::{BasisProvenance, ReducedBasis};

pub const MAGIC: &[u8; 4] = b"ROMD";
pub const FORMAT_VERSION: u32 = 1;
/// Orthonormality accepted as is on read.
pub const ORTHO_TOL: f64 = 1e-8;
/// Beyond this the basis is rejected; in between it is re-orthonormalized.
pub const ORTHO_REJECT: f64 = 1e-6;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos.checked_add(N).ok_or(Error::TruncatedFile)?;
        let chunk = self.bytes.get(self.pos..end).ok_or(Error::TruncatedFile)?;
        self.pos = end;
        Ok(chunk.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or(Error::TruncatedFile)?;
        if self.bytes.len().saturating_sub(self.pos) < len {
            return Err(Error::TruncatedFile);
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

struct Header {
    grid: Grid3,
    m: usize,
    k: usize,
}

fn write_header(out: &mut Vec<u8>, grid: &Grid3, k: usize) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.len() as u64).to_le_bytes());
    out.extend_from_slice(&(k as u64).to_le_bytes());
    for n in grid.n {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for l in grid.lengths {
        out.extend_from_slice(&l.to_le_bytes());
    }
}

fn read_header(r: &mut Reader, expected: Option<&Grid3>) -> Result<Header> {
    if &r.take::<4>()? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let m = r.u64()? as usize;
    let k = r.u64()? as usize;
    let n = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let lengths = [r.f64()?, r.f64()?, r.f64()?];
    if n.iter().product::<usize>() != m {
        return Err(Error::DimensionMismatch(format!(
            "header M = {m} but grid is {}×{}×{}",
            n[0], n[1], n[2]
        )));
    }
    let grid = Grid3::new(n, lengths).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    if let Some(g) = expected {
        if g.n != grid.n || g.lengths != grid.lengths {
            return Err(Error::DimensionMismatch(format!(
                "file grid {:?} with box {:?} does not match active grid {:?} with box {:?}",
                grid.n, grid.lengths, g.n, g.lengths
            )));
        }
    }
    Ok(Header { grid, m, k })
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_snapshots(grid: &Grid3, y: &FieldMatrix) -> Result<Vec<u8>> {
    if y.nrows() != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows for {} grid points",
            y.nrows(),
            grid.len()
        )));
    }
    let mut out = Vec::new();
    write_header(&mut out, grid, y.ncols());
    push_f64s(&mut out, y.as_slice());
    Ok(out)
}

/// Parses a snapshot file, checking the grid against `expected` if given.
pub fn decode_snapshots(bytes: &[u8], expected: Option<&Grid3>) -> Result<(Grid3, FieldMatrix)> {
    let mut r = Reader { bytes, pos: 0 };
    let h = read_header(&mut r, expected)?;
    let data = r.f64s(h.m.checked_mul(h.k).ok_or(Error::TruncatedFile)?)?;
    r.finish()?;
    Ok((h.grid, FieldMatrix::from_vec(h.m, h.k, data)))
}

pub fn write_snapshots(path: &Path, grid: &Grid3, y: &FieldMatrix) -> Result<()> {
    super::write_file(path, encode_snapshots(grid, y)?)?;
    Ok(())
}

pub fn read_snapshots(path: &Path, expected: Option<&Grid3>) -> Result<(Grid3, FieldMatrix)> {
    decode_snapshots(&super::read_bytes(path)?, expected)
}

pub fn encode_basis(basis: &ReducedBasis) -> Result<Vec<u8>> {
    let k = basis.singular_values.len();
    if basis.rank() > k || basis.q.nrows() != basis.grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "basis is {}×{} with {} singular values",
            basis.q.nrows(),
            basis.rank(),
            k
        )));
    }
    let mut out = Vec::new();
    write_header(&mut out, &basis.grid, k);
    out.extend_from_slice(&(basis.rank() as u64).to_le_bytes());
    push_f64s(&mut out, &basis.singular_values);
    push_f64s(&mut out, basis.q.as_slice());
    Ok(out)
}

/// Parses a basis file and re-checks QᵀQ·h³ = I.
pub fn decode_basis(
    bytes: &[u8],
    expected: Option<&Grid3>,
    n_occ: usize,
    provenance: BasisProvenance,
) -> Result<ReducedBasis> {
    let mut r = Reader { bytes, pos: 0 };
    let h = read_header(&mut r, expected)?;
    let rank = r.u64()? as usize;
    if rank > h.k {
        return Err(Error::DimensionMismatch(format!(
            "basis rank {rank} exceeds {} singular values",
            h.k
        )));
    }
    let singular_values = r.f64s(h.k)?;
    let data = r.f64s(h.m.checked_mul(rank).ok_or(Error::TruncatedFile)?)?;
    r.finish()?;
    let mut q = FieldMatrix::from_vec(h.m, rank, data);
    let err = orthonormality_error(&h.grid, &q);
    if err > ORTHO_REJECT || !err.is_finite() {
        return Err(Error::OrthonormalityLost(err));
    }
    if err > ORTHO_TOL {
        warn!("basis orthonormality error {err:.3e}; re-orthonormalizing");
        q = orthonormalize(&h.grid, &q)?;
    }
    Ok(ReducedBasis {
        grid: h.grid,
        q,
        singular_values,
        n_occ,
        provenance,
    })
}

fn orthonormality_error(grid: &Grid3, q: &FieldMatrix) -> f64 {
    let g = weighted_tr_mul(grid, q, q);
    (g - FieldMatrix::identity(q.ncols(), q.ncols())).amax()
}

pub fn write_basis(path: &Path, basis: &ReducedBasis) -> Result<()> {
    super::write_file(path, encode_basis(basis)?)?;
    Ok(())
}

pub fn read_basis(
    path: &Path,
    expected: Option<&Grid3>,
    n_occ: usize,
    provenance: BasisProvenance,
) -> Result<ReducedBasis> {
    decode_basis(&super::read_bytes(path)?, expected, n_occ, provenance)
}

/// JSON metadata stored next to an output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub kind: String,
    pub format_version: u32,
    pub crate_version: String,
    pub config_hash: String,
    #[serde(default)]
    pub details: serde_json::Value,
}

impl Sidecar {
    pub fn new(kind: &str, config_hash: &str, details: serde_json::Value) -> Self {
        Self {
            kind: kind.into(),
            format_version: FORMAT_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash.into(),
            details,
        }
    }
}

/// `<file>.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    let text = serde_json::to_string_pretty(sidecar).map_err(|e| Error::InvalidInput(e.to_string()))?;
    super::write_file(&sidecar_path(path), text)?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = super::read_text(&sidecar_path(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
}
