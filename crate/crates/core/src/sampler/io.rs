//! Draws persistence: a little-endian binary matrix plus a JSON sidecar.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChainStats, PosteriorDraws, SamplerConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FRDRAWS1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawsMetadata {
    pub n_chains: usize,
    pub n_iter: usize,
    pub dim: usize,
    pub index_hash: Option<String>,
    pub names: Vec<String>,
    pub config: Option<SamplerConfig>,
    pub stats: Vec<ChainStats>,
}

impl DrawsMetadata {
    pub fn new(draws: &PosteriorDraws, config: Option<&SamplerConfig>) -> Self {
        DrawsMetadata {
            n_chains: draws.n_chains,
            n_iter: draws.n_iter,
            dim: draws.dim,
            index_hash: draws.index_hash.clone(),
            names: draws.names.clone(),
            config: config.cloned(),
            stats: draws.stats.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }
}

/// Writes the draws matrix: magic, then chains, iterations and dimension as
/// `u64`, then every value as `f64`, all little-endian and chain-major.
pub fn write_draws(path: impl AsRef<Path>, draws: &PosteriorDraws) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    for v in [draws.n_chains, draws.n_iter, draws.dim] {
        w.write_all(&(v as u64).to_le_bytes()).map_err(io)?;
    }
    for v in &draws.values {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// Reads a draws matrix and attaches the sidecar metadata, checking that
/// the two agree.
pub fn read_draws(path: impl AsRef<Path>, meta: &DrawsMetadata) -> Result<PosteriorDraws> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let io = |e| Error::io(path, e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::DrawsFormat("bad magic bytes".into()));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(io)?;
        *d = u64::from_le_bytes(b) as usize;
    }
    let [n_chains, n_iter, dim] = dims;
    if (n_chains, n_iter, dim) != (meta.n_chains, meta.n_iter, meta.dim) {
        return Err(Error::DrawsFormat(format!(
            "matrix is {n_chains}x{n_iter}x{dim} but metadata says {}x{}x{}",
            meta.n_chains, meta.n_iter, meta.dim
        )));
    }
    let total = n_chains
        .checked_mul(n_iter)
        .and_then(|v| v.checked_mul(dim))
        .ok_or_else(|| Error::DrawsFormat("dimensions overflow".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io)?;
    if bytes.len() != total * 8 {
        return Err(Error::DrawsFormat(format!(
            "expected {} bytes of values, found {}",
            total * 8,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::DrawsFormat("non-finite draw value".into()));
    }
    Ok(PosteriorDraws {
        n_chains,
        n_iter,
        dim,
        values,
        names: meta.names.clone(),
        index_hash: meta.index_hash.clone(),
        stats: meta.stats.clone(),
    })
}
