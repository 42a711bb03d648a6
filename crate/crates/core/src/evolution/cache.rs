//! Versioned little-endian binary cache for evolution grids.
//!
//! Layout: header { magic "NEDG", version u32, n u32, N u32, tol f64,
//! max_step_cond f64 }, then N+1 node times, then N row-major n x n step
//! matrices, then a trailing CRC32 of everything before it.

use super::{EvolutionGrid, TimeGrid};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
use std::io::{Cursor, Read};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"NEDG";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a grid cache file (bad magic)")]
    BadMagic,
    #[error("cache file has version {found}, this build reads version {VERSION}")]
    Version { found: u32 },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("cache file is truncated or malformed: {0}")]
    Malformed(String),
}

/// Serialize the grid; lossless (bitwise) for node times and step matrices.
pub fn save_grid(eg: &EvolutionGrid, path: &Path) -> Result<(), CacheError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.write_u32::<LittleEndian>(VERSION)?;
    buf.write_u32::<LittleEndian>(eg.dim() as u32)?;
    buf.write_u32::<LittleEndian>(eg.num_steps() as u32)?;
    buf.write_f64::<LittleEndian>(eg.tol())?;
    buf.write_f64::<LittleEndian>(eg.max_step_cond())?;
    for &t in eg.times() {
        buf.write_f64::<LittleEndian>(t)?;
    }
    for s in 0..eg.num_steps() {
        let m = eg.step(s);
        for i in 0..eg.dim() {
            for j in 0..eg.dim() {
                buf.write_f64::<LittleEndian>(m[(i, j)])?;
            }
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.write_u32::<LittleEndian>(crc)?;

    // Write-to-temp then rename: no partial files on failure.
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &buf)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_grid(path: &Path) -> Result<EvolutionGrid, CacheError> {
    let data = std::fs::read(path)?;
    if data.len() < 4 + 4 + 4 + 4 + 8 + 8 + 4 {
        return Err(CacheError::Malformed("file shorter than header".into()));
    }
    let (body, crc_bytes) = data.split_at(data.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CacheError::Checksum { stored, computed });
    }

    let mut cur = Cursor::new(body);
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CacheError::BadMagic);
    }
    let version = cur.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(CacheError::Version { found: version });
    }
    let n = cur.read_u32::<LittleEndian>()? as usize;
    let num_steps = cur.read_u32::<LittleEndian>()? as usize;
    let tol = cur.read_f64::<LittleEndian>()?;
    let max_cond = cur.read_f64::<LittleEndian>()?;
    if n == 0 || num_steps == 0 {
        return Err(CacheError::Malformed("empty grid".into()));
    }
    let mut times = Vec::with_capacity(num_steps + 1);
    for _ in 0..=num_steps {
        times.push(cur.read_f64::<LittleEndian>()?);
    }
    let mut steps = Vec::with_capacity(num_steps);
    for _ in 0..num_steps {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = cur.read_f64::<LittleEndian>()?;
            }
        }
        steps.push(m);
    }
    if cur.position() != body.len() as u64 {
        return Err(CacheError::Malformed("trailing bytes".into()));
    }
    let grid = TimeGrid::from_times(times)
        .map_err(|e| CacheError::Malformed(format!("bad node times: {e}")))?;
    Ok(EvolutionGrid::from_parts(grid, n, steps, tol, max_cond))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{build_grid, TimeGrid};
    use crate::sysdef::SystemDef;

    fn sample_grid() -> EvolutionGrid {
        let sys = SystemDef::linear(
            "s",
            2,
            &[
                vec!["-1".into(), "sin(t)".into()],
                vec!["0".into(), "-2".into()],
            ],
            false,
            None,
        )
        .unwrap();
        build_grid(&sys, TimeGrid::uniform(0.0, 2.0, 0.25).unwrap(), 1e-9).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let eg = sample_grid();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.nedc");
        save_grid(&eg, &path).unwrap();
        let back = load_grid(&path).unwrap();
        assert_eq!(back.dim(), eg.dim());
        assert_eq!(back.times(), eg.times());
        assert_eq!(back.tol(), eg.tol());
        for i in 0..eg.num_steps() {
            assert_eq!(back.step(i), eg.step(i), "step {i} differs");
        }
    }

    #[test]
    fn corruption_is_detected() {
        let eg = sample_grid();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.nedc");
        save_grid(&eg, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_grid(&path), Err(CacheError::Checksum { .. })));
    }

    #[test]
    fn newer_version_is_rejected() {
        let eg = sample_grid();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.nedc");
        save_grid(&eg, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // Bump the version field and refresh the checksum.
        bytes[4] = 99;
        let body_len = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&crc.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_grid(&path),
            Err(CacheError::Version { found: 99 })
        ));
    }
}
