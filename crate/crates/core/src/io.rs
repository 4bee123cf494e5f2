//! Path files.
//!
//! Binary layout, little-endian: `dim: u64, dt: f64, t0: f64, n_steps: u64,
//! hurst: f64 (NaN when not an FBM sample), seed: u64`, followed by the
//! `(n_steps + 1) * dim` node values row-major as `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::path::GridPath;

/// Metadata stored with a binary path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathMeta {
    pub hurst: Option<f64>,
    pub seed: u64,
}

const HEADER_BYTES: usize = 48;

pub fn write_path_binary(path: &GridPath, meta: PathMeta, mut w: impl Write) -> Result<()> {
    let mut header = Vec::with_capacity(HEADER_BYTES);
    header.extend_from_slice(&(path.dim() as u64).to_le_bytes());
    header.extend_from_slice(&path.dt().to_le_bytes());
    header.extend_from_slice(&path.t0().to_le_bytes());
    header.extend_from_slice(&(path.n_steps() as u64).to_le_bytes());
    header.extend_from_slice(&meta.hurst.unwrap_or(f64::NAN).to_le_bytes());
    header.extend_from_slice(&meta.seed.to_le_bytes());
    w.write_all(&header)?;
    for v in path.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_path_binary(mut r: impl Read) -> Result<(GridPath, PathMeta)> {
    let mut header = [0u8; HEADER_BYTES];
    r.read_exact(&mut header)?;
    let word = |k: usize| -> [u8; 8] { header[8 * k..8 * k + 8].try_into().expect("8 bytes") };
    let dim = u64::from_le_bytes(word(0)) as usize;
    let dt = f64::from_le_bytes(word(1));
    let t0 = f64::from_le_bytes(word(2));
    let n_steps = u64::from_le_bytes(word(3)) as usize;
    let hurst = f64::from_le_bytes(word(4));
    let seed = u64::from_le_bytes(word(5));
    let count = n_steps
        .checked_add(1)
        .and_then(|n| n.checked_mul(dim))
        .filter(|&c| c < (1 << 34))
        .ok_or_else(|| Error::InvalidGrid(format!("implausible header: dim {dim}, {n_steps} steps")))?;
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let path = GridPath::new(t0, dt, dim, values)?;
    let meta = PathMeta {
        hurst: (!hurst.is_nan()).then_some(hurst),
        seed,
    };
    Ok((path, meta))
}

pub fn save_path_binary(path: &GridPath, meta: PathMeta, file: impl AsRef<Path>) -> Result<()> {
    write_path_binary(path, meta, BufWriter::new(File::create(file)?))
}

pub fn load_path_binary(file: impl AsRef<Path>) -> Result<(GridPath, PathMeta)> {
    read_path_binary(BufReader::new(File::open(file)?))
}

/// CSV with header `t,x_1,...,x_dim`.
pub fn write_path_csv(path: &GridPath, mut w: impl Write) -> Result<()> {
    let mut line = String::from("t");
    for k in 1..=path.dim() {
        line.push_str(&format!(",x_{k}"));
    }
    writeln!(w, "{line}")?;
    for i in 0..path.n_nodes() {
        line.clear();
        line.push_str(&format!("{}", path.time(i)));
        for v in path.node(i) {
            line.push_str(&format!(",{v}"));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_path_csv(path: &GridPath, file: impl AsRef<Path>) -> Result<()> {
    write_path_csv(path, BufWriter::new(File::create(file)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip_is_exact() {
        let p = GridPath::from_fn(-0.5, 0.125, 8, 2, |t, o| {
            o[0] = t.sin();
            o[1] = 1.0 / 3.0 + t;
        })
        .unwrap();
        let mut buf = Vec::new();
        let meta = PathMeta {
            hurst: Some(0.45),
            seed: 99,
        };
        write_path_binary(&p, meta, &mut buf).unwrap();
        assert_eq!(buf.len(), HEADER_BYTES + 18 * 8);
        let (q, m) = read_path_binary(buf.as_slice()).unwrap();
        assert_eq!(p, q);
        assert_eq!(m, meta);

        let mut buf = Vec::new();
        write_path_binary(&p, PathMeta { hurst: None, seed: 0 }, &mut buf).unwrap();
        assert_eq!(read_path_binary(buf.as_slice()).unwrap().1.hurst, None);
        assert!(read_path_binary(&buf[..HEADER_BYTES + 8]).is_err());
    }

    #[test]
    fn csv_layout() {
        let p = GridPath::new(0.0, 0.5, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        write_path_csv(&p, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x_1,x_2\n0,0,1\n0.5,2,3\n");
    }
}
