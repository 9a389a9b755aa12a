//! Binary chain checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size        field
//! 0       8           magic "MMCHAIN1"
//! 8       4           format version (u32) = 1
//! 12      4           chain index (u32)
//! 16      8           n_draws (u64)
//! 24      8           n_params (u64)
//! 32      8           adapted step size (f64)
//! 40      8·n_params  inverse mass diagonal (f64 each)
//! …       8·n_draws·n_params   draws, draw-major; within a draw the
//!                     parameters follow the unconstrained layout order
//!                     documented on ParamLayout
//! …       8·n_draws   accept statistic per draw (f64)
//! …       8·n_draws   energy per draw (f64)
//! …       4·n_draws   tree depth per draw (u32)
//! …       1·n_draws   divergent flag per draw (u8, 0 or 1)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::ChainDraws;

const MAGIC: &[u8; 8] = b"MMCHAIN1";
const VERSION: u32 = 1;

pub fn write_chain<P: AsRef<Path>>(path: P, chain_index: u32, chain: &ChainDraws) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    let n_draws = chain.draws.len() as u64;
    let n_params = chain.n_params() as u64;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&chain_index.to_le_bytes())?;
    w.write_all(&n_draws.to_le_bytes())?;
    w.write_all(&n_params.to_le_bytes())?;
    w.write_all(&chain.step_size.to_le_bytes())?;
    for &v in &chain.inv_mass {
        w.write_all(&v.to_le_bytes())?;
    }
    for draw in &chain.draws {
        for &v in draw {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for &v in &chain.accept_stats {
        w.write_all(&v.to_le_bytes())?;
    }
    for &v in &chain.energies {
        w.write_all(&v.to_le_bytes())?;
    }
    for &v in &chain.tree_depths {
        w.write_all(&v.to_le_bytes())?;
    }
    for &v in &chain.divergent {
        w.write_all(&[u8::from(v)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_chain<P: AsRef<Path>>(path: P) -> Result<(u32, ChainDraws)> {
    let file = std::fs::File::open(path)?;
    let mut r = std::io::BufReader::new(file);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse {
            line: 0,
            msg: "not a chain checkpoint (bad magic)".into(),
        });
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Parse {
            line: 0,
            msg: format!("unsupported checkpoint version {version}"),
        });
    }
    let chain_index = read_u32(&mut r)?;
    let n_draws = read_u64(&mut r)? as usize;
    let n_params = read_u64(&mut r)? as usize;
    let step_size = read_f64(&mut r)?;
    let inv_mass = read_f64_vec(&mut r, n_params)?;
    let mut draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        draws.push(read_f64_vec(&mut r, n_params)?);
    }
    let accept_stats = read_f64_vec(&mut r, n_draws)?;
    let energies = read_f64_vec(&mut r, n_draws)?;
    let mut tree_depths = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        tree_depths.push(read_u32(&mut r)?);
    }
    let mut divergent = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let mut b = [0u8; 1];
        r.read_exact(&mut b)?;
        divergent.push(b[0] != 0);
    }
    Ok((
        chain_index,
        ChainDraws {
            draws,
            accept_stats,
            energies,
            tree_depths,
            divergent,
            step_size,
            inv_mass,
        },
    ))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_f64_vec<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    let mut b = [0u8; 8];
    for v in out.iter_mut() {
        r.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let chain = ChainDraws {
            draws: vec![vec![1.0, -2.5, 3.25], vec![0.5, 0.0, -1.0]],
            accept_stats: vec![0.9, 0.95],
            energies: vec![12.5, 11.75],
            tree_depths: vec![3, 4],
            divergent: vec![false, true],
            step_size: 0.125,
            inv_mass: vec![1.0, 2.0, 0.5],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain_0.bin");
        write_chain(&path, 7, &chain).unwrap();
        let (idx, back) = read_chain(&path).unwrap();
        assert_eq!(idx, 7);
        assert_eq!(back.draws, chain.draws);
        assert_eq!(back.accept_stats, chain.accept_stats);
        assert_eq!(back.energies, chain.energies);
        assert_eq!(back.tree_depths, chain.tree_depths);
        assert_eq!(back.divergent, chain.divergent);
        assert_eq!(back.step_size, chain.step_size);
        assert_eq!(back.inv_mass, chain.inv_mass);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(read_chain(&path).is_err());
    }
}
