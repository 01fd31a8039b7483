//! Binary matrix files.
//!
//! Layout: magic `CVDM`, u32 version (1), u32 rows, u32 cols, then
//! `rows * cols` little-endian f64 values in column-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CVDM";
pub const VERSION: u32 = 1;

pub fn write_matrix<W: Write>(mut w: W, m: &DMatrix<f64>) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(m.nrows() as u32).to_le_bytes())?;
    w.write_all(&(m.ncols() as u32).to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() > u32::MAX as usize || m.ncols() > u32::MAX as usize {
        return Err(Error::invalid("matrix too large for CVDM header"));
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_matrix(BufWriter::new(f), m).map_err(|e| Error::io(path, e))
}

pub fn read_matrix<R: Read>(mut r: R, path: &Path) -> Result<DMatrix<f64>> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| Error::format(path, "truncated header"))?;
    if &header[0..4] != MAGIC {
        return Err(Error::format(path, "bad magic, expected CVDM"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::format(path, "dimension overflow"))?;
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::format(path, format!("expected {len} values")))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::format(path, "trailing bytes after matrix payload"));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_vec(rows, cols, data))
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix(BufReader::new(f), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = DMatrix::from_column_slice(2, 1, &[1.0, -2.5]);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert_eq!(&buf[0..4], b"CVDM");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(&buf[12..16], &1u32.to_le_bytes());
        assert_eq!(&buf[16..24], &1.0f64.to_le_bytes());
        assert_eq!(buf.len(), 16 + 16);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let p = Path::new("mem");
        let mut buf = Vec::new();
        write_matrix(&mut buf, &DMatrix::zeros(2, 2)).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_matrix(&bad[..], p).is_err());
        assert!(read_matrix(&buf[..buf.len() - 1], p).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_bitwise(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let mut s = seed;
            let m = DMatrix::from_fn(rows, cols, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f64::from_bits(s >> 2) // arbitrary finite bit patterns
            });
            let mut buf = Vec::new();
            write_matrix(&mut buf, &m).unwrap();
            let back = read_matrix(&buf[..], Path::new("mem")).unwrap();
            let a: Vec<u64> = m.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
