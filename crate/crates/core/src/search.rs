//! Packed binary codes and exact Hamming ranking.
//!
//! Bit `j` of a code is set iff `V[j, n] = +1`; bits fill each byte from the
//! most significant end and unused trailing bits stay zero.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CODE_MAGIC: &[u8; 4] = b"CVDH";
pub const CODE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodes {
    bits: usize,
    n: usize,
    blob: Vec<u8>,
}

#[inline]
pub fn bytes_per_code(bits: usize) -> usize {
    bits.div_ceil(8)
}

/// Pack one `±1` code.
pub fn pack_signs(code: &[i8]) -> Result<Vec<u8>> {
    let mut out = vec![0u8; bytes_per_code(code.len())];
    for (j, &b) in code.iter().enumerate() {
        match b {
            1 => out[j / 8] |= 0x80 >> (j % 8),
            -1 => {}
            other => return Err(Error::invalid(format!("code entry {other} is not ±1"))),
        }
    }
    Ok(out)
}

impl PackedCodes {
    pub fn from_blob(bits: usize, n: usize, blob: Vec<u8>) -> Result<Self> {
        let per = bytes_per_code(bits);
        if blob.len() != n * per {
            return Err(Error::invalid(format!(
                "blob has {} bytes, expected {}",
                blob.len(),
                n * per
            )));
        }
        let pad = per * 8 - bits;
        if pad > 0 {
            let mask = (1u8 << pad) - 1;
            if blob.chunks_exact(per).any(|c| c[per - 1] & mask != 0) {
                return Err(Error::invalid("pad bits must be zero"));
            }
        }
        Ok(Self { bits, n, blob })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn blob(&self) -> &[u8] {
        &self.blob
    }

    pub fn code(&self, i: usize) -> &[u8] {
        let per = bytes_per_code(self.bits);
        &self.blob[i * per..(i + 1) * per]
    }

    /// Back to a `c × n` matrix of `±1`.
    pub fn unpack(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.bits, self.n, |j, i| {
            if self.code(i)[j / 8] & (0x80 >> (j % 8)) != 0 {
                1.0
            } else {
                -1.0
            }
        })
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(CODE_MAGIC)?;
        w.write_all(&CODE_VERSION.to_le_bytes())?;
        w.write_all(&(self.bits as u32).to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&self.blob)?;
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn read<R: Read>(mut r: R, path: &Path) -> Result<Self> {
        let mut header = [0u8; 20];
        r.read_exact(&mut header)
            .map_err(|_| Error::format(path, "truncated code header"))?;
        if &header[0..4] != CODE_MAGIC {
            return Err(Error::format(path, "bad magic, expected CVDH"));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != CODE_VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let bits = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let n = u64::from_le_bytes(header[12..20].try_into().unwrap()) as usize;
        let mut blob = Vec::new();
        r.read_to_end(&mut blob).map_err(|e| Error::io(path, e))?;
        Self::from_blob(bits, n, blob).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(f), path)
    }
}

/// Pack the columns of a `±1` matrix.
pub fn pack(v: &DMatrix<f64>) -> Result<PackedCodes> {
    let (bits, n) = v.shape();
    let per = bytes_per_code(bits);
    let mut blob = vec![0u8; n * per];
    for (i, column) in v.column_iter().enumerate() {
        let out = &mut blob[i * per..(i + 1) * per];
        for (j, &x) in column.iter().enumerate() {
            if x == 1.0 {
                out[j / 8] |= 0x80 >> (j % 8);
            } else if x != -1.0 {
                return Err(Error::invalid(format!("code entry {x} at ({j}, {i}) is not ±1")));
            }
        }
    }
    Ok(PackedCodes { bits, n, blob })
}

/// Popcount of `a XOR b`.
#[inline]
pub fn hamming(a: &[u8], b: &[u8]) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "packed code length",
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(hamming_unchecked(a, b))
}

#[inline]
fn hamming_unchecked(a: &[u8], b: &[u8]) -> u32 {
    let mut ac = a.chunks_exact(8);
    let mut bc = b.chunks_exact(8);
    let mut acc = 0;
    for (x, y) in (&mut ac).zip(&mut bc) {
        let x = u64::from_ne_bytes(x.try_into().unwrap());
        let y = u64::from_ne_bytes(y.try_into().unwrap());
        acc += (x ^ y).count_ones();
    }
    acc + ac
        .remainder()
        .iter()
        .zip(bc.remainder())
        .map(|(x, y)| (x ^ y).count_ones())
        .sum::<u32>()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    /// Position of the code in the index.
    pub id: usize,
    pub distance: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub hits: Vec<Hit>,
    /// `k` exceeded the index size; every code was returned.
    pub truncated: bool,
}

/// Exact top-`k` by Hamming distance, ties by ascending id.
pub fn query(index: &PackedCodes, q: &[u8], k: usize) -> Result<SearchResult> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let per = bytes_per_code(index.bits);
    if q.len() != per {
        return Err(Error::DimensionMismatch {
            context: "query code bytes",
            expected: per,
            found: q.len(),
        });
    }
    let n = index.len();
    let mut dists = vec![0u32; n];
    const CHUNK: usize = 4096;
    crate::par::for_each_chunk_mut(&mut dists, CHUNK, |ci, out| {
        for (o, d) in out.iter_mut().enumerate() {
            *d = hamming_unchecked(index.code(ci * CHUNK + o), q);
        }
    });
    let mut hits: Vec<Hit> = dists
        .into_iter()
        .enumerate()
        .map(|(id, distance)| Hit { id, distance })
        .collect();
    let key = |h: &Hit| (h.distance, h.id);
    let take = k.min(n);
    if take < n {
        hits.select_nth_unstable_by_key(take, key);
        hits.truncate(take);
    }
    hits.sort_unstable_by_key(key);
    Ok(SearchResult { hits, truncated: k > n })
}
