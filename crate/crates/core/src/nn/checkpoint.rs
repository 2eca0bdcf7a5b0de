//! Final-state parameter checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes        | content                                  |
//! |--------------|------------------------------------------|
//! | 8            | magic `b"DBPINNCK"`                      |
//! | 4            | format version (`u32`, currently 1)      |
//! | 4            | number of layer sizes `L` (`u32`)        |
//! | 4 * L        | layer sizes (`u32` each)                 |
//! | 8            | optimizer step count (`u64`)             |
//! | 8            | parameter count `P` (`u64`)              |
//! | 8 * P        | parameters (`f64` bit patterns)          |

use std::path::Path;

use crate::error::{Error, Result};

use super::NetworkParams;

const MAGIC: &[u8; 8] = b"DBPINNCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub step: u64,
}

pub fn encode_checkpoint(params: &NetworkParams, step: u64) -> Vec<u8> {
    let sizes = params.layer_sizes();
    let mut out = Vec::with_capacity(32 + 4 * sizes.len() + 8 * params.total_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for &s in sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend_from_slice(&step.to_le_bytes());
    out.extend_from_slice(&(params.total_count() as u64).to_le_bytes());
    for v in params.values() {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let chunk = self.bytes.get(self.pos..self.pos + N)?;
        self.pos += N;
        chunk.try_into().ok()
    }
    fn u32(&mut self) -> Option<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }
    fn u64(&mut self) -> Option<u64> {
        self.take::<8>().map(u64::from_le_bytes)
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let bad = |message: &str| Error::Format {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let mut r = Reader { bytes, pos: 0 };
    if r.take::<8>().as_ref() != Some(MAGIC) {
        return Err(bad("bad magic"));
    }
    if r.u32() != Some(VERSION) {
        return Err(bad("unsupported version"));
    }
    let n_sizes = r.u32().ok_or_else(|| bad("truncated header"))? as usize;
    let mut sizes = Vec::with_capacity(n_sizes.min(64));
    for _ in 0..n_sizes {
        sizes.push(r.u32().ok_or_else(|| bad("truncated layer sizes"))? as usize);
    }
    let step = r.u64().ok_or_else(|| bad("truncated step"))?;
    let count = r.u64().ok_or_else(|| bad("truncated count"))? as usize;
    let mut values = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        values.push(f64::from_bits(r.u64().ok_or_else(|| bad("truncated parameters"))?));
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    let params = NetworkParams::from_values(&sizes, values)?;
    Ok(Checkpoint { params, step })
}

pub fn write_checkpoint(path: &Path, params: &NetworkParams, step: u64) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params, step)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_network;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(seed in any::<u64>(), hidden in 1usize..12, step in any::<u64>()) {
            let net = init_network(&[2, hidden, hidden, 1], seed).unwrap();
            let bytes = encode_checkpoint(&net, step);
            let ck = decode_checkpoint(&bytes, Path::new("mem")).unwrap();
            prop_assert_eq!(ck.step, step);
            prop_assert_eq!(ck.params.layer_sizes(), net.layer_sizes());
            let a: Vec<u64> = ck.params.values().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = net.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn rejects_truncation_and_garbage() {
        let net = init_network(&[2, 3, 1], 0).unwrap();
        let bytes = encode_checkpoint(&net, 10);
        let p = Path::new("mem");
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1], p).is_err());
        assert!(decode_checkpoint(b"NOTACKPT", p).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra, p).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        let net = init_network(&[2, 5, 1], 9).unwrap();
        write_checkpoint(&path, &net, 1234).unwrap();
        let ck = read_checkpoint(&path).unwrap();
        assert_eq!(ck.params, net);
        assert_eq!(ck.step, 1234);
    }
}
