//! Network checkpoints.
//!
//! A checkpoint is one ASCII header line
//! `INN1 <M> d=<d0,...,dM> L=<L0,...,L_{M-1}>\n` followed by every phase as
//! a little-endian `f64`, in (block, sequence, layer, path) order.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Network, NetworkArch};
use crate::error::{InnError, Result};

pub const CHECKPOINT_MAGIC: &str = "INN1";

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn encode_checkpoint(net: &Network) -> Vec<u8> {
    let arch = net.arch();
    let header = format!(
        "{CHECKPOINT_MAGIC} {} d={} L={}\n",
        arch.num_blocks(),
        join(arch.dims()),
        join(arch.depths())
    );
    let mut out = header.into_bytes();
    for p in net.flat_params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Network> {
    let bad = |why: String| InnError::BadCheckpoint(why);
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| bad("header is not UTF-8".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 4 || fields[0] != CHECKPOINT_MAGIC {
        return Err(bad(format!("unrecognized header {header:?}")));
    }
    let blocks: usize = fields[1]
        .parse()
        .map_err(|_| bad(format!("bad block count {:?}", fields[1])))?;
    let list = |field: &str, prefix: &str| -> Result<Vec<usize>> {
        field
            .strip_prefix(prefix)
            .ok_or_else(|| bad(format!("expected {prefix}… in header")))?
            .split(',')
            .map(|t| t.parse().map_err(|_| bad(format!("bad integer {t:?}"))))
            .collect()
    };
    let arch = NetworkArch::new(list(fields[2], "d=")?, list(fields[3], "L=")?)?;
    if arch.num_blocks() != blocks {
        return Err(bad("block count disagrees with dimension list".into()));
    }
    let body = &bytes[newline + 1..];
    let n = arch.param_count();
    if body.len() != 8 * n {
        return Err(bad(format!("expected {} phase bytes, found {}", 8 * n, body.len())));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut net = Network::zeros(arch);
    net.set_flat_params(&flat)?;
    Ok(net)
}

pub fn write_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_checkpoint(net))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Network> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::xavier_init;

    #[test]
    fn header_layout() {
        let arch = NetworkArch::new(vec![4, 2, 1], vec![2, 3]).unwrap();
        let bytes = encode_checkpoint(&Network::zeros(arch));
        assert!(bytes.starts_with(b"INN1 2 d=4,2,1 L=2,3\n"));
        assert_eq!(bytes.len(), "INN1 2 d=4,2,1 L=2,3\n".len() + 8 * (2 * 2 * 4 + 3 * 2));
    }

    #[test]
    fn round_trip_and_file_io() {
        let arch = NetworkArch::new(vec![8, 4, 2], vec![2, 2]).unwrap();
        let net = xavier_init(&arch, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        write_checkpoint(&net, &path).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.fingerprint(), net.fingerprint());
    }

    #[test]
    fn rejects_malformed() {
        let arch = NetworkArch::new(vec![4, 2], vec![1]).unwrap();
        let mut bytes = encode_checkpoint(&Network::zeros(arch));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode_checkpoint(&bytes).is_err());
        assert!(decode_checkpoint(b"INN1 2 d=4,2 L=1\n").is_err());
        assert!(decode_checkpoint(b"no newline").is_err());
    }
}
