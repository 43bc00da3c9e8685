//! `MIDN` network checkpoints.
//!
//! Layout: magic `"MIDN"`, version `u16`, layer count `K` as `u32`, the `K+1`
//! layer widths as `u32`, then each `W^k` row-major as `f32`. All integers and
//! floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::MlpNetwork;
use crate::tensor::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"MIDN";
const VERSION: u16 = 1;
const MAX_LAYERS: u32 = 1024;

pub fn write_checkpoint<W: Write>(net: &MlpNetwork<f32>, mut out: W) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(net.depth() as u32).to_le_bytes())?;
    for d in net.dims() {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for w in net.weights() {
        for v in w.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()
}

pub fn save_checkpoint(net: &MlpNetwork<f32>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(net, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8], path: &Path, what: &str) -> Result<()> {
    input
        .read_exact(buf)
        .map_err(|_| Error::format(path, format!("truncated checkpoint while reading {what}")))
}

fn read_u32<R: Read>(input: &mut R, path: &Path, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(input, &mut b, path, what)?;
    Ok(u32::from_le_bytes(b))
}

/// Parses a checkpoint; `path` is only used in error messages.
pub fn read_checkpoint<R: Read>(mut input: R, path: &Path) -> Result<MlpNetwork<f32>> {
    let mut magic = [0u8; 4];
    read_exact(&mut input, &mut magic, path, "magic")?;
    if &magic != MAGIC {
        return Err(Error::format(path, format!("bad magic {magic:?}, expected \"MIDN\"")));
    }
    let mut version = [0u8; 2];
    read_exact(&mut input, &mut version, path, "version")?;
    let version = u16::from_le_bytes(version);
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let layers = read_u32(&mut input, path, "layer count")?;
    if !(2..=MAX_LAYERS).contains(&layers) {
        return Err(Error::format(path, format!("implausible layer count {layers}")));
    }
    let dims = (0..=layers)
        .map(|_| read_u32(&mut input, path, "dims").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut weights = Vec::with_capacity(layers as usize);
    for pair in dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let mut raw = vec![0u8; fan_in * fan_out * 4];
        read_exact(&mut input, &mut raw, path, "weights")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        weights.push(Tensor::new(vec![fan_out, fan_in], data).map_err(|e| Error::format(path, e.to_string()))?);
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::format(path, "trailing bytes after weights"));
    }
    MlpNetwork::from_weights(weights)
}

pub fn load_checkpoint(path: &Path) -> Result<MlpNetwork<f32>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let net = MlpNetwork::<f32>::init(&[3, 4, 2], 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"MIDN");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 1);
        assert_eq!(u32::from_le_bytes(buf[6..10].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 10 + 3 * 4 + (12 + 8) * 4);
        let first = f32::from_le_bytes(buf[22..26].try_into().unwrap());
        assert_eq!(first, net.weights()[0].data()[0]);
        let back = read_checkpoint(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let net = MlpNetwork::<f32>::init(&[3, 4, 2], 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        let p = Path::new("mem");
        assert!(read_checkpoint(&buf[..buf.len() - 1], p).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(bad.as_slice(), p).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice(), p).is_err());
    }
}
