//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SDD2"
//! 4       4     format version (u32) = 1
//! 8       4     frame_len (u32)
//! 12      1     input layout (0 = width, 1 = channels)
//! 13      4     conv1 filters (u32)
//! 17      8     conv1 kernel h, w (u32 each)
//! 25      8     pool1 h, w
//! 33      4     conv2 filters
//! 37      8     conv2 kernel h, w
//! 45      8     pool2 h, w
//! 53      8     dropout p (f64)
//! 61      8     batchnorm eps (f64)
//! 69      8     batchnorm momentum (f64)
//! 77      4     tensor count (u32)
//! 81      ...   tensor records
//! ```
//!
//! Each tensor record is `name_len: u32`, `name: UTF-8`, `rank: u32`,
//! `dims: u32 × rank`, then `prod(dims)` f64 values in row-major order.
//! Records appear in [`Network::named_tensors`] order. Optimizer state is
//! not stored; a loaded network starts with fresh default Adam moments.

use std::path::Path;

use super::network::TENSOR_NAMES;
use super::{AdamConfig, ArchConfig, InputLayout, Network};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SDD2";
pub const VERSION: u32 = 1;

pub fn encode(net: &Network) -> Vec<u8> {
    let a = net.arch();
    let mut out = Vec::with_capacity(16 + net.scalar_count() * 8 + 1024);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, a.frame_len as u32);
    out.push(match a.layout {
        InputLayout::Width => 0,
        InputLayout::Channels => 1,
    });
    put_u32(&mut out, a.conv1_filters as u32);
    a.conv1_kernel
        .iter()
        .chain(&a.pool1)
        .for_each(|&v| put_u32(&mut out, v as u32));
    put_u32(&mut out, a.conv2_filters as u32);
    a.conv2_kernel
        .iter()
        .chain(&a.pool2)
        .for_each(|&v| put_u32(&mut out, v as u32));
    for v in [a.dropout, a.bn_eps, a.bn_momentum] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let tensors = net.named_tensors();
    put_u32(&mut out, tensors.len() as u32);
    for (name, t) in tensors {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rank() as u32);
        t.shape().iter().for_each(|&d| put_u32(&mut out, d as u32));
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            offset: self.pos,
            reason: reason.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return self.fail(format!("truncated while reading {what}"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        Ok(self.u32(what)? as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn pair(&mut self, what: &str) -> Result<[usize; 2]> {
        Ok([self.usize(what)?, self.usize(what)?])
    }
}

pub fn decode(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        r.pos = 0;
        return r.fail("bad magic, not an SDD2 checkpoint");
    }
    let version = r.u32("version")?;
    if version != VERSION {
        r.pos -= 4;
        return r.fail(format!("unsupported format version {version}"));
    }
    let frame_len = r.usize("frame_len")?;
    let layout = match r.take(1, "layout")?[0] {
        0 => InputLayout::Width,
        1 => InputLayout::Channels,
        other => {
            r.pos -= 1;
            return r.fail(format!("unknown input layout {other}"));
        }
    };
    let arch = ArchConfig {
        frame_len,
        layout,
        conv1_filters: r.usize("conv1 filters")?,
        conv1_kernel: r.pair("conv1 kernel")?,
        pool1: r.pair("pool1")?,
        conv2_filters: r.usize("conv2 filters")?,
        conv2_kernel: r.pair("conv2 kernel")?,
        pool2: r.pair("pool2")?,
        dropout: r.f64("dropout")?,
        bn_eps: r.f64("bn eps")?,
        bn_momentum: r.f64("bn momentum")?,
    };
    let header_end = r.pos;
    // Template with the right shapes; every tensor is overwritten below.
    let mut net = Network::new(arch.clone(), AdamConfig::default(), &mut crate::Rng::new(0))
        .map_err(|e| Error::Format {
            offset: header_end,
            reason: format!("invalid architecture header: {e}"),
        })?;

    let count = r.usize("tensor count")?;
    if count != TENSOR_NAMES.len() {
        r.pos -= 4;
        return r.fail(format!(
            "expected {} tensors, found {count}",
            TENSOR_NAMES.len()
        ));
    }
    for (expected_name, slot) in net.named_tensors_mut() {
        let start = r.pos;
        let len = r.usize("name length")?;
        let name = std::str::from_utf8(r.take(len, "tensor name")?).map_err(|_| Error::Format {
            offset: start + 4,
            reason: "tensor name is not UTF-8".into(),
        })?;
        if name != expected_name {
            r.pos = start;
            return r.fail(format!("expected tensor '{expected_name}', found '{name}'"));
        }
        let rank = r.usize("rank")?;
        let dims_at = r.pos;
        let dims = (0..rank)
            .map(|_| r.usize("dims"))
            .collect::<Result<Vec<_>>>()?;
        if dims != slot.shape() {
            r.pos = dims_at;
            return r.fail(format!(
                "tensor '{name}' has dims {dims:?}, architecture needs {:?}",
                slot.shape()
            ));
        }
        for v in slot.data_mut() {
            *v = r.f64(name)?;
        }
    }
    if r.pos != bytes.len() {
        return r.fail(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(net)
}

pub fn save(net: &Network, path: &Path) -> Result<()> {
    std::fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Network> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
