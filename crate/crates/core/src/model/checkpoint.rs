//! `DIN1` checkpoint files.
//!
//! Layout: the 4-byte magic `DIN1`, a little-endian `u32` header length, a
//! UTF-8 header, then every tensor as raw little-endian `f32` in header
//! order. The header holds one `key=value` line per config field followed by
//! one `tensor <name> <n>,<c>,<h>,<w>` line per tensor.

use std::io::{Read, Write};
use std::path::Path;

use super::{DinConfig, DinParams, Layer};
use crate::error::{Error, Result};
use crate::frame::write_atomic;
use crate::tensor::{Shape, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DIN1";

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn header(params: &DinParams<f32>) -> String {
    let c = params.config();
    let mut h = format!(
        "base_channels={}\ncis_blocks={}\nfms_base_blocks_pre={}\nfms_base_blocks_post={}\n\
         fms_down_blocks={}\nin_channels={}\nout_channels={}\n",
        c.base_channels,
        c.cis_blocks,
        c.fms_base_blocks_pre,
        c.fms_base_blocks_post,
        c.fms_down_blocks,
        c.in_channels,
        c.out_channels
    );
    for layer in params.layers() {
        for (suffix, t) in [("weight", &layer.weight), ("bias", &layer.bias)] {
            let [n, ch, hh, w] = t.shape().dims();
            h.push_str(&format!("tensor {}.{suffix} {n},{ch},{hh},{w}\n", layer.name));
        }
    }
    h
}

pub fn write_checkpoint(params: &DinParams<f32>, mut out: impl Write) -> Result<()> {
    let header = header(params);
    let io = |e| Error::io("<checkpoint>", e);
    out.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    out.write_all(&(header.len() as u32).to_le_bytes()).map_err(io)?;
    out.write_all(header.as_bytes()).map_err(io)?;
    let mut buf = Vec::with_capacity(params.param_count() * 4);
    for t in params.tensors() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(io)
}

pub fn read_checkpoint(mut input: impl Read) -> Result<DinParams<f32>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| Error::io("<checkpoint>", e))?;
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("missing DIN1 magic"));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let header = bytes
        .get(8..8 + header_len)
        .ok_or_else(|| bad("truncated header"))?;
    let header = std::str::from_utf8(header).map_err(|_| bad("header is not UTF-8"))?;
    let mut data = &bytes[8 + header_len..];

    let mut config = DinConfig::reference();
    let mut tensors: Vec<(String, Shape)> = Vec::new();
    for line in header.lines() {
        if let Some(rest) = line.strip_prefix("tensor ") {
            let (name, dims) = rest.split_once(' ').ok_or_else(|| bad(format!("bad tensor line `{line}`")))?;
            let d: Vec<usize> = dims
                .split(',')
                .map(|v| v.parse().map_err(|_| bad(format!("bad shape in `{line}`"))))
                .collect::<Result<_>>()?;
            if d.len() != 4 {
                return Err(bad(format!("shape must have 4 dims in `{line}`")));
            }
            tensors.push((name.to_string(), Shape::new(d[0], d[1], d[2], d[3])?));
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| bad(format!("bad header line `{line}`")))?;
        let value: usize = value.parse().map_err(|_| bad(format!("bad value in `{line}`")))?;
        let slot = match key {
            "base_channels" => &mut config.base_channels,
            "cis_blocks" => &mut config.cis_blocks,
            "fms_base_blocks_pre" => &mut config.fms_base_blocks_pre,
            "fms_base_blocks_post" => &mut config.fms_base_blocks_post,
            "fms_down_blocks" => &mut config.fms_down_blocks,
            "in_channels" => &mut config.in_channels,
            "out_channels" => &mut config.out_channels,
            other => return Err(bad(format!("unknown header key `{other}`"))),
        };
        *slot = value;
    }
    config.validate()?;

    let mut take = |shape: Shape| -> Result<Tensor<f32>> {
        let n = shape.numel() * 4;
        if data.len() < n {
            return Err(bad("truncated weight data"));
        }
        let values = data[..n]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        data = &data[n..];
        Tensor::new(shape, values)
    };
    if !tensors.len().is_multiple_of(2) {
        return Err(bad("tensor list must pair weights and biases"));
    }
    let mut layers = Vec::with_capacity(tensors.len() / 2);
    for pair in tensors.chunks_exact(2) {
        let (wname, wshape) = &pair[0];
        let (bname, bshape) = &pair[1];
        let name = wname
            .strip_suffix(".weight")
            .filter(|n| bname.strip_suffix(".bias") == Some(n))
            .ok_or_else(|| bad(format!("expected <layer>.weight then <layer>.bias, got {wname}, {bname}")))?;
        let weight = take(*wshape)?;
        let bias = take(*bshape)?;
        layers.push(Layer { name: name.to_string(), weight, bias });
    }
    if !data.is_empty() {
        return Err(bad(format!("{} trailing bytes after weight data", data.len())));
    }
    DinParams::from_layers(config, layers).map_err(|e| bad(e.to_string()))
}

pub fn save_checkpoint(params: &DinParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(params, &mut buf)?;
    write_atomic(path.as_ref(), &buf)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DinParams<f32>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}
