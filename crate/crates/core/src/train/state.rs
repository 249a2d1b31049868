//! Optimizer state saved next to each checkpoint so a run can be resumed.
//!
//! Layout mirrors the checkpoint format: magic `DST1`, a little-endian `u32`
//! header length, a UTF-8 header, then the first and second Adam moments as
//! little-endian `f32` in parameter order. Floats in the header use Rust's
//! shortest round-trip formatting, so values are restored exactly.

use std::path::Path;

use super::{EpochRecord, StepRecord, TrainLog};
use crate::error::{Error, Result};
use crate::frame::write_atomic;
use crate::tensor::AdamState;

pub const STATE_MAGIC: &[u8; 4] = b"DST1";

/// Everything besides the weights needed to continue a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub next_epoch: usize,
    pub global_step: usize,
    pub adam: AdamState<f32>,
    pub log: TrainLog,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl TrainState {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = format!(
            "next_epoch={}\nglobal_step={}\nadam_step={}\n",
            self.next_epoch, self.global_step, self.adam.step
        );
        for m in &self.adam.m {
            header.push_str(&format!("moment {}\n", m.len()));
        }
        for r in &self.log.epochs {
            header.push_str(&format!(
                "epoch {} {:?} {:?} {:?} {:?} {:?}\n",
                r.epoch, r.loss_total, r.loss_inter, r.loss_final, r.lambda, r.lr
            ));
        }
        for s in &self.log.steps {
            header.push_str(&format!("step {} {} {:?}\n", s.epoch, s.step, s.loss_total));
        }
        let mut out = Vec::with_capacity(8 + header.len());
        out.extend_from_slice(STATE_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for buf in self.adam.m.iter().chain(&self.adam.v) {
            for v in buf {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != STATE_MAGIC {
            return Err(bad("missing DST1 magic"));
        }
        let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let header = bytes.get(8..8 + len).ok_or_else(|| bad("truncated state header"))?;
        let header = std::str::from_utf8(header).map_err(|_| bad("state header is not UTF-8"))?;
        let mut data = &bytes[8 + len..];

        let mut state = TrainState { next_epoch: 0, global_step: 0, adam: AdamState::default(), log: TrainLog::default() };
        let mut sizes = Vec::new();
        for line in header.lines() {
            let fail = || bad(format!("bad state line `{line}`"));
            let num = |s: Option<&str>| -> Result<f64> { s.ok_or_else(fail)?.parse().map_err(|_| fail()) };
            let int = |s: Option<&str>| -> Result<usize> { s.ok_or_else(fail)?.parse().map_err(|_| fail()) };
            if let Some((key, value)) = line.split_once('=') {
                let v: u64 = value.parse().map_err(|_| fail())?;
                match key {
                    "next_epoch" => state.next_epoch = v as usize,
                    "global_step" => state.global_step = v as usize,
                    "adam_step" => state.adam.step = v,
                    _ => return Err(fail()),
                }
                continue;
            }
            let mut parts = line.split(' ');
            match parts.next() {
                Some("moment") => sizes.push(int(parts.next())?),
                Some("epoch") => state.log.epochs.push(EpochRecord {
                    epoch: int(parts.next())?,
                    loss_total: num(parts.next())?,
                    loss_inter: num(parts.next())?,
                    loss_final: num(parts.next())?,
                    lambda: num(parts.next())?,
                    lr: num(parts.next())?,
                }),
                Some("step") => state.log.steps.push(StepRecord {
                    epoch: int(parts.next())?,
                    step: int(parts.next())?,
                    loss_total: num(parts.next())?,
                }),
                _ => return Err(fail()),
            }
        }
        let mut take = |n: usize| -> Result<Vec<f32>> {
            if data.len() < 4 * n {
                return Err(bad("truncated moment data"));
            }
            let v = data[..4 * n].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
            data = &data[4 * n..];
            Ok(v)
        };
        state.adam.m = sizes.iter().map(|&n| take(n)).collect::<Result<_>>()?;
        state.adam.v = sizes.iter().map(|&n| take(n)).collect::<Result<_>>()?;
        if !data.is_empty() {
            return Err(bad(format!("{} trailing bytes after moment data", data.len())));
        }
        Ok(state)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
