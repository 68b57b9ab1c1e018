//! Binary checkpoint: a text header line, a text metadata line, then
//! little-endian f64 parameters in declaration order, optionally followed by
//! the optimizer state.

use std::fs;
use std::path::Path;

use super::{AdamConfig, AdamState, ModelParams, NetShape};
use crate::{Error, Result};

pub const CHECKPOINT_HEADER: &str = "SUGDG-CKPT v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub class_names: Vec<String>,
    pub adam: Option<AdamState>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = self.params.shape();
        let join = |w: &[usize]| w.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let meta = format!(
            "embed={} head={} trained={} classes={} params={} adam={}",
            join(&shape.embed),
            join(&shape.head),
            u8::from(self.params.trained),
            self.class_names.join(","),
            self.params.len(),
            u8::from(self.adam.is_some())
        );
        let mut out = format!("{CHECKPOINT_HEADER}\n{meta}\n").into_bytes();
        for v in self.params.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(a) = &self.adam {
            out.extend_from_slice(&a.step.to_le_bytes());
            out.extend_from_slice(&a.skipped.to_le_bytes());
            let c = &a.config;
            for v in [c.lr, c.beta1, c.beta2, c.eps, c.weight_decay] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for v in a.m.iter().chain(&a.v) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, rest) = split_line(bytes).ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
        if header != CHECKPOINT_HEADER.as_bytes() {
            return Err(Error::Checkpoint(format!(
                "expected '{CHECKPOINT_HEADER}', found '{}'",
                String::from_utf8_lossy(header)
            )));
        }
        let (meta, mut body) = split_line(rest).ok_or_else(|| Error::Checkpoint("truncated metadata".into()))?;
        let meta = std::str::from_utf8(meta).map_err(|_| Error::Checkpoint("metadata is not utf-8".into()))?;
        let field = |key: &str| -> Result<&str> {
            meta.split(' ')
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| Error::Checkpoint(format!("metadata lacks '{key}'")))
        };
        let widths = |s: &str| -> Result<Vec<usize>> {
            s.split(',')
                .map(|w| w.parse().map_err(|_| Error::Checkpoint(format!("bad width '{w}'"))))
                .collect()
        };
        let shape = NetShape {
            embed: widths(field("embed")?)?,
            head: widths(field("head")?)?,
        };
        shape.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        let trained = field("trained")? == "1";
        let classes = field("classes")?;
        let class_names: Vec<String> = classes.split(',').map(str::to_string).collect();
        if class_names.len() != shape.num_classes() {
            return Err(Error::Checkpoint("class list does not match output width".into()));
        }
        let count: usize = field("params")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad parameter count".into()))?;
        if count != shape.param_count() {
            return Err(Error::Checkpoint("parameter count does not match widths".into()));
        }
        let has_adam = field("adam")? == "1";
        let expected = 8 * count + if has_adam { 8 * (2 + 5 + 2 * count) } else { 0 };
        if body.len() != expected {
            return Err(Error::Checkpoint(format!(
                "payload is {} bytes, expected {expected} (truncated or corrupt)",
                body.len()
            )));
        }
        let mut take_f64 = |n: usize| -> Vec<f64> {
            let (head, tail) = body.split_at(8 * n);
            body = tail;
            head.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect()
        };
        let values = take_f64(count);
        let mut params = ModelParams::from_values(shape, values).map_err(|e| Error::Checkpoint(e.to_string()))?;
        params.trained = trained;
        let adam = if has_adam {
            let counters = take_f64(2);
            let (step, skipped) = (counters[0].to_bits(), counters[1].to_bits());
            let h = take_f64(5);
            let m = take_f64(count);
            let v = take_f64(count);
            Some(AdamState {
                config: AdamConfig {
                    lr: h[0],
                    beta1: h[1],
                    beta2: h[2],
                    eps: h[3],
                    weight_decay: h[4],
                },
                m,
                v,
                step,
                skipped,
            })
        } else {
            None
        };
        Ok(Checkpoint {
            params,
            class_names,
            adam,
        })
    }
}

fn split_line(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let nl = bytes.iter().position(|&b| b == b'\n')?;
    Some((&bytes[..nl], &bytes[nl + 1..]))
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(bad) = checkpoint
        .class_names
        .iter()
        .find(|n| n.is_empty() || n.contains([',', ' ', '\n', '=']))
    {
        return Err(Error::Checkpoint(format!("class name '{bad}' cannot be stored")));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, checkpoint.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
