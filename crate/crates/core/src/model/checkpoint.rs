use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::adversary::Discriminators;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Vocoder};
use crate::numerics::{AdamW, AdamWConfig, ParamStore, Tensor};

const MAGIC: &[u8; 4] = b"BVCK";
pub const CHECKPOINT_VERSION: u16 = 1;
const WHAT: &str = "checkpoint";

/// Saved moment buffers of one optimizer, in parameter-store order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub name: String,
    pub step: u64,
    pub first: Vec<Tensor<f32>>,
    pub second: Vec<Tensor<f32>>,
}

impl OptimizerState {
    pub fn capture(name: &str, opt: &AdamW<f32>) -> Self {
        OptimizerState {
            name: name.to_string(),
            step: opt.step_count(),
            first: opt.first_moments().to_vec(),
            second: opt.second_moments().to_vec(),
        }
    }

    pub fn restore(&self, store: &ParamStore<f32>, config: AdamWConfig) -> Result<AdamW<f32>> {
        AdamW::from_state(store, config, self.step, self.first.clone(), self.second.clone())
    }
}

/// Contents of a "BVCK" file: architecture, step, named parameters of the
/// vocoder and (optionally) discriminators, optimizer states and an opaque
/// JSON training state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub step: u64,
    pub params: Vec<(String, Tensor<f32>)>,
    pub optimizers: Vec<OptimizerState>,
    pub train_state: Option<String>,
}

fn push_store(out: &mut Vec<(String, Tensor<f32>)>, store: &ParamStore<f32>) {
    out.extend(store.iter().map(|(_, p)| (p.name.clone(), (*p.value).clone())));
}

fn fill_store(store: &mut ParamStore<f32>, params: &[(String, Tensor<f32>)]) -> Result<()> {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.get(id).name.clone();
        let (_, t) = params.iter().find(|(n, _)| *n == name).ok_or_else(|| Error::Corrupt {
            what: WHAT,
            msg: format!("missing parameter {name}"),
        })?;
        store.set_value(id, t.clone()).map_err(|e| Error::Corrupt {
            what: WHAT,
            msg: format!("parameter {name}: {e}"),
        })?;
    }
    Ok(())
}

impl Checkpoint {
    pub fn new(vocoder: &Vocoder<f32>, discriminators: Option<&Discriminators<f32>>, step: u64) -> Self {
        let mut params = Vec::new();
        push_store(&mut params, &vocoder.params);
        if let Some(d) = discriminators {
            push_store(&mut params, &d.params);
        }
        Checkpoint {
            config: vocoder.config.clone(),
            step,
            params,
            optimizers: Vec::new(),
            train_state: None,
        }
    }

    /// Rebuilds the vocoder with the stored weights.
    pub fn vocoder(&self) -> Result<Vocoder<f32>> {
        let mut v = Vocoder::new(self.config.clone(), 0)?;
        fill_store(&mut v.params, &self.params)?;
        Ok(v)
    }

    pub fn has_discriminators(&self) -> bool {
        self.params.iter().any(|(n, _)| n.starts_with("disc."))
    }

    /// Rebuilds the discriminators, if their parameters were saved.
    pub fn discriminators(&self) -> Result<Option<Discriminators<f32>>> {
        if !self.has_discriminators() {
            return Ok(None);
        }
        let mut d = Discriminators::new(self.config.discriminator.clone(), 0)?;
        fill_store(&mut d.params, &self.params)?;
        Ok(Some(d))
    }

    pub fn optimizer(&self, name: &str) -> Option<&OptimizerState> {
        self.optimizers.iter().find(|o| o.name == name)
    }

    /// Errors unless the stored architecture matches `expected`.
    pub fn check_config(&self, expected: &ModelConfig) -> Result<()> {
        if self.config.digest() != expected.digest() {
            return Err(Error::DigestMismatch {
                expected: expected.digest_hex(),
                found: self.config.digest_hex(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        w.extend_from_slice(&self.config.digest());
        let json = serde_json::to_vec(&self.config).expect("config serializes");
        put_bytes(&mut w, &json);
        w.extend_from_slice(&self.step.to_le_bytes());
        w.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            put_str(&mut w, name);
            put_tensor(&mut w, t);
        }
        w.push(self.optimizers.len() as u8);
        for o in &self.optimizers {
            put_str(&mut w, &o.name);
            w.extend_from_slice(&o.step.to_le_bytes());
            w.extend_from_slice(&(o.first.len() as u32).to_le_bytes());
            for t in o.first.iter().chain(&o.second) {
                put_tensor(&mut w, t);
            }
        }
        put_bytes(&mut w, self.train_state.as_deref().unwrap_or("").as_bytes());
        let sum = Sha256::digest(&w);
        w.extend_from_slice(&sum);
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + 2 + 32 || &bytes[..4] != MAGIC {
            return Err(corrupt("not a BVCK checkpoint"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                what: WHAT,
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let (body, sum) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != sum {
            return Err(corrupt("checksum mismatch (truncated or damaged file)"));
        }
        let mut r = Reader { buf: body, pos: 6 };
        let digest = r.take(32)?.to_vec();
        let config: ModelConfig =
            serde_json::from_slice(r.bytes()?).map_err(|e| corrupt(&format!("config: {e}")))?;
        if config.digest().as_slice() != digest.as_slice() {
            return Err(corrupt("config digest does not match stored config"));
        }
        let step = r.u64()?;
        let n = r.u32()? as usize;
        let mut params = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            params.push((r.string()?, r.tensor()?));
        }
        let n_opt = r.take(1)?[0] as usize;
        let mut optimizers = Vec::with_capacity(n_opt);
        for _ in 0..n_opt {
            let name = r.string()?;
            let step = r.u64()?;
            let k = r.u32()? as usize;
            let first = (0..k).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
            let second = (0..k).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
            optimizers.push(OptimizerState {
                name,
                step,
                first,
                second,
            });
        }
        let state = r.bytes()?;
        let train_state = if state.is_empty() {
            None
        } else {
            Some(String::from_utf8(state.to_vec()).map_err(|_| corrupt("train state is not UTF-8"))?)
        };
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Checkpoint {
            config,
            step,
            params,
            optimizers,
            train_state,
        })
    }

    /// Writes atomically via a temporary file in the same directory.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("bvck.tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Saves vocoder (and discriminator) weights with the given step.
pub fn save_checkpoint(
    path: &Path,
    vocoder: &Vocoder<f32>,
    discriminators: Option<&Discriminators<f32>>,
    step: u64,
) -> Result<()> {
    Checkpoint::new(vocoder, discriminators, step).save(path)
}

/// Loads a checkpoint and rebuilds its vocoder.
pub fn load_checkpoint(path: &Path) -> Result<(Vocoder<f32>, Checkpoint)> {
    let ck = Checkpoint::load(path)?;
    Ok((ck.vocoder()?, ck))
}

fn corrupt(msg: &str) -> Error {
    Error::Corrupt {
        what: WHAT,
        msg: msg.to_string(),
    }
}

fn put_bytes(w: &mut Vec<u8>, b: &[u8]) {
    w.extend_from_slice(&(b.len() as u32).to_le_bytes());
    w.extend_from_slice(b);
}

fn put_str(w: &mut Vec<u8>, s: &str) {
    w.extend_from_slice(&(s.len() as u16).to_le_bytes());
    w.extend_from_slice(s.as_bytes());
}

fn put_tensor(w: &mut Vec<u8>, t: &Tensor<f32>) {
    w.push(t.ndim() as u8);
    for &d in t.shape() {
        w.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        w.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("unexpected end of data"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("name is not UTF-8"))
    }

    fn tensor(&mut self) -> Result<Tensor<f32>> {
        let ndim = self.take(1)?[0] as usize;
        let shape = (0..ndim).map(|_| Ok(self.u32()? as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(4).ok_or_else(|| corrupt("tensor too large"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(&shape, data).map_err(|e| corrupt(&e.to_string()))
    }
}
