//! Checkpoint files.
//!
//! Layout (little-endian): magic `A3CK`, `u32` version 1, `u8` phase,
//! `f64` training OA, `u64` length + UTF-8 TOML config echo, `u32` record
//! count, then per record `u32` name length, name, `u8` trainable flag,
//! `u64` length and one embedded tensor file.

use std::path::Path;

use super::config::NetworkConfig;
use super::model::Network;
use crate::data::io::{encode_tensor, write_atomic, Dtype, Reader};
use crate::error::{Error, FormatError, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"A3CK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub phase: u8,
    /// Training OA (percent) logged when the checkpoint was written.
    pub train_oa: f64,
    pub config: NetworkConfig,
    pub params: Vec<(String, bool, Tensor)>,
}

impl Checkpoint {
    pub fn of(net: &Network, phase: u8, train_oa: f64) -> Self {
        Checkpoint {
            phase,
            train_oa,
            config: net.config.clone(),
            params: net
                .store
                .entries()
                .iter()
                .map(|e| (e.name.clone(), e.trainable, e.value.clone()))
                .collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(self.phase);
        out.extend_from_slice(&self.train_oa.to_le_bytes());
        let cfg = self.config.to_toml();
        out.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
        out.extend_from_slice(cfg.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, trainable, t) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(*trainable as u8);
            let bytes = encode_tensor(t, Dtype::F64);
            out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
            out.extend_from_slice(&bytes);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(FormatError::UnsupportedVersion(version).into());
        }
        let phase = r.u8()?;
        let train_oa = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let len = usize::try_from(r.u64()?).map_err(|_| FormatError::Malformed("config length".into()))?;
        let text =
            std::str::from_utf8(r.take(len)?).map_err(|_| FormatError::Malformed("config is not UTF-8".into()))?;
        let config = NetworkConfig::from_toml(text)?;
        let count = r.u32()?;
        let mut params = Vec::new();
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(n)?)
                .map_err(|_| FormatError::Malformed("parameter name is not UTF-8".into()))?
                .to_string();
            let trainable = r.u8()? != 0;
            let len = usize::try_from(r.u64()?).map_err(|_| FormatError::Malformed("record length".into()))?;
            let start = r.pos;
            let t = r.tensor()?;
            if r.pos - start != len {
                return Err(FormatError::Malformed(format!("{name}: record length {len}")).into());
            }
            params.push((name, trainable, t));
        }
        if r.remaining() > 0 {
            return Err(FormatError::TrailingBytes(r.remaining()).into());
        }
        Ok(Checkpoint {
            phase,
            train_oa,
            config,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::decode(&bytes)
    }

    /// Copies stored parameters into `net` by name.
    pub fn restore_into(&self, net: &mut Network) -> Result<()> {
        net.store.restore(self.params.iter().map(|(n, _, t)| (n.as_str(), t)))
    }

    /// Rebuilds the network described by the config echo.
    pub fn to_network(&self) -> Result<Network> {
        let mut net = Network::new(self.config.clone())?;
        self.restore_into(&mut net)?;
        Ok(net)
    }
}
