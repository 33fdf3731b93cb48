//! Model parameters, initialization and the checkpoint format.
//!
//! # Checkpoint file
//!
//! Little-endian:
//!
//! | field | type |
//! |-------|------|
//! | magic | `b"MIMCNN\0\0"` |
//! | version | u32 (= 1) |
//! | n_conv_layers, kernel_h, kernel_w, filters, dense_width, heads, classes, input_h, input_w | 9 × u32 |
//! | n_params | u64 |
//! | parameters | `n_params` f64 in [`ParamLayout`] order |
//! | running mean, running variance | per conv layer: `filters` f64 mean then `filters` f64 variance |
//!
//! The sidecar metadata file is plain `key = value` text with `w`, `seed`,
//! `epochs` and `final_loss`.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::binio::{read_file, write_file, BinReader, BinWriter};
use crate::cnn::arch::{CnnArchitecture, ParamLayout};
use crate::config::{Dimension, KeyValues};
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

const MAGIC: &[u8; 8] = b"MIMCNN\0\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub arch: CnnArchitecture,
    pub layout: ParamLayout,
    /// All learnable parameters, laid out as described by `layout`.
    pub params: Vec<f64>,
    /// Batch-norm running mean per conv layer and channel.
    pub running_mean: Vec<Vec<f64>>,
    /// Batch-norm running variance per conv layer and channel.
    pub running_var: Vec<Vec<f64>>,
}

impl CnnModel {
    /// He-normal weights (variance `2/fan_in`) for conv and dense layers,
    /// a narrower `1/(4·fan_in)` for the output heads so the initial
    /// predictions are close to uniform, zero biases, γ = 1 and β = 0.
    pub fn init(arch: &CnnArchitecture, seed: u64) -> Result<CnnModel> {
        arch.validate()?;
        let layout = ParamLayout::new(arch);
        let mut params = vec![0.0; layout.total];
        let mut rng = substream(seed, Stream::Init, &[]);
        let mut fill = |params: &mut [f64], std: f64| {
            for p in params {
                let z: f64 = rng.sample(StandardNormal);
                *p = std * z;
            }
        };
        let (kh, kw) = arch.kernel;
        for conv in &layout.conv {
            let fan_in = conv.c_in * kh * kw;
            let n = conv.c_out * fan_in;
            fill(&mut params[conv.kernel..conv.kernel + n], (2.0 / fan_in as f64).sqrt());
            params[conv.gamma..conv.gamma + conv.c_out].fill(1.0);
        }
        let flat = arch.flat_features();
        fill(
            &mut params[layout.dense_w..layout.dense_w + arch.dense_width * flat],
            (2.0 / flat as f64).sqrt(),
        );
        fill(
            &mut params[layout.head_w..layout.head_b],
            (0.25 / arch.dense_width as f64).sqrt(),
        );
        let n_layers = arch.n_conv_layers;
        Ok(CnnModel {
            arch: arch.clone(),
            layout,
            params,
            running_mean: vec![vec![0.0; arch.filters]; n_layers],
            running_var: vec![vec![1.0; arch.filters]; n_layers],
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let a = &self.arch;
        let mut w = BinWriter::new(Vec::with_capacity(64 + 8 * self.params.len()));
        let write = |w: &mut BinWriter<Vec<u8>>| -> std::io::Result<()> {
            w.bytes(MAGIC)?;
            w.u32(VERSION)?;
            for v in [
                a.n_conv_layers,
                a.kernel.0,
                a.kernel.1,
                a.filters,
                a.dense_width,
                a.heads,
                a.classes,
                a.input_height,
                a.input_width,
            ] {
                w.u32(v as u32)?;
            }
            w.u64(self.params.len() as u64)?;
            w.f64s(&self.params)?;
            for (mean, var) in self.running_mean.iter().zip(&self.running_var) {
                w.f64s(mean)?;
                w.f64s(var)?;
            }
            Ok(())
        };
        write(&mut w).expect("writing to a Vec cannot fail");
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<CnnModel> {
        let mut r = BinReader::new(bytes, path);
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.malformed(format!("unsupported checkpoint version {version}")));
        }
        let mut fields = [0usize; 9];
        for f in fields.iter_mut() {
            *f = r.u32()? as usize;
        }
        let arch = CnnArchitecture {
            n_conv_layers: fields[0],
            kernel: (fields[1], fields[2]),
            filters: fields[3],
            dense_width: fields[4],
            heads: fields[5],
            classes: fields[6],
            input_height: fields[7],
            input_width: fields[8],
        };
        arch.validate().map_err(|e| r.malformed(e.to_string()))?;
        let layout = ParamLayout::new(&arch);
        let n_params = r.u64()? as usize;
        if n_params != layout.total {
            return Err(r.malformed(format!(
                "architecture needs {} parameters, file declares {n_params}",
                layout.total
            )));
        }
        let params = r.f64s(n_params)?;
        let mut running_mean = Vec::with_capacity(arch.n_conv_layers);
        let mut running_var = Vec::with_capacity(arch.n_conv_layers);
        for _ in 0..arch.n_conv_layers {
            running_mean.push(r.f64s(arch.filters)?);
            let var = r.f64s(arch.filters)?;
            if var.iter().any(|v| !(*v >= 0.0)) {
                return Err(r.malformed("negative running variance"));
            }
            running_var.push(var);
        }
        r.expect_end()?;
        Ok(CnnModel {
            arch,
            layout,
            params,
            running_mean,
            running_var,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<CnnModel> {
        CnnModel::from_bytes(&read_file(path)?, path)
    }
}

/// Sidecar metadata stored next to a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub w: usize,
    pub seed: u64,
    pub epochs: usize,
    pub final_loss: f64,
}

impl CheckpointMeta {
    pub fn to_text(&self) -> String {
        format!(
            "w = {}\nseed = {}\nepochs = {}\nfinal_loss = {:?}\n",
            self.w, self.seed, self.epochs, self.final_loss
        )
    }

    pub fn parse(text: &str) -> Result<CheckpointMeta> {
        let mut kv = KeyValues::parse(text)?;
        let missing = |k: &str| Error::InvalidInput(format!("checkpoint metadata lacks `{k}`"));
        let meta = CheckpointMeta {
            w: kv.take_u64("w")?.ok_or_else(|| missing("w"))? as usize,
            seed: kv.take_u64("seed")?.ok_or_else(|| missing("seed"))?,
            epochs: kv.take_u64("epochs")?.ok_or_else(|| missing("epochs"))? as usize,
            final_loss: kv
                .take_f64("final_loss", Dimension::Scalar)?
                .ok_or_else(|| missing("final_loss"))?,
        };
        kv.finish()?;
        Ok(meta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<CheckpointMeta> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CheckpointMeta::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CnnArchitecture {
        CnnArchitecture {
            dense_width: 8,
            ..CnnArchitecture::with_filters(2, 2, 8, 8, 10)
        }
    }

    #[test]
    fn init_is_seeded() {
        let a = CnnModel::init(&tiny(), 1).unwrap();
        let b = CnnModel::init(&tiny(), 1).unwrap();
        let c = CnnModel::init(&tiny(), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params, c.params);
        let conv = &a.layout.conv[0];
        assert!(a.params[conv.gamma..conv.gamma + 2].iter().all(|&g| g == 1.0));
        assert!(a.params[conv.beta..conv.beta + 2].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut model = CnnModel::init(&tiny(), 5).unwrap();
        model.running_mean[1][0] = 0.25;
        model.running_var[3][1] = 2.5;
        let bytes = model.to_bytes();
        let path = Path::new("mem.ckpt");
        let back = CnnModel::from_bytes(&bytes, path).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_bytes(), bytes);
        assert!(CnnModel::from_bytes(&bytes[..bytes.len() - 8], path).is_err());
    }

    #[test]
    fn metadata_round_trip() {
        let meta = CheckpointMeta {
            w: 10,
            seed: 42,
            epochs: 100,
            final_loss: 0.123456789,
        };
        assert_eq!(CheckpointMeta::parse(&meta.to_text()).unwrap(), meta);
        assert!(CheckpointMeta::parse("w = 3\n").is_err());
    }
}
