//! Low-rank adapters over weight matrices of the backbone and the decoder.

use serde::{Deserialize, Serialize};

use super::{Model, BACKBONE, DECODER};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoraSpec {
    pub rank: usize,
    pub alpha: f64,
}

impl LoraSpec {
    pub fn new(rank: usize, alpha: f64) -> Result<Self> {
        if rank == 0 || !(alpha.is_finite()) {
            return Err(Error::Config("LoRA rank must be >= 1 and alpha finite".into()));
        }
        Ok(Self { rank, alpha })
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

/// Weight matrices that receive adapters in `group`. Biases, embeddings and positional tables are excluded.
pub fn targets(model: &Model, group: &str) -> Result<Vec<String>> {
    match group {
        BACKBONE => Ok(vec!["patch_proj".into()]),
        DECODER => {
            let mut v = Vec::new();
            for l in 0..model.cfg.decoder_layers {
                for n in ["wq", "wk", "wv", "wo", "w1", "w2"] {
                    v.push(format!("l{}.{}", l, n));
                }
            }
            v.push("head".into());
            Ok(v)
        }
        other => Err(Error::Config(format!("group {:?} does not take adapters", other))),
    }
}

impl Model {
    /// Attach fresh adapters (`B = 0`) to every target of `group`.
    pub fn lora_wrap(&mut self, group: &str, spec: LoraSpec, seed: u64) -> Result<()> {
        let ad_group = format!("{}-adapters", group);
        if self.lora.contains_key(&ad_group) || self.params.group(&ad_group).is_some() {
            return Err(Error::Config(format!("{} is already wrapped", group)));
        }
        let names = targets(self, group)?;
        for n in &names {
            let (m, k) = self.params.get(group, n)?.shape();
            if spec.rank > m.min(k) {
                return Err(Error::Config(format!(
                    "LoRA rank {} exceeds min dimension of {}/{} ({}x{})",
                    spec.rank, group, n, m, k
                )));
            }
        }
        let mut tensors = Vec::new();
        for n in &names {
            let (m, k) = self.params.get(group, n)?.shape();
            let mut r = rng::stream(seed, &format!("lora/{}/{}", group, n));
            let bound = (1.0 / k as f64).sqrt();
            let a: Vec<f64> = (0..spec.rank * k).map(|_| rand::Rng::gen_range(&mut r, -bound..bound)).collect();
            tensors.push((format!("{}.a", n), Tensor::from_vec(spec.rank, k, a)?));
            tensors.push((format!("{}.b", n), Tensor::zeros(m, spec.rank)));
        }
        let g = self.params.add_group(&ad_group)?;
        for (n, t) in tensors {
            g.insert(n, t)?;
        }
        self.lora.insert(ad_group, spec);
        Ok(())
    }

    /// Fold `(alpha/r) B A` into the base weights and drop the adapters.
    pub fn lora_merge(&mut self, group: &str) -> Result<()> {
        let ad_group = format!("{}-adapters", group);
        if !self.lora.contains_key(&ad_group) {
            return Err(Error::Contract(format!("{} has no active adapters", group)));
        }
        for n in targets(self, group)? {
            let merged = self.weight(&self.params, group, &n)?;
            let frozen = Tensor::from_vec(merged.rows(), merged.cols(), merged.data().to_vec())?;
            self.params.set(group, &n, frozen)?;
        }
        self.params.remove_group(&ad_group);
        self.lora.remove(&ad_group);
        Ok(())
    }
}
