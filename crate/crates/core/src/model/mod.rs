//! Toy multimodal GUI model.
//!
//! Pipeline for one sample: tile the screen, embed patches (backbone), project
//! to model width (align) and through three perceivers, fuse the perceiver
//! signals under the prompt with the two-stage attention gate, then decode
//! `[aligned image; fused signals; prompt; answer]` with a small causal
//! transformer.

pub mod config;
pub mod lora;
pub mod tiling;
pub mod vocab;

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::image::GrayImage;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{read_checkpoint, write_checkpoint, ParamStore, Tensor};

pub use config::{ModelConfig, PerceiverInit};
pub use lora::LoraSpec;
pub use vocab::{Tokenizer, EOS, OUTPUT_SYMBOLS, PAD};

pub const BACKBONE: &str = "backbone";
pub const BACKBONE_ADAPTERS: &str = "backbone-adapters";
pub const ALIGN: &str = "align";
pub const TXP: &str = "TxP";
pub const GAP: &str = "GaP";
pub const SAP: &str = "SaP";
pub const FG: &str = "FG";
pub const DECODER: &str = "decoder";
pub const DECODER_ADAPTERS: &str = "decoder-adapters";

/// Every group a model can carry.
pub const ALL_GROUPS: [&str; 9] = [
    BACKBONE,
    BACKBONE_ADAPTERS,
    ALIGN,
    TXP,
    GAP,
    SAP,
    FG,
    DECODER,
    DECODER_ADAPTERS,
];

const NORM_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Perceiver {
    Textual,
    Graphical,
    Spatial,
}

impl Perceiver {
    pub const ALL: [Perceiver; 3] = [Perceiver::Textual, Perceiver::Graphical, Perceiver::Spatial];

    pub fn group(&self) -> &'static str {
        match self {
            Perceiver::Textual => TXP,
            Perceiver::Graphical => GAP,
            Perceiver::Spatial => SAP,
        }
    }

    /// Single-letter label used in embedding exports.
    pub fn label(&self) -> &'static str {
        match self {
            Perceiver::Textual => "T",
            Perceiver::Graphical => "G",
            Perceiver::Spatial => "S",
        }
    }

    pub fn parse(s: &str) -> Result<Perceiver> {
        match s {
            "textual" | "T" | "TxP" => Ok(Perceiver::Textual),
            "graphical" | "G" | "GaP" => Ok(Perceiver::Graphical),
            "spatial" | "S" | "SaP" => Ok(Perceiver::Spatial),
            other => Err(Error::Contract(format!("unknown perceiver selector {:?}", other))),
        }
    }
}

/// Fusion gate weights, all `D x D`.
#[derive(Clone, Debug)]
pub struct FusionGateParams {
    pub wq_g: Tensor,
    pub wk_g: Tensor,
    pub wv_g: Tensor,
    pub wq_t: Tensor,
    pub wk_t: Tensor,
    pub wv_t: Tensor,
}

impl FusionGateParams {
    pub fn from_store(p: &ParamStore) -> Result<Self> {
        Ok(Self {
            wq_g: p.get(FG, "wq_g")?.clone(),
            wk_g: p.get(FG, "wk_g")?.clone(),
            wv_g: p.get(FG, "wv_g")?.clone(),
            wq_t: p.get(FG, "wq_t")?.clone(),
            wk_t: p.get(FG, "wk_t")?.clone(),
            wv_t: p.get(FG, "wv_t")?.clone(),
        })
    }
}

/// Scaled dot-product attention `softmax(q k^T / sqrt(D)) v` over the key axis.
fn attend(q: &Tensor, k: &Tensor, v: &Tensor, causal: bool) -> Result<Tensor> {
    let d = q.cols() as f64;
    let logits = q.matmul(&k.transpose())?.scale(1.0 / d.sqrt());
    let weights = if causal {
        logits.causal_softmax_rows()?
    } else {
        logits.softmax_rows()?
    };
    weights.matmul(v)
}

/// Two-stage gate. Returns the gating signal `G` (N x D) and fused features (N x D).
///
/// `G = softmax((I Wq_g)(Q Wk_g)^T / sqrt(D)) (Q Wv_g)`,
/// `X = softmax((G Wq_t)(X_f Wk_t)^T / sqrt(D)) (X_f Wv_t)`.
pub fn fusion_gate(ibar: &Tensor, q: &Tensor, xf: &Tensor, p: &FusionGateParams) -> Result<(Tensor, Tensor)> {
    if q.rows() == 0 {
        return Err(Error::Input("fusion gate needs a non-empty prompt".into()));
    }
    let d = ibar.cols();
    if q.cols() != d || xf.cols() != d {
        return Err(Error::shape(
            "fusion_gate",
            format!("widths {} / {} / {} disagree", d, q.cols(), xf.cols()),
        ));
    }
    let g = attend(&ibar.matmul(&p.wq_g)?, &q.matmul(&p.wk_g)?, &q.matmul(&p.wv_g)?, false)?;
    let x = attend(&g.matmul(&p.wq_t)?, &xf.matmul(&p.wk_t)?, &xf.matmul(&p.wv_t)?, false)?;
    Ok((g, x))
}

/// Sinusoidal position table, `len x d`.
pub fn positions(len: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; len * d];
    for t in 0..len {
        for i in 0..d / 2 {
            let freq = (10000f64).powf(-(2.0 * i as f64) / d as f64);
            data[t * d + 2 * i] = (t as f64 * freq).sin();
            data[t * d + 2 * i + 1] = (t as f64 * freq).cos();
        }
    }
    Tensor::from_vec(len, d, data).expect("shape matches")
}

/// Patches of one tiled screen plus their positional-table rows.
#[derive(Clone, Debug)]
pub struct ImageInput {
    /// `N x patch_side^2`, intensities scaled to `[0, 1]`.
    pub patches: Tensor,
    /// Row of the positional table for each patch.
    pub pos_index: Vec<usize>,
    pub grid: (u32, u32),
}

impl ImageInput {
    pub fn n(&self) -> usize {
        self.patches.rows()
    }
}

/// Intermediate tensors of the image/prompt front end.
#[derive(Clone, Debug)]
pub struct Front {
    pub ibar: Tensor,
    /// X_t, X_g, X_s.
    pub signals: [Tensor; 3],
    pub gate: Tensor,
    pub fused: Tensor,
    pub q: Tensor,
}

/// Tokenized training/eval example.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub image: ImageInput,
    pub prompt: Vec<usize>,
    pub answer: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    format: String,
    tool_version: String,
    vocab_fingerprint: String,
    model: ModelConfig,
    lora: BTreeMap<String, LoraSpec>,
    #[serde(default)]
    extra: serde_json::Value,
}

const CHECKPOINT_FORMAT: &str = "tgs-model";

#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ParamStore,
    /// Active adapters keyed by adapter group.
    pub lora: BTreeMap<String, LoraSpec>,
    tok: Tokenizer,
}

fn uniform(r: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| r.gen_range(-bound..bound)).collect();
    Tensor::from_vec(rows, cols, data).expect("shape matches")
}

fn xavier(seed: u64, stream: &str, rows: usize, cols: usize) -> Tensor {
    let mut r = rng::stream(seed, stream);
    uniform(&mut r, rows, cols, (6.0 / (rows + cols) as f64).sqrt())
}

impl Model {
    /// Fresh model; every tensor drawn from its own named stream of `seed`.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let tok = cfg.tokenizer()?;
        let (c, d, h) = (cfg.c, cfg.d, cfg.mlp_hidden);
        let mut p = ParamStore::new();
        let bb = p.add_group(BACKBONE)?;
        bb.insert("patch_proj", xavier(seed, "init/backbone/patch_proj", cfg.patch_len(), c))?;
        bb.insert("patch_bias", Tensor::zeros(1, c))?;
        let pos_rows = cfg.max_tiles as usize * cfg.patches_per_tile();
        let mut pr = rng::stream(seed, "init/backbone/pos");
        bb.insert("pos", uniform(&mut pr, pos_rows, c, 0.5))?;

        let mlp = |p: &mut ParamStore, group: &str, stream: &str| -> Result<()> {
            let g = p.add_group(group)?;
            g.insert("w1", xavier(seed, &format!("init/{}/w1", stream), c, d))?;
            g.insert("b1", Tensor::zeros(1, d))?;
            g.insert("w2", xavier(seed, &format!("init/{}/w2", stream), d, d))?;
            g.insert("b2", Tensor::zeros(1, d))?;
            Ok(())
        };
        mlp(&mut p, ALIGN, "align")?;
        for per in Perceiver::ALL {
            let stream = match cfg.perceiver_init {
                PerceiverInit::Shared => "perceiver".to_string(),
                PerceiverInit::Independent => per.group().to_string(),
            };
            mlp(&mut p, per.group(), &stream)?;
        }
        let fg = p.add_group(FG)?;
        for name in ["wq_g", "wk_g", "wv_g", "wq_t", "wk_t", "wv_t"] {
            fg.insert(name, xavier(seed, &format!("init/FG/{}", name), d, d))?;
        }
        let dec = p.add_group(DECODER)?;
        let mut er = rng::stream(seed, "init/decoder/embed");
        dec.insert("embed", uniform(&mut er, tok.len(), d, 1.0))?;
        for l in 0..cfg.decoder_layers {
            for name in ["wq", "wk", "wv", "wo"] {
                let key = format!("l{}.{}", l, name);
                dec.insert(key.clone(), xavier(seed, &format!("init/decoder/{}", key), d, d))?;
            }
            let k1 = format!("l{}.w1", l);
            dec.insert(k1.clone(), xavier(seed, &format!("init/decoder/{}", k1), d, h))?;
            let k2 = format!("l{}.w2", l);
            dec.insert(k2.clone(), xavier(seed, &format!("init/decoder/{}", k2), h, d))?;
        }
        dec.insert("head", xavier(seed, "init/decoder/head", d, OUTPUT_SYMBOLS))?;
        p.set_all_trainable(false);
        Ok(Self {
            cfg,
            params: p,
            lora: BTreeMap::new(),
            tok,
        })
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tok
    }

    /// Weight with any active adapter folded in: `W + (alpha/r) B A`.
    pub fn weight(&self, p: &ParamStore, group: &str, name: &str) -> Result<Tensor> {
        let base = p.get(group, name)?.clone();
        let ad_group = format!("{}-adapters", group);
        let Some(spec) = self.lora.get(&ad_group) else {
            return Ok(base);
        };
        let Some(adapters) = p.group(&ad_group) else {
            return Ok(base);
        };
        match (adapters.get(&format!("{}.a", name)), adapters.get(&format!("{}.b", name))) {
            (Some(a), Some(b)) => base.add(&b.matmul(a)?.scale(spec.scale())),
            _ => Ok(base),
        }
    }

    /// Tile and flatten a screen into patches.
    pub fn image_input(&self, img: &GrayImage, max_tiles: u32) -> Result<ImageInput> {
        if max_tiles > self.cfg.max_tiles {
            return Err(Error::Config(format!(
                "max_tiles {} exceeds the model's {}",
                max_tiles, self.cfg.max_tiles
            )));
        }
        let (tiles, grid) = tiling::tile_image(img, self.cfg.tile_side, max_tiles)?;
        let ps = self.cfg.patch_side;
        let per_side = self.cfg.tile_side / ps;
        let ppt = self.cfg.patches_per_tile();
        let mut data = Vec::with_capacity(tiles.len() * ppt * self.cfg.patch_len());
        let mut pos_index = Vec::new();
        for (ti, t) in tiles.iter().enumerate() {
            for py in 0..per_side {
                for px in 0..per_side {
                    for y in 0..ps {
                        for x in 0..ps {
                            data.push(t.get(px * ps + x, py * ps + y) as f64 / 255.0);
                        }
                    }
                    pos_index.push(ti * ppt + (py * per_side + px) as usize);
                }
            }
        }
        let n = pos_index.len();
        Ok(ImageInput {
            patches: Tensor::from_vec(n, self.cfg.patch_len(), data)?,
            pos_index,
            grid,
        })
    }

    /// Patch projection plus positional embedding, `N x C`.
    pub fn encode_backbone(&self, p: &ParamStore, x: &ImageInput) -> Result<Tensor> {
        let w = self.weight(p, BACKBONE, "patch_proj")?;
        let pos = p.get(BACKBONE, "pos")?.gather_rows(&x.pos_index)?;
        x.patches
            .matmul(&w)?
            .add_row(p.get(BACKBONE, "patch_bias")?)?
            .add(&pos)
    }

    fn mlp(&self, p: &ParamStore, group: &str, x: &Tensor) -> Result<Tensor> {
        let h = x.matmul(p.get(group, "w1")?)?.add_row(p.get(group, "b1")?)?.gelu();
        h.matmul(p.get(group, "w2")?)?.add_row(p.get(group, "b2")?)
    }

    /// Alignment projector, `N x C -> N x D`.
    pub fn align(&self, p: &ParamStore, i: &Tensor) -> Result<Tensor> {
        self.mlp(p, ALIGN, i)
    }

    pub fn perceive(&self, p: &ParamStore, i: &Tensor, which: Perceiver) -> Result<Tensor> {
        self.mlp(p, which.group(), i)
    }

    pub fn embed_tokens(&self, p: &ParamStore, ids: &[usize]) -> Result<Tensor> {
        p.get(DECODER, "embed")?.gather_rows(ids)
    }

    /// Image features, perceiver signals and fused features for one prompt.
    pub fn front(&self, p: &ParamStore, x: &ImageInput, prompt: &[usize]) -> Result<Front> {
        if prompt.is_empty() {
            return Err(Error::Input("empty prompt".into()));
        }
        if prompt.len() > self.cfg.m_max {
            return Err(Error::Length {
                len: prompt.len(),
                max: self.cfg.m_max,
            });
        }
        let i = self.encode_backbone(p, x)?;
        let ibar = self.align(p, &i)?;
        let signals = [
            self.perceive(p, &i, Perceiver::Textual)?,
            self.perceive(p, &i, Perceiver::Graphical)?,
            self.perceive(p, &i, Perceiver::Spatial)?,
        ];
        let xf = Tensor::concat_rows(&signals)?;
        let q = self.embed_tokens(p, prompt)?;
        let (gate, fused) = fusion_gate(&ibar, &q, &xf, &FusionGateParams::from_store(p)?)?;
        Ok(Front {
            ibar,
            signals,
            gate,
            fused,
            q,
        })
    }

    /// `[Ibar; fused; Q; answer]` plus sinusoidal positions.
    pub fn assemble(&self, p: &ParamStore, front: &Front, answer: &[usize]) -> Result<Tensor> {
        let mut parts = vec![front.ibar.clone(), front.fused.clone(), front.q.clone()];
        if !answer.is_empty() {
            parts.push(self.embed_tokens(p, answer)?);
        }
        let seq = Tensor::concat_rows(&parts)?;
        seq.add(&positions(seq.rows(), self.cfg.d))
    }

    /// Causal transformer over an embedded sequence; logits over the output symbols.
    pub fn decode(&self, p: &ParamStore, seq: &Tensor) -> Result<Tensor> {
        if seq.rows() == 0 {
            return Err(Error::Input("empty decoder sequence".into()));
        }
        if seq.rows() > self.cfg.max_seq {
            return Err(Error::Length {
                len: seq.rows(),
                max: self.cfg.max_seq,
            });
        }
        let mut x = seq.clone();
        for l in 0..self.cfg.decoder_layers {
            let w = |n: &str| self.weight(p, DECODER, &format!("l{}.{}", l, n));
            let h = x.rms_norm_rows(NORM_EPS);
            let a = attend(&h.matmul(&w("wq")?)?, &h.matmul(&w("wk")?)?, &h.matmul(&w("wv")?)?, true)?;
            x = x.add(&a.matmul(&w("wo")?)?)?;
            let h = x.rms_norm_rows(NORM_EPS);
            let m = h.matmul(&w("w1")?)?.gelu().matmul(&w("w2")?)?;
            x = x.add(&m)?;
        }
        x.rms_norm_rows(NORM_EPS).matmul(&self.weight(p, DECODER, "head")?)
    }

    /// Masked mean cross-entropy of the answer under teacher forcing.
    pub fn loss_with(&self, p: &ParamStore, s: &Prepared) -> Result<Tensor> {
        if s.answer.is_empty() {
            return Err(Error::Contract("answer must contain at least <eos>".into()));
        }
        let front = self.front(p, &s.image, &s.prompt)?;
        let inputs = &s.answer[..s.answer.len() - 1];
        let seq = self.assemble(p, &front, inputs)?;
        let logits = self.decode(p, &seq)?;
        let first = 2 * s.image.n() + s.prompt.len() - 1;
        let mut targets = vec![None; seq.rows()];
        for (j, &t) in s.answer.iter().enumerate() {
            targets[first + j] = Some(t);
        }
        logits.masked_cross_entropy(&targets)
    }

    pub fn loss(&self, s: &Prepared) -> Result<Tensor> {
        self.loss_with(&self.params, s)
    }

    /// Greedy decoding until `<eos>` or the answer budget.
    pub fn generate(&self, x: &ImageInput, prompt: &[usize]) -> Result<Vec<usize>> {
        let p = &self.params;
        let front = self.front(p, x, prompt)?;
        let mut out: Vec<usize> = Vec::new();
        let base = 2 * x.n() + prompt.len();
        while out.len() < self.cfg.max_answer && base + out.len() <= self.cfg.max_seq {
            let seq = self.assemble(p, &front, &out)?;
            let logits = self.decode(p, &seq)?;
            let last = logits.row(logits.rows() - 1);
            let mut best = 0;
            for (i, v) in last.iter().enumerate() {
                if *v > last[best] {
                    best = i;
                }
            }
            out.push(best);
            if best == EOS {
                break;
            }
        }
        Ok(out)
    }

    /// Tokenize a prompt/answer pair against a screen.
    pub fn prepare(&self, img: &GrayImage, max_tiles: u32, prompt: &str, answer: &str) -> Result<Prepared> {
        Ok(Prepared {
            image: self.image_input(img, max_tiles)?,
            prompt: self.tok.encode_prompt(prompt)?,
            answer: self.tok.encode_answer(answer)?,
        })
    }

    /// Generate an answer string for a text prompt.
    pub fn answer(&self, img: &GrayImage, max_tiles: u32, prompt: &str) -> Result<String> {
        let x = self.image_input(img, max_tiles)?;
        let ids = self.generate(&x, &self.tok.encode_prompt(prompt)?)?;
        Ok(self.tok.decode(&ids))
    }

    /// Perceiver outputs for a screen, without a prompt.
    pub fn signals(&self, x: &ImageInput) -> Result<[Tensor; 3]> {
        let i = self.encode_backbone(&self.params, x)?;
        Ok([
            self.perceive(&self.params, &i, Perceiver::Textual)?,
            self.perceive(&self.params, &i, Perceiver::Graphical)?,
            self.perceive(&self.params, &i, Perceiver::Spatial)?,
        ])
    }

    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        let meta = CheckpointMeta {
            format: CHECKPOINT_FORMAT.into(),
            tool_version: crate::TOOL_VERSION.into(),
            vocab_fingerprint: self.tok.fingerprint(),
            model: self.cfg.clone(),
            lora: self.lora.clone(),
            extra,
        };
        let json = serde_json::to_string(&meta).expect("meta serializes");
        write_checkpoint(path, &json, &self.params)
    }

    /// Load a checkpoint written by [`Model::save`]. The vocabulary must match this build's.
    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let ck = read_checkpoint(path)?;
        let meta: CheckpointMeta = serde_json::from_str(&ck.meta)
            .map_err(|e| Error::Version(format!("unreadable checkpoint meta: {}", e)))?;
        if meta.format != CHECKPOINT_FORMAT {
            return Err(Error::Version(format!("not a model checkpoint: {:?}", meta.format)));
        }
        let tok = Tokenizer::new(meta.model.vocab.clone()).map_err(|e| Error::Version(e.to_string()))?;
        let current = Tokenizer::standard();
        if tok.fingerprint() != meta.vocab_fingerprint || tok.fingerprint() != current.fingerprint() {
            return Err(Error::Version(
                "checkpoint vocabulary does not match this build's vocabulary".into(),
            ));
        }
        meta.model.validate()?;
        let mut params = ck.params;
        params.set_all_trainable(false);
        let model = Model {
            cfg: meta.model,
            params,
            lora: meta.lora,
            tok,
        };
        model.check_layout()?;
        Ok((model, meta.extra))
    }

    /// Every required tensor is present with the configured shape.
    pub fn check_layout(&self) -> Result<()> {
        let fresh = Model::new(self.cfg.clone(), 0)?;
        for (g, n) in fresh.params.keys() {
            let want = fresh.params.get(&g, &n)?.shape();
            let got = self
                .params
                .get(&g, &n)
                .map_err(|_| Error::Version(format!("checkpoint lacks {}/{}", g, n)))?
                .shape();
            if want != got {
                return Err(Error::Version(format!(
                    "{}/{} has shape {:?}, expected {:?}",
                    g, n, got, want
                )));
            }
        }
        Ok(())
    }
}
