use serde::{Deserialize, Serialize};

use super::vocab::{standard_vocab, Tokenizer};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerceiverInit {
    /// All three perceivers start from the same weights.
    Shared,
    Independent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub tile_side: u32,
    pub max_tiles: u32,
    pub patch_side: u32,
    /// Backbone feature width.
    pub c: usize,
    /// Model width.
    pub d: usize,
    /// Maximum prompt tokens.
    pub m_max: usize,
    pub decoder_layers: usize,
    pub mlp_hidden: usize,
    /// Maximum decoder sequence length.
    pub max_seq: usize,
    /// Maximum generated answer tokens, `<eos>` included.
    pub max_answer: usize,
    pub perceiver_init: PerceiverInit,
    #[serde(default = "standard_vocab")]
    pub vocab: Vec<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            tile_side: 28,
            max_tiles: 6,
            patch_side: 14,
            c: 16,
            d: 32,
            m_max: 40,
            decoder_layers: 2,
            mlp_hidden: 64,
            max_seq: 320,
            max_answer: 200,
            perceiver_init: PerceiverInit::Shared,
            vocab: standard_vocab(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.patch_side == 0 || self.tile_side == 0 || self.tile_side % self.patch_side != 0 {
            return bad("tile_side must be a positive multiple of patch_side");
        }
        if self.d == 0 || self.d % 2 != 0 {
            return bad("model width D must be even and positive");
        }
        if self.c == 0 || self.max_tiles == 0 || self.decoder_layers == 0 || self.mlp_hidden == 0 {
            return bad("C, max_tiles, decoder_layers and mlp_hidden must be positive");
        }
        if self.m_max == 0 || self.max_answer == 0 || self.max_seq == 0 {
            return bad("m_max, max_answer and max_seq must be positive");
        }
        let tok = Tokenizer::new(self.vocab.clone())?;
        for seg in crate::data::templates::all_segments() {
            tok.encode_prompt(seg)
                .map_err(|_| Error::Config(format!("vocabulary cannot express template text {:?}", seg)))?;
        }
        Ok(())
    }

    pub fn patches_per_tile(&self) -> usize {
        let s = (self.tile_side / self.patch_side) as usize;
        s * s
    }

    pub fn patch_len(&self) -> usize {
        (self.patch_side * self.patch_side) as usize
    }

    /// Image tokens for a grid of `tiles` tiles.
    pub fn n_tokens(&self, tiles: usize) -> usize {
        tiles * self.patches_per_tile()
    }

    pub fn tokenizer(&self) -> Result<Tokenizer> {
        Tokenizer::new(self.vocab.clone())
    }
}
