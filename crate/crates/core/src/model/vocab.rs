//! Character-level vocabulary plus whole-segment prompt tokens.
//!
//! The first [`OUTPUT_SYMBOLS`] entries are what the decoder head can emit.
//! Prompt text additionally uses one token per literal template segment, so a
//! fixed instruction costs a single position.

use sha2::{Digest, Sha256};

use crate::data::templates::{self, IMAGE_PREFIX};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const EOS: usize = 1;

const SPECIALS: [&str; 4] = ["<box>", "</box>", "<ref>", "</ref>"];

/// The 48 symbols the head can produce.
pub fn output_symbols() -> Vec<String> {
    let mut v = vec!["<pad>".to_string(), "<eos>".to_string()];
    v.extend(('a'..='z').map(|c| c.to_string()));
    v.extend(('0'..='9').map(|c| c.to_string()));
    v.extend([" ", "[", "]", ",", ":", "."].iter().map(|s| s.to_string()));
    v.extend(SPECIALS.iter().map(|s| s.to_string()));
    v
}

pub const OUTPUT_SYMBOLS: usize = 48;

/// Output symbols followed by every template segment.
pub fn standard_vocab() -> Vec<String> {
    let mut v = output_symbols();
    for s in templates::all_segments() {
        if !v.iter().any(|x| x == s) {
            v.push(s.to_string());
        }
    }
    v
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tokenizer {
    symbols: Vec<String>,
    /// Multi-character symbols, longest first.
    multi: Vec<(usize, String)>,
}

impl Tokenizer {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        if symbols.len() < OUTPUT_SYMBOLS || symbols[..OUTPUT_SYMBOLS] != output_symbols()[..] {
            return Err(Error::Config("vocabulary must start with the 48 output symbols".into()));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(Error::Config(format!("duplicate vocabulary symbol {:?}", s)));
            }
        }
        let mut multi: Vec<(usize, String)> = symbols
            .iter()
            .enumerate()
            .filter(|(i, s)| *i > EOS && s.chars().count() > 1)
            .map(|(i, s)| (i, s.clone()))
            .collect();
        multi.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
        Ok(Self { symbols, multi })
    }

    pub fn standard() -> Self {
        Self::new(standard_vocab()).expect("standard vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// SHA-256 over the ordered symbol list.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.symbols {
            h.update((s.len() as u64).to_le_bytes());
            h.update(s.as_bytes());
        }
        hex::encode(h.finalize())
    }

    fn encode_with(&self, text: &str, allow_segments: bool) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        let mut rest = text;
        'outer: while !rest.is_empty() {
            for (id, s) in &self.multi {
                if (allow_segments || *id < OUTPUT_SYMBOLS) && rest.starts_with(s.as_str()) {
                    out.push(*id);
                    rest = &rest[s.len()..];
                    continue 'outer;
                }
            }
            let c = rest.chars().next().expect("non-empty");
            let mut buf = [0u8; 4];
            let cs: &str = c.encode_utf8(&mut buf);
            match self.symbols[..OUTPUT_SYMBOLS].iter().position(|s| s == cs) {
                Some(id) => out.push(id),
                None => return Err(Error::Input(format!("symbol {:?} not in vocabulary", c))),
            }
            rest = &rest[c.len_utf8()..];
        }
        Ok(out)
    }

    /// Prompt tokens; the image placeholder prefix is dropped.
    pub fn encode_prompt(&self, prompt: &str) -> Result<Vec<usize>> {
        self.encode_with(prompt.strip_prefix(IMAGE_PREFIX).unwrap_or(prompt), true)
    }

    /// Answer tokens followed by `<eos>`.
    pub fn encode_answer(&self, answer: &str) -> Result<Vec<usize>> {
        let mut ids = self.encode_with(answer, false)?;
        ids.push(EOS);
        Ok(ids)
    }

    /// Text up to the first `<eos>`; padding is skipped.
    pub fn decode(&self, ids: &[usize]) -> String {
        let mut s = String::new();
        for &i in ids {
            if i == EOS {
                break;
            }
            if i != PAD && i < self.symbols.len() {
                s.push_str(&self.symbols[i]);
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::templates::REGISTRY;

    #[test]
    fn output_alphabet_size() {
        assert_eq!(output_symbols().len(), OUTPUT_SYMBOLS);
    }

    #[test]
    fn template_segments_are_single_tokens() {
        let t = Tokenizer::standard();
        let p = templates::GROUNDING.fill(&[("ref", "abc")]).unwrap();
        let ids = t.encode_prompt(&p).unwrap();
        assert_eq!(ids.len(), 2 + 3);
        for tpl in REGISTRY {
            for seg in tpl.segments() {
                assert_eq!(t.encode_prompt(seg).unwrap().len(), 1, "segment {:?}", seg);
            }
        }
    }

    #[test]
    fn answers_round_trip() {
        let t = Tokenizer::standard();
        for a in ["[12,0,999,1000]", "parent and child", "this is a home icon."] {
            let ids = t.encode_answer(a).unwrap();
            assert!(ids.iter().all(|&i| i < OUTPUT_SYMBOLS));
            assert_eq!(*ids.last().unwrap(), EOS);
            assert_eq!(t.decode(&ids), a);
        }
        assert!(t.encode_answer("Upper").is_err());
    }

    #[test]
    fn fingerprint_tracks_order() {
        let a = Tokenizer::standard();
        let mut syms = standard_vocab();
        let n = syms.len();
        syms.swap(n - 1, n - 2);
        let b = Tokenizer::new(syms).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
