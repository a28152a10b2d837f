//! Named parameter groups and the checkpoint file format.
//!
//! Checkpoints are line-oriented text:
//!
//! ```text
//! tgs-checkpoint v1
//! meta <single-line JSON>
//! param <group>/<name> <rows> <cols>
//! <row-major values, space separated, shortest round-trip notation>
//! ...
//! end
//! ```
//!
//! Parameters are written in lexicographic order of group, then name.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "tgs-checkpoint v1";

#[derive(Clone, Debug)]
pub struct ParamGroup {
    name: String,
    tensors: BTreeMap<String, Tensor>,
}

impl ParamGroup {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            tensors: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::Config(format!(
                "duplicate parameter {}/{}",
                self.name, name
            )));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    /// Replace a tensor's values, keeping its shape.
    pub fn set(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let slot = self.tensors.get_mut(name).ok_or_else(|| {
            Error::Config(format!("unknown parameter {}/{}", self.name, name))
        })?;
        if slot.shape() != tensor.shape() {
            return Err(Error::shape(
                "ParamGroup::set",
                format!("{}/{}: {:?} vs {:?}", self.name, name, slot.shape(), tensor.shape()),
            ));
        }
        *slot = tensor;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(|t| t.data().len()).sum()
    }

    /// Rebuild every tensor as a fresh leaf with the given trainability.
    pub fn set_trainable(&mut self, trainable: bool) {
        for t in self.tensors.values_mut() {
            *t = t.to_leaf(trainable);
        }
    }

    pub fn zero_grads(&self) {
        for t in self.tensors.values() {
            t.zero_grad();
        }
    }

    /// SHA-256 over names, shapes and the exact bit patterns of every value.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        for (name, t) in &self.tensors {
            h.update([0u8]);
            h.update(name.as_bytes());
            h.update((t.rows() as u64).to_le_bytes());
            h.update((t.cols() as u64).to_le_bytes());
            for v in t.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    groups: BTreeMap<String, ParamGroup>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_group(&mut self, name: &str) -> Result<&mut ParamGroup> {
        if self.groups.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter group {}", name)));
        }
        Ok(self
            .groups
            .entry(name.to_string())
            .or_insert_with(|| ParamGroup::new(name)))
    }

    pub fn ensure_group(&mut self, name: &str) -> &mut ParamGroup {
        self.groups
            .entry(name.to_string())
            .or_insert_with(|| ParamGroup::new(name))
    }

    pub fn remove_group(&mut self, name: &str) -> Option<ParamGroup> {
        self.groups.remove(name)
    }

    pub fn group(&self, name: &str) -> Option<&ParamGroup> {
        self.groups.get(name)
    }

    pub fn group_mut(&mut self, name: &str) -> Option<&mut ParamGroup> {
        self.groups.get_mut(name)
    }

    pub fn groups(&self) -> impl Iterator<Item = &ParamGroup> {
        self.groups.values()
    }

    pub fn group_names(&self) -> BTreeSet<String> {
        self.groups.keys().cloned().collect()
    }

    pub fn get(&self, group: &str, name: &str) -> Result<&Tensor> {
        self.groups
            .get(group)
            .and_then(|g| g.get(name))
            .ok_or_else(|| Error::Config(format!("unknown parameter {}/{}", group, name)))
    }

    pub fn set(&mut self, group: &str, name: &str, tensor: Tensor) -> Result<()> {
        self.groups
            .get_mut(group)
            .ok_or_else(|| Error::Config(format!("unknown parameter group {}", group)))?
            .set(name, tensor)
    }

    /// `(group, name)` for every tensor, lexicographic.
    pub fn keys(&self) -> Vec<(String, String)> {
        self.groups
            .iter()
            .flat_map(|(g, grp)| grp.iter().map(move |(n, _)| (g.clone(), n.clone())))
            .collect()
    }

    pub fn num_values(&self) -> usize {
        self.groups.values().map(ParamGroup::num_values).sum()
    }

    /// Make exactly the named groups trainable; all others become constants.
    pub fn set_trainable_groups(&mut self, trainable: &BTreeSet<String>) {
        for (name, g) in self.groups.iter_mut() {
            g.set_trainable(trainable.contains(name));
        }
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        for g in self.groups.values_mut() {
            g.set_trainable(trainable);
        }
    }

    pub fn zero_grads(&self) {
        for g in self.groups.values() {
            g.zero_grads();
        }
    }

    pub fn group_hashes(&self) -> BTreeMap<String, String> {
        self.groups
            .iter()
            .map(|(n, g)| (n.clone(), g.content_hash()))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    /// Single-line JSON describing the model the parameters belong to.
    pub meta: String,
    pub params: ParamStore,
}

pub fn write_checkpoint(path: &Path, meta: &str, params: &ParamStore) -> Result<()> {
    if meta.contains('\n') {
        return Err(Error::Contract("checkpoint meta must be a single line".into()));
    }
    let mut out = String::new();
    out.push_str(CHECKPOINT_MAGIC);
    out.push('\n');
    out.push_str("meta ");
    out.push_str(meta);
    out.push('\n');
    for g in params.groups() {
        for (name, t) in g.iter() {
            out.push_str(&format!("param {}/{} {} {}\n", g.name(), name, t.rows(), t.cols()));
            let line: Vec<String> = t.data().iter().map(|v| format!("{:e}", v)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out.push_str("end\n");
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, reason: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.to_string(),
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l == CHECKPOINT_MAGIC => {}
        Some((_, l)) if l.starts_with("tgs-checkpoint") => {
            return Err(Error::Version(format!("unsupported checkpoint header {:?}", l)))
        }
        _ => return Err(perr(1, "missing checkpoint header")),
    }
    let meta = match lines.next() {
        Some((_, l)) if l.starts_with("meta ") => l["meta ".len()..].to_string(),
        Some((n, _)) => return Err(perr(n, "expected meta line")),
        None => return Err(perr(2, "truncated file")),
    };
    let mut params = ParamStore::new();
    loop {
        let (n, header) = lines.next().ok_or_else(|| perr(0, "missing end marker"))?;
        if header == "end" {
            break;
        }
        let fields: Vec<&str> = header.split(' ').collect();
        if fields.len() != 4 || fields[0] != "param" {
            return Err(perr(n, "expected param header"));
        }
        let (group, name) = fields[1]
            .split_once('/')
            .ok_or_else(|| perr(n, "parameter key lacks group"))?;
        let rows: usize = fields[2].parse().map_err(|_| perr(n, "bad row count"))?;
        let cols: usize = fields[3].parse().map_err(|_| perr(n, "bad column count"))?;
        let (vn, values) = lines.next().ok_or_else(|| perr(n + 1, "missing values"))?;
        let data: Vec<f64> = if values.is_empty() {
            Vec::new()
        } else {
            values
                .split(' ')
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| perr(vn, "bad value"))?
        };
        if data.len() != rows * cols {
            return Err(perr(vn, "value count does not match shape"));
        }
        params
            .ensure_group(group)
            .insert(name, Tensor::param(rows, cols, data)?)?;
    }
    Ok(Checkpoint { meta, params })
}
