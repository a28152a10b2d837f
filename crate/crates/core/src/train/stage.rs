use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optim::{lr_schedule, AdamW};
use super::StageConfig;
use crate::data::{Corpus, Sample};
use crate::error::{Error, Result};
use crate::model::{ImageInput, Model, Prepared};
use crate::rng::{self, derive_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub stage: String,
    /// Global optimizer step, counted across stages.
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    /// Global step of this stage's first update.
    pub first_step: usize,
    pub steps: usize,
    pub samples: usize,
    /// Samples dropped because they exceed the prompt or sequence limits.
    pub skipped: usize,
    pub final_loss: f64,
    /// Reported on stderr only; excluded from serialized summaries so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_time_s: f64,
    /// Hashes of groups outside the unlocked set, before and after the stage.
    pub frozen_before: BTreeMap<String, String>,
    pub frozen_after: BTreeMap<String, String>,
    /// Groups that carried adapters; their base weights absorb the adapters at stage end.
    pub adapter_bases: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Global step of the first entry; nonzero when resuming from a checkpoint.
    #[serde(default)]
    pub start_step: usize,
    pub entries: Vec<LogEntry>,
    pub stages: Vec<StageSummary>,
}

impl TrainLog {
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&serde_json::to_string(e).expect("entry serializes"));
            s.push('\n');
        }
        s
    }

    pub fn losses(&self, stage: &str) -> Vec<f64> {
        self.entries.iter().filter(|e| e.stage == stage).map(|e| e.loss).collect()
    }
}

struct Selected {
    items: Vec<Prepared>,
    skipped: usize,
}

fn fits(model: &Model, p: &Prepared) -> bool {
    p.prompt.len() <= model.cfg.m_max && 2 * p.image.n() + p.prompt.len() + p.answer.len() - 1 <= model.cfg.max_seq
}

/// Every dataset entry of `cfg` has at least one matching sample in `corpus`.
pub fn check_data(cfg: &StageConfig, corpus: &Corpus) -> Result<()> {
    for spec in &cfg.datasets {
        if !corpus.samples.iter().any(|s| s.meta.dataset == spec.dataset && spec.tasks.contains(&s.task)) {
            let tasks: Vec<&str> = spec.tasks.iter().map(|t| t.as_str()).collect();
            return Err(Error::Config(format!(
                "stage {}: no {} samples for tasks {:?}",
                cfg.step, spec.dataset, tasks
            )));
        }
    }
    Ok(())
}

fn select(model: &Model, cfg: &StageConfig, corpus: &Corpus, seed: u64) -> Result<Selected> {
    let tiles = cfg.max_tiles.min(model.cfg.max_tiles);
    let mut cache: BTreeMap<String, ImageInput> = BTreeMap::new();
    check_data(cfg, corpus)?;
    let mut items = Vec::new();
    let mut skipped = 0;
    for spec in &cfg.datasets {
        let mut pool: Vec<&Sample> = corpus
            .samples
            .iter()
            .filter(|s| s.meta.dataset == spec.dataset && spec.tasks.contains(&s.task))
            .collect();
        let mut r = rng::stream(seed, &format!("stage/{}/select/{}", cfg.step, spec.dataset));
        pool.shuffle(&mut r);
        let mut taken = 0;
        for s in pool {
            if taken == spec.budget {
                break;
            }
            if !cache.contains_key(&s.image) {
                let x = model.image_input(corpus.image(&s.image)?, tiles)?;
                cache.insert(s.image.clone(), x);
            }
            let tok = model.tokenizer();
            let p = Prepared {
                image: cache[&s.image].clone(),
                prompt: tok.encode_prompt(&s.prompt)?,
                answer: tok.encode_answer(&s.target)?,
            };
            if fits(model, &p) {
                items.push(p);
                taken += 1;
            } else {
                skipped += 1;
            }
        }
    }
    if items.is_empty() {
        return Err(Error::Config(format!(
            "stage {}: every selected sample exceeds the model's length limits",
            cfg.step
        )));
    }
    Ok(Selected { items, skipped })
}

/// Sample order for `total` steps: fresh seeded permutation per epoch, cycling as needed.
fn schedule_order(n: usize, total: usize, batch: usize, cfg: &StageConfig, seed: u64) -> Vec<usize> {
    let need = total * batch;
    let mut order = Vec::with_capacity(need);
    let mut epoch = 0;
    while order.len() < need {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut r = rng::stream(seed, &format!("stage/{}/epoch/{}", cfg.step, epoch));
        perm.shuffle(&mut r);
        order.extend(perm);
        epoch += 1;
    }
    order.truncate(need);
    order
}

fn hashes_of(model: &Model, groups: &BTreeSet<String>) -> BTreeMap<String, String> {
    model
        .params
        .group_hashes()
        .into_iter()
        .filter(|(g, _)| groups.contains(g))
        .collect()
}

/// Train one stage in place. Only `cfg.unlocked` groups change; adapters are merged into their base weights on exit.
pub fn run_stage(model: &mut Model, cfg: &StageConfig, corpus: &Corpus, seed: u64, log: &mut TrainLog) -> Result<StageSummary> {
    let started = Instant::now();
    cfg.validate()?;
    if !model.lora.is_empty() {
        return Err(Error::Contract("model already carries unmerged adapters".into()));
    }
    let present = model.params.group_names();
    for g in &cfg.unlocked {
        if !g.ends_with("-adapters") && !present.contains(g) {
            return Err(Error::Config(format!("stage {}: model has no group {}", cfg.step, g)));
        }
    }
    let stage_seed = derive_seed(seed, &format!("stage/{}", cfg.step));
    let sel = select(model, cfg, corpus, stage_seed)?;

    let unlocked: BTreeSet<String> = cfg.unlocked.iter().cloned().collect();
    let bases: BTreeSet<String> = cfg.adapter_bases().iter().map(|s| s.to_string()).collect();
    let frozen: BTreeSet<String> = present
        .iter()
        .filter(|g| !unlocked.contains(*g) && !bases.contains(*g))
        .cloned()
        .collect();
    let frozen_before = hashes_of(model, &frozen);
    let bases_before = hashes_of(model, &bases);

    if let Some(spec) = cfg.lora {
        for b in &bases {
            model.lora_wrap(b, spec, stage_seed)?;
        }
    }
    model.params.set_trainable_groups(&unlocked);
    let groups: Vec<String> = cfg.unlocked.clone();

    let n = sel.items.len();
    let batch = cfg.batch.min(n);
    let total = cfg.steps.unwrap_or_else(|| (n * cfg.epochs).div_ceil(batch));
    let order = schedule_order(n, total, batch, cfg, stage_seed);
    let mut opt = AdamW::new(cfg.adam, cfg.weight_decay);
    let first_step = log.start_step + log.entries.len();
    let mut final_loss = f64::NAN;
    let stage = cfg.step.to_string();
    let result = (|| -> Result<()> {
        for t in 0..total {
            let lr = lr_schedule(t, total, cfg.lr, cfg.warmup_ratio)?;
            let mut sum = 0.0;
            for &i in &order[t * batch..(t + 1) * batch] {
                let loss = model.loss(&sel.items[i])?;
                sum += loss.item();
                loss.backward()?;
            }
            opt.step(&mut model.params, &groups, lr, batch as f64)?;
            let mean = sum / batch as f64;
            if !mean.is_finite() {
                return Err(Error::NumericInput { op: "run_stage", index: t });
            }
            final_loss = mean;
            log.entries.push(LogEntry {
                stage: stage.clone(),
                step: first_step + t,
                lr,
                loss: mean,
            });
        }
        Ok(())
    })();
    model.params.set_all_trainable(false);
    result?;

    if hashes_of(model, &bases) != bases_before || hashes_of(model, &frozen) != frozen_before {
        return Err(Error::Contract(format!("stage {} modified a frozen group", stage)));
    }
    for b in &bases {
        model.lora_merge(b)?;
    }
    let frozen_after = hashes_of(model, &frozen);
    if frozen_after != frozen_before {
        return Err(Error::Contract(format!("stage {} modified a frozen group", stage)));
    }
    let summary = StageSummary {
        stage,
        first_step,
        steps: total,
        samples: n,
        skipped: sel.skipped,
        final_loss,
        wall_time_s: started.elapsed().as_secs_f64(),
        frozen_before,
        frozen_after,
        adapter_bases: bases.into_iter().collect(),
    };
    log.stages.push(summary.clone());
    Ok(summary)
}

/// Run stages in order against one corpus.
pub fn run_stages(model: &mut Model, cfgs: &[StageConfig], corpus: &Corpus, seed: u64) -> Result<TrainLog> {
    let mut log = TrainLog::default();
    for c in cfgs {
        run_stage(model, c, corpus, seed, &mut log)?;
    }
    Ok(log)
}
