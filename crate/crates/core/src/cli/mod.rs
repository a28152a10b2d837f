//! The `tgs` command line: forge, train, eval, embed-export, audit-srp, report.

pub mod config;
pub mod manifest;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{EvalSection, RunConfig, StageOverride, TrainSection};
pub use manifest::{prepare_out_dir, sha256_file, RunManifest, MANIFEST_FILE};

use crate::data::{forge, gen_scenes, load_jsonl, Corpus, Scene, Task, DATASET_FILES};
use crate::error::{Error, Result};
use crate::metrics::{audit_srp, evaluate, separation_score, write_report, PredRecord};
use crate::model::{Model, Perceiver};
use crate::rng::derive_seed;
use crate::train::{check_data, run_stage, StepId, TrainLog};

pub const SCENES_FILE: &str = "scenes.jsonl";
pub const INIT_CHECKPOINT: &str = "checkpoint_init.tgs";

pub fn stage_checkpoint(step: StepId) -> String {
    format!("checkpoint_stage{}.tgs", step)
}

#[derive(Debug, Parser)]
#[command(name = "tgs", version, about = "Synthetic GUI data, staged training and evaluation for a perceiver-fusion model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
    /// Print the resolved configuration and exit without writing.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate scenes and the TAD, GAD, SRP, SPE and MPE datasets.
    Forge {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        screens: Option<usize>,
    },
    /// Run the training stages in order, checkpointing after each.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory written by `forge`.
        #[arg(long)]
        data: PathBuf,
        /// Resume from a stage checkpoint; stages it already completed are skipped.
        #[arg(long)]
        from: Option<PathBuf>,
        /// Comma-separated stage ids, e.g. `1,2,3`.
        #[arg(long)]
        stages: Option<String>,
    },
    /// Greedy-decode a dataset directory and score it.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated task names.
        #[arg(long)]
        tasks: Option<String>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Write per-token perceiver embeddings and their separation score.
    EmbedExport {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Use the scenes of a forged directory instead of fresh ones.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        screens: Option<usize>,
    },
    /// Check every SRP pair of a forged directory against its scene tree.
    AuditSrp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Recompute metrics from a predictions file.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predictions: PathBuf,
    },
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    common: Common,
}

impl Ctx {
    fn new(common: &Common) -> Result<Ctx> {
        let cfg = RunConfig::load(common.config.as_deref())?;
        let seed = common.seed.unwrap_or(cfg.seed);
        Ok(Ctx {
            cfg,
            seed,
            common: common.clone(),
        })
    }

    fn out(&self) -> Result<&Path> {
        self.common
            .out
            .as_deref()
            .ok_or_else(|| Error::Config("--out is required".into()))
    }

    fn manifest(&self, command: &str, stages: Vec<String>) -> Result<RunManifest> {
        let mut resolved = self.cfg.clone();
        resolved.seed = self.seed;
        Ok(RunManifest {
            command: command.into(),
            tool_version: crate::TOOL_VERSION.into(),
            config_path: self.common.config.as_ref().map(|p| p.display().to_string()),
            seed: self.seed,
            stages,
            out_dir: self.out()?.display().to_string(),
            inputs: BTreeMap::new(),
            config: serde_json::to_value(&resolved).expect("config serializes"),
            artifacts: BTreeMap::new(),
        })
    }

    fn dry_run(&self, extra: Option<serde_json::Value>) -> bool {
        if self.common.dry_run {
            let mut resolved = self.cfg.clone();
            resolved.seed = self.seed;
            let mut v = serde_json::json!({ "config": resolved });
            if let Some(e) = extra {
                v["resolved"] = e;
            }
            println!("{}", serde_json::to_string_pretty(&v).expect("serializes"));
        }
        self.common.dry_run
    }
}

fn write_file(out: &Path, rel: &str, body: &[u8], m: &mut RunManifest) -> Result<()> {
    let p = out.join(rel);
    fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    m.add_artifact(out, rel)
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(f).collect()
}

pub fn cmd_forge(common: &Common, screens: Option<usize>) -> Result<()> {
    let mut ctx = Ctx::new(common)?;
    if let Some(s) = screens {
        ctx.cfg.forge.screens = s;
    }
    if ctx.cfg.forge.screens == 0 {
        return Err(Error::Config("screens must be >= 1".into()));
    }
    ctx.cfg.forge.gen.validate()?;
    if ctx.dry_run(None) {
        return Ok(());
    }
    let out = ctx.out()?.to_path_buf();
    let forged = forge(ctx.seed, &ctx.cfg.forge)?;
    prepare_out_dir(&out, common.force)?;
    let mut m = ctx.manifest("forge", Vec::new())?;
    for rel in forged.write(&out)? {
        m.add_artifact(&out, &rel)?;
    }
    let mut scenes = String::new();
    for s in &forged.scenes {
        scenes.push_str(&serde_json::to_string(s).expect("scene serializes"));
        scenes.push('\n');
    }
    write_file(&out, SCENES_FILE, scenes.as_bytes(), &mut m)?;
    m.write(&out)?;
    for (name, set) in DATASET_FILES.iter().zip(&forged.sets) {
        println!("{}: {} samples", name, set.len());
    }
    let st = &forged.srp_stats;
    println!(
        "srp pairs available {:?}, emitted {:?}, expansions skipped {}",
        st.available, st.emitted, st.expansion_skipped
    );
    Ok(())
}

/// Stages and step counts recorded in a checkpoint's metadata.
fn resume_state(extra: &serde_json::Value) -> (Vec<String>, usize) {
    let done = extra["completed_stages"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
        .unwrap_or_default();
    let step = extra["global_step"].as_u64().unwrap_or(0) as usize;
    (done, step)
}

pub fn cmd_train(common: &Common, data: &Path, from: Option<&Path>, stages: Option<&str>) -> Result<()> {
    let mut ctx = Ctx::new(common)?;
    if let Some(s) = stages {
        ctx.cfg.train.stages = parse_list(s, |x| x.parse())?;
    }
    let cfgs = ctx.cfg.stages()?;
    if ctx.dry_run(Some(serde_json::to_value(&cfgs).expect("serializes"))) {
        return Ok(());
    }
    let out = ctx.out()?.to_path_buf();
    let corpus = Corpus::load_dir(data, &DATASET_FILES)?;
    for c in &cfgs {
        check_data(c, &corpus)?;
    }
    let (mut model, mut done, mut log) = match from {
        Some(p) => {
            let (m, extra) = Model::load(p)?;
            let (done, step) = resume_state(&extra);
            let log = TrainLog {
                start_step: step,
                ..TrainLog::default()
            };
            (m, done, log)
        }
        None => {
            ctx.cfg.model.validate()?;
            let m = Model::new(ctx.cfg.model.clone(), derive_seed(ctx.seed, "model"))?;
            (m, Vec::new(), TrainLog::default())
        }
    };
    prepare_out_dir(&out, common.force)?;
    let stage_names: Vec<String> = cfgs.iter().map(|c| c.step.to_string()).collect();
    let mut man = ctx.manifest("train", stage_names)?;
    man.inputs.insert("data".into(), data.display().to_string());
    if let Some(p) = from {
        man.inputs.insert("from".into(), p.display().to_string());
    }
    let extra = |done: &[String], step: usize| serde_json::json!({ "completed_stages": done, "global_step": step });
    if from.is_none() {
        model.save(&out.join(INIT_CHECKPOINT), extra(&done, 0))?;
        man.add_artifact(&out, INIT_CHECKPOINT)?;
    }
    for c in &cfgs {
        let id = c.step.to_string();
        if done.contains(&id) {
            println!("stage {}: already completed in checkpoint, skipped", id);
            continue;
        }
        let s = run_stage(&mut model, c, &corpus, ctx.seed, &mut log)?;
        let frozen: Vec<&str> = s.frozen_before.keys().map(String::as_str).collect();
        println!(
            "stage {}: {} steps over {} samples ({} over-long skipped), final loss {:.6}",
            id, s.steps, s.samples, s.skipped, s.final_loss
        );
        println!(
            "stage {}: frozen groups verified unchanged [{}]; adapters merged into [{}]",
            id,
            frozen.join(", "),
            s.adapter_bases.join(", ")
        );
        eprintln!("stage {}: wall time {:.1}s", id, s.wall_time_s);
        done.push(id);
        let rel = stage_checkpoint(c.step);
        model.save(&out.join(&rel), extra(&done, s.first_step + s.steps))?;
        man.add_artifact(&out, &rel)?;
    }
    write_file(&out, "train_log.jsonl", log.to_jsonl().as_bytes(), &mut man)?;
    let summaries = serde_json::to_string_pretty(&log.stages).expect("serializes") + "\n";
    write_file(&out, "stages.json", summaries.as_bytes(), &mut man)?;
    man.write(&out)
}

/// Greedy predictions for `samples`; prompts the model cannot hold yield an empty prediction.
pub fn predict(model: &Model, corpus: &Corpus, samples: &[&crate::data::Sample], max_tiles: u32) -> Result<Vec<PredRecord>> {
    let mut cache = BTreeMap::new();
    let mut out = Vec::with_capacity(samples.len());
    for (id, s) in samples.iter().enumerate() {
        if !cache.contains_key(&s.image) {
            cache.insert(s.image.clone(), model.image_input(corpus.image(&s.image)?, max_tiles)?);
        }
        let x = &cache[&s.image];
        let prediction = match model.tokenizer().encode_prompt(&s.prompt) {
            Ok(p) if p.len() <= model.cfg.m_max && 2 * x.n() + p.len() <= model.cfg.max_seq => {
                model.tokenizer().decode(&model.generate(x, &p)?)
            }
            _ => String::new(),
        };
        let m = &s.meta;
        let rec = if s.task == Task::Text2BBox {
            let ratio = m.ratio.or_else(|| {
                m.boxes_px
                    .first()
                    .map(|b| crate::data::small_object_ratio(b, m.width, m.height))
            });
            PredRecord::grounding(id, &prediction, &s.target, m.width, m.height, ratio)
        } else {
            PredRecord {
                id,
                task: s.task.as_str().into(),
                prediction,
                gold: s.target.clone(),
                pred_box: None,
                gold_box: None,
                width: m.width,
                height: m.height,
                ratio: None,
            }
        };
        out.push(rec);
    }
    Ok(out)
}

pub fn cmd_eval(common: &Common, checkpoint: &Path, data: &Path, tasks: Option<&str>, limit: Option<usize>) -> Result<()> {
    let mut ctx = Ctx::new(common)?;
    if let Some(t) = tasks {
        ctx.cfg.eval.tasks = parse_list(t, Task::parse)?;
    }
    if limit.is_some() {
        ctx.cfg.eval.limit = limit;
    }
    if ctx.dry_run(None) {
        return Ok(());
    }
    let out = ctx.out()?.to_path_buf();
    let (model, _) = Model::load(checkpoint)?;
    let corpus = Corpus::load_dir(data, &DATASET_FILES)?;
    let ev = &ctx.cfg.eval;
    let mut per_task: BTreeMap<Task, usize> = BTreeMap::new();
    let selected: Vec<&crate::data::Sample> = corpus
        .samples
        .iter()
        .filter(|s| ev.tasks.is_empty() || ev.tasks.contains(&s.task))
        .filter(|s| {
            let n = per_task.entry(s.task).or_default();
            *n += 1;
            ev.limit.is_none_or(|l| *n <= l)
        })
        .collect();
    if selected.is_empty() {
        return Err(Error::Data(format!("no evaluation samples in {}", data.display())));
    }
    let tiles = ev.max_tiles.unwrap_or(model.cfg.max_tiles);
    let records = predict(&model, &corpus, &selected, tiles)?;
    let report = evaluate(&records, &ev.bins, ev.bin_threshold)?;
    prepare_out_dir(&out, common.force)?;
    let mut man = ctx.manifest("eval", Vec::new())?;
    man.inputs.insert("checkpoint".into(), checkpoint.display().to_string());
    man.inputs.insert("data".into(), data.display().to_string());
    for p in write_report(&report, &records, &out)? {
        let rel = p.file_name().expect("file").to_string_lossy().to_string();
        man.add_artifact(&out, &rel)?;
    }
    man.write(&out)?;
    print!("{}", report.to_text());
    Ok(())
}

fn load_scenes(data: &Path) -> Result<Vec<Scene>> {
    let p = data.join(SCENES_FILE);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(Scene::from_json).collect()
}

/// CSV of perceiver outputs: one row per (scene, token, perceiver), plus the separation score over all rows.
pub fn embed_rows(model: &Model, scenes: &[Scene], max_tiles: u32) -> Result<(String, f64)> {
    let mut csv = String::from("scene,token,perceiver");
    for i in 0..model.cfg.d {
        let _ = write!(csv, ",e{}", i);
    }
    csv.push('\n');
    let mut emb = Vec::new();
    let mut labels = Vec::new();
    for s in scenes {
        let x = model.image_input(&s.raster, max_tiles)?;
        let sig = model.signals(&x)?;
        for tok in 0..x.n() {
            for (k, p) in Perceiver::ALL.iter().enumerate() {
                let row = sig[k].row(tok);
                let _ = write!(csv, "{},{},{}", s.seed, tok, p.label());
                for v in row {
                    let _ = write!(csv, ",{}", v);
                }
                csv.push('\n');
                emb.push(row.to_vec());
                labels.push(k);
            }
        }
    }
    let score = separation_score(&emb, &labels)?;
    Ok((csv, score))
}

pub fn cmd_embed_export(common: &Common, checkpoint: &Path, data: Option<&Path>, screens: Option<usize>) -> Result<()> {
    let mut ctx = Ctx::new(common)?;
    if let Some(n) = screens {
        ctx.cfg.eval.embed_screens = n;
    }
    if ctx.dry_run(None) {
        return Ok(());
    }
    let out = ctx.out()?.to_path_buf();
    let (model, _) = Model::load(checkpoint)?;
    let scenes = match data {
        Some(d) => load_scenes(d)?,
        None => {
            if ctx.cfg.eval.embed_screens == 0 {
                return Err(Error::Config("embed_screens must be >= 1".into()));
            }
            gen_scenes(derive_seed(ctx.seed, "embed"), ctx.cfg.eval.embed_screens, &ctx.cfg.forge.gen)?
        }
    };
    let tiles = ctx.cfg.eval.max_tiles.unwrap_or(model.cfg.max_tiles);
    let (csv, score) = embed_rows(&model, &scenes, tiles)?;
    prepare_out_dir(&out, common.force)?;
    let mut man = ctx.manifest("embed-export", Vec::new())?;
    man.inputs.insert("checkpoint".into(), checkpoint.display().to_string());
    if let Some(d) = data {
        man.inputs.insert("data".into(), d.display().to_string());
    }
    write_file(&out, "embeddings.csv", csv.as_bytes(), &mut man)?;
    write_file(&out, "separation.txt", format!("{}\n", score).as_bytes(), &mut man)?;
    man.write(&out)?;
    println!("separation_score: {}", score);
    Ok(())
}

pub fn cmd_audit_srp(common: &Common, data: &Path) -> Result<()> {
    let ctx = Ctx::new(common)?;
    if ctx.dry_run(None) {
        return Ok(());
    }
    let samples = load_jsonl(&data.join("srp.jsonl"))?;
    let scenes: BTreeMap<u64, Scene> = load_scenes(data)?.into_iter().map(|s| (s.seed, s)).collect();
    let a = audit_srp(&samples, &scenes)?;
    if let Some(out) = ctx.common.out.as_deref() {
        prepare_out_dir(out, common.force)?;
        let mut man = ctx.manifest("audit-srp", Vec::new())?;
        man.inputs.insert("data".into(), data.display().to_string());
        let body = serde_json::to_string_pretty(&a).expect("serializes") + "\n";
        write_file(out, "audit.json", body.as_bytes(), &mut man)?;
        man.write(out)?;
    }
    println!("srp pairs: {} (per type {:?})", a.pairs, a.per_type);
    println!(
        "violations: type1 {}, type2 {}, type3 {}, type4 {}",
        a.type1_violations.len(),
        a.type2_violations.len(),
        a.type3_violations.len(),
        a.type4_violations.len()
    );
    if a.violations() > 0 {
        return Err(Error::Data(format!("{} SRP pairs failed the audit", a.violations())));
    }
    Ok(())
}

pub fn cmd_report(common: &Common, predictions: &Path) -> Result<()> {
    let ctx = Ctx::new(common)?;
    if ctx.dry_run(None) {
        return Ok(());
    }
    let out = ctx.out()?.to_path_buf();
    let text = fs::read_to_string(predictions).map_err(|e| Error::io(predictions, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: PredRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: predictions.into(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        records.push(r);
    }
    let ev = &ctx.cfg.eval;
    let report = evaluate(&records, &ev.bins, ev.bin_threshold)?;
    prepare_out_dir(&out, common.force)?;
    let mut man = ctx.manifest("report", Vec::new())?;
    man.inputs.insert("predictions".into(), predictions.display().to_string());
    for p in write_report(&report, &records, &out)? {
        let rel = p.file_name().expect("file").to_string_lossy().to_string();
        man.add_artifact(&out, &rel)?;
    }
    man.write(&out)?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Forge { common, screens } => cmd_forge(common, *screens),
        Command::Train {
            common,
            data,
            from,
            stages,
        } => cmd_train(common, data, from.as_deref(), stages.as_deref()),
        Command::Eval {
            common,
            checkpoint,
            data,
            tasks,
            limit,
        } => cmd_eval(common, checkpoint, data, tasks.as_deref(), *limit),
        Command::EmbedExport {
            common,
            checkpoint,
            data,
            screens,
        } => cmd_embed_export(common, checkpoint, data.as_deref(), *screens),
        Command::AuditSrp { common, data } => cmd_audit_srp(common, data),
        Command::Report { common, predictions } => cmd_report(common, predictions),
    }
}

/// Parse `args`, run, and map the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e);
            e.exit_code()
        }
    }
}

