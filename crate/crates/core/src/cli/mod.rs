//! Command surface: dataset building, training, probing, evaluation,
//! ablation and figures.
//!
//! Every command is a plain function over a resolved [`RunConfig`], so the
//! same code paths serve the binary, the examples and the tests.

pub mod config;
pub mod demo;
pub mod viz;

pub use config::{EvalSettings, Family, Preset, RunConfig, VizSettings, ABLATION_LADDER};

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use candle_core::DType;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::baselines::{Baseline, BaselineDecomposer, BaselineKind, DirectMultiHot};
use crate::chordset::{
    build_splits, extract_unique_chords, load_columns, read_dataset, BuildPlan, CorpusKind, Dataset, DatasetManifest,
    DatasetPreset, InstrumentId, InstrumentMode, NotePipeline, SplitName, SynthBackend, JAZZNET_CORPUS_ENV,
    JSB_CORPUS_ENV,
};
use crate::error::{Error, ExitClass, Result};
use crate::evalkit::{
    aggregate_seeds, evaluate_split, render_table, Decomposer, GtEcho, LabelSpace, MetricsReport, OneHotProbe, Probe,
};
use crate::slotcore::{load_checkpoint, MusicSlots, SlotDecomposer};
use crate::trainer::{train, BaselineTrainable, LatentProbe, ProbeTrainer, RunPaths, SlotProbe, TrainConfig};

pub const METRICS_FILE: &str = "metrics.json";
pub const EVAL_FILE: &str = "eval.json";
pub const RUN_CONFIG_FILE: &str = "run.toml";

/// One line of a dataset build report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}: {}", if self.pass { "PASS" } else { "WARN" }, self.name, self.detail)
    }
}

/// Compares a built manifest with the published sizes of `preset`.
pub fn compare_reference(manifest: &DatasetManifest, preset: DatasetPreset) -> Vec<Check> {
    let r = preset.reference();
    let counts = manifest.counts();
    let mut out = Vec::new();
    for (i, name) in SplitName::ALL.iter().enumerate() {
        let diff = counts[i].abs_diff(r.examples[i]);
        out.push(Check {
            name: format!("{} {name} examples", preset.name()),
            pass: diff <= r.tolerance,
            detail: format!("{} (reference {}, tolerance {})", counts[i], r.examples[i], r.tolerance),
        });
    }
    if let Some(h) = r.histograms {
        for (i, name) in SplitName::ALL.iter().enumerate() {
            let got = manifest.splits.get(*name).chord_histogram;
            out.push(Check {
                name: format!("{} {name} dyad/triad/tetrad", preset.name()),
                pass: got == h[i],
                detail: format!("{:?} (reference {:?})", got, h[i]),
            });
        }
    }
    if let Some(p) = r.unique_pitches {
        out.push(Check {
            name: format!("{} unique pitches", preset.name()),
            pass: manifest.unique_pitch_count == p,
            detail: format!("{} (reference {p})", manifest.unique_pitch_count),
        });
    }
    out
}

/// Corpus file from the config, else from the source's environment variable.
pub fn resolve_corpus(cfg: &RunConfig) -> Result<PathBuf> {
    let env = match cfg.build.source {
        CorpusKind::Jsb => JSB_CORPUS_ENV,
        CorpusKind::Jazznet => JAZZNET_CORPUS_ENV,
    };
    let path = match &cfg.build.corpus_path {
        Some(p) => p.clone(),
        None => match std::env::var_os(env) {
            Some(p) if !p.is_empty() => PathBuf::from(p),
            _ => {
                return Err(Error::Environment {
                    message: "no corpus configured".into(),
                    hint: format!("set build.corpus_path or the {env} environment variable"),
                })
            }
        },
    };
    if !path.is_file() {
        return Err(Error::Environment {
            message: format!("corpus {} does not exist", path.display()),
            hint: format!("point build.corpus_path or {env} at the corpus file"),
        });
    }
    Ok(path)
}

fn is_nonempty_dir(p: &Path) -> bool {
    std::fs::read_dir(p).map(|mut d| d.next().is_some()).unwrap_or(false)
}

#[derive(Debug, Clone)]
pub struct BuildOutcome {
    /// `None` for a dry run.
    pub manifest: Option<DatasetManifest>,
    pub planned: [usize; 3],
    pub checks: Vec<Check>,
}

/// Builds a dataset into `out`, which must not exist or be empty.
///
/// A dry run resolves the corpus and soundfont and computes the split plan
/// without writing anything.
pub fn dataset_build(cfg: &RunConfig, out: &Path, dry_run: bool) -> Result<BuildOutcome> {
    cfg.validate()?;
    if is_nonempty_dir(out) {
        return Err(Error::config(format!("{} already exists and is not empty", out.display())));
    }
    let corpus = resolve_corpus(cfg)?;
    let synth = SynthBackend::from_config(&cfg.build)?;
    let columns = load_columns(&corpus)?;
    let unique = extract_unique_chords(&columns)?;
    let plan = BuildPlan::new(&unique, &cfg.build)?;
    let planned = plan.example_counts();
    log::info!("{} unique chords, planned examples {planned:?}", unique.len());
    if dry_run {
        return Ok(BuildOutcome { manifest: None, planned, checks: Vec::new() });
    }
    let pipeline = NotePipeline::new(Box::new(synth), &cfg.build)?;
    let manifest = build_splits(&plan, &pipeline, &cfg.build, out, |split, done, total| {
        log::info!("{split}: {done}/{total}");
    })?;
    let checks = match cfg.preset.as_deref().map(DatasetPreset::from_str) {
        Some(Ok(p)) => compare_reference(&manifest, p),
        _ => Vec::new(),
    };
    Ok(BuildOutcome { manifest: Some(manifest), planned, checks })
}

/// Pitches of the dataset and the instruments its mode can produce.
pub fn label_space(manifest: &DatasetManifest) -> LabelSpace {
    let instruments = match manifest.config.instrument_mode {
        InstrumentMode::Single => vec![InstrumentId::Piano],
        InstrumentMode::Multi => InstrumentId::ALL.to_vec(),
    };
    LabelSpace::with_instruments(manifest.pitches.clone(), instruments)
}

/// Hash of the manifest's file checksums, pinned into every report.
pub fn dataset_checksum(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    for (k, v) in &ds.manifest.files {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

fn open_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let root = cfg.dataset.as_ref().ok_or_else(|| Error::config("no dataset directory given (set `dataset` or pass --dataset)"))?;
    if !root.is_dir() {
        return Err(Error::Environment {
            message: format!("dataset {} does not exist", root.display()),
            hint: "build it first with `dataset build`".into(),
        });
    }
    read_dataset(root)
}

fn run_dir(cfg: &RunConfig) -> Result<&Path> {
    cfg.run_dir.as_deref().ok_or_else(|| Error::config("no run directory given (set `run_dir` or pass --out)"))
}

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed_{seed}"))
}

fn check_input_shape(shape: (usize, usize), manifest: &DatasetManifest) -> Result<()> {
    if shape != (manifest.n_mels, manifest.frames) {
        return Err(Error::config(format!(
            "model input {:?} does not match dataset spectrograms {:?}",
            shape,
            (manifest.n_mels, manifest.frames)
        )));
    }
    Ok(())
}

fn for_seeds<T: Send>(cfg: &RunConfig, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    if cfg.parallel {
        cfg.seeds.par_iter().map(|&s| f(s)).collect()
    } else {
        cfg.seeds.iter().map(|&s| f(s)).collect()
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Evaluates on each configured split.
pub fn evaluate(
    model: &dyn Decomposer,
    probe: Option<&dyn Probe>,
    ds: &Dataset,
    cfg: &RunConfig,
    seeds: Vec<u64>,
) -> Result<MetricsReport> {
    let space = label_space(&ds.manifest);
    let mut report = MetricsReport::new(model.name(), seeds);
    report.dataset_checksum = Some(dataset_checksum(ds));
    for s in &cfg.eval.splits {
        let split = ds.load_split(SplitName::from_str(s)?)?;
        let (m, _) = evaluate_split(model, &split, probe, &space, cfg.eval.threshold_db)?;
        report.splits.insert(s.clone(), m);
    }
    Ok(report)
}

fn finish_runs(cfg: &RunConfig, root: &Path, reports: &[MetricsReport]) -> Result<MetricsReport> {
    let agg = aggregate_seeds(reports)?;
    write_text(&root.join(METRICS_FILE), &agg.to_json()?)?;
    write_text(&root.join(RUN_CONFIG_FILE), &cfg.to_toml()?)?;
    Ok(agg)
}

fn label_for(cfg: &RunConfig) -> String {
    cfg.preset.clone().unwrap_or_else(|| match cfg.family {
        Family::Musicslots => "musicslots".into(),
        Family::Baseline => format!("{:?}", cfg.baseline.kind).to_lowercase(),
        Family::GtEcho => "gt-echo".into(),
    })
}

/// Trains one model per seed into `run_dir/seed_<s>`, evaluates each and
/// writes the across-seed aggregate to `run_dir/metrics.json`.
///
/// Existing checkpoints are a collision unless `resume` is set.
pub fn train_run(cfg: &RunConfig, resume: bool, dry_run: bool) -> Result<MetricsReport> {
    cfg.validate()?;
    let root = run_dir(cfg)?;
    let ds = open_dataset(cfg)?;
    let space = label_space(&ds.manifest);
    let mut baseline_cfg = cfg.baseline.clone();
    match cfg.family {
        Family::GtEcho => return Err(Error::config("gt-echo has no parameters to train; use `eval`")),
        Family::Musicslots => check_input_shape(cfg.model.input_shape, &ds.manifest)?,
        Family::Baseline => {
            check_input_shape(baseline_cfg.input_shape, &ds.manifest)?;
            if baseline_cfg.kind == BaselineKind::SupervisedCnn {
                if baseline_cfg.output_size == 0 {
                    baseline_cfg.output_size = space.multi_hot_len();
                } else if baseline_cfg.output_size != space.multi_hot_len() {
                    return Err(Error::config(format!(
                        "baseline.output_size {} does not match the dataset's {} labels",
                        baseline_cfg.output_size,
                        space.multi_hot_len()
                    )));
                }
            }
            baseline_cfg.validate()?;
        }
    }
    for &s in &cfg.seeds {
        let p = RunPaths::new(seed_dir(root, s));
        if !resume && (p.model().exists() || p.log().exists()) {
            return Err(Error::config(format!("{} already holds a run; pass --resume or pick another --out", p.root.display())));
        }
    }
    if dry_run {
        return Ok(MetricsReport::new(label_for(cfg), cfg.seeds.clone()));
    }
    let train_split = ds.load_split(SplitName::Train)?;
    let label = label_for(cfg);
    let reports = for_seeds(cfg, |seed| {
        let run = RunPaths::new(seed_dir(root, seed));
        let tcfg = TrainConfig { seed, ..cfg.train.clone() };
        let report = match cfg.family {
            Family::Musicslots => {
                let model = MusicSlots::new(cfg.model.clone(), DType::F32, seed)?;
                let s = train(&model, &train_split, &tcfg, &run, resume)?;
                log::info!("seed {seed}: {} steps, final loss {:?}", s.steps_completed, s.final_loss);
                let dec = SlotDecomposer::new(model, label.clone(), cfg.eval.noise_seed);
                evaluate(&dec, None, &ds, cfg, vec![seed])?
            }
            Family::Baseline => {
                let model = Baseline::new(baseline_cfg.clone(), DType::F32, seed)?;
                let supervised = model.config.kind == BaselineKind::SupervisedCnn;
                let t = BaselineTrainable { model, space: supervised.then(|| space.clone()) };
                let s = train(&t, &train_split, &tcfg, &run, resume)?;
                log::info!("seed {seed}: {} steps, final loss {:?}", s.steps_completed, s.final_loss);
                let dec = BaselineDecomposer::new(t.model, label.clone(), cfg.eval.noise_seed);
                let probe: Option<&dyn Probe> = if supervised { Some(&DirectMultiHot) } else { None };
                evaluate(&dec, probe, &ds, cfg, vec![seed])?
            }
            Family::GtEcho => unreachable!("rejected above"),
        };
        write_text(&run.root.join(METRICS_FILE), &report.to_json()?)?;
        Ok(report)
    })?;
    finish_runs(cfg, root, &reports)
}

/// Checkpoint for `seed` under `path`: the file itself, `seed_<s>/model.safetensors`
/// or `model.safetensors`.
pub fn resolve_checkpoint(path: &Path, seed: u64) -> Result<PathBuf> {
    if path.is_file() {
        return Ok(path.to_path_buf());
    }
    let candidates = [seed_dir(path, seed).join("model.safetensors"), path.join("model.safetensors")];
    candidates.iter().find(|p| p.is_file()).cloned().ok_or_else(|| Error::Environment {
        message: format!("no checkpoint for seed {seed} under {}", path.display()),
        hint: "train the model first or pass the checkpoint file".into(),
    })
}

enum Backbone {
    Slots(MusicSlots),
    Baseline(Baseline),
}

fn load_backbone(path: &Path) -> Result<Backbone> {
    let ck = load_checkpoint(path)?;
    match ck.kind()? {
        MusicSlots::KIND => Ok(Backbone::Slots(MusicSlots::from_checkpoint(&ck)?)),
        Baseline::KIND => Ok(Backbone::Baseline(Baseline::from_checkpoint(&ck)?)),
        other => Err(Error::config(format!("{} holds a '{other}', not a model", path.display()))),
    }
}

/// Trains a read-out probe per seed on a frozen backbone.
///
/// Slot models get a per-slot pitch/instrument probe fed by Hungarian-matched
/// slots; autoencoders get a linear multi-label probe on the latent mean.
pub fn probe_run(cfg: &RunConfig, resume: bool, dry_run: bool) -> Result<MetricsReport> {
    cfg.validate()?;
    let root = run_dir(cfg)?;
    let ds = open_dataset(cfg)?;
    let backbone = cfg.backbone.as_deref().ok_or_else(|| Error::config("no backbone given (set `backbone` or pass --backbone)"))?;
    let space = label_space(&ds.manifest);
    let paths: Vec<PathBuf> = cfg.seeds.iter().map(|&s| resolve_checkpoint(backbone, s)).collect::<Result<_>>()?;
    for &s in &cfg.seeds {
        let p = RunPaths::new(seed_dir(root, s));
        if !resume && (p.model().exists() || p.log().exists()) {
            return Err(Error::config(format!("{} already holds a run; pass --resume or pick another --out", p.root.display())));
        }
    }
    let label = format!("{} + probe", label_for(cfg));
    if dry_run {
        for p in &paths {
            load_backbone(p)?;
        }
        return Ok(MetricsReport::new(label, cfg.seeds.clone()));
    }
    let train_split = ds.load_split(SplitName::Train)?;
    let reports = for_seeds(cfg, |seed| {
        let idx = cfg.seeds.iter().position(|&s| s == seed).expect("seed listed");
        let run = RunPaths::new(seed_dir(root, seed));
        let tcfg = TrainConfig { seed, ..cfg.probe.clone() };
        let trainer = match load_backbone(&paths[idx])? {
            Backbone::Slots(m) => {
                check_input_shape(m.config.input_shape, &ds.manifest)?;
                let probe = SlotProbe::new(space.clone(), m.config.slot_dim, seed)?;
                ProbeTrainer::Slot { backbone: m, probe }
            }
            Backbone::Baseline(m) => {
                check_input_shape(m.config.input_shape, &ds.manifest)?;
                if m.config.kind == BaselineKind::SupervisedCnn {
                    return Err(Error::config("the supervised CNN predicts labels directly; evaluate it with `eval`"));
                }
                let probe = LatentProbe::new(space.clone(), m.config.latent_dim, seed)?;
                ProbeTrainer::Latent { backbone: m, probe }
            }
        };
        train(&trainer, &train_split, &tcfg, &run, resume)?;
        let report = match trainer {
            ProbeTrainer::Slot { backbone, probe } => {
                let dec = SlotDecomposer::new(backbone, label.clone(), cfg.eval.noise_seed);
                evaluate(&dec, Some(&probe), &ds, cfg, vec![seed])?
            }
            ProbeTrainer::Latent { backbone, probe } => {
                let dec = BaselineDecomposer::new(backbone, label.clone(), cfg.eval.noise_seed);
                evaluate(&dec, Some(&probe), &ds, cfg, vec![seed])?
            }
        };
        write_text(&run.root.join(METRICS_FILE), &report.to_json()?)?;
        Ok(report)
    })?;
    finish_runs(cfg, root, &reports)
}

fn load_probe_any(path: &Path) -> Result<Box<dyn Probe>> {
    let ck = load_checkpoint(path)?;
    match ck.kind()? {
        SlotProbe::KIND => Ok(Box::new(SlotProbe::load(path)?)),
        LatentProbe::KIND => Ok(Box::new(LatentProbe::load(path)?)),
        other => Err(Error::config(format!("{} holds a '{other}', not a probe", path.display()))),
    }
}

/// Evaluates trained checkpoints (and optionally probes) per seed, or the
/// ground-truth echo when the family is `gt-echo`. Writes `eval.json`
/// into the run directory when one is configured.
pub fn eval_run(cfg: &RunConfig, checkpoint: Option<&Path>, probe: Option<&Path>, dry_run: bool) -> Result<MetricsReport> {
    cfg.validate()?;
    let ds = open_dataset(cfg)?;
    let space = label_space(&ds.manifest);
    if cfg.family == Family::GtEcho {
        if dry_run {
            return Ok(MetricsReport::new("gt-echo", vec![]));
        }
        let echo = GtEcho { num_slots: cfg.model.num_slots, space: Some(space.clone()) };
        let report = evaluate(&echo, Some(&OneHotProbe { space }), &ds, cfg, vec![])?;
        if let Some(root) = &cfg.run_dir {
            write_text(&root.join(EVAL_FILE), &report.to_json()?)?;
        }
        return Ok(report);
    }
    let ckpt = checkpoint
        .or(cfg.backbone.as_deref())
        .or(cfg.run_dir.as_deref())
        .ok_or_else(|| Error::config("no checkpoint given (pass --checkpoint)"))?;
    let paths: Vec<PathBuf> = cfg.seeds.iter().map(|&s| resolve_checkpoint(ckpt, s)).collect::<Result<_>>()?;
    let probe_paths: Option<Vec<PathBuf>> = match probe {
        Some(p) => Some(cfg.seeds.iter().map(|&s| resolve_checkpoint(p, s)).collect::<Result<_>>()?),
        None => None,
    };
    if dry_run {
        return Ok(MetricsReport::new(label_for(cfg), cfg.seeds.clone()));
    }
    let label = label_for(cfg);
    let reports = for_seeds(cfg, |seed| {
        let idx = cfg.seeds.iter().position(|&s| s == seed).expect("seed listed");
        let probe = probe_paths.as_ref().map(|p| load_probe_any(&p[idx])).transpose()?;
        match load_backbone(&paths[idx])? {
            Backbone::Slots(m) => {
                check_input_shape(m.config.input_shape, &ds.manifest)?;
                let dec = SlotDecomposer::new(m, label.clone(), cfg.eval.noise_seed);
                evaluate(&dec, probe.as_deref(), &ds, cfg, vec![seed])
            }
            Backbone::Baseline(m) => {
                check_input_shape(m.config.input_shape, &ds.manifest)?;
                let direct = m.config.kind == BaselineKind::SupervisedCnn;
                let dec = BaselineDecomposer::new(m, label.clone(), cfg.eval.noise_seed);
                let p: Option<&dyn Probe> = if direct { Some(&DirectMultiHot) } else { probe.as_deref() };
                evaluate(&dec, p, &ds, cfg, vec![seed])
            }
        }
    })?;
    let agg = aggregate_seeds(&reports)?;
    if let Some(root) = &cfg.run_dir {
        write_text(&root.join(EVAL_FILE), &agg.to_json()?)?;
    }
    Ok(agg)
}

/// Trains and evaluates the five ablation rows under `run_dir/<row preset>`,
/// keeping every setting of `cfg` except stride, mask mode and the implicit step.
pub fn ablate_run(cfg: &RunConfig, resume: bool, dry_run: bool) -> Result<Vec<MetricsReport>> {
    cfg.validate()?;
    let root = run_dir(cfg)?.to_path_buf();
    let mut out = Vec::with_capacity(ABLATION_LADDER.len());
    for (row, preset) in ABLATION_LADDER {
        let mut preset_cfg = RunConfig::default();
        Preset::from_str(preset)?.apply(&mut preset_cfg);
        let mut row_cfg = cfg.clone();
        row_cfg.family = Family::Musicslots;
        row_cfg.preset = Some(preset.to_string());
        row_cfg.model.encoder_stride = preset_cfg.model.encoder_stride;
        row_cfg.model.mask_norm = preset_cfg.model.mask_norm;
        row_cfg.model.implicit_diff = preset_cfg.model.implicit_diff;
        row_cfg.run_dir = Some(root.join(preset));
        let mut report = train_run(&row_cfg, resume, dry_run)?;
        report.model = row.to_string();
        out.push(report);
    }
    if !dry_run {
        write_text(&root.join("ablation.txt"), &render_table(&out))?;
    }
    Ok(out)
}

/// Writes `example_<i>.png` (input, slots, matched notes) and
/// `example_<i>_masks.png` for every configured example, plus
/// `example_<i>_compare.png` when `compare` models are given.
pub fn viz_run(cfg: &RunConfig, checkpoint: &Path, compare: &[PathBuf], out: &Path, dry_run: bool) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let ds = open_dataset(cfg)?;
    let split = ds.load_split(SplitName::from_str(&cfg.viz.split)?)?;
    for &i in &cfg.viz.examples {
        if i >= split.len() {
            return Err(Error::invalid(format!("example {i} is out of range for {} ({} examples)", cfg.viz.split, split.len())));
        }
    }
    let load = |p: &Path| -> Result<MusicSlots> {
        match load_backbone(&resolve_checkpoint(p, cfg.seeds[0])?)? {
            Backbone::Slots(m) => {
                check_input_shape(m.config.input_shape, &ds.manifest)?;
                Ok(m)
            }
            Backbone::Baseline(_) => Err(Error::config("figures need a slot model checkpoint")),
        }
    };
    let model = load(checkpoint)?;
    let others: Vec<MusicSlots> = compare.iter().map(|p| load(p)).collect::<Result<_>>()?;
    if dry_run {
        return Ok(Vec::new());
    }
    let mut written = Vec::new();
    for &i in &cfg.viz.examples {
        let r = split.example(i);
        let fig = viz::slot_figure(&model, &r, cfg.eval.noise_seed)?;
        let p = out.join(format!("example_{i}.png"));
        fig.grid.save(&p, cfg.viz.scale, fig.grid.value_range())?;
        written.push(p);
        let p = out.join(format!("example_{i}_masks.png"));
        fig.masks.save(&p, cfg.viz.scale, (0.0, 1.0))?;
        written.push(p);
        if !others.is_empty() {
            let refs: Vec<&MusicSlots> = others.iter().collect();
            let g = viz::comparison_figure(&refs, &r, cfg.eval.noise_seed)?;
            let p = out.join(format!("example_{i}_compare.png"));
            g.save(&p, cfg.viz.scale, g.value_range())?;
            written.push(p);
        }
    }
    Ok(written)
}

#[derive(Debug, Parser)]
#[command(name = "musicslots", version, about = "Decompose chord spectrograms into notes with slot attention")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Named preset whose defaults the config file overrides.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Single seed.
    #[arg(long, global = true, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// A count N (seeds 0..N) or a comma-separated list.
    #[arg(long, global = true)]
    pub seeds: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Built dataset directory.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Validate and report without writing anything.
    #[arg(long, global = true)]
    pub dry_run: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dataset operations.
    Dataset {
        #[command(subcommand)]
        action: DatasetAction,
        #[command(flatten)]
        common: Common,
    },
    /// Train one model per seed, then evaluate.
    Train {
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Train read-out probes on a frozen backbone.
    Probe {
        /// Run directory or checkpoint of the backbone.
        #[arg(long)]
        backbone: Option<PathBuf>,
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate checkpoints (or `--preset gt-echo`).
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        probe: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train and compare the architectural ablation ladder.
    Ablate {
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Render decomposition figures.
    Viz {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Further slot models drawn under the ground truth, one row each.
        #[arg(long, num_args = 1..)]
        compare: Vec<PathBuf>,
        /// Example indices in the configured split.
        #[arg(long, value_delimiter = ',')]
        examples: Vec<usize>,
        #[arg(long)]
        split: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetAction {
    /// Synthesize a dataset from a chord corpus.
    Build,
}

/// Parses `--seeds`: a bare count `N` means seeds `0..N`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    if !s.contains(',') {
        let n: u64 = s.parse().map_err(|_| Error::config(format!("bad --seeds '{s}'")))?;
        if n == 0 {
            return Err(Error::config("--seeds needs at least one seed"));
        }
        return Ok((0..n).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| Error::config(format!("bad seed '{p}'"))))
        .collect()
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(common.config.as_deref(), common.preset.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
    }
    if let Some(s) = &common.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(o) = &common.out {
        cfg.run_dir = Some(o.clone());
    }
    if let Some(d) = &common.dataset {
        cfg.dataset = Some(d.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(r: &MetricsReport) {
    println!("{}", render_table(std::slice::from_ref(r)));
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dataset { action: DatasetAction::Build, common } => {
            let mut cfg = resolve(&common)?;
            // build seeds come from the dataset config unless given on the command line
            if let Some(s) = common.seed {
                cfg.build.rng_seed = s;
            }
            let out = cfg.run_dir.clone().ok_or_else(|| Error::config("dataset build needs --out"))?;
            let o = dataset_build(&cfg, &out, common.dry_run)?;
            println!("planned examples: train {} / val {} / test {}", o.planned[0], o.planned[1], o.planned[2]);
            if let Some(m) = &o.manifest {
                for name in SplitName::ALL {
                    let s = m.splits.get(name);
                    println!("{name}: {} examples, {} chords, histogram {:?}", s.examples, s.chords, s.chord_histogram);
                }
                println!("unique pitches: {}", m.unique_pitch_count);
            }
            for c in &o.checks {
                println!("{c}");
            }
        }
        Command::Train { resume, common } => {
            let cfg = resolve(&common)?;
            let r = train_run(&cfg, resume, common.dry_run)?;
            if !common.dry_run {
                print_report(&r);
            }
        }
        Command::Probe { backbone, resume, common } => {
            let mut cfg = resolve(&common)?;
            if backbone.is_some() {
                cfg.backbone = backbone;
            }
            let r = probe_run(&cfg, resume, common.dry_run)?;
            if !common.dry_run {
                print_report(&r);
            }
        }
        Command::Eval { checkpoint, probe, common } => {
            let cfg = resolve(&common)?;
            let r = eval_run(&cfg, checkpoint.as_deref(), probe.as_deref(), common.dry_run)?;
            if !common.dry_run {
                print_report(&r);
            }
        }
        Command::Ablate { resume, common } => {
            let cfg = resolve(&common)?;
            let rows = ablate_run(&cfg, resume, common.dry_run)?;
            if !common.dry_run {
                println!("{}", render_table(&rows));
            }
        }
        Command::Viz { checkpoint, compare, examples, split, common } => {
            let mut cfg = resolve(&common)?;
            if !examples.is_empty() {
                cfg.viz.examples = examples;
            }
            if let Some(s) = split {
                cfg.viz.split = s;
            }
            let out = cfg.run_dir.clone().ok_or_else(|| Error::config("viz needs --out"))?;
            for p in viz_run(&cfg, &checkpoint, &compare, &out, common.dry_run)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ExitClass::Validation as i32 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_class() as i32
        }
    }
}
