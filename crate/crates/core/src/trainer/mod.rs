//! Optimization loops: schedules, Adam with global-norm clipping, seeded
//! batching, CSV logs and resumable checkpoints.

pub mod probe;

pub use probe::{LatentProbe, ProbeTrainer, SlotProbe};

use std::collections::{BTreeMap, HashMap};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use candle_core::{Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{Baseline, BaselineKind};
use crate::chordset::{derive_seed, ExampleRecord, SplitData};
use crate::error::{Error, Result};
use crate::evalkit::LabelSpace;
use crate::slotcore::checkpoint::{load_checkpoint, save_checkpoint};
use crate::slotcore::{reconstruction_loss, stack_chords, MusicSlots, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub max_lr: f64,
    pub warmup_steps: usize,
    /// Half-life of the exponential decay; `None` keeps the rate constant.
    pub decay_steps: Option<usize>,
    pub grad_clip_norm: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::slots()
    }
}

impl TrainConfig {
    pub fn slots() -> Self {
        Self {
            steps: 100_000,
            batch_size: 32,
            max_lr: 1e-4,
            warmup_steps: 10_000,
            decay_steps: Some(500_000),
            grad_clip_norm: Some(1.0),
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            checkpoint_every: 5_000,
            log_every: 1,
        }
    }

    pub fn autoencoder() -> Self {
        Self { warmup_steps: 0, decay_steps: Some(100_000), ..Self::slots() }
    }

    pub fn probe() -> Self {
        Self {
            steps: 10_000,
            max_lr: 1e-3,
            warmup_steps: 0,
            decay_steps: None,
            grad_clip_norm: None,
            checkpoint_every: 1_000,
            ..Self::slots()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.max_lr > 0.0) || !self.max_lr.is_finite() {
            return Err(Error::config("max_lr must be positive"));
        }
        if self.decay_steps == Some(0) {
            return Err(Error::config("decay_steps must be positive"));
        }
        if matches!(self.grad_clip_norm, Some(c) if !(c > 0.0)) {
            return Err(Error::config("grad_clip_norm must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::config("invalid Adam coefficients"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every must be positive"));
        }
        Ok(())
    }
}

/// `max_lr * min(step / warmup, 1) * 0.5^(step / decay)`.
pub fn lr_schedule(step: usize, cfg: &TrainConfig) -> f64 {
    let warm = if cfg.warmup_steps == 0 {
        1.0
    } else {
        (step as f64 / cfg.warmup_steps as f64).min(1.0)
    };
    let decay = match cfg.decay_steps {
        Some(d) => 0.5f64.powf(step as f64 / d as f64),
        None => 1.0,
    };
    cfg.max_lr * warm * decay
}

/// Adam over a fixed parameter list with optional global-norm clipping.
#[derive(Debug, Clone)]
pub struct Adam {
    names: Vec<String>,
    vars: Vec<Var>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    pub t: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub grad_norm: f64,
    pub clipped_norm: f64,
}

impl Adam {
    pub fn new(params: &ParamStore, cfg: &TrainConfig) -> Result<Self> {
        let names = params.names();
        let vars: Vec<Var> = names.iter().map(|n| params.get(n).expect("listed").clone()).collect();
        let m = vars.iter().map(|v| v.as_tensor().zeros_like()).collect::<candle_core::Result<_>>()?;
        let v = vars.iter().map(|v| v.as_tensor().zeros_like()).collect::<candle_core::Result<_>>()?;
        Ok(Self { names, vars, m, v, t: 0, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.adam_eps })
    }

    /// Applies one update. Parameters without a gradient are skipped.
    pub fn step(&mut self, grads: &candle_core::backprop::GradStore, lr: f64, clip: Option<f64>) -> Result<StepStats> {
        let gs: Vec<Option<Tensor>> = self.vars.iter().map(|v| grads.get(v.as_tensor()).cloned()).collect();
        let mut sq = 0.0f64;
        for g in gs.iter().flatten() {
            sq += g.to_dtype(candle_core::DType::F64)?.sqr()?.sum_all()?.to_vec0::<f64>()?;
        }
        let norm = sq.sqrt();
        if !norm.is_finite() {
            return Err(Error::Numerical { step: self.t, message: format!("gradient norm {norm}") });
        }
        let scale = match clip {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, var) in self.vars.iter().enumerate() {
            let Some(g) = &gs[i] else { continue };
            let g = (g * scale)?;
            self.m[i] = ((&self.m[i] * self.beta1)? + (&g * (1.0 - self.beta1))?)?;
            self.v[i] = ((&self.v[i] * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?;
            let mhat = (&self.m[i] / bc1)?;
            let vhat = (&self.v[i] / bc2)?;
            let update = (mhat / (vhat.sqrt()? + self.eps)?)?;
            var.set(&(var.as_tensor() - (update * lr)?)?)?;
        }
        Ok(StepStats { grad_norm: norm, clipped_norm: norm * scale })
    }

    pub fn state_tensors(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (i, n) in self.names.iter().enumerate() {
            out.insert(format!("adam.m.{n}"), self.m[i].clone());
            out.insert(format!("adam.v.{n}"), self.v[i].clone());
        }
        out
    }

    pub fn load_state(&mut self, tensors: &BTreeMap<String, Tensor>, t: usize) -> Result<()> {
        for (i, n) in self.names.iter().enumerate() {
            for (prefix, slot) in [("adam.m.", &mut self.m[i]), ("adam.v.", &mut self.v[i])] {
                let key = format!("{prefix}{n}");
                let src = tensors.get(&key).ok_or_else(|| Error::invalid(format!("optimizer state lacks {key}")))?;
                if src.dims() != slot.dims() {
                    return Err(Error::Shape { expected: format!("{key} {:?}", slot.dims()), actual: format!("{:?}", src.dims()) });
                }
                *slot = src.to_dtype(slot.dtype())?;
            }
        }
        self.t = t;
        Ok(())
    }
}

/// Anything the loop can optimize.
pub trait Trainable {
    fn params(&self) -> &ParamStore;

    /// Loss of one batch. `rng` is private to this step.
    fn batch_loss(&self, batch: &[ExampleRecord], rng: &mut ChaCha8Rng) -> Result<Tensor>;

    /// Writes a self-describing model checkpoint.
    fn save_model(&self, path: &Path) -> Result<()>;
}

impl Trainable for MusicSlots {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn batch_loss(&self, batch: &[ExampleRecord], rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let x = stack_chords(batch, self.dtype())?;
        let out = self.forward(&x, rng)?;
        reconstruction_loss(&out.pred_chord_db, &x)
    }

    fn save_model(&self, path: &Path) -> Result<()> {
        self.save(path)
    }
}

/// A baseline paired with the label space its supervised head predicts.
pub struct BaselineTrainable {
    pub model: Baseline,
    pub space: Option<LabelSpace>,
}

impl Trainable for BaselineTrainable {
    fn params(&self) -> &ParamStore {
        &self.model.params
    }

    fn batch_loss(&self, batch: &[ExampleRecord], rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let x = stack_chords(batch, self.model.dtype())?;
        let out = self.model.forward(&x, rng)?;
        let targets = match self.model.config.kind {
            BaselineKind::SupervisedCnn => {
                let space = self.space.as_ref().ok_or_else(|| Error::invalid("supervised CNN needs a label space"))?;
                Some(multi_hot_batch(space, batch, self.model.dtype())?)
            }
            _ => None,
        };
        self.model.loss(&out, &x, targets.as_ref())
    }

    fn save_model(&self, path: &Path) -> Result<()> {
        self.model.save(path)
    }
}

pub fn multi_hot_batch(space: &LabelSpace, batch: &[ExampleRecord], dtype: candle_core::DType) -> Result<Tensor> {
    let mut v = Vec::with_capacity(batch.len() * space.multi_hot_len());
    for r in batch {
        v.extend(space.multi_hot(&r.labels)?.into_iter().map(|b| b as u8 as f32));
    }
    Ok(Tensor::from_vec(v, (batch.len(), space.multi_hot_len()), &candle_core::Device::Cpu)?.to_dtype(dtype)?)
}

/// Indices for step `step`: epochs are shuffled with seeds derived from the
/// master seed, and a batch may straddle two epochs.
pub fn batch_indices(n: usize, batch: usize, step: usize, seed: u64) -> Vec<usize> {
    let epoch_order = |e: usize| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed ^ 0xDA7A, e as u64)));
        idx
    };
    let start = step * batch;
    let mut out = Vec::with_capacity(batch);
    let mut cached: Option<(usize, Vec<usize>)> = None;
    for p in start..start + batch {
        let (e, i) = (p / n, p % n);
        if cached.as_ref().map(|c| c.0) != Some(e) {
            cached = Some((e, epoch_order(e)));
        }
        out.push(cached.as_ref().unwrap().1[i]);
    }
    out
}

/// Fresh RNG for the stochastic parts of step `step`.
pub fn step_rng(seed: u64, step: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed ^ 0x5107, step as u64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub log: Vec<LogRow>,
    pub steps_completed: usize,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub model_path: PathBuf,
}

/// Run directory layout.
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn log(&self) -> PathBuf {
        self.root.join("log.csv")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model.safetensors")
    }
    pub fn state(&self) -> PathBuf {
        self.root.join("optimizer.safetensors")
    }
    pub fn step_checkpoint(&self, step: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("step_{step:07}.safetensors"))
    }
}

pub const LOG_HEADER: &str = "step,loss,lr,grad_norm";

/// Optimizes `model` on `data`. Logs are appended to `run/log.csv`; the
/// model and optimizer state are written every `checkpoint_every` steps and
/// at the end. With `resume`, training continues from the saved state.
///
/// A non-finite loss stops the run with [`Error::Numerical`]; the last
/// checkpoint on disk is left untouched.
pub fn train(model: &dyn Trainable, data: &SplitData, cfg: &TrainConfig, run: &RunPaths, resume: bool) -> Result<TrainSummary> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    std::fs::create_dir_all(&run.root).map_err(|e| Error::io(&run.root, e))?;
    let mut opt = Adam::new(model.params(), cfg)?;
    let mut start = 0;
    if resume && run.state().exists() {
        start = load_state(model.params(), &mut opt, &run.state())?;
    }
    let new_log = !run.log().exists() || start == 0;
    let mut log_file = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(!new_log)
        .truncate(new_log)
        .open(run.log())
        .map_err(|e| Error::io(run.log(), e))?;
    if new_log {
        writeln!(log_file, "{LOG_HEADER}").map_err(|e| Error::io(run.log(), e))?;
    }
    let mut summary = TrainSummary {
        log: Vec::new(),
        steps_completed: start,
        initial_loss: None,
        final_loss: None,
        model_path: run.model(),
    };
    for step in start..cfg.steps {
        let idx = batch_indices(data.len(), cfg.batch_size, step, cfg.seed);
        let batch: Vec<ExampleRecord> = idx.iter().map(|&i| data.example(i)).collect();
        let loss = model.batch_loss(&batch, &mut step_rng(cfg.seed, step))?;
        let loss_value = loss.to_dtype(candle_core::DType::F64)?.to_vec0::<f64>()?;
        if !loss_value.is_finite() {
            return Err(Error::Numerical { step, message: format!("loss is {loss_value}") });
        }
        let grads = loss.backward()?;
        let lr = lr_schedule(step, cfg);
        let stats = opt.step(&grads, lr, cfg.grad_clip_norm).map_err(|e| match e {
            Error::Numerical { message, .. } => Error::Numerical { step, message },
            other => other,
        })?;
        let row = LogRow { step, loss: loss_value, lr, grad_norm: stats.clipped_norm };
        if step % cfg.log_every == 0 || step + 1 == cfg.steps {
            writeln!(log_file, "{},{},{},{}", row.step, row.loss, row.lr, row.grad_norm)
                .map_err(|e| Error::io(run.log(), e))?;
        }
        summary.initial_loss.get_or_insert(loss_value);
        summary.final_loss = Some(loss_value);
        summary.log.push(row);
        summary.steps_completed = step + 1;
        let done = step + 1;
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.steps {
            model.save_model(&run.step_checkpoint(done))?;
            save_state(model.params(), &opt, done, &run.state())?;
            model.save_model(&run.model())?;
        }
        log::debug!("step {step} loss {loss_value:.4} lr {lr:.3e} grad {:.3}", stats.grad_norm);
    }
    model.save_model(&run.model())?;
    save_state(model.params(), &opt, summary.steps_completed, &run.state())?;
    Ok(summary)
}

fn save_state(params: &ParamStore, opt: &Adam, step: usize, path: &Path) -> Result<()> {
    let mut tensors = opt.state_tensors();
    for (k, v) in params.tensors() {
        tensors.insert(format!("param.{k}"), v);
    }
    let mut meta = HashMap::new();
    meta.insert(crate::slotcore::checkpoint::KEY_KIND.into(), "train_state".into());
    meta.insert("step".into(), step.to_string());
    save_checkpoint(path, &tensors, meta)
}

fn load_state(params: &ParamStore, opt: &mut Adam, path: &Path) -> Result<usize> {
    let ck = load_checkpoint(path)?;
    let step: usize = ck.meta("step")?.parse().map_err(|_| Error::corrupt(path, "bad step"))?;
    let model: BTreeMap<String, Tensor> = ck
        .tensors
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("param.").map(|n| (n.to_string(), v.clone())))
        .collect();
    params.load(&model)?;
    opt.load_state(&ck.tensors, step)?;
    Ok(step)
}

/// Reads a CSV log written by [`train`].
pub fn read_log(path: &Path) -> Result<Vec<LogRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        return Err(Error::corrupt(path, "missing log header"));
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::corrupt(path, format!("bad log line '{l}'"));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(LogRow {
                step: f[0].parse().map_err(|_| bad())?,
                loss: f[1].parse().map_err(|_| bad())?,
                lr: f[2].parse().map_err(|_| bad())?,
                grad_norm: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::BaselineConfig;
    use crate::chordset::{InstrumentId, NoteLabel};
    use crate::slotcore::{MaskNorm, ModelConfig};
    use candle_core::DType;
    use ndarray::Array2;

    pub(crate) fn toy_split(n: usize, shape: (usize, usize)) -> SplitData {
        let records: Vec<ExampleRecord> = (0..n)
            .map(|i| {
                let rows = [(i * 3) % shape.0, (i * 5 + 2) % shape.0];
                let notes: Vec<Array2<f32>> = rows
                    .iter()
                    .map(|&r| Array2::from_shape_fn(shape, |(y, _)| if y == r { -5.0 } else { -80.0 }))
                    .collect();
                let chord = Array2::from_shape_fn(shape, |p| notes.iter().map(|n| n[p]).fold(-80.0f32, f32::max));
                ExampleRecord {
                    chord_db: chord,
                    note_masks: notes.iter().map(|n| n.mapv(|v| v >= -30.0)).collect(),
                    note_db: notes,
                    labels: rows
                        .iter()
                        .map(|&r| NoteLabel { pitch: 40 + r as u8, instrument: InstrumentId::Piano })
                        .collect(),
                }
            })
            .collect();
        SplitData::from_records(&records).unwrap()
    }

    fn tiny_slots() -> MusicSlots {
        let cfg = ModelConfig { mask_norm: MaskNorm::Softmax, ..ModelConfig::tiny() };
        MusicSlots::new(cfg, DType::F32, 0).unwrap()
    }

    fn quick(steps: usize) -> TrainConfig {
        TrainConfig {
            steps,
            batch_size: 4,
            max_lr: 1e-3,
            warmup_steps: 2,
            decay_steps: Some(1000),
            checkpoint_every: 3,
            ..TrainConfig::slots()
        }
    }

    #[test]
    fn schedule_examples() {
        let c = TrainConfig::slots();
        assert_eq!(lr_schedule(0, &c), 0.0);
        let at_warmup = lr_schedule(10_000, &c);
        assert!((at_warmup - 1e-4 * 0.5f64.powf(0.02)).abs() < 1e-18);
        assert!((at_warmup - 9.86e-5).abs() < 1e-7);
        let half = TrainConfig { warmup_steps: 10, decay_steps: Some(1000), ..c.clone() };
        assert!((lr_schedule(1000, &half) - 5e-5).abs() < 1e-18);
        let mut prev = f64::INFINITY;
        for s in (10_000..200_000).step_by(997) {
            let lr = lr_schedule(s, &c);
            assert!(lr <= prev);
            prev = lr;
        }
        assert_eq!(lr_schedule(123, &TrainConfig::probe()), 1e-3);
    }

    #[test]
    fn batches_cover_each_epoch_once() {
        let n = 10;
        let mut seen = vec![0; n];
        for step in 0..5 {
            for i in batch_indices(n, 4, step, 1) {
                seen[i] += 1;
            }
        }
        assert_eq!(seen, vec![2; n]);
        assert_eq!(batch_indices(n, 4, 3, 1), batch_indices(n, 4, 3, 1));
        assert_ne!(batch_indices(n, 4, 0, 1), batch_indices(n, 4, 0, 2));
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let m = tiny_slots();
        let data = toy_split(8, (8, 8));
        let cfg = TrainConfig { grad_clip_norm: Some(1e-3), ..quick(1) };
        let mut opt = Adam::new(&m.params, &cfg).unwrap();
        let batch: Vec<_> = (0..4).map(|i| data.example(i)).collect();
        let loss = m.batch_loss(&batch, &mut step_rng(0, 0)).unwrap();
        let s = opt.step(&loss.backward().unwrap(), 1e-3, cfg.grad_clip_norm).unwrap();
        assert!(s.grad_norm > 1e-3);
        assert!(s.clipped_norm <= 1e-3 * (1.0 + 1e-9));
    }

    #[test]
    fn same_seed_same_curve_and_resume_is_exact() {
        let data = toy_split(8, (8, 8));
        let dir = tempfile::tempdir().unwrap();
        let a = train(&tiny_slots(), &data, &quick(5), &RunPaths::new(dir.path().join("a")), false).unwrap();
        let b = train(&tiny_slots(), &data, &quick(5), &RunPaths::new(dir.path().join("b")), false).unwrap();
        assert_eq!(a.log, b.log);
        assert!(a.log.iter().all(|r| r.grad_norm <= 1.0 + 1e-9));

        // stop after three steps, then resume to five
        let run = RunPaths::new(dir.path().join("c"));
        train(&tiny_slots(), &data, &quick(3), &run, false).unwrap();
        let resumed = train(&tiny_slots(), &data, &quick(5), &run, true).unwrap();
        assert_eq!(resumed.log, a.log[3..].to_vec());
        let rows = read_log(&run.log()).unwrap();
        assert_eq!(rows.len(), 5);
        let fa = MusicSlots::load(&RunPaths::new(dir.path().join("a")).model()).unwrap();
        let fc = MusicSlots::load(&run.model()).unwrap();
        for (name, t) in fa.params.tensors() {
            let u = fc.params.get(&name).unwrap().as_tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap();
            assert_eq!(t.flatten_all().unwrap().to_vec1::<f32>().unwrap(), u, "{name}");
        }
    }

    #[test]
    fn nan_loss_aborts_and_keeps_checkpoint() {
        let data = toy_split(8, (8, 8));
        let dir = tempfile::tempdir().unwrap();
        let run = RunPaths::new(dir.path());
        let m = tiny_slots();
        train(&m, &data, &quick(3), &run, false).unwrap();
        let before = std::fs::read(run.model()).unwrap();
        // poison one parameter
        let v = m.params.get("decoder.out.bias").unwrap();
        v.set(&(v.as_tensor() * f64::NAN).unwrap()).unwrap();
        let err = train(&m, &data, &quick(6), &run, false).unwrap_err();
        assert!(matches!(err, Error::Numerical { step: 0, .. }));
        assert_eq!(std::fs::read(run.model()).unwrap(), before);
    }

    #[test]
    fn baselines_reduce_loss() {
        let data = toy_split(8, (16, 8));
        let dir = tempfile::tempdir().unwrap();
        for (i, kind) in [BaselineKind::Ae, BaselineKind::Vae, BaselineKind::SupervisedCnn].into_iter().enumerate() {
            let space = LabelSpace::with_instruments((40..56).collect(), vec![InstrumentId::Piano]);
            let cfg = BaselineConfig {
                kind,
                latent_dim: 8,
                input_shape: (16, 8),
                layers: 2,
                channels: 4,
                hidden: 8,
                output_size: space.multi_hot_len(),
                beta: 0.1,
            };
            let t = BaselineTrainable { model: Baseline::new(cfg, DType::F32, 0).unwrap(), space: Some(space) };
            let tc = TrainConfig { steps: 60, batch_size: 8, max_lr: 3e-3, warmup_steps: 0, checkpoint_every: 0, ..quick(60) };
            let s = train(&t, &data, &tc, &RunPaths::new(dir.path().join(i.to_string())), false).unwrap();
            assert!(s.final_loss.unwrap() < s.initial_loss.unwrap(), "{kind:?}: {:?}", (s.initial_loss, s.final_loss));
        }
    }
}
