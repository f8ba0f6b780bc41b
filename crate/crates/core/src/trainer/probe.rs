//! Linear read-outs trained on frozen backbones.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{multi_hot_batch, Trainable};
use crate::baselines::{bce_with_logits, Baseline};
use crate::chordset::{ExampleRecord, NoteLabel};
use crate::error::{Error, Result};
use crate::evalkit::{argmax, note_mse, ChordPrediction, Decomposition, LabelSpace, Probe};
use crate::slotcore::checkpoint::{load_checkpoint, save_checkpoint, KEY_CONFIG, KEY_KIND};
use crate::slotcore::nn::{Linear, ParamStore};
use crate::slotcore::{stack_chords, tensor_to_maps, MusicSlots};

/// Per-slot pitch and instrument heads.
#[derive(Debug, Clone)]
pub struct SlotProbe {
    pub space: LabelSpace,
    pub params: ParamStore,
    pitch: Linear,
    instrument: Linear,
}

impl SlotProbe {
    pub const KIND: &'static str = "slot_probe";

    pub fn new(space: LabelSpace, slot_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new(DType::F32);
        let pitch = Linear::new(&mut ps, "pitch", slot_dim, space.n_pitch(), true, &mut rng)?;
        let instrument = Linear::new(&mut ps, "instrument", slot_dim, space.n_instrument(), true, &mut rng)?;
        Ok(Self { space, params: ps, pitch, instrument })
    }

    /// (`[M, N_pitch]`, `[M, N_inst]`) logits for `[M, D_s]` slot vectors.
    pub fn logits(&self, slots: &Tensor) -> Result<(Tensor, Tensor)> {
        let s = slots.to_dtype(DType::F32)?;
        Ok((self.pitch.forward(&s)?, self.instrument.forward(&s)?))
    }

    fn slot_dim(&self) -> Result<usize> {
        Ok(self.pitch.weight.dim(1)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_probe(path, Self::KIND, &self.space, self.slot_dim()?, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (space, dim, tensors) = load_probe(path, Self::KIND)?;
        let p = Self::new(space, dim, 0)?;
        p.params.load(&tensors)?;
        Ok(p)
    }
}

impl Probe for SlotProbe {
    fn predict(&self, d: &Decomposition, matched: &[usize]) -> Result<ChordPrediction> {
        if matched.is_empty() {
            return Ok(ChordPrediction::Notes(Vec::new()));
        }
        let dim = self.slot_dim()?;
        let mut rows = Vec::with_capacity(matched.len() * dim);
        for &k in matched {
            let v = d.slot_vectors.get(k).ok_or_else(|| Error::invalid(format!("no slot vector {k}")))?;
            if v.len() != dim {
                return Err(Error::Shape { expected: dim.to_string(), actual: v.len().to_string() });
            }
            rows.extend_from_slice(v);
        }
        let (p, i) = self.logits(&Tensor::from_vec(rows, (matched.len(), dim), &Device::Cpu)?)?;
        let (p, i) = (p.to_vec2::<f32>()?, i.to_vec2::<f32>()?);
        Ok(ChordPrediction::Notes(
            p.iter()
                .zip(&i)
                .map(|(p, i)| NoteLabel { pitch: self.space.pitches[argmax(p)], instrument: self.space.instruments[argmax(i)] })
                .collect(),
        ))
    }
}

/// One linear layer from a chord latent to multi-hot logits.
#[derive(Debug, Clone)]
pub struct LatentProbe {
    pub space: LabelSpace,
    pub params: ParamStore,
    linear: Linear,
}

impl LatentProbe {
    pub const KIND: &'static str = "latent_probe";

    pub fn new(space: LabelSpace, latent_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new(DType::F32);
        let linear = Linear::new(&mut ps, "linear", latent_dim, space.multi_hot_len(), true, &mut rng)?;
        Ok(Self { space, params: ps, linear })
    }

    pub fn logits(&self, latent: &Tensor) -> Result<Tensor> {
        self.linear.forward(&latent.to_dtype(DType::F32)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_probe(path, Self::KIND, &self.space, self.linear.weight.dim(1)?, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (space, dim, tensors) = load_probe(path, Self::KIND)?;
        let p = Self::new(space, dim, 0)?;
        p.params.load(&tensors)?;
        Ok(p)
    }
}

impl Probe for LatentProbe {
    fn predict(&self, d: &Decomposition, _matched: &[usize]) -> Result<ChordPrediction> {
        let z = d.latent.as_ref().ok_or_else(|| Error::invalid("decomposition has no latent"))?;
        let t = Tensor::from_vec(z.clone(), (1, z.len()), &Device::Cpu)?;
        let probs = crate::slotcore::nn::sigmoid(&self.logits(&t)?)?;
        Ok(ChordPrediction::MultiHot(probs.squeeze(0)?.to_vec1::<f32>()?))
    }
}

fn save_probe(path: &Path, kind: &str, space: &LabelSpace, dim: usize, params: &ParamStore) -> Result<()> {
    let mut m = HashMap::new();
    m.insert(KEY_KIND.into(), kind.into());
    m.insert(KEY_CONFIG.into(), serde_json::to_string(space)?);
    m.insert("input_dim".into(), dim.to_string());
    save_checkpoint(path, &params.tensors(), m)
}

type ProbeParts = (LabelSpace, usize, std::collections::BTreeMap<String, Tensor>);

fn load_probe(path: &Path, kind: &str) -> Result<ProbeParts> {
    let ck = load_checkpoint(path)?;
    if ck.kind()? != kind {
        return Err(Error::invalid(format!("checkpoint holds a '{}', expected '{kind}'", ck.kind()?)));
    }
    let space: LabelSpace = serde_json::from_str(ck.meta(KEY_CONFIG)?)?;
    let dim = ck.meta("input_dim")?.parse().map_err(|_| Error::corrupt(path, "bad input_dim"))?;
    Ok((space, dim, ck.tensors))
}

/// Mean categorical cross-entropy of `logits` `[M, C]` against class indices.
pub fn cross_entropy(logits: &Tensor, targets: &[usize]) -> Result<Tensor> {
    let (m, c) = logits.dims2()?;
    if m != targets.len() {
        return Err(Error::Shape { expected: m.to_string(), actual: targets.len().to_string() });
    }
    let mut onehot = vec![0f32; m * c];
    for (r, &t) in targets.iter().enumerate() {
        if t >= c {
            return Err(Error::invalid(format!("class {t} out of {c}")));
        }
        onehot[r * c + t] = 1.0;
    }
    let onehot = Tensor::from_vec(onehot, (m, c), &Device::Cpu)?.to_dtype(logits.dtype())?;
    let max = logits.max_keepdim(D::Minus1)?.detach();
    let shifted = logits.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    let logp = shifted.broadcast_sub(&lse)?;
    Ok((logp.mul(&onehot)?.sum_all()? * (-1.0 / m as f64))?)
}

/// A probe paired with its frozen backbone. Only the probe's parameters are
/// exposed to the optimizer, and backbone outputs are detached.
pub enum ProbeTrainer {
    Slot { backbone: MusicSlots, probe: SlotProbe },
    Latent { backbone: Baseline, probe: LatentProbe },
}

impl Trainable for ProbeTrainer {
    fn params(&self) -> &ParamStore {
        match self {
            ProbeTrainer::Slot { probe, .. } => &probe.params,
            ProbeTrainer::Latent { probe, .. } => &probe.params,
        }
    }

    fn batch_loss(&self, batch: &[ExampleRecord], rng: &mut ChaCha8Rng) -> Result<Tensor> {
        match self {
            ProbeTrainer::Slot { backbone, probe } => {
                let x = stack_chords(batch, backbone.dtype())?;
                let out = backbone.forward(&x, rng)?;
                let contrib = backbone.slot_contributions_db(&out)?;
                let (b, k, h, w) = contrib.dims4()?;
                let maps = tensor_to_maps(&contrib.reshape((b * k, h, w))?)?;
                let slots = out.slots.detach();
                let mut rows = Vec::new();
                let (mut pt, mut it) = (Vec::new(), Vec::new());
                for (i, r) in batch.iter().enumerate() {
                    if r.note_db.len() != r.labels.len() {
                        return Err(Error::invalid("probe training needs ground-truth note spectrograms"));
                    }
                    let (_, m) = note_mse(&maps[i * k..(i + 1) * k], &r.note_db)?;
                    for &(g, s) in &m.assignment {
                        rows.push(slots.get(i)?.get(s)?);
                        pt.push(probe.space.pitch_index(r.labels[g].pitch)?);
                        it.push(probe.space.instrument_index(r.labels[g].instrument)?);
                    }
                }
                if rows.is_empty() {
                    return Err(Error::invalid("batch has no notes to match"));
                }
                let (pl, il) = probe.logits(&Tensor::stack(&rows, 0)?)?;
                Ok((cross_entropy(&pl, &pt)? + cross_entropy(&il, &it)?)?)
            }
            ProbeTrainer::Latent { backbone, probe } => {
                let x = stack_chords(batch, backbone.dtype())?;
                let z = backbone.forward_with_noise(&x, None)?.mu.detach();
                let targets = multi_hot_batch(&probe.space, batch, DType::F32)?;
                bce_with_logits(&probe.logits(&z)?, &targets)
            }
        }
    }

    fn save_model(&self, path: &Path) -> Result<()> {
        match self {
            ProbeTrainer::Slot { probe, .. } => probe.save(path),
            ProbeTrainer::Latent { probe, .. } => probe.save(path),
        }
    }
}
