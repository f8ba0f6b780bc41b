//! The slot-based decomposition model.

pub mod checkpoint;
pub mod model;
pub mod nn;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use model::{composite, reconstruction_loss, MaskNorm, ModelConfig, ModelOutput, MusicSlots};
pub use nn::ParamStore;

use std::sync::Mutex;

use candle_core::{DType, Tensor};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chordset::ExampleRecord;
use crate::error::{Error, Result};
use crate::evalkit::{Decomposer, Decomposition};

/// Stacks chord spectrograms into `[B, H, W]`.
pub fn stack_chords(batch: &[ExampleRecord], dtype: DType) -> Result<Tensor> {
    let first = batch.first().ok_or_else(|| Error::invalid("empty batch"))?;
    let (h, w) = first.chord_db.dim();
    let mut data = Vec::with_capacity(batch.len() * h * w);
    for r in batch {
        if r.chord_db.dim() != (h, w) {
            return Err(Error::Shape { expected: format!("{h}x{w}"), actual: format!("{:?}", r.chord_db.dim()) });
        }
        data.extend(r.chord_db.iter().copied());
    }
    Ok(Tensor::from_vec(data, (batch.len(), h, w), &candle_core::Device::Cpu)?.to_dtype(dtype)?)
}

pub fn tensor_to_maps(t: &Tensor) -> Result<Vec<Array2<f32>>> {
    let (n, h, w) = t.dims3()?;
    let flat = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    Ok((0..n)
        .map(|i| Array2::from_shape_vec((h, w), flat[i * h * w..(i + 1) * h * w].to_vec()).expect("sized"))
        .collect())
}

/// Evaluation wrapper that draws slot noise from a seeded stream, in batch order.
pub struct SlotDecomposer {
    pub model: MusicSlots,
    pub label: String,
    /// Examples per forward pass; bounds decoder memory.
    pub chunk: usize,
    rng: Mutex<ChaCha8Rng>,
}

impl SlotDecomposer {
    pub fn new(model: MusicSlots, label: impl Into<String>, seed: u64) -> Self {
        Self { model, label: label.into(), chunk: 4, rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)) }
    }
}

impl Decomposer for SlotDecomposer {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn decompose(&self, batch: &[ExampleRecord]) -> Result<Vec<Decomposition>> {
        let mut out = Vec::with_capacity(batch.len());
        let mut rng = self.rng.lock().expect("rng lock");
        for part in batch.chunks(self.chunk.max(1)) {
            let x = stack_chords(part, self.model.dtype())?;
            let o = self.model.forward(&x, &mut rng)?;
            let contrib = self.model.slot_contributions_db(&o)?;
            let (b, k, h, w) = contrib.dims4()?;
            let maps = tensor_to_maps(&contrib.reshape((b * k, h, w))?)?;
            let slots = o.slots.to_dtype(DType::F32)?.to_vec3::<f32>()?;
            for (i, sv) in slots.into_iter().enumerate() {
                out.push(Decomposition {
                    slot_specs_db: maps[i * k..(i + 1) * k].to_vec(),
                    slot_vectors: sv,
                    latent: None,
                });
            }
        }
        Ok(out)
    }
}
