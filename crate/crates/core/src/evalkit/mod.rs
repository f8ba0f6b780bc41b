//! Matching, note-level metrics, probe decoding and report aggregation.

mod assign;
mod report;

pub use assign::{hungarian, hungarian_max, MatchResult};
pub use report::{aggregate_seeds, render_table, MetricsReport, SplitMetrics, Stat, METRICS_SCHEMA_VERSION};

use ndarray::{Array2, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chordset::{ExampleRecord, InstrumentId, NoteLabel, SplitData};
use crate::dsp::{threshold_mask, DEFAULT_DB_FLOOR};
use crate::error::{Error, Result};

pub fn mse(a: &Array2<f32>, b: &Array2<f32>) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    let mut acc = 0.0f64;
    Zip::from(a).and(b).for_each(|&x, &y| {
        let d = (x - y) as f64;
        acc += d * d;
    });
    acc / a.len() as f64
}

/// Intersection over union, with two empty masks scoring 1.
pub fn iou(a: &Array2<bool>, b: &Array2<bool>) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    Zip::from(a).and(b).for_each(|&x, &y| {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    });
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn check_counts(n: usize, k: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("no ground-truth notes"));
    }
    if n > k {
        return Err(Error::invalid(format!("{n} notes but only {k} slots")));
    }
    Ok(())
}

/// Mean matched MSE between ground-truth notes and slots, minimizing total MSE.
pub fn note_mse(slot_specs_db: &[Array2<f32>], gt_notes_db: &[Array2<f32>]) -> Result<(f64, MatchResult)> {
    check_counts(gt_notes_db.len(), slot_specs_db.len())?;
    let cost = Array2::from_shape_fn((gt_notes_db.len(), slot_specs_db.len()), |(i, j)| {
        mse(&gt_notes_db[i], &slot_specs_db[j])
    });
    let m = hungarian(&cost)?;
    Ok((m.mean_cost(), m))
}

/// Mean matched IoU between ground-truth masks and thresholded slots,
/// maximizing total IoU.
pub fn miou(slot_specs_db: &[Array2<f32>], gt_masks: &[Array2<bool>], threshold_db: f64) -> Result<(f64, MatchResult)> {
    check_counts(gt_masks.len(), slot_specs_db.len())?;
    let pred: Vec<Array2<bool>> = slot_specs_db.iter().map(|s| threshold_mask(s.view(), threshold_db)).collect();
    let score = Array2::from_shape_fn((gt_masks.len(), pred.len()), |(i, j)| iou(&gt_masks[i], &pred[j]));
    let m = hungarian_max(&score)?;
    Ok((m.mean_cost(), m))
}

/// Pitch and instrument vocabularies shared by probes and multi-hot targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub pitches: Vec<u8>,
    pub instruments: Vec<InstrumentId>,
}

impl LabelSpace {
    pub fn new(mut pitches: Vec<u8>) -> Self {
        pitches.sort_unstable();
        pitches.dedup();
        Self { pitches, instruments: InstrumentId::ALL.to_vec() }
    }

    pub fn with_instruments(pitches: Vec<u8>, mut instruments: Vec<InstrumentId>) -> Self {
        instruments.sort_unstable();
        instruments.dedup();
        Self { instruments, ..Self::new(pitches) }
    }

    /// Pitches and instruments that occur in `split`.
    pub fn observed(split: &SplitData) -> Self {
        let labels = (0..split.len()).flat_map(|i| split.labels(i).iter().copied());
        let (p, i): (Vec<u8>, Vec<InstrumentId>) = labels.map(|l| (l.pitch, l.instrument)).unzip();
        Self::with_instruments(p, i)
    }

    pub fn n_pitch(&self) -> usize {
        self.pitches.len()
    }

    pub fn n_instrument(&self) -> usize {
        self.instruments.len()
    }

    /// Size of the row-major `(instrument, pitch)` multi-hot vector.
    pub fn multi_hot_len(&self) -> usize {
        self.n_pitch() * self.n_instrument()
    }

    pub fn pitch_index(&self, pitch: u8) -> Result<usize> {
        self.pitches
            .binary_search(&pitch)
            .map_err(|_| Error::invalid(format!("pitch {pitch} outside the label space")))
    }

    pub fn instrument_index(&self, inst: InstrumentId) -> Result<usize> {
        self.instruments
            .iter()
            .position(|&i| i == inst)
            .ok_or_else(|| Error::invalid(format!("instrument {inst} outside the label space")))
    }

    pub fn multi_hot(&self, labels: &[NoteLabel]) -> Result<Vec<bool>> {
        let mut v = vec![false; self.multi_hot_len()];
        for l in labels {
            v[self.instrument_index(l.instrument)? * self.n_pitch() + self.pitch_index(l.pitch)?] = true;
        }
        Ok(v)
    }
}

/// A probe's decoded answer for one chord.
#[derive(Debug, Clone, PartialEq)]
pub enum ChordPrediction {
    /// One label per ground-truth note, in ground-truth order (slot path).
    Notes(Vec<NoteLabel>),
    /// Sigmoid outputs over the multi-hot layout (baseline path).
    MultiHot(Vec<f32>),
}

/// Whether every note property of a chord is predicted correctly.
pub fn chord_correct(pred: &ChordPrediction, labels: &[NoteLabel], space: &LabelSpace) -> Result<bool> {
    match pred {
        ChordPrediction::Notes(notes) => {
            if notes.len() != labels.len() {
                return Err(Error::invalid(format!(
                    "{} note predictions for {} notes; matching unavailable",
                    notes.len(),
                    labels.len()
                )));
            }
            Ok(notes == labels)
        }
        ChordPrediction::MultiHot(probs) => {
            let target = space.multi_hot(labels)?;
            if probs.len() != target.len() {
                return Err(Error::shape(format!("{}", target.len()), format!("{}", probs.len())));
            }
            Ok(probs.iter().zip(&target).all(|(&p, &t)| (p >= 0.5) == t))
        }
    }
}

/// Fraction of chords whose notes are all predicted correctly.
pub fn probe_chord_accuracy(preds: &[ChordPrediction], labels: &[Vec<NoteLabel>], space: &LabelSpace) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::invalid(format!("{} predictions for {} chords", preds.len(), labels.len())));
    }
    if preds.is_empty() {
        return Err(Error::invalid("no chords to score"));
    }
    let mut correct = 0usize;
    for (p, l) in preds.iter().zip(labels) {
        correct += chord_correct(p, l, space)? as usize;
    }
    Ok(correct as f64 / preds.len() as f64)
}

/// What a model exposes for one chord.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Per-slot spectrograms in dB; empty for models without slots.
    pub slot_specs_db: Vec<Array2<f32>>,
    /// Per-slot latent vectors.
    pub slot_vectors: Vec<Vec<f32>>,
    /// Whole-chord latent (autoencoder baselines).
    pub latent: Option<Vec<f32>>,
}

/// A frozen model evaluated example by example.
pub trait Decomposer: Sync {
    fn name(&self) -> String;

    /// Decomposes a batch. Implementations must only read `chord_db`
    /// unless they are explicitly oracles.
    fn decompose(&self, batch: &[ExampleRecord]) -> Result<Vec<Decomposition>>;
}

/// Decodes a [`Decomposition`] into note properties.
pub trait Probe: Sync {
    /// `matched` holds, for each ground-truth note in order, its slot index.
    fn predict(&self, d: &Decomposition, matched: &[usize]) -> Result<ChordPrediction>;
}

/// Oracle that returns the ground-truth notes as slots, padded with
/// floor-valued slots up to `num_slots`. With a label space, each slot vector
/// is the one-hot `[pitch | instrument]` code of its note (zeros for padding),
/// which [`OneHotProbe`] decodes.
pub struct GtEcho {
    pub num_slots: usize,
    pub space: Option<LabelSpace>,
}

impl Decomposer for GtEcho {
    fn name(&self) -> String {
        "gt-echo".into()
    }

    fn decompose(&self, batch: &[ExampleRecord]) -> Result<Vec<Decomposition>> {
        batch
            .iter()
            .map(|r| {
                check_counts(r.note_count(), self.num_slots)?;
                let mut slots = r.note_db.clone();
                slots.resize(self.num_slots, Array2::from_elem(r.shape(), DEFAULT_DB_FLOOR as f32));
                let slot_vectors = match &self.space {
                    Some(space) => {
                        let width = space.n_pitch() + space.n_instrument();
                        let mut v = vec![vec![0.0f32; width]; self.num_slots];
                        for (code, l) in v.iter_mut().zip(&r.labels) {
                            code[space.pitch_index(l.pitch)?] = 1.0;
                            code[space.n_pitch() + space.instrument_index(l.instrument)?] = 1.0;
                        }
                        v
                    }
                    None => Vec::new(),
                };
                Ok(Decomposition { slot_specs_db: slots, slot_vectors, latent: None })
            })
            .collect()
    }
}

/// Argmax decoder over `[pitch logits | instrument logits]` slot vectors.
pub struct OneHotProbe {
    pub space: LabelSpace,
}

pub fn argmax(v: &[f32]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

impl Probe for OneHotProbe {
    fn predict(&self, d: &Decomposition, matched: &[usize]) -> Result<ChordPrediction> {
        let np = self.space.n_pitch();
        matched
            .iter()
            .map(|&k| {
                let v = d
                    .slot_vectors
                    .get(k)
                    .ok_or_else(|| Error::invalid(format!("no slot vector {k}")))?;
                if v.len() != np + self.space.n_instrument() {
                    return Err(Error::shape(format!("{}", np + self.space.n_instrument()), format!("{}", v.len())));
                }
                Ok(NoteLabel {
                    pitch: self.space.pitches[argmax(&v[..np])],
                    instrument: self.space.instruments[argmax(&v[np..])],
                })
            })
            .collect::<Result<_>>()
            .map(ChordPrediction::Notes)
    }
}

/// Per-example outcome, kept so callers can audit the matchings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleMetrics {
    pub note_mse: Option<(f64, MatchResult)>,
    pub miou: Option<(f64, MatchResult)>,
    pub correct: Option<bool>,
}

pub fn evaluate_example(
    record: &ExampleRecord,
    d: &Decomposition,
    probe: Option<&dyn Probe>,
    space: &LabelSpace,
    threshold_db: f64,
) -> Result<ExampleMetrics> {
    let (mse_part, miou_part) = if d.slot_specs_db.is_empty() {
        (None, None)
    } else {
        (
            Some(note_mse(&d.slot_specs_db, &record.note_db)?),
            Some(miou(&d.slot_specs_db, &record.note_masks, threshold_db)?),
        )
    };
    let correct = match probe {
        Some(p) => {
            let matched: Vec<usize> = match &mse_part {
                Some((_, m)) => m.assignment.iter().map(|a| a.1).collect(),
                None => Vec::new(),
            };
            Some(chord_correct(&p.predict(d, &matched)?, &record.labels, space)?)
        }
        None => None,
    };
    Ok(ExampleMetrics { note_mse: mse_part, miou: miou_part, correct })
}

pub const EVAL_BATCH: usize = 32;

/// Streams a split through `model` (and optionally `probe`) and aggregates.
pub fn evaluate_split(
    model: &dyn Decomposer,
    split: &SplitData,
    probe: Option<&dyn Probe>,
    space: &LabelSpace,
    threshold_db: f64,
) -> Result<(SplitMetrics, Vec<ExampleMetrics>)> {
    if split.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty split"));
    }
    let mut all = Vec::with_capacity(split.len());
    let indices: Vec<usize> = (0..split.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let batch: Vec<ExampleRecord> = chunk.iter().map(|&i| split.example(i)).collect();
        for r in &batch {
            for l in &r.labels {
                space.pitch_index(l.pitch)?;
                space.instrument_index(l.instrument)?;
            }
        }
        let decs = model.decompose(&batch)?;
        if decs.len() != batch.len() {
            return Err(Error::invalid("model returned the wrong number of decompositions"));
        }
        let metrics: Vec<ExampleMetrics> = batch
            .par_iter()
            .zip(decs.par_iter())
            .map(|(r, d)| evaluate_example(r, d, probe, space, threshold_db))
            .collect::<Result<_>>()?;
        all.extend(metrics);
    }
    Ok((SplitMetrics::from_examples(&all), all))
}
