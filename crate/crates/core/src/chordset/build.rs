use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use ndarray::Array2;
use rayon::prelude::*;

use super::store::DatasetWriter;
use super::synth::{NoteEvent, Synthesizer};
use super::*;
use crate::dsp::{self, crop_time, mel_spectrogram, pad_leading_silence, threshold_mask, MODEL_RATE};

/// Per-note audio after resampling and clipping, plus its cropped spectrogram.
#[derive(Debug)]
struct NoteAudio {
    wave: Waveform,
    db: Array2<f32>,
}

/// Synthesis and feature extraction shared by every example of a build.
///
/// Rendered notes are cached by `(pitch, instrument)`; duration, volume and
/// the synthesizer are fixed for the lifetime of the pipeline.
pub struct NotePipeline {
    synth: Box<dyn Synthesizer>,
    duration: f64,
    volume: f64,
    clip_samples: Option<usize>,
    mel: MelParams,
    mask_threshold_db: f64,
    crop_frames: usize,
    cache: Mutex<HashMap<(u8, InstrumentId), Arc<NoteAudio>>>,
}

impl NotePipeline {
    pub fn new(synth: Box<dyn Synthesizer>, cfg: &DatasetConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.mel.sample_rate != MODEL_RATE {
            return Err(Error::config(format!(
                "mel.sample_rate must be {MODEL_RATE}, got {}",
                cfg.mel.sample_rate
            )));
        }
        Ok(Self {
            synth,
            duration: cfg.duration,
            volume: cfg.volume,
            clip_samples: cfg.clip_seconds.map(|c| (c * MODEL_RATE as f64).round() as usize),
            mel: cfg.mel,
            mask_threshold_db: cfg.mask_threshold_db,
            crop_frames: cfg.crop_frames,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn fingerprint(&self) -> String {
        self.synth.fingerprint()
    }

    pub fn cached_notes(&self) -> usize {
        self.cache.lock().expect("cache poisoned").len()
    }

    fn note(&self, pitch: u8, instrument: InstrumentId) -> Result<Arc<NoteAudio>> {
        if let Some(hit) = self.cache.lock().expect("cache poisoned").get(&(pitch, instrument)) {
            return Ok(hit.clone());
        }
        let event = NoteEvent { pitch, instrument, duration: self.duration, volume: self.volume };
        let raw = self.synth.render(&event)?;
        if !raw.is_finite() {
            return Err(Error::invalid(format!("synthesizer produced non-finite audio for {pitch}/{instrument}")));
        }
        let mut wave = dsp::resample(&raw, MODEL_RATE)?;
        if let Some(n) = self.clip_samples {
            wave = wave.truncated(n);
        }
        let db = self.features(&wave)?;
        let audio = Arc::new(NoteAudio { wave, db });
        self.cache
            .lock()
            .expect("cache poisoned")
            .insert((pitch, instrument), audio.clone());
        Ok(audio)
    }

    fn features(&self, wave: &Waveform) -> Result<Array2<f32>> {
        let padded = pad_leading_silence(wave, dsp::LEADING_PAD);
        let spec = mel_spectrogram(&padded, &self.mel)?;
        Ok(crop_time(&spec, self.crop_frames)?.values_db)
    }
}

/// Synthesizes, mixes and featurizes one assigned chord.
pub fn build_example(pipeline: &NotePipeline, chord: &ChordSpec) -> Result<ExampleRecord> {
    chord.validate()?;
    let notes: Vec<Arc<NoteAudio>> = chord
        .labels()
        .iter()
        .map(|l| pipeline.note(l.pitch, l.instrument))
        .collect::<Result<_>>()?;
    let waves: Vec<&Waveform> = notes.iter().map(|n| &n.wave).collect();
    let mix = mix_waveforms(&waves)?;
    let chord_db = pipeline.features(&mix)?;
    Ok(ExampleRecord {
        chord_db,
        note_masks: notes
            .iter()
            .map(|n| threshold_mask(n.db.view(), pipeline.mask_threshold_db))
            .collect(),
        note_db: notes.iter().map(|n| n.db.clone()).collect(),
        labels: chord.labels(),
    })
}

/// Assigned chords per split, ready to synthesize.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildPlan {
    pub chords: Splits<Vec<ChordSpec>>,
    pub examples: Splits<Vec<ChordSpec>>,
}

impl BuildPlan {
    /// Splits unique chords and expands instrument assignments.
    pub fn new(unique: &[ChordSpec], cfg: &DatasetConfig) -> Result<Self> {
        cfg.validate()?;
        let unique: Vec<ChordSpec> = unique
            .iter()
            .map(|c| ChordSpec { duration: cfg.duration, volume: cfg.volume, ..c.clone() })
            .collect();
        let chords = split_chords(&unique, &cfg.split, cfg.rng_seed, ChordSpec::len)?;
        let mut examples = Splits::default();
        let mut stream = 0u64;
        for name in SplitName::ALL {
            let mut out = Vec::new();
            for chord in chords.get(name) {
                let seed = derive_seed(cfg.rng_seed, stream);
                stream += 1;
                out.extend(enumerate_instrument_assignments(
                    chord,
                    cfg.instrument_mode,
                    cfg.assignments_per_chord,
                    seed,
                )?);
            }
            match name {
                SplitName::Train => examples.train = out,
                SplitName::Val => examples.val = out,
                SplitName::Test => examples.test = out,
            }
        }
        Ok(Self { chords, examples })
    }

    pub fn example_counts(&self) -> [usize; 3] {
        [self.examples.train.len(), self.examples.val.len(), self.examples.test.len()]
    }
}

/// Chunk of examples synthesized in parallel before being appended to disk.
const WRITE_CHUNK: usize = 256;

/// Builds every split of `plan` into `out_dir`.
///
/// Examples are synthesized in parallel but written in plan order, so the
/// output bytes do not depend on the thread count.
pub fn build_splits(
    plan: &BuildPlan,
    pipeline: &NotePipeline,
    cfg: &DatasetConfig,
    out_dir: &Path,
    mut progress: impl FnMut(SplitName, usize, usize),
) -> Result<DatasetManifest> {
    let mut writer = DatasetWriter::create(out_dir, cfg, &pipeline.fingerprint())?;
    for name in SplitName::ALL {
        let examples = plan.examples.get(name);
        writer.begin_split(name, plan.chords.get(name))?;
        for (i, chunk) in examples.chunks(WRITE_CHUNK).enumerate() {
            let records: Vec<ExampleRecord> = chunk
                .par_iter()
                .map(|c| build_example(pipeline, c))
                .collect::<Result<_>>()?;
            for r in &records {
                writer.append(r)?;
            }
            progress(name, (i * WRITE_CHUNK + chunk.len()).min(examples.len()), examples.len());
        }
        writer.end_split()?;
    }
    writer.finish()
}
