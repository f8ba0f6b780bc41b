//! Chord corpora, splits, instrument assignment, synthesis and dataset assembly.

pub mod corpus;
pub mod sf2;
pub mod store;
pub mod synth;

mod build;

pub use build::{build_example, build_splits, BuildPlan, NotePipeline};
pub use corpus::{load_columns, Column};
pub use store::{read_dataset, write_dataset, Dataset, DatasetManifest, DatasetWriter, SplitData, SplitStats};
pub use synth::{FluidsynthCli, NoteEvent, SoundFontSynth, SynthBackend, Synthesizer};

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{MelParams, Waveform, DEFAULT_MASK_THRESHOLD_DB};
use crate::error::{Error, Result};

/// Instruments available to the multi-instrument datasets, in enumeration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstrumentId {
    Piano,
    Violin,
    Flute,
}

impl InstrumentId {
    pub const ALL: [InstrumentId; 3] = [InstrumentId::Piano, InstrumentId::Violin, InstrumentId::Flute];

    /// General MIDI program number.
    pub fn gm_program(self) -> u8 {
        match self {
            InstrumentId::Piano => 0,
            InstrumentId::Violin => 40,
            InstrumentId::Flute => 73,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InstrumentId::Piano => "piano",
            InstrumentId::Violin => "violin",
            InstrumentId::Flute => "flute",
        }
    }
}

impl fmt::Display for InstrumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InstrumentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "piano" => Ok(InstrumentId::Piano),
            "violin" => Ok(InstrumentId::Violin),
            "flute" => Ok(InstrumentId::Flute),
            other => Err(Error::invalid(format!("unknown instrument '{other}'"))),
        }
    }
}

pub const DEFAULT_DURATION_SECS: f64 = 1.0;
pub const DEFAULT_VOLUME: f64 = 0.71;

/// A symbolic chord. `instruments` is empty until an assignment is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChordSpec {
    pub pitches: Vec<u8>,
    pub instruments: Vec<InstrumentId>,
    pub duration: f64,
    pub volume: f64,
}

impl ChordSpec {
    pub fn from_pitches(pitches: Vec<u8>) -> Self {
        Self {
            pitches,
            instruments: Vec::new(),
            duration: DEFAULT_DURATION_SECS,
            volume: DEFAULT_VOLUME,
        }
    }

    pub fn len(&self) -> usize {
        self.pitches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pitches.is_empty()
    }

    pub fn with_instruments(&self, instruments: Vec<InstrumentId>) -> Self {
        Self {
            instruments,
            ..self.clone()
        }
    }

    /// Checks the invariants required before synthesis.
    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.pitches.len()) {
            return Err(Error::invalid(format!(
                "chord must have 2-4 notes, got {}",
                self.pitches.len()
            )));
        }
        let distinct: HashSet<_> = self.pitches.iter().collect();
        if distinct.len() != self.pitches.len() {
            return Err(Error::invalid(format!("duplicate pitch in chord {:?}", self.pitches)));
        }
        if self.pitches.iter().any(|&p| !(1..=127).contains(&p)) {
            return Err(Error::invalid(format!("pitch out of range in {:?}", self.pitches)));
        }
        if self.instruments.len() != self.pitches.len() {
            return Err(Error::invalid(format!(
                "{} instruments for {} pitches",
                self.instruments.len(),
                self.pitches.len()
            )));
        }
        if !(self.duration > 0.0) {
            return Err(Error::invalid("duration must be positive"));
        }
        if !(0.0..=1.0).contains(&self.volume) {
            return Err(Error::invalid("volume must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<NoteLabel> {
        self.pitches
            .iter()
            .zip(&self.instruments)
            .map(|(&pitch, &instrument)| NoteLabel { pitch, instrument })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoteLabel {
    pub pitch: u8,
    pub instrument: InstrumentId,
}

/// One dataset item: the chord spectrogram plus per-note spectrograms, masks and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleRecord {
    pub chord_db: Array2<f32>,
    pub note_db: Vec<Array2<f32>>,
    pub note_masks: Vec<Array2<bool>>,
    pub labels: Vec<NoteLabel>,
}

impl ExampleRecord {
    pub fn note_count(&self) -> usize {
        self.labels.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.chord_db.dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    Jsb,
    Jazznet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstrumentMode {
    Single,
    Multi,
}

/// Number of instrument assignments generated per chord in multi-instrument mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignmentBudget {
    All,
    PerChord(usize),
}

impl Serialize for AssignmentBudget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AssignmentBudget::All => s.serialize_str("all"),
            AssignmentBudget::PerChord(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for AssignmentBudget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(k) => Ok(AssignmentBudget::PerChord(k as usize)),
            Raw::Word(w) if w == "all" => Ok(AssignmentBudget::All),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "assignments_per_chord must be a count or \"all\", got '{w}'"
            ))),
        }
    }
}

/// How chords are partitioned into train/validation/test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitRule {
    /// Shuffled, floor-rounded fractions with the remainder going to train.
    Ratios { train: f64, val: f64, test: f64 },
    /// Shuffled, exact split sizes; they must sum to the corpus size.
    Counts { train: usize, val: usize, test: usize },
    /// Tetrads go to test; the rest are shuffled and the first
    /// `floor(train_fraction * n)` become train.
    ByCardinality { train_fraction: f64 },
}

impl SplitRule {
    pub const DEFAULT_RATIOS: SplitRule = SplitRule::Ratios {
        train: 0.7,
        val: 0.2,
        test: 0.1,
    };

    pub fn validate(&self) -> Result<()> {
        match *self {
            SplitRule::Ratios { train, val, test } => {
                if [train, val, test].iter().any(|r| !(0.0..=1.0).contains(r)) {
                    return Err(Error::config("split ratios must lie in [0, 1]"));
                }
                if ((train + val + test) - 1.0).abs() > 1e-9 {
                    return Err(Error::config(format!(
                        "split ratios sum to {}, expected 1",
                        train + val + test
                    )));
                }
                Ok(())
            }
            SplitRule::Counts { .. } => Ok(()),
            SplitRule::ByCardinality { train_fraction } => {
                if !(0.0..=1.0).contains(&train_fraction) {
                    return Err(Error::config("train_fraction must lie in [0, 1]"));
                }
                Ok(())
            }
        }
    }
}

/// Train/validation/test triple.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Splits<T> {
    pub train: T,
    pub val: T,
    pub test: T,
}

impl<T> Splits<T> {
    pub fn as_array(&self) -> [(SplitName, &T); 3] {
        [
            (SplitName::Train, &self.train),
            (SplitName::Val, &self.val),
            (SplitName::Test, &self.test),
        ]
    }

    pub fn get(&self, name: SplitName) -> &T {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }

    pub fn map<U>(self, mut f: impl FnMut(SplitName, T) -> U) -> Splits<U> {
        Splits {
            train: f(SplitName::Train, self.train),
            val: f(SplitName::Val, self.val),
            test: f(SplitName::Test, self.test),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Val, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" | "valid" | "validation" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::invalid(format!("unknown split '{other}'"))),
        }
    }
}

/// Which synthesizer renders notes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// In-process SoundFont renderer.
    Soundfont,
    /// External `fluidsynth` binary.
    Fluidsynth,
}

pub const SOUNDFONT_ENV: &str = "MUSICSLOTS_SOUNDFONT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: CorpusKind,
    pub corpus_path: Option<PathBuf>,
    pub instrument_mode: InstrumentMode,
    pub split: SplitRule,
    pub rng_seed: u64,
    pub assignments_per_chord: AssignmentBudget,
    pub duration: f64,
    pub volume: f64,
    /// Release tail rendered after note-off, in seconds.
    pub release_seconds: f64,
    /// Audio kept per note at the model rate before padding; `None` keeps everything.
    pub clip_seconds: Option<f64>,
    pub mel: MelParams,
    pub mask_threshold_db: f64,
    pub crop_frames: usize,
    pub soundfont_path: Option<PathBuf>,
    pub synthesizer: SynthKind,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: CorpusKind::Jsb,
            corpus_path: None,
            instrument_mode: InstrumentMode::Single,
            split: SplitRule::DEFAULT_RATIOS,
            rng_seed: 0,
            assignments_per_chord: AssignmentBudget::All,
            duration: DEFAULT_DURATION_SECS,
            volume: DEFAULT_VOLUME,
            release_seconds: 0.5,
            clip_seconds: Some(0.85),
            mel: MelParams::default(),
            mask_threshold_db: DEFAULT_MASK_THRESHOLD_DB,
            crop_frames: crate::dsp::CROP_FRAMES,
            soundfont_path: None,
            synthesizer: SynthKind::Soundfont,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.mel.validate()?;
        if let AssignmentBudget::PerChord(0) = self.assignments_per_chord {
            return Err(Error::config("assignments_per_chord must be at least 1"));
        }
        if !(self.duration > 0.0) {
            return Err(Error::config("duration must be positive"));
        }
        if !(0.0..=1.0).contains(&self.volume) {
            return Err(Error::config("volume must lie in [0, 1]"));
        }
        if self.release_seconds < 0.0 {
            return Err(Error::config("release_seconds must be non-negative"));
        }
        if let Some(c) = self.clip_seconds {
            if !(c > 0.0) {
                return Err(Error::config("clip_seconds must be positive"));
            }
        }
        if self.crop_frames == 0 {
            return Err(Error::config("crop_frames must be positive"));
        }
        Ok(())
    }

    /// Soundfont from the config, falling back to the environment.
    pub fn resolve_soundfont(&self) -> Result<PathBuf> {
        if let Some(p) = &self.soundfont_path {
            return Ok(p.clone());
        }
        match std::env::var_os(SOUNDFONT_ENV) {
            Some(p) if !p.is_empty() => Ok(PathBuf::from(p)),
            _ => Err(Error::Environment {
                message: "no soundfont configured".into(),
                hint: format!("set dataset.soundfont_path or the {SOUNDFONT_ENV} environment variable to an .sf2 file"),
            }),
        }
    }
}

/// Mixes a per-stream seed into a base seed (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Unique chords from 4-voice MIDI columns, in first-occurrence order.
///
/// Silent voices (0) are dropped, unison doublings collapse to one pitch, and
/// columns with fewer than two distinct pitches are skipped. Pitches inside a
/// chord are sorted ascending.
pub fn extract_unique_chords(columns: &[Column]) -> Result<Vec<ChordSpec>> {
    if columns.is_empty() {
        return Err(Error::invalid("no chords"));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for column in columns {
        let mut pitches: Vec<u8> = column.iter().copied().filter(|&p| p != 0).collect();
        pitches.sort_unstable();
        pitches.dedup();
        if pitches.len() < 2 {
            continue;
        }
        if seen.insert(pitches.clone()) {
            out.push(ChordSpec::from_pitches(pitches));
        }
    }
    Ok(out)
}

/// Shuffles by `seed` and partitions contiguously according to `rule`.
pub fn split_chords<T: Clone>(items: &[T], rule: &SplitRule, seed: u64, cardinality: impl Fn(&T) -> usize) -> Result<Splits<Vec<T>>> {
    rule.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match *rule {
        SplitRule::Ratios { val, test, .. } => {
            let n = items.len();
            let n_val = (val * n as f64).floor() as usize;
            let n_test = (test * n as f64).floor() as usize;
            let n_train = n - n_val - n_test;
            Ok(partition(shuffled(items, &mut rng), [n_train, n_val, n_test]))
        }
        SplitRule::Counts { train, val, test } => {
            if train + val + test != items.len() {
                return Err(Error::config(format!(
                    "split counts {train}+{val}+{test} do not sum to {} chords",
                    items.len()
                )));
            }
            Ok(partition(shuffled(items, &mut rng), [train, val, test]))
        }
        SplitRule::ByCardinality { train_fraction } => {
            let (tetrads, rest): (Vec<T>, Vec<T>) = items.iter().cloned().partition(|c| cardinality(c) >= 4);
            let rest = shuffled(&rest, &mut rng);
            let n_train = (train_fraction * rest.len() as f64).floor() as usize;
            let mut train = rest;
            let val = train.split_off(n_train);
            Ok(Splits { train, val, test: tetrads })
        }
    }
}

fn shuffled<T: Clone>(items: &[T], rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(rng);
    v
}

fn partition<T>(mut v: Vec<T>, sizes: [usize; 3]) -> Splits<Vec<T>> {
    let test = v.split_off(sizes[0] + sizes[1]);
    let val = v.split_off(sizes[0]);
    Splits { train: v, val, test }
}

/// Bach-chorale style split: seeded shuffle, then contiguous partition.
pub fn split_jsb(chords: &[ChordSpec], rule: &SplitRule, seed: u64) -> Result<Splits<Vec<ChordSpec>>> {
    split_chords(chords, rule, seed, ChordSpec::len)
}

/// JazzNet style split: every tetrad is held out for test and the dyads and
/// triads are shuffled into train/val at `train_fraction`.
pub fn split_jazznet(chords: &[ChordSpec], train_fraction: f64, seed: u64) -> Result<Splits<Vec<ChordSpec>>> {
    split_chords(chords, &SplitRule::ByCardinality { train_fraction }, seed, ChordSpec::len)
}

/// Default JazzNet train share of the non-tetrad chords.
pub const JAZZNET_TRAIN_FRACTION: f64 = 0.8;

fn assignment_from_index(mut index: usize, n: usize) -> Vec<InstrumentId> {
    let mut out = vec![InstrumentId::Piano; n];
    for slot in out.iter_mut().rev() {
        *slot = InstrumentId::ALL[index % 3];
        index /= 3;
    }
    out
}

/// Instrument assignments for one chord.
///
/// Single mode yields the all-piano chord. Multi mode with [`AssignmentBudget::All`]
/// yields all `3^n` assignments in lexicographic order; with a per-chord budget
/// `k` it yields `k` distinct assignments drawn without replacement, sorted
/// lexicographically.
pub fn enumerate_instrument_assignments(
    chord: &ChordSpec,
    mode: InstrumentMode,
    budget: AssignmentBudget,
    seed: u64,
) -> Result<Vec<ChordSpec>> {
    let n = chord.pitches.len();
    match mode {
        InstrumentMode::Single => Ok(vec![chord.with_instruments(vec![InstrumentId::Piano; n])]),
        InstrumentMode::Multi => {
            let total = 3usize.pow(n as u32);
            let indices: Vec<usize> = match budget {
                AssignmentBudget::All => (0..total).collect(),
                AssignmentBudget::PerChord(k) => {
                    if k > total {
                        return Err(Error::invalid(format!(
                            "assignment budget exceeds enumeration ({k} > 3^{n} = {total})"
                        )));
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let mut picked = rand::seq::index::sample(&mut rng, total, k).into_vec();
                    picked.sort_unstable();
                    picked
                }
            };
            Ok(indices
                .into_iter()
                .map(|i| chord.with_instruments(assignment_from_index(i, n)))
                .collect())
        }
    }
}

/// Sample-wise sum; shorter waveforms are zero-padded at the end.
pub fn mix_waveforms(waves: &[&Waveform]) -> Result<Waveform> {
    let first = waves.first().ok_or_else(|| Error::invalid("nothing to mix"))?;
    if let Some(w) = waves.iter().find(|w| w.rate != first.rate) {
        return Err(Error::invalid(format!(
            "cannot mix {} Hz with {} Hz",
            first.rate, w.rate
        )));
    }
    let len = waves.iter().map(|w| w.len()).max().unwrap_or(0);
    let mut out = vec![0.0f32; len];
    for w in waves {
        for (o, s) in out.iter_mut().zip(&w.samples) {
            *o += s;
        }
    }
    Ok(Waveform::new(out, first.rate))
}

/// Counts of dyads, triads and tetrads.
pub fn cardinality_histogram<'a>(chords: impl IntoIterator<Item = &'a ChordSpec>) -> [usize; 3] {
    let mut h = [0usize; 3];
    for c in chords {
        if (2..=4).contains(&c.len()) {
            h[c.len() - 2] += 1;
        }
    }
    h
}

/// The four standard dataset variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetPreset {
    JsbSingle,
    JsbMulti,
    JazznetSingle,
    JazznetMulti,
}

/// Instrument assignments sampled per chord for the multi-instrument chorale set.
pub const JSB_MULTI_ASSIGNMENTS: usize = 9;

/// Environment variables naming corpus files.
pub const JSB_CORPUS_ENV: &str = "MUSICSLOTS_JSB";
pub const JAZZNET_CORPUS_ENV: &str = "MUSICSLOTS_JAZZNET";

/// Published sizes a build is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceStats {
    pub examples: [usize; 3],
    /// Allowed absolute deviation per split.
    pub tolerance: usize,
    /// Per-split dyad/triad/tetrad counts of unique chords, when published.
    pub histograms: Option<[[usize; 3]; 3]>,
    pub unique_pitches: Option<usize>,
}

impl DatasetPreset {
    pub const ALL: [DatasetPreset; 4] =
        [DatasetPreset::JsbSingle, DatasetPreset::JsbMulti, DatasetPreset::JazznetSingle, DatasetPreset::JazznetMulti];

    pub fn name(self) -> &'static str {
        match self {
            DatasetPreset::JsbSingle => "jsb-single",
            DatasetPreset::JsbMulti => "jsb-multi",
            DatasetPreset::JazznetSingle => "jazznet-single",
            DatasetPreset::JazznetMulti => "jazznet-multi",
        }
    }

    pub fn config(self) -> DatasetConfig {
        let jsb_split = SplitRule::Counts { train: 2190, val: 626, test: 315 };
        let jazz_split = SplitRule::ByCardinality { train_fraction: JAZZNET_TRAIN_FRACTION };
        let (source, instrument_mode, split, assignments_per_chord) = match self {
            DatasetPreset::JsbSingle => (CorpusKind::Jsb, InstrumentMode::Single, jsb_split, AssignmentBudget::All),
            DatasetPreset::JsbMulti => (
                CorpusKind::Jsb,
                InstrumentMode::Multi,
                jsb_split,
                AssignmentBudget::PerChord(JSB_MULTI_ASSIGNMENTS),
            ),
            DatasetPreset::JazznetSingle => (CorpusKind::Jazznet, InstrumentMode::Single, jazz_split, AssignmentBudget::All),
            DatasetPreset::JazznetMulti => (CorpusKind::Jazznet, InstrumentMode::Multi, jazz_split, AssignmentBudget::All),
        };
        DatasetConfig { source, instrument_mode, split, assignments_per_chord, ..DatasetConfig::default() }
    }

    pub fn reference(self) -> ReferenceStats {
        let jsb_hist = [[10, 270, 1910], [1, 85, 540], [1, 43, 271]];
        match self {
            DatasetPreset::JsbSingle => ReferenceStats {
                examples: [2190, 626, 315],
                tolerance: 0,
                histograms: Some(jsb_hist),
                unique_pitches: Some(53),
            },
            DatasetPreset::JsbMulti => ReferenceStats {
                examples: [19719, 5634, 2826],
                tolerance: 9,
                histograms: Some(jsb_hist),
                unique_pitches: Some(53),
            },
            DatasetPreset::JazznetSingle => {
                ReferenceStats { examples: [1074, 269, 884], tolerance: 0, histograms: None, unique_pitches: None }
            }
            DatasetPreset::JazznetMulti => {
                ReferenceStats { examples: [19458, 5031, 71604], tolerance: 0, histograms: None, unique_pitches: None }
            }
        }
    }

    pub fn corpus_env(self) -> &'static str {
        match self {
            DatasetPreset::JsbSingle | DatasetPreset::JsbMulti => JSB_CORPUS_ENV,
            _ => JAZZNET_CORPUS_ENV,
        }
    }
}

impl FromStr for DatasetPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config(format!("unknown dataset preset '{s}' (expected jsb-single, jsb-multi, jazznet-single or jazznet-multi)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chords_with_histogram(h: [usize; 3]) -> Vec<ChordSpec> {
        let mut out = Vec::new();
        for (i, &count) in h.iter().enumerate() {
            // successive lexicographic combinations of pitches 30..90
            let n = i + 2;
            let mut idx: Vec<u8> = (0..n as u8).collect();
            for _ in 0..count {
                out.push(ChordSpec::from_pitches(idx.iter().map(|&p| 30 + p).collect()));
                let mut k = n;
                while k > 0 && idx[k - 1] as usize == 60 - n + k - 1 {
                    k -= 1;
                }
                assert!(k > 0, "histogram too large for test helper");
                idx[k - 1] += 1;
                for j in k..n {
                    idx[j] = idx[j - 1] + 1;
                }
            }
        }
        out
    }

    #[test]
    fn dedup_identical_columns() {
        let chords = extract_unique_chords(&[[60, 64, 67, 0], [60, 64, 67, 0]]).unwrap();
        assert_eq!(chords.len(), 1);
        assert_eq!(chords[0].pitches, vec![60, 64, 67]);
    }

    #[test]
    fn single_notes_and_silence_are_skipped() {
        assert!(extract_unique_chords(&[[60, 0, 0, 0]]).unwrap().is_empty());
        assert!(extract_unique_chords(&[[0, 0, 0, 0], [60, 60, 0, 0]]).unwrap().is_empty());
        assert!(extract_unique_chords(&[]).is_err());
    }

    #[test]
    fn first_occurrence_order_and_voice_order_dedup() {
        let cols = [[48, 60, 64, 67], [60, 64, 67, 0], [67, 64, 60, 48], [60, 60, 64, 67]];
        let chords = extract_unique_chords(&cols).unwrap();
        let pitches: Vec<_> = chords.iter().map(|c| c.pitches.clone()).collect();
        assert_eq!(pitches, vec![vec![48, 60, 64, 67], vec![60, 64, 67]]);
    }

    #[test]
    fn ratio_split_small() {
        let chords = chords_with_histogram([0, 10, 0]);
        let s = split_jsb(&chords, &SplitRule::DEFAULT_RATIOS, 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 2, 1));
        let again = split_jsb(&chords, &SplitRule::DEFAULT_RATIOS, 3).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn ratio_split_rejects_bad_ratios() {
        let chords = chords_with_histogram([0, 10, 0]);
        let bad = SplitRule::Ratios { train: 0.7, val: 0.2, test: 0.2 };
        assert!(matches!(split_jsb(&chords, &bad, 0), Err(Error::Config(_))));
    }

    #[test]
    fn count_split_is_disjoint_and_exhaustive() {
        let chords = chords_with_histogram([12, 398, 2721]);
        let unique: HashSet<_> = chords.iter().map(|c| c.pitches.clone()).collect();
        assert_eq!(unique.len(), chords.len());
        let rule = SplitRule::Counts { train: 2190, val: 626, test: 315 };
        let s = split_jsb(&chords, &rule, 11).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (2190, 626, 315));
        let mut all: Vec<_> = s.train.iter().chain(&s.val).chain(&s.test).map(|c| c.pitches.clone()).collect();
        all.sort();
        let mut orig: Vec<_> = chords.iter().map(|c| c.pitches.clone()).collect();
        orig.sort();
        assert_eq!(all, orig);
        assert!(split_jsb(&chords, &SplitRule::Counts { train: 1, val: 1, test: 1 }, 0).is_err());
    }

    #[test]
    fn jazznet_split_holds_out_tetrads() {
        let chords = chords_with_histogram([654, 689, 884]);
        let s = split_jazznet(&chords, JAZZNET_TRAIN_FRACTION, 5).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1074, 269, 884));
        assert!(s.test.iter().all(|c| c.len() == 4));
        assert!(s.train.iter().chain(&s.val).all(|c| c.len() < 4));

        let only_tetrads = chords_with_histogram([0, 0, 20]);
        let s = split_jazznet(&only_tetrads, JAZZNET_TRAIN_FRACTION, 5).unwrap();
        assert!(s.train.is_empty() && s.val.is_empty());
        assert_eq!(s.test.len(), 20);
    }

    #[test]
    fn full_enumeration_of_a_dyad() {
        let chord = ChordSpec::from_pitches(vec![60, 64]);
        let all = enumerate_instrument_assignments(&chord, InstrumentMode::Multi, AssignmentBudget::All, 0).unwrap();
        assert_eq!(all.len(), 9);
        assert_eq!(all[0].instruments, vec![InstrumentId::Piano, InstrumentId::Piano]);
        assert_eq!(all[1].instruments, vec![InstrumentId::Piano, InstrumentId::Violin]);
        assert_eq!(all[8].instruments, vec![InstrumentId::Flute, InstrumentId::Flute]);
    }

    #[test]
    fn sampled_assignments_are_distinct_and_seeded() {
        let chord = ChordSpec::from_pitches(vec![48, 60, 64, 67]);
        let a = enumerate_instrument_assignments(&chord, InstrumentMode::Multi, AssignmentBudget::PerChord(9), 42).unwrap();
        let b = enumerate_instrument_assignments(&chord, InstrumentMode::Multi, AssignmentBudget::PerChord(9), 42).unwrap();
        assert_eq!(a, b);
        let distinct: HashSet<_> = a.iter().map(|c| c.instruments.clone()).collect();
        assert_eq!(distinct.len(), 9);
        let err = enumerate_instrument_assignments(
            &ChordSpec::from_pitches(vec![60, 64]),
            InstrumentMode::Multi,
            AssignmentBudget::PerChord(10),
            0,
        );
        assert!(err.unwrap_err().to_string().contains("assignment budget exceeds enumeration"));
    }

    #[test]
    fn single_mode_ignores_budget() {
        let chord = ChordSpec::from_pitches(vec![60, 64, 67]);
        let v = enumerate_instrument_assignments(&chord, InstrumentMode::Single, AssignmentBudget::PerChord(100), 0).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].instruments, vec![InstrumentId::Piano; 3]);
    }

    #[test]
    fn mixing_rules() {
        let w = Waveform::new(vec![0.1, -0.2, 0.3], 16_000);
        let neg = Waveform::new(w.samples.iter().map(|x| -x).collect(), 16_000);
        let short = Waveform::new(vec![1.0], 16_000);
        assert_eq!(mix_waveforms(&[&w]).unwrap(), w);
        assert!(mix_waveforms(&[&w, &neg]).unwrap().samples.iter().all(|&x| x == 0.0));
        let m = mix_waveforms(&[&w, &short]).unwrap();
        assert_eq!(m.samples, vec![1.1, -0.2, 0.3]);
        let other_rate = Waveform::new(vec![0.0], 44_100);
        assert!(mix_waveforms(&[&w, &other_rate]).is_err());
        assert!(mix_waveforms(&[]).is_err());
    }

    #[test]
    fn chord_validation() {
        let mut c = ChordSpec::from_pitches(vec![60, 64]).with_instruments(vec![InstrumentId::Piano; 2]);
        assert!(c.validate().is_ok());
        c.instruments.pop();
        assert!(c.validate().is_err());
        let dup = ChordSpec::from_pitches(vec![60, 60]).with_instruments(vec![InstrumentId::Piano; 2]);
        assert!(dup.validate().is_err());
        let single = ChordSpec::from_pitches(vec![60]).with_instruments(vec![InstrumentId::Piano]);
        assert!(single.validate().is_err());
    }

    #[test]
    fn budget_serde() {
        #[derive(Deserialize, Serialize)]
        struct W {
            b: AssignmentBudget,
        }
        let w: W = toml::from_str("b = \"all\"").unwrap();
        assert_eq!(w.b, AssignmentBudget::All);
        let w: W = toml::from_str("b = 9").unwrap();
        assert_eq!(w.b, AssignmentBudget::PerChord(9));
        assert!(toml::from_str::<W>("b = \"some\"").is_err());
    }

    proptest::proptest! {
        #[test]
        fn mixing_is_associative(
            a in proptest::collection::vec(-1f32..1.0, 1..50),
            b in proptest::collection::vec(-1f32..1.0, 1..50),
            c in proptest::collection::vec(-1f32..1.0, 1..50),
        ) {
            let (a, b, c) = (Waveform::new(a, 16_000), Waveform::new(b, 16_000), Waveform::new(c, 16_000));
            let flat = mix_waveforms(&[&a, &b, &c]).unwrap();
            let ab = mix_waveforms(&[&a, &b]).unwrap();
            let nested = mix_waveforms(&[&ab, &c]).unwrap();
            // same accumulation order, so the sums agree bit-for-bit
            proptest::prop_assert_eq!(flat, nested);
        }
    }
}
