//! A self-contained miniature setup: a generated soundfont, a small chord
//! corpus and model sizes that train in seconds on a CPU. Used by the
//! examples and tests when the real corpora are not available.

use std::path::Path;

use crate::baselines::BaselineConfig;
use crate::chordset::{sf2::write_toy_soundfont, AssignmentBudget, InstrumentMode, SplitRule};
use crate::dsp::MelParams;
use crate::error::{Error, Result};
use crate::slotcore::ModelConfig;
use crate::trainer::TrainConfig;

use super::RunConfig;

pub const MEL_BINS: usize = 16;
pub const FRAMES: usize = 8;

/// `n` distinct chords of two to four notes with roots from MIDI 55 upward.
pub fn corpus_text(n: usize) -> String {
    let mut out = String::from("# generated chords, one column per line\n");
    let mut count = 0;
    'outer: for root in 55u8..72 {
        for shape in [[4u8, 7, 0, 0], [3, 7, 0, 0], [7, 0, 0, 0], [4, 7, 11, 0], [3, 7, 10, 0], [4, 7, 10, 0]] {
            if count == n {
                break 'outer;
            }
            let notes: Vec<String> = std::iter::once(root)
                .chain(shape.iter().filter(|&&i| i > 0).map(|i| root + i))
                .map(|p| p.to_string())
                .collect();
            out.push_str(&notes.join(" "));
            out.push('\n');
            count += 1;
        }
    }
    out
}

pub fn model() -> ModelConfig {
    ModelConfig {
        num_slots: 5,
        iterations: 2,
        slot_dim: 16,
        feature_dim: 16,
        mlp_hidden: 32,
        input_shape: (MEL_BINS, FRAMES),
        encoder_layers: 2,
        encoder_channels: 8,
        decoder_channels: 8,
        decoder_upsamples: 2,
        ..ModelConfig::default()
    }
}

pub fn baseline(base: &BaselineConfig) -> BaselineConfig {
    BaselineConfig { latent_dim: 8, input_shape: (MEL_BINS, FRAMES), layers: 2, channels: 8, hidden: 16, ..base.clone() }
}

pub fn training(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 4,
        max_lr: 1e-3,
        warmup_steps: 0,
        decay_steps: None,
        grad_clip_norm: Some(1.0),
        checkpoint_every: 0,
        ..TrainConfig::slots()
    }
}

/// Writes `toy.sf2` and `chords.txt` into `dir` and returns a configuration
/// (optionally starting from `preset`) that builds into `dir/data` and runs
/// into `dir/runs`.
pub fn workspace(dir: &Path, preset: Option<&str>, chords: usize) -> Result<RunConfig> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sf = dir.join("toy.sf2");
    write_toy_soundfont(&sf)?;
    let corpus = dir.join("chords.txt");
    std::fs::write(&corpus, corpus_text(chords)).map_err(|e| Error::io(&corpus, e))?;
    let mut cfg = RunConfig::resolve(None, preset)?;
    cfg.build.corpus_path = Some(corpus);
    cfg.build.soundfont_path = Some(sf);
    cfg.build.instrument_mode = InstrumentMode::Multi;
    cfg.build.assignments_per_chord = AssignmentBudget::PerChord(2);
    cfg.build.split = SplitRule::Ratios { train: 0.6, val: 0.2, test: 0.2 };
    cfg.build.mel = MelParams { n_mels: MEL_BINS, ..MelParams::default() };
    cfg.build.crop_frames = FRAMES;
    cfg.model = ModelConfig {
        mask_norm: cfg.model.mask_norm,
        encoder_stride: cfg.model.encoder_stride,
        implicit_diff: cfg.model.implicit_diff,
        ..model()
    };
    cfg.baseline = baseline(&cfg.baseline);
    cfg.train = training(40);
    cfg.probe = training(40);
    cfg.dataset = Some(dir.join("data"));
    cfg.run_dir = Some(dir.join("runs"));
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chordset::corpus::parse_text_columns;
    use crate::chordset::extract_unique_chords;

    #[test]
    fn corpus_chords_are_distinct() {
        let cols = parse_text_columns(&corpus_text(40)).unwrap();
        assert_eq!(extract_unique_chords(&cols).unwrap().len(), 40);
    }
}
