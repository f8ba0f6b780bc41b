//! Renders one chord with three instruments, turns it into log-mel
//! features and writes the chord and its notes as a PNG.
//!
//! Uses the soundfont named by `MUSICSLOTS_SOUNDFONT` when set, otherwise a
//! generated one.
//!
//!     cargo run --example synthesize_chord -- [out_dir]

use std::path::PathBuf;

use musicslots::chordset::sf2::{default_voices, toy_soundfont_bytes};
use musicslots::chordset::{build_example, ChordSpec, DatasetConfig, InstrumentId, NotePipeline, SoundFontSynth, SOUNDFONT_ENV};
use musicslots::cli::viz::Grid;

fn main() -> musicslots::Result<()> {
    let cfg = DatasetConfig::default();
    let synth = match std::env::var_os(SOUNDFONT_ENV) {
        Some(p) => SoundFontSynth::open(&PathBuf::from(p), cfg.release_seconds)?,
        None => SoundFontSynth::from_bytes(&toy_soundfont_bytes(&default_voices())?, cfg.release_seconds)?,
    };
    println!("soundfont sha256 {}", synth.soundfont_sha256());
    let pipeline = NotePipeline::new(Box::new(synth), &cfg)?;

    // C major triad: piano root, violin third, flute fifth
    let chord = ChordSpec::from_pitches(vec![60, 64, 67]).with_instruments(vec![
        InstrumentId::Piano,
        InstrumentId::Violin,
        InstrumentId::Flute,
    ]);
    let ex = build_example(&pipeline, &chord)?;
    let (h, w) = ex.shape();
    println!("chord spectrogram {h} mel bins x {w} frames");
    for (label, mask) in ex.labels.iter().zip(&ex.note_masks) {
        let active = mask.iter().filter(|&&m| m).count();
        println!("  {:>6} pitch {}: {active} cells above {} dB", label.instrument.name(), label.pitch, cfg.mask_threshold_db);
    }
    let peak = ex.chord_db.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    println!("chord peak {peak:.1} dB");

    let out = std::env::args().nth(1).map(PathBuf::from);
    if let Some(dir) = out {
        let grid = Grid {
            rows: vec![vec![Some(ex.chord_db.clone())], ex.note_db.iter().cloned().map(Some).collect()],
        };
        let path = dir.join("chord.png");
        grid.save(&path, 3, grid.value_range())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
