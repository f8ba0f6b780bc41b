//! Note synthesis backends.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rustysynth::{SoundFont, SynthesizerSettings};
use sha2::{Digest, Sha256};

use super::{DatasetConfig, InstrumentId, SynthKind};
use crate::dsp::{Waveform, SYNTH_RATE};
use crate::error::{Error, Result};

/// A single held note.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoteEvent {
    pub pitch: u8,
    pub instrument: InstrumentId,
    pub duration: f64,
    pub volume: f64,
}

impl NoteEvent {
    pub fn velocity(&self) -> u8 {
        (self.volume * 127.0).round().clamp(1.0, 127.0) as u8
    }
}

/// Renders one note to mono 16-bit-quantized audio at [`SYNTH_RATE`].
pub trait Synthesizer: Send + Sync {
    fn render(&self, note: &NoteEvent) -> Result<Waveform>;

    /// Identifies the synthesizer and its soundfont for cache keys and manifests.
    fn fingerprint(&self) -> String;
}

fn quantize(x: f32) -> f32 {
    (x.clamp(-1.0, 1.0) * 32767.0).round() / 32767.0
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// In-process SoundFont renderer.
pub struct SoundFontSynth {
    font: Arc<SoundFont>,
    hash: String,
    release_seconds: f64,
}

impl SoundFontSynth {
    pub fn from_bytes(bytes: &[u8], release_seconds: f64) -> Result<Self> {
        let font = SoundFont::new(&mut &bytes[..])
            .map_err(|e| Error::invalid(format!("unreadable soundfont: {e}")))?;
        Ok(Self {
            font: Arc::new(font),
            hash: sha256_hex(bytes),
            release_seconds,
        })
    }

    pub fn open(path: &Path, release_seconds: f64) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Environment {
            message: format!("cannot read soundfont {}: {e}", path.display()),
            hint: format!("point {} at a readable .sf2 file", super::SOUNDFONT_ENV),
        })?;
        Self::from_bytes(&bytes, release_seconds)
    }

    pub fn soundfont_sha256(&self) -> &str {
        &self.hash
    }

    fn has_program(&self, program: u8) -> bool {
        self.font
            .get_presets()
            .iter()
            .any(|p| p.get_bank_number() == 0 && p.get_patch_number() == program as i32)
    }
}

impl Synthesizer for SoundFontSynth {
    fn render(&self, note: &NoteEvent) -> Result<Waveform> {
        let program = note.instrument.gm_program();
        if !self.has_program(program) {
            return Err(Error::invalid(format!(
                "soundfont has no preset for {} (program {program})",
                note.instrument
            )));
        }
        let settings = SynthesizerSettings::new(SYNTH_RATE as i32);
        let mut synth = rustysynth::Synthesizer::new(&self.font, &settings)
            .map_err(|e| Error::invalid(format!("synthesizer init failed: {e}")))?;
        let held = (note.duration * SYNTH_RATE as f64).round() as usize;
        let tail = (self.release_seconds * SYNTH_RATE as f64).round() as usize;
        let mut left = vec![0.0f32; held + tail];
        let mut right = vec![0.0f32; held + tail];

        synth.process_midi_message(0, 0xC0, program as i32, 0);
        synth.note_on(0, note.pitch as i32, note.velocity() as i32);
        synth.render(&mut left[..held], &mut right[..held]);
        synth.note_off(0, note.pitch as i32);
        synth.render(&mut left[held..], &mut right[held..]);

        let samples = left.iter().zip(&right).map(|(l, r)| quantize(0.5 * (l + r))).collect();
        Ok(Waveform::new(samples, SYNTH_RATE))
    }

    fn fingerprint(&self) -> String {
        format!("rustysynth-1.3/{}/release={}", self.hash, self.release_seconds)
    }
}

/// Renders through an external `fluidsynth` binary.
pub struct FluidsynthCli {
    binary: PathBuf,
    soundfont: PathBuf,
    hash: String,
    release_seconds: f64,
    scratch: tempfile::TempDir,
    counter: AtomicU64,
}

impl FluidsynthCli {
    pub fn new(binary: impl Into<PathBuf>, soundfont: &Path, release_seconds: f64) -> Result<Self> {
        let binary = binary.into();
        let probe = Command::new(&binary).arg("--version").output();
        if !matches!(&probe, Ok(o) if o.status.success()) {
            return Err(Error::Environment {
                message: format!("fluidsynth binary '{}' is not runnable", binary.display()),
                hint: "install fluidsynth or use synthesizer = \"soundfont\"".into(),
            });
        }
        let bytes = std::fs::read(soundfont).map_err(|e| Error::io(soundfont, e))?;
        Ok(Self {
            binary,
            soundfont: soundfont.to_path_buf(),
            hash: sha256_hex(&bytes),
            release_seconds,
            scratch: tempfile::tempdir().map_err(|e| Error::io(Path::new("tmp"), e))?,
            counter: AtomicU64::new(0),
        })
    }
}

fn vlq(mut v: u32) -> Vec<u8> {
    let mut out = vec![(v & 0x7F) as u8];
    v >>= 7;
    while v > 0 {
        out.push(((v & 0x7F) as u8) | 0x80);
        v >>= 7;
    }
    out.reverse();
    out
}

/// Type-0 MIDI file holding one note, 480 ticks per quarter at 120 bpm.
pub fn single_note_smf(note: &NoteEvent, release_seconds: f64) -> Vec<u8> {
    let ticks_per_sec = 960.0;
    let on_ticks = (note.duration * ticks_per_sec).round() as u32;
    let tail_ticks = (release_seconds * ticks_per_sec).round() as u32;
    let mut track = Vec::new();
    track.extend([0x00, 0xC0, note.instrument.gm_program()]);
    track.extend([0x00, 0x90, note.pitch, note.velocity()]);
    track.extend(vlq(on_ticks));
    track.extend([0x80, note.pitch, 0]);
    // end-of-track after the release tail
    track.extend(vlq(tail_ticks));
    track.extend([0xFF, 0x2F, 0x00]);

    let mut out = b"MThd".to_vec();
    out.extend(6u32.to_be_bytes());
    out.extend(0u16.to_be_bytes());
    out.extend(1u16.to_be_bytes());
    out.extend(480u16.to_be_bytes());
    out.extend(b"MTrk");
    out.extend((track.len() as u32).to_be_bytes());
    out.extend(track);
    out
}

pub fn read_wav_mono(path: &Path) -> Result<Waveform> {
    let reader = hound::WavReader::open(path).map_err(|e| Error::corrupt(path, e.to_string()))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let samples: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<std::result::Result<_, _>>()
        }
        hound::SampleFormat::Float => reader.into_samples::<f32>().collect::<std::result::Result<_, _>>(),
    }
    .map_err(|e| Error::corrupt(path, e.to_string()))?;
    let mono = samples
        .chunks(channels)
        .map(|frame| quantize(frame.iter().sum::<f32>() / channels as f32))
        .collect();
    Ok(Waveform::new(mono, spec.sample_rate))
}

pub fn write_wav_mono(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| Error::corrupt(path, e.to_string()))?;
    for &s in &w.samples {
        writer
            .write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)
            .map_err(|e| Error::corrupt(path, e.to_string()))?;
    }
    writer.finalize().map_err(|e| Error::corrupt(path, e.to_string()))
}

impl Synthesizer for FluidsynthCli {
    fn render(&self, note: &NoteEvent) -> Result<Waveform> {
        let id = self.counter.fetch_add(1, Ordering::Relaxed);
        let mid = self.scratch.path().join(format!("{id}.mid"));
        let wav = self.scratch.path().join(format!("{id}.wav"));
        std::fs::File::create(&mid)
            .and_then(|mut f| f.write_all(&single_note_smf(note, self.release_seconds)))
            .map_err(|e| Error::io(&mid, e))?;
        let status = Command::new(&self.binary)
            .args(["-ni", "-F"])
            .arg(&wav)
            .args(["-r", &SYNTH_RATE.to_string()])
            .arg(&self.soundfont)
            .arg(&mid)
            .output()
            .map_err(|e| Error::Environment {
                message: format!("failed to run fluidsynth: {e}"),
                hint: "check that fluidsynth is on PATH".into(),
            })?;
        if !status.status.success() {
            return Err(Error::Environment {
                message: format!("fluidsynth exited with {}", status.status),
                hint: String::from_utf8_lossy(&status.stderr).into_owned(),
            });
        }
        let w = read_wav_mono(&wav)?;
        let _ = std::fs::remove_file(&wav);
        let _ = std::fs::remove_file(&mid);
        if w.rate != SYNTH_RATE {
            return Err(Error::invalid(format!("fluidsynth produced {} Hz audio", w.rate)));
        }
        Ok(w)
    }

    fn fingerprint(&self) -> String {
        format!("fluidsynth/{}/release={}", self.hash, self.release_seconds)
    }
}

/// Backend chosen from a [`DatasetConfig`].
pub enum SynthBackend {
    SoundFont(SoundFontSynth),
    Fluidsynth(FluidsynthCli),
}

impl SynthBackend {
    pub fn from_config(cfg: &DatasetConfig) -> Result<Self> {
        let sf = cfg.resolve_soundfont()?;
        if !sf.is_file() {
            return Err(Error::Environment {
                message: format!("soundfont {} does not exist", sf.display()),
                hint: format!("set {} to an existing .sf2 file", super::SOUNDFONT_ENV),
            });
        }
        match cfg.synthesizer {
            SynthKind::Soundfont => Ok(SynthBackend::SoundFont(SoundFontSynth::open(&sf, cfg.release_seconds)?)),
            SynthKind::Fluidsynth => Ok(SynthBackend::Fluidsynth(FluidsynthCli::new("fluidsynth", &sf, cfg.release_seconds)?)),
        }
    }
}

impl Synthesizer for SynthBackend {
    fn render(&self, note: &NoteEvent) -> Result<Waveform> {
        match self {
            SynthBackend::SoundFont(s) => s.render(note),
            SynthBackend::Fluidsynth(s) => s.render(note),
        }
    }

    fn fingerprint(&self) -> String {
        match self {
            SynthBackend::SoundFont(s) => s.fingerprint(),
            SynthBackend::Fluidsynth(s) => s.fingerprint(),
        }
    }
}
