//! Minimal SoundFont 2 writer for hermetic tests and examples.
//!
//! The toy bank has one preset per [`InstrumentId`] at its GM program number.
//! Each preset plays a single looped period-aligned sample with a distinct
//! harmonic recipe and envelope, so the instruments are separable in the mel
//! domain without shipping a real sample library.

use std::f64::consts::PI;
use std::path::Path;

use super::InstrumentId;
use crate::error::{Error, Result};

const SAMPLE_RATE: u32 = 44_100;
/// Samples per period; 44100 / 168 = 262.5 Hz, a few cents above middle C.
const PERIOD: usize = 168;
const PERIODS: usize = 8;
const ROOT_KEY: u8 = 60;
const PITCH_CORRECTION_CENTS: i8 = -6;

// generator operators
const GEN_DECAY_VOL_ENV: u16 = 36;
const GEN_SUSTAIN_VOL_ENV: u16 = 37;
const GEN_RELEASE_VOL_ENV: u16 = 38;
const GEN_INSTRUMENT: u16 = 41;
const GEN_SAMPLE_ID: u16 = 53;
const GEN_SAMPLE_MODES: u16 = 54;
const GEN_OVERRIDING_ROOT_KEY: u16 = 58;

#[derive(Debug, Clone)]
pub struct ToyVoice {
    pub instrument: InstrumentId,
    /// Relative amplitude of harmonics 1, 2, 3, ...
    pub harmonics: Vec<f64>,
    /// Decay time in timecents; `None` holds at full level.
    pub decay_timecents: Option<i16>,
    /// Sustain attenuation in centibels.
    pub sustain_cb: i16,
    pub release_timecents: i16,
}

pub fn default_voices() -> Vec<ToyVoice> {
    vec![
        ToyVoice {
            instrument: InstrumentId::Piano,
            harmonics: vec![1.0, 0.6, 0.35, 0.25, 0.12, 0.08],
            decay_timecents: Some(700),
            sustain_cb: 240,
            release_timecents: -2400,
        },
        ToyVoice {
            instrument: InstrumentId::Violin,
            harmonics: (1..=12).map(|h| 1.0 / h as f64).collect(),
            decay_timecents: None,
            sustain_cb: 0,
            release_timecents: -2400,
        },
        ToyVoice {
            instrument: InstrumentId::Flute,
            harmonics: vec![1.0, 0.15, 0.05],
            decay_timecents: None,
            sustain_cb: 0,
            release_timecents: -2400,
        },
    ]
}

fn render_period(harmonics: &[f64]) -> Vec<i16> {
    let raw: Vec<f64> = (0..PERIOD * PERIODS)
        .map(|i| {
            let phase = 2.0 * PI * (i % PERIOD) as f64 / PERIOD as f64;
            harmonics
                .iter()
                .enumerate()
                .map(|(h, a)| a * ((h + 1) as f64 * phase).sin())
                .sum()
        })
        .collect();
    let peak = raw.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-9);
    raw.iter().map(|x| (x / peak * 16_000.0).round() as i16).collect()
}

struct Chunk {
    id: [u8; 4],
    body: Vec<u8>,
}

fn riff_bytes(id: &[u8; 4], body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 8);
    out.extend_from_slice(id);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(body);
    if body.len() % 2 == 1 {
        out.push(0);
    }
    out
}

fn list(kind: &[u8; 4], chunks: &[Chunk]) -> Vec<u8> {
    let mut body = kind.to_vec();
    for c in chunks {
        body.extend(riff_bytes(&c.id, &c.body));
    }
    riff_bytes(b"LIST", &body)
}

fn name20(name: &str) -> [u8; 20] {
    let mut out = [0u8; 20];
    let bytes = name.as_bytes();
    let n = bytes.len().min(19);
    out[..n].copy_from_slice(&bytes[..n]);
    out
}

fn gen(buf: &mut Vec<u8>, op: u16, amount: i16) {
    buf.extend_from_slice(&op.to_le_bytes());
    buf.extend_from_slice(&amount.to_le_bytes());
}

fn bag(buf: &mut Vec<u8>, gen_index: u16, mod_index: u16) {
    buf.extend_from_slice(&gen_index.to_le_bytes());
    buf.extend_from_slice(&mod_index.to_le_bytes());
}

/// Serializes a SoundFont containing `voices`.
pub fn toy_soundfont_bytes(voices: &[ToyVoice]) -> Result<Vec<u8>> {
    if voices.is_empty() {
        return Err(Error::invalid("toy soundfont needs at least one voice"));
    }
    let mut smpl = Vec::new();
    let mut shdr = Vec::new();
    let mut offset = 0u32;
    for v in voices {
        let data = render_period(&v.harmonics);
        for s in &data {
            smpl.extend_from_slice(&s.to_le_bytes());
        }
        // 46 zero samples after each sample, as the format requires
        smpl.extend(std::iter::repeat_n(0u8, 46 * 2));
        let (start, end) = (offset, offset + data.len() as u32);
        shdr.extend_from_slice(&name20(v.instrument.name()));
        for x in [start, end, start, end, SAMPLE_RATE] {
            shdr.extend_from_slice(&x.to_le_bytes());
        }
        shdr.push(ROOT_KEY);
        shdr.push(PITCH_CORRECTION_CENTS as u8);
        shdr.extend_from_slice(&0u16.to_le_bytes());
        shdr.extend_from_slice(&1u16.to_le_bytes()); // mono
        offset = end + 46;
    }
    shdr.extend_from_slice(&name20("EOS"));
    shdr.extend(std::iter::repeat_n(0u8, 26));

    let (mut inst, mut ibag, mut igen) = (Vec::new(), Vec::new(), Vec::new());
    let (mut phdr, mut pbag, mut pgen) = (Vec::new(), Vec::new(), Vec::new());
    for (i, v) in voices.iter().enumerate() {
        inst.extend_from_slice(&name20(v.instrument.name()));
        inst.extend_from_slice(&(i as u16).to_le_bytes());
        bag(&mut ibag, (igen.len() / 4) as u16, 0);
        gen(&mut igen, GEN_OVERRIDING_ROOT_KEY, ROOT_KEY as i16);
        if let Some(d) = v.decay_timecents {
            gen(&mut igen, GEN_DECAY_VOL_ENV, d);
        }
        gen(&mut igen, GEN_SUSTAIN_VOL_ENV, v.sustain_cb);
        gen(&mut igen, GEN_RELEASE_VOL_ENV, v.release_timecents);
        gen(&mut igen, GEN_SAMPLE_MODES, 1);
        gen(&mut igen, GEN_SAMPLE_ID, i as i16);

        phdr.extend_from_slice(&name20(v.instrument.name()));
        phdr.extend_from_slice(&(v.instrument.gm_program() as u16).to_le_bytes());
        phdr.extend_from_slice(&0u16.to_le_bytes());
        phdr.extend_from_slice(&(i as u16).to_le_bytes());
        phdr.extend(std::iter::repeat_n(0u8, 12));
        bag(&mut pbag, (pgen.len() / 4) as u16, 0);
        gen(&mut pgen, GEN_INSTRUMENT, i as i16);
    }
    let n = voices.len() as u16;
    inst.extend_from_slice(&name20("EOI"));
    inst.extend_from_slice(&n.to_le_bytes());
    bag(&mut ibag, (igen.len() / 4) as u16, 0);
    gen(&mut igen, 0, 0);
    phdr.extend_from_slice(&name20("EOP"));
    phdr.extend_from_slice(&[0; 4]);
    phdr.extend_from_slice(&n.to_le_bytes());
    phdr.extend(std::iter::repeat_n(0u8, 12));
    bag(&mut pbag, (pgen.len() / 4) as u16, 0);
    gen(&mut pgen, 0, 0);

    let info = list(
        b"INFO",
        &[
            Chunk { id: *b"ifil", body: [2u16, 1].iter().flat_map(|x| x.to_le_bytes()).collect() },
            Chunk { id: *b"isng", body: b"EMU8000\0".to_vec() },
            Chunk { id: *b"INAM", body: b"musicslots toy bank\0".to_vec() },
        ],
    );
    let sdta = list(b"sdta", &[Chunk { id: *b"smpl", body: smpl }]);
    let pdta = list(
        b"pdta",
        &[
            Chunk { id: *b"phdr", body: phdr },
            Chunk { id: *b"pbag", body: pbag },
            Chunk { id: *b"pmod", body: vec![0; 10] },
            Chunk { id: *b"pgen", body: pgen },
            Chunk { id: *b"inst", body: inst },
            Chunk { id: *b"ibag", body: ibag },
            Chunk { id: *b"imod", body: vec![0; 10] },
            Chunk { id: *b"igen", body: igen },
            Chunk { id: *b"shdr", body: shdr },
        ],
    );
    let mut body = b"sfbk".to_vec();
    body.extend(info);
    body.extend(sdta);
    body.extend(pdta);
    Ok(riff_bytes(b"RIFF", &body))
}

/// Writes the default toy bank to `path`.
pub fn write_toy_soundfont(path: &Path) -> Result<()> {
    let bytes = toy_soundfont_bytes(&default_voices())?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_rustysynth() {
        let bytes = toy_soundfont_bytes(&default_voices()).unwrap();
        let sf = rustysynth::SoundFont::new(&mut bytes.as_slice()).unwrap();
        let programs: Vec<i32> = sf.get_presets().iter().map(|p| p.get_patch_number()).collect();
        assert_eq!(programs, vec![0, 40, 73]);
        assert_eq!(sf.get_instruments().len(), 3);
        assert_eq!(sf.get_sample_headers().len(), 3);
    }

    #[test]
    fn empty_bank_is_rejected() {
        assert!(toy_soundfont_bytes(&[]).is_err());
    }
}
