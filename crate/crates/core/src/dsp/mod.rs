//! Waveform conditioning and spectrogram/mask computation.
//!
//! Everything here is a pure function over owned or borrowed arrays. The dB
//! convention throughout the crate is the power convention
//! `10 * log10(p / ref)`, clamped at [`MelParams::db_floor`].

mod mel;
mod resample;

pub use mel::{mel_filterbank, mel_spectrogram, power_spectrogram};
pub use resample::resample;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample rate the synthesizer renders at.
pub const SYNTH_RATE: u32 = 44_100;
/// Sample rate spectrograms are computed at.
pub const MODEL_RATE: u32 = 16_000;
/// Leading zero samples added at [`MODEL_RATE`] before the mel transform.
pub const LEADING_PAD: usize = 4000;
/// Guard against `log10(0)`.
pub const POWER_EPS: f64 = 1e-10;
pub const DEFAULT_DB_FLOOR: f64 = -80.0;
pub const DEFAULT_MASK_THRESHOLD_DB: f64 = -30.0;
/// Number of time frames kept after cropping.
pub const CROP_FRAMES: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, rate: u32) -> Self {
        Self { samples, rate }
    }

    pub fn silence(len: usize, rate: u32) -> Self {
        Self::new(vec![0.0; len], rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.is_finite())
    }

    /// Keeps at most `len` samples.
    pub fn truncated(mut self, len: usize) -> Self {
        self.samples.truncate(len);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelParams {
    pub n_mels: usize,
    pub n_fft: usize,
    pub win_length: usize,
    pub hop_length: usize,
    pub sample_rate: u32,
    pub f_min: f64,
    /// Defaults to Nyquist when `None`.
    pub f_max: Option<f64>,
    pub db_floor: f64,
    pub reference_power: f64,
}

impl Default for MelParams {
    fn default() -> Self {
        Self {
            n_mels: 128,
            n_fft: 1024,
            win_length: 1024,
            hop_length: 512,
            sample_rate: MODEL_RATE,
            f_min: 0.0,
            f_max: None,
            db_floor: DEFAULT_DB_FLOOR,
            reference_power: 1.0,
        }
    }
}

impl MelParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_mels == 0 {
            return Err(Error::config("n_mels must be positive"));
        }
        if !(self.hop_length > 0
            && self.hop_length <= self.win_length
            && self.win_length <= self.n_fft)
        {
            return Err(Error::config(format!(
                "need 0 < hop ({}) <= win ({}) <= n_fft ({})",
                self.hop_length, self.win_length, self.n_fft
            )));
        }
        if self.reference_power <= 0.0 {
            return Err(Error::config("reference_power must be positive"));
        }
        Ok(())
    }

    pub fn f_max(&self) -> f64 {
        self.f_max.unwrap_or(self.sample_rate as f64 / 2.0)
    }

    /// Number of centered frames produced for a waveform of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        len / self.hop_length + 1
    }
}

/// Mel spectrogram in decibels, `[n_mels, frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values_db: Array2<f32>,
    pub params: MelParams,
}

impl Spectrogram {
    pub fn n_mels(&self) -> usize {
        self.values_db.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values_db.ncols()
    }
}

/// Prepends `pad` zero samples.
pub fn pad_leading_silence(w: &Waveform, pad: usize) -> Waveform {
    let mut samples = Vec::with_capacity(w.len() + pad);
    samples.resize(pad, 0.0);
    samples.extend_from_slice(&w.samples);
    Waveform::new(samples, w.rate)
}

/// `10 * log10(max(p, eps) / reference)`, clamped below at `floor`.
pub fn power_to_db(power: f64, reference: f64, floor: f64) -> f64 {
    (10.0 * (power.max(POWER_EPS) / reference).log10()).max(floor)
}

pub fn db_to_power(db: f64, reference: f64) -> f64 {
    reference * 10f64.powf(db / 10.0)
}

pub fn power_to_db_array(power: ArrayView2<'_, f64>, reference: f64, floor: f64) -> Array2<f32> {
    power.mapv(|p| power_to_db(p, reference, floor) as f32)
}

pub fn db_to_power_array(db: ArrayView2<'_, f32>, reference: f64) -> Array2<f64> {
    db.mapv(|x| db_to_power(x as f64, reference))
}

/// Keeps frames `[0, frames)`.
pub fn crop_time(s: &Spectrogram, frames: usize) -> Result<Spectrogram> {
    if s.frames() < frames {
        return Err(Error::invalid(format!(
            "cannot crop {} frames from a spectrogram with {}",
            frames,
            s.frames()
        )));
    }
    Ok(Spectrogram {
        values_db: s.values_db.slice(s![.., ..frames]).to_owned(),
        params: s.params,
    })
}

/// Binary mask of cells at or above `threshold_db`.
pub fn threshold_mask(values_db: ArrayView2<'_, f32>, threshold_db: f64) -> Array2<bool> {
    values_db.mapv(|v| v as f64 >= threshold_db)
}
