use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use super::{power_to_db_array, MelParams, Spectrogram, Waveform};
use crate::error::{Error, Result};

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular HTK-scale filterbank without area normalization,
/// shaped `[n_fft / 2 + 1, n_mels]`.
pub fn mel_filterbank(p: &MelParams) -> Array2<f64> {
    let n_freqs = p.n_fft / 2 + 1;
    let nyquist = (p.sample_rate / 2) as f64;
    let all_freqs: Vec<f64> = (0..n_freqs)
        .map(|i| nyquist * i as f64 / (n_freqs - 1) as f64)
        .collect();
    let (m_min, m_max) = (hz_to_mel(p.f_min), hz_to_mel(p.f_max()));
    let f_pts: Vec<f64> = (0..p.n_mels + 2)
        .map(|i| mel_to_hz(m_min + (m_max - m_min) * i as f64 / (p.n_mels + 1) as f64))
        .collect();
    let f_diff: Vec<f64> = f_pts.windows(2).map(|w| w[1] - w[0]).collect();
    Array2::from_shape_fn((n_freqs, p.n_mels), |(f, m)| {
        let down = (all_freqs[f] - f_pts[m]) / f_diff[m];
        let up = (f_pts[m + 2] - all_freqs[f]) / f_diff[m + 1];
        down.min(up).max(0.0)
    })
}

fn periodic_hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
        .collect()
}

fn reflect_index(i: isize, len: usize) -> usize {
    let n = len as isize;
    let mut i = i;
    while i < 0 || i >= n {
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * (n - 1) - i;
        }
    }
    i as usize
}

/// Centered, reflect-padded power STFT, shaped `[n_fft / 2 + 1, frames]`.
pub fn power_spectrogram(w: &Waveform, p: &MelParams) -> Result<Array2<f64>> {
    p.validate()?;
    if w.rate != p.sample_rate {
        return Err(Error::invalid(format!(
            "waveform rate {} Hz does not match mel sample rate {} Hz",
            w.rate, p.sample_rate
        )));
    }
    if w.len() < p.win_length || w.len() <= p.n_fft / 2 {
        return Err(Error::invalid(format!(
            "waveform of {} samples is shorter than one window ({})",
            w.len(),
            p.win_length
        )));
    }
    let window = {
        // a shorter window is zero-padded symmetrically to n_fft
        let hann = periodic_hann(p.win_length);
        let left = (p.n_fft - p.win_length) / 2;
        let mut full = vec![0.0; p.n_fft];
        full[left..left + p.win_length].copy_from_slice(&hann);
        full
    };
    let frames = p.frame_count(w.len());
    let n_freqs = p.n_fft / 2 + 1;
    let fft = FftPlanner::new().plan_fft_forward(p.n_fft);
    let half = (p.n_fft / 2) as isize;
    let mut out = Array2::zeros((n_freqs, frames));
    let mut buf = vec![Complex::new(0.0, 0.0); p.n_fft];
    for t in 0..frames {
        let start = (t * p.hop_length) as isize - half;
        for (k, slot) in buf.iter_mut().enumerate() {
            let x = w.samples[reflect_index(start + k as isize, w.len())] as f64;
            *slot = Complex::new(x * window[k], 0.0);
        }
        fft.process(&mut buf);
        for f in 0..n_freqs {
            out[(f, t)] = buf[f].norm_sqr();
        }
    }
    Ok(out)
}

/// Mel spectrogram in dB (power convention).
pub fn mel_spectrogram(w: &Waveform, p: &MelParams) -> Result<Spectrogram> {
    let power = power_spectrogram(w, p)?;
    let fb = mel_filterbank(p);
    let mel_power = fb.t().dot(&power);
    Ok(Spectrogram {
        values_db: power_to_db_array(mel_power.view(), p.reference_power, p.db_floor),
        params: *p,
    })
}
