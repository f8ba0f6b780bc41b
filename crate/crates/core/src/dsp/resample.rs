//! Band-limited polyphase resampling with a Hann-windowed sinc kernel.
//!
//! The kernel construction mirrors the common "sinc_interp_hann" recipe
//! (filter width 6 zero crossings, rolloff 0.99), so a 44.1 kHz render maps
//! onto the same 16 kHz grid other toolchains produce.

use std::f64::consts::PI;

use super::Waveform;
use crate::error::{Error, Result};

const LOWPASS_FILTER_WIDTH: f64 = 6.0;
const ROLLOFF: f64 = 0.99;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct SincKernel {
    /// `[new][taps]`, one filter per output phase.
    phases: Vec<Vec<f64>>,
    width: usize,
    orig: usize,
    new: usize,
}

impl SincKernel {
    fn new(orig: usize, new: usize) -> Self {
        let base = orig.min(new) as f64 * ROLLOFF;
        let width = (LOWPASS_FILTER_WIDTH * orig as f64 / base).ceil() as usize;
        let taps = 2 * width + orig;
        let scale = base / orig as f64;
        let phases = (0..new)
            .map(|phase| {
                (0..taps)
                    .map(|m| {
                        let idx = (m as f64 - width as f64) / orig as f64;
                        let t = (-(phase as f64) / new as f64 + idx) * base;
                        let t = t.clamp(-LOWPASS_FILTER_WIDTH, LOWPASS_FILTER_WIDTH);
                        let window = (t * PI / LOWPASS_FILTER_WIDTH / 2.0).cos().powi(2);
                        let t = t * PI;
                        let sinc = if t == 0.0 { 1.0 } else { t.sin() / t };
                        sinc * window * scale
                    })
                    .collect()
            })
            .collect();
        Self {
            phases,
            width,
            orig,
            new,
        }
    }

    fn apply(&self, samples: &[f32]) -> Vec<f32> {
        let len = samples.len();
        let target = (self.new as u64 * len as u64).div_ceil(self.orig as u64) as usize;
        let taps = 2 * self.width + self.orig;
        // zero padding of `width` on the left and `width + orig` on the right
        let at = |i: isize| -> f64 {
            if i < 0 || i as usize >= len {
                0.0
            } else {
                samples[i as usize] as f64
            }
        };
        let frames = len / self.orig + 1;
        let mut out = Vec::with_capacity(frames * self.new);
        for frame in 0..frames {
            let start = (frame * self.orig) as isize - self.width as isize;
            for kernel in &self.phases {
                let mut acc = 0.0;
                for (m, k) in kernel.iter().enumerate().take(taps) {
                    acc += k * at(start + m as isize);
                }
                out.push(acc as f32);
            }
        }
        out.truncate(target);
        out
    }
}

/// Resamples `w` to `target_rate`; only downsampling (or identity) is supported.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::invalid("target rate must be positive"));
    }
    if target_rate > w.rate {
        return Err(Error::invalid(format!(
            "upsampling {} Hz -> {} Hz is not supported",
            w.rate, target_rate
        )));
    }
    if target_rate == w.rate {
        return Ok(w.clone());
    }
    let g = gcd(w.rate as u64, target_rate as u64);
    let kernel = SincKernel::new((w.rate as u64 / g) as usize, (target_rate as u64 / g) as usize);
    Ok(Waveform::new(kernel.apply(&w.samples), target_rate))
}
