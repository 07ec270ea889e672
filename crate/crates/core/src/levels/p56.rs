//! Active speech level, ITU-T P.56 method B.
//!
//! The signal envelope is a two-stage exponential smoother of the rectified
//! signal. For each threshold on a ladder spaced 6.02 dB apart, a sample counts
//! as active while the envelope is at or above the threshold, or within the
//! hangover period after it last was. The active level is the point where the
//! level computed over the active samples sits exactly `margin` above the
//! threshold, interpolated between neighbouring rungs of the ladder.
//!
//! The ladder is placed relative to the signal peak, which makes the measured
//! level exactly scale-equivariant.

use crate::dsp::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P56Params {
    /// Envelope smoothing time constant in seconds.
    pub time_constant: f64,
    /// Hangover in seconds.
    pub hangover: f64,
    /// Required distance of active level above threshold, dB.
    pub margin_db: f64,
    /// Number of thresholds on the ladder (2^0 .. 2^-(n-1) of the peak).
    pub ladder_steps: usize,
    /// Minimum signal duration in seconds.
    pub min_duration: f64,
}

impl Default for P56Params {
    fn default() -> Self {
        Self {
            time_constant: 0.03,
            hangover: 0.2,
            margin_db: 15.9,
            ladder_steps: 25,
            min_duration: 0.1,
        }
    }
}

/// Level measurement details.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeechLevel {
    /// Active speech level, dB relative to a unit-RMS signal (0 dB for a
    /// full-scale square wave).
    pub active_db: f64,
    /// Long-term level over all samples, same reference.
    pub long_term_db: f64,
    /// Fraction of samples deemed active.
    pub activity: f64,
}

pub fn active_speech_level(w: &Waveform) -> Result<f64> {
    Ok(measure_speech_level(w, &P56Params::default())?.active_db)
}

pub fn measure_speech_level(w: &Waveform, params: &P56Params) -> Result<SpeechLevel> {
    w.validate()?;
    let fs = w.sample_rate as f64;
    let min_len = (params.min_duration * fs).ceil() as usize;
    if w.len() < min_len {
        return Err(Error::SignalTooShort(format!(
            "{} samples, active speech level needs at least {min_len}",
            w.len()
        )));
    }
    let peak = w.peak();
    if peak == 0.0 {
        return Err(Error::NoActiveSpeech);
    }

    let g = (-1.0 / (fs * params.time_constant)).exp();
    let hang_samples = (params.hangover * fs).round() as u64;
    let n_thr = params.ladder_steps;
    // thresholds[j] = 2^-j relative to peak, descending
    let thresholds: Vec<f64> = (0..n_thr).map(|j| (-(j as f64)).exp2()).collect();
    let mut active = vec![0u64; n_thr];
    let mut hang = vec![0u64; n_thr];

    let inv_peak = 1.0 / peak;
    let (mut p, mut q) = (0.0f64, 0.0f64);
    let mut energy = 0.0;
    for &x in &w.samples {
        let x = x * inv_peak;
        energy += x * x;
        p = g * p + (1.0 - g) * x.abs();
        q = g * q + (1.0 - g) * p;
        for j in 0..n_thr {
            if q >= thresholds[j] {
                active[j] += 1;
                hang[j] = 0;
            } else if hang[j] < hang_samples {
                active[j] += 1;
                hang[j] += 1;
            }
        }
    }
    if energy == 0.0 {
        return Err(Error::NoActiveSpeech);
    }

    let n = w.len() as f64;
    let peak_db = 20.0 * peak.log10();
    let long_term_db = 10.0 * (energy / n).log10() + peak_db;

    // Walk the ladder from the lowest threshold upwards. The distance between
    // active level and threshold shrinks as the threshold rises; find where it
    // crosses the margin.
    let rung = |j: usize| -> Option<(f64, f64)> {
        if active[j] == 0 {
            return None;
        }
        let level = 10.0 * (energy / active[j] as f64).log10();
        let thr_db = 20.0 * thresholds[j].log10();
        Some((thr_db, level - thr_db))
    };
    let m = params.margin_db;
    let mut prev: Option<(usize, f64, f64)> = None;
    let mut result = None;
    for j in (0..n_thr).rev() {
        let Some((thr_db, delta)) = rung(j) else {
            break;
        };
        if delta <= m {
            result = Some(match prev {
                None => thr_db + delta,
                Some((_, prev_thr, prev_delta)) => {
                    let t = (prev_delta - m) / (prev_delta - delta);
                    prev_thr + t * (thr_db - prev_thr) + m
                }
            });
            break;
        }
        prev = Some((j, thr_db, delta));
    }
    let active_rel = match (result, prev) {
        (Some(level), _) => level,
        // The margin was never reached: every rung is "too quiet"; use the
        // highest populated rung's level.
        (None, Some((_, thr_db, delta))) => thr_db + delta,
        (None, None) => return Err(Error::NoActiveSpeech),
    };
    let active_db = active_rel + peak_db;
    let activity = (10.0f64.powf((long_term_db - active_db) / 10.0)).min(1.0);
    Ok(SpeechLevel {
        active_db,
        long_term_db,
        activity,
    })
}
