//! Audio decoding and cross-correlation alignment between capture devices.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::midi::{sort_and_index, MidiPerformance};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AudioError {
    #[error("malformed WAV at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
    #[error("unsupported codec: format tag 0x{format_tag:04X}, {bits} bits per sample")]
    UnsupportedCodec { format_tag: u16, bits: u16 },
    #[error("degenerate signal: {0} buffer is silent or empty, correlation is undefined")]
    DegenerateSignal(&'static str),
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
}

/// Mono audio normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidSampleRate(sample_rate));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum();
        (sum / self.samples.len() as f64).sqrt()
    }

    /// Linear-interpolation resampling.
    pub fn resampled(&self, target_rate: u32) -> AudioBuffer {
        if target_rate == self.sample_rate || self.samples.is_empty() {
            return AudioBuffer {
                samples: self.samples.clone(),
                sample_rate: target_rate,
            };
        }
        let ratio = f64::from(self.sample_rate) / f64::from(target_rate);
        let out_len = ((self.samples.len() as f64) / ratio).floor().max(1.0) as usize;
        let last = self.samples.len() - 1;
        let samples = (0..out_len)
            .map(|i| {
                let pos = i as f64 * ratio;
                let lo = (pos.floor() as usize).min(last);
                let hi = (lo + 1).min(last);
                let frac = pos - lo as f64;
                (f64::from(self.samples[lo]) * (1.0 - frac) + f64::from(self.samples[hi]) * frac)
                    as f32
            })
            .collect();
        AudioBuffer {
            samples,
            sample_rate: target_rate,
        }
    }
}

const WAVE_FORMAT_PCM: u16 = 0x0001;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 0x0003;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

fn wav_err(offset: usize, reason: impl Into<String>) -> AudioError {
    AudioError::Parse {
        offset,
        reason: reason.into(),
    }
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decode a RIFF/WAVE stream (16/24/32-bit PCM or 32/64-bit float) to mono.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(wav_err(0, "missing RIFF/WAVE header"));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = le_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if len < 16 || body + len > bytes.len() {
                    return Err(wav_err(pos, "truncated fmt chunk"));
                }
                let mut tag = le_u16(bytes, body);
                let channels = le_u16(bytes, body + 2);
                let rate = le_u32(bytes, body + 4);
                let bits = le_u16(bytes, body + 14);
                if tag == WAVE_FORMAT_EXTENSIBLE {
                    if len < 40 {
                        return Err(wav_err(pos, "truncated WAVE_FORMAT_EXTENSIBLE fmt chunk"));
                    }
                    // Sub-format GUID starts with the real format tag.
                    tag = le_u16(bytes, body + 24);
                }
                if channels == 0 {
                    return Err(wav_err(body + 2, "zero channels"));
                }
                if rate == 0 {
                    return Err(AudioError::InvalidSampleRate(rate));
                }
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => {
                let (tag, channels, rate, bits) =
                    fmt.ok_or_else(|| wav_err(pos, "data chunk before fmt chunk"))?;
                if body + len > bytes.len() {
                    return Err(wav_err(
                        pos,
                        format!(
                            "data chunk declares {len} bytes but only {} remain",
                            bytes.len() - body
                        ),
                    ));
                }
                let data = &bytes[body..body + len];
                let samples = decode_samples(data, tag, channels, bits)?;
                return Ok(AudioBuffer {
                    samples,
                    sample_rate: rate,
                });
            }
            _ => {}
        }
        pos = body + len + (len & 1);
    }
    Err(wav_err(pos, "no data chunk"))
}

fn decode_samples(data: &[u8], tag: u16, channels: u16, bits: u16) -> Result<Vec<f32>, AudioError> {
    let sample = |chunk: &[u8]| -> f64 {
        match (tag, bits) {
            (WAVE_FORMAT_PCM, 16) => f64::from(i16::from_le_bytes([chunk[0], chunk[1]])) / 32768.0,
            (WAVE_FORMAT_PCM, 24) => {
                f64::from(i32::from_le_bytes([0, chunk[0], chunk[1], chunk[2]]) >> 8) / 8_388_608.0
            }
            (WAVE_FORMAT_PCM, 32) => {
                f64::from(i32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]))
                    / 2_147_483_648.0
            }
            (WAVE_FORMAT_IEEE_FLOAT, 32) => {
                f64::from(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]))
            }
            (WAVE_FORMAT_IEEE_FLOAT, 64) => f64::from_le_bytes(chunk[..8].try_into().unwrap()),
            _ => unreachable!(),
        }
    };
    match (tag, bits) {
        (WAVE_FORMAT_PCM, 16 | 24 | 32) | (WAVE_FORMAT_IEEE_FLOAT, 32 | 64) => {}
        _ => return Err(AudioError::UnsupportedCodec { format_tag: tag, bits }),
    }
    let width = usize::from(bits / 8);
    let frame_width = width * usize::from(channels);
    let inv = 1.0 / f64::from(channels);
    Ok(data
        .chunks_exact(frame_width)
        .map(|frame| {
            let sum: f64 = frame.chunks_exact(width).map(sample).sum();
            (sum * inv).clamp(-1.0, 1.0) as f32
        })
        .collect())
}

/// Encode mono samples as 16-bit PCM WAV.
pub fn encode_wav_pcm16(buffer: &AudioBuffer) -> Vec<u8> {
    let data_len = buffer.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buffer.sample_rate.to_le_bytes());
    out.extend_from_slice(&(buffer.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &buffer.samples {
        let v = (f64::from(s) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncResult {
    /// Positive when `other` starts later than `reference`.
    pub lag_samples: i64,
    pub lag_s: f64,
    /// Correlation at the chosen lag divided by the product of signal norms.
    pub peak_correlation: f64,
    /// Peak over the strongest competing local maximum; 1 when there is none.
    pub confidence: f64,
    pub sample_rate: u32,
}

/// Raw full cross-correlation `c[k] = Σ_n reference[n] · other[n + k]`
/// for `k` in `-(len_ref - 1) ..= len_other - 1`, via zero-padded FFT.
/// Index 0 of the output is the most negative lag.
pub fn full_cross_correlation(reference: &[f32], other: &[f32]) -> Vec<f64> {
    if reference.is_empty() || other.is_empty() {
        return Vec::new();
    }
    let out_len = reference.len() + other.len() - 1;
    let size = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward: Arc<dyn Fft<f64>> = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);

    let load = |signal: &[f32]| {
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        for (slot, &s) in buf.iter_mut().zip(signal) {
            slot.re = f64::from(s);
        }
        buf
    };
    let mut r = load(reference);
    let mut o = load(other);
    forward.process(&mut r);
    forward.process(&mut o);
    for (a, b) in r.iter_mut().zip(&o) {
        *a = a.conj() * b;
    }
    drop(o);
    inverse.process(&mut r);

    let scale = 1.0 / size as f64;
    let neg = reference.len() - 1;
    (0..out_len)
        .map(|i| {
            let lag = i as i64 - neg as i64;
            let idx = if lag >= 0 {
                lag as usize
            } else {
                (size as i64 + lag) as usize
            };
            r[idx].re * scale
        })
        .collect()
}

/// Exact correlation at a single lag.
pub fn correlation_at(reference: &[f32], other: &[f32], lag: i64) -> f64 {
    let (r_start, o_start) = if lag >= 0 {
        (0usize, lag as usize)
    } else {
        ((-lag) as usize, 0usize)
    };
    if r_start >= reference.len() || o_start >= other.len() {
        return 0.0;
    }
    reference[r_start..]
        .iter()
        .zip(&other[o_start..])
        .map(|(&a, &b)| f64::from(a) * f64::from(b))
        .sum()
}

/// Pick the best lag from a full correlation, breaking ties toward the
/// smaller |lag| (then toward the positive lag).
fn better(candidate: (i64, f64), best: (i64, f64)) -> bool {
    candidate.1 > best.1
        || (candidate.1 == best.1
            && (candidate.0.abs() < best.0.abs()
                || (candidate.0.abs() == best.0.abs() && candidate.0 > best.0)))
}

/// Estimate the offset of `other` relative to `reference`.
///
/// `other` is resampled to the reference rate first when they differ.
pub fn cross_correlate_offset(
    reference: &AudioBuffer,
    other: &AudioBuffer,
) -> Result<SyncResult, AudioError> {
    if reference.rms() == 0.0 {
        return Err(AudioError::DegenerateSignal("reference"));
    }
    let resampled;
    let other = if other.sample_rate != reference.sample_rate {
        resampled = other.resampled(reference.sample_rate);
        &resampled
    } else {
        other
    };
    if other.rms() == 0.0 {
        return Err(AudioError::DegenerateSignal("other"));
    }
    let x = &reference.samples;
    let y = &other.samples;
    let corr = full_cross_correlation(x, y);
    let neg = x.len() as i64 - 1;
    let lag_of = |i: usize| i as i64 - neg;

    let max = corr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let energy_x: f64 = x.iter().map(|&s| f64::from(s).powi(2)).sum();
    let energy_y: f64 = y.iter().map(|&s| f64::from(s).powi(2)).sum();
    let norm = (energy_x * energy_y).sqrt();

    // FFT round-off is a few ulps of the total energy; everything within
    // that band of the maximum is re-evaluated exactly.
    let band = 1e-9 * norm.max(f64::MIN_POSITIVE);
    let mut best: Option<(i64, f64)> = None;
    for (i, &c) in corr.iter().enumerate() {
        if c >= max - band {
            let lag = lag_of(i);
            let exact = correlation_at(x, y, lag);
            if best.map_or(true, |b| better((lag, exact), b)) {
                best = Some((lag, exact));
            }
        }
    }
    let (lag, peak) = best.expect("non-empty correlation");

    // Strongest other local maximum outside the main lobe.
    let peak_idx = (lag + neg) as usize;
    let mut lo = peak_idx;
    while lo > 0 && corr[lo - 1] <= corr[lo] {
        lo -= 1;
    }
    let mut hi = peak_idx;
    while hi + 1 < corr.len() && corr[hi + 1] <= corr[hi] {
        hi += 1;
    }
    let second = corr
        .iter()
        .enumerate()
        .filter(|&(i, _)| i < lo || i > hi)
        .filter(|&(i, &c)| {
            let left = i == 0 || corr[i - 1] <= c;
            let right = i + 1 == corr.len() || corr[i + 1] <= c;
            left && right
        })
        .map(|(_, &c)| c)
        .fold(f64::NEG_INFINITY, f64::max);
    let confidence = if second > 0.0 && peak > 0.0 {
        (peak / second).max(1.0)
    } else {
        1.0
    };

    Ok(SyncResult {
        lag_samples: lag,
        lag_s: lag as f64 / f64::from(reference.sample_rate),
        peak_correlation: (peak / norm).clamp(-1.0, 1.0),
        confidence,
        sample_rate: reference.sample_rate,
    })
}

/// Shift every note by `offset_s`, dropping notes that end at or before 0
/// and clipping notes that straddle 0.
pub fn apply_offset_to_midi(perf: &MidiPerformance, offset_s: f64) -> MidiPerformance {
    if offset_s == 0.0 {
        return perf.clone();
    }
    let mut notes: Vec<_> = perf
        .notes
        .iter()
        .filter_map(|n| {
            let offset = n.offset_s + offset_s;
            if offset <= 0.0 {
                return None;
            }
            let mut shifted = *n;
            shifted.onset_s = (n.onset_s + offset_s).max(0.0);
            shifted.offset_s = offset;
            Some(shifted)
        })
        .collect();
    sort_and_index(&mut notes);
    MidiPerformance {
        notes,
        ppq: perf.ppq,
        tempo_map: perf.tempo_map.clone(),
        duration_s: (perf.duration_s + offset_s).max(0.0),
    }
}
