//! Minimal mono PCM16 WAV and raw little-endian f64 readers/writers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AudioFormat {
    WavPcm16Mono,
    RawF64Le,
}

impl AudioFormat {
    /// `.wav` selects WAV, anything else raw.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("wav") => AudioFormat::WavPcm16Mono,
            _ => AudioFormat::RawF64Le,
        }
    }
}

/// `raw_sample_rate` is used for raw files only; WAV files carry their own.
pub fn load_waveform(path: &Path, format: AudioFormat, raw_sample_rate: u32) -> Result<Waveform> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        AudioFormat::WavPcm16Mono => decode_wav(&bytes),
        AudioFormat::RawF64Le => decode_raw(&bytes, raw_sample_rate),
    }
}

pub fn save_waveform(w: &Waveform, path: &Path, format: AudioFormat) -> Result<()> {
    let bytes = match format {
        AudioFormat::WavPcm16Mono => encode_wav(w),
        AudioFormat::RawF64Le => encode_raw(w),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_raw(w: &Waveform) -> Vec<u8> {
    w.samples().iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn decode_raw(bytes: &[u8], sample_rate: u32) -> Result<Waveform> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::MalformedWav(format!(
            "raw f64 file length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Waveform::new(samples, sample_rate)
}

/// 44-byte canonical header followed by PCM16 data. Samples are scaled by
/// 32768 and saturated to the i16 range.
pub fn encode_wav(w: &Waveform) -> Vec<u8> {
    let data_len = (w.len() * 2) as u32;
    let rate = w.sample_rate();
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &x in w.samples() {
        let q = (x * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn decode_wav(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedWav("missing RIFF/WAVE signature".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body.checked_add(size).filter(|&e| e <= bytes.len());
        match id {
            b"fmt " => {
                if size < 16 || end.is_none() {
                    return Err(Error::MalformedWav("truncated fmt chunk".into()));
                }
                fmt = Some((
                    u16_at(bytes, body),
                    u16_at(bytes, body + 2),
                    u32_at(bytes, body + 4),
                    u16_at(bytes, body + 14),
                ));
            }
            b"data" => {
                let (format, channels, rate, bits) =
                    fmt.ok_or_else(|| Error::MalformedWav("data chunk before fmt chunk".into()))?;
                if channels != 1 {
                    return Err(Error::UnsupportedChannels(channels));
                }
                if format != 1 || bits != 16 {
                    return Err(Error::UnsupportedEncoding { format, bits });
                }
                let end = end.ok_or_else(|| Error::MalformedWav("truncated data chunk".into()))?;
                if !size.is_multiple_of(2) {
                    return Err(Error::MalformedWav("odd PCM16 data length".into()));
                }
                let samples = bytes[body..end]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                    .collect();
                return Waveform::new(samples, rate);
            }
            _ => {}
        }
        // Chunks are padded to even sizes.
        pos = body + size + (size & 1);
    }
    Err(Error::MalformedWav("no data chunk".into()))
}
