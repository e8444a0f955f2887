//! Mono WAV in 16-bit PCM or 32-bit IEEE float.

use std::io::{Read, Seek, Write};
use std::path::Path;
use std::str::FromStr;

use hound::{SampleFormat, WavReader};

use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use crate::io::write_atomic;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

impl FromStr for WavEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" => Ok(WavEncoding::Pcm16),
            "float32" => Ok(WavEncoding::Float32),
            other => Err(Error::UnsupportedEncoding(format!("`{other}` (expected pcm16 or float32)"))),
        }
    }
}

fn wav_error(e: hound::Error) -> Error {
    match e {
        // input is always an in-memory buffer, so a read failure means the file ended early
        hound::Error::IoError(io) => Error::WavFormat(format!("truncated chunk ({io})")),
        hound::Error::Unsupported => Error::UnsupportedEncoding("format code other than PCM16 or IEEE float32".into()),
        hound::Error::FormatError(m) => Error::WavFormat(m.to_string()),
        other => Error::WavFormat(other.to_string()),
    }
}

/// Format code stored in the `fmt ` chunk, if the header gets that far.
fn format_code(bytes: &[u8]) -> Option<u16> {
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return None;
    }
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let len = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().ok()?) as usize;
        if &bytes[pos..pos + 4] == b"fmt " {
            return bytes.get(pos + 8..pos + 10).map(|b| u16::from_le_bytes([b[0], b[1]]));
        }
        pos += 8 + len + (len & 1);
    }
    None
}

pub fn decode_wav<R: Read + Seek>(reader: R) -> Result<AudioBuffer> {
    let r = WavReader::new(reader).map_err(wav_error)?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(Error::WavFormat(format!("{} channels; only mono is accepted", spec.channels)));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => r
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>(),
        (SampleFormat::Float, 32) => r.into_samples::<f32>().collect(),
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!("{bits}-bit {fmt:?}; expected 16-bit PCM or 32-bit float")))
        }
    }
    .map_err(wav_error)?;
    AudioBuffer::new(samples, spec.sample_rate)
}

pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let bytes = std::fs::read(path)?;
    match format_code(&bytes) {
        Some(1 | 3 | 0xFFFE) | None => {}
        Some(code) => return Err(Error::UnsupportedEncoding(format!("format code {code} in {}", path.display()))),
    }
    decode_wav(std::io::Cursor::new(bytes))
}

fn pcm16(x: f32) -> i16 {
    (x as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Canonical 44-byte header: `fmt ` with format code 1 or 3, then `data`.
pub fn write_wav(path: &Path, audio: &AudioBuffer, encoding: WavEncoding) -> Result<()> {
    let (code, width): (u16, u16) = match encoding {
        WavEncoding::Pcm16 => (1, 2),
        WavEncoding::Float32 => (3, 4),
    };
    let data_len = u32::try_from(audio.len() * width as usize)
        .ok()
        .filter(|&n| n <= u32::MAX - 36)
        .ok_or_else(|| Error::WavFormat(format!("{} samples do not fit in a RIFF file", audio.len())))?;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&code.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * width as u32).to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&(width * 8).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &audio.samples {
        match encoding {
            WavEncoding::Pcm16 => out.extend_from_slice(&pcm16(s).to_le_bytes()),
            WavEncoding::Float32 => out.extend_from_slice(&s.to_le_bytes()),
        }
    }
    write_atomic(path, |w| Ok(w.write_all(&out)?))
}
