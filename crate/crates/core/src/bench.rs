//! Real-time-factor measurement on synthetic input.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{AudioBuffer, MODEL_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::model::{Model, SpeakerEmbedding};

pub const WARMUP_FRAMES: usize = 50;
pub const MIN_BENCH_SECONDS: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchMode {
    Offline,
    Streaming,
}

impl FromStr for BenchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "offline" => Ok(BenchMode::Offline),
            "streaming" => Ok(BenchMode::Streaming),
            other => Err(Error::InvalidArgument(format!("unknown bench mode `{other}`"))),
        }
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMode::Offline => "offline",
            BenchMode::Streaming => "streaming",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub mode: BenchMode,
    pub seconds: f64,
    /// Timed frames: post-warm-up hops when streaming, all hops offline.
    pub frames: usize,
    pub rtf_mean: f64,
    pub rtf_p95: f64,
    /// Wall time of the timed region.
    pub total_secs: f64,
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode={}", self.mode)?;
        writeln!(f, "seconds={}", self.seconds)?;
        writeln!(f, "frames={}", self.frames)?;
        writeln!(f, "rtf_mean={:.4}", self.rtf_mean)?;
        writeln!(f, "rtf_p95={:.4}", self.rtf_p95)?;
        writeln!(f, "total_secs={:.4}", self.total_secs)
    }
}

fn noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect()
}

fn p95(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[((v.len() as f64 * 0.95).ceil() as usize).clamp(1, v.len()) - 1]
}

/// Time `model` on `seconds` of seeded noise; rtf is time per 10 ms hop over 10 ms.
pub fn bench_rtf(model: &Model, seconds: f64, mode: BenchMode, seed: u64) -> Result<BenchReport> {
    if !(seconds >= MIN_BENCH_SECONDS && seconds.is_finite()) {
        return Err(Error::InvalidArgument(format!("bench needs at least {MIN_BENCH_SECONDS} s, got {seconds}")));
    }
    let rate = MODEL_SAMPLE_RATE;
    let hop = model.config().stft.hop_len;
    let hop_secs = hop as f64 / rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * rate as f64).round() as usize / hop * hop;
    let noisy = AudioBuffer::new(noise(n, &mut rng), rate)?;
    let enroll = AudioBuffer::new(noise(rate as usize, &mut rng), rate)?;
    let emb = SpeakerEmbedding::new(noise(model.config().embedding_dim, &mut rng))?;
    let cond = model.condition(&enroll, &emb)?;
    let total_frames = n / hop;

    match mode {
        BenchMode::Streaming => {
            let mut session = model.stream(&enroll, &emb)?;
            let mut times = Vec::with_capacity(total_frames);
            for frame in noisy.samples.chunks_exact(hop) {
                let t0 = Instant::now();
                std::hint::black_box(session.push(frame)?);
                times.push(t0.elapsed().as_secs_f64());
            }
            let mut rtf: Vec<f64> = times[WARMUP_FRAMES.min(times.len())..].iter().map(|t| t / hop_secs).collect();
            let total: f64 = times[WARMUP_FRAMES.min(times.len())..].iter().sum();
            let mean = rtf.iter().sum::<f64>() / rtf.len() as f64;
            Ok(BenchReport {
                mode,
                seconds,
                frames: rtf.len(),
                rtf_mean: mean,
                rtf_p95: p95(&mut rtf),
                total_secs: total,
            })
        }
        BenchMode::Offline => {
            let warm = AudioBuffer::new(noisy.samples[..WARMUP_FRAMES * hop].to_vec(), rate)?;
            std::hint::black_box(model.enhance_with(&warm, &cond)?);
            let t0 = Instant::now();
            std::hint::black_box(model.enhance_with(&noisy, &cond)?);
            let total = t0.elapsed().as_secs_f64();
            let rtf = total / (total_frames as f64 * hop_secs);
            Ok(BenchReport {
                mode,
                seconds,
                frames: total_frames,
                rtf_mean: rtf,
                rtf_p95: rtf,
                total_secs: total,
            })
        }
    }
}
