//! Offline two-stage enhancement of a synthetic noisy recording.
//!
//! Weights are random (no trained checkpoint ships with the crate), so the
//! point is the data flow: stage-1 mask, stage-2 residual, both waveforms.
//! Pass `default` as the first argument to run the full-size model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teapse::dsp::{AudioBuffer, MODEL_SAMPLE_RATE};
use teapse::losses::si_snr;
use teapse::model::{build_model, HeadInit, ModelConfig, SpeakerEmbedding};

fn main() -> teapse::Result<()> {
    let mut cfg = match std::env::args().nth(1).as_deref() {
        Some("default") => ModelConfig::default(),
        _ => ModelConfig::toy(),
    };
    cfg.com_head_init = HeadInit::Random;
    let model = build_model(&cfg, 7)?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rate = MODEL_SAMPLE_RATE as f64;
    let speech: Vec<f32> = (0..2 * MODEL_SAMPLE_RATE as usize)
        .map(|i| (0.3 * (2.0 * std::f64::consts::PI * 220.0 * i as f64 / rate).sin()) as f32)
        .collect();
    let noisy: Vec<f32> = speech.iter().map(|s| s + rng.gen_range(-0.1f32..0.1)).collect();
    let noisy = AudioBuffer::new(noisy, MODEL_SAMPLE_RATE)?;
    let enroll = AudioBuffer::new(speech[..MODEL_SAMPLE_RATE as usize].to_vec(), MODEL_SAMPLE_RATE)?;
    let emb = SpeakerEmbedding::new((0..cfg.embedding_dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect())?;

    let cond = model.condition(&enroll, &emb)?;
    let out = model.enhance_detailed(&noisy, &cond)?;
    println!("frames={} bins={}", out.output_spec.frames(), out.output_spec.bins());
    println!("input  si_snr={:.2} dB", si_snr(&speech, &noisy.samples)?);
    println!("stage1 si_snr={:.2} dB", si_snr(&speech, &out.stage1.samples)?);
    println!("output si_snr={:.2} dB", si_snr(&speech, &out.output.samples)?);

    let again = model.enhance_offline(&noisy, &enroll, &emb)?;
    println!("deterministic={}", again.samples == out.output.samples);
    Ok(())
}
