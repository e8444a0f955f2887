//! Frame-by-frame inference with a 10 ms hop, compared against the offline
//! path after the fixed one-hop latency.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use teapse::dsp::{AudioBuffer, MODEL_SAMPLE_RATE};
use teapse::model::{build_model, HeadInit, ModelConfig, SpeakerEmbedding};

fn main() -> teapse::Result<()> {
    let cfg = ModelConfig {
        com_head_init: HeadInit::Random,
        ..ModelConfig::toy()
    };
    let model = build_model(&cfg, 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut noise = |n: usize| AudioBuffer::new((0..n).map(|_| rng.gen_range(-0.3f32..0.3)).collect(), MODEL_SAMPLE_RATE);
    let noisy = noise(3 * MODEL_SAMPLE_RATE as usize)?;
    let enroll = noise(MODEL_SAMPLE_RATE as usize)?;
    let emb = SpeakerEmbedding::zeros(cfg.embedding_dim);

    let mut session = model.stream(&enroll, &emb)?;
    let hop = session.hop();
    let lat = session.latency();
    println!("hop={hop} latency={lat} samples");

    let mut streamed = Vec::new();
    let t0 = Instant::now();
    for frame in noisy.samples.chunks_exact(hop) {
        streamed.extend(session.push(frame)?);
    }
    streamed.extend(session.push(&vec![0.0; hop])?);
    let per_frame = t0.elapsed().as_secs_f64() / (streamed.len() / hop) as f64;

    let offline = model.enhance_offline(&noisy, &enroll, &emb)?;
    let diff = offline
        .samples
        .iter()
        .zip(&streamed[lat..])
        .fold(0.0f32, |m, (a, b)| m.max((a - b).abs()));
    println!("max |stream[s + {lat}] - offline[s]| = {diff:.2e}");
    println!("mean time per frame = {:.3} ms", per_frame * 1e3);

    session.reset();
    let replay = session.process(&noisy.samples)?;
    println!("reset replays identically: {}", replay[..] == streamed[..replay.len()]);
    Ok(())
}
