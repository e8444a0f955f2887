//! Seeded training example: reverberant target, interferer and noise at
//! drawn levels, peak limited, plus an enrollment crop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teapse::datagen::{draw_recipe, generate_rir, synth_example, MixtureRecipe, RoomSpec};
use teapse::dsp::{AudioBuffer, MODEL_SAMPLE_RATE};

fn power_db(x: &[f32]) -> f64 {
    10.0 * (x.iter().map(|&v| v as f64 * v as f64).sum::<f64>() / x.len() as f64).log10()
}

fn main() -> teapse::Result<()> {
    let rate = MODEL_SAMPLE_RATE;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tone = |f: f64, secs: usize| {
        let s = (0..secs * rate as usize)
            .map(|i| (0.3 * (2.0 * std::f64::consts::PI * f * i as f64 / rate as f64).sin()) as f32 + rng.gen_range(-0.01..0.01))
            .collect();
        AudioBuffer::new(s, rate)
    };
    let target = tone(200.0, 4)?;
    let interferer = tone(330.0, 3)?;
    let noise = AudioBuffer::new((0..rate as usize).map(|i| ((i * 7919) % 1000) as f32 / 1000.0 - 0.5).collect(), rate)?;

    for seed in 0..3u64 {
        let draw = draw_recipe(seed);
        let mut room_rng = ChaCha8Rng::seed_from_u64(seed);
        let rir = generate_rir(&RoomSpec::random(&mut room_rng, draw.rt60))?;
        let recipe = MixtureRecipe {
            noise: Some(noise.clone()),
            interferer: draw.with_interferer.then(|| interferer.clone()),
            target_rir: Some(rir),
            snr_db: draw.snr_db,
            sir_db: draw.sir_db,
            ..MixtureRecipe::new(target.clone(), seed)
        };
        let ex = synth_example(&recipe)?;
        let clean_db = power_db(&ex.clean.samples) - 20.0 * ex.gain.log10();
        println!(
            "seed={seed} rt60={:.2} snr={:.1} (got {:.1}) interferer={} peak={:.3} enroll={} samples",
            draw.rt60,
            draw.snr_db,
            clean_db - power_db(&ex.noise),
            draw.with_interferer,
            ex.noisy.peak(),
            ex.enroll.len()
        );
    }
    Ok(())
}
