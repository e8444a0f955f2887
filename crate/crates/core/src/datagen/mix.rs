//! SNR-controlled mixing and the seeded example synthesizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realfft::RealFftPlanner;

use crate::datagen::rir::RT60_RANGE;
use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};

/// Accepted range for any requested SNR or SIR.
pub const LEVEL_LIMIT_DB: f64 = 60.0;
/// Range the recipe sampler draws SNR and SIR from.
pub const MIX_RANGE_DB: (f64, f64) = (-5.0, 20.0);
pub const PEAK_LIMIT: f32 = 0.99;
/// Enrollment length cut from the target when no separate clip is given.
pub const ENROLL_SECONDS: f64 = 3.0;

fn power(x: &[f32]) -> f64 {
    x.iter().map(|&v| v as f64 * v as f64).sum::<f64>() / x.len().max(1) as f64
}

/// `noise` repeated from `offset` until it covers `len` samples.
pub fn loop_to_length(noise: &[f32], len: usize, offset: usize) -> Vec<f32> {
    if noise.is_empty() {
        return vec![0.0; len];
    }
    (0..len).map(|i| noise[(offset + i) % noise.len()]).collect()
}

fn check_level(what: &str, db: f64) -> Result<()> {
    if !(db.abs() <= LEVEL_LIMIT_DB) {
        return Err(Error::InvalidArgument(format!(
            "{what} {db} dB outside [-{LEVEL_LIMIT_DB}, {LEVEL_LIMIT_DB}]"
        )));
    }
    Ok(())
}

/// Gain that puts `other` at `db` below `reference` in mean power.
pub fn level_scale(reference: &[f32], other: &[f32], db: f64) -> Result<f64> {
    check_level("level", db)?;
    let (pr, po) = (power(reference), power(other));
    if pr == 0.0 {
        return Err(Error::Silent("target signal is silent".into()));
    }
    if po == 0.0 {
        return Err(Error::Silent("noise signal is silent".into()));
    }
    Ok((pr / (po * 10f64.powf(db / 10.0))).sqrt())
}

/// `target + noise_scale * noise` with the noise looped or trimmed to the target length.
pub fn mix_at_snr(target: &AudioBuffer, noise: &AudioBuffer, snr_db: f64) -> Result<(AudioBuffer, f64)> {
    check_level("SNR", snr_db)?;
    let noise = loop_to_length(&noise.samples, target.len(), 0);
    let scale = level_scale(&target.samples, &noise, snr_db)?;
    let mix = target
        .samples
        .iter()
        .zip(&noise)
        .map(|(&t, &n)| (t as f64 + scale * n as f64) as f32)
        .collect();
    Ok((AudioBuffer::new(mix, target.sample_rate)?, scale))
}

/// Full linear convolution truncated to the length of `x`.
pub fn convolve(x: &[f32], h: &[f32]) -> Vec<f32> {
    let h = &h[..h.len().min(x.len())];
    if h.len() <= 64 {
        let mut y = vec![0.0f64; x.len()];
        for (k, &hk) in h.iter().enumerate() {
            for (yi, &xi) in y[k..].iter_mut().zip(x) {
                *yi += hk as f64 * xi as f64;
            }
        }
        return y.into_iter().map(|v| v as f32).collect();
    }
    let n = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let (fwd, inv) = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
    let spectrum = |v: &[f32]| {
        let mut buf = vec![0.0f64; n];
        buf.iter_mut().zip(v).for_each(|(b, &s)| *b = s as f64);
        let mut out = fwd.make_output_vec();
        fwd.process(&mut buf, &mut out).expect("FFT buffer sizes");
        out
    };
    let (a, b) = (spectrum(x), spectrum(h));
    let mut prod: Vec<_> = a.iter().zip(&b).map(|(p, q)| p * q).collect();
    let mut y = inv.make_output_vec();
    inv.process(&mut prod, &mut y).expect("FFT buffer sizes");
    y.truncate(x.len());
    y.into_iter().map(|v| (v / n as f64) as f32).collect()
}

#[derive(Clone, Debug)]
pub struct MixtureRecipe {
    pub target: AudioBuffer,
    pub noise: Option<AudioBuffer>,
    pub interferer: Option<AudioBuffer>,
    /// Impulse response applied to the target; `None` is anechoic.
    pub target_rir: Option<AudioBuffer>,
    /// Separate enrollment clip; when absent one is cut from the dry target.
    pub enroll: Option<AudioBuffer>,
    pub snr_db: f64,
    pub sir_db: f64,
    /// Gain applied to the sum before peak limiting.
    pub output_gain: f64,
    pub seed: u64,
}

impl MixtureRecipe {
    pub fn new(target: AudioBuffer, seed: u64) -> Self {
        Self {
            target,
            noise: None,
            interferer: None,
            target_rir: None,
            enroll: None,
            snr_db: 10.0,
            sir_db: 10.0,
            output_gain: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range = MIX_RANGE_DB.0..=MIX_RANGE_DB.1;
        if !range.contains(&self.snr_db) || !range.contains(&self.sir_db) {
            return Err(Error::InvalidArgument(format!(
                "SNR {} / SIR {} dB outside [{}, {}]",
                self.snr_db, self.sir_db, MIX_RANGE_DB.0, MIX_RANGE_DB.1
            )));
        }
        if !(self.output_gain > 0.0 && self.output_gain.is_finite()) {
            return Err(Error::InvalidArgument(format!("output gain {} must be positive", self.output_gain)));
        }
        if self.target.is_empty() {
            return Err(Error::InputTooShort("empty target".into()));
        }
        let rate = self.target.sample_rate;
        for (what, b) in [("noise", &self.noise), ("interferer", &self.interferer), ("rir", &self.target_rir), ("enroll", &self.enroll)] {
            if let Some(b) = b {
                if b.sample_rate != rate {
                    return Err(Error::InvalidArgument(format!("{what} rate {} differs from target {rate}", b.sample_rate)));
                }
            }
        }
        Ok(())
    }
}

/// One synthesized training example with its pre-sum components kept.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub noisy: AudioBuffer,
    /// Reverberant target after the same gain as `noisy`.
    pub clean: AudioBuffer,
    pub enroll: AudioBuffer,
    /// Scaled interferer and noise as added, before the output gain.
    pub interference: Vec<f32>,
    pub noise: Vec<f32>,
    /// Final gain shared by `noisy` and `clean`.
    pub gain: f64,
}

pub fn synth_example(recipe: &MixtureRecipe) -> Result<Example> {
    recipe.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let n = recipe.target.len();
    let rate = recipe.target.sample_rate;
    let clean = match &recipe.target_rir {
        Some(h) => convolve(&recipe.target.samples, &h.samples),
        None => recipe.target.samples.clone(),
    };

    let interference = match &recipe.interferer {
        Some(i) => {
            let off = rng.gen_range(0..i.len().max(1));
            let raw = loop_to_length(&i.samples, n, off);
            let g = level_scale(&clean, &raw, recipe.sir_db)?;
            raw.iter().map(|&v| (g * v as f64) as f32).collect()
        }
        None => vec![0.0; n],
    };
    let noise = match &recipe.noise {
        Some(z) => {
            let off = rng.gen_range(0..z.len().max(1));
            let raw = loop_to_length(&z.samples, n, off);
            let g = level_scale(&clean, &raw, recipe.snr_db)?;
            raw.iter().map(|&v| (g * v as f64) as f32).collect()
        }
        None => vec![0.0; n],
    };

    let sum: Vec<f64> = (0..n)
        .map(|i| clean[i] as f64 + interference[i] as f64 + noise[i] as f64)
        .collect();
    let peak = sum.iter().fold(0.0f64, |m, v| m.max(v.abs())) * recipe.output_gain;
    let gain = if peak > PEAK_LIMIT as f64 {
        recipe.output_gain * PEAK_LIMIT as f64 / peak
    } else {
        recipe.output_gain
    };
    let noisy = sum.iter().map(|&v| (v * gain) as f32).collect();
    let clean_out = clean.iter().map(|&v| (v as f64 * gain) as f32).collect();

    let enroll = match &recipe.enroll {
        Some(e) => e.clone(),
        None => {
            let len = ((ENROLL_SECONDS * rate as f64) as usize).min(n);
            let start = rng.gen_range(0..=n - len);
            AudioBuffer::new(recipe.target.samples[start..start + len].to_vec(), rate)?
        }
    };
    Ok(Example {
        noisy: AudioBuffer::new(noisy, rate)?,
        clean: AudioBuffer::new(clean_out, rate)?,
        enroll,
        interference,
        noise,
        gain,
    })
}

/// Randomized mixing parameters for one example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecipeDraw {
    pub seed: u64,
    pub rt60: f64,
    pub snr_db: f64,
    pub sir_db: f64,
    pub with_interferer: bool,
}

/// Probability that a drawn example contains an interfering talker.
pub const INTERFERER_PROB: f64 = 0.5;

/// Deterministic per-seed draw: RT60 and levels uniform over their ranges.
pub fn draw_recipe(seed: u64) -> RecipeDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RecipeDraw {
        seed,
        rt60: rng.gen_range(RT60_RANGE.0..=RT60_RANGE.1),
        snr_db: rng.gen_range(MIX_RANGE_DB.0..=MIX_RANGE_DB.1),
        sir_db: rng.gen_range(MIX_RANGE_DB.0..=MIX_RANGE_DB.1),
        with_interferer: rng.gen_bool(INTERFERER_PROB),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(n: usize, seed: u64, amp: f32) -> AudioBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioBuffer::new((0..n).map(|_| rng.gen_range(-amp..amp)).collect(), 48_000).unwrap()
    }

    fn db(a: &[f32], b: &[f32]) -> f64 {
        10.0 * (power(a) / power(b)).log10()
    }

    #[test]
    fn equal_power_at_zero_db_needs_no_scaling() {
        let t = AudioBuffer::new(vec![0.5, -0.5, 0.5, -0.5], 48_000).unwrap();
        let n = AudioBuffer::new(vec![-0.5, 0.5, 0.5, 0.5], 48_000).unwrap();
        let (_, s) = mix_at_snr(&t, &n, 0.0).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn achieved_snr_matches_request() {
        let t = noise(48_000, 1, 0.3);
        let n = noise(30_000, 2, 0.8);
        let (mix, s) = mix_at_snr(&t, &n, 10.0).unwrap();
        let scaled: Vec<f32> = loop_to_length(&n.samples, t.len(), 0).iter().map(|&v| (s * v as f64) as f32).collect();
        assert!((db(&t.samples, &scaled) - 10.0).abs() <= 0.01);
        // mixture minus scaled noise gives back the target
        for ((m, z), x) in mix.samples.iter().zip(&scaled).zip(&t.samples) {
            assert!((m - z - x).abs() <= 1e-6);
        }
    }

    #[test]
    fn errors() {
        let t = noise(100, 3, 0.3);
        assert!(matches!(mix_at_snr(&t, &t, 61.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(mix_at_snr(&t, &t, f64::INFINITY), Err(Error::InvalidArgument(_))));
        assert!(matches!(mix_at_snr(&AudioBuffer::zeros(100, 48_000), &t, 0.0), Err(Error::Silent(_))));
        assert!(matches!(mix_at_snr(&t, &AudioBuffer::zeros(100, 48_000), 0.0), Err(Error::Silent(_))));
    }

    #[test]
    fn convolution_with_unit_impulse_is_identity() {
        let x = noise(50, 4, 1.0).samples;
        assert_eq!(convolve(&x, &[1.0]), x);
        let y = convolve(&x, &[0.0, 0.0, 2.0]);
        assert_eq!(y[..2], [0.0, 0.0]);
        assert_eq!(y[2], 2.0 * x[0]);
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let x = noise(3000, 14, 1.0).samples;
        let h = noise(700, 15, 1.0).samples;
        let y = convolve(&x, &h);
        for n in [0, 1, 699, 700, 2999] {
            let want: f64 = (0..=n.min(699)).map(|k| h[k] as f64 * x[n - k] as f64).sum();
            assert!((y[n] as f64 - want).abs() < 1e-4, "{n}");
        }
    }

    #[test]
    fn anechoic_without_noise_is_clean_up_to_gain() {
        let r = MixtureRecipe::new(noise(48_000, 5, 0.5), 9);
        let ex = synth_example(&r).unwrap();
        assert_eq!(ex.noisy, ex.clean);
        for (a, b) in ex.clean.samples.iter().zip(&r.target.samples) {
            assert!((*a as f64 - ex.gain * *b as f64).abs() < 1e-6);
        }
    }

    fn full_recipe(seed: u64) -> MixtureRecipe {
        let mut h = vec![0.0f32; 2000];
        h[0] = 1.0;
        h[500] = 0.4;
        h[1500] = -0.2;
        MixtureRecipe {
            noise: Some(noise(20_000, 6, 0.2)),
            interferer: Some(noise(70_000, 7, 0.4)),
            target_rir: Some(AudioBuffer::new(h, 48_000).unwrap()),
            snr_db: 5.0,
            sir_db: 5.0,
            output_gain: 3.0,
            ..MixtureRecipe::new(noise(96_000, 8, 0.5), seed)
        }
    }

    #[test]
    fn component_levels_and_peak_limit() {
        let ex = synth_example(&full_recipe(11)).unwrap();
        let clean: Vec<f32> = ex.clean.samples.iter().map(|&v| (v as f64 / ex.gain) as f32).collect();
        assert!((db(&clean, &ex.noise) - 5.0).abs() <= 0.05);
        assert!((db(&clean, &ex.interference) - 5.0).abs() <= 0.05);
        assert!(ex.noisy.peak() <= PEAK_LIMIT + 1e-6);
        assert!(ex.gain < 3.0);
        assert_eq!(ex.enroll.len(), 96_000);
    }

    #[test]
    fn same_seed_same_example() {
        let a = synth_example(&full_recipe(12)).unwrap();
        let b = synth_example(&full_recipe(12)).unwrap();
        assert_eq!(a, b);
        let c = synth_example(&full_recipe(13)).unwrap();
        assert_ne!(a.noisy, c.noisy);
    }

    #[test]
    fn recipe_validation() {
        let mut r = full_recipe(1);
        r.snr_db = 25.0;
        assert!(synth_example(&r).is_err());
        let mut r = full_recipe(1);
        r.noise = Some(AudioBuffer::new(vec![0.1; 10], 16_000).unwrap());
        assert!(synth_example(&r).is_err());
    }

    #[test]
    fn rt60_draws_cover_the_range_uniformly() {
        let mut v: Vec<f64> = (0..1000).map(|s| draw_recipe(s).rt60).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (lo, hi) = RT60_RANGE;
        let ks = v.iter().enumerate().fold(0.0f64, |m, (i, &x)| {
            let cdf = (x - lo) / (hi - lo);
            m.max((cdf - i as f64 / 1000.0).abs()).max(((i + 1) as f64 / 1000.0 - cdf).abs())
        });
        assert!(ks < 0.05, "{ks}");
        assert!(v.iter().all(|&x| (lo..=hi).contains(&x)));
    }
}
