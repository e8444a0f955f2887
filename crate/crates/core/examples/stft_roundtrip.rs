//! Analysis/synthesis round trip at the model resolution and the three loss
//! resolutions, plus the power-law compressed view the networks see.

use teapse::dsp::{istft, power_law_compress, stft, AudioBuffer, StftConfig, MODEL_SAMPLE_RATE};

fn main() -> teapse::Result<()> {
    let n = MODEL_SAMPLE_RATE as usize;
    let chirp: Vec<f32> = (0..n)
        .map(|i| {
            let t = i as f64 / MODEL_SAMPLE_RATE as f64;
            (0.5 * (2.0 * std::f64::consts::PI * (100.0 * t + 4000.0 * t * t)).sin()) as f32
        })
        .collect();
    let x = AudioBuffer::new(chirp, MODEL_SAMPLE_RATE)?;

    let mut configs = vec![StftConfig::model().with_center_pad(true)];
    configs.extend(StftConfig::multi_resolution());
    for cfg in configs {
        let spec = stft(&x, &cfg)?;
        let y = istft(&spec, x.len())?;
        let err = x.samples.iter().zip(&y.samples).fold(0.0f32, |m, (a, b)| m.max((a - b).abs()));
        println!(
            "fft={} win={} hop={} frames={} bins={} max_err={err:.2e}",
            cfg.fft_len,
            cfg.win_len,
            cfg.hop_len,
            spec.frames(),
            spec.bins()
        );
    }

    let spec = stft(&x, &StftConfig::model())?;
    let (mag_c, _) = power_law_compress(&spec, 0.3)?;
    let peak = mag_c.data().iter().fold(0.0f32, |m, &v| m.max(v));
    println!("compressed magnitude peak (c=0.3): {peak:.3}");
    Ok(())
}
