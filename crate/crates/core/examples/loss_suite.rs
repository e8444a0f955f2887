//! SI-SNR, the compressed spectral terms and both composites on a reference
//! and a degraded estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teapse::losses::{composite_loss, fd_gradient, si_snr, si_snr_grad, Composite, MultiResConfig};

fn main() -> teapse::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s: Vec<f32> = (0..48_000).map(|i| (0.4 * (i as f32 * 0.031).sin()) + rng.gen_range(-0.05..0.05)).collect();
    let est: Vec<f32> = s.iter().map(|v| 0.8 * v + rng.gen_range(-0.05..0.05)).collect();

    for alpha in [0.1f32, 1.0, 10.0] {
        let scaled: Vec<f32> = est.iter().map(|v| alpha * v).collect();
        println!("alpha={alpha:<4} si_snr={:.9} dB", si_snr(&s, &scaled)?);
    }

    for (label, multi) in [("single", MultiResConfig::single()), ("multi", MultiResConfig::default())] {
        for which in [Composite::L1, Composite::L2] {
            let b = composite_loss(&s, &est, &multi, which, 0.3)?;
            println!("{label:<6} {} composite={:.4} spectral={:.5}", which.name(), b.composite, b.spectral());
            for (cfg, t) in multi.scales().iter().zip(&b.scales) {
                println!("    fft={:<5} mag={:.5} pha={:.5} asym={:.5}", cfg.fft_len, t.mag, t.pha, t.asym);
            }
        }
    }

    let s64: Vec<f64> = s[..64].iter().map(|&v| v as f64).collect();
    let e64: Vec<f64> = est[..64].iter().map(|&v| v as f64).collect();
    let g = si_snr_grad(&s64, &e64)?;
    let fd = fd_gradient(|x| -si_snr(&s64, x).unwrap(), &e64, 1e-5)?;
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = g.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
    println!("analytic vs central-difference gradient: rel err {err:.2e}");
    Ok(())
}
