//! Training objectives evaluated on waveforms: SI-SNR, the power-law
//! compressed magnitude / phase-aware / asymmetric spectral terms, and their
//! multi-resolution composites.
//!
//! Everything is computed in `f64`. Spectral terms are means over all
//! time-frequency bins of one resolution; composites average those over the
//! resolutions and add the negated SI-SNR.

use std::f64::consts::LN_10;

use crate::dsp::{power_law_compress, stft_samples, ComplexSpectrogram, StftConfig};
use crate::error::{Error, Result};

/// Stabilizer added to both energies inside SI-SNR.
pub const SI_SNR_EPS: f64 = 1e-8;

/// Loss-side STFT resolutions.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiResConfig {
    scales: Vec<StftConfig>,
}

impl MultiResConfig {
    pub fn new(scales: Vec<StftConfig>) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::Config("at least one loss resolution is required".into()));
        }
        for s in &scales {
            s.validate()?;
            if s.cola_gain().is_none() {
                return Err(Error::NotCola(format!(
                    "loss resolution fft={} win={} hop={}",
                    s.fft_len, s.win_len, s.hop_len
                )));
            }
        }
        Ok(Self { scales })
    }

    /// FFT 1024, window 960, hop 480.
    pub fn single() -> Self {
        Self::new(vec![StftConfig::single_resolution()]).expect("valid built-in resolution")
    }

    pub fn scales(&self) -> &[StftConfig] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }
}

impl Default for MultiResConfig {
    /// FFT {512, 1024, 2048}, window {480, 960, 1920}, hop {240, 480, 960}.
    fn default() -> Self {
        Self::new(StftConfig::multi_resolution()).expect("valid built-in resolutions")
    }
}

/// Which composite objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Composite {
    /// SI-SNR, magnitude and asymmetric terms.
    L1,
    /// L1 plus the phase-aware term.
    L2,
}

impl Composite {
    pub fn name(self) -> &'static str {
        match self {
            Composite::L1 => "l1",
            Composite::L2 => "l2",
        }
    }
}

impl std::str::FromStr for Composite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Composite::L1),
            "l2" => Ok(Composite::L2),
            other => Err(Error::InvalidArgument(format!("unknown composite `{other}` (expected l1 or l2)"))),
        }
    }
}

/// Spectral terms at one resolution.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScaleTerms {
    pub mag: f64,
    pub pha: f64,
    pub asym: f64,
}

impl ScaleTerms {
    /// The per-scale summand of a composite.
    pub fn part(&self, which: Composite) -> f64 {
        let base = self.mag + self.asym;
        match which {
            Composite::L1 => base,
            Composite::L2 => base + self.pha,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    /// SI-SNR in dB (the objective uses its negation).
    pub si_snr: f64,
    pub scales: Vec<ScaleTerms>,
    pub which: Composite,
    pub composite: f64,
}

impl LossBreakdown {
    /// Mean over scales of the selected spectral terms.
    pub fn spectral(&self) -> f64 {
        spectral_mean(&self.scales, self.which)
    }
}

fn spectral_mean(scales: &[ScaleTerms], which: Composite) -> f64 {
    let sum = scales.iter().fold(0.0, |acc, t| acc + t.part(which));
    sum / scales.len() as f64
}

fn check_pair(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(what, format!("reference has {a} samples, estimate has {b}")));
    }
    if a == 0 {
        return Err(Error::InputTooShort(format!("{what}: empty signals")));
    }
    Ok(())
}

struct Projection {
    /// `<est, s> / <s, s>`
    alpha: f64,
    target_energy: f64,
    error_energy: f64,
}

fn project<T: Copy + Into<f64>>(s: &[T], est: &[T]) -> Result<Projection> {
    check_pair("si_snr", s.len(), est.len())?;
    let (mut ss, mut es) = (0.0f64, 0.0f64);
    for (&a, &b) in s.iter().zip(est) {
        let (a, b) = (a.into(), b.into());
        ss += a * a;
        es += a * b;
    }
    if ss == 0.0 {
        return Err(Error::Silent("SI-SNR reference is all zeros".into()));
    }
    let alpha = es / ss;
    let target_energy = alpha * alpha * ss;
    let mut error_energy = 0.0;
    for (&a, &b) in s.iter().zip(est) {
        let e = b.into() - alpha * a.into();
        error_energy += e * e;
    }
    Ok(Projection {
        alpha,
        target_energy,
        error_energy,
    })
}

/// Scale-invariant SNR in dB.
pub fn si_snr<T: Copy + Into<f64>>(s: &[T], est: &[T]) -> Result<f64> {
    let p = project(s, est)?;
    Ok(10.0 * ((p.target_energy + SI_SNR_EPS) / (p.error_energy + SI_SNR_EPS)).log10())
}

/// Closed-form gradient of `-si_snr(s, est)` with respect to `est`.
pub fn si_snr_grad<T: Copy + Into<f64>>(s: &[T], est: &[T]) -> Result<Vec<f64>> {
    let p = project(s, est)?;
    let k = 20.0 / LN_10;
    let (pt, pe) = (p.target_energy + SI_SNR_EPS, p.error_energy + SI_SNR_EPS);
    Ok(s
        .iter()
        .zip(est)
        .map(|(&a, &b)| {
            let st = p.alpha * a.into();
            let e = b.into() - st;
            -k * (st / pt - e / pe)
        })
        .collect())
}

fn spectrum(x: &[f32], cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    stft_samples(x, cfg)
}

/// Spectral terms between two already-computed spectra.
pub fn spectral_terms_from(reference: &ComplexSpectrogram, estimate: &ComplexSpectrogram, c: f32) -> Result<ScaleTerms> {
    if reference.real.shape() != estimate.real.shape() {
        return Err(Error::shape(
            "spectral loss",
            format!("{:?} vs {:?}", reference.real.shape(), estimate.real.shape()),
        ));
    }
    let (mr, cr) = power_law_compress(reference, c)?;
    let (me, ce) = power_law_compress(estimate, c)?;
    let n = mr.len();
    if n == 0 {
        return Err(Error::InputTooShort("spectral loss over zero bins".into()));
    }
    let (mut mag, mut pha, mut asym) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        let d = mr.data()[i] as f64 - me.data()[i] as f64;
        mag += d * d;
        if d > 0.0 {
            asym += d * d;
        }
        let dr = cr.real.data()[i] as f64 - ce.real.data()[i] as f64;
        let di = cr.imag.data()[i] as f64 - ce.imag.data()[i] as f64;
        pha += dr * dr + di * di;
    }
    let n = n as f64;
    Ok(ScaleTerms {
        mag: mag / n,
        pha: pha / n,
        asym: asym / n,
    })
}

/// Magnitude, phase-aware and asymmetric terms at one resolution.
pub fn spectral_terms(s: &[f32], est: &[f32], cfg: &StftConfig, c: f32) -> Result<ScaleTerms> {
    check_pair("spectral loss", s.len(), est.len())?;
    spectral_terms_from(&spectrum(s, cfg)?, &spectrum(est, cfg)?, c)
}

/// `mean((|S|^c - |Ŝ|^c)^2)`
pub fn mag_loss(s: &[f32], est: &[f32], cfg: &StftConfig, c: f32) -> Result<f64> {
    Ok(spectral_terms(s, est, cfg, c)?.mag)
}

/// `mean(| |S|^c e^{jθ_S} - |Ŝ|^c e^{jθ_Ŝ} |^2)`
pub fn pha_loss(s: &[f32], est: &[f32], cfg: &StftConfig, c: f32) -> Result<f64> {
    Ok(spectral_terms(s, est, cfg, c)?.pha)
}

/// `mean(max(|S|^c - |Ŝ|^c, 0)^2)`: penalizes only under-estimated bins.
pub fn asym_loss(s: &[f32], est: &[f32], cfg: &StftConfig, c: f32) -> Result<f64> {
    Ok(spectral_terms(s, est, cfg, c)?.asym)
}

pub fn composite_loss(s: &[f32], est: &[f32], multi: &MultiResConfig, which: Composite, c: f32) -> Result<LossBreakdown> {
    let si = si_snr(s, est)?;
    let scales = multi
        .scales()
        .iter()
        .map(|cfg| spectral_terms(s, est, cfg, c))
        .collect::<Result<Vec<_>>>()?;
    let composite = -si + spectral_mean(&scales, which);
    Ok(LossBreakdown {
        si_snr: si,
        scales,
        which,
        composite,
    })
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        g.push((up - down) / (2.0 * h));
    }
    Ok(g)
}
