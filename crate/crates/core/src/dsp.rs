//! Short-time analysis and synthesis.
//!
//! Frames are Hann-windowed and left-aligned inside the FFT buffer, so
//! `fft_len > win_len` zero-pads each frame on the right. Synthesis is plain
//! overlap-add divided by the overlap-sum of the analysis window, which is
//! exact whenever that sum is constant (COLA).

use std::f64::consts::PI;
use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sample rate of every model path.
pub const MODEL_SAMPLE_RATE: u32 = 48_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    Hann,
}

impl Window {
    /// Periodic window of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StftConfig {
    pub fft_len: usize,
    pub win_len: usize,
    pub hop_len: usize,
    pub window: Window,
    /// Pad both ends with zeros so that every input sample sits under a full
    /// set of overlapping windows: `win_len - hop_len` on the left and enough
    /// on the right (at least as much) to complete the last frame.
    pub center_pad: bool,
}

impl StftConfig {
    pub fn new(fft_len: usize, win_len: usize, hop_len: usize) -> Self {
        Self {
            fft_len,
            win_len,
            hop_len,
            window: Window::Hann,
            center_pad: false,
        }
    }

    pub fn with_center_pad(mut self, center_pad: bool) -> Self {
        self.center_pad = center_pad;
        self
    }

    /// Model front-end: 20 ms window, 10 ms hop at 48 kHz.
    pub fn model() -> Self {
        Self::new(960, 960, 480)
    }

    /// Loss-side single-resolution configuration.
    pub fn single_resolution() -> Self {
        Self::new(1024, 960, 480).with_center_pad(true)
    }

    /// The three loss-side resolutions.
    pub fn multi_resolution() -> Vec<Self> {
        vec![
            Self::new(512, 480, 240).with_center_pad(true),
            Self::new(1024, 960, 480).with_center_pad(true),
            Self::new(2048, 1920, 960).with_center_pad(true),
        ]
    }

    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop_len == 0 || self.hop_len > self.win_len || self.win_len > self.fft_len {
            return Err(Error::Config(format!(
                "STFT needs 0 < hop <= win <= fft, got fft={} win={} hop={}",
                self.fft_len, self.win_len, self.hop_len
            )));
        }
        Ok(())
    }

    /// Constant overlap-add sum of the analysis window, if it is constant.
    pub fn cola_gain(&self) -> Option<f64> {
        let w = self.window.coefficients(self.win_len);
        let sums: Vec<f64> = (0..self.hop_len)
            .map(|n| w.iter().skip(n).step_by(self.hop_len).sum())
            .collect();
        let (lo, hi) = sums
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), &s| (lo.min(s), hi.max(s)));
        if hi > 0.0 && (hi - lo) <= 1e-9 * hi {
            Some(hi)
        } else {
            None
        }
    }

    fn pads(&self, n: usize) -> (usize, usize) {
        if !self.center_pad {
            return (0, 0);
        }
        let left = self.win_len - self.hop_len;
        let mut right = left;
        let body = left + n + right;
        if body >= self.win_len {
            let rem = (body - self.win_len) % self.hop_len;
            if rem != 0 {
                right += self.hop_len - rem;
            }
        }
        (left, right)
    }

    /// Number of complete frames produced for `n` input samples.
    pub fn frame_count(&self, n: usize) -> usize {
        let (l, r) = self.pads(n);
        let padded = l + n + r;
        if padded < self.win_len {
            0
        } else {
            (padded - self.win_len) / self.hop_len + 1
        }
    }
}

/// Mono audio with its sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("audio sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    pub(crate) fn expect_model_rate(&self, what: &str) -> Result<()> {
        if self.sample_rate != MODEL_SAMPLE_RATE {
            return Err(Error::InvalidArgument(format!(
                "{what} must be sampled at {MODEL_SAMPLE_RATE} Hz, got {}",
                self.sample_rate
            )));
        }
        Ok(())
    }
}

/// `frames x bins` complex spectrum stored as separate real and imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    pub real: Tensor,
    pub imag: Tensor,
    pub config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn new(real: Tensor, imag: Tensor, config: StftConfig) -> Result<Self> {
        if real.shape() != imag.shape() || real.rank() != 2 {
            return Err(Error::shape(
                "ComplexSpectrogram",
                format!("real {:?} vs imag {:?}", real.shape(), imag.shape()),
            ));
        }
        if real.dim(1) != config.bins() {
            return Err(Error::shape(
                "ComplexSpectrogram",
                format!("{} bins, config implies {}", real.dim(1), config.bins()),
            ));
        }
        Ok(Self { real, imag, config })
    }

    pub fn zeros(frames: usize, config: StftConfig) -> Self {
        let shape = [frames, config.bins()];
        Self {
            real: Tensor::zeros(&shape),
            imag: Tensor::zeros(&shape),
            config,
        }
    }

    pub fn frames(&self) -> usize {
        self.real.dim(0)
    }

    pub fn bins(&self) -> usize {
        self.real.dim(1)
    }

    pub fn magnitude(&self) -> Tensor {
        let data = self
            .real
            .data()
            .iter()
            .zip(self.imag.data())
            .map(|(&r, &i)| (r as f64).hypot(i as f64) as f32)
            .collect();
        Tensor::from_vec(self.real.shape(), data).expect("same shape")
    }
}

/// Per-frame FFT machinery for one configuration.
#[derive(Clone)]
pub(crate) struct FramePlan {
    cfg: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl FramePlan {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(Self {
            cfg,
            window: cfg.window.coefficients(cfg.win_len),
            forward: planner.plan_fft_forward(cfg.fft_len),
            inverse: planner.plan_fft_inverse(cfg.fft_len),
        })
    }

    /// Window `frame` (exactly `win_len` samples) and write its spectrum.
    pub fn analyze(&self, frame: &[f32], re: &mut [f32], im: &mut [f32]) {
        debug_assert_eq!(frame.len(), self.cfg.win_len);
        let mut buf = vec![0.0f64; self.cfg.fft_len];
        for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&self.window) {
            *b = x as f64 * w;
        }
        let mut spec = self.forward.make_output_vec();
        self.forward
            .process(&mut buf, &mut spec)
            .expect("forward FFT buffer sizes");
        for (k, c) in spec.iter().enumerate() {
            re[k] = c.re as f32;
            im[k] = c.im as f32;
        }
    }

    /// Inverse FFT of one frame; returns the first `win_len` samples, unnormalized by COLA gain.
    pub fn synthesize(&self, re: &[f32], im: &[f32]) -> Vec<f64> {
        let n = self.cfg.fft_len;
        let mut spec: Vec<Complex64> = re
            .iter()
            .zip(im)
            .map(|(&r, &i)| Complex64::new(r as f64, i as f64))
            .collect();
        // A real signal has purely real DC and Nyquist bins.
        spec[0].im = 0.0;
        if n % 2 == 0 {
            spec[n / 2].im = 0.0;
        }
        let mut out = self.inverse.make_output_vec();
        self.inverse
            .process(&mut spec, &mut out)
            .expect("inverse FFT buffer sizes");
        let scale = 1.0 / n as f64;
        out.truncate(self.cfg.win_len);
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }
}

pub fn stft(audio: &AudioBuffer, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    stft_samples(&audio.samples, cfg)
}

pub(crate) fn stft_samples(samples: &[f32], cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InputTooShort("empty audio".into()));
    }
    let frames = cfg.frame_count(samples.len());
    if frames == 0 {
        return Err(Error::InputTooShort(format!(
            "{} samples do not fill one {}-sample window",
            samples.len(),
            cfg.win_len
        )));
    }
    let (left, right) = cfg.pads(samples.len());
    let mut padded = vec![0.0f32; left + samples.len() + right];
    padded[left..left + samples.len()].copy_from_slice(samples);

    let plan = FramePlan::new(*cfg)?;
    let bins = cfg.bins();
    let mut spec = ComplexSpectrogram::zeros(frames, *cfg);
    for t in 0..frames {
        let start = t * cfg.hop_len;
        let frame = &padded[start..start + cfg.win_len];
        let (re, im) = (
            &mut spec.real.data_mut()[t * bins..(t + 1) * bins],
            &mut spec.imag.data_mut()[t * bins..(t + 1) * bins],
        );
        plan.analyze(frame, re, im);
    }
    Ok(spec)
}

/// Overlap-add resynthesis, trimmed or zero-extended to `out_len` samples.
pub fn istft(spec: &ComplexSpectrogram, out_len: usize) -> Result<AudioBuffer> {
    let samples = istft_samples(spec, out_len)?;
    Ok(AudioBuffer {
        samples,
        sample_rate: MODEL_SAMPLE_RATE,
    })
}

pub(crate) fn istft_samples(spec: &ComplexSpectrogram, out_len: usize) -> Result<Vec<f32>> {
    let cfg = spec.config;
    cfg.validate()?;
    let gain = cfg.cola_gain().ok_or_else(|| {
        Error::NotCola(format!(
            "window {:?} of length {} with hop {} does not overlap-add to a constant",
            cfg.window, cfg.win_len, cfg.hop_len
        ))
    })?;
    let frames = spec.frames();
    let bins = spec.bins();
    let total = if frames == 0 {
        0
    } else {
        (frames - 1) * cfg.hop_len + cfg.win_len
    };
    let mut ola = vec![0.0f64; total];
    let plan = FramePlan::new(cfg)?;
    for t in 0..frames {
        let re = &spec.real.data()[t * bins..(t + 1) * bins];
        let im = &spec.imag.data()[t * bins..(t + 1) * bins];
        let frame = plan.synthesize(re, im);
        let start = t * cfg.hop_len;
        for (o, v) in ola[start..start + cfg.win_len].iter_mut().zip(&frame) {
            *o += v;
        }
    }
    let offset = if cfg.center_pad {
        cfg.win_len - cfg.hop_len
    } else {
        0
    };
    let mut out = vec![0.0f32; out_len];
    for (i, o) in out.iter_mut().enumerate() {
        if let Some(v) = ola.get(offset + i) {
            *o = (v / gain) as f32;
        }
    }
    Ok(out)
}

/// One bin of [`power_law_compress`]: `(|z|^c, re, im)` of the compressed value.
#[inline]
pub(crate) fn compress_bin(r: f32, i: f32, c: f32) -> (f32, f32, f32) {
    let (r, i) = (r as f64, i as f64);
    let m = r.hypot(i);
    if m > 0.0 {
        let mc = m.powf(c as f64);
        (mc as f32, (mc * r / m) as f32, (mc * i / m) as f32)
    } else {
        (0.0, 0.0, 0.0)
    }
}

/// Power-law compression `|S|^c e^{j angle(S)}`; bins with `|S| = 0` map to zero.
pub fn power_law_compress(spec: &ComplexSpectrogram, c: f32) -> Result<(Tensor, ComplexSpectrogram)> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "compression exponent must be in (0, 1], got {c}"
        )));
    }
    let n = spec.real.len();
    let mut mag = Vec::with_capacity(n);
    let mut re = Vec::with_capacity(n);
    let mut im = Vec::with_capacity(n);
    for (&r, &i) in spec.real.data().iter().zip(spec.imag.data()) {
        let (m, cr, ci) = compress_bin(r, i, c);
        mag.push(m);
        re.push(cr);
        im.push(ci);
    }
    let shape = spec.real.shape();
    Ok((
        Tensor::from_vec(shape, mag)?,
        ComplexSpectrogram {
            real: Tensor::from_vec(shape, re)?,
            imag: Tensor::from_vec(shape, im)?,
            config: spec.config,
        },
    ))
}
