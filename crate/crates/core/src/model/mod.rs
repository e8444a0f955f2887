//! The two-stage network: MAG-Net estimates a magnitude mask, COM-Net refines
//! the masked complex spectrum with a residual. Each stage has its own speaker
//! encoder and embedding projections.

pub mod accounting;
pub mod config;
pub mod speaker;
pub mod stage;
pub mod stream;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{compress_bin, istft_samples, stft_samples, AudioBuffer, ComplexSpectrogram};
use crate::error::{Error, Result};
use crate::linalg::sigmoid;
use crate::nn::{Dense, Group, ParamBuilder, ParameterRegistry};
use crate::tensor::Tensor;

pub use accounting::{count_macs, count_params, param_breakdown, MacEntry, MacReport};
pub use config::{HeadInit, ModelConfig};
pub use speaker::{pool_time, SpeakerEncoder};
pub use stage::StageConditioning;
pub use stream::StreamSession;

use stage::StageNet;

/// Fixed-length speaker embedding supplied by an external verification network.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerEmbedding {
    values: Vec<f32>,
}

impl SpeakerEmbedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("speaker embedding".into()));
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { values: vec![0.0; dim] }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Everything derived once from the enrollment clip and embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioning {
    pub mag: StageConditioning,
    pub com: StageConditioning,
}

/// Intermediate and final results of one offline pass.
#[derive(Clone, Debug)]
pub struct Enhanced {
    pub output: AudioBuffer,
    /// Masked magnitude with the noisy phase, resynthesized.
    pub stage1: AudioBuffer,
    pub est_mag: Tensor,
    pub stage1_spec: ComplexSpectrogram,
    pub output_spec: ComplexSpectrogram,
}

#[derive(Clone, Debug)]
pub struct Model {
    cfg: ModelConfig,
    registry: ParameterRegistry,
    mag: StageNet,
    com: StageNet,
    spk_mag: SpeakerEncoder,
    spk_com: SpeakerEncoder,
    fusion_mag: Vec<Dense>,
    fusion_com: Vec<Dense>,
}

/// Build every layer of both stages with seeded fan-in uniform initialization.
pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    cfg.validate()?;
    let mut reg = ParameterRegistry::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = cfg.bottleneck_dim()?;
    let zero_com_heads = cfg.com_head_init == HeadInit::Zero;

    let mag = StageNet::new(&mut ParamBuilder::new(&mut reg, &mut rng, Group::MagNet).scope("mag_net"), cfg, 1, 1, false)?;
    let spk_mag = SpeakerEncoder::new(&mut ParamBuilder::new(&mut reg, &mut rng, Group::SpkEncMag).scope("spk_enc_mag"), cfg)?;
    let fusion_mag = fusion_layers(&mut ParamBuilder::new(&mut reg, &mut rng, Group::FusionMag).scope("fusion_mag"), cfg, dim)?;
    let com = StageNet::new(
        &mut ParamBuilder::new(&mut reg, &mut rng, Group::ComNet).scope("com_net"),
        cfg,
        4,
        2,
        zero_com_heads,
    )?;
    let spk_com = SpeakerEncoder::new(&mut ParamBuilder::new(&mut reg, &mut rng, Group::SpkEncCom).scope("spk_enc_com"), cfg)?;
    let fusion_com = fusion_layers(&mut ParamBuilder::new(&mut reg, &mut rng, Group::FusionCom).scope("fusion_com"), cfg, dim)?;

    Ok(Model {
        cfg: cfg.clone(),
        registry: reg,
        mag,
        com,
        spk_mag,
        spk_com,
        fusion_mag,
        fusion_com,
    })
}

fn fusion_layers(pb: &mut ParamBuilder<'_>, cfg: &ModelConfig, dim: usize) -> Result<Vec<Dense>> {
    (0..cfg.n_stcnl_groups)
        .map(|g| Dense::new(&mut pb.scope(&format!("group{g}")), cfg.embedding_dim, dim))
        .collect()
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn registry(&self) -> &ParameterRegistry {
        &self.registry
    }

    /// Mutable access for loading weights or changing trainability flags.
    pub fn registry_mut(&mut self) -> &mut ParameterRegistry {
        &mut self.registry
    }

    pub fn latency_samples(&self) -> usize {
        self.cfg.latency_samples()
    }

    /// Model STFT of `samples` after `win - hop` leading zeros, so frame `t`
    /// ends at sample `(t + 1) * hop`. The tail is zero-filled to one hop past
    /// the last whole hop so every input sample lies under two windows.
    pub fn analyze(&self, samples: &[f32]) -> Result<ComplexSpectrogram> {
        let lead = self.latency_samples();
        let hop = self.cfg.stft.hop_len;
        let mut padded = vec![0.0f32; lead + samples.len().div_ceil(hop) * hop + hop];
        padded[lead..lead + samples.len()].copy_from_slice(samples);
        stft_samples(&padded, &self.cfg.stft)
    }

    /// Inverse of [`Self::analyze`], trimmed or zero-extended to `len` samples.
    pub fn synthesize(&self, spec: &ComplexSpectrogram, len: usize) -> Result<Vec<f32>> {
        let lead = self.latency_samples();
        let y = istft_samples(spec, lead + len)?;
        Ok(y[lead..].to_vec())
    }

    fn embedding_scales(&self, layers: &[Dense], e: &SpeakerEmbedding) -> Result<Vec<Vec<f32>>> {
        if e.dim() != self.cfg.embedding_dim {
            return Err(Error::shape(
                "speaker embedding",
                format!("expected {} values, got {}", self.cfg.embedding_dim, e.dim()),
            ));
        }
        layers.iter().map(|d| d.step(&self.registry, e.values())).collect()
    }

    pub fn speaker_levels(&self, enroll: &AudioBuffer) -> Result<(Vec<Vec<f32>>, Vec<Vec<f32>>)> {
        enroll.expect_model_rate("enrollment")?;
        if enroll.len() < self.cfg.stft.win_len {
            return Err(Error::InputTooShort(format!(
                "enrollment has {} samples, needs at least one {}-sample window",
                enroll.len(),
                self.cfg.stft.win_len
            )));
        }
        let spec = self.analyze(&enroll.samples)?;
        let c = self.cfg.compression;
        let mag_c = spec.real.map(|_| 0.0);
        let mut mag_c = mag_c;
        for ((m, &r), &i) in mag_c.data_mut().iter_mut().zip(spec.real.data()).zip(spec.imag.data()) {
            *m = compress_bin(r, i, c).0;
        }
        Ok((
            self.spk_mag.forward(&self.registry, &mag_c)?,
            self.spk_com.forward(&self.registry, &mag_c)?,
        ))
    }

    /// Run both speaker encoders on the enrollment and project the embedding.
    pub fn condition(&self, enroll: &AudioBuffer, e: &SpeakerEmbedding) -> Result<Conditioning> {
        let (lm, lc) = self.speaker_levels(enroll)?;
        Ok(Conditioning {
            mag: StageConditioning {
                levels: lm,
                scales: self.embedding_scales(&self.fusion_mag, e)?,
            },
            com: StageConditioning {
                levels: lc,
                scales: self.embedding_scales(&self.fusion_com, e)?,
            },
        })
    }

    fn expect_bins(&self, t: &Tensor, what: &str) -> Result<()> {
        if t.rank() != 2 || t.dim(1) != self.cfg.stft.bins() {
            return Err(Error::shape(
                what,
                format!("expected [T, {}], got {:?}", self.cfg.stft.bins(), t.shape()),
            ));
        }
        Ok(())
    }

    /// Sigmoid mask from the compressed noisy magnitude `[T, bins]`.
    fn mask(&self, mag_c: &Tensor, cond: &StageConditioning) -> Result<Tensor> {
        let (t_len, bins) = (mag_c.dim(0), mag_c.dim(1));
        let x = mag_c.clone().reshape(&[1, t_len, bins])?;
        let out = self.mag.forward(&self.registry, &x, cond)?;
        Ok(out[0].map(sigmoid).reshape(&[t_len, bins])?)
    }

    /// Stage one on a magnitude spectrogram: `mask * noisy_mag`.
    pub fn magnet_forward(&self, noisy_mag: &Tensor, cond: &Conditioning) -> Result<Tensor> {
        self.expect_bins(noisy_mag, "MAG-Net input")?;
        let c = self.cfg.compression as f64;
        let mag_c = noisy_mag.map(|m| (m as f64).powf(c) as f32);
        let mask = self.mask(&mag_c, &cond.mag)?;
        let data = mask.data().iter().zip(noisy_mag.data()).map(|(m, x)| m * x).collect();
        Tensor::from_vec(noisy_mag.shape(), data)
    }

    /// Stage two: `stage1 + R` with `R` from the two complex decoders.
    pub fn comnet_forward(
        &self,
        noisy: &ComplexSpectrogram,
        stage1: &ComplexSpectrogram,
        cond: &Conditioning,
    ) -> Result<ComplexSpectrogram> {
        if noisy.config != stage1.config || noisy.config != self.cfg.stft {
            return Err(Error::Config("COM-Net inputs must share the model STFT configuration".into()));
        }
        noisy.real.expect_shape(stage1.real.shape(), "COM-Net input")?;
        self.expect_bins(&noisy.real, "COM-Net input")?;
        let (t_len, bins) = (noisy.frames(), noisy.bins());
        let c = self.cfg.compression;
        let plane = t_len * bins;
        let mut x = vec![0.0f32; 4 * plane];
        for (k, spec) in [noisy, stage1].into_iter().enumerate() {
            for (j, (&r, &i)) in spec.real.data().iter().zip(spec.imag.data()).enumerate() {
                let (_, cr, ci) = compress_bin(r, i, c);
                x[2 * k * plane + j] = cr;
                x[(2 * k + 1) * plane + j] = ci;
            }
        }
        let x = Tensor::from_vec(&[4, t_len, bins], x)?;
        let out = self.com.forward(&self.registry, &x, &cond.com)?;
        let add = |base: &Tensor, r: &Tensor| -> Result<Tensor> {
            let d = base.data().iter().zip(r.data()).map(|(a, b)| a + b).collect();
            Tensor::from_vec(base.shape(), d)
        };
        ComplexSpectrogram::new(add(&stage1.real, &out[0])?, add(&stage1.imag, &out[1])?, self.cfg.stft)
    }

    pub fn enhance_detailed(&self, noisy: &AudioBuffer, cond: &Conditioning) -> Result<Enhanced> {
        noisy.expect_model_rate("noisy input")?;
        let spec = self.analyze(&noisy.samples)?;
        let c = self.cfg.compression;
        let mut mag = spec.real.clone();
        let mut mag_c = spec.real.clone();
        for (((m, mc), &r), &i) in mag
            .data_mut()
            .iter_mut()
            .zip(mag_c.data_mut())
            .zip(spec.real.data())
            .zip(spec.imag.data())
        {
            *m = (r as f64).hypot(i as f64) as f32;
            *mc = compress_bin(r, i, c).0;
        }
        let mask = self.mask(&mag_c, &cond.mag)?;
        let scale = |t: &Tensor| -> Result<Tensor> {
            Tensor::from_vec(t.shape(), t.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect())
        };
        let est_mag = scale(&mag)?;
        let stage1_spec = ComplexSpectrogram::new(scale(&spec.real)?, scale(&spec.imag)?, self.cfg.stft)?;
        let output_spec = self.comnet_forward(&spec, &stage1_spec, cond)?;
        let n = noisy.len();
        let stage1 = AudioBuffer::new(self.synthesize(&stage1_spec, n)?, noisy.sample_rate)?;
        let out = self.synthesize(&output_spec, n)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("enhanced output".into()));
        }
        Ok(Enhanced {
            output: AudioBuffer::new(out, noisy.sample_rate)?,
            stage1,
            est_mag,
            stage1_spec,
            output_spec,
        })
    }

    pub fn enhance_with(&self, noisy: &AudioBuffer, cond: &Conditioning) -> Result<AudioBuffer> {
        Ok(self.enhance_detailed(noisy, cond)?.output)
    }

    /// Full offline chain; output has the same length as `noisy`.
    pub fn enhance_offline(&self, noisy: &AudioBuffer, enroll: &AudioBuffer, e: &SpeakerEmbedding) -> Result<AudioBuffer> {
        let cond = self.condition(enroll, e)?;
        self.enhance_with(noisy, &cond)
    }

    /// Streaming session that processes one hop per call.
    pub fn stream(&self, enroll: &AudioBuffer, e: &SpeakerEmbedding) -> Result<StreamSession<'_>> {
        StreamSession::new(self, self.condition(enroll, e)?)
    }

    pub(crate) fn stages(&self) -> (&StageNet, &StageNet) {
        (&self.mag, &self.com)
    }
}

/// Convenience wrapper matching [`Model::enhance_offline`].
pub fn enhance_offline(model: &Model, noisy: &AudioBuffer, enroll: &AudioBuffer, e: &SpeakerEmbedding) -> Result<AudioBuffer> {
    model.enhance_offline(noisy, enroll, e)
}

#[cfg(test)]
mod tests;
