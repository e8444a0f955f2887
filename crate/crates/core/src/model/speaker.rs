//! Local-global speaker encoder: BLSTM, dense back to the bin count, then a
//! chain of single-channel FD layers whose outputs are averaged over time.

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::stage::FdLayer;
use crate::nn::{Blstm, Dense, ParamBuilder, ParameterRegistry};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct SpeakerEncoder {
    bins: usize,
    blstm: Blstm,
    dense: Dense,
    pub(crate) layers: Vec<FdLayer>,
}

/// Mean over the time axis of `[C, T, F]`, giving `[C * F]`.
pub fn pool_time(x: &Tensor) -> Vec<f32> {
    let (c, t_len, f) = (x.dim(0), x.dim(1), x.dim(2));
    let mut out = vec![0.0f32; c * f];
    for ci in 0..c {
        let mut acc = vec![0.0f64; f];
        for t in 0..t_len {
            for (a, &v) in acc.iter_mut().zip(&x.data()[(ci * t_len + t) * f..][..f]) {
                *a += v as f64;
            }
        }
        for (o, a) in out[ci * f..(ci + 1) * f].iter_mut().zip(acc) {
            *o = (a / t_len as f64) as f32;
        }
    }
    out
}

impl SpeakerEncoder {
    pub(crate) fn new(pb: &mut ParamBuilder<'_>, cfg: &ModelConfig) -> Result<Self> {
        let bins = cfg.stft.bins();
        let blstm = Blstm::new(&mut pb.scope("blstm"), bins, cfg.spk_blstm_hidden / 2)?;
        let dense = Dense::new(&mut pb.scope("dense"), blstm.output_dim(), bins)?;
        let layers = (0..cfg.spk_fd_layers)
            .map(|i| {
                let c_in = if i == 0 { 1 } else { cfg.spk_channels };
                FdLayer::new(&mut pb.scope(&format!("fd{i}")), c_in, cfg.spk_channels, cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            bins,
            blstm,
            dense,
            layers,
        })
    }

    pub fn channels(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.conv.c_out).collect()
    }

    /// `enroll_mag: [T, bins]` (compressed magnitude) to one pooled vector per level.
    pub fn forward(&self, reg: &ParameterRegistry, enroll_mag: &Tensor) -> Result<Vec<Vec<f32>>> {
        if enroll_mag.rank() != 2 || enroll_mag.dim(1) != self.bins {
            return Err(Error::shape(
                "speaker encoder",
                format!("expected [T, {}], got {:?}", self.bins, enroll_mag.shape()),
            ));
        }
        let t_len = enroll_mag.dim(0);
        if t_len == 0 {
            return Err(Error::InputTooShort("empty enrollment".into()));
        }
        let h = self.blstm.forward(reg, enroll_mag.data())?;
        let z = self.dense.forward_rows(reg, &h)?;
        let mut x = Tensor::from_vec(&[1, t_len, self.bins], z)?;
        let mut levels = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            x = l.forward(reg, &x)?;
            levels.push(pool_time(&x));
        }
        Ok(levels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Group;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pooling_constant_frames_returns_the_frame() {
        let frame = [0.5f32, -1.0, 2.0];
        let mut data = Vec::new();
        for _ in 0..2 {
            for _ in 0..7 {
                data.extend_from_slice(&frame);
            }
        }
        let x = Tensor::from_vec(&[2, 7, 3], data).unwrap();
        assert_eq!(pool_time(&x), [frame, frame].concat());
    }

    #[test]
    fn default_levels_have_expected_sizes_and_one_channel() {
        let cfg = ModelConfig::default();
        let mut reg = ParameterRegistry::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = SpeakerEncoder::new(&mut ParamBuilder::new(&mut reg, &mut rng, Group::SpkEncMag), &cfg).unwrap();
        assert_eq!(enc.channels(), vec![1; 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec(&[6, 481], (0..6 * 481).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let levels = enc.forward(&reg, &x).unwrap();
        let sizes: Vec<usize> = levels.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![241, 121, 61, 31, 16]);
        assert!(levels.iter().flatten().all(|v| v.is_finite()));
        assert!(enc.forward(&reg, &Tensor::zeros(&[0, 481])).is_err());
    }
}
