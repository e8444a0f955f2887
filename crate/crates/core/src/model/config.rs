use crate::dsp::{StftConfig, MODEL_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::nn::conv::out_freq;

/// Initial values for the COM-Net output heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadInit {
    /// All-zero head weights: a fresh model passes the stage-1 spectrum through.
    Zero,
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub n_fd: usize,
    pub n_fu: usize,
    pub conv_channels: usize,
    /// `(time, freq)` kernel of every FD/FU layer.
    pub kernel: (usize, usize),
    /// `(time, freq)` stride; time stride must be 1.
    pub stride: (usize, usize),
    pub n_stcnl_groups: usize,
    pub stcm_per_group: usize,
    pub dilations: Vec<usize>,
    pub dconv_kernel: usize,
    pub stcm_channels: usize,
    pub lstm_hidden: usize,
    /// Concatenated output width of the speaker BLSTM (half per direction).
    pub spk_blstm_hidden: usize,
    pub spk_fd_layers: usize,
    pub spk_channels: usize,
    pub embedding_dim: usize,
    pub stft: StftConfig,
    pub compression: f32,
    pub com_head_init: HeadInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_fd: 6,
            n_fu: 6,
            conv_channels: 64,
            kernel: (2, 3),
            stride: (1, 2),
            n_stcnl_groups: 4,
            stcm_per_group: 4,
            dilations: vec![1, 2, 5, 9],
            dconv_kernel: 5,
            stcm_channels: 64,
            lstm_hidden: 512,
            spk_blstm_hidden: 512,
            spk_fd_layers: 5,
            spk_channels: 1,
            embedding_dim: 192,
            stft: StftConfig::model(),
            compression: 0.3,
            com_head_init: HeadInit::Zero,
        }
    }
}

impl ModelConfig {
    /// Small configuration for smoke tests: two FD levels, four channels, one group.
    pub fn toy() -> Self {
        Self {
            n_fd: 2,
            n_fu: 2,
            conv_channels: 4,
            n_stcnl_groups: 1,
            stcm_per_group: 2,
            dilations: vec![1, 2],
            stcm_channels: 4,
            lstm_hidden: 8,
            spk_blstm_hidden: 8,
            spk_fd_layers: 1,
            embedding_dim: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_fd", self.n_fd),
            ("n_fu", self.n_fu),
            ("conv_channels", self.conv_channels),
            ("kernel.0", self.kernel.0),
            ("kernel.1", self.kernel.1),
            ("stride.1", self.stride.1),
            ("n_stcnl_groups", self.n_stcnl_groups),
            ("stcm_per_group", self.stcm_per_group),
            ("dconv_kernel", self.dconv_kernel),
            ("stcm_channels", self.stcm_channels),
            ("lstm_hidden", self.lstm_hidden),
            ("spk_blstm_hidden", self.spk_blstm_hidden),
            ("spk_fd_layers", self.spk_fd_layers),
            ("spk_channels", self.spk_channels),
            ("embedding_dim", self.embedding_dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.stride.0 != 1 {
            return Err(Error::Config("time stride must be 1 for causal streaming".into()));
        }
        if self.dilations.len() != self.stcm_per_group {
            return Err(Error::Config(format!(
                "{} dilations given for {} S-TCMs per group",
                self.dilations.len(),
                self.stcm_per_group
            )));
        }
        if self.dilations.contains(&0) {
            return Err(Error::Config("dilations must be positive".into()));
        }
        if self.n_fu != self.n_fd {
            return Err(Error::Config(format!(
                "n_fu ({}) must equal n_fd ({}) for skip pairing",
                self.n_fu, self.n_fd
            )));
        }
        if self.spk_fd_layers + 1 != self.n_fd {
            return Err(Error::Config(format!(
                "spk_fd_layers ({}) must be n_fd - 1 ({}) to feed every later FD level",
                self.spk_fd_layers,
                self.n_fd - 1
            )));
        }
        if self.spk_blstm_hidden % 2 != 0 {
            return Err(Error::Config("spk_blstm_hidden must be even (split across directions)".into()));
        }
        if !(self.compression > 0.0 && self.compression <= 1.0) {
            return Err(Error::Config(format!("compression {} outside (0, 1]", self.compression)));
        }
        self.stft.validate()?;
        if self.stft.center_pad || self.stft.cola_gain().is_none() {
            return Err(Error::Config("model STFT must be COLA without center padding".into()));
        }
        if self.stft.win_len != 2 * self.stft.hop_len {
            return Err(Error::Config("model STFT must use 50% overlap (win = 2 * hop)".into()));
        }
        let sizes = self.fd_sizes()?;
        let (kf, s) = (self.kernel.1, self.stride.1);
        let pad = (kf - 1) / 2;
        for w in sizes.windows(2) {
            if s * (w[1] - 1) + kf - pad < w[0] {
                return Err(Error::Config(format!("an FU layer cannot restore {} bins from {}", w[0], w[1])));
            }
        }
        Ok(())
    }

    /// Frequency sizes along the FD chain: model bins first, bottleneck last.
    pub fn fd_sizes(&self) -> Result<Vec<usize>> {
        let kf = self.kernel.1;
        let pad = (kf.max(1) - 1) / 2;
        let mut sizes = vec![self.stft.bins()];
        for i in 0..self.n_fd {
            let f = *sizes.last().expect("non-empty");
            let next = out_freq(f, kf, self.stride.1.max(1), pad)
                .map_err(|_| Error::Config(format!("FD level {} reduces {f} bins below 1", i + 1)))?;
            sizes.push(next);
        }
        Ok(sizes)
    }

    pub fn bottleneck_dim(&self) -> Result<usize> {
        Ok(self.conv_channels * self.fd_sizes()?[self.n_fd])
    }

    pub fn frames_per_second(&self) -> f64 {
        MODEL_SAMPLE_RATE as f64 / self.stft.hop_len as f64
    }

    /// Samples between an input sample and the earliest output it can affect.
    pub fn latency_samples(&self) -> usize {
        self.stft.win_len - self.stft.hop_len
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chain_lands_on_8_bins() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.fd_sizes().unwrap(), vec![481, 241, 121, 61, 31, 16, 8]);
        assert_eq!(cfg.bottleneck_dim().unwrap(), 512);
        assert_eq!(cfg.frames_per_second(), 100.0);
        assert_eq!(cfg.latency_samples(), 480);
    }

    #[test]
    fn toy_config_is_valid() {
        ModelConfig::toy().validate().unwrap();
    }

    #[test]
    fn chain_that_collapses_is_rejected() {
        let cfg = ModelConfig {
            kernel: (2, 4),
            n_fd: 12,
            n_fu: 12,
            spk_fd_layers: 11,
            ..ModelConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn inconsistent_fields_are_rejected() {
        let bad = [
            ModelConfig { dilations: vec![1, 2, 5], ..ModelConfig::default() },
            ModelConfig { conv_channels: 0, ..ModelConfig::default() },
            ModelConfig { n_fu: 5, ..ModelConfig::default() },
            ModelConfig { spk_fd_layers: 4, ..ModelConfig::default() },
            ModelConfig { compression: 0.0, ..ModelConfig::default() },
            ModelConfig { stride: (2, 2), ..ModelConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}
