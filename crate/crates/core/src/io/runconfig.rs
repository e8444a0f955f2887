//! Flat `key=value` run configuration.
//!
//! Keys mirror [`ModelConfig`] fields (tuples split into `_t`/`_f`, the STFT
//! into `fft_len`/`win_len`/`hop_len`), plus `preset`, `seed` and path keys.
//! Unset model fields keep the preset's value.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{HeadInit, ModelConfig};

pub const PATH_KEYS: [&str; 6] = ["weights", "noisy", "enroll", "embedding", "out", "manifest"];

const MODEL_KEYS: [&str; 22] = [
    "n_fd",
    "n_fu",
    "conv_channels",
    "kernel_t",
    "kernel_f",
    "stride_t",
    "stride_f",
    "n_stcnl_groups",
    "stcm_per_group",
    "dilations",
    "dconv_kernel",
    "stcm_channels",
    "lstm_hidden",
    "spk_blstm_hidden",
    "spk_fd_layers",
    "spk_channels",
    "embedding_dim",
    "fft_len",
    "win_len",
    "hop_len",
    "compression",
    "com_head_init",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub seed: u64,
    pub paths: BTreeMap<String, PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            seed: 0,
            paths: BTreeMap::new(),
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str, line: usize) -> Result<T> {
    v.parse()
        .map_err(|_| Error::RunConfig(format!("line {line}: `{key}` has invalid value `{v}`")))
}

fn set_model(m: &mut ModelConfig, key: &str, v: &str, line: usize) -> Result<()> {
    match key {
        "n_fd" => m.n_fd = num(key, v, line)?,
        "n_fu" => m.n_fu = num(key, v, line)?,
        "conv_channels" => m.conv_channels = num(key, v, line)?,
        "kernel_t" => m.kernel.0 = num(key, v, line)?,
        "kernel_f" => m.kernel.1 = num(key, v, line)?,
        "stride_t" => m.stride.0 = num(key, v, line)?,
        "stride_f" => m.stride.1 = num(key, v, line)?,
        "n_stcnl_groups" => m.n_stcnl_groups = num(key, v, line)?,
        "stcm_per_group" => m.stcm_per_group = num(key, v, line)?,
        "dilations" => {
            m.dilations = v
                .split(',')
                .map(|d| num(key, d.trim(), line))
                .collect::<Result<Vec<usize>>>()?
        }
        "dconv_kernel" => m.dconv_kernel = num(key, v, line)?,
        "stcm_channels" => m.stcm_channels = num(key, v, line)?,
        "lstm_hidden" => m.lstm_hidden = num(key, v, line)?,
        "spk_blstm_hidden" => m.spk_blstm_hidden = num(key, v, line)?,
        "spk_fd_layers" => m.spk_fd_layers = num(key, v, line)?,
        "spk_channels" => m.spk_channels = num(key, v, line)?,
        "embedding_dim" => m.embedding_dim = num(key, v, line)?,
        "fft_len" => m.stft.fft_len = num(key, v, line)?,
        "win_len" => m.stft.win_len = num(key, v, line)?,
        "hop_len" => m.stft.hop_len = num(key, v, line)?,
        "compression" => m.compression = num(key, v, line)?,
        "com_head_init" => {
            m.com_head_init = match v {
                "zero" => HeadInit::Zero,
                "random" => HeadInit::Random,
                _ => return Err(Error::RunConfig(format!("line {line}: com_head_init must be zero or random"))),
            }
        }
        _ => unreachable!("caller checks MODEL_KEYS"),
    }
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(usize, &str, &str)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::RunConfig(format!("line {}: expected key=value, got `{line}`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if pairs.iter().any(|(_, pk, _)| *pk == k) {
                return Err(Error::RunConfig(format!("line {}: duplicate key `{k}`", i + 1)));
            }
            pairs.push((i + 1, k, v));
        }

        let mut cfg = RunConfig::default();
        if let Some(&(line, _, v)) = pairs.iter().find(|(_, k, _)| *k == "preset") {
            cfg.model = match v {
                "default" => ModelConfig::default(),
                "toy" => ModelConfig::toy(),
                _ => return Err(Error::RunConfig(format!("line {line}: unknown preset `{v}`"))),
            };
        }
        for &(line, k, v) in &pairs {
            match k {
                "preset" => {}
                "seed" => cfg.seed = num(k, v, line)?,
                _ if PATH_KEYS.contains(&k) => {
                    cfg.paths.insert(k.to_string(), PathBuf::from(v));
                }
                _ if MODEL_KEYS.contains(&k) => set_model(&mut cfg.model, k, v, line)?,
                _ => return Err(Error::RunConfig(format!("line {line}: unknown key `{k}`"))),
            }
        }
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn path(&self, key: &str) -> Option<&Path> {
        self.paths.get(key).map(PathBuf::as_path)
    }

    /// Every model field, the seed and any paths, one per line; parses back to `self`.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let dil = m.dilations.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",");
        let head = match m.com_head_init {
            HeadInit::Zero => "zero",
            HeadInit::Random => "random",
        };
        let values = [
            m.n_fd.to_string(),
            m.n_fu.to_string(),
            m.conv_channels.to_string(),
            m.kernel.0.to_string(),
            m.kernel.1.to_string(),
            m.stride.0.to_string(),
            m.stride.1.to_string(),
            m.n_stcnl_groups.to_string(),
            m.stcm_per_group.to_string(),
            dil,
            m.dconv_kernel.to_string(),
            m.stcm_channels.to_string(),
            m.lstm_hidden.to_string(),
            m.spk_blstm_hidden.to_string(),
            m.spk_fd_layers.to_string(),
            m.spk_channels.to_string(),
            m.embedding_dim.to_string(),
            m.stft.fft_len.to_string(),
            m.stft.win_len.to_string(),
            m.stft.hop_len.to_string(),
            m.compression.to_string(),
            head.to_string(),
        ];
        let mut out = format!("seed={}\n", self.seed);
        for (k, v) in MODEL_KEYS.iter().zip(values) {
            out.push_str(&format!("{k}={v}\n"));
        }
        for (k, p) in &self.paths {
            out.push_str(&format!("{k}={}\n", p.display()));
        }
        out
    }
}
