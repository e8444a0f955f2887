//! Parameter and multiply-accumulate accounting.
//!
//! MACs are analytic per frame and scaled by the frame rate. Gated layers
//! count both convolutions. Transposed convolutions are counted once per
//! input position (each input value is multiplied by every kernel tap).
//! Embedding projections run once per utterance and do not scale with time.

use crate::error::Result;
use crate::model::config::ModelConfig;
use crate::nn::{Group, ParameterRegistry};

/// Element count of trainable tensors, optionally restricted to one group
/// name or to the `fusion` family.
pub fn count_params(reg: &ParameterRegistry, filter: Option<&str>) -> Result<usize> {
    if let Some(f) = filter {
        if f != "fusion" {
            Group::from_name(f)?;
        }
    }
    Ok(reg
        .entries()
        .filter(|e| e.trainable)
        .filter(|e| filter.map_or(true, |f| e.group.name() == f || e.group.family() == f))
        .map(|e| e.tensor.len())
        .sum())
}

/// `(group, element count)` over all entries regardless of trainability.
pub fn param_breakdown(reg: &ParameterRegistry) -> Vec<(Group, usize)> {
    Group::ALL
        .into_iter()
        .map(|g| (g, reg.entries().filter(|e| e.group == g).map(|e| e.tensor.len()).sum()))
        .collect()
}

pub fn gconv_macs(c_in: usize, c_out: usize, kt: usize, kf: usize, f_out: usize) -> u64 {
    2 * (c_in * c_out * kt * kf * f_out) as u64
}

pub fn trgconv_macs(c_in: usize, c_out: usize, kt: usize, kf: usize, f_in: usize) -> u64 {
    2 * (c_in * c_out * kt * kf * f_in) as u64
}

pub fn lstm_macs(input: usize, hidden: usize) -> u64 {
    (4 * hidden * (input + hidden)) as u64
}

pub fn dense_macs(d_in: usize, d_out: usize) -> u64 {
    (d_in * d_out) as u64
}

pub fn dconv_macs(channels: usize, kernel: usize) -> u64 {
    (channels * channels * kernel) as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    TransposedConv,
    Lstm,
    Dense,
    DilatedConv,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacEntry {
    pub component: String,
    pub kind: LayerKind,
    pub per_frame: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacReport {
    pub frames_per_second: f64,
    pub entries: Vec<MacEntry>,
}

impl MacReport {
    pub fn per_second(&self) -> f64 {
        self.entries.iter().map(|e| e.per_frame as f64).sum::<f64>() * self.frames_per_second
    }

    pub fn kind_per_second(&self, kind: LayerKind) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.per_frame as f64)
            .sum::<f64>()
            * self.frames_per_second
    }

    /// Totals per top-level component (text before the first `.`), in first-seen order.
    pub fn by_component(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for e in &self.entries {
            let top = e.component.split('.').next().unwrap_or("").to_string();
            let v = e.per_frame as f64 * self.frames_per_second;
            match out.iter_mut().find(|(n, _)| *n == top) {
                Some((_, acc)) => *acc += v,
                None => out.push((top, v)),
            }
        }
        out
    }
}

fn stage_entries(cfg: &ModelConfig, name: &str, in_channels: usize, n_dec: usize, out: &mut Vec<MacEntry>) -> Result<()> {
    let sizes = cfg.fd_sizes()?;
    let (kt, kf) = cfg.kernel;
    let c = cfg.conv_channels;
    let mut push = |component: String, kind, per_frame| out.push(MacEntry { component, kind, per_frame });
    for i in 0..cfg.n_fd {
        let c_in = if i == 0 { in_channels } else { c + cfg.spk_channels };
        push(format!("{name}.enc.fd{i}"), LayerKind::Conv, gconv_macs(c_in, c, kt, kf, sizes[i + 1]));
    }
    let dim = cfg.bottleneck_dim()?;
    let sc = cfg.stcm_channels;
    for g in 0..cfg.n_stcnl_groups {
        for k in 0..cfg.stcm_per_group {
            let p = format!("{name}.tcn.group{g}.stcm{k}");
            push(format!("{p}.pconv_in"), LayerKind::Dense, dense_macs(dim, sc));
            push(format!("{p}.dconv"), LayerKind::DilatedConv, dconv_macs(sc, cfg.dconv_kernel));
            push(format!("{p}.pconv_out"), LayerKind::Dense, dense_macs(sc, dim));
        }
        push(format!("{name}.tcn.group{g}.lstm"), LayerKind::Lstm, lstm_macs(dim, cfg.lstm_hidden));
        if cfg.lstm_hidden != dim {
            push(format!("{name}.tcn.group{g}.lstm_proj"), LayerKind::Dense, dense_macs(cfg.lstm_hidden, dim));
        }
    }
    for d in 0..n_dec {
        for j in 0..cfg.n_fu {
            let f_in = sizes[cfg.n_fd - j];
            push(format!("{name}.dec{d}.fu{j}"), LayerKind::TransposedConv, trgconv_macs(2 * c, c, kt, kf, f_in));
        }
        push(format!("{name}.dec{d}.head"), LayerKind::Conv, (c * sizes[0]) as u64);
    }
    Ok(())
}

fn speaker_entries(cfg: &ModelConfig, name: &str, out: &mut Vec<MacEntry>) -> Result<()> {
    let sizes = cfg.fd_sizes()?;
    let bins = sizes[0];
    let h = cfg.spk_blstm_hidden / 2;
    let (kt, kf) = cfg.kernel;
    out.push(MacEntry { component: format!("{name}.blstm"), kind: LayerKind::Lstm, per_frame: 2 * lstm_macs(bins, h) });
    out.push(MacEntry { component: format!("{name}.dense"), kind: LayerKind::Dense, per_frame: dense_macs(2 * h, bins) });
    for i in 0..cfg.spk_fd_layers {
        let c_in = if i == 0 { 1 } else { cfg.spk_channels };
        out.push(MacEntry {
            component: format!("{name}.fd{i}"),
            kind: LayerKind::Conv,
            per_frame: gconv_macs(c_in, cfg.spk_channels, kt, kf, sizes[i + 1]),
        });
    }
    Ok(())
}

/// Analytic MACs for both stages and both speaker encoders.
pub fn count_macs(cfg: &ModelConfig) -> Result<MacReport> {
    cfg.validate()?;
    let mut entries = Vec::new();
    stage_entries(cfg, "mag_net", 1, 1, &mut entries)?;
    stage_entries(cfg, "com_net", 4, 2, &mut entries)?;
    speaker_entries(cfg, "spk_enc_mag", &mut entries)?;
    speaker_entries(cfg, "spk_enc_com", &mut entries)?;
    Ok(MacReport {
        frames_per_second: cfg.frames_per_second(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(dense_macs(512, 512) as f64 * 100.0, 26.2144e6);
        assert_eq!(lstm_macs(512, 512), 4 * 512 * 1024);
        assert_eq!(gconv_macs(1, 64, 2, 3, 241), 2 * 64 * 6 * 241);
        assert_eq!(trgconv_macs(128, 64, 2, 3, 8), 2 * 128 * 64 * 6 * 8);
        assert_eq!(dconv_macs(64, 5), 64 * 64 * 5);
    }

    #[test]
    fn doubling_channels_quadruples_a_conv_layer() {
        assert_eq!(gconv_macs(128, 128, 2, 3, 61), 4 * gconv_macs(64, 64, 2, 3, 61));
        assert_eq!(trgconv_macs(256, 128, 2, 3, 61), 4 * trgconv_macs(128, 64, 2, 3, 61));
        let a = count_macs(&ModelConfig::default()).unwrap();
        let b = count_macs(&ModelConfig { conv_channels: 128, ..ModelConfig::default() }).unwrap();
        let conv = |r: &MacReport| r.kind_per_second(LayerKind::Conv) + r.kind_per_second(LayerKind::TransposedConv);
        let ratio = conv(&b) / conv(&a);
        assert!(ratio > 3.8 && ratio <= 4.0, "{ratio}");
    }

    #[test]
    fn default_total_is_reported_per_component() {
        let r = count_macs(&ModelConfig::default()).unwrap();
        let total: f64 = r.by_component().iter().map(|(_, v)| v).sum();
        assert!((total - r.per_second()).abs() < 1.0);
        let names: Vec<String> = r.by_component().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["mag_net", "com_net", "spk_enc_mag", "spk_enc_com"]);
    }
}
