//! Encoder / temporal stack / decoder network shared by both stages.

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::nn::{
    ClnState, ConvHistory, CumulativeLayerNorm, Dense, GatedConv2d, GatedConvTranspose2d, Lstm, LstmState, PRelu,
    ParamBuilder, ParameterRegistry, PointwiseConv2d, Stcm, StcmState, TransposeCarry,
};
use crate::tensor::Tensor;

/// Frequency down-sampling block: GConv, cLN, PReLU.
#[derive(Clone, Debug)]
pub(crate) struct FdLayer {
    pub conv: GatedConv2d,
    norm: CumulativeLayerNorm,
    act: PRelu,
}

#[derive(Clone, Debug)]
pub(crate) struct FdState {
    conv: ConvHistory,
    norm: ClnState,
}

impl FdLayer {
    pub fn new(pb: &mut ParamBuilder<'_>, c_in: usize, c_out: usize, cfg: &ModelConfig) -> Result<Self> {
        Ok(Self {
            conv: GatedConv2d::new(&mut pb.scope("conv"), c_in, c_out, cfg.kernel, cfg.stride.1)?,
            norm: CumulativeLayerNorm::new(&mut pb.scope("cln"), c_out)?,
            act: PRelu::new(&mut pb.scope("prelu"), c_out)?,
        })
    }

    pub fn forward(&self, reg: &ParameterRegistry, x: &Tensor) -> Result<Tensor> {
        let y = self.conv.forward(reg, x)?;
        let mut y = self.norm.forward(reg, &y)?;
        self.act.apply_planes(reg, y.data_mut())?;
        Ok(y)
    }

    pub fn new_state(&self, f_in: usize) -> FdState {
        FdState {
            conv: self.conv.new_state(f_in),
            norm: ClnState::default(),
        }
    }

    pub fn step(&self, reg: &ParameterRegistry, x: &[f32], st: &mut FdState) -> Result<Vec<f32>> {
        let y = self.conv.step(reg, x, &mut st.conv)?;
        let mut y = self.norm.step(reg, &y, &mut st.norm)?;
        self.act.apply_planes(reg, &mut y)?;
        Ok(y)
    }
}

impl FdState {
    pub fn reset(&mut self) {
        self.conv.reset();
        self.norm.reset();
    }
}

/// Frequency up-sampling block: TrGConv, cLN, PReLU.
#[derive(Clone, Debug)]
pub(crate) struct FuLayer {
    pub conv: GatedConvTranspose2d,
    norm: CumulativeLayerNorm,
    act: PRelu,
}

#[derive(Clone, Debug)]
pub(crate) struct FuState {
    conv: TransposeCarry,
    norm: ClnState,
}

impl FuLayer {
    fn new(pb: &mut ParamBuilder<'_>, c_in: usize, c_out: usize, f_out: usize, cfg: &ModelConfig) -> Result<Self> {
        Ok(Self {
            conv: GatedConvTranspose2d::new(&mut pb.scope("conv"), c_in, c_out, cfg.kernel, cfg.stride.1)?
                .paired_with(f_out),
            norm: CumulativeLayerNorm::new(&mut pb.scope("cln"), c_out)?,
            act: PRelu::new(&mut pb.scope("prelu"), c_out)?,
        })
    }

    fn forward(&self, reg: &ParameterRegistry, x: &Tensor) -> Result<Tensor> {
        let y = self.conv.forward(reg, x)?;
        let mut y = self.norm.forward(reg, &y)?;
        self.act.apply_planes(reg, y.data_mut())?;
        Ok(y)
    }

    fn step(&self, reg: &ParameterRegistry, x: &[f32], st: &mut FuState) -> Result<Vec<f32>> {
        let y = self.conv.step(reg, x, &mut st.conv)?;
        let mut y = self.norm.step(reg, &y, &mut st.norm)?;
        self.act.apply_planes(reg, &mut y)?;
        Ok(y)
    }
}

/// S-TCMs followed by a residual LSTM.
#[derive(Clone, Debug)]
struct TemporalGroup {
    stcms: Vec<Stcm>,
    lstm: Lstm,
    /// Maps the LSTM output back to the bottleneck width when they differ.
    proj: Option<Dense>,
}

#[derive(Clone, Debug)]
struct GroupState {
    stcms: Vec<StcmState>,
    lstm: LstmState,
}

impl TemporalGroup {
    fn new(pb: &mut ParamBuilder<'_>, dim: usize, cfg: &ModelConfig) -> Result<Self> {
        let stcms = cfg
            .dilations
            .iter()
            .enumerate()
            .map(|(k, &d)| Stcm::new(&mut pb.scope(&format!("stcm{k}")), dim, cfg.stcm_channels, cfg.dconv_kernel, d))
            .collect::<Result<Vec<_>>>()?;
        let lstm = Lstm::new(&mut pb.scope("lstm"), dim, cfg.lstm_hidden)?;
        let proj = if cfg.lstm_hidden != dim {
            Some(Dense::new(&mut pb.scope("lstm_proj"), cfg.lstm_hidden, dim)?)
        } else {
            None
        };
        Ok(Self { stcms, lstm, proj })
    }

    fn forward(&self, reg: &ParameterRegistry, x: &[f32], scale: &[f32]) -> Result<Vec<f32>> {
        let mut h = x.to_vec();
        for (k, s) in self.stcms.iter().enumerate() {
            h = s.forward(reg, &h, (k == 0).then_some(scale))?;
        }
        let mut y = self.lstm.forward(reg, &h)?;
        if let Some(p) = &self.proj {
            y = p.forward_rows(reg, &y)?;
        }
        y.iter_mut().zip(&h).for_each(|(a, b)| *a += b);
        Ok(y)
    }

    fn new_state(&self) -> GroupState {
        GroupState {
            stcms: self.stcms.iter().map(Stcm::new_state).collect(),
            lstm: LstmState::zeros(self.lstm.hidden),
        }
    }

    fn step(&self, reg: &ParameterRegistry, x: &[f32], scale: &[f32], st: &mut GroupState) -> Result<Vec<f32>> {
        let mut h = x.to_vec();
        for (k, (s, ss)) in self.stcms.iter().zip(&mut st.stcms).enumerate() {
            h = s.step(reg, &h, (k == 0).then_some(scale), ss)?;
        }
        let mut y = self.lstm.step(reg, &h, &mut st.lstm)?;
        if let Some(p) = &self.proj {
            y = p.step(reg, &y)?;
        }
        y.iter_mut().zip(&h).for_each(|(a, b)| *a += b);
        Ok(y)
    }
}

#[derive(Clone, Debug)]
struct Decoder {
    layers: Vec<FuLayer>,
    head: PointwiseConv2d,
}

/// Per-utterance speaker inputs for one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageConditioning {
    /// Time-pooled speaker-encoder output of each level, `[spk_channels * F_level]`.
    pub levels: Vec<Vec<f32>>,
    /// Projected embedding multiplied into each group's first S-TCM, `[D]`.
    pub scales: Vec<Vec<f32>>,
}

#[derive(Clone, Debug)]
pub(crate) struct StageNet {
    channels: usize,
    spk_channels: usize,
    fd_sizes: Vec<usize>,
    pub(crate) encoder: Vec<FdLayer>,
    groups: Vec<TemporalGroup>,
    decoders: Vec<Decoder>,
}

#[derive(Clone, Debug)]
pub(crate) struct StageState {
    fd: Vec<FdState>,
    groups: Vec<GroupState>,
    fu: Vec<Vec<FuState>>,
}

impl StageState {
    pub fn reset(&mut self) {
        self.fd.iter_mut().for_each(FdState::reset);
        for g in &mut self.groups {
            g.stcms.iter_mut().for_each(StcmState::reset);
            g.lstm.reset();
        }
        for d in &mut self.fu {
            for s in d {
                s.conv.reset();
                s.norm.reset();
            }
        }
    }
}

/// `[C, T, F]` to rows `[T, C * F]`.
pub(crate) fn to_rows(x: &Tensor) -> Vec<f32> {
    let (c, t_len, f) = (x.dim(0), x.dim(1), x.dim(2));
    let mut rows = vec![0.0; x.len()];
    for ci in 0..c {
        for t in 0..t_len {
            rows[(t * c + ci) * f..][..f].copy_from_slice(&x.data()[(ci * t_len + t) * f..][..f]);
        }
    }
    rows
}

pub(crate) fn from_rows(rows: &[f32], c: usize, t_len: usize, f: usize) -> Result<Tensor> {
    let mut out = Tensor::zeros(&[c, t_len, f]);
    for ci in 0..c {
        for t in 0..t_len {
            out.data_mut()[(ci * t_len + t) * f..][..f].copy_from_slice(&rows[(t * c + ci) * f..][..f]);
        }
    }
    Ok(out)
}

/// Append `extra: [k * F]` as `k` channels repeated over every frame.
pub(crate) fn append_broadcast(x: &Tensor, extra: &[f32]) -> Result<Tensor> {
    let (c, t_len, f) = (x.dim(0), x.dim(1), x.dim(2));
    if f == 0 || extra.len() % f != 0 {
        return Err(Error::shape(
            "speaker feature concat",
            format!("{} speaker values for {f} bins", extra.len()),
        ));
    }
    let k = extra.len() / f;
    let mut data = Vec::with_capacity((c + k) * t_len * f);
    data.extend_from_slice(x.data());
    for row in extra.chunks_exact(f) {
        for _ in 0..t_len {
            data.extend_from_slice(row);
        }
    }
    Tensor::from_vec(&[c + k, t_len, f], data)
}

impl StageNet {
    pub fn new(
        pb: &mut ParamBuilder<'_>,
        cfg: &ModelConfig,
        in_channels: usize,
        n_decoders: usize,
        zero_heads: bool,
    ) -> Result<Self> {
        let fd_sizes = cfg.fd_sizes()?;
        let c = cfg.conv_channels;
        let mut encoder = Vec::with_capacity(cfg.n_fd);
        for i in 0..cfg.n_fd {
            let c_in = if i == 0 { in_channels } else { c + cfg.spk_channels };
            encoder.push(FdLayer::new(&mut pb.scope(&format!("enc.fd{i}")), c_in, c, cfg)?);
        }
        let dim = cfg.bottleneck_dim()?;
        let groups = (0..cfg.n_stcnl_groups)
            .map(|g| TemporalGroup::new(&mut pb.scope(&format!("tcn.group{g}")), dim, cfg))
            .collect::<Result<Vec<_>>>()?;
        let mut decoders = Vec::with_capacity(n_decoders);
        for d in 0..n_decoders {
            let name = match (n_decoders, d) {
                (1, _) => "dec".to_string(),
                (2, 0) => "dec_re".to_string(),
                (2, 1) => "dec_im".to_string(),
                _ => format!("dec{d}"),
            };
            let mut dp = pb.scope(&name);
            let layers = (0..cfg.n_fu)
                .map(|j| FuLayer::new(&mut dp.scope(&format!("fu{j}")), 2 * c, c, fd_sizes[cfg.n_fd - 1 - j], cfg))
                .collect::<Result<Vec<_>>>()?;
            let head = PointwiseConv2d::new(&mut dp.scope("head"), c, 1, zero_heads)?;
            decoders.push(Decoder { layers, head });
        }
        Ok(Self {
            channels: c,
            spk_channels: cfg.spk_channels,
            fd_sizes,
            encoder,
            groups,
            decoders,
        })
    }

    fn check_conditioning(&self, cond: &StageConditioning) -> Result<()> {
        if cond.levels.len() + 1 != self.encoder.len() || cond.scales.len() != self.groups.len() {
            return Err(Error::shape(
                "stage conditioning",
                format!(
                    "{} speaker levels / {} fusion scales for {} FD layers / {} groups",
                    cond.levels.len(),
                    cond.scales.len(),
                    self.encoder.len(),
                    self.groups.len()
                ),
            ));
        }
        for (i, l) in cond.levels.iter().enumerate() {
            if l.len() != self.spk_channels * self.fd_sizes[i + 1] {
                return Err(Error::shape(
                    "stage conditioning",
                    format!("speaker level {} has {} values", i + 1, l.len()),
                ));
            }
        }
        Ok(())
    }

    /// `[in_channels, T, bins]` to one `[1, T, bins]` map per decoder.
    pub fn forward(&self, reg: &ParameterRegistry, x: &Tensor, cond: &StageConditioning) -> Result<Vec<Tensor>> {
        self.check_conditioning(cond)?;
        let mut skips: Vec<Tensor> = Vec::with_capacity(self.encoder.len());
        for (i, fd) in self.encoder.iter().enumerate() {
            let y = if i == 0 {
                fd.forward(reg, x)?
            } else {
                let prev = skips.last().expect("previous level");
                fd.forward(reg, &append_broadcast(prev, &cond.levels[i - 1])?)?
            };
            skips.push(y);
        }
        let bott = skips.last().expect("at least one FD layer");
        let (t_len, fb) = (bott.dim(1), bott.dim(2));
        let mut rows = to_rows(bott);
        for (g, scale) in self.groups.iter().zip(&cond.scales) {
            rows = g.forward(reg, &rows, scale)?;
        }
        let bott = from_rows(&rows, self.channels, t_len, fb)?;
        let n = skips.len();
        let mut outs = Vec::with_capacity(self.decoders.len());
        for dec in &self.decoders {
            let mut d = bott.clone();
            for (j, fu) in dec.layers.iter().enumerate() {
                d = fu.forward(reg, &Tensor::concat_leading(&[&d, &skips[n - 1 - j]])?)?;
            }
            let y = dec.head.apply(reg, d.data())?;
            outs.push(Tensor::from_vec(&[1, t_len, d.dim(2)], y)?);
        }
        Ok(outs)
    }

    pub fn new_state(&self) -> Result<StageState> {
        Ok(StageState {
            fd: self
                .encoder
                .iter()
                .zip(&self.fd_sizes)
                .map(|(l, &f)| l.new_state(f))
                .collect(),
            groups: self.groups.iter().map(TemporalGroup::new_state).collect(),
            fu: self
                .decoders
                .iter()
                .map(|d| {
                    d.layers
                        .iter()
                        .map(|l| {
                            Ok(FuState {
                                conv: l.conv.new_state()?,
                                norm: ClnState::default(),
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?,
        })
    }

    /// One `[in_channels * bins]` frame to one `[bins]` frame per decoder.
    pub fn step(
        &self,
        reg: &ParameterRegistry,
        x: &[f32],
        cond: &StageConditioning,
        st: &mut StageState,
    ) -> Result<Vec<Vec<f32>>> {
        let mut skips: Vec<Vec<f32>> = Vec::with_capacity(self.encoder.len());
        for (i, (fd, fs)) in self.encoder.iter().zip(&mut st.fd).enumerate() {
            let y = if i == 0 {
                fd.step(reg, x, fs)?
            } else {
                let mut inp = skips.last().expect("previous level").clone();
                inp.extend_from_slice(&cond.levels[i - 1]);
                fd.step(reg, &inp, fs)?
            };
            skips.push(y);
        }
        let mut h = skips.last().expect("at least one FD layer").clone();
        for ((g, scale), gs) in self.groups.iter().zip(&cond.scales).zip(&mut st.groups) {
            h = g.step(reg, &h, scale, gs)?;
        }
        let n = skips.len();
        let mut outs = Vec::with_capacity(self.decoders.len());
        for (dec, ds) in self.decoders.iter().zip(&mut st.fu) {
            let mut d = h.clone();
            for (j, (fu, fs)) in dec.layers.iter().zip(ds.iter_mut()).enumerate() {
                d.extend_from_slice(&skips[n - 1 - j]);
                d = fu.step(reg, &d, fs)?;
            }
            outs.push(dec.head.apply(reg, &d)?);
        }
        Ok(outs)
    }
}
