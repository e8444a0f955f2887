//! Squeezed temporal convolution module over `[T, D]` sequences.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{gemm, matvec_acc, Layout};
use crate::nn::dense::Dense;
use crate::nn::norm::{ClnState, CumulativeLayerNorm, PRelu};
use crate::nn::params::{ParamBuilder, ParamId, ParameterRegistry};

/// Causal dilated convolution along time: `y[t] = b + sum_k W[:, :, k] h[t - (K-1-k) d]`.
#[derive(Clone, Debug)]
pub struct DilatedConv1d {
    pub channels: usize,
    pub kernel: usize,
    pub dilation: usize,
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
pub struct DilatedHistory {
    frames: VecDeque<Vec<f32>>,
}

impl DilatedHistory {
    pub fn reset(&mut self) {
        self.frames.iter_mut().for_each(|f| f.fill(0.0));
    }
}

impl DilatedConv1d {
    pub fn new(pb: &mut ParamBuilder<'_>, channels: usize, kernel: usize, dilation: usize) -> Result<Self> {
        if channels == 0 || kernel == 0 || dilation == 0 {
            return Err(Error::Config("dilated conv dims must be positive".into()));
        }
        let fan_in = channels * kernel;
        Ok(Self {
            channels,
            kernel,
            dilation,
            w: pb.uniform("w", &[channels, channels, kernel], fan_in)?,
            b: pb.uniform("b", &[channels], fan_in)?,
        })
    }

    pub fn receptive_field(&self) -> usize {
        (self.kernel - 1) * self.dilation
    }

    pub fn forward(&self, reg: &ParameterRegistry, h: &[f32]) -> Result<Vec<f32>> {
        let c = self.channels;
        if h.len() % c != 0 {
            return Err(Error::shape("DilatedConv1d", format!("{} values for {c} channels", h.len())));
        }
        let t_len = h.len() / c;
        let k = c * self.kernel;
        let mut cols = vec![0.0f32; t_len * k];
        for t in 0..t_len {
            let row = &mut cols[t * k..(t + 1) * k];
            for tap in 0..self.kernel {
                let lag = (self.kernel - 1 - tap) * self.dilation;
                if lag > t {
                    continue;
                }
                let src = &h[(t - lag) * c..(t - lag + 1) * c];
                for ci in 0..c {
                    row[ci * self.kernel + tap] = src[ci];
                }
            }
        }
        let b = reg.get(self.b).data();
        let mut y = Vec::with_capacity(t_len * c);
        for _ in 0..t_len {
            y.extend_from_slice(b);
        }
        gemm(t_len, k, c, 1.0, &cols, Layout::row_major(k), reg.get(self.w).data(), Layout::transposed(k), 1.0, &mut y, Layout::row_major(c));
        Ok(y)
    }

    pub fn new_state(&self) -> DilatedHistory {
        DilatedHistory {
            frames: (0..self.receptive_field()).map(|_| vec![0.0; self.channels]).collect(),
        }
    }

    pub fn step(&self, reg: &ParameterRegistry, h: &[f32], state: &mut DilatedHistory) -> Result<Vec<f32>> {
        let c = self.channels;
        if h.len() != c {
            return Err(Error::shape("DilatedConv1d::step", format!("expected {c} values, got {}", h.len())));
        }
        let k = c * self.kernel;
        let n = state.frames.len();
        let mut col = vec![0.0f32; k];
        for tap in 0..self.kernel {
            let lag = (self.kernel - 1 - tap) * self.dilation;
            let src: &[f32] = if lag == 0 { h } else { &state.frames[n - lag] };
            for ci in 0..c {
                col[ci * self.kernel + tap] = src[ci];
            }
        }
        let mut y = reg.get(self.b).data().to_vec();
        matvec_acc(reg.get(self.w).data(), &col, &mut y);
        if n > 0 {
            let mut oldest = state.frames.pop_front().expect("non-empty history");
            oldest.copy_from_slice(h);
            state.frames.push_back(oldest);
        }
        Ok(y)
    }
}

#[derive(Clone, Debug)]
pub struct Stcm {
    pub dim: usize,
    pub channels: usize,
    pconv_in: Dense,
    prelu1: PRelu,
    norm1: CumulativeLayerNorm,
    dconv: DilatedConv1d,
    prelu2: PRelu,
    norm2: CumulativeLayerNorm,
    pconv_out: Dense,
}

#[derive(Clone, Debug)]
pub struct StcmState {
    pub norm1: ClnState,
    pub dconv: DilatedHistory,
    pub norm2: ClnState,
}

impl StcmState {
    pub fn reset(&mut self) {
        self.norm1.reset();
        self.dconv.reset();
        self.norm2.reset();
    }
}

impl Stcm {
    pub fn new(pb: &mut ParamBuilder<'_>, dim: usize, channels: usize, kernel: usize, dilation: usize) -> Result<Self> {
        Ok(Self {
            dim,
            channels,
            pconv_in: Dense::new(&mut pb.scope("pconv_in"), dim, channels)?,
            prelu1: PRelu::new(&mut pb.scope("prelu1"), channels)?,
            norm1: CumulativeLayerNorm::new(&mut pb.scope("norm1"), channels)?,
            dconv: DilatedConv1d::new(&mut pb.scope("dconv"), channels, kernel, dilation)?,
            prelu2: PRelu::new(&mut pb.scope("prelu2"), channels)?,
            norm2: CumulativeLayerNorm::new(&mut pb.scope("norm2"), channels)?,
            pconv_out: Dense::new(&mut pb.scope("pconv_out"), channels, dim)?,
        })
    }

    pub fn dilation(&self) -> usize {
        self.dconv.dilation
    }

    pub fn receptive_field(&self) -> usize {
        self.dconv.receptive_field()
    }

    fn scaled(&self, x: &[f32], scale: Option<&[f32]>) -> Result<Vec<f32>> {
        if x.len() % self.dim != 0 {
            return Err(Error::shape("Stcm", format!("{} values are not whole frames of {}", x.len(), self.dim)));
        }
        let mut x = x.to_vec();
        if let Some(s) = scale {
            if s.len() != self.dim {
                return Err(Error::shape("Stcm fusion", format!("scale has {} values, expected {}", s.len(), self.dim)));
            }
            for row in x.chunks_exact_mut(self.dim) {
                row.iter_mut().zip(s).for_each(|(v, g)| *v *= g);
            }
        }
        Ok(x)
    }

    /// `[T, D]` in and out. With `scale`, the input is first multiplied by it
    /// frame-wise and the residual is taken around the scaled input.
    pub fn forward(&self, reg: &ParameterRegistry, x: &[f32], scale: Option<&[f32]>) -> Result<Vec<f32>> {
        let x = self.scaled(x, scale)?;
        let mut h = self.pconv_in.forward_rows(reg, &x)?;
        self.prelu1.apply_rows(reg, &mut h)?;
        let h = self.norm1.forward_rows(reg, &h)?;
        let mut h = self.dconv.forward(reg, &h)?;
        self.prelu2.apply_rows(reg, &mut h)?;
        let h = self.norm2.forward_rows(reg, &h)?;
        let mut y = self.pconv_out.forward_rows(reg, &h)?;
        y.iter_mut().zip(&x).for_each(|(a, b)| *a += b);
        Ok(y)
    }

    pub fn new_state(&self) -> StcmState {
        StcmState {
            norm1: ClnState::default(),
            dconv: self.dconv.new_state(),
            norm2: ClnState::default(),
        }
    }

    pub fn step(&self, reg: &ParameterRegistry, x: &[f32], scale: Option<&[f32]>, state: &mut StcmState) -> Result<Vec<f32>> {
        if x.len() != self.dim {
            return Err(Error::shape("Stcm::step", format!("expected {} values, got {}", self.dim, x.len())));
        }
        let x = self.scaled(x, scale)?;
        let mut h = self.pconv_in.step(reg, &x)?;
        self.prelu1.apply_rows(reg, &mut h)?;
        let h = self.norm1.step(reg, &h, &mut state.norm1)?;
        let mut h = self.dconv.step(reg, &h, &mut state.dconv)?;
        self.prelu2.apply_rows(reg, &mut h)?;
        let h = self.norm2.step(reg, &h, &mut state.norm2)?;
        let mut y = self.pconv_out.step(reg, &h)?;
        y.iter_mut().zip(&x).for_each(|(a, b)| *a += b);
        Ok(y)
    }
}
