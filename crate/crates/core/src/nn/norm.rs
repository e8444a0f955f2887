//! Cumulative layer norm and PReLU.

use crate::error::{Error, Result};
use crate::nn::params::{ParamBuilder, ParamId, ParameterRegistry};
use crate::tensor::Tensor;

pub const NORM_EPS: f64 = 1e-5;

/// Normalizes frame `t` of a `[C, T, F]` map with mean/variance taken over
/// every `(c, f)` value of frames `0..=t`.
#[derive(Clone, Debug)]
pub struct CumulativeLayerNorm {
    pub channels: usize,
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClnState {
    pub count: f64,
    pub sum: f64,
    pub sumsq: f64,
}

impl ClnState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }

    fn push(&mut self, frame: &[f32]) -> (f64, f64) {
        let (mut s, mut q) = ([0.0f64; 4], [0.0f64; 4]);
        let chunks = frame.chunks_exact(4);
        let rest = chunks.remainder();
        for c in chunks {
            for i in 0..4 {
                let v = c[i] as f64;
                s[i] += v;
                q[i] += v * v;
            }
        }
        for &v in rest {
            s[0] += v as f64;
            q[0] += v as f64 * v as f64;
        }
        self.sum += s.iter().sum::<f64>();
        self.sumsq += q.iter().sum::<f64>();
        self.count += frame.len() as f64;
        let mean = self.sum / self.count;
        let var = (self.sumsq / self.count - mean * mean).max(0.0);
        (mean, 1.0 / (var + NORM_EPS).sqrt())
    }
}

impl CumulativeLayerNorm {
    pub fn new(pb: &mut ParamBuilder<'_>, channels: usize) -> Result<Self> {
        Ok(Self {
            channels,
            gamma: pb.constant("gamma", &[channels], 1.0)?,
            beta: pb.constant("beta", &[channels], 0.0)?,
        })
    }

    fn apply(&self, reg: &ParameterRegistry, x: &[f32], y: &mut [f32], stride_c: usize, f: usize, mean: f64, inv: f64) {
        let g = reg.get(self.gamma).data();
        let b = reg.get(self.beta).data();
        for c in 0..self.channels {
            let (scale, shift, m) = ((g[c] as f64 * inv) as f32, b[c], mean as f32);
            let src = &x[c * stride_c..c * stride_c + f];
            let dst = &mut y[c * stride_c..c * stride_c + f];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = (s - m) * scale + shift;
            }
        }
    }

    pub fn forward(&self, reg: &ParameterRegistry, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 3 || x.dim(0) != self.channels {
            return Err(Error::shape(
                "CumulativeLayerNorm",
                format!("expected [{}, T, F], got {:?}", self.channels, x.shape()),
            ));
        }
        let (t_len, f) = (x.dim(1), x.dim(2));
        let mut y = Tensor::zeros(x.shape());
        let mut st = ClnState::default();
        let mut frame = vec![0.0f32; self.channels * f];
        for t in 0..t_len {
            for c in 0..self.channels {
                frame[c * f..(c + 1) * f].copy_from_slice(&x.data()[(c * t_len + t) * f..][..f]);
            }
            let (mean, inv) = st.push(&frame);
            let off = t * f;
            self.apply(reg, &x.data()[off..], &mut y.data_mut()[off..], t_len * f, f, mean, inv);
        }
        Ok(y)
    }

    /// `[T, C]` rows with the channel index fastest, statistics accumulated down the rows.
    pub fn forward_rows(&self, reg: &ParameterRegistry, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() % self.channels != 0 {
            return Err(Error::shape(
                "CumulativeLayerNorm",
                format!("{} values are not whole rows of {}", x.len(), self.channels),
            ));
        }
        let mut st = ClnState::default();
        let mut y = vec![0.0f32; x.len()];
        for (src, dst) in x.chunks_exact(self.channels).zip(y.chunks_exact_mut(self.channels)) {
            let (mean, inv) = st.push(src);
            self.apply(reg, src, dst, 1, 1, mean, inv);
        }
        Ok(y)
    }

    /// One `[C * F]` frame.
    pub fn step(&self, reg: &ParameterRegistry, x: &[f32], state: &mut ClnState) -> Result<Vec<f32>> {
        if x.is_empty() || x.len() % self.channels != 0 {
            return Err(Error::shape(
                "CumulativeLayerNorm::step",
                format!("{} values for {} channels", x.len(), self.channels),
            ));
        }
        let f = x.len() / self.channels;
        let (mean, inv) = state.push(x);
        let mut y = vec![0.0f32; x.len()];
        self.apply(reg, x, &mut y, f, f, mean, inv);
        Ok(y)
    }
}

#[derive(Clone, Debug)]
pub struct PRelu {
    pub channels: usize,
    slope: ParamId,
}

impl PRelu {
    pub fn new(pb: &mut ParamBuilder<'_>, channels: usize) -> Result<Self> {
        Ok(Self {
            channels,
            slope: pb.constant("slope", &[channels], 0.25)?,
        })
    }

    /// `x: [C, N]` with each channel contiguous.
    pub fn apply_planes(&self, reg: &ParameterRegistry, x: &mut [f32]) -> Result<()> {
        if x.len() % self.channels != 0 {
            return Err(Error::shape("PRelu", format!("{} values for {} channels", x.len(), self.channels)));
        }
        let n = x.len() / self.channels;
        let a = reg.get(self.slope).data();
        for (plane, &ac) in x.chunks_exact_mut(n.max(1)).zip(a) {
            for v in plane {
                if *v < 0.0 {
                    *v *= ac;
                }
            }
        }
        Ok(())
    }

    /// `x: [N, C]` with the channel index fastest.
    pub fn apply_rows(&self, reg: &ParameterRegistry, x: &mut [f32]) -> Result<()> {
        if x.len() % self.channels != 0 {
            return Err(Error::shape("PRelu", format!("{} values for {} channels", x.len(), self.channels)));
        }
        let a = reg.get(self.slope).data();
        for row in x.chunks_exact_mut(self.channels) {
            for (v, &ac) in row.iter_mut().zip(a) {
                if *v < 0.0 {
                    *v *= ac;
                }
            }
        }
        Ok(())
    }
}
