//! Gated 2-D convolutions over `[channels, time, freq]` feature maps.
//!
//! Both layers are causal along time: the forward convolution pads `kt - 1`
//! zero frames in front, and the transposed one drops the trailing frames it
//! would otherwise emit. Offline passes run one GEMM per time chunk; streaming
//! steps run the same GEMM on a single frame plus cached history.

use crate::error::{Error, Result};
use crate::linalg::{fast_exp, gemm, Layout};
use crate::nn::params::{ParamBuilder, ParamId, ParameterRegistry};
use crate::tensor::Tensor;

/// Target number of floats in one im2col / scatter buffer.
const CHUNK_FLOATS: usize = 1 << 22;

fn combine_gated(content: &mut [f32], gate: &[f32], cb: &[f32], gb: &[f32], plane: usize) {
    for (co, (c_row, g_row)) in content
        .chunks_exact_mut(plane)
        .zip(gate.chunks_exact(plane))
        .enumerate()
    {
        let (bc, bg) = (cb[co], gb[co]);
        for (c, &g) in c_row.iter_mut().zip(g_row) {
            *c = (*c + bc) / (1.0 + fast_exp(-(g + bg)));
        }
    }
}

/// Index range `lo..hi` of `i` for which `i * stride + off` lands in `0..len`.
fn valid_range(count: usize, stride: usize, off: isize, len: usize) -> (usize, usize) {
    let lo = if off >= 0 { 0 } else { ((-off) as usize).div_ceil(stride) };
    let hi = if len as isize - off <= 0 {
        0
    } else {
        ((len as isize - off) as usize).div_ceil(stride).min(count)
    };
    (lo.min(hi), hi)
}

#[derive(Clone, Debug)]
pub struct GatedConv2d {
    pub c_in: usize,
    pub c_out: usize,
    pub kt: usize,
    pub kf: usize,
    pub stride_f: usize,
    pub pad_f: usize,
    content_w: ParamId,
    content_b: ParamId,
    gate_w: ParamId,
    gate_b: ParamId,
}

/// Previous `kt - 1` input frames, oldest first.
#[derive(Clone, Debug)]
pub struct ConvHistory {
    frames: Vec<Vec<f32>>,
}

impl ConvHistory {
    pub fn reset(&mut self) {
        self.frames.iter_mut().for_each(|f| f.fill(0.0));
    }
}

impl GatedConv2d {
    pub fn new(
        pb: &mut ParamBuilder<'_>,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride_f: usize,
    ) -> Result<Self> {
        let (kt, kf) = kernel;
        if c_in == 0 || c_out == 0 || kt == 0 || kf == 0 || stride_f == 0 {
            return Err(Error::Config("gated conv dims must be positive".into()));
        }
        let fan_in = c_in * kt * kf;
        let shape = [c_out, c_in, kt, kf];
        Ok(Self {
            c_in,
            c_out,
            kt,
            kf,
            stride_f,
            pad_f: (kf - 1) / 2,
            content_w: pb.uniform("content_w", &shape, fan_in)?,
            content_b: pb.uniform("content_b", &[c_out], fan_in)?,
            gate_w: pb.uniform("gate_w", &shape, fan_in)?,
            gate_b: pb.uniform("gate_b", &[c_out], fan_in)?,
        })
    }

    pub fn out_freq(&self, f_in: usize) -> Result<usize> {
        out_freq(f_in, self.kf, self.stride_f, self.pad_f)
    }

    fn k(&self) -> usize {
        self.c_in * self.kt * self.kf
    }

    /// Write the im2col block for one output frame: rows `(ci, a, b)`, columns
    /// `col_off .. col_off + f_out` of a buffer with leading dimension `ld`.
    fn fill_cols<'x>(
        &self,
        f_in: usize,
        f_out: usize,
        src: impl Fn(usize, usize) -> Option<&'x [f32]>,
        cols: &mut [f32],
        ld: usize,
        col_off: usize,
    ) {
        for ci in 0..self.c_in {
            for a in 0..self.kt {
                let row = src(ci, a);
                for b in 0..self.kf {
                    let r = (ci * self.kt + a) * self.kf + b;
                    let dst = &mut cols[r * ld + col_off..r * ld + col_off + f_out];
                    match row {
                        None => dst.fill(0.0),
                        Some(x) => {
                            let off = b as isize - self.pad_f as isize;
                            let (lo, hi) = valid_range(f_out, self.stride_f, off, f_in);
                            dst[..lo].fill(0.0);
                            dst[hi..].fill(0.0);
                            let start = (lo * self.stride_f) as isize + off;
                            for (d, &v) in dst[lo..hi]
                                .iter_mut()
                                .zip(x[start as usize..].iter().step_by(self.stride_f))
                            {
                                *d = v;
                            }
                        }
                    }
                }
            }
        }
    }

    /// `[C_in, T, F] -> [C_out, T, F']`.
    pub fn forward(&self, reg: &ParameterRegistry, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 3 || x.dim(0) != self.c_in {
            return Err(Error::shape(
                "GatedConv2d",
                format!("expected [{}, T, F], got {:?}", self.c_in, x.shape()),
            ));
        }
        let (t_len, f_in) = (x.dim(1), x.dim(2));
        let f_out = self.out_freq(f_in)?;
        let k = self.k();
        let plane = t_len * f_out;
        let wc = reg.get(self.content_w).data();
        let wg = reg.get(self.gate_w).data();
        let mut content = vec![0.0f32; self.c_out * plane];
        let mut gate = vec![0.0f32; self.c_out * plane];
        let chunk = (CHUNK_FLOATS / (k * f_out).max(1)).max(1);
        let xd = x.data();
        let mut t0 = 0;
        while t0 < t_len {
            let tc = chunk.min(t_len - t0);
            let ld = tc * f_out;
            let mut cols = vec![0.0f32; k * ld];
            for dt in 0..tc {
                let t = t0 + dt;
                self.fill_cols(
                    f_in,
                    f_out,
                    |ci, a| {
                        let tt = t as isize + a as isize - (self.kt as isize - 1);
                        (tt >= 0).then(|| {
                            let base = (ci * t_len + tt as usize) * f_in;
                            &xd[base..base + f_in]
                        })
                    },
                    &mut cols,
                    ld,
                    dt * f_out,
                );
            }
            let off = t0 * f_out;
            let lc = Layout { rs: plane, cs: 1 };
            gemm(self.c_out, k, ld, 1.0, wc, Layout::row_major(k), &cols, Layout::row_major(ld), 0.0, &mut content[off..], lc);
            gemm(self.c_out, k, ld, 1.0, wg, Layout::row_major(k), &cols, Layout::row_major(ld), 0.0, &mut gate[off..], lc);
            t0 += tc;
        }
        combine_gated(
            &mut content,
            &gate,
            reg.get(self.content_b).data(),
            reg.get(self.gate_b).data(),
            plane,
        );
        Tensor::from_vec(&[self.c_out, t_len, f_out], content)
    }

    pub fn new_state(&self, f_in: usize) -> ConvHistory {
        ConvHistory {
            frames: vec![vec![0.0; self.c_in * f_in]; self.kt - 1],
        }
    }

    /// One frame `[C_in * F]` in, one frame `[C_out * F']` out.
    pub fn step(&self, reg: &ParameterRegistry, x: &[f32], state: &mut ConvHistory) -> Result<Vec<f32>> {
        if x.len() % self.c_in != 0 {
            return Err(Error::shape(
                "GatedConv2d::step",
                format!("frame of {} values is not a multiple of {} channels", x.len(), self.c_in),
            ));
        }
        let f_in = x.len() / self.c_in;
        if state.frames.iter().any(|f| f.len() != x.len()) {
            return Err(Error::shape("GatedConv2d::step", "history frame size differs from input"));
        }
        let f_out = self.out_freq(f_in)?;
        let k = self.k();
        let mut cols = vec![0.0f32; k * f_out];
        let last = self.kt - 1;
        self.fill_cols(
            f_in,
            f_out,
            |ci, a| {
                let frame: &[f32] = if a == last { x } else { &state.frames[a] };
                Some(&frame[ci * f_in..(ci + 1) * f_in])
            },
            &mut cols,
            f_out,
            0,
        );
        let mut content = vec![0.0f32; self.c_out * f_out];
        let mut gate = vec![0.0f32; self.c_out * f_out];
        let lo = Layout::row_major(f_out);
        gemm(self.c_out, k, f_out, 1.0, reg.get(self.content_w).data(), Layout::row_major(k), &cols, lo, 0.0, &mut content, lo);
        gemm(self.c_out, k, f_out, 1.0, reg.get(self.gate_w).data(), Layout::row_major(k), &cols, lo, 0.0, &mut gate, lo);
        combine_gated(
            &mut content,
            &gate,
            reg.get(self.content_b).data(),
            reg.get(self.gate_b).data(),
            f_out,
        );
        if last > 0 {
            state.frames.rotate_left(1);
            state.frames[last - 1].copy_from_slice(x);
        }
        Ok(content)
    }
}

pub(crate) fn out_freq(f_in: usize, kf: usize, stride: usize, pad: usize) -> Result<usize> {
    if f_in == 0 || f_in + 2 * pad < kf {
        return Err(Error::Config(format!(
            "frequency size {f_in} is too small for kernel {kf} with padding {pad}"
        )));
    }
    Ok((f_in + 2 * pad - kf) / stride + 1)
}

/// Transposed gated convolution; the output frequency size is fixed at build
/// time from the paired down-sampling layer.
#[derive(Clone, Debug)]
pub struct GatedConvTranspose2d {
    pub c_in: usize,
    pub c_out: usize,
    pub kt: usize,
    pub kf: usize,
    pub stride_f: usize,
    pub pad_f: usize,
    pub out_freq: Option<usize>,
    content_w: ParamId,
    content_b: ParamId,
    gate_w: ParamId,
    gate_b: ParamId,
}

/// Pending contributions to the next `kt - 1` output frames (content, gate).
#[derive(Clone, Debug)]
pub struct TransposeCarry {
    content: Vec<Vec<f32>>,
    gate: Vec<Vec<f32>>,
}

impl TransposeCarry {
    pub fn reset(&mut self) {
        self.content.iter_mut().chain(self.gate.iter_mut()).for_each(|f| f.fill(0.0));
    }
}

impl GatedConvTranspose2d {
    pub fn new(
        pb: &mut ParamBuilder<'_>,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride_f: usize,
    ) -> Result<Self> {
        let (kt, kf) = kernel;
        if c_in == 0 || c_out == 0 || kt == 0 || kf == 0 || stride_f == 0 {
            return Err(Error::Config("transposed gated conv dims must be positive".into()));
        }
        let fan_in = c_in * kt * kf;
        let shape = [c_in, c_out, kt, kf];
        Ok(Self {
            c_in,
            c_out,
            kt,
            kf,
            stride_f,
            pad_f: (kf - 1) / 2,
            out_freq: None,
            content_w: pb.uniform("content_w", &shape, fan_in)?,
            content_b: pb.uniform("content_b", &[c_out], fan_in)?,
            gate_w: pb.uniform("gate_w", &shape, fan_in)?,
            gate_b: pb.uniform("gate_b", &[c_out], fan_in)?,
        })
    }

    /// Record the pre-down-sampling size this layer must restore.
    pub fn paired_with(mut self, f_out: usize) -> Self {
        self.out_freq = Some(f_out);
        self
    }

    fn target(&self, f_in: usize) -> Result<usize> {
        let f_out = self.out_freq.ok_or_else(|| {
            Error::Config("transposed conv has no paired frequency size to crop to".into())
        })?;
        let reach = self.stride_f * (f_in.max(1) - 1) + self.kf - self.pad_f;
        if f_in == 0 || f_out > reach {
            return Err(Error::Config(format!(
                "cannot up-sample {f_in} bins to {f_out} (max {reach})"
            )));
        }
        Ok(f_out)
    }

    fn m(&self) -> usize {
        self.c_out * self.kt * self.kf
    }

    /// Scatter `z: [M, n_frames * f_in]` into accumulators laid out
    /// `[C_out, frames_total, f_out]`, with `z` frame `dt` landing at `base + dt + a`.
    #[allow(clippy::too_many_arguments)]
    fn scatter(
        &self,
        z: &[f32],
        n_frames: usize,
        f_in: usize,
        f_out: usize,
        base: usize,
        frames_total: usize,
        acc: &mut [f32],
    ) {
        let ld = n_frames * f_in;
        for co in 0..self.c_out {
            for a in 0..self.kt {
                for b in 0..self.kf {
                    let m = (co * self.kt + a) * self.kf + b;
                    let zrow = &z[m * ld..(m + 1) * ld];
                    for dt in 0..n_frames {
                        let t_o = base + dt + a;
                        if t_o >= frames_total {
                            continue;
                        }
                        let dst = &mut acc[(co * frames_total + t_o) * f_out..][..f_out];
                        let src = &zrow[dt * f_in..(dt + 1) * f_in];
                        let off = b as isize - self.pad_f as isize;
                        let (lo, hi) = valid_range(f_in, self.stride_f, off, f_out);
                        if lo < hi {
                            let start = ((lo * self.stride_f) as isize + off) as usize;
                            for (d, &v) in dst[start..].iter_mut().step_by(self.stride_f).zip(&src[lo..hi]) {
                                *d += v;
                            }
                        }
                    }
                }
            }
        }
    }

    /// `[C_in, T, F] -> [C_out, T, paired F]`.
    pub fn forward(&self, reg: &ParameterRegistry, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 3 || x.dim(0) != self.c_in {
            return Err(Error::shape(
                "GatedConvTranspose2d",
                format!("expected [{}, T, F], got {:?}", self.c_in, x.shape()),
            ));
        }
        let (t_len, f_in) = (x.dim(1), x.dim(2));
        let f_out = self.target(f_in)?;
        let m = self.m();
        let wc = reg.get(self.content_w).data();
        let wg = reg.get(self.gate_w).data();
        let mut content = vec![0.0f32; self.c_out * t_len * f_out];
        let mut gate = vec![0.0f32; self.c_out * t_len * f_out];
        let chunk = (CHUNK_FLOATS / (m * f_in).max(1)).max(1);
        let xd = x.data();
        let mut t0 = 0;
        while t0 < t_len {
            let tc = chunk.min(t_len - t0);
            let ld = tc * f_in;
            let mut z = vec![0.0f32; m * ld];
            let lb = Layout { rs: t_len * f_in, cs: 1 };
            let xs = &xd[t0 * f_in..];
            for (w, acc) in [(wc, &mut content), (wg, &mut gate)] {
                gemm(m, self.c_in, ld, 1.0, w, Layout::transposed(m), xs, lb, 0.0, &mut z, Layout::row_major(ld));
                self.scatter(&z, tc, f_in, f_out, t0, t_len, acc);
            }
            t0 += tc;
        }
        combine_gated(
            &mut content,
            &gate,
            reg.get(self.content_b).data(),
            reg.get(self.gate_b).data(),
            t_len * f_out,
        );
        Tensor::from_vec(&[self.c_out, t_len, f_out], content)
    }

    pub fn new_state(&self) -> Result<TransposeCarry> {
        let f_out = self
            .out_freq
            .ok_or_else(|| Error::Config("transposed conv has no paired frequency size".into()))?;
        let frame = vec![0.0; self.c_out * f_out];
        Ok(TransposeCarry {
            content: vec![frame.clone(); self.kt - 1],
            gate: vec![frame; self.kt - 1],
        })
    }

    pub fn step(&self, reg: &ParameterRegistry, x: &[f32], state: &mut TransposeCarry) -> Result<Vec<f32>> {
        if x.len() % self.c_in != 0 {
            return Err(Error::shape(
                "GatedConvTranspose2d::step",
                format!("frame of {} values is not a multiple of {} channels", x.len(), self.c_in),
            ));
        }
        let f_in = x.len() / self.c_in;
        let f_out = self.target(f_in)?;
        let m = self.m();
        let plane = self.c_out * f_out;
        let lag = self.kt - 1;
        let mut out = [vec![0.0f32; plane], vec![0.0f32; plane]];
        let mut z = vec![0.0f32; m * f_in];
        let weights = [reg.get(self.content_w).data(), reg.get(self.gate_w).data()];
        for (gi, w) in weights.into_iter().enumerate() {
            gemm(m, self.c_in, f_in, 1.0, w, Layout::transposed(m), x, Layout::row_major(f_in), 0.0, &mut z, Layout::row_major(f_in));
            // Frames [current, next, ...] laid out as [C_out, kt, f_out].
            let mut acc = vec![0.0f32; self.c_out * self.kt * f_out];
            self.scatter(&z, 1, f_in, f_out, 0, self.kt, &mut acc);
            let carry = if gi == 0 { &mut state.content } else { &mut state.gate };
            for co in 0..self.c_out {
                let rows = &acc[co * self.kt * f_out..(co + 1) * self.kt * f_out];
                let dst = &mut out[gi][co * f_out..(co + 1) * f_out];
                dst.copy_from_slice(&rows[..f_out]);
                if lag > 0 {
                    for (d, &c) in dst.iter_mut().zip(&carry[0][co * f_out..(co + 1) * f_out]) {
                        *d += c;
                    }
                }
            }
            if lag > 0 {
                carry.rotate_left(1);
                carry[lag - 1].fill(0.0);
                for a in 1..self.kt {
                    for co in 0..self.c_out {
                        let src = &acc[(co * self.kt + a) * f_out..][..f_out];
                        let dst = &mut carry[a - 1][co * f_out..(co + 1) * f_out];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
        let [mut content, gate] = out;
        combine_gated(
            &mut content,
            &gate,
            reg.get(self.content_b).data(),
            reg.get(self.gate_b).data(),
            f_out,
        );
        Ok(content)
    }
}

/// 1x1 convolution over channels, applied independently at every (t, f).
#[derive(Clone, Debug)]
pub struct PointwiseConv2d {
    pub c_in: usize,
    pub c_out: usize,
    w: ParamId,
    b: ParamId,
}

impl PointwiseConv2d {
    pub fn new(pb: &mut ParamBuilder<'_>, c_in: usize, c_out: usize, zero_init: bool) -> Result<Self> {
        let (w, b) = if zero_init {
            (pb.constant("w", &[c_out, c_in], 0.0)?, pb.constant("b", &[c_out], 0.0)?)
        } else {
            (pb.uniform("w", &[c_out, c_in], c_in)?, pb.uniform("b", &[c_out], c_in)?)
        };
        Ok(Self { c_in, c_out, w, b })
    }

    /// `x: [C_in, N]` flattened; returns `[C_out, N]`.
    pub fn apply(&self, reg: &ParameterRegistry, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() % self.c_in != 0 {
            return Err(Error::shape(
                "PointwiseConv2d",
                format!("{} values for {} channels", x.len(), self.c_in),
            ));
        }
        let n = x.len() / self.c_in;
        let mut y = vec![0.0f32; self.c_out * n];
        for (row, &b) in y.chunks_exact_mut(n.max(1)).zip(reg.get(self.b).data()) {
            row.fill(b);
        }
        gemm(
            self.c_out,
            self.c_in,
            n,
            1.0,
            reg.get(self.w).data(),
            Layout::row_major(self.c_in),
            x,
            Layout::row_major(n),
            1.0,
            &mut y,
            Layout::row_major(n),
        );
        Ok(y)
    }
}
