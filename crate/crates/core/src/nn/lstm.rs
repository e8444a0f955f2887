//! Unidirectional and bidirectional LSTMs over `[T, D]` sequences.
//!
//! Gate order in the stacked weights is input, forget, cell, output.

use crate::error::{Error, Result};
use crate::linalg::{gemm, matvec_acc, sigmoid, Layout};
use crate::nn::params::{ParamBuilder, ParamId, ParameterRegistry};

#[derive(Clone, Debug)]
pub struct Lstm {
    pub input: usize,
    pub hidden: usize,
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f32>,
    pub c: Vec<f32>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }

    pub fn reset(&mut self) {
        self.h.fill(0.0);
        self.c.fill(0.0);
    }
}

fn cell_update(gates: &[f32], state: &mut LstmState) {
    let h = state.h.len();
    for j in 0..h {
        let i = sigmoid(gates[j]);
        let f = sigmoid(gates[h + j]);
        let g = gates[2 * h + j].tanh();
        let o = sigmoid(gates[3 * h + j]);
        let c = f * state.c[j] + i * g;
        state.c[j] = c;
        state.h[j] = o * c.tanh();
    }
}

impl Lstm {
    pub fn new(pb: &mut ParamBuilder<'_>, input: usize, hidden: usize) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::Config("LSTM dims must be positive".into()));
        }
        Ok(Self {
            input,
            hidden,
            w_ih: pb.uniform("w_ih", &[4 * hidden, input], hidden)?,
            w_hh: pb.uniform("w_hh", &[4 * hidden, hidden], hidden)?,
            bias: pb.uniform("bias", &[4 * hidden], hidden)?,
        })
    }

    pub fn param_count(&self) -> usize {
        4 * self.hidden * (self.input + self.hidden + 1)
    }

    fn check_rows(&self, x: &[f32]) -> Result<usize> {
        if x.len() % self.input != 0 {
            return Err(Error::shape(
                "Lstm",
                format!("{} values are not whole rows of {}", x.len(), self.input),
            ));
        }
        Ok(x.len() / self.input)
    }

    /// `[T, D]` to `[T, H]`, starting from `state` and leaving the final state in it.
    pub fn forward_with(&self, reg: &ParameterRegistry, x: &[f32], reverse: bool, state: &mut LstmState) -> Result<Vec<f32>> {
        let t_len = self.check_rows(x)?;
        let g4 = 4 * self.hidden;
        let bias = reg.get(self.bias).data();
        let mut pre = Vec::with_capacity(t_len * g4);
        for _ in 0..t_len {
            pre.extend_from_slice(bias);
        }
        gemm(
            t_len,
            self.input,
            g4,
            1.0,
            x,
            Layout::row_major(self.input),
            reg.get(self.w_ih).data(),
            Layout::transposed(self.input),
            1.0,
            &mut pre,
            Layout::row_major(g4),
        );
        let w_hh = reg.get(self.w_hh).data();
        let mut y = vec![0.0f32; t_len * self.hidden];
        for k in 0..t_len {
            let t = if reverse { t_len - 1 - k } else { k };
            let gates = &mut pre[t * g4..(t + 1) * g4];
            matvec_acc(w_hh, &state.h, gates);
            cell_update(gates, state);
            y[t * self.hidden..(t + 1) * self.hidden].copy_from_slice(&state.h);
        }
        Ok(y)
    }

    pub fn forward(&self, reg: &ParameterRegistry, x: &[f32]) -> Result<Vec<f32>> {
        let mut st = LstmState::zeros(self.hidden);
        self.forward_with(reg, x, false, &mut st)
    }

    pub fn step(&self, reg: &ParameterRegistry, x: &[f32], state: &mut LstmState) -> Result<Vec<f32>> {
        if x.len() != self.input {
            return Err(Error::shape("Lstm::step", format!("expected {} inputs, got {}", self.input, x.len())));
        }
        let mut gates = reg.get(self.bias).data().to_vec();
        matvec_acc(reg.get(self.w_ih).data(), x, &mut gates);
        matvec_acc(reg.get(self.w_hh).data(), &state.h, &mut gates);
        cell_update(&gates, state);
        Ok(state.h.clone())
    }
}

/// Forward and backward LSTMs with outputs concatenated per frame.
#[derive(Clone, Debug)]
pub struct Blstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

impl Blstm {
    /// `hidden_per_dir` units each way; output width is twice that.
    pub fn new(pb: &mut ParamBuilder<'_>, input: usize, hidden_per_dir: usize) -> Result<Self> {
        Ok(Self {
            fwd: Lstm::new(&mut pb.scope("fwd"), input, hidden_per_dir)?,
            bwd: Lstm::new(&mut pb.scope("bwd"), input, hidden_per_dir)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }

    pub fn param_count(&self) -> usize {
        self.fwd.param_count() + self.bwd.param_count()
    }

    pub fn forward(&self, reg: &ParameterRegistry, x: &[f32]) -> Result<Vec<f32>> {
        let f = self.fwd.forward_with(reg, x, false, &mut LstmState::zeros(self.fwd.hidden))?;
        let b = self.bwd.forward_with(reg, x, true, &mut LstmState::zeros(self.bwd.hidden))?;
        let (hf, hb) = (self.fwd.hidden, self.bwd.hidden);
        let t_len = f.len() / hf;
        let mut y = Vec::with_capacity(t_len * (hf + hb));
        for t in 0..t_len {
            y.extend_from_slice(&f[t * hf..(t + 1) * hf]);
            y.extend_from_slice(&b[t * hb..(t + 1) * hb]);
        }
        Ok(y)
    }

    /// Always fails: the backward pass needs future frames.
    pub fn step(&self, _reg: &ParameterRegistry, _x: &[f32], _state: &mut LstmState) -> Result<Vec<f32>> {
        Err(Error::NonCausal("a bidirectional LSTM cannot run frame by frame".into()))
    }
}
