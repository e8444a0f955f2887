use crate::error::{Error, Result};
use crate::linalg::{gemm, matvec_acc, Layout};
use crate::nn::params::{ParamBuilder, ParamId, ParameterRegistry};

/// Affine map `y = W x + b` applied to each row of a `[T, in]` matrix.
#[derive(Clone, Debug)]
pub struct Dense {
    pub d_in: usize,
    pub d_out: usize,
    w: ParamId,
    b: ParamId,
}

impl Dense {
    pub fn new(pb: &mut ParamBuilder<'_>, d_in: usize, d_out: usize) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::Config("dense dims must be positive".into()));
        }
        Ok(Self {
            d_in,
            d_out,
            w: pb.uniform("w", &[d_out, d_in], d_in)?,
            b: pb.uniform("b", &[d_out], d_in)?,
        })
    }

    pub fn param_count(&self) -> usize {
        self.d_in * self.d_out + self.d_out
    }

    /// `[T, in]` rows to `[T, out]` rows.
    pub fn forward_rows(&self, reg: &ParameterRegistry, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() % self.d_in != 0 {
            return Err(Error::shape(
                "Dense",
                format!("{} values are not whole rows of {}", x.len(), self.d_in),
            ));
        }
        let t = x.len() / self.d_in;
        let b = reg.get(self.b).data();
        let mut y = Vec::with_capacity(t * self.d_out);
        for _ in 0..t {
            y.extend_from_slice(b);
        }
        gemm(
            t,
            self.d_in,
            self.d_out,
            1.0,
            x,
            Layout::row_major(self.d_in),
            reg.get(self.w).data(),
            Layout::transposed(self.d_in),
            1.0,
            &mut y,
            Layout::row_major(self.d_out),
        );
        Ok(y)
    }

    pub fn step(&self, reg: &ParameterRegistry, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() != self.d_in {
            return Err(Error::shape("Dense::step", format!("expected {} inputs, got {}", self.d_in, x.len())));
        }
        let mut y = reg.get(self.b).data().to_vec();
        matvec_acc(reg.get(self.w).data(), x, &mut y);
        Ok(y)
    }
}
