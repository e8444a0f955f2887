//! Layer primitives. Every layer stores only [`params::ParamId`] handles, and
//! its offline `forward` and streaming `step` read the same registry entries.

pub mod conv;
pub mod dense;
pub mod lstm;
pub mod norm;
pub mod params;
pub mod stcm;

pub use conv::{ConvHistory, GatedConv2d, GatedConvTranspose2d, PointwiseConv2d, TransposeCarry};
pub use dense::Dense;
pub use lstm::{Blstm, Lstm, LstmState};
pub use norm::{ClnState, CumulativeLayerNorm, PRelu};
pub use params::{Group, ParamBuilder, ParamEntry, ParamId, ParameterRegistry, Stage};
pub use stcm::{DilatedConv1d, DilatedHistory, Stcm, StcmState};
