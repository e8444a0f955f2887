//! Frame-by-frame inference with per-layer caches.

use crate::dsp::{compress_bin, FramePlan};
use crate::error::{Error, Result};
use crate::linalg::sigmoid;
use crate::model::stage::StageState;
use crate::model::{Conditioning, Model};

/// Streaming state for one utterance. Each call to [`push`](Self::push)
/// consumes one hop of input and returns one hop of output delayed by
/// [`latency`](Self::latency) samples.
#[derive(Clone)]
pub struct StreamSession<'m> {
    model: &'m Model,
    cond: Conditioning,
    mag: StageState,
    com: StageState,
    prev: Vec<f32>,
    tail: Vec<f64>,
    plan: FramePlan,
    gain: f64,
}

impl<'m> StreamSession<'m> {
    pub fn new(model: &'m Model, cond: Conditioning) -> Result<Self> {
        let cfg = model.config().stft;
        let (mag, com) = model.stages();
        let gain = cfg
            .cola_gain()
            .ok_or_else(|| Error::NotCola("model STFT is not COLA".into()))?;
        Ok(Self {
            model,
            cond,
            mag: mag.new_state()?,
            com: com.new_state()?,
            prev: vec![0.0; cfg.win_len - cfg.hop_len],
            tail: vec![0.0; cfg.win_len - cfg.hop_len],
            plan: FramePlan::new(cfg)?,
            gain,
        })
    }

    pub fn hop(&self) -> usize {
        self.model.config().stft.hop_len
    }

    pub fn latency(&self) -> usize {
        self.model.latency_samples()
    }

    pub fn conditioning(&self) -> &Conditioning {
        &self.cond
    }

    /// Back to the state right after creation; enrollment features are kept.
    pub fn reset(&mut self) {
        self.mag.reset();
        self.com.reset();
        self.prev.fill(0.0);
        self.tail.fill(0.0);
    }

    pub fn push(&mut self, frame: &[f32]) -> Result<Vec<f32>> {
        let cfg = self.model.config();
        let hop = cfg.stft.hop_len;
        if frame.len() != hop {
            return Err(Error::InvalidArgument(format!(
                "streaming frames must have {hop} samples, got {}",
                frame.len()
            )));
        }
        if frame.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("streaming input frame".into()));
        }
        let mut window = Vec::with_capacity(cfg.stft.win_len);
        window.extend_from_slice(&self.prev);
        window.extend_from_slice(frame);
        // hop == win - hop for the model STFT, so the newest hop becomes the history.
        let keep = self.prev.len();
        self.prev.copy_from_slice(&window[window.len() - keep..]);

        let bins = cfg.stft.bins();
        let (mut re, mut im) = (vec![0.0f32; bins], vec![0.0f32; bins]);
        self.plan.analyze(&window, &mut re, &mut im);

        let c = cfg.compression;
        let mag_c: Vec<f32> = re.iter().zip(&im).map(|(&r, &i)| compress_bin(r, i, c).0).collect();
        let reg = self.model.registry();
        let (mag_net, com_net) = self.model.stages();
        let logits = mag_net.step(reg, &mag_c, &self.cond.mag, &mut self.mag)?;
        let mask: Vec<f32> = logits[0].iter().map(|&v| sigmoid(v)).collect();
        let s1_re: Vec<f32> = re.iter().zip(&mask).map(|(a, m)| a * m).collect();
        let s1_im: Vec<f32> = im.iter().zip(&mask).map(|(a, m)| a * m).collect();

        let mut x = vec![0.0f32; 4 * bins];
        for k in 0..bins {
            let (_, a, b) = compress_bin(re[k], im[k], c);
            let (_, p, q) = compress_bin(s1_re[k], s1_im[k], c);
            x[k] = a;
            x[bins + k] = b;
            x[2 * bins + k] = p;
            x[3 * bins + k] = q;
        }
        let res = com_net.step(reg, &x, &self.cond.com, &mut self.com)?;
        let est_re: Vec<f32> = s1_re.iter().zip(&res[0]).map(|(a, b)| a + b).collect();
        let est_im: Vec<f32> = s1_im.iter().zip(&res[1]).map(|(a, b)| a + b).collect();

        let y = self.plan.synthesize(&est_re, &est_im);
        let half = self.tail.len();
        let out: Vec<f32> = (0..hop)
            .map(|j| ((self.tail[j] + y[j]) / self.gain) as f32)
            .collect();
        self.tail.copy_from_slice(&y[y.len() - half..]);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("streaming output".into()));
        }
        Ok(out)
    }

    /// Push a whole signal hop by hop; a trailing partial hop is zero-padded.
    pub fn process(&mut self, samples: &[f32]) -> Result<Vec<f32>> {
        let hop = self.hop();
        let mut out = Vec::with_capacity(samples.len().div_ceil(hop) * hop);
        for chunk in samples.chunks(hop) {
            if chunk.len() == hop {
                out.extend(self.push(chunk)?);
            } else {
                let mut padded = chunk.to_vec();
                padded.resize(hop, 0.0);
                out.extend(self.push(&padded)?);
            }
        }
        Ok(out)
    }
}
