//! Shoebox room impulse responses by the image-source method, with a single
//! wall reflection coefficient chosen from a target RT60 (Sabine's formula,
//! then calibrated against the T20 of the simulated response), and the
//! Schroeder-integration estimator used for that calibration.

use std::f64::consts::PI;

use rand::Rng;

use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};

pub const SOUND_SPEED: f64 = 343.0;

/// Fractional-delay interpolator length; the kernel is centered, so 40 taps each side.
pub const SINC_TAPS: usize = 81;

pub const RT60_RANGE: (f64, f64) = (0.1, 1.0);

#[derive(Clone, Debug, PartialEq)]
pub struct RoomSpec {
    /// `(Lx, Ly, Lz)` in meters.
    pub dims: [f64; 3],
    pub source: [f64; 3],
    pub mic: [f64; 3],
    pub rt60: f64,
    pub sample_rate: u32,
    pub rir_len: usize,
    pub sound_speed: f64,
}

impl RoomSpec {
    pub fn new(dims: [f64; 3], source: [f64; 3], mic: [f64; 3], rt60: f64) -> Self {
        Self {
            dims,
            source,
            mic,
            rt60,
            sample_rate: 48_000,
            rir_len: 48_000,
            sound_speed: SOUND_SPEED,
        }
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dims;
        2.0 * (x * y + x * z + y * z)
    }

    /// Geometry checks plus the generator's RT60 range.
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidArgument(format!("room dimensions {:?} must be positive", self.dims)));
        }
        for (name, p) in [("source", self.source), ("mic", self.mic)] {
            if p.iter().zip(&self.dims).any(|(&v, &l)| !(v > 0.0 && v < l)) {
                return Err(Error::InvalidArgument(format!(
                    "{name} at {p:?} is not strictly inside the {:?} room",
                    self.dims
                )));
            }
        }
        if !(self.rt60 >= RT60_RANGE.0 && self.rt60 <= RT60_RANGE.1) {
            return Err(Error::InvalidArgument(format!(
                "RT60 {} s outside [{}, {}]",
                self.rt60, RT60_RANGE.0, RT60_RANGE.1
            )));
        }
        if self.sample_rate == 0 || self.rir_len == 0 || !(self.sound_speed > 0.0) {
            return Err(Error::InvalidArgument("sample rate, length and sound speed must be positive".into()));
        }
        Ok(())
    }

    /// Source and mic exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            source: self.mic,
            mic: self.source,
            ..self.clone()
        }
    }

    /// Longest path that still lands inside the response, in meters.
    fn path_budget(&self) -> f64 {
        (self.rir_len + SINC_TAPS / 2) as f64 / self.sample_rate as f64 * self.sound_speed
    }

    /// Image index bound per axis covering [`Self::path_budget`].
    pub fn required_order(&self) -> usize {
        let budget = self.path_budget();
        self.dims
            .iter()
            .map(|&l| (budget / (2.0 * l)).ceil() as usize + 1)
            .max()
            .unwrap_or(1)
    }

    /// Random room of plausible size with both positions at least 0.5 m from every wall.
    pub fn random(rng: &mut impl Rng, rt60: f64) -> Self {
        let dims = [rng.gen_range(3.0..10.0), rng.gen_range(3.0..8.0), rng.gen_range(2.5..4.5)];
        let mut point = || -> [f64; 3] {
            let mut p = [0.0; 3];
            for (v, &l) in p.iter_mut().zip(&dims) {
                *v = rng.gen_range(0.5..l - 0.5);
            }
            p
        };
        let (source, mic) = (point(), point());
        Self::new(dims, source, mic, rt60)
    }
}

/// Uniform wall reflection coefficient giving the target RT60 under Sabine's formula.
pub fn rt60_to_reflection(room: &RoomSpec) -> Result<f64> {
    if !(room.rt60 > 0.0 && room.rt60.is_finite()) {
        return Err(Error::InvalidArgument(format!("RT60 must be positive, got {}", room.rt60)));
    }
    let alpha = 0.161 * room.volume() / (room.surface() * room.rt60);
    if (alpha - 1.0).abs() <= 1e-12 {
        return Ok(0.0);
    }
    if alpha > 1.0 {
        return Err(Error::InfeasibleRt60(format!(
            "RT60 {} s needs absorption {alpha:.3} > 1 in a {:?} m room",
            room.rt60, room.dims
        )));
    }
    Ok((1.0 - alpha).sqrt())
}

/// Add `amp * sinc(n - tau)` under an 81-tap Hann window, centered on `tau`.
fn add_fractional_impulse(h: &mut [f64], tau: f64, amp: f64) {
    let half = (SINC_TAPS / 2) as isize;
    let center = tau.round() as isize;
    let f = tau - center as f64;
    let width = half as f64 + 1.0;
    // sin(pi (k - f)) = -(-1)^k sin(pi f); the window phase advances by pi / width per tap
    let s = (PI * f).sin();
    let step = PI / width;
    let (sin_step, cos_step) = step.sin_cos();
    let (mut wsin, mut wcos) = (step * (-half as f64 - f)).sin_cos();
    for k in -half..=half {
        let n = center + k;
        if n >= 0 && (n as usize) < h.len() {
            let t = k as f64 - f;
            let sinc = if t.abs() < 1e-12 {
                1.0
            } else {
                let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
                sign * s / (PI * t)
            };
            let w = 0.5 * (1.0 + wcos);
            h[n as usize] += amp * w * sinc;
        }
        let (ns, nc) = (wsin * cos_step + wcos * sin_step, wcos * cos_step - wsin * sin_step);
        wsin = ns;
        wcos = nc;
    }
}

/// Image-source impulse response of length `room.rir_len`.
///
/// Each image contributes `beta^reflections / (4 pi d)` at delay `d / c`.
/// `max_order` bounds `|n|` per axis; `None` derives it from the response length.
pub fn simulate_rir(room: &RoomSpec, beta: f64, max_order: Option<usize>) -> Result<AudioBuffer> {
    room.validate_geometry()?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("reflection coefficient {beta} outside [0, 1]")));
    }
    let order = max_order.unwrap_or_else(|| room.required_order()) as i64;
    let fs = room.sample_rate as f64;
    let budget = room.path_budget();
    let mut h = vec![0.0f64; room.rir_len];
    for px in 0..2i64 {
        for py in 0..2i64 {
            for pz in 0..2i64 {
                let p = [px, py, pz];
                for nx in -order..=order {
                    let dx = image_offset(room, 0, p[0], nx);
                    if dx.abs() > budget {
                        continue;
                    }
                    for ny in -order..=order {
                        let dy = image_offset(room, 1, p[1], ny);
                        if dx.hypot(dy) > budget {
                            continue;
                        }
                        for nz in -order..=order {
                            let refl = (nx - px).abs() + nx.abs() + (ny - py).abs() + ny.abs() + (nz - pz).abs() + nz.abs();
                            if beta == 0.0 && refl > 0 {
                                continue;
                            }
                            let dz = image_offset(room, 2, p[2], nz);
                            let d = (dx * dx + dy * dy + dz * dz).sqrt();
                            if d > budget {
                                continue;
                            }
                            let amp = beta.powi(refl as i32) / (4.0 * PI * d.max(1e-9));
                            add_fractional_impulse(&mut h, d / room.sound_speed * fs, amp);
                        }
                    }
                }
            }
        }
    }
    AudioBuffer::new(h.into_iter().map(|v| v as f32).collect(), room.sample_rate)
}

/// Image source coordinate minus mic coordinate along one axis.
fn image_offset(room: &RoomSpec, axis: usize, p: i64, n: i64) -> f64 {
    let s = room.source[axis];
    let img = (1 - 2 * p) as f64 * s + 2.0 * n as f64 * room.dims[axis];
    img - room.mic[axis]
}

impl RoomSpec {
    fn validate_geometry(&self) -> Result<()> {
        let mut probe = self.clone();
        probe.rt60 = RT60_RANGE.0;
        probe.validate()
    }
}

/// Fixed-point iterations of [`generate_rir_detailed`].
pub const CALIBRATION_STEPS: usize = 4;
/// Relative T20 error at which calibration stops.
pub const CALIBRATION_TOL: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedRir {
    pub rir: AudioBuffer,
    /// Reflection coefficient actually used.
    pub beta: f64,
    /// Starting point from Sabine's formula.
    pub sabine_beta: f64,
    /// T20 of `rir`, when the decay is long enough to measure.
    pub t20: Option<f64>,
}

/// Response for `room.rt60`.
///
/// Sabine's formula alone overshoots on a shoebox image lattice (grazing
/// paths between parallel walls decay slowly), so `ln beta` is rescaled by
/// `t20 / target` on the simulated response until T20 lands within
/// [`CALIBRATION_TOL`] of the target.
pub fn generate_rir_detailed(room: &RoomSpec) -> Result<GeneratedRir> {
    room.validate()?;
    let sabine_beta = rt60_to_reflection(room)?;
    let mut beta = sabine_beta;
    let mut rir = simulate_rir(room, beta, None)?;
    let mut t20 = estimate_rt60(&rir).ok();
    for _ in 0..CALIBRATION_STEPS {
        let Some(t) = t20 else { break };
        if beta <= 0.0 || (t - room.rt60).abs() <= CALIBRATION_TOL * room.rt60 {
            break;
        }
        beta = (beta.ln() * t / room.rt60).exp().min(1.0 - 1e-9);
        rir = simulate_rir(room, beta, None)?;
        t20 = estimate_rt60(&rir).ok();
    }
    Ok(GeneratedRir {
        rir,
        beta,
        sabine_beta,
        t20,
    })
}

pub fn generate_rir(room: &RoomSpec) -> Result<AudioBuffer> {
    Ok(generate_rir_detailed(room)?.rir)
}

/// Schroeder energy decay curve in dB relative to total energy.
pub fn schroeder_db(rir: &[f32]) -> Result<Vec<f64>> {
    let mut acc = 0.0f64;
    let mut edc: Vec<f64> = rir
        .iter()
        .rev()
        .map(|&v| {
            acc += v as f64 * v as f64;
            acc
        })
        .collect();
    edc.reverse();
    let total = edc.first().copied().unwrap_or(0.0);
    if !(total > 0.0) {
        return Err(Error::Silent("impulse response has no energy".into()));
    }
    Ok(edc.into_iter().map(|e| 10.0 * (e / total).log10()).collect())
}

/// T20 estimate: least-squares line through the Schroeder curve between
/// -5 and -25 dB, extrapolated to -60 dB.
///
/// When the two crossings are fewer than 10 samples apart the decay is too
/// fast to fit, and the crossing times are extrapolated directly.
pub fn estimate_rt60(rir: &AudioBuffer) -> Result<f64> {
    if rir.len() < 10 {
        return Err(Error::DecayTooShort(format!("{} samples", rir.len())));
    }
    let edc = schroeder_db(&rir.samples)?;
    let fs = rir.sample_rate as f64;
    let start = edc.iter().position(|&v| v <= -5.0);
    let end = edc.iter().position(|&v| v <= -25.0);
    let (start, end) = match (start, end) {
        (Some(s), Some(e)) => (s, e),
        _ => {
            return Err(Error::DecayTooShort(format!(
                "energy decay never reaches -25 dB within {} samples",
                rir.len()
            )))
        }
    };
    if end - start < 10 {
        return Ok(3.0 * (end - start) as f64 / fs);
    }
    let n = (end - start) as f64;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for (i, &y) in edc[start..end].iter().enumerate() {
        let t = (start + i) as f64 / fs;
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    let slope = (n * sty - st * sy) / (n * stt - st * st);
    if !(slope < 0.0) {
        return Err(Error::DecayTooShort("energy decay curve is not decreasing".into()));
    }
    Ok(-60.0 / slope)
}
