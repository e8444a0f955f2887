//! Acceptance run: one pass/fail line per criterion, nonzero exit if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teapse::bench::{bench_rtf, BenchMode};
use teapse::cli::enhance_streaming;
use teapse::datagen::{estimate_rt60, generate_rir_detailed, rt60_to_reflection, simulate_rir, RoomSpec, SOUND_SPEED};
use teapse::dsp::{AudioBuffer, StftConfig, MODEL_SAMPLE_RATE};
use teapse::losses::{composite_loss, fd_gradient, si_snr, si_snr_grad, spectral_terms, Composite, MultiResConfig};
use teapse::model::accounting::{dense_macs, gconv_macs, lstm_macs, trgconv_macs};
use teapse::model::{build_model, HeadInit, ModelConfig, SpeakerEmbedding};
use teapse::nn::Group;
use teapse::schedule::{lr_trace, phase_apply, PhaseId, PhaseSpec};

const REPORTED_PARAMS: f64 = 22.24e6;
const REPORTED_MACS: f64 = 19.66e9;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn noise(n: usize, seed: u64, amp: f32) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AudioBuffer::new((0..n).map(|_| rng.gen_range(-amp..amp)).collect(), MODEL_SAMPLE_RATE).unwrap()
}

fn embedding(dim: usize, seed: u64) -> SpeakerEmbedding {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SpeakerEmbedding::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_heads() -> ModelConfig {
    ModelConfig {
        com_head_init: HeadInit::Random,
        ..ModelConfig::default()
    }
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_teapse"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).trim().to_string());
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn value<T: std::str::FromStr>(report: &str, key: &str) -> Result<T, String> {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format!("`{key}` missing from report"))
}

fn structural() -> Outcome {
    let t0 = Instant::now();
    let report = cli(&["stats", "params"])?;
    let secs = t0.elapsed().as_secs_f64();
    let params: f64 = value(&report, "params")?;
    let rel = params / REPORTED_PARAMS - 1.0;
    let groups: Vec<String> = report
        .lines()
        .filter_map(|l| l.strip_prefix("group."))
        .map(String::from)
        .collect();
    check(groups.len() == Group::ALL.len(), "per-group breakdown incomplete")?;
    check(rel.abs() <= 0.20, format!("params {params} is {:+.1}% from 22.24M", rel * 100.0))?;
    check(secs < 5.0, format!("took {secs:.2} s"))?;
    Ok(format!("params={params} ({:+.1}%), {secs:.2} s, {}", rel * 100.0, groups.join(" ")))
}

fn compute() -> Outcome {
    let report = cli(&["stats", "macs"])?;
    let macs: f64 = value(&report, "macs_per_second")?;
    let rel = macs / REPORTED_MACS - 1.0;
    check(dense_macs(512, 512) as f64 * 100.0 == 26.2144e6, "dense closed form")?;
    check(lstm_macs(512, 512) == 4 * 512 * (512 + 512), "lstm closed form")?;
    check(gconv_macs(64, 64, 2, 3, 61) == 2 * 64 * 64 * 6 * 61, "gconv closed form")?;
    check(trgconv_macs(128, 64, 2, 3, 8) == 2 * 128 * 64 * 6 * 8, "trgconv closed form")?;
    check(rel.abs() <= 0.20, format!("{macs:.4e} MAC/s is {:+.1}% from 19.66G", rel * 100.0))?;
    Ok(format!("{:.3}G MAC/s ({:+.1}%), closed forms exact", macs / 1e9, rel * 100.0))
}

fn streaming_equivalence() -> Outcome {
    let t0 = Instant::now();
    let model = build_model(&random_heads(), 11).map_err(|e| e.to_string())?;
    let noisy = noise(5 * MODEL_SAMPLE_RATE as usize, 12, 0.5);
    let enroll = noise(2 * MODEL_SAMPLE_RATE as usize, 13, 0.3);
    let e = embedding(192, 14);
    let off = model.enhance_offline(&noisy, &enroll, &e).map_err(|e| e.to_string())?;
    let st = enhance_streaming(&model, &noisy, &enroll, &e).map_err(|e| e.to_string())?;
    let diff = off.samples.iter().zip(&st.samples).fold(0.0f32, |m, (a, b)| m.max((a - b).abs()));
    let secs = t0.elapsed().as_secs_f64();
    check(off.len() == st.len(), "length mismatch")?;
    check(diff <= 1e-4, format!("max abs diff {diff:.3e}"))?;
    check(secs < 60.0, format!("took {secs:.1} s"))?;
    Ok(format!("max abs diff {diff:.2e} over 5 s, {secs:.1} s"))
}

fn causality() -> Outcome {
    let model = build_model(&random_heads(), 21).map_err(|e| e.to_string())?;
    let n = 48 * 480;
    let x = noise(n, 22, 0.5);
    let enroll = noise(MODEL_SAMPLE_RATE as usize, 23, 0.3);
    let mut session = model.stream(&enroll, &embedding(192, 24)).map_err(|e| e.to_string())?;
    let (hop, lat) = (session.hop(), session.latency());
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let mut ts: Vec<usize> = (0..10).map(|_| rng.gen_range(lat..n - 1)).collect();
    ts.sort();

    // snapshot the session at every hop boundary so each probe resumes from its block
    let mut base = Vec::with_capacity(n);
    let mut snapshots = Vec::new();
    for block in x.samples.chunks_exact(hop) {
        snapshots.push(session.clone());
        base.extend(session.push(block).map_err(|e| e.to_string())?);
    }
    for &t in &ts {
        let mut y = x.samples.clone();
        for v in &mut y[t + 1..] {
            *v += rng.gen_range(-0.5..0.5);
        }
        let start = (t + 1) / hop;
        let mut probe = snapshots[start].clone();
        let mut out = base[..start * hop].to_vec();
        for block in y[start * hop..].chunks_exact(hop) {
            out.extend(probe.push(block).map_err(|e| e.to_string())?);
        }
        let first = out.iter().zip(&base).position(|(a, b)| a != b);
        let first = first.ok_or_else(|| format!("t={t}: perturbation had no effect at all"))?;
        check(first > t - lat, format!("t={t}: streaming output sample {first} <= t - {lat} changed"))?;
    }
    Ok(format!("streaming outputs <= t - {lat} bitwise unchanged at t = {ts:?}"))
}

fn loss_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let s: Vec<f64> = (0..4800).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let est: Vec<f64> = s.iter().map(|v| v + rng.gen_range(-0.4..0.4)).collect();
    let base = si_snr(&s, &est).map_err(|e| e.to_string())?;
    let mut drift = 0.0f64;
    for alpha in [0.1, 1.0, 10.0] {
        let scaled: Vec<f64> = est.iter().map(|v| alpha * v).collect();
        drift = drift.max((si_snr(&s, &scaled).unwrap() - base).abs());
    }
    check(drift <= 1e-6, format!("SI-SNR drift {drift:.2e} dB"))?;

    let s64 = &s[..64];
    let e64 = &est[..64];
    let g = si_snr_grad(s64, e64).map_err(|e| e.to_string())?;
    let fd = fd_gradient(|x| -si_snr(s64, x).unwrap(), e64, 1e-4).map_err(|e| e.to_string())?;
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let grad_err = g.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
    check(grad_err <= 1e-3, format!("gradient rel err {grad_err:.2e}"))?;

    let sf: Vec<f32> = s.iter().map(|&v| v as f32 * 0.3).collect();
    let ef: Vec<f32> = est.iter().map(|&v| v as f32 * 0.3).collect();
    let louder: Vec<f32> = sf.iter().map(|v| 1.7 * v).collect();
    for cfg in StftConfig::multi_resolution() {
        let t = spectral_terms(&sf, &louder, &cfg, 0.3).map_err(|e| e.to_string())?;
        check(t.asym == 0.0, format!("asym {} with |S_hat| >= |S| at fft {}", t.asym, cfg.fft_len))?;
    }

    let multi = MultiResConfig::default();
    let l1 = composite_loss(&sf, &ef, &multi, Composite::L1, 0.3).map_err(|e| e.to_string())?;
    let l2 = composite_loss(&sf, &ef, &multi, Composite::L2, 0.3).map_err(|e| e.to_string())?;
    let mut singles = 0.0;
    for cfg in multi.scales() {
        let one = MultiResConfig::new(vec![*cfg]).unwrap();
        singles += composite_loss(&sf, &ef, &one, Composite::L2, 0.3).unwrap().spectral();
    }
    check(l2.spectral() == singles / multi.len() as f64, "multi-resolution is not the mean of scales")?;
    check(l2.composite == -l2.si_snr + l2.spectral(), "composite is not -SI-SNR + spectral")?;
    let phase: f64 = l1.scales.iter().map(|t| t.pha).sum::<f64>() / multi.len() as f64;
    let gap = l2.composite - l1.composite;
    check((gap - phase).abs() <= 1e-12 * phase.max(1.0), format!("L2 - L1 = {gap} but phase terms = {phase}"))?;
    Ok(format!("drift {drift:.1e} dB, grad rel err {grad_err:.1e}, asym 0, mean-of-scales exact, L2-L1 = phase"))
}

fn rir_fidelity() -> Outcome {
    let dims = [6.0, 5.0, 3.0];
    let (src, mic) = ([2.0, 3.5, 1.7], [4.3, 1.6, 1.2]);
    let mut parts = Vec::new();
    for target in [0.2, 0.5, 0.9] {
        let room = RoomSpec::new(dims, src, mic, target);
        let sabine = rt60_to_reflection(&room).map_err(|e| e.to_string())?;
        let plain = estimate_rt60(&simulate_rir(&room, sabine, None).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let g = generate_rir_detailed(&room).map_err(|e| e.to_string())?;
        let t20 = estimate_rt60(&g.rir).map_err(|e| e.to_string())?;
        check(
            (t20 / target - 1.0).abs() <= 0.20,
            format!("target {target}: T20 {t20:.3} (Sabine-only {plain:.3})"),
        )?;
        parts.push(format!("{target}->{t20:.3} (Sabine-only {plain:.3})"));
    }

    // 280-sample delay puts the direct path on an integer tap
    let d = 280.0 * SOUND_SPEED / MODEL_SAMPLE_RATE as f64;
    let room = RoomSpec::new(dims, [2.0, 2.5, 1.5], [2.0 + d, 2.5, 1.5], 0.5);
    let h = simulate_rir(&room, 0.0, None).map_err(|e| e.to_string())?;
    let nonzero: Vec<usize> = (0..h.len()).filter(|&i| h.samples[i] != 0.0).collect();
    let want = 1.0 / (4.0 * std::f64::consts::PI * d);
    check(nonzero == [280], format!("anechoic taps at {nonzero:?}"))?;
    check(((h.samples[280] as f64) - want).abs() <= 1e-6 * want, format!("amplitude {} vs {want}", h.samples[280]))?;

    let room = RoomSpec::new(dims, src, mic, 0.5);
    let beta = rt60_to_reflection(&room).map_err(|e| e.to_string())?;
    let a = simulate_rir(&room, beta, None).map_err(|e| e.to_string())?;
    let b = simulate_rir(&room.swapped(), beta, None).map_err(|e| e.to_string())?;
    let recip = a.samples.iter().zip(&b.samples).fold(0.0f32, |m, (x, y)| m.max((x - y).abs()));
    check(recip <= 1e-6, format!("reciprocity error {recip:.2e}"))?;
    Ok(format!("T20 {}; direct path 1/(4 pi d) exact; reciprocity {recip:.1e}", parts.join(", ")))
}

fn scheduler() -> Outcome {
    let trace = lr_trace(&[1.0, 0.9, 0.95, 0.92]).map_err(|e| e.to_string())?;
    check(trace == [1e-3, 1e-3, 1e-3, 5e-4], format!("trace {trace:?}"))?;
    let report = cli(&["schedule", "trace", "--losses", "1.0,0.9,0.95,0.92"])?;
    check(report.trim() == "lr_trace=1e-3,1e-3,1e-3,5e-4", format!("CLI printed {report:?}"))?;

    let mut m = build_model(&ModelConfig::default(), 0).map_err(|e| e.to_string())?;
    phase_apply(&PhaseSpec::get(PhaseId::P2), m.registry_mut()).map_err(|e| e.to_string())?;
    let mut frozen: Vec<Group> = m.registry().entries().filter(|e| !e.trainable).map(|e| e.group).collect();
    frozen.sort();
    frozen.dedup();
    let names: Vec<&str> = frozen.iter().map(|g| g.name()).collect();
    // the stage-1 fusion projection belongs to MAG-Net's conditioning path
    check(names == ["mag_net", "spk_enc_mag", "fusion_mag"], format!("P2 froze {names:?}"))?;
    Ok(format!("lr trace {trace:?}; P2 frozen = {}", names.join(",")))
}

fn rtf() -> Outcome {
    let model = build_model(&ModelConfig::default(), 0).map_err(|e| e.to_string())?;
    let st = bench_rtf(&model, 5.0, BenchMode::Streaming, 1).map_err(|e| e.to_string())?;
    let off = bench_rtf(&model, 5.0, BenchMode::Offline, 1).map_err(|e| e.to_string())?;
    check(st.rtf_mean.is_finite() && st.rtf_mean > 0.0, format!("rtf_mean {}", st.rtf_mean))?;
    check(st.frames == 450, format!("frames {}", st.frames))?;
    let ratio = st.rtf_mean / off.rtf_mean;
    let desk = if st.rtf_mean < 1.0 { "met" } else { "missed on this machine" };
    Ok(format!(
        "streaming rtf_mean={:.3} rtf_p95={:.3} frames={}; offline rtf={:.3} (ratio {ratio:.2}); desk target < 1.0 {desk}",
        st.rtf_mean, st.rtf_p95, st.frames, off.rtf_mean
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    teapse::io::write_wav(dir.path().join("noisy.wav").as_path(), &noise(MODEL_SAMPLE_RATE as usize, 41, 0.3), teapse::io::WavEncoding::Float32)
        .map_err(|e| e.to_string())?;
    teapse::io::write_wav(dir.path().join("enroll.wav").as_path(), &noise(MODEL_SAMPLE_RATE as usize, 42, 0.3), teapse::io::WavEncoding::Float32)
        .map_err(|e| e.to_string())?;
    let (noisy, enroll) = (p("noisy.wav"), p("enroll.wav"));
    let mut outs = Vec::new();
    for (i, streaming) in [(0, false), (1, false), (2, true), (3, true)] {
        let out = p(&format!("out{i}.wav"));
        let mut args = vec!["enhance", "--noisy", &noisy, "--enroll", &enroll, "--embedding", "zero", "--out", &out, "--seed", "5"];
        if streaming {
            args.push("--streaming");
        }
        cli(&args)?;
        outs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    check(outs[0] == outs[1], "offline enhancement differs between identical runs")?;
    check(outs[2] == outs[3], "streaming enhancement differs between identical runs")?;
    Ok("identical CLI enhance runs give bitwise-identical files (offline and streaming); DNSMOS/MOS/WAcc out of scope".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("structural reproduction", structural),
        ("compute accounting", compute),
        ("streaming equivalence", streaming_equivalence),
        ("causality", causality),
        ("loss suite", loss_suite),
        ("RIR fidelity", rir_fidelity),
        ("scheduler", scheduler),
        ("RTF measured and reported", rtf),
        ("non-reproducible claims declared", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
