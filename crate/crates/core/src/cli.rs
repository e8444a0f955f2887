//! Command-line surface. The `teapse` binary only parses arguments and
//! formats errors; every command runs through [`run`].

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bench::{bench_rtf, BenchMode};
use crate::datagen::{generate_rir_detailed, parse_manifest, synth_example, MixtureRecipe, RoomSpec};
use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use crate::io::{load_weights, read_wav, save_weights, write_wav, RunConfig, WavEncoding};
use crate::losses::{composite_loss, Composite, MultiResConfig};
use crate::model::{build_model, count_macs, count_params, param_breakdown, Model, ModelConfig, SpeakerEmbedding};
use crate::nn::Group;
use crate::schedule::{lr_trace, PhaseId, PhaseSpec};

#[derive(Debug, Parser)]
#[command(name = "teapse", version, about = "Two-stage personalized speech enhancement toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance a noisy recording for the enrolled speaker.
    Enhance(EnhanceArgs),
    /// Room impulse responses.
    #[command(subcommand)]
    Rir(RirCommand),
    /// Synthesize training mixtures from a manifest.
    Mix(MixArgs),
    /// Parameter and compute accounting.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Evaluate training objectives between two recordings.
    #[command(subcommand)]
    Loss(LossCommand),
    /// Real-time-factor benchmark.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Training-schedule state machines.
    #[command(subcommand)]
    Schedule(ScheduleCommand),
    /// Weight files.
    #[command(subcommand)]
    Weights(WeightsCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Encoding {
    Pcm16,
    Float32,
}

impl From<Encoding> for WavEncoding {
    fn from(e: Encoding) -> Self {
        match e {
            Encoding::Pcm16 => WavEncoding::Pcm16,
            Encoding::Float32 => WavEncoding::Float32,
        }
    }
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub noisy: PathBuf,
    #[arg(long)]
    pub enroll: PathBuf,
    /// Raw little-endian f32 vector, or `zero`.
    #[arg(long)]
    pub embedding: String,
    /// Weight file; without it the model is initialized from `--seed`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub streaming: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Encoding::Float32)]
    pub encoding: Encoding,
}

#[derive(Debug, Subcommand)]
pub enum RirCommand {
    /// Write `count` responses with RT60 drawn uniformly from a range.
    Gen(RirGenArgs),
}

#[derive(Debug, Args)]
pub struct RirGenArgs {
    #[arg(long)]
    pub count: usize,
    /// `lo:hi` range or a single value, in seconds.
    #[arg(long, default_value = "0.1:1.0")]
    pub rt60: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 48_000)]
    pub fs: u32,
    #[arg(long, default_value_t = 48_000)]
    pub len: usize,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub group: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum StatsCommand {
    Params(StatsArgs),
    Macs(StatsArgs),
}

#[derive(Debug, Subcommand)]
pub enum LossCommand {
    Eval(LossArgs),
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub est: PathBuf,
    #[arg(long, conflicts_with = "single")]
    pub multi: bool,
    #[arg(long)]
    pub single: bool,
    #[arg(long, default_value = "l2")]
    pub which: String,
    #[arg(long, default_value_t = 0.3)]
    pub compression: f32,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    Rtf(BenchArgs),
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "streaming")]
    pub mode: String,
    #[arg(long, default_value_t = 10.0)]
    pub seconds: f64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum ScheduleCommand {
    /// Learning rate after each validation loss.
    Trace {
        #[arg(long)]
        losses: String,
    },
    /// Trainable and frozen groups of one phase, or all three.
    Phases {
        #[arg(long)]
        phase: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum WeightsCommand {
    /// Write seeded random weights for a config.
    Init {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn model_config(path: Option<&Path>) -> Result<ModelConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?.model),
        None => Ok(ModelConfig::default()),
    }
}

fn read_embedding(spec: &str, dim: usize) -> Result<SpeakerEmbedding> {
    if spec == "zero" {
        return Ok(SpeakerEmbedding::zeros(dim));
    }
    let bytes = std::fs::read(spec)?;
    if bytes.len() != 4 * dim {
        return Err(Error::InvalidArgument(format!(
            "embedding file {spec} has {} bytes, expected {} ({dim} f32 values)",
            bytes.len(),
            4 * dim
        )));
    }
    SpeakerEmbedding::new(bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
}

/// Streaming output shifted back by the model latency so it lines up with the input.
pub fn enhance_streaming(model: &Model, noisy: &AudioBuffer, enroll: &AudioBuffer, e: &SpeakerEmbedding) -> Result<AudioBuffer> {
    noisy.expect_model_rate("noisy input")?;
    let mut session = model.stream(enroll, e)?;
    let lat = session.latency();
    let mut padded = noisy.samples.clone();
    padded.resize(noisy.len() + lat, 0.0);
    let out = session.process(&padded)?;
    AudioBuffer::new(out[lat..lat + noisy.len()].to_vec(), noisy.sample_rate)
}

fn enhance(a: &EnhanceArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = model_config(a.config.as_deref())?;
    let mut model = build_model(&cfg, a.seed)?;
    if let Some(w) = &a.weights {
        load_weights(model.registry_mut(), w)?;
    }
    let noisy = read_wav(&a.noisy)?;
    let enroll = read_wav(&a.enroll)?;
    let emb = read_embedding(&a.embedding, cfg.embedding_dim)?;
    let y = if a.streaming {
        enhance_streaming(&model, &noisy, &enroll, &emb)?
    } else {
        model.enhance_offline(&noisy, &enroll, &emb)?
    };
    write_wav(&a.out, &y, a.encoding.into())?;
    writeln!(out, "out={}\nsamples={}\nstreaming={}", a.out.display(), y.len(), a.streaming)?;
    Ok(())
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::InvalidArgument(format!("rt60 `{s}` is not `lo:hi` or a number"));
    let (lo, hi) = match s.split_once(':') {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let v: f64 = s.trim().parse().map_err(|_| bad())?;
            (v, v)
        }
    };
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn rir_gen(a: &RirGenArgs, out: &mut dyn Write) -> Result<()> {
    let (lo, hi) = parse_range(&a.rt60)?;
    if a.len == 0 || a.fs == 0 {
        return Err(Error::InvalidArgument("--fs and --len must be positive".into()));
    }
    std::fs::create_dir_all(&a.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut index = String::new();
    for i in 0..a.count {
        let rt60 = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let mut room = RoomSpec::random(&mut rng, rt60);
        room.sample_rate = a.fs;
        room.rir_len = a.len;
        let g = generate_rir_detailed(&room)?;
        let name = format!("rir_{i:04}.wav");
        write_wav(&a.out.join(&name), &g.rir, WavEncoding::Float32)?;
        let t20 = g.t20.map_or("nan".to_string(), |t| format!("{t:.4}"));
        let [x, y, z] = room.dims;
        index.push_str(&format!(
            "file={name} rt60={rt60:.4} t20={t20} beta={:.6} room={x:.3}x{y:.3}x{z:.3}\n",
            g.beta
        ));
    }
    let index_path = a.out.join("index.txt");
    crate::io::write_atomic(&index_path, |w| Ok(w.write_all(index.as_bytes())?))?;
    write!(out, "{index}")?;
    writeln!(out, "count={}", a.count)?;
    Ok(())
}

/// Per-entry seed: the run seed mixed with the manifest seed.
fn entry_seed(run: u64, entry: u64) -> u64 {
    run.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ entry
}

fn mix(a: &MixArgs, out: &mut dyn Write) -> Result<()> {
    let text = std::fs::read_to_string(&a.manifest)?;
    let entries = parse_manifest(&text)?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let load = |p: &Path| read_wav(&base.join(p));
    std::fs::create_dir_all(&a.out)?;
    let mut index = String::new();
    for (i, e) in entries.iter().enumerate() {
        let seed = entry_seed(a.seed, e.seed);
        let target = load(&e.target)?;
        let target_rir = match e.rt60 {
            Some(rt60) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut room = RoomSpec::random(&mut rng, rt60);
                room.sample_rate = target.sample_rate;
                Some(generate_rir_detailed(&room)?.rir)
            }
            None => None,
        };
        let recipe = MixtureRecipe {
            noise: e.noise.as_deref().map(load).transpose()?,
            interferer: e.interferer.as_deref().map(load).transpose()?,
            target_rir,
            snr_db: e.snr_db,
            sir_db: e.sir_db,
            ..MixtureRecipe::new(target, seed)
        };
        let ex = synth_example(&recipe)?;
        let stem = format!("mix_{i:04}");
        for (suffix, buf) in [("noisy", &ex.noisy), ("clean", &ex.clean), ("enroll", &ex.enroll)] {
            write_wav(&a.out.join(format!("{stem}_{suffix}.wav")), buf, WavEncoding::Float32)?;
        }
        index.push_str(&format!("{stem} {}\n", e.to_line()));
    }
    crate::io::write_atomic(&a.out.join("index.txt"), |w| Ok(w.write_all(index.as_bytes())?))?;
    writeln!(out, "count={}", entries.len())?;
    Ok(())
}

fn stats_params(a: &StatsArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = model_config(a.config.as_deref())?;
    let model = build_model(&cfg, 0)?;
    let reg = model.registry();
    if let Some(g) = &a.group {
        writeln!(out, "group={g}\nparams={}", count_params(reg, Some(g))?)?;
        return Ok(());
    }
    writeln!(out, "params={}", count_params(reg, None)?)?;
    for (g, n) in param_breakdown(reg) {
        writeln!(out, "group.{}={n}", g.name())?;
    }
    Ok(())
}

fn stats_macs(a: &StatsArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = model_config(a.config.as_deref())?;
    let report = count_macs(&cfg)?;
    let parts = report.by_component();
    if let Some(g) = &a.group {
        let group = Group::from_name(g)?;
        let v = parts.iter().find(|(n, _)| n == group.name()).map_or(0.0, |(_, v)| *v);
        writeln!(out, "group={g}\nmacs_per_second={v:.6e}")?;
        return Ok(());
    }
    writeln!(out, "macs_per_second={:.6e}", report.per_second())?;
    writeln!(out, "frames_per_second={}", report.frames_per_second)?;
    for (name, v) in parts {
        writeln!(out, "component.{name}={v:.6e}")?;
    }
    Ok(())
}

fn loss_eval(a: &LossArgs, out: &mut dyn Write) -> Result<()> {
    let which: Composite = a.which.parse()?;
    let multi = if a.single { MultiResConfig::single() } else { MultiResConfig::default() };
    let s = read_wav(&a.reference)?;
    let e = read_wav(&a.est)?;
    if s.sample_rate != e.sample_rate {
        return Err(Error::InvalidArgument(format!("sample rates differ: {} vs {}", s.sample_rate, e.sample_rate)));
    }
    let b = composite_loss(&s.samples, &e.samples, &multi, which, a.compression)?;
    writeln!(out, "which={}\nsi_snr={:.6}", which.name(), b.si_snr)?;
    for (cfg, t) in multi.scales().iter().zip(&b.scales) {
        writeln!(out, "scale.{}.mag={:.6e}", cfg.fft_len, t.mag)?;
        writeln!(out, "scale.{}.pha={:.6e}", cfg.fft_len, t.pha)?;
        writeln!(out, "scale.{}.asym={:.6e}", cfg.fft_len, t.asym)?;
    }
    writeln!(out, "spectral={:.6e}\ncomposite={:.6}", b.spectral(), b.composite)?;
    Ok(())
}

fn bench(a: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let mode: BenchMode = a.mode.parse()?;
    let cfg = model_config(a.config.as_deref())?;
    let model = build_model(&cfg, a.seed)?;
    write!(out, "{}", bench_rtf(&model, a.seconds, mode, a.seed)?)?;
    Ok(())
}

fn schedule(c: &ScheduleCommand, out: &mut dyn Write) -> Result<()> {
    match c {
        ScheduleCommand::Trace { losses } => {
            let values = losses
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidArgument(format!("loss `{}` is not a number", v.trim())))
                })
                .collect::<Result<Vec<_>>>()?;
            let trace = lr_trace(&values)?;
            let text: Vec<String> = trace.iter().map(|lr| format!("{lr:e}")).collect();
            writeln!(out, "lr_trace={}", text.join(","))?;
        }
        ScheduleCommand::Phases { phase } => {
            let phases: Vec<PhaseSpec> = match phase {
                Some(p) => vec![PhaseSpec::get(p.parse::<PhaseId>()?)],
                None => PhaseSpec::sequence().to_vec(),
            };
            for p in phases {
                write!(out, "{}", p.report())?;
            }
        }
    }
    Ok(())
}

fn weights(c: &WeightsCommand, out: &mut dyn Write) -> Result<()> {
    match c {
        WeightsCommand::Init { config, seed, out: path } => {
            let model = build_model(&model_config(config.as_deref())?, *seed)?;
            save_weights(model.registry(), path)?;
            writeln!(out, "out={}\ntensors={}", path.display(), model.registry().len())?;
        }
    }
    Ok(())
}

/// Run one parsed command, writing its key=value report to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Enhance(a) => enhance(a, out),
        Command::Rir(RirCommand::Gen(a)) => rir_gen(a, out),
        Command::Mix(a) => mix(a, out),
        Command::Stats(StatsCommand::Params(a)) => stats_params(a, out),
        Command::Stats(StatsCommand::Macs(a)) => stats_macs(a, out),
        Command::Loss(LossCommand::Eval(a)) => loss_eval(a, out),
        Command::Bench(BenchCommand::Rtf(a)) => bench(a, out),
        Command::Schedule(c) => schedule(c, out),
        Command::Weights(c) => weights(c, out),
    }
}

/// The single-line form every failure is reported in.
pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace('\n', " ");
    format!("error: {}: {msg}", e.code())
}

/// Parse `args` and run; returns the process exit code.
pub fn main_with(args: impl IntoIterator<Item = String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = write!(out, "{e}");
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = writeln!(err, "error: usage: {first}");
            return 2;
        }
    };
    match run(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", error_line(&e));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let argv = std::iter::once("teapse").chain(args.iter().copied()).map(String::from);
        let code = main_with(argv, &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn schedule_trace_prints_the_hand_trace() {
        let (code, out, _) = call(&["schedule", "trace", "--losses", "1.0,0.9,0.95,0.92"]);
        assert_eq!(code, 0);
        assert_eq!(out, "lr_trace=1e-3,1e-3,1e-3,5e-4\n");
    }

    #[test]
    fn errors_are_single_machine_readable_lines() {
        let (code, out, err) = call(&["schedule", "trace", "--losses", "1.0,x"]);
        assert_eq!((code, out.as_str()), (1, ""));
        assert_eq!(err.lines().count(), 1);
        assert!(err.starts_with("error: invalid-argument: "), "{err}");
        let (code, _, err) = call(&["stats", "params", "--group", "decoder"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("error: unknown-group: "), "{err}");
        let (code, _, err) = call(&["frobnicate"]);
        assert_eq!(code, 2);
        assert!(err.starts_with("error: usage: ") && err.lines().count() == 1, "{err}");
    }

    #[test]
    fn range_parsing() {
        assert_eq!(parse_range("0.1:1.0").unwrap(), (0.1, 1.0));
        assert_eq!(parse_range("0.5").unwrap(), (0.5, 0.5));
        for bad in ["1.0:0.1", "a:b", "0", "-1:2"] {
            assert!(parse_range(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn embedding_file_length_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.f32");
        std::fs::write(&p, [0u8; 12]).unwrap();
        assert!(read_embedding(p.to_str().unwrap(), 4).is_err());
        let bytes: Vec<u8> = [1.0f32, -2.0, 0.5].iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(&p, bytes).unwrap();
        assert_eq!(read_embedding(p.to_str().unwrap(), 3).unwrap().values(), &[1.0, -2.0, 0.5]);
        assert_eq!(read_embedding("zero", 2).unwrap(), SpeakerEmbedding::zeros(2));
    }

    #[test]
    fn streaming_enhancement_lines_up_with_offline() {
        let mut cfg = ModelConfig::toy();
        cfg.com_head_init = crate::model::HeadInit::Random;
        let m = build_model(&cfg, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut noise = |n: usize| AudioBuffer::new((0..n).map(|_| rng.gen_range(-0.3f32..0.3)).collect(), 48_000).unwrap();
        let noisy = noise(48_000);
        let enroll = noise(24_000);
        let e = SpeakerEmbedding::zeros(cfg.embedding_dim);
        let off = m.enhance_offline(&noisy, &enroll, &e).unwrap();
        let st = enhance_streaming(&m, &noisy, &enroll, &e).unwrap();
        assert_eq!(st.len(), off.len());
        let d = off.samples.iter().zip(&st.samples).fold(0.0f32, |a, (x, y)| a.max((x - y).abs()));
        let idx = off.samples.iter().zip(&st.samples).position(|(x, y)| (x - y).abs() > 1e-4);
        assert!(d <= 1e-4, "{d} first at {idx:?}");
    }
}
