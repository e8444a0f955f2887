//! Parameter counts per group and analytic MACs per second of audio.

use teapse::model::{build_model, count_macs, count_params, param_breakdown, ModelConfig};

fn main() -> teapse::Result<()> {
    let cfg = ModelConfig::default();
    let model = build_model(&cfg, 0)?;
    let total = count_params(model.registry(), None)?;
    println!("parameters: {total} ({:.2}M)", total as f64 / 1e6);
    for (g, n) in param_breakdown(model.registry()) {
        println!("  {:<12} {n:>10}", g.name());
    }
    let macs = count_macs(&cfg)?;
    println!("MACs per second: {:.3}G at {} frames/s", macs.per_second() / 1e9, macs.frames_per_second);
    for (name, v) in macs.by_component() {
        println!("  {name:<12} {:.3}G", v / 1e9);
    }
    Ok(())
}
