//! Save a model to a TPW3 file, reload it, and show the integrity checks.

use teapse::io::{decode_weights, encode_weights, load_weights, save_weights, WeightFile};
use teapse::model::{build_model, ModelConfig};

fn main() -> teapse::Result<()> {
    let dir = std::env::temp_dir().join(format!("teapse-weights-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("toy.tpw");

    let a = build_model(&ModelConfig::toy(), 1)?;
    save_weights(a.registry(), &path)?;
    let mut b = build_model(&ModelConfig::toy(), 2)?;
    load_weights(b.registry_mut(), &path)?;
    let same = a.registry().entries().zip(b.registry().entries()).all(|(x, y)| x.tensor == y.tensor);
    println!("{} tensors, {} bytes, reload identical: {same}", a.registry().len(), std::fs::metadata(&path)?.len());

    let mut bytes = encode_weights(&WeightFile::from_registry(a.registry()))?;
    bytes[100] ^= 0x40;
    println!("flipped byte: {}", decode_weights(&bytes).unwrap_err());

    let mut full = build_model(&ModelConfig::default(), 0)?;
    println!("toy file into default model: {}", load_weights(full.registry_mut(), &path).unwrap_err());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
