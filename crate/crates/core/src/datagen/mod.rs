//! Training-data synthesis: image-method room responses, level-controlled
//! mixing and recipe manifests.

pub mod manifest;
pub mod mix;
pub mod rir;

pub use manifest::{parse_manifest, ManifestEntry};
pub use mix::{draw_recipe, mix_at_snr, synth_example, Example, MixtureRecipe, RecipeDraw};
pub use rir::{
    estimate_rt60, generate_rir, generate_rir_detailed, rt60_to_reflection, simulate_rir, GeneratedRir, RoomSpec, RT60_RANGE,
    SOUND_SPEED,
};
