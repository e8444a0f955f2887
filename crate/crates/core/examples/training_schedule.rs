//! The three training phases applied to a registry, and the plateau rule
//! driven by a made-up validation curve.

use teapse::model::{build_model, ModelConfig};
use teapse::schedule::{phase_apply, trainable_split, LrState, PhaseSpec};

fn main() -> teapse::Result<()> {
    let mut model = build_model(&ModelConfig::default(), 0)?;
    for phase in PhaseSpec::sequence() {
        phase_apply(&phase, model.registry_mut())?;
        let (t, f) = trainable_split(model.registry());
        print!("{}", phase.report());
        println!("trainable_params={t} frozen_params={f}\n");
    }

    let losses = [1.0, 0.9, 0.95, 0.92, 0.91, 0.93, 0.85, 0.86, 0.86];
    let mut st = LrState::default();
    for (epoch, l) in losses.iter().enumerate() {
        st = st.step(*l)?;
        println!("epoch={epoch} val={l:.2} lr={:e} since_best={}", st.lr, st.epochs_since_improve);
    }
    Ok(())
}
