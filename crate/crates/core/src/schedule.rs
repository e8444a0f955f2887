//! Three-phase freeze/retrain plan and the plateau learning-rate rule.
//!
//! Both are plain state machines over the parameter registry; there is no
//! optimizer here.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::losses::Composite;
use crate::nn::params::{Group, ParameterRegistry, Stage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PhaseId {
    /// Stage 1 alone with L1.
    P1,
    /// Stage 1 frozen, stage 2 with L2.
    P2,
    /// Everything with L2.
    P3,
}

impl std::str::FromStr for PhaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "P1" => Ok(PhaseId::P1),
            "P2" => Ok(PhaseId::P2),
            "P3" => Ok(PhaseId::P3),
            other => Err(Error::InvalidArgument(format!("unknown phase `{other}`"))),
        }
    }
}

impl fmt::Display for PhaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhaseSpec {
    pub id: PhaseId,
    pub trainable: BTreeSet<Group>,
    pub frozen: BTreeSet<Group>,
    pub loss: Composite,
}

fn stage_groups(stage: Stage) -> BTreeSet<Group> {
    Group::ALL.into_iter().filter(|g| g.stage() == stage).collect()
}

impl PhaseSpec {
    pub fn new(id: PhaseId, trainable: BTreeSet<Group>, frozen: BTreeSet<Group>, loss: Composite) -> Result<Self> {
        if let Some(g) = trainable.intersection(&frozen).next() {
            return Err(Error::Config(format!("group {g} is both trainable and frozen")));
        }
        if let Some(g) = Group::ALL.iter().find(|g| !trainable.contains(g) && !frozen.contains(g)) {
            return Err(Error::Config(format!("phase {id} does not place group {g}")));
        }
        Ok(Self {
            id,
            trainable,
            frozen,
            loss,
        })
    }

    pub fn get(id: PhaseId) -> Self {
        let (mag, com) = (stage_groups(Stage::Mag), stage_groups(Stage::Com));
        let all: BTreeSet<Group> = Group::ALL.into_iter().collect();
        let spec = match id {
            PhaseId::P1 => Self::new(id, mag, com, Composite::L1),
            PhaseId::P2 => Self::new(id, com, mag, Composite::L2),
            PhaseId::P3 => Self::new(id, all, BTreeSet::new(), Composite::L2),
        };
        spec.expect("built-in phases partition the groups")
    }

    pub fn sequence() -> [Self; 3] {
        [Self::get(PhaseId::P1), Self::get(PhaseId::P2), Self::get(PhaseId::P3)]
    }

    pub fn is_trainable(&self, g: Group) -> bool {
        self.trainable.contains(&g)
    }
}

/// Set every entry's trainable flag from `phase`; names and values are untouched.
pub fn phase_apply(phase: &PhaseSpec, registry: &mut ParameterRegistry) -> Result<()> {
    if let Some(g) = registry
        .groups()
        .into_iter()
        .find(|g| !phase.trainable.contains(g) && !phase.frozen.contains(g))
    {
        return Err(Error::UnknownGroup(format!("{g} is not covered by phase {}", phase.id)));
    }
    for e in registry.entries_mut() {
        e.trainable = phase.trainable.contains(&e.group);
    }
    Ok(())
}

/// Element counts `(trainable, frozen)` under the current flags.
pub fn trainable_split(registry: &ParameterRegistry) -> (usize, usize) {
    registry.entries().fold((0, 0), |(t, f), e| {
        if e.trainable {
            (t + e.tensor.len(), f)
        } else {
            (t, f + e.tensor.len())
        }
    })
}

pub const INITIAL_LR: f64 = 1e-3;
pub const LR_FACTOR: f64 = 0.5;
pub const LR_PATIENCE: u32 = 2;

/// Halve the rate after `patience` consecutive epochs without a strict decrease.
#[derive(Clone, Debug, PartialEq)]
pub struct LrState {
    pub lr: f64,
    pub best: f64,
    pub epochs_since_improve: u32,
    pub factor: f64,
    pub patience: u32,
    pub halvings: u32,
}

impl Default for LrState {
    fn default() -> Self {
        Self {
            lr: INITIAL_LR,
            best: f64::INFINITY,
            epochs_since_improve: 0,
            factor: LR_FACTOR,
            patience: LR_PATIENCE,
            halvings: 0,
        }
    }
}

impl LrState {
    pub fn step(&self, val_loss: f64) -> Result<Self> {
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss {val_loss}")));
        }
        let mut next = self.clone();
        if val_loss < self.best {
            next.best = val_loss;
            next.epochs_since_improve = 0;
        } else {
            next.epochs_since_improve += 1;
            if next.epochs_since_improve >= self.patience {
                next.lr *= self.factor;
                next.halvings += 1;
                next.epochs_since_improve = 0;
            }
        }
        Ok(next)
    }

    pub fn report(&self) -> String {
        format!(
            "lr={:e}\nbest={}\nepochs_since_improve={}\nhalvings={}\n",
            self.lr, self.best, self.epochs_since_improve, self.halvings
        )
    }
}

pub fn lr_step(state: &LrState, val_loss: f64) -> Result<LrState> {
    state.step(val_loss)
}

/// Learning rate in effect after each validation loss.
pub fn lr_trace(losses: &[f64]) -> Result<Vec<f64>> {
    let mut st = LrState::default();
    losses
        .iter()
        .map(|&l| {
            st = st.step(l)?;
            Ok(st.lr)
        })
        .collect()
}

impl PhaseSpec {
    pub fn report(&self) -> String {
        let names = |s: &BTreeSet<Group>| s.iter().map(|g| g.name()).collect::<Vec<_>>().join(",");
        format!(
            "phase={}\nloss={}\ntrainable={}\nfrozen={}\n",
            self.id,
            self.loss.name(),
            names(&self.trainable),
            names(&self.frozen)
        )
    }
}
