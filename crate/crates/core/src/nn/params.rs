//! Named parameter storage shared by every layer.
//!
//! Layers hold [`ParamId`] handles and read their tensors from the registry on
//! every forward or streaming step, so both paths see the same weights.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    MagNet,
    ComNet,
    SpkEncMag,
    SpkEncCom,
    FusionMag,
    FusionCom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    Mag,
    Com,
}

impl Group {
    pub const ALL: [Group; 6] = [
        Group::MagNet,
        Group::ComNet,
        Group::SpkEncMag,
        Group::SpkEncCom,
        Group::FusionMag,
        Group::FusionCom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Group::MagNet => "mag_net",
            Group::ComNet => "com_net",
            Group::SpkEncMag => "spk_enc_mag",
            Group::SpkEncCom => "spk_enc_com",
            Group::FusionMag => "fusion_mag",
            Group::FusionCom => "fusion_com",
        }
    }

    pub fn from_name(name: &str) -> Result<Group> {
        Group::ALL
            .into_iter()
            .find(|g| g.name() == name)
            .ok_or_else(|| Error::UnknownGroup(name.to_string()))
    }

    pub fn stage(self) -> Stage {
        match self {
            Group::MagNet | Group::SpkEncMag | Group::FusionMag => Stage::Mag,
            Group::ComNet | Group::SpkEncCom | Group::FusionCom => Stage::Com,
        }
    }

    /// `fusion` for both per-stage projection groups, otherwise the group name.
    pub fn family(self) -> &'static str {
        match self {
            Group::FusionMag | Group::FusionCom => "fusion",
            g => g.name(),
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor,
    pub group: Group,
    pub trainable: bool,
}

#[derive(Debug, Default)]
pub struct ParameterRegistry {
    entries: Vec<ParamEntry>,
    by_name: HashMap<String, usize>,
    reads: Vec<AtomicU64>,
}

impl Clone for ParameterRegistry {
    fn clone(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    tensor: e.tensor.clone(),
                    group: e.group,
                    trainable: e.trainable,
                })
                .collect(),
            by_name: self.by_name.clone(),
            reads: self.entries.iter().map(|_| AtomicU64::new(0)).collect(),
        }
    }
}

impl ParameterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, tensor: Tensor, group: Group) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Config(format!("parameter `{name}` registered twice")));
        }
        let id = self.entries.len();
        self.entries.push(ParamEntry {
            name: name.to_string(),
            tensor,
            group,
            trainable: true,
        });
        self.by_name.insert(name.to_string(), id);
        self.reads.push(AtomicU64::new(0));
        Ok(ParamId(id))
    }

    /// Tensor behind `id`; every call is counted (see [`Self::read_counts`]).
    #[inline]
    pub fn get(&self, id: ParamId) -> &Tensor {
        self.reads[id.0].fetch_add(1, Ordering::Relaxed);
        &self.entries[id.0].tensor
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&ParamEntry> {
        self.by_name.get(name).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter()
    }

    pub fn entries_mut(&mut self) -> impl Iterator<Item = &mut ParamEntry> {
        self.entries.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct groups present, in registration order.
    pub fn groups(&self) -> Vec<Group> {
        let mut out: Vec<Group> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.group) {
                out.push(e.group);
            }
        }
        out
    }

    /// Replace a tensor's values; the shape must match the registered one.
    pub fn set_tensor(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let idx = *self
            .by_name
            .get(name)
            .ok_or_else(|| Error::WeightFormat(format!("unknown tensor `{name}`")))?;
        let entry = &mut self.entries[idx];
        if entry.tensor.shape() != tensor.shape() {
            return Err(Error::WeightShape {
                name: name.to_string(),
                found: tensor.shape().to_vec(),
                expected: entry.tensor.shape().to_vec(),
            });
        }
        entry.tensor = tensor;
        Ok(())
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let idx = *self.by_name.get(name)?;
        Some(&mut self.entries[idx].tensor)
    }

    pub fn reset_read_counts(&self) {
        for r in &self.reads {
            r.store(0, Ordering::Relaxed);
        }
    }

    /// `(name, reads since last reset)` for every entry.
    pub fn read_counts(&self) -> Vec<(&str, u64)> {
        self.entries
            .iter()
            .zip(&self.reads)
            .map(|(e, r)| (e.name.as_str(), r.load(Ordering::Relaxed)))
            .collect()
    }
}

/// Registers parameters under a name prefix and group while building layers.
pub struct ParamBuilder<'a> {
    registry: &'a mut ParameterRegistry,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
    group: Group,
}

impl<'a> ParamBuilder<'a> {
    pub fn new(registry: &'a mut ParameterRegistry, rng: &'a mut ChaCha8Rng, group: Group) -> Self {
        Self {
            registry,
            rng,
            prefix: String::new(),
            group,
        }
    }

    pub fn scope(&mut self, name: &str) -> ParamBuilder<'_> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        };
        ParamBuilder {
            registry: self.registry,
            rng: self.rng,
            prefix,
            group: self.group,
        }
    }

    pub fn with_group(&mut self, group: Group) -> ParamBuilder<'_> {
        ParamBuilder {
            registry: self.registry,
            rng: self.rng,
            prefix: self.prefix.clone(),
            group,
        }
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn uniform(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
        let len = shape.iter().product();
        let data = (0..len).map(|_| self.rng.gen_range(-bound..=bound)).collect();
        let full = self.full_name(name);
        self.registry.register(&full, Tensor::from_vec(shape, data)?, self.group)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f32) -> Result<ParamId> {
        let full = self.full_name(name);
        self.registry.register(&full, Tensor::full(shape, value), self.group)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut reg = ParameterRegistry::new();
        reg.register("a", Tensor::zeros(&[2]), Group::MagNet).unwrap();
        assert!(reg.register("a", Tensor::zeros(&[2]), Group::ComNet).is_err());
    }

    #[test]
    fn builder_scopes_names_and_counts_reads() {
        let mut reg = ParameterRegistry::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let id = {
            let mut pb = ParamBuilder::new(&mut reg, &mut rng, Group::SpkEncMag);
            let mut outer = pb.scope("enc");
            let mut inner = outer.scope("fd0");
            inner.uniform("w", &[3, 4], 4).unwrap()
        };
        assert_eq!(reg.entry(id).name, "enc.fd0.w");
        assert_eq!(reg.entry(id).group, Group::SpkEncMag);
        assert!(reg.entry(id).tensor.data().iter().all(|v| v.abs() <= 0.5));
        let _ = reg.get(id);
        let _ = reg.get(id);
        assert_eq!(reg.read_counts()[0].1, 2);
        reg.reset_read_counts();
        assert_eq!(reg.read_counts()[0].1, 0);
    }

    #[test]
    fn set_tensor_checks_shape() {
        let mut reg = ParameterRegistry::new();
        reg.register("w", Tensor::zeros(&[2, 2]), Group::MagNet).unwrap();
        let err = reg.set_tensor("w", Tensor::zeros(&[4])).unwrap_err();
        assert!(matches!(err, Error::WeightShape { ref name, .. } if name == "w"));
        reg.set_tensor("w", Tensor::full(&[2, 2], 1.0)).unwrap();
    }

    #[test]
    fn group_names_round_trip() {
        for g in Group::ALL {
            assert_eq!(Group::from_name(g.name()).unwrap(), g);
        }
        assert!(matches!(Group::from_name("decoder"), Err(Error::UnknownGroup(_))));
    }
}
