//! Device grouping and round-robin device-model assignment.
//!
//! Group and model indices in this module's free functions are 1-based, as
//! in the round-robin rule `m(i, t) = [(M + i - (t mod M) - 1) mod M] + 1`.
//! [`Schedule`] exposes both forms; everything else in the crate uses the
//! 0-based accessors.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Model (1-based) trained by group `i` (1-based) in round `t`.
pub fn assigned_model(i: usize, t: usize, m: usize) -> usize {
    debug_assert!(m >= 1 && (1..=m).contains(&i));
    ((m + i - (t % m) - 1) % m) + 1
}

/// Group (1-based) that trains model `model` (1-based) in round `t`.
pub fn group_training_model(model: usize, t: usize, m: usize) -> usize {
    debug_assert!(m >= 1 && (1..=m).contains(&model));
    ((model - 1 + t) % m) + 1
}

/// Device partition for one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub frame_index: usize,
    /// `groups[i]` lists the (0-based) devices of group `i + 1`, ascending.
    pub groups: Vec<Vec<usize>>,
}

impl Schedule {
    /// Build from explicit groups; they must partition `0..K` into equal sizes.
    pub fn from_groups(frame_index: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let m = groups.len();
        if m == 0 {
            return Err(Error::Config("need at least one group".into()));
        }
        let size = groups[0].len();
        let k: usize = groups.iter().map(Vec::len).sum();
        if size == 0 || groups.iter().any(|g| g.len() != size) {
            return Err(Error::Config("groups must be non-empty and of equal size".into()));
        }
        let mut seen = vec![false; k];
        for &d in groups.iter().flatten() {
            if d >= k || std::mem::replace(&mut seen[d], true) {
                return Err(Error::Config(format!("groups do not partition 0..{k}")));
            }
        }
        Ok(Self { frame_index, groups })
    }

    /// All `K` devices in a single group.
    pub fn single_group(frame_index: usize, devices: usize) -> Result<Self> {
        Self::from_groups(frame_index, vec![(0..devices).collect()])
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_devices(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Group (0-based) of every device.
    pub fn group_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_devices()];
        for (i, g) in self.groups.iter().enumerate() {
            for &d in g {
                out[d] = i;
            }
        }
        out
    }

    /// 0-based model trained by 0-based group `group` in round `t`.
    pub fn model_of_group(&self, group: usize, t: usize) -> usize {
        assigned_model(group + 1, t, self.num_groups()) - 1
    }

    /// 0-based group training 0-based model `model` in round `t`.
    pub fn group_of_model(&self, model: usize, t: usize) -> usize {
        group_training_model(model + 1, t, self.num_groups()) - 1
    }
}

/// Uniformly random partition of `K` devices into `M` groups of `K / M`.
pub fn partition_devices<R: Rng + ?Sized>(
    devices: usize,
    models: usize,
    frame_index: usize,
    rng: &mut R,
) -> Result<Schedule> {
    if models == 0 || devices == 0 || !devices.is_multiple_of(models) {
        return Err(Error::Config(format!(
            "K = {devices} devices cannot be split into M = {models} equal groups"
        )));
    }
    let mut order: Vec<usize> = (0..devices).collect();
    order.shuffle(rng);
    let size = devices / models;
    let groups = order
        .chunks(size)
        .map(|c| {
            let mut g = c.to_vec();
            g.sort_unstable();
            g
        })
        .collect();
    Schedule::from_groups(frame_index, groups)
}
