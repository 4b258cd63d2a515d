//! Fixed-capacity FIFO experience replay with uniform or prioritized sampling.
//!
//! Prioritized mode is the proportional variant: slot `i` is drawn with
//! probability `p_i^ω / Σ_j p_j^ω`, where `p_i = loss_i + floor` is set from
//! the nonnegative loss the learner last reported for that slot. New slots
//! receive the largest priority seen so far. Sampling is with replacement.

mod sum_tree;

pub use sum_tree::SumTree;

use std::collections::HashMap;

use rand::Rng;

use crate::env::{ActionValue, Transition};
use crate::error::{Error, Result};
use crate::{Real, Tensor};

/// Storage slot plus the push generation that filled it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SlotId {
    pub index: usize,
    pub generation: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorityConfig {
    pub exponent: Real,
    pub floor: Real,
}

impl Default for PriorityConfig {
    fn default() -> Self {
        Self {
            exponent: 0.6,
            floor: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
struct PriorityIndex {
    cfg: PriorityConfig,
    raw: Vec<Real>,
    tree: SumTree,
    max_priority: Real,
}

impl PriorityIndex {
    fn new(capacity: usize, cfg: PriorityConfig) -> Self {
        Self {
            cfg,
            raw: vec![0.0; capacity],
            tree: SumTree::new(capacity),
            max_priority: 1.0,
        }
    }

    fn set(&mut self, slot: usize, priority: Real) {
        self.raw[slot] = priority;
        self.max_priority = self.max_priority.max(priority);
        self.tree.set(slot, priority.powf(self.cfg.exponent));
    }
}

#[derive(Debug, Clone)]
pub struct PrioritizedSample<'a> {
    pub slot: SlotId,
    pub transition: &'a Transition,
    pub probability: Real,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    generations: Vec<u64>,
    cursor: usize,
    pushes: u64,
    priorities: Option<PriorityIndex>,
    stale_updates: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            generations: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
            pushes: 0,
            priorities: None,
            stale_updates: 0,
        })
    }

    pub fn prioritized(capacity: usize, cfg: PriorityConfig) -> Result<Self> {
        if !(cfg.floor > 0.0) || !(cfg.exponent >= 0.0) {
            return Err(Error::Config(format!("invalid priority settings {cfg:?}")));
        }
        let mut buf = Self::new(capacity)?;
        buf.priorities = Some(PriorityIndex::new(capacity, cfg));
        Ok(buf)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn is_prioritized(&self) -> bool {
        self.priorities.is_some()
    }

    /// Updates skipped because their slot had been overwritten.
    pub fn stale_updates(&self) -> u64 {
        self.stale_updates
    }

    pub fn total_pushes(&self) -> u64 {
        self.pushes
    }

    pub fn get(&self, slot: SlotId) -> Option<&Transition> {
        (self.generations.get(slot.index) == Some(&slot.generation)).then(|| &self.storage[slot.index])
    }

    /// Raw priority `p_i` of an occupied slot.
    pub fn priority(&self, index: usize) -> Option<Real> {
        let p = self.priorities.as_ref()?;
        (index < self.len()).then(|| p.raw[index])
    }

    pub fn max_priority(&self) -> Option<Real> {
        self.priorities.as_ref().map(|p| p.max_priority)
    }

    pub fn tree(&self) -> Option<&SumTree> {
        self.priorities.as_ref().map(|p| &p.tree)
    }

    /// Stored transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.len() < self.capacity { 0 } else { self.cursor };
        self.storage[split..].iter().chain(self.storage[..split].iter())
    }

    pub fn push(&mut self, t: Transition) -> SlotId {
        let index = self.cursor;
        self.pushes += 1;
        let generation = self.pushes;
        if self.storage.len() < self.capacity {
            self.storage.push(t);
            self.generations.push(generation);
        } else {
            self.storage[index] = t;
            self.generations[index] = generation;
        }
        if let Some(p) = self.priorities.as_mut() {
            let max = p.max_priority;
            p.set(index, max);
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        SlotId { index, generation }
    }

    fn slot(&self, index: usize) -> SlotId {
        SlotId {
            index,
            generation: self.generations[index],
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<(SlotId, &Transition)>> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..batch)
            .map(|_| {
                let i = rng.random_range(0..self.len());
                (self.slot(i), &self.storage[i])
            })
            .collect())
    }

    pub fn sample_prioritized<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<PrioritizedSample<'_>>> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let p = self
            .priorities
            .as_ref()
            .ok_or_else(|| Error::State("buffer was not built with priorities".into()))?;
        let total = p.tree.total();
        Ok((0..batch)
            .map(|_| {
                let i = p.tree.find(rng.random::<Real>() * total);
                PrioritizedSample {
                    slot: self.slot(i),
                    transition: &self.storage[i],
                    probability: p.tree.get(i) / total,
                }
            })
            .collect())
    }

    /// Sets `p_i = loss_i + floor`; ids whose slot was overwritten since sampling are skipped.
    pub fn update_priorities(&mut self, slots: &[SlotId], losses: &[Real]) -> Result<()> {
        if slots.len() != losses.len() {
            return Err(Error::dim("priority update", slots.len(), losses.len()));
        }
        if let Some(bad) = losses.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
            return Err(Error::Domain(format!("priority loss must be finite and >= 0, got {bad}")));
        }
        let Some(p) = self.priorities.as_mut() else {
            return Err(Error::State("buffer was not built with priorities".into()));
        };
        for (slot, &loss) in slots.iter().zip(losses) {
            if self.generations.get(slot.index) != Some(&slot.generation) {
                self.stale_updates += 1;
                continue;
            }
            let floor = p.cfg.floor;
            p.set(slot.index, loss + floor);
        }
        Ok(())
    }

    /// Serialises the contents (oldest first) as named tensors.
    ///
    /// `replay.counts` = `[capacity, len, total pushes, prioritized, stale updates]`,
    /// `replay.layout` = `[state dim, action width, discrete flag]`,
    /// `replay.transitions` = one row per transition:
    /// `state | action | reward | next_state | done | truncated`,
    /// and `replay.priorities` (raw, same order) plus `replay.priority_config`
    /// = `[exponent, floor, max priority]` when prioritized.
    pub fn to_named_tensors(&self) -> Vec<(String, Tensor)> {
        let first = self.storage.first();
        let state_dim = first.map_or(0, |t| t.state.len());
        let action_width = first.map_or(0, |t| t.action.to_vec().len());
        let discrete = first.is_none_or(|t| t.action.discrete().is_some());
        let width = 2 * state_dim + action_width + 3;
        let mut rows = Vec::with_capacity(self.len() * width);
        for t in self.iter() {
            rows.extend_from_slice(&t.state);
            rows.extend(t.action.to_vec());
            rows.push(t.reward);
            rows.extend_from_slice(&t.next_state);
            rows.push(t.done as u8 as Real);
            rows.push(t.truncated as u8 as Real);
        }
        let mut out = vec![
            (
                "replay.counts".to_string(),
                Tensor::vector(vec![
                    self.capacity as Real,
                    self.len() as Real,
                    self.pushes as Real,
                    self.is_prioritized() as u8 as Real,
                    self.stale_updates as Real,
                ]),
            ),
            (
                "replay.layout".to_string(),
                Tensor::vector(vec![state_dim as Real, action_width as Real, discrete as u8 as Real]),
            ),
            (
                "replay.transitions".to_string(),
                Tensor::new(vec![self.len(), width], rows).expect("row width is uniform"),
            ),
        ];
        if let Some(p) = &self.priorities {
            let split = if self.len() < self.capacity { 0 } else { self.cursor };
            let ordered = (split..self.len()).chain(0..split).map(|i| p.raw[i]).collect();
            out.push(("replay.priorities".to_string(), Tensor::vector(ordered)));
            out.push((
                "replay.priority_config".to_string(),
                Tensor::vector(vec![p.cfg.exponent, p.cfg.floor, p.max_priority]),
            ));
        }
        out
    }

    /// Rebuilds a buffer written by [`ReplayBuffer::to_named_tensors`].
    ///
    /// Slot ids handed out before the dump are not valid afterwards.
    pub fn from_named_tensors(tensors: &HashMap<String, Tensor>) -> Result<Self> {
        let get = |name: &str| {
            tensors
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
        };
        let counts = get("replay.counts")?.data();
        let layout = get("replay.layout")?.data();
        if counts.len() != 5 || layout.len() != 3 {
            return Err(Error::Checkpoint("malformed replay header".into()));
        }
        let (capacity, len) = (counts[0] as usize, counts[1] as usize);
        let (sd, aw, discrete) = (layout[0] as usize, layout[1] as usize, layout[2] != 0.0);
        let rows = get("replay.transitions")?;
        let width = 2 * sd + aw + 3;
        if len > capacity || rows.shape() != [len, width] {
            return Err(Error::Checkpoint(format!(
                "transition table shape {:?} does not match {len} x {width}",
                rows.shape()
            )));
        }
        let mut buf = if counts[3] != 0.0 {
            let pc = get("replay.priority_config")?.data();
            if pc.len() != 3 {
                return Err(Error::Checkpoint("malformed priority config".into()));
            }
            Self::prioritized(capacity, PriorityConfig { exponent: pc[0], floor: pc[1] })?
        } else {
            Self::new(capacity)?
        };
        for r in 0..len {
            let row = rows.row(r);
            let action = if discrete {
                ActionValue::Discrete(row[sd] as usize)
            } else {
                ActionValue::Continuous(row[sd..sd + aw].to_vec())
            };
            buf.push(Transition {
                state: row[..sd].to_vec(),
                action,
                reward: row[sd + aw],
                next_state: row[sd + aw + 1..2 * sd + aw + 1].to_vec(),
                done: row[width - 2] != 0.0,
                truncated: row[width - 1] != 0.0,
            });
        }
        buf.pushes = buf.pushes.max(counts[2] as u64);
        buf.stale_updates = counts[4] as u64;
        if let Some(p) = buf.priorities.as_mut() {
            let pr = get("replay.priorities")?.data();
            if pr.len() != len {
                return Err(Error::Checkpoint("priority count mismatch".into()));
            }
            for (i, &v) in pr.iter().enumerate() {
                p.set(i, v);
            }
            p.max_priority = get("replay.priority_config")?.data()[2];
        }
        Ok(buf)
    }
}

/// Normalised importance weights `(N P_i)^{-β} / max_j (N P_j)^{-β}`.
pub fn importance_weights(probabilities: &[Real], len: usize, beta: Real) -> Vec<Real> {
    let raw: Vec<Real> = probabilities
        .iter()
        .map(|&p| (len as Real * p).powf(-beta))
        .collect();
    let max = raw.iter().copied().fold(0.0, Real::max);
    if max > 0.0 {
        raw.into_iter().map(|w| w / max).collect()
    } else {
        raw
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(tag: Real) -> Transition {
        Transition {
            state: vec![tag],
            action: ActionValue::Discrete(0),
            reward: tag,
            next_state: vec![tag + 1.0],
            done: false,
            truncated: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(2).unwrap();
        for k in 0..3 {
            b.push(tr(k as Real));
        }
        let tags: Vec<Real> = b.iter().map(|t| t.reward).collect();
        assert_eq!(tags, vec![1.0, 2.0]);
    }

    #[test]
    fn empty_and_singleton_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = ReplayBuffer::new(4).unwrap();
        assert!(matches!(b.sample_uniform(1, &mut rng), Err(Error::EmptyBuffer)));
        b.push(tr(7.0));
        assert!(b.sample_uniform(0, &mut rng).unwrap().is_empty());
        assert!(b.sample_uniform(10, &mut rng).unwrap().iter().all(|(_, t)| t.reward == 7.0));
    }

    #[test]
    fn new_slots_inherit_max_priority() {
        let mut b = ReplayBuffer::prioritized(8, PriorityConfig::default()).unwrap();
        let first = b.push(tr(0.0));
        assert_eq!(b.priority(first.index), Some(1.0));
        b.update_priorities(&[first], &[5.0 - 1e-3]).unwrap();
        let second = b.push(tr(1.0));
        assert!((b.priority(second.index).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_loss_hits_floor() {
        let mut b = ReplayBuffer::prioritized(4, PriorityConfig::default()).unwrap();
        let s = b.push(tr(0.0));
        b.update_priorities(&[s], &[0.0]).unwrap();
        assert_eq!(b.priority(s.index), Some(1e-3));
    }

    #[test]
    fn stale_update_is_skipped_and_counted() {
        let mut b = ReplayBuffer::prioritized(2, PriorityConfig::default()).unwrap();
        let old = b.push(tr(0.0));
        b.push(tr(1.0));
        b.push(tr(2.0));
        b.update_priorities(&[old], &[3.0]).unwrap();
        assert_eq!(b.stale_updates(), 1);
        assert_eq!(b.priority(old.index), Some(1.0));
    }

    #[test]
    fn dump_restore_roundtrip() {
        let mut b = ReplayBuffer::prioritized(3, PriorityConfig::default()).unwrap();
        let ids: Vec<_> = (0..5).map(|k| b.push(tr(k as Real))).collect();
        b.update_priorities(&ids[3..], &[0.5, 2.0]).unwrap();
        let map: HashMap<_, _> = b.to_named_tensors().into_iter().collect();
        let back = ReplayBuffer::from_named_tensors(&map).unwrap();
        assert_eq!(back.iter().collect::<Vec<_>>(), b.iter().collect::<Vec<_>>());
        let pri = |buf: &ReplayBuffer| buf.iter().count();
        assert_eq!(pri(&back), 3);
        assert!((back.tree().unwrap().total() - b.tree().unwrap().total()).abs() < 1e-12);
    }

    #[test]
    fn importance_weights_normalised() {
        let w = importance_weights(&[0.5, 0.25], 2, 1.0);
        assert_eq!(w, vec![0.5, 1.0]);
    }
}
