use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ctdg::{EventKind, EventStream, NodeId, Phase, SplitSpec};
use crate::error::{Error, Result};

/// Candidate negative destinations for one phase.
#[derive(Clone, Debug, PartialEq)]
pub struct NegSampleSpec {
    pub phase: Phase,
    pub pool: Vec<NodeId>,
}

impl NegSampleSpec {
    /// Destinations seen up to the end of `phase`: the training split for
    /// training, train and validation for validation, the whole stream for
    /// testing. The pools are nested by construction.
    pub fn for_phase(stream: &EventStream, split: &SplitSpec, phase: Phase) -> Self {
        let end = match phase {
            Phase::Train => split.train_end,
            Phase::Val => split.val_end,
            Phase::Test => split.len,
        };
        let pool: BTreeSet<NodeId> = stream.events()[..end].iter().filter_map(|e| e.dst).collect();
        Self {
            phase,
            pool: pool.into_iter().collect(),
        }
    }
}

/// Uniform draw from the pool, redrawn while it equals the positive
/// destination.
pub fn negative_sample<R: Rng + ?Sized>(spec: &NegSampleSpec, positive_dst: NodeId, rng: &mut R) -> Result<NodeId> {
    if spec.pool.iter().all(|&v| v == positive_dst) {
        return Err(Error::Sampling(format!(
            "no negative besides {positive_dst} in a pool of {}",
            spec.pool.len()
        )));
    }
    loop {
        let v = spec.pool[rng.gen_range(0..spec.pool.len())];
        if v != positive_dst {
            return Ok(v);
        }
    }
}

/// One negative destination per edge event, drawn once so that every
/// method is scored against the same negatives. Node events get `None`.
pub fn draw_negatives(stream: &EventStream, split: &SplitSpec, seed: u64) -> Result<Vec<Option<NodeId>>> {
    let specs = [Phase::Train, Phase::Val, Phase::Test].map(|p| NegSampleSpec::for_phase(stream, split, p));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    stream
        .iter()
        .map(|e| match (e.kind, e.dst) {
            (EventKind::EdgeAdd, Some(dst)) => {
                let spec = match split.phase_of(e.index) {
                    Phase::Train => &specs[0],
                    Phase::Val => &specs[1],
                    Phase::Test => &specs[2],
                };
                negative_sample(spec, dst, &mut rng).map(Some)
            }
            _ => Ok(None),
        })
        .collect()
}
