use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{KinError, PairwiseEstimate, RefinementInfo};
use crate::geom::Transform;
use crate::Real;

/// Grasp transforms relative to a reference grasp: `T̂_{ref,i}` for every
/// frame `i`, with `T̂_{ref,ref}` the identity. Any pair is derived as
/// `T̂_ij = T̂_{ref,i}⁻¹·T̂_{ref,j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspGraph<T: Real> {
    pub reference: usize,
    pub transforms: BTreeMap<usize, Transform<T>>,
    pub refinement: Option<RefinementInfo>,
}

impl<T: Real> GraspGraph<T> {
    pub fn new(reference: usize) -> Self {
        let mut transforms = BTreeMap::new();
        transforms.insert(reference, Transform::identity());
        GraspGraph { reference, transforms, refinement: None }
    }

    pub fn frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.transforms.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    /// `T̂_{ref,i}`.
    pub fn get(&self, i: usize) -> Option<&Transform<T>> {
        self.transforms.get(&i)
    }

    /// `T̂_ij`. Panics if either frame is missing.
    pub fn relative(&self, i: usize, j: usize) -> Transform<T> {
        let ti = self.transforms.get(&i).unwrap_or_else(|| panic!("frame {i} not in graph"));
        let tj = self.transforms.get(&j).unwrap_or_else(|| panic!("frame {j} not in graph"));
        ti.inverse() * *tj
    }

    /// Sets `T̂_{ref,i}`; the reference stays at identity.
    pub fn set(&mut self, i: usize, t: Transform<T>) {
        if i != self.reference {
            self.transforms.insert(i, t);
        }
    }
}

/// Composes pairwise estimates along a breadth-first spanning tree rooted
/// at `reference`. Edges are used in the order given, either direction.
/// Every frame in `frames` must be reached.
pub fn chain_estimates<T: Real>(
    pairwise: &[PairwiseEstimate<T>],
    reference: usize,
    frames: &[usize],
) -> Result<GraspGraph<T>, KinError> {
    let mut graph = GraspGraph::new(reference);
    let mut queue = VecDeque::from([reference]);
    while let Some(cur) = queue.pop_front() {
        let t_cur = graph.transforms[&cur];
        for e in pairwise {
            let (next, t_next) = if e.i == cur {
                (e.j, t_cur * e.transform())
            } else if e.j == cur {
                (e.i, t_cur * e.transform().inverse())
            } else {
                continue;
            };
            if let std::collections::btree_map::Entry::Vacant(e) = graph.transforms.entry(next) {
                e.insert(t_next);
                queue.push_back(next);
            }
        }
    }
    let wanted: BTreeSet<usize> = frames.iter().copied().chain(pairwise.iter().flat_map(|e| [e.i, e.j])).collect();
    let unreachable: Vec<usize> = wanted.into_iter().filter(|f| !graph.transforms.contains_key(f)).collect();
    if !unreachable.is_empty() {
        return Err(KinError::Disconnected { reference, unreachable });
    }
    Ok(graph)
}
