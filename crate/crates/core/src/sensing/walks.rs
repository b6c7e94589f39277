use crate::error::{Error, Result};
use crate::network::{RoadNetwork, SegmentId};

/// Upper bound on walks enumerated from one origin.
pub const MAX_WALKS: usize = 1_000_000;

/// `L` consecutive segments leaving `origin`; the origin itself is not part
/// of the walk.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Walk {
    pub origin: SegmentId,
    pub steps: Vec<SegmentId>,
}

impl Walk {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Last segment, or the origin for a zero-length walk.
    pub fn terminus(&self) -> SegmentId {
        *self.steps.last().unwrap_or(&self.origin)
    }

    /// Distinct segments of the walk that are not observed, ascending.
    pub fn unobserved(&self, observed: &[bool]) -> Vec<SegmentId> {
        let mut out: Vec<SegmentId> = self.steps.iter().copied().filter(|s| !observed[s.0]).collect();
        out.sort();
        out.dedup();
        out
    }
}

/// All walks from one origin, in lexicographic order of their steps, plus
/// the union `Y_W` of their unobserved segments.
#[derive(Clone, Debug)]
pub struct WalkSet {
    pub origin: SegmentId,
    pub walks: Vec<Walk>,
    pub unobserved: Vec<SegmentId>,
}

impl WalkSet {
    /// A walk set holding exactly one walk.
    pub fn single(walk: Walk, observed: &[bool]) -> Self {
        let unobserved = walk.unobserved(observed);
        Self { origin: walk.origin, walks: vec![walk], unobserved }
    }

    pub fn len(&self) -> usize {
        self.walks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walks.is_empty()
    }
}

/// Enumerates every edge-consistent walk of length `l` from `origin`.
///
/// A segment without successors is followed by stay-in-place steps, so a
/// dead-end origin yields the single walk `(origin, .., origin)`. `observed`
/// is indexed by segment.
pub fn enumerate_walks(net: &RoadNetwork, origin: SegmentId, l: usize, observed: &[bool]) -> Result<WalkSet> {
    if !net.contains(origin) {
        return Err(Error::UnknownSegment(origin.0));
    }
    if observed.len() != net.len() {
        return Err(Error::DimensionMismatch { expected: net.len(), got: observed.len() });
    }
    let mut walks = Vec::new();
    let mut path = Vec::with_capacity(l);
    extend(net, origin, l, &mut path, &mut walks)?;
    let mut unobserved: Vec<SegmentId> = walks
        .iter()
        .flat_map(|w: &Walk| w.steps.iter().copied())
        .filter(|s| !observed[s.0])
        .collect();
    unobserved.sort();
    unobserved.dedup();
    Ok(WalkSet { origin, walks, unobserved })
}

fn extend(
    net: &RoadNetwork,
    origin: SegmentId,
    l: usize,
    path: &mut Vec<SegmentId>,
    out: &mut Vec<Walk>,
) -> Result<()> {
    if path.len() == l {
        if out.len() >= MAX_WALKS {
            return Err(Error::EnumerationLimit { count: out.len() as u128 + 1, limit: MAX_WALKS as u128 });
        }
        out.push(Walk { origin, steps: path.clone() });
        return Ok(());
    }
    let here = *path.last().unwrap_or(&origin);
    let next = net.out_edges(here);
    if next.is_empty() {
        path.push(here);
        extend(net, origin, l, path, out)?;
        path.pop();
        return Ok(());
    }
    for &(s, _) in next {
        path.push(s);
        extend(net, origin, l, path, out)?;
        path.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_net() -> RoadNetwork {
        // every segment i has successors (2i+1, 2i+2) mod 7
        let segs = (0..7).map(|i| (i, vec![i as f64])).collect();
        let edges: Vec<(u64, u64)> = (0..7).flat_map(|i| [(i, (2 * i + 1) % 7), (i, (2 * i + 2) % 7)]).collect();
        RoadNetwork::new(segs, vec![1.0], &edges).unwrap()
    }

    #[test]
    fn single_step() {
        let net = binary_net();
        let w = enumerate_walks(&net, SegmentId(0), 1, &[false; 7]).unwrap();
        let steps: Vec<_> = w.walks.iter().map(|w| w.steps.clone()).collect();
        assert_eq!(steps, vec![vec![SegmentId(1)], vec![SegmentId(2)]]);
        assert_eq!(w.unobserved, vec![SegmentId(1), SegmentId(2)]);
    }

    #[test]
    fn count_is_degree_to_the_length() {
        let net = binary_net();
        let w = enumerate_walks(&net, SegmentId(3), 3, &[false; 7]).unwrap();
        assert_eq!(w.len(), 8);
        let mut sorted = w.walks.clone();
        sorted.sort();
        assert_eq!(sorted, w.walks);
        for walk in &w.walks {
            let mut prev = walk.origin;
            for s in &walk.steps {
                assert!(net.successors(prev).any(|n| n == *s));
                prev = *s;
            }
        }
    }

    #[test]
    fn observed_neighbours_leave_walks_but_empty_y() {
        let net = binary_net();
        let mut obs = [false; 7];
        obs[1] = true;
        obs[2] = true;
        let w = enumerate_walks(&net, SegmentId(0), 1, &obs).unwrap();
        assert_eq!(w.len(), 2);
        assert!(w.unobserved.is_empty());
    }

    #[test]
    fn dead_end_stays_in_place() {
        let net = RoadNetwork::new(vec![(0, vec![0.0]), (1, vec![1.0])], vec![1.0], &[(0, 1)]).unwrap();
        let w = enumerate_walks(&net, SegmentId(1), 3, &[false, false]).unwrap();
        assert_eq!(w.walks, vec![Walk { origin: SegmentId(1), steps: vec![SegmentId(1); 3] }]);
        // the origin is part of the walk only through padding
        let w = enumerate_walks(&net, SegmentId(0), 2, &[true, false]).unwrap();
        assert_eq!(w.walks[0].steps, vec![SegmentId(1), SegmentId(1)]);
        assert_eq!(w.unobserved, vec![SegmentId(1)]);
    }
}
