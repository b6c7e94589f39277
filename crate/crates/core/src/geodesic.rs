//! All-pairs shortest-path distances over the directed road graph.

use rayon::prelude::*;

use crate::network::{RoadNetwork, SegmentId};

/// Dense `|V| x |V|` distance matrix, row-major; `f64::INFINITY` marks an
/// unreachable ordered pair.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicMatrix {
    n: usize,
    d: Vec<f64>,
}

impl GeodesicMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let d: Vec<f64> = rows.into_iter().flatten().collect();
        assert_eq!(d.len(), n * n, "distance matrix must be square");
        Self { n, d }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, from: SegmentId, to: SegmentId) -> f64 {
        self.d[from.0 * self.n + to.0]
    }

    pub fn row(&self, from: SegmentId) -> &[f64] {
        &self.d[from.0 * self.n..(from.0 + 1) * self.n]
    }
}

/// Floyd-Warshall. Rows are relaxed in parallel for each pivot; the pivot
/// row does not change during its own pass, so the result is deterministic.
pub fn shortest_path_distances(net: &RoadNetwork) -> GeodesicMatrix {
    let n = net.len();
    let mut d = vec![f64::INFINITY; n * n];
    for i in 0..n {
        d[i * n + i] = 0.0;
    }
    for (a, b, w) in net.edges() {
        let cell = &mut d[a.0 * n + b.0];
        if w < *cell {
            *cell = w;
        }
    }
    let mut pivot_row = vec![0.0; n];
    for k in 0..n {
        pivot_row.copy_from_slice(&d[k * n..(k + 1) * n]);
        let pivot = &pivot_row;
        d.par_chunks_mut(n.max(1)).for_each(|row| {
            let dik = row[k];
            if dik.is_infinite() {
                return;
            }
            for (cell, &dkj) in row.iter_mut().zip(pivot) {
                let via = dik + dkj;
                if via < *cell {
                    *cell = via;
                }
            }
        });
    }
    GeodesicMatrix { n, d }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(n: u64, edges: &[(u64, u64)], feats: &[f64]) -> RoadNetwork {
        RoadNetwork::new(
            (0..n).map(|i| (i, vec![feats[i as usize]])).collect(),
            vec![1.0],
            edges,
        )
        .unwrap()
    }

    #[test]
    fn single_segment() {
        let g = shortest_path_distances(&net(1, &[], &[0.0]));
        assert_eq!(g.row(SegmentId(0)), &[0.0]);
    }

    #[test]
    fn empty_network() {
        let g = shortest_path_distances(&net(0, &[], &[]));
        assert!(g.is_empty());
    }

    #[test]
    fn chain_is_one_way() {
        // features 0,1,3 give weights 1 and 2
        let g = shortest_path_distances(&net(3, &[(0, 1), (1, 2)], &[0.0, 1.0, 3.0]));
        assert_eq!(g.get(SegmentId(0), SegmentId(2)), 3.0);
        assert_eq!(g.get(SegmentId(2), SegmentId(0)), f64::INFINITY);
        assert_eq!(g.get(SegmentId(1), SegmentId(1)), 0.0);
    }

    #[test]
    fn complete_uniform_graph() {
        // every pair of feature vectors is 2 apart in Manhattan distance
        let segs = vec![(0, vec![0.0, 0.0]), (1, vec![1.0, 1.0]), (2, vec![2.0, 0.0])];
        let mut edges = Vec::new();
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    edges.push((a, b));
                }
            }
        }
        let n = RoadNetwork::new(segs, vec![1.0, 1.0], &edges).unwrap();
        let g = shortest_path_distances(&n);
        for a in n.segments() {
            for b in n.segments() {
                let expected = if a == b { 0.0 } else { 2.0 };
                assert_eq!(g.get(a, b), expected);
            }
        }
    }
}
