use crate::error::{Error, Result};
use crate::sensing::phi::PhiSet;

/// Sensors `k` and `k'` are adjacent when some pair of their vectors has
/// `|φᵀφ'| > ε`. Empty sets are never adjacent.
pub fn adjacent(a: &PhiSet, b: &PhiSet, eps: f64) -> bool {
    a.max_cross(b).is_some_and(|m| m > eps)
}

/// Row `a_k` of the adjacency matrix, as computed by sensor `k` from the
/// broadcast Φ sets. `phis` is indexed by sensor id.
pub fn adjacency_vector(k: usize, phis: &[PhiSet], eps: f64) -> Vec<bool> {
    (0..phis.len()).map(|j| j != k && adjacent(&phis[k], &phis[j], eps)).collect()
}

/// Wire size of one adjacency vector: one byte per sensor.
pub fn adjacency_bytes(k: usize) -> usize {
    k
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoordinationGraph {
    pub adjacency: Vec<Vec<bool>>,
    /// Connected components, each ascending, ordered by smallest member.
    pub components: Vec<Vec<usize>>,
    pub kappa: usize,
}

impl CoordinationGraph {
    /// Assembles the graph from the rows broadcast by each sensor.
    pub fn from_rows(rows: Vec<Vec<bool>>) -> Result<Self> {
        let k = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch { expected: k, got: row.len() });
            }
            if row[i] {
                return Err(Error::AsymmetricAdjacency { a: i, b: i });
            }
            for j in (i + 1)..k {
                if row[j] != rows[j][i] {
                    return Err(Error::AsymmetricAdjacency { a: i, b: j });
                }
            }
        }
        let mut seen = vec![false; k];
        let mut components = Vec::new();
        for start in 0..k {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                comp.push(v);
                for w in (0..k).rev() {
                    if rows[v][w] && !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            components.push(comp);
        }
        let kappa = components.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self { adjacency: rows, components, kappa })
    }

    pub fn sensors(&self) -> usize {
        self.adjacency.len()
    }

    pub fn component_of(&self, k: usize) -> usize {
        self.components.iter().position(|c| c.contains(&k)).expect("sensor in graph")
    }
}

/// Builds the coordination graph from every sensor's Φ set.
pub fn build_coordination_graph(phis: &[PhiSet], eps: f64) -> Result<CoordinationGraph> {
    if !(eps > 0.0) {
        return Err(Error::Threshold(eps));
    }
    if phis.is_empty() {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    let rows = (0..phis.len()).map(|k| adjacency_vector(k, phis, eps)).collect();
    CoordinationGraph::from_rows(rows)
}
