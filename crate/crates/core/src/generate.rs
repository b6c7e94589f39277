//! Synthetic road networks.
//!
//! Every segment carries four features: length in metres, number of lanes,
//! speed limit in km/h and heading in degrees. Grids model each road between
//! two neighbouring intersections as two directed segments. A segment leads
//! into every segment leaving its end intersection except the reverse of
//! itself; U-turns happen only at dead ends and at intersections joining
//! just two roads, such as grid corners.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::RoadNetwork;

pub const FEATURE_RANGES: [f64; 4] = [200.0, 3.0, 40.0, 360.0];

/// Spacing between neighbouring intersections, in metres.
const BLOCK: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetworkKind {
    Grid,
    Ring,
    Random,
}

impl NetworkKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "grid" => Ok(Self::Grid),
            "ring" => Ok(Self::Ring),
            "random" => Ok(Self::Random),
            other => Err(Error::InvalidNetwork(format!(
                "unknown network kind `{other}`; valid kinds are grid, ring, random"
            ))),
        }
    }
}

/// `grid`: `size`×`size` intersections, `4 size (size-1)` segments.
/// `ring`: `size` segments in a directed cycle.
/// `random`: exactly `size` segments trimmed from a jittered grid, strongly
/// connected whenever the trimming allows it and weakly connected always.
pub fn generate_network(kind: NetworkKind, size: usize, seed: u64) -> Result<RoadNetwork> {
    if size < 1 {
        return Err(Error::InvalidNetwork("size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = match kind {
        NetworkKind::Grid => {
            if size < 2 {
                return Err(Error::InvalidNetwork("a grid needs at least 2x2 intersections".into()));
            }
            let g = Grid::new(size, 0.0, &mut rng);
            g.build(&(0..g.segments.len()).collect::<Vec<_>>())?
        }
        NetworkKind::Ring => ring(size)?,
        NetworkKind::Random => random(size, &mut rng)?,
    };
    if !net.is_weakly_connected() {
        return Err(Error::InvalidNetwork("generated network is disconnected".into()));
    }
    Ok(net)
}

fn ring(n: usize) -> Result<RoadNetwork> {
    let segments = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let length = BLOCK * (1.0 + 0.5 * (std::f64::consts::TAU * t).sin());
            (i as u64, vec![length, 2.0, 50.0, 360.0 * t])
        })
        .collect();
    let edges: Vec<(u64, u64)> = (0..n).map(|i| (i as u64, ((i + 1) % n) as u64)).collect();
    RoadNetwork::new(segments, FEATURE_RANGES.to_vec(), &edges)
}

struct Grid {
    /// `(from, to)` intersection indices.
    segments: Vec<(usize, usize)>,
    features: Vec<Vec<f64>>,
    intersections: usize,
}

impl Grid {
    fn new(g: usize, jitter: f64, rng: &mut impl Rng) -> Self {
        let pos: Vec<(f64, f64)> = (0..g * g)
            .map(|v| {
                let (i, j) = (v / g, v % g);
                let dx = if jitter > 0.0 { rng.random_range(-jitter..jitter) } else { 0.0 };
                let dy = if jitter > 0.0 { rng.random_range(-jitter..jitter) } else { 0.0 };
                ((j as f64 + dx) * BLOCK, (i as f64 + dy) * BLOCK)
            })
            .collect();
        let mut segments = Vec::new();
        let mut features = Vec::new();
        let mut road = |a: usize, b: usize, arterial: bool, rng: &mut dyn rand::RngCore| {
            let (lanes, speed) = if arterial {
                (3.0, 70.0)
            } else if rng.random_bool(0.5) {
                (2.0, 50.0)
            } else {
                (1.0, 40.0)
            };
            let (ax, ay) = pos[a];
            let (bx, by) = pos[b];
            let length = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
            for (u, v) in [(a, b), (b, a)] {
                let (ux, uy) = pos[u];
                let (vx, vy) = pos[v];
                let heading = (vy - uy).atan2(vx - ux).to_degrees().rem_euclid(360.0);
                segments.push((u, v));
                features.push(vec![length, lanes, speed, heading]);
            }
        };
        for i in 0..g {
            for j in 0..g {
                let v = i * g + j;
                if j + 1 < g {
                    road(v, v + 1, i % 4 == 0, rng);
                }
                if i + 1 < g {
                    road(v, v + g, j % 4 == 0, rng);
                }
            }
        }
        Self { segments, features, intersections: g * g }
    }

    /// Successor lists over the kept segments, by position in `keep`.
    fn successors(&self, keep: &[usize]) -> Vec<Vec<usize>> {
        let mut leaving: Vec<Vec<usize>> = vec![Vec::new(); self.intersections];
        for (pos, &s) in keep.iter().enumerate() {
            leaving[self.segments[s].0].push(pos);
        }
        keep.iter()
            .map(|&s| {
                let (from, to) = self.segments[s];
                let out = &leaving[to];
                if out.len() <= 2 {
                    return out.clone();
                }
                out.iter().copied().filter(|&p| self.segments[keep[p]].1 != from).collect()
            })
            .collect()
    }

    fn build(&self, keep: &[usize]) -> Result<RoadNetwork> {
        let succ = self.successors(keep);
        let segments = keep
            .iter()
            .enumerate()
            .map(|(pos, &s)| (pos as u64, self.features[s].clone()))
            .collect();
        let edges: Vec<(u64, u64)> = succ
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().map(move |&b| (a as u64, b as u64)))
            .collect();
        RoadNetwork::new(segments, FEATURE_RANGES.to_vec(), &edges)
    }
}

fn random(size: usize, rng: &mut ChaCha8Rng) -> Result<RoadNetwork> {
    let mut g = 2;
    while 4 * g * (g - 1) < size {
        g += 1;
    }
    let grid = Grid::new(g, 0.25, rng);
    let mut keep: Vec<usize> = (0..grid.segments.len()).collect();
    for strong in [true, false] {
        let mut order = keep.clone();
        order.shuffle(rng);
        for s in order {
            if keep.len() == size {
                break;
            }
            let trial: Vec<usize> = keep.iter().copied().filter(|&x| x != s).collect();
            let succ = grid.successors(&trial);
            let ok = if strong { strongly_connected(&succ) } else { weakly_connected(&succ) };
            if ok {
                keep = trial;
            }
        }
    }
    if keep.len() != size {
        return Err(Error::InvalidNetwork(format!(
            "could not trim a connected network down to {size} segments"
        )));
    }
    grid.build(&keep)
}

fn reach(adj: &[Vec<usize>]) -> usize {
    if adj.is_empty() {
        return 0;
    }
    let mut seen = vec![false; adj.len()];
    seen[0] = true;
    let mut queue = VecDeque::from([0]);
    let mut count = 1;
    while let Some(a) = queue.pop_front() {
        for &b in &adj[a] {
            if !seen[b] {
                seen[b] = true;
                count += 1;
                queue.push_back(b);
            }
        }
    }
    count
}

fn reversed(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut back = vec![Vec::new(); adj.len()];
    for (a, list) in adj.iter().enumerate() {
        for &b in list {
            back[b].push(a);
        }
    }
    back
}

fn strongly_connected(adj: &[Vec<usize>]) -> bool {
    reach(adj) == adj.len() && reach(&reversed(adj)) == adj.len()
}

fn weakly_connected(adj: &[Vec<usize>]) -> bool {
    let mut both = reversed(adj);
    for (a, list) in adj.iter().enumerate() {
        both[a].extend(list);
    }
    reach(&both) == adj.len()
}
