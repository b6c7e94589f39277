//! Road network: directed graph of road segments with feature vectors.
//!
//! Vertices are road segments, an edge `(s, s')` means the end of `s` joins
//! the start of `s'`, and each edge is weighted by the standardized
//! Manhattan distance between the two segments' features. Weights are always
//! derived from features and never read from input.
//!
//! # File format
//!
//! The comma-separated variant has two sections introduced by a line holding
//! just `segments` or `edges`. Blank lines and lines starting with `#` are
//! ignored.
//!
//! ```text
//! segments
//! ranges,100,4          # r_1..r_p, one per feature
//! 0,100,2               # id,f_1..f_p
//! 1,200,4
//! edges
//! 0,1                   # from_id,to_id
//! 1,0
//! ```
//!
//! The structured variant is a JSON object:
//!
//! ```text
//! {"ranges":[100,4],
//!  "segments":[{"id":0,"features":[100,2]},{"id":1,"features":[200,4]}],
//!  "edges":[[0,1],[1,0]]}
//! ```
//!
//! Segment ids are arbitrary `u64` labels. Internally segments are stored
//! sorted by label and addressed by their dense position ([`SegmentId`]),
//! so ordering by `SegmentId` is ordering by label.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense index of a segment inside a [`RoadNetwork`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SegmentId(pub usize);

impl SegmentId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Standardized Manhattan distance `Σ_i |a_i - b_i| / r_i`.
pub fn edge_weight(a: &[f64], b: &[f64], ranges: &[f64]) -> Result<f64> {
    if a.len() != ranges.len() {
        return Err(Error::DimensionMismatch { expected: ranges.len(), got: a.len() });
    }
    if b.len() != ranges.len() {
        return Err(Error::DimensionMismatch { expected: ranges.len(), got: b.len() });
    }
    check_ranges(ranges)?;
    Ok(a.iter()
        .zip(b)
        .zip(ranges)
        .map(|((x, y), r)| (x - y).abs() / r)
        .sum())
}

fn check_ranges(ranges: &[f64]) -> Result<()> {
    for (index, &value) in ranges.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveRange { index, value });
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct RoadNetwork {
    labels: Vec<u64>,
    features: Vec<Vec<f64>>,
    ranges: Vec<f64>,
    /// Sorted out-neighbours with the weight of each edge.
    out_edges: Vec<Vec<(SegmentId, f64)>>,
    edge_count: usize,
}

impl RoadNetwork {
    /// Builds a network from labelled segments, feature ranges and labelled
    /// edges. Edge weights are computed from the features.
    pub fn new(
        segments: Vec<(u64, Vec<f64>)>,
        ranges: Vec<f64>,
        edges: &[(u64, u64)],
    ) -> Result<Self> {
        check_ranges(&ranges)?;
        let mut segments = segments;
        segments.sort_by_key(|(label, _)| *label);
        for pair in segments.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::InvalidNetwork(format!(
                    "duplicate segment id {}",
                    pair[0].0
                )));
            }
        }
        for (label, f) in &segments {
            if f.len() != ranges.len() {
                return Err(Error::InvalidNetwork(format!(
                    "segment {label} has {} features but {} ranges were declared",
                    f.len(),
                    ranges.len()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidNetwork(format!(
                    "segment {label} has a non-finite feature"
                )));
            }
        }
        let index: HashMap<u64, usize> = segments
            .iter()
            .enumerate()
            .map(|(i, (label, _))| (*label, i))
            .collect();
        let (labels, features): (Vec<u64>, Vec<Vec<f64>>) = segments.into_iter().unzip();

        let mut out_edges: Vec<Vec<(SegmentId, f64)>> = vec![Vec::new(); labels.len()];
        let mut seen = HashSet::new();
        for &(from, to) in edges {
            let (&i, &j) = match (index.get(&from), index.get(&to)) {
                (Some(i), Some(j)) => (i, j),
                _ => {
                    return Err(Error::InvalidNetwork(format!(
                        "edge ({from}, {to}) references an unknown segment"
                    )))
                }
            };
            if !seen.insert((i, j)) {
                return Err(Error::InvalidNetwork(format!("duplicate edge ({from}, {to})")));
            }
            let w = edge_weight(&features[i], &features[j], &ranges)?;
            out_edges[i].push((SegmentId(j), w));
        }
        for list in &mut out_edges {
            list.sort_by_key(|(s, _)| *s);
        }
        Ok(Self { labels, features, ranges, out_edges, edge_count: seen.len() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn segments(&self) -> impl Iterator<Item = SegmentId> + '_ {
        (0..self.len()).map(SegmentId)
    }

    pub fn label(&self, s: SegmentId) -> u64 {
        self.labels[s.0]
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn segment_by_label(&self, label: u64) -> Option<SegmentId> {
        self.labels.binary_search(&label).ok().map(SegmentId)
    }

    pub fn features(&self, s: SegmentId) -> &[f64] {
        &self.features[s.0]
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn contains(&self, s: SegmentId) -> bool {
        s.0 < self.len()
    }

    /// Out-neighbours of `s` in ascending order, with edge weights.
    pub fn out_edges(&self, s: SegmentId) -> &[(SegmentId, f64)] {
        &self.out_edges[s.0]
    }

    pub fn successors(&self, s: SegmentId) -> impl Iterator<Item = SegmentId> + '_ {
        self.out_edges[s.0].iter().map(|(t, _)| *t)
    }

    pub fn edges(&self) -> impl Iterator<Item = (SegmentId, SegmentId, f64)> + '_ {
        self.out_edges
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().map(move |&(j, w)| (SegmentId(i), j, w)))
    }

    /// Maximum out-degree δ.
    pub fn max_out_degree(&self) -> usize {
        self.out_edges.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// True when the underlying undirected graph is connected.
    pub fn is_weakly_connected(&self) -> bool {
        let n = self.len();
        if n <= 1 {
            return true;
        }
        let mut undirected = vec![Vec::new(); n];
        for (a, b, _) in self.edges() {
            undirected[a.0].push(b.0);
            undirected[b.0].push(a.0);
        }
        reach_count(&undirected, 0) == n
    }

    /// True when every segment can reach every other along directed edges.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.len();
        if n <= 1 {
            return true;
        }
        let mut forward = vec![Vec::new(); n];
        let mut backward = vec![Vec::new(); n];
        for (a, b, _) in self.edges() {
            forward[a.0].push(b.0);
            backward[b.0].push(a.0);
        }
        reach_count(&forward, 0) == n && reach_count(&backward, 0) == n
    }

    /// Parses either file variant and rejects networks that are not weakly
    /// connected.
    pub fn parse(text: &str) -> Result<Self> {
        let net = if text.trim_start().starts_with('{') {
            Self::parse_json(text)?
        } else {
            Self::parse_csv(text)?
        };
        if !net.is_weakly_connected() {
            return Err(Error::InvalidNetwork("network is not weakly connected".into()));
        }
        Ok(net)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn parse_csv(text: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Segments,
            Edges,
        }
        let mut section = Section::None;
        let mut ranges: Option<Vec<f64>> = None;
        let mut segments = Vec::new();
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line {
                "segments" => {
                    section = Section::Segments;
                    continue;
                }
                "edges" => {
                    section = Section::Edges;
                    continue;
                }
                _ => {}
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            match section {
                Section::None => {
                    return Err(parse_err(line_no, "record before any section header"))
                }
                Section::Segments if fields[0] == "ranges" => {
                    if ranges.is_some() {
                        return Err(parse_err(line_no, "ranges declared twice"));
                    }
                    ranges = Some(
                        fields[1..]
                            .iter()
                            .map(|f| parse_f64(f, line_no))
                            .collect::<Result<_>>()?,
                    );
                }
                Section::Segments => {
                    if ranges.is_none() {
                        return Err(parse_err(line_no, "segment record before the ranges row"));
                    }
                    let id = parse_u64(fields[0], line_no)?;
                    let feats = fields[1..]
                        .iter()
                        .map(|f| parse_f64(f, line_no))
                        .collect::<Result<Vec<_>>>()?;
                    segments.push((id, feats));
                }
                Section::Edges => {
                    if fields.len() != 2 {
                        return Err(parse_err(line_no, "edge record must be from_id,to_id"));
                    }
                    edges.push((parse_u64(fields[0], line_no)?, parse_u64(fields[1], line_no)?));
                }
            }
        }
        let ranges = ranges.ok_or_else(|| parse_err(0, "missing ranges row"))?;
        Self::new(segments, ranges, &edges)
    }

    fn parse_json(text: &str) -> Result<Self> {
        let doc: NetworkDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        let segments = doc.segments.into_iter().map(|s| (s.id, s.features)).collect();
        Self::new(segments, doc.ranges, &doc.edges)
    }

    /// Comma-separated rendering; [`RoadNetwork::parse`] reads it back.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("segments\nranges");
        for r in &self.ranges {
            write!(out, ",{}", r).unwrap();
        }
        out.push('\n');
        for (label, f) in self.labels.iter().zip(&self.features) {
            write!(out, "{label}").unwrap();
            for v in f {
                write!(out, ",{}", v).unwrap();
            }
            out.push('\n');
        }
        out.push_str("edges\n");
        for (a, b, _) in self.edges() {
            writeln!(out, "{},{}", self.label(a), self.label(b)).unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = NetworkDocument {
            ranges: self.ranges.clone(),
            segments: self
                .labels
                .iter()
                .zip(&self.features)
                .map(|(&id, f)| SegmentRecord { id, features: f.clone() })
                .collect(),
            edges: self.edges().map(|(a, b, _)| (self.label(a), self.label(b))).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("network document serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkDocument {
    ranges: Vec<f64>,
    segments: Vec<SegmentRecord>,
    edges: Vec<(u64, u64)>,
}

#[derive(Serialize, Deserialize)]
struct SegmentRecord {
    id: u64,
    features: Vec<f64>,
}

fn reach_count(adj: &[Vec<usize>], start: usize) -> usize {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse { line, message: message.to_string() }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|_| parse_err(line, &format!("not a number: {s:?}")))
}

fn parse_u64(s: &str, line: usize) -> Result<u64> {
    s.parse().map_err(|_| parse_err(line, &format!("not a segment id: {s:?}")))
}
