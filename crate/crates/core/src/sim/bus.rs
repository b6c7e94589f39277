//! All-to-all broadcast bus that records message sizes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum MessageKind {
    /// Sum and count of a sensor's measurements, for the common prior mean.
    MeanStatistic,
    LocalSummary,
    PhiSet,
    Adjacency,
    /// A sensor's full data, sent to a central fusion centre.
    RawObservations,
}

impl MessageKind {
    pub const ALL: [MessageKind; 5] = [
        MessageKind::MeanStatistic,
        MessageKind::LocalSummary,
        MessageKind::PhiSet,
        MessageKind::Adjacency,
        MessageKind::RawObservations,
    ];

    /// Only local summaries may be lost.
    fn droppable(self) -> bool {
        self == MessageKind::LocalSummary
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Traffic {
    pub messages: u64,
    pub bytes: u64,
    pub dropped: u64,
}

/// Payloads are delivered to every other agent in the round they are sent.
#[derive(Clone, Debug)]
pub struct Bus {
    traffic: [Traffic; 5],
    round_bytes: u64,
    drop_probability: f64,
    rng: ChaCha8Rng,
}

impl Bus {
    pub fn reliable() -> Self {
        Self::lossy(0.0, 0)
    }

    /// Each local summary is lost with probability `p`, drawn from a stream
    /// seeded by `seed`.
    pub fn lossy(p: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        Self { traffic: [Traffic::default(); 5], round_bytes: 0, drop_probability: p, rng }
    }

    /// Sends `payload`; returns it if it was delivered.
    pub fn broadcast(&mut self, kind: MessageKind, payload: Vec<u8>) -> Option<Vec<u8>> {
        let t = &mut self.traffic[kind as usize];
        t.messages += 1;
        t.bytes += payload.len() as u64;
        self.round_bytes += payload.len() as u64;
        if kind.droppable() && self.drop_probability > 0.0 && self.rng.random_bool(self.drop_probability) {
            t.dropped += 1;
            return None;
        }
        Some(payload)
    }

    pub fn traffic(&self, kind: MessageKind) -> Traffic {
        self.traffic[kind as usize]
    }

    pub fn total_bytes(&self) -> u64 {
        self.traffic.iter().map(|t| t.bytes).sum()
    }

    /// Bytes sent since the previous call.
    pub fn take_round_bytes(&mut self) -> u64 {
        std::mem::take(&mut self.round_bytes)
    }
}

/// Raw observations: sensor id and count as `u32`, then `(u64 id, f64 value)`
/// pairs, little-endian.
pub fn raw_observations(sensor: usize, ids: &[u64], values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 16 * ids.len());
    out.extend((sensor as u32).to_le_bytes());
    out.extend((ids.len() as u32).to_le_bytes());
    for (id, v) in ids.iter().zip(values) {
        out.extend(id.to_le_bytes());
        out.extend(v.to_le_bytes());
    }
    out
}

/// Sum and count of measurements, `f64` then `u64`, little-endian.
pub fn mean_statistic(sum: f64, count: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(16);
    out.extend(sum.to_le_bytes());
    out.extend(count.to_le_bytes());
    out
}

pub fn read_mean_statistic(bytes: &[u8]) -> Option<(f64, u64)> {
    let sum = f64::from_le_bytes(bytes.get(0..8)?.try_into().ok()?);
    let count = u64::from_le_bytes(bytes.get(8..16)?.try_into().ok()?);
    Some((sum, count))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_bytes_per_kind() {
        let mut bus = Bus::reliable();
        assert!(bus.broadcast(MessageKind::Adjacency, vec![0; 4]).is_some());
        assert!(bus.broadcast(MessageKind::Adjacency, vec![0; 4]).is_some());
        assert!(bus.broadcast(MessageKind::LocalSummary, vec![0; 100]).is_some());
        assert_eq!(bus.traffic(MessageKind::Adjacency), Traffic { messages: 2, bytes: 8, dropped: 0 });
        assert_eq!(bus.total_bytes(), 108);
        assert_eq!(bus.take_round_bytes(), 108);
        assert_eq!(bus.take_round_bytes(), 0);
    }

    #[test]
    fn only_summaries_are_dropped() {
        let mut bus = Bus::lossy(0.5, 3);
        let mut lost = 0;
        for _ in 0..1000 {
            if bus.broadcast(MessageKind::LocalSummary, vec![1]).is_none() {
                lost += 1;
            }
            assert!(bus.broadcast(MessageKind::PhiSet, vec![1]).is_some());
        }
        assert!((400..600).contains(&lost), "{lost}");
        assert_eq!(bus.traffic(MessageKind::LocalSummary).dropped, lost);
    }

    #[test]
    fn raw_message_grows_with_the_data() {
        assert_eq!(raw_observations(0, &[], &[]).len(), 8);
        assert_eq!(raw_observations(0, &[1, 2, 3], &[0.0; 3]).len(), 56);
        let m = mean_statistic(12.5, 3);
        assert_eq!(m.len(), 16);
        assert_eq!(read_mean_statistic(&m), Some((12.5, 3)));
    }
}
