//! Fusion timing: decentralized per-sensor cost against the exact GP.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::fusion::{global_summary, local_summary, predict_marginals_decentralized};
use crate::gp::{posterior_marginals, GpModel};
use crate::network::SegmentId;
use crate::sim::phenomenon::observe;
use crate::sim::world::Scenario;

pub const BENCH_HEADER: &str = "method,K,D,U,per_sensor_seconds,total_seconds";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub sensors: usize,
    pub observations: usize,
    pub support_size: usize,
    /// Median over repetitions of the slowest sensor's local summary plus
    /// the shared global summary and prediction; the whole computation for
    /// the exact GP.
    pub per_sensor_seconds: f64,
    /// Median over repetitions of all fusion work.
    pub total_seconds: f64,
}

impl BenchRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.16e},{:.16e}",
            self.method, self.sensors, self.observations, self.support_size, self.per_sensor_seconds, self.total_seconds
        )
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `observations` measurements spread over the network by cycling through a
/// random permutation, so no segment repeats within `|V|` consecutive
/// events.
pub fn bench_data(scenario: &Scenario, observations: usize, seed: u64) -> (Vec<SegmentId>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<SegmentId> = scenario.net.segments().collect();
    perm.shuffle(&mut rng);
    let d: Vec<SegmentId> = perm.iter().copied().cycle().take(observations).collect();
    let z = observe(&scenario.truth, &d, scenario.cov.noise_variance(), &mut rng);
    (d, z)
}

/// Times the decentralized fusion for each sensor count, splitting the data
/// into contiguous blocks, and the exact GP on the same data. Every method
/// predicts means and variances at every segment.
pub fn bench_fusion(
    scenario: &Scenario,
    sensor_counts: &[usize],
    observations: usize,
    repetitions: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let (d, z) = bench_data(scenario, observations, seed);
    let mean = z.iter().sum::<f64>() / z.len().max(1) as f64;
    let model = GpModel::with_constant_mean(mean, Arc::clone(&scenario.cov));
    let all: Vec<SegmentId> = scenario.net.segments().collect();
    let u = &scenario.support;
    let mut rows = Vec::new();
    for &k in sensor_counts {
        let block = observations.div_ceil(k.max(1)).max(1);
        let parts: Vec<(&[SegmentId], &[f64])> = d.chunks(block).zip(z.chunks(block)).collect();
        let mut per = Vec::with_capacity(repetitions);
        let mut total = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let mut locals = Vec::with_capacity(parts.len());
            let mut times = Vec::with_capacity(parts.len());
            for (i, (dk, zk)) in parts.iter().enumerate() {
                let t = Instant::now();
                locals.push(local_summary(&model, u, i, dk, zk)?);
                times.push(t.elapsed().as_secs_f64());
            }
            let t = Instant::now();
            let g = global_summary(u, &locals)?;
            let out = predict_marginals_decentralized(&model, u, &g, &all)?;
            std::hint::black_box(out);
            let shared = t.elapsed().as_secs_f64();
            per.push(times.iter().copied().fold(0.0, f64::max) + shared);
            total.push(times.iter().sum::<f64>() + shared);
        }
        rows.push(BenchRow {
            method: "d2fas".into(),
            sensors: k,
            observations,
            support_size: u.len(),
            per_sensor_seconds: median(per),
            total_seconds: median(total),
        });
    }
    let mut full = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let t = Instant::now();
        std::hint::black_box(posterior_marginals(&model, &d, &z, &all)?);
        full.push(t.elapsed().as_secs_f64());
    }
    let m = median(full);
    rows.push(BenchRow {
        method: "full-gp-centralized".into(),
        sensors: 1,
        observations,
        support_size: 0,
        per_sensor_seconds: m,
        total_seconds: m,
    });
    Ok(rows)
}
