//! Per-round metrics and their comma-separated table.

use std::fmt::Write as _;

use serde::Serialize;

pub const CSV_HEADER: &str =
    "round,algorithm,K,L,U,epsilon,seed,D,rmse,fusion_seconds,sensing_seconds,bytes_broadcast,kappa";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub algorithm: String,
    pub sensors: usize,
    pub walk_length: usize,
    pub support_size: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Observation events `Σ_k |D_k|` when the round starts.
    pub observations: usize,
    pub rmse: f64,
    pub fusion_seconds: f64,
    pub sensing_seconds: f64,
    pub bytes_broadcast: u64,
    pub kappa: usize,
}

impl RoundMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{},{}",
            self.round,
            self.algorithm,
            self.sensors,
            self.walk_length,
            self.support_size,
            self.epsilon,
            self.seed,
            self.observations,
            self.rmse,
            self.fusion_seconds,
            self.sensing_seconds,
            self.bytes_broadcast,
            self.kappa
        )
    }
}

pub fn to_csv(rows: &[RoundMetrics]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{}", r.csv_row()).unwrap();
    }
    out
}

/// `sqrt(|V|⁻¹ Σ_s (z_s - μ̂_s)²)`.
pub fn rmse(predicted: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(predicted.len(), truth.len());
    if truth.is_empty() {
        return 0.0;
    }
    let sq: f64 = predicted.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    (sq / truth.len() as f64).sqrt()
}

/// Mean RMSE over the rows of `algorithm` that first reach `target`
/// observations in each seed. Seeds that never reach it are skipped.
pub fn rmse_at(rows: &[RoundMetrics], algorithm: &str, target: usize) -> Option<f64> {
    let mut seeds: Vec<u64> = rows.iter().filter(|r| r.algorithm == algorithm).map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let hits: Vec<f64> = seeds
        .iter()
        .filter_map(|&s| {
            rows.iter()
                .filter(|r| r.algorithm == algorithm && r.seed == s)
                .find(|r| r.observations >= target)
                .map(|r| r.rmse)
        })
        .collect();
    if hits.is_empty() {
        None
    } else {
        Some(hits.iter().sum::<f64>() / hits.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        let t = [3.0, -1.0, 7.5];
        let p: Vec<f64> = t.iter().map(|v| v + 2.5).collect();
        assert!((rmse(&p, &t) - 2.5).abs() < 1e-12);
        // errors 3 and 4
        assert!((rmse(&[3.0, 4.0], &[0.0, 0.0]) - 12.5_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let r = RoundMetrics {
            round: 0,
            algorithm: "d2fas".into(),
            sensors: 4,
            walk_length: 2,
            support_size: 64,
            epsilon: 0.1,
            seed: 7,
            observations: 4,
            rmse: 1.0 / 3.0,
            fusion_seconds: 0.0,
            sensing_seconds: 0.0,
            bytes_broadcast: 10,
            kappa: 2,
        };
        let text = to_csv(&[r]);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let row = lines.next().unwrap();
        let rmse: f64 = row.split(',').nth(8).unwrap().parse().unwrap();
        assert_eq!(rmse, 1.0 / 3.0);
    }
}
