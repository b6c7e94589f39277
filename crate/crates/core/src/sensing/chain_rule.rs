//! Exhaustive check that maximizing the entropy of the visited segments is
//! the same as minimizing the entropy left at the rest of the network.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gp::{entropy, posterior_full, GpModel};
use crate::network::SegmentId;
use crate::sensing::planner::MAX_JOINT_WALKS;
use crate::sensing::walks::WalkSet;

#[derive(Clone, Debug, Serialize)]
pub struct ChainRuleReport {
    pub joint_walks: usize,
    /// Distinct sizes `|Y_w|` checked.
    pub groups: usize,
    /// Groups where the entropy maximizer is not a residual minimizer.
    pub mismatches: usize,
    /// Largest spread of `H[Y_w|D] + H[rest|D ∪ Y_w]` over all joint walks.
    pub max_sum_spread: f64,
    pub passed: bool,
}

/// `observed` holds the distinct observed segments, `z` their measurements.
/// Joint walk segment sets are unions over sensors.
pub fn chain_rule_check(
    model: &GpModel,
    observed: &[SegmentId],
    z: &[f64],
    walk_sets: &[WalkSet],
    tol: f64,
) -> Result<ChainRuleReport> {
    let n = model.len();
    let count: u128 = walk_sets.iter().map(|w| w.len() as u128).product();
    if count > MAX_JOINT_WALKS {
        return Err(Error::EnumerationLimit { count, limit: MAX_JOINT_WALKS });
    }
    let mut is_obs = vec![false; n];
    for s in observed {
        is_obs[s.0] = true;
    }
    // (|Y|, H[Y|D], H[rest|D∪Y])
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    let mut choice = vec![0usize; walk_sets.len()];
    loop {
        let mut y: Vec<SegmentId> = walk_sets
            .iter()
            .zip(&choice)
            .flat_map(|(ws, &c)| ws.walks[c].unobserved(&is_obs))
            .collect();
        y.sort();
        y.dedup();
        let mut in_y = vec![false; n];
        for s in &y {
            in_y[s.0] = true;
        }
        let rest: Vec<SegmentId> = (0..n).map(SegmentId).filter(|s| !is_obs[s.0] && !in_y[s.0]).collect();
        let h_y = entropy(&posterior_full(model, observed, z, &y)?)?;
        let mut both: Vec<SegmentId> = observed.to_vec();
        both.extend(&y);
        // values at Y are irrelevant to the covariance; use the prior mean
        let mut zb = z.to_vec();
        zb.extend(y.iter().map(|s| model.prior_mean()[s.0]));
        let h_rest = entropy(&posterior_full(model, &both, &zb, &rest)?)?;
        rows.push((y.len(), h_y, h_rest));

        let mut i = choice.len();
        let mut done = true;
        while i > 0 {
            i -= 1;
            choice[i] += 1;
            if choice[i] < walk_sets[i].len() {
                done = false;
                break;
            }
            choice[i] = 0;
        }
        if done || walk_sets.is_empty() {
            break;
        }
    }
    let sums: Vec<f64> = rows.iter().map(|r| r.1 + r.2).collect();
    let lo = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_sum_spread = hi - lo;
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut mismatches = 0;
    for &size in &sizes {
        let group: Vec<&(usize, f64, f64)> = rows.iter().filter(|r| r.0 == size).collect();
        let argmax = group
            .iter()
            .fold(None::<&&(usize, f64, f64)>, |b, r| match b {
                Some(b) if b.1 >= r.1 => Some(b),
                _ => Some(r),
            })
            .unwrap();
        let min_rest = group.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
        if argmax.2 - min_rest > tol {
            mismatches += 1;
        }
    }
    Ok(ChainRuleReport {
        joint_walks: rows.len(),
        groups: sizes.len(),
        mismatches,
        max_sum_spread,
        passed: mismatches == 0 && max_sum_spread <= tol,
    })
}
