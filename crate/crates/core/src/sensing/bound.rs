//! Exhaustive check of the entropy guarantee for the partially
//! decentralized walk selection.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sensing::coordination::{build_coordination_graph, CoordinationGraph};
use crate::sensing::planner::{SensingRound, MAX_JOINT_WALKS};

/// Tolerance of the determinant sandwich checks.
pub const SANDWICH_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub sensors: usize,
    pub walk_length: usize,
    pub eps: f64,
    pub kappa: usize,
    pub xi: f64,
    /// `K^1.5 L^2.5 κ ξ ε`.
    pub x: f64,
    pub condition_holds: bool,
    /// `½ log 1/(1 - x²)`, infinite when the condition fails.
    pub eps_bar: f64,
    /// `H̄[w*] - H̄[ŵ]`.
    pub gap: f64,
    pub optimum_entropy: f64,
    pub decentralized_entropy: f64,
    /// `gap <= eps_bar` when the condition holds, and `gap >= -1e-9`.
    pub bound_ok: bool,
    pub sandwich: SandwichStats,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SandwichStats {
    /// Joint walks examined.
    pub walks: usize,
    /// Walks with `|Y_w| ρ_w² < 1`, where the sandwich applies.
    pub applicable: usize,
    pub violations: usize,
    /// Largest amount by which either side was exceeded.
    pub worst_excess: f64,
}

/// Runs the guarantee check for one round at threshold `eps`.
pub fn theorem2_check(round: &SensingRound, walk_length: usize, eps: f64) -> Result<BoundReport> {
    let graph = build_coordination_graph(&round.phis(), eps)?;
    theorem2_check_with_graph(round, walk_length, eps, &graph)
}

pub fn theorem2_check_with_graph(
    round: &SensingRound,
    walk_length: usize,
    eps: f64,
    graph: &CoordinationGraph,
) -> Result<BoundReport> {
    let k = round.len();
    let all: Vec<usize> = (0..k).collect();
    let total = round.joint_count(&all);
    if total > MAX_JOINT_WALKS {
        return Err(Error::EnumerationLimit { count: total, limit: MAX_JOINT_WALKS });
    }
    let optimum = round.centralized_walk_max()?;
    let plans = round.decentralized(graph)?;
    let hat = round.assemble(&plans);
    let hat_objective = round.objective(&all, &hat);

    let mut xi = 0.0_f64;
    for comp in &graph.components {
        for_each_choice(round, comp, |choice| {
            let m = round.joint_matrix(comp, choice);
            if m.nrows() > 0 {
                let inv = m.try_inverse().unwrap_or_else(|| DMatrix::from_element(1, 1, f64::INFINITY));
                xi = xi.max(inv.amax());
            }
        });
    }

    let x = (k as f64).powf(1.5) * (walk_length as f64).powf(2.5) * graph.kappa as f64 * xi * eps;
    let condition_holds = x < 1.0;
    let eps_bar = if condition_holds { 0.5 * (1.0 / (1.0 - x * x)).ln() } else { f64::INFINITY };
    let gap = 0.5 * (optimum.objective - hat_objective);
    let bound_ok = gap >= -1e-9 && (!condition_holds || gap <= eps_bar);

    let component = component_labels(graph);
    let mut sandwich = SandwichStats::default();
    for_each_choice(round, &all, |choice| {
        sandwich_one(round, &all, choice, &component, &mut sandwich);
    });

    Ok(BoundReport {
        sensors: k,
        walk_length,
        eps,
        kappa: graph.kappa,
        xi,
        x,
        condition_holds,
        eps_bar,
        gap,
        optimum_entropy: optimum.entropy(),
        decentralized_entropy: 0.5 * hat_objective,
        bound_ok,
        sandwich,
    })
}

fn component_labels(graph: &CoordinationGraph) -> Vec<usize> {
    let mut out = vec![0; graph.sensors()];
    for (c, members) in graph.components.iter().enumerate() {
        for &k in members {
            out[k] = c;
        }
    }
    out
}

fn for_each_choice(round: &SensingRound, members: &[usize], mut f: impl FnMut(&[usize])) {
    let sizes: Vec<usize> = members.iter().map(|&k| round.sensors()[k].walks.len()).collect();
    if sizes.iter().any(|&s| s == 0) {
        return;
    }
    let mut choice = vec![0; members.len()];
    loop {
        f(&choice);
        let mut i = choice.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < sizes[i] {
                break;
            }
            choice[i] = 0;
        }
    }
}

/// `log|Σ̄| <= log|Σ̂| <= log|Σ̄| - log(1 - |Y| ρ²)` for one joint walk, with
/// `Σ̂` the component-block-diagonal part of `Σ̄`.
fn sandwich_one(
    round: &SensingRound,
    members: &[usize],
    choice: &[usize],
    component: &[usize],
    stats: &mut SandwichStats,
) {
    let full = round.joint_matrix(members, choice);
    let n = full.nrows();
    stats.walks += 1;
    if n == 0 {
        return;
    }
    let owner: Vec<usize> = members
        .iter()
        .zip(choice)
        .flat_map(|(&k, &c)| std::iter::repeat_n(component[k], round.sensors()[k].y_per_walk[c].len()))
        .collect();
    let hat = DMatrix::from_fn(n, n, |i, j| if owner[i] == owner[j] { full[(i, j)] } else { 0.0 });
    let tilde = &full - &hat;
    let (Some(ch), Some(cf)) = (hat.clone().cholesky(), full.clone().cholesky()) else {
        return;
    };
    let l = ch.l();
    let mut w = tilde;
    l.solve_lower_triangular_mut(&mut w);
    let mut w = w.transpose();
    l.solve_lower_triangular_mut(&mut w);
    crate::linalg::symmetrize(&mut w);
    let rho = SymmetricEigen::new(w).eigenvalues.amax();
    let q = n as f64 * rho * rho;
    if q >= 1.0 {
        return;
    }
    stats.applicable += 1;
    let ld_full: f64 = cf.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let ld_hat: f64 = ch.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let upper = ld_full - (1.0 - q).ln();
    let excess = (ld_full - ld_hat).max(ld_hat - upper);
    if excess > SANDWICH_TOL {
        stats.violations += 1;
    }
    stats.worst_excess = stats.worst_excess.max(excess);
}
