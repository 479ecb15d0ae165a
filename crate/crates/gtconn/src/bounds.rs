//! Diagnostics for the entropy-gradient bounds.

use gtconn_core::entropy::{
    feasibility_box_a, feasibility_box_w, h2_grad, indep_activation, indep_bound_a, relaxed_constraints_hold,
    sc_lower_bound_w, strong_concavity_witness, MAX_ENUM_BITS,
};
use gtconn_core::rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::AppResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub w_grid_points: usize,
    /// Points where `4|w - 1/2| > |h2'(w)|`.
    pub w_violations: usize,
    pub a_grid_points: usize,
    /// Points where `4|a - (1 - eps)|` exceeds the independent bound.
    pub a_violations: usize,
    pub witness_instances: usize,
    pub witness_min: f64,
    pub feasibility_instances: usize,
    /// Boxes with lower above upper (beyond rounding).
    pub feasibility_crossings: usize,
}

impl BoundsReport {
    pub fn passes(&self) -> bool {
        self.w_violations == 0
            && self.a_violations == 0
            && self.witness_min >= 4.0 - 1e-6
            && self.feasibility_crossings == 0
    }
}

const TOL: f64 = 1e-9;

/// `4|w - 1/2| <= |h2'(w)|` on `points` interior grid points.
pub fn check_w_chain(points: usize) -> AppResult<usize> {
    let mut bad = 0;
    for k in 1..=points {
        let w = k as f64 / (points + 1) as f64;
        if sc_lower_bound_w(w) > h2_grad(w)?.abs() + TOL {
            bad += 1;
        }
    }
    Ok(bad)
}

/// `4|a - (1 - eps)| <= indep_bound_a(a, w)` over `a_points x w_points`
/// pairs, `w` ranging over stimulation sets of size 1 to 4.
pub fn check_a_chain(a_points: usize, w_sets: usize, seed: u64) -> AppResult<usize> {
    let mut r = rng::stream(rng::derive_seed(seed, "bounds-a"), 0);
    let sets: Vec<Vec<f64>> = (0..w_sets)
        .map(|_| {
            let s = r.random_range(1..=4);
            (0..s).map(|_| r.random_range(0.01..0.99)).collect()
        })
        .collect();
    let mut bad = 0;
    for w in &sets {
        let act = indep_activation(w)?;
        for k in 1..=a_points {
            let a = k as f64 / (a_points + 1) as f64;
            if 4.0 * (a - act).abs() > indep_bound_a(a, w)? + TOL {
                bad += 1;
            }
        }
    }
    Ok(bad)
}

/// Smallest curvature witness over `instances` random families of
/// 1 to `MAX_ENUM_BITS` variables.
pub fn witness_min(instances: usize, seed: u64) -> AppResult<f64> {
    let mut r = rng::stream(rng::derive_seed(seed, "bounds-witness"), 0);
    let mut min = f64::INFINITY;
    for k in 0..instances {
        let n = r.random_range(1..=MAX_ENUM_BITS.min(8));
        min = min.min(strong_concavity_witness(n, None, rng::derive_indexed(seed, k as u64))?);
    }
    Ok(min)
}

/// Draw feasible `(w, a)` for random designs on at most 8 neurons and count
/// boxes whose bounds cross.
pub fn feasibility_crossings(instances: usize, seed: u64) -> usize {
    let mut r = rng::stream(rng::derive_seed(seed, "bounds-feasibility"), 0);
    let mut bad = 0;
    for _ in 0..instances {
        let n = r.random_range(1..=8usize);
        let w: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let tests: Vec<Vec<u32>> = (0..r.random_range(1..=6))
            .map(|_| {
                let mut stim: Vec<u32> = (0..n as u32).filter(|_| r.random_bool(0.4)).collect();
                if stim.is_empty() {
                    stim.push(r.random_range(0..n as u32));
                }
                stim
            })
            .collect();
        let a: Vec<f64> = tests
            .iter()
            .map(|stim| {
                let (lo, hi) = feasibility_box_a(stim, &w);
                lo + r.random::<f64>() * (hi - lo)
            })
            .collect();
        if !relaxed_constraints_hold(&w, &a, &tests, 1e-12) {
            bad += 1;
            continue;
        }
        for i in 0..n {
            let (lo, hi) = feasibility_box_w(i, &w, &a, &tests);
            if lo > hi + TOL || w[i] < lo - TOL || w[i] > hi + TOL {
                bad += 1;
            }
        }
        for (stim, &at) in tests.iter().zip(&a) {
            let (lo, hi) = feasibility_box_a(stim, &w);
            if lo > hi + TOL || at < lo - TOL || at > hi + TOL {
                bad += 1;
            }
        }
    }
    bad
}

pub fn run_bounds(seed: u64) -> AppResult<BoundsReport> {
    let w_grid_points = 1000;
    let (a_points, w_sets) = (100, 100);
    let witness_instances = 100;
    let feasibility_instances = 100;
    Ok(BoundsReport {
        w_grid_points,
        w_violations: check_w_chain(w_grid_points)?,
        a_grid_points: a_points * w_sets,
        a_violations: check_a_chain(a_points, w_sets, seed)?,
        witness_instances,
        witness_min: witness_min(witness_instances, seed)?,
        feasibility_instances,
        feasibility_crossings: feasibility_crossings(feasibility_instances, seed),
    })
}
