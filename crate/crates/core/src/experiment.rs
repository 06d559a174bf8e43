//! Seeded batches of iterated-dual sequences on random expectations.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::TraceVector;
use crate::error::Result;
use crate::expectation::random_expectation;
use crate::inclusion::Inclusion;
use crate::tower::iterate_duals;

/// Width of the Gaussian log-density used to draw samples.
pub const SPREAD: f64 = 1.0;

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    /// `Ind(E)` per M-block.
    pub initial: Vec<f64>,
    pub converged_at: Option<usize>,
    pub limit: Option<f64>,
    pub monotone: bool,
    pub sup_norm: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub samples: usize,
    pub seed: u64,
    pub max_steps: usize,
    pub converged: usize,
    pub convergence_fraction: f64,
    pub non_monotone: usize,
    pub limit_min: Option<f64>,
    pub limit_max: Option<f64>,
    pub sup_norm: f64,
    pub parity_residual: f64,
    pub runs: Vec<RunSummary>,
}

/// Draws `count` expectations from `seed`, then iterates each dual sequence
/// for at most `steps` steps. Runs are independent and reported in draw order.
pub fn iteration_experiment(
    inc: &Arc<Inclusion>,
    s: &TraceVector,
    count: usize,
    seed: u64,
    steps: usize,
    tol: f64,
) -> Result<ExperimentReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..count).map(|_| random_expectation(inc, s, SPREAD, &mut rng)).collect::<Result<Vec<_>>>()?;
    let reports = samples.par_iter().map(|e| iterate_duals(e, steps, tol)).collect::<Result<Vec<_>>>()?;
    let runs: Vec<RunSummary> = reports
        .iter()
        .map(|r| RunSummary {
            initial: r.sequence[0].values.clone(),
            converged_at: r.converged_at,
            limit: r.limit,
            monotone: r.monotone,
            sup_norm: r.sup_norm,
            steps: r.sequence.len() - 1,
        })
        .collect();
    let converged = reports.iter().filter(|r| r.converged).count();
    let limits: Vec<f64> = reports.iter().filter_map(|r| r.limit).collect();
    Ok(ExperimentReport {
        samples: count,
        seed,
        max_steps: steps,
        converged,
        convergence_fraction: if count == 0 { 0.0 } else { converged as f64 / count as f64 },
        non_monotone: reports.iter().filter(|r| !r.monotone).count(),
        limit_min: limits.iter().copied().reduce(f64::min),
        limit_max: limits.iter().copied().reduce(f64::max),
        sup_norm: reports.iter().map(|r| r.sup_norm).fold(0.0, f64::max),
        parity_residual: reports.iter().map(|r| r.parity_residual).fold(0.0, f64::max),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn f4_batch_is_reproducible() {
        let f4 = fixtures::f4();
        let s = TraceVector::uniform(f4.m());
        let a = iteration_experiment(&f4, &s, 8, 3, 50, 1e-10).unwrap();
        let b = iteration_experiment(&f4, &s, 8, 3, 50, 1e-10).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.converged, 8);
        assert!(a.non_monotone >= 1);
        assert!(a.parity_residual < 1e-9);
        for run in &a.runs {
            let limit = run.limit.unwrap();
            assert!(limit >= 1.0 && limit <= run.sup_norm + 1e-9);
        }
    }
}
