//! Batches of independent runs: seed sweeps, mode pairs, optimizer checks.
//!
//! Every job owns its engine, so jobs share nothing and results are returned
//! in input order regardless of how they were scheduled.

use crate::engine::{self, EngineError, Mode, RunOutput, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when the `parallel` feature is off.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Order-preserving map over independent jobs.
pub fn map<T, R, F>(exec: Execution, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.into_par_iter().map(f).collect()
        }
        _ => items.into_iter().map(f).collect(),
    }
}

pub fn run_batch(
    jobs: Vec<(Scenario, Mode)>,
    exec: Execution,
) -> Vec<Result<RunOutput, EngineError>> {
    map(exec, jobs, |(sc, mode)| engine::run(&sc, mode))
}

/// Adaptive and baseline runs of one scenario, in that order.
pub fn run_pair(
    scenario: &Scenario,
    exec: Execution,
) -> Result<(RunOutput, RunOutput), EngineError> {
    let jobs = vec![
        (scenario.clone(), Mode::Adaptive),
        (scenario.clone(), Mode::DvBaseline),
    ];
    let mut out = run_batch(jobs, exec).into_iter();
    let a = out.next().expect("two jobs")?;
    let b = out.next().expect("two jobs")?;
    Ok((a, b))
}

/// One run per seed, in seed order.
pub fn sweep_seeds(
    scenario: &Scenario,
    mode: Mode,
    seeds: &[u64],
    exec: Execution,
) -> Vec<Result<RunOutput, EngineError>> {
    let jobs = seeds
        .iter()
        .map(|&s| {
            let mut sc = scenario.clone();
            sc.sim.seed = s;
            (sc, mode)
        })
        .collect();
    run_batch(jobs, exec)
}

#[cfg(feature = "oracle")]
pub use optimizer::{check_optimizer, OptimizerReport};

#[cfg(feature = "oracle")]
mod optimizer {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::{map, Execution};
    use crate::oracle::{brute_force_optimal, random_case, CaseShape};
    use crate::route_server::find_optimal_route;

    #[derive(Debug, Clone, PartialEq, Eq)]
    pub struct OptimizerReport {
        pub checked: usize,
        pub routable: usize,
        /// Case indices where optimizer and oracle disagreed, with a description.
        pub mismatches: Vec<(usize, String)>,
    }

    /// Cross-checks the optimizer against exhaustive search on `cases`
    /// random graphs. Case `i` is drawn from a generator seeded with `seed + i`.
    pub fn check_optimizer(
        cases: usize,
        seed: u64,
        shape: CaseShape,
        exec: Execution,
    ) -> OptimizerReport {
        let results = map(exec, (0..cases).collect(), |i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let case = random_case(&mut rng, shape);
            let fast = find_optimal_route(&case.topology, &case.query);
            let slow = brute_force_optimal(&case.topology, &case.query);
            match (fast, slow) {
                (Ok(r), Ok((cost, o))) => {
                    let same = r.total_cost.to_bits() == cost.to_bits() && r.links == o.links;
                    (
                        true,
                        (!same).then(|| format!("optimizer {r:?} oracle {o:?}")),
                    )
                }
                (Err(_), Err(_)) => (false, None),
                (f, s) => (false, Some(format!("optimizer {f:?} oracle {s:?}"))),
            }
        });
        OptimizerReport {
            checked: cases,
            routable: results.iter().filter(|(ok, _)| *ok).count(),
            mismatches: results
                .into_iter()
                .enumerate()
                .filter_map(|(i, (_, m))| m.map(|m| (i, m)))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order_in_both_modes() {
        let xs: Vec<u64> = (0..100).collect();
        let seq = map(Execution::Sequential, xs.clone(), |x| x * x);
        let par = map(Execution::Parallel, xs, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[9], 81);
    }
}
