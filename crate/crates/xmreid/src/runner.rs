//! Split evaluation across worker threads.
//!
//! Each split draws its randomness from `(master seed, split index)` and the
//! per-split curves are aggregated in split order, so the report does not
//! depend on the thread count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use xmreid_core::cca::Scenario;
use xmreid_core::dataset::{Dataset, SplitAssignment};
use xmreid_core::eval::{aggregate, evaluate_split, split_seed, CmcResult, EvalError, PipelineConfig, SplitReport};

pub fn evaluate_parallel(
    dataset: &Dataset,
    splits: &[SplitAssignment],
    scenario: Scenario,
    config: &PipelineConfig,
    master: u64,
    threads: usize,
) -> Result<SplitReport, EvalError> {
    let results = run_splits(splits.len(), threads, |i| {
        evaluate_split(dataset, &splits[i], scenario, config, split_seed(master, i))
    });
    let curves = results.into_iter().collect::<Result<Vec<CmcResult>, _>>()?;
    aggregate(scenario.name(), curves)
}

/// Calls `job(i)` for `i in 0..count` on up to `threads` workers and returns
/// the results in index order.
pub fn run_splits<T, F>(count: usize, threads: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = threads.clamp(1, count.max(1));
    if workers == 1 {
        return (0..count).map(job).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let out = job(i);
                slots.lock().expect("no worker panicked")[i] = Some(out);
            });
        }
    });
    slots.into_inner().expect("no worker panicked").into_iter().map(|s| s.expect("every split ran")).collect()
}
