//! Order-preserving parallel map over path indices.
//!
//! Results come back indexed by path, and every reduction downstream runs
//! sequentially over that vector, so sums do not depend on the number of
//! workers or on scheduling.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rayon::ThreadPool;

const MIN_CHUNK: usize = 4096;

fn pool(workers: usize) -> Arc<ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS.get_or_init(Default::default).lock().expect("pool cache poisoned");
    pools
        .entry(workers)
        .or_insert_with(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .expect("thread pool"),
            )
        })
        .clone()
}

/// `(0..n).map(f)` on `workers` threads (`None` uses rayon's global pool).
pub(crate) fn map_paths<T, F>(n: usize, workers: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let run = || {
        (0..n)
            .into_par_iter()
            .with_min_len(MIN_CHUNK)
            .map(|i| f(i as u64))
            .collect()
    };
    match workers {
        Some(1) => (0..n).map(|i| f(i as u64)).collect(),
        Some(w) => pool(w.max(1)).install(run),
        None => run(),
    }
}
