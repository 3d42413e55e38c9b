//! Execution strategy for the data-parallel stages.
//!
//! Corpus scanning, rule-file parsing, and histogram construction map
//! independent work items to results and then reduce them in index order, so
//! the output never depends on scheduling. The `parallel` feature (on by
//! default) backs `Execution::Parallel` with a rayon pool; without it every
//! strategy degrades to the sequential path and produces identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    /// Plain single-threaded iteration, no thread pool involved.
    Sequential,
    /// Data-parallel execution; `workers == 0` means "use the default pool".
    Parallel { workers: usize },
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { workers: 0 }
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Strategy for a requested worker count: 1 is sequential, 0 is "auto".
    pub fn with_workers(workers: usize) -> Self {
        if workers == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { workers }
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && matches!(self, Execution::Parallel { .. })
    }
}

/// Runs `f` inside a dedicated pool when a specific worker count was
/// requested; otherwise runs it directly (using the default pool if work
/// inside goes parallel).
pub(crate) fn with_pool<R: Send>(exec: Execution, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Execution::Parallel { workers } = exec {
        if workers > 0 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("failed to build thread pool");
            return pool.install(f);
        }
    }
    let _ = exec;
    f()
}

/// Maps `f` over `0..n` and collects results in index order.
pub(crate) fn map_indexed<U: Send>(
    exec: Execution,
    n: usize,
    f: impl Fn(usize) -> U + Sync + Send,
) -> Vec<U> {
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return with_pool(exec, || (0..n).into_par_iter().map(f).collect());
    }
    let _ = exec;
    (0..n).map(f).collect()
}
