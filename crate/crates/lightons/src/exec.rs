//! Run-level parallelism with a sequential fallback.
//!
//! Experiment runs are independent (one RNG sub-stream each), so the harness
//! maps a closure over run indices. With the `parallel` feature the map uses
//! rayon; without it, or when [`ExecMode::Sequential`] is requested, it is a
//! plain ordered loop. Both paths return results in index order, so output
//! files do not depend on the execution mode.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How to execute a batch of independent jobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    /// Use rayon if the `parallel` feature is enabled, otherwise run
    /// sequentially.
    Parallel,
    /// Always run sequentially.
    Sequential,
}

/// Maps `f` over `0..n`, preserving index order in the returned vector.
pub fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        return (0..n).into_par_iter().map(&f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let seq = map_indexed(ExecMode::Sequential, 100, |i| i * i);
        let par = map_indexed(ExecMode::Parallel, 100, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(seq[7], 49);
    }
}
