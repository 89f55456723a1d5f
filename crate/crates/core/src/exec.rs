//! Execution mode for the data-parallel loops (batch classification, grid
//! scans, per-singularity work).
//!
//! With the `parallel` feature (on by default) [`Mode::Parallel`] runs on the
//! rayon global pool. Without it every mode runs sequentially. Results are
//! always returned in input order, so reductions downstream are deterministic.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sequential,
    #[default]
    Parallel,
}

impl Mode {
    /// True when this mode will actually fan out over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Mode::Parallel
    }
}

/// Ordered map over a slice.
pub fn map<T, R, F>(mode: Mode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Ordered map over `0..len`.
pub fn map_range<R, F>(mode: Mode, len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..len).map(f).collect()
}

/// Configure the global pool size. Only the first call has an effect.
pub fn set_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_preserve_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map(Mode::Sequential, &xs, |x| x * x);
        let b = map(Mode::Parallel, &xs, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(map_range(Mode::Parallel, 5, |i| i + 1), vec![1, 2, 3, 4, 5]);
    }
}
