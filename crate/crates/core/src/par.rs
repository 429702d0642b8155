//! Document-level data parallelism with a sequential fallback.

/// How batch work over documents is scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    /// Rayon worker pool when the `parallel` feature is enabled, otherwise
    /// sequential.
    #[default]
    Parallel,
    Sequential,
}

pub fn map_sequential<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_parallel<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_parallel<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    map_sequential(items, f)
}

/// Order-preserving map under the chosen schedule.
pub fn par_map<T, U, F>(items: &[T], exec: Execution, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match exec {
        Execution::Parallel => map_parallel(items, f),
        Execution::Sequential => map_sequential(items, f),
    }
}
