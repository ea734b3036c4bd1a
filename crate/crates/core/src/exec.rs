//! Element-level job execution. With the `parallel` feature, work runs on a
//! rayon pool capped at `jobs` threads; without it every plan runs in order
//! on the calling thread. Results always come back in input order.

use std::num::NonZeroUsize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel { jobs: usize },
}

impl Execution {
    /// `None` means one worker per available hardware thread; `Some(1)` is
    /// sequential.
    pub fn from_jobs(jobs: Option<usize>) -> Self {
        let jobs = jobs.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(NonZeroUsize::get)
                .unwrap_or(1)
        });
        if jobs <= 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { jobs }
        }
    }

    pub fn jobs(&self) -> usize {
        match self {
            Execution::Sequential => 1,
            Execution::Parallel { jobs } => *jobs,
        }
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            Execution::Parallel { jobs } => parallel_map(*jobs, items, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(jobs: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(_jobs: usize, items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}
