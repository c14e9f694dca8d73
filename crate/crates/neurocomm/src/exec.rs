//! Thread-pool executor.

use rayon::prelude::*;

use neurocomm_core::exec::Executor;

use crate::error::{Error, Result};

/// Overrides the worker count.
pub const WORKERS_ENV: &str = "NEUROCOMM_WORKERS";

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::invalid(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs jobs on a dedicated rayon pool, or inline with one worker. Results
/// come back in index order either way.
pub struct Pool {
    pool: Option<rayon::ThreadPool>,
}

impl Pool {
    pub fn new(workers: usize) -> Result<Self> {
        if workers <= 1 {
            return Ok(Pool { pool: None });
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
        Ok(Pool { pool: Some(pool) })
    }

    pub fn from_env() -> Result<Self> {
        Self::new(workers_from_env()?)
    }

    pub fn workers(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }
}

impl Executor for Pool {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match &self.pool {
            None => (0..n).map(f).collect(),
            Some(p) => p.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let pool = Pool::new(3).unwrap();
        assert_eq!(pool.workers(), 3);
        let v = pool.map(100, |i| i * i);
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
        assert_eq!(Pool::new(1).unwrap().map(3, |i| i), vec![0, 1, 2]);
    }
}
