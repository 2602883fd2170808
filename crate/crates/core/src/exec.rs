//! Per-record work distribution. Results always come back in input order.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    Sequential,
    /// Worker threads; 0 lets the pool pick one per core.
    Parallel { workers: usize },
}

impl ExecMode {
    /// `workers <= 1` runs sequentially.
    pub fn with_workers(workers: usize) -> Self {
        if workers <= 1 {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel { workers }
        }
    }
}

/// Runs closures over slices according to an [`ExecMode`].
pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    pub fn new(mode: ExecMode) -> Result<Self> {
        match mode {
            ExecMode::Sequential => Ok(Executor {
                #[cfg(feature = "parallel")]
                pool: None,
            }),
            #[cfg(feature = "parallel")]
            ExecMode::Parallel { workers } => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
                Ok(Executor { pool: Some(pool) })
            }
            #[cfg(not(feature = "parallel"))]
            ExecMode::Parallel { .. } => Err(Error::Config(
                "built without the `parallel` feature; use a single worker".into(),
            )),
        }
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }
}
