//! Ordered data-parallel map.
//!
//! With the `parallel` feature and more than one worker, items run on a
//! dedicated rayon pool; otherwise they run in order on the calling thread.
//! Results are always returned in input order, so any reduction the caller
//! performs over them is independent of the worker count.

#[cfg(feature = "parallel")]
use crate::error::Error;
use crate::error::Result;

#[derive(Debug)]
pub struct Executor {
    workers: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    /// `workers == 0` means one worker per available core.
    pub fn new(workers: usize) -> Result<Self> {
        let workers = if workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            workers
        };
        #[cfg(feature = "parallel")]
        {
            let pool = if workers > 1 {
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(workers)
                        .build()
                        .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
                )
            } else {
                None
            };
            Ok(Self { workers, pool })
        }
        #[cfg(not(feature = "parallel"))]
        {
            Ok(Self { workers })
        }
    }

    pub fn sequential() -> Self {
        Self {
            workers: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// Worker count actually in use (always 1 without the `parallel` feature).
    pub fn workers(&self) -> usize {
        #[cfg(feature = "parallel")]
        {
            if self.pool.is_some() {
                return self.workers;
            }
        }
        let _ = self.workers;
        1
    }

    pub fn map<T, U, F>(&self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            if let Some(pool) = &self.pool {
                use rayon::prelude::*;
                return pool.install(|| items.par_iter().map(&f).collect());
            }
        }
        items.iter().map(f).collect()
    }

    /// `map` over fallible items; the first error in input order wins.
    pub fn try_map<T, U, F>(&self, items: &[T], f: F) -> Result<Vec<U>>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> Result<U> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::sequential()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = Executor::sequential().map(&items, |x| x * x);
        let par = Executor::new(4).unwrap().map(&items, |x| x * x);
        assert_eq!(seq, par);
    }

    #[test]
    fn first_error_in_order() {
        let items: Vec<u32> = (0..100).collect();
        let err = Executor::new(3)
            .unwrap()
            .try_map(&items, |&x| if x % 10 == 7 { Err(Error::InvalidData(x.to_string())) } else { Ok(x) })
            .unwrap_err();
        assert_eq!(err.to_string(), Error::InvalidData("7".into()).to_string());
    }
}
