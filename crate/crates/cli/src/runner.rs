//! Deterministic sample fan-out.
//!
//! Monte Carlo experiments draw independent samples indexed `0..n`. Each
//! sample derives its RNG stream from `(seed, index)`, so the set of
//! samples is fixed by the seed alone. Workers only decide *who* computes
//! a sample, never *what* it contains; results are folded in index order
//! after all workers finish, which makes the output byte-identical for any
//! worker count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Debug, thiserror::Error)]
#[error("BANDLAB_WORKERS must be a positive integer, got `{0}`")]
pub struct WorkerConfigError(String);

/// Pins the linear algebra backend to sequential execution. Thread-level
/// parallelism lives entirely in the sample fan-out, keeping per-sample
/// numerics identical regardless of the host's core count.
pub fn init_numerics() {
    faer::set_global_parallelism(faer::Par::Seq);
}

/// Worker count from the `BANDLAB_WORKERS` environment variable
/// (default 1).
pub fn worker_count() -> Result<usize, WorkerConfigError> {
    match std::env::var("BANDLAB_WORKERS") {
        Err(_) => Ok(1),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(WorkerConfigError(s)),
        },
    }
}

/// Outcome of a fan-out: per-index results in index order, with failed
/// samples recorded alongside their indices.
pub struct SampleSet<T> {
    pub values: Vec<T>,
    pub failures: Vec<(usize, String)>,
}

impl<T> SampleSet<T> {
    pub fn n_ok(&self) -> usize {
        self.values.len()
    }
}

/// Runs `f(index)` for `index in 0..n` across `workers` threads and folds
/// results in index order. `f` must derive all randomness from its index.
pub fn map_samples<T, F>(n: usize, workers: usize, f: F) -> SampleSet<T>
where
    T: Send,
    F: Fn(usize) -> Result<T, String> + Sync,
{
    let mut slots: Vec<Option<Result<T, String>>> = Vec::with_capacity(n);
    if workers <= 1 || n <= 1 {
        for i in 0..n {
            slots.push(Some(f(i)));
        }
    } else {
        slots.resize_with(n, || None);
        let slots_mx = Mutex::new(&mut slots);
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..workers.min(n) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let out = f(i);
                    slots_mx.lock().unwrap()[i] = Some(out);
                });
            }
        });
    }

    let mut values = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for (i, slot) in slots.into_iter().enumerate() {
        match slot.expect("every sample slot filled") {
            Ok(v) => values.push(v),
            Err(msg) => failures.push((i, msg)),
        }
    }
    SampleSet { values, failures }
}

/// Mean and standard error of a sample of scalars.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_order_is_by_index_for_any_worker_count() {
        let f = |i: usize| -> Result<usize, String> {
            if i % 5 == 3 {
                Err(format!("sample {i} failed"))
            } else {
                Ok(i * i)
            }
        };
        let seq = map_samples(23, 1, f);
        let par = map_samples(23, 4, f);
        assert_eq!(seq.values, par.values);
        assert_eq!(seq.failures, par.failures);
        assert_eq!(
            seq.failures.iter().map(|(i, _)| *i).collect::<Vec<_>>(),
            vec![3, 8, 13, 18]
        );
    }

    #[test]
    fn mean_and_stderr() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-15);
        // Sample variance 5/3, stderr sqrt(5/12).
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        let (m1, se1) = mean_stderr(&[7.0]);
        assert_eq!((m1, se1), (7.0, 0.0));
    }
}
