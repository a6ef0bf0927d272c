//! Work-queue parallelism across independent run units.
//!
//! Units never share mutable state (each writes its own run directory), so
//! scheduling order cannot affect results.

use std::sync::Mutex;

use mwr_core::Result;

/// Run `work` over every item using up to `threads` scoped threads.
/// Returns the first error encountered (by item order).
pub fn parallel_for_each<T, F>(items: Vec<T>, threads: usize, work: F) -> Result<()>
where
    T: Send,
    F: Fn(T) -> Result<()> + Sync,
{
    let threads = threads.max(1).min(items.len().max(1));
    if threads <= 1 {
        for item in items {
            work(item)?;
        }
        return Ok(());
    }
    let queue: Mutex<Vec<(usize, T)>> = Mutex::new(items.into_iter().enumerate().rev().collect());
    let failures: Mutex<Vec<(usize, mwr_core::Error)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let next = queue.lock().expect("queue lock").pop();
                let Some((index, item)) = next else { break };
                if let Err(e) = work(item) {
                    failures.lock().expect("failure lock").push((index, e));
                }
            });
        }
    });
    let mut failures = failures.into_inner().expect("failure lock");
    failures.sort_by_key(|(i, _)| *i);
    match failures.into_iter().next() {
        None => Ok(()),
        Some((_, e)) => Err(e),
    }
}

/// Default worker count: the machine's available parallelism.
pub fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn processes_every_item() {
        let counter = AtomicUsize::new(0);
        parallel_for_each((0..100).collect(), 4, |_| {
            counter.fetch_add(1, Ordering::SeqCst);
            Ok(())
        })
        .unwrap();
        assert_eq!(counter.load(Ordering::SeqCst), 100);
    }

    #[test]
    fn reports_the_first_error_by_item_order() {
        let err = parallel_for_each((0..50).collect::<Vec<usize>>(), 4, |i| {
            if i == 7 || i == 31 {
                Err(mwr_core::Error::invalid(format!("unit {i}")))
            } else {
                Ok(())
            }
        })
        .unwrap_err();
        assert!(err.to_string().contains("unit 7"), "got {err}");
    }
}
