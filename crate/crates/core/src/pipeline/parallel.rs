//! Bounded worker pool over pages. Workers pull indices from a shared
//! counter; results land in per-index slots, so output order is always
//! page order no matter which worker finishes first.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};

/// Number of workers to use when the caller does not say: available
/// parallelism capped at the page count.
pub fn default_worker_count(page_count: usize) -> usize {
    let hardware = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    hardware.min(page_count.max(1))
}

/// Runs `worker` once per page on up to `worker_count` threads and
/// returns the per-page results strictly by page index. Individual page
/// errors are collected in their slots, never short-circuiting the
/// rest.
pub fn run_pages_parallel<T, F>(
    pages: &[String],
    worker_count: usize,
    worker: F,
) -> Result<Vec<Result<T>>>
where
    T: Send,
    F: Fn(usize, &str) -> Result<T> + Sync,
{
    if worker_count == 0 {
        return Err(Error::Range("worker count must be at least 1".to_string()));
    }
    if pages.is_empty() {
        return Ok(Vec::new());
    }

    let threads = worker_count.min(pages.len());
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> =
        pages.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= pages.len() {
                    break;
                }
                let outcome = worker(idx, &pages[idx]);
                *slots[idx].lock().expect("page slot poisoned") = Some(outcome);
            });
        }
    });

    Ok(slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("page slot poisoned")
                .expect("every page index was claimed by a worker")
        })
        .collect())
}
