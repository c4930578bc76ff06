//! Bounded-width work pool and counting semaphore.
//!
//! Results always come back in input order regardless of completion order, so
//! a parallel run and a serial run over deterministic work are identical.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};

/// Counting semaphore that also tracks the high-water mark of holders.
#[derive(Debug)]
pub struct Semaphore {
    state: Mutex<SemState>,
    cvar: Condvar,
    capacity: usize,
}

#[derive(Debug, Default)]
struct SemState {
    held: usize,
    peak: usize,
}

impl Semaphore {
    pub fn new(capacity: usize) -> Self {
        Self {
            state: Mutex::new(SemState::default()),
            cvar: Condvar::new(),
            capacity: capacity.max(1),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().unwrap();
        while st.held >= self.capacity {
            st = self.cvar.wait(st).unwrap();
        }
        st.held += 1;
        st.peak = st.peak.max(st.held);
        Permit { sem: self }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Largest number of simultaneous holders observed so far.
    pub fn peak(&self) -> usize {
        self.state.lock().unwrap().peak
    }
}

pub struct Permit<'a> {
    sem: &'a Semaphore,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.sem.state.lock().unwrap();
        st.held -= 1;
        drop(st);
        self.sem.cvar.notify_one();
    }
}

/// Cooperative cancellation flag. Workers finish the item in hand and stop
/// taking new ones.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// Run `work` over `items` with at most `width` concurrent workers.
///
/// `on_done` is invoked (serialised) as each item completes; it is the hook
/// for streaming appends. Items skipped because of cancellation are `None`.
pub fn run_ordered<T, R, F, D>(
    items: &[T],
    width: usize,
    cancel: &CancelToken,
    work: F,
    mut on_done: D,
) -> Vec<Option<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
    D: FnMut(usize, &R) + Send,
{
    let width = width.max(1).min(items.len().max(1));
    if width == 1 {
        let mut out = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if cancel.is_cancelled() {
                out.push(None);
                continue;
            }
            let r = work(i, item);
            on_done(i, &r);
            out.push(Some(r));
        }
        return out;
    }

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    let sink = Mutex::new(&mut on_done);
    std::thread::scope(|scope| {
        for _ in 0..width {
            scope.spawn(|| loop {
                if cancel.is_cancelled() {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = work(i, &items[i]);
                (sink.lock().unwrap())(i, &r);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap()
}

/// Re-sequences results that complete out of order.
#[derive(Debug)]
pub struct InOrder<R> {
    next: usize,
    pending: std::collections::BTreeMap<usize, R>,
}

impl<R> Default for InOrder<R> {
    fn default() -> Self {
        Self {
            next: 0,
            pending: std::collections::BTreeMap::new(),
        }
    }
}

impl<R> InOrder<R> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accept result `index` and return every result now ready, in order.
    pub fn push(&mut self, index: usize, r: R) -> Vec<R> {
        self.pending.insert(index, r);
        let mut ready = Vec::new();
        while let Some(r) = self.pending.remove(&self.next) {
            ready.push(r);
            self.next += 1;
        }
        ready
    }

    /// Results stranded behind a gap (items skipped by cancellation).
    pub fn drain(&mut self) -> Vec<R> {
        std::mem::take(&mut self.pending).into_values().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn ordered_results_match_serial() {
        let items: Vec<u64> = (0..50).collect();
        let cancel = CancelToken::new();
        let serial = run_ordered(&items, 1, &cancel, |_, x| x * x, |_, _| {});
        let parallel = run_ordered(
            &items,
            6,
            &cancel,
            |i, x| {
                std::thread::sleep(Duration::from_micros((50 - i as u64) * 20));
                x * x
            },
            |_, _| {},
        );
        assert_eq!(serial, parallel);
    }

    #[test]
    fn semaphore_bounds_concurrency() {
        let sem = Semaphore::new(3);
        let items: Vec<u32> = (0..24).collect();
        run_ordered(
            &items,
            8,
            &CancelToken::new(),
            |_, _| {
                let _p = sem.acquire();
                std::thread::sleep(Duration::from_millis(2));
            },
            |_, _| {},
        );
        assert!(sem.peak() <= 3);
        assert!(sem.peak() >= 1);
    }

    #[test]
    fn in_order_resequences() {
        let mut q = InOrder::new();
        assert!(q.push(1, 'b').is_empty());
        assert!(q.push(3, 'd').is_empty());
        assert_eq!(q.push(0, 'a'), vec!['a', 'b']);
        assert_eq!(q.drain(), vec!['d']);
    }

    #[test]
    fn cancelled_items_are_skipped() {
        let cancel = CancelToken::new();
        let items = [1, 2, 3, 4];
        let out = run_ordered(
            &items,
            1,
            &cancel,
            |i, x| {
                if i == 1 {
                    cancel.cancel();
                }
                *x
            },
            |_, _| {},
        );
        assert_eq!(out, vec![Some(1), Some(2), None, None]);
    }
}
