//! Process-wide allocation counter. Install it with
//! `#[global_allocator] static A: CountingAlloc = CountingAlloc;` in a binary
//! or test target; without that the counters stay at zero.
//!
//! Blocks of at least [`CACHE_MIN`] bytes are parked on free and handed back
//! to the next request of the same layout, until [`flush_cache`]. Otherwise
//! glibc returns such blocks to the kernel and every repeat of a large
//! workload pays fresh page faults that a small one never sees.

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::UnsafeCell;
use std::hint::spin_loop;
use std::ptr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static CALLS: AtomicUsize = AtomicUsize::new(0);

pub const CACHE_MIN: usize = 1 << 20;
const SLOTS: usize = 32;

/// `(ptr, size, align)`; a null pointer marks a free slot.
struct Cache {
    lock: AtomicBool,
    slots: UnsafeCell<[(usize, usize, usize); SLOTS]>,
}

// SAFETY: `slots` is only touched while `lock` is held.
unsafe impl Sync for Cache {}

static CACHE: Cache = Cache {
    lock: AtomicBool::new(false),
    slots: UnsafeCell::new([(0, 0, 0); SLOTS]),
};

impl Cache {
    fn with<R>(&self, f: impl FnOnce(&mut [(usize, usize, usize); SLOTS]) -> R) -> R {
        while self.lock.compare_exchange_weak(false, true, Ordering::Acquire, Ordering::Relaxed).is_err() {
            spin_loop();
        }
        // SAFETY: exclusive while the lock is held.
        let r = f(unsafe { &mut *self.slots.get() });
        self.lock.store(false, Ordering::Release);
        r
    }

    fn take(&self, layout: Layout) -> *mut u8 {
        self.with(|slots| {
            for s in slots.iter_mut() {
                if s.0 != 0 && s.1 == layout.size() && s.2 == layout.align() {
                    let p = s.0 as *mut u8;
                    *s = (0, 0, 0);
                    return p;
                }
            }
            ptr::null_mut()
        })
    }

    fn park(&self, p: *mut u8, layout: Layout) -> bool {
        self.with(|slots| match slots.iter_mut().find(|s| s.0 == 0) {
            Some(s) => {
                *s = (p as usize, layout.size(), layout.align());
                true
            }
            None => false,
        })
    }
}

/// Return every parked block to the system allocator.
pub fn flush_cache() {
    let parked = CACHE.with(|slots| std::mem::replace(slots, [(0, 0, 0); SLOTS]));
    for (p, size, align) in parked {
        if p != 0 {
            // SAFETY: parked blocks came from `System` with exactly this layout.
            unsafe { System.dealloc(p as *mut u8, Layout::from_size_align_unchecked(size, align)) };
        }
    }
}

pub struct CountingAlloc;

fn grow(n: usize) {
    let now = CURRENT.fetch_add(n, Ordering::Relaxed) + n;
    PEAK.fetch_max(now, Ordering::Relaxed);
    CALLS.fetch_add(1, Ordering::Relaxed);
}

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let mut p = if layout.size() >= CACHE_MIN { CACHE.take(layout) } else { ptr::null_mut() };
        if p.is_null() {
            p = unsafe { System.alloc(layout) };
        }
        if !p.is_null() {
            grow(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        if layout.size() >= CACHE_MIN {
            let p = CACHE.take(layout);
            if !p.is_null() {
                unsafe { ptr::write_bytes(p, 0, layout.size()) };
                grow(layout.size());
                return p;
            }
        }
        let p = unsafe { System.alloc_zeroed(layout) };
        if !p.is_null() {
            grow(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, p: *mut u8, layout: Layout) {
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
        if layout.size() < CACHE_MIN || !CACHE.park(p, layout) {
            unsafe { System.dealloc(p, layout) };
        }
    }

    unsafe fn realloc(&self, p: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        if layout.size() < CACHE_MIN && new_size < CACHE_MIN {
            let q = unsafe { System.realloc(p, layout, new_size) };
            if !q.is_null() {
                CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
                grow(new_size);
            }
            return q;
        }
        // SAFETY: same alignment as the original, which was valid.
        let new_layout = unsafe { Layout::from_size_align_unchecked(new_size, layout.align()) };
        let q = unsafe { self.alloc(new_layout) };
        if !q.is_null() {
            unsafe {
                ptr::copy_nonoverlapping(p, q, layout.size().min(new_size));
                self.dealloc(p, layout);
            }
        }
        q
    }
}

/// Bytes currently live.
pub fn current_bytes() -> usize {
    CURRENT.load(Ordering::Relaxed)
}

/// Start a new high-water window at the current level; returns that level.
pub fn reset_peak() -> usize {
    let now = current_bytes();
    PEAK.store(now, Ordering::Relaxed);
    now
}

pub fn peak_bytes() -> usize {
    PEAK.load(Ordering::Relaxed)
}

/// True once any allocation has gone through [`CountingAlloc`].
pub fn is_installed() -> bool {
    CALLS.load(Ordering::Relaxed) > 0
}
