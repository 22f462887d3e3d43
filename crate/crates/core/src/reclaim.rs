//! Handing idle stack pages back to the OS.
//!
//! A parked worker only touches stack above its dispatch loop frame plus a
//! small amount for parking itself. Pages further down hold dead frames of
//! earlier tasks; `MADV_DONTNEED` lets the kernel drop them and refill them
//! with zero pages on the next touch.

use crate::worker::{StackExtent, Worker};

/// Stack the parked worker may still use below its dispatch-loop frame
/// (parking, retire bookkeeping), not counting the extra guard page.
pub const PARK_SLACK: usize = 64 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReleaseOutcome {
    Advised { bytes: usize },
    /// Nothing below the watermark, or the advice failed (logged).
    Skipped,
    Unsupported,
}

/// Page-aligned range of `extent` strictly below the parked frame's
/// reachable region, leaving the lowest page (guard) alone.
pub fn releasable_range(extent: StackExtent, watermark: usize, page: usize) -> Option<(usize, usize)> {
    let start = extent.low.checked_add(page)?.next_multiple_of(page);
    let end = watermark.checked_sub(PARK_SLACK + page)? / page * page;
    let end = end.min(extent.high);
    (end > start).then_some((start, end))
}

#[cfg(target_os = "linux")]
pub(crate) fn release_stack_memory(worker: &Worker) -> ReleaseOutcome {
    let Some(extent) = worker.stack_extent() else {
        return ReleaseOutcome::Skipped;
    };
    let page = page_size();
    let Some((start, end)) = releasable_range(extent, worker.watermark(), page) else {
        return ReleaseOutcome::Skipped;
    };
    // SAFETY: [start, end) lies inside this worker's stack mapping, below any
    // frame the parked thread can reach; the caller holds the idle store's
    // removal lock so the worker cannot be dispatched meanwhile.
    let rc = unsafe { libc::madvise(start as *mut libc::c_void, end - start, libc::MADV_DONTNEED) };
    if rc != 0 {
        log::warn!(
            "madvise on {} stack failed: {}",
            worker.id(),
            std::io::Error::last_os_error()
        );
        return ReleaseOutcome::Skipped;
    }
    ReleaseOutcome::Advised { bytes: end - start }
}

#[cfg(not(target_os = "linux"))]
pub(crate) fn release_stack_memory(_worker: &Worker) -> ReleaseOutcome {
    ReleaseOutcome::Unsupported
}

#[cfg(target_os = "linux")]
fn page_size() -> usize {
    // SAFETY: no preconditions.
    let p = unsafe { libc::sysconf(libc::_SC_PAGESIZE) };
    usize::try_from(p).unwrap_or(4096)
}

/// Stack bounds of the calling thread.
#[cfg(target_os = "linux")]
pub(crate) fn current_stack() -> Option<StackExtent> {
    // SAFETY: attr is initialised by pthread_getattr_np and destroyed below.
    unsafe {
        let mut attr: libc::pthread_attr_t = std::mem::zeroed();
        if libc::pthread_getattr_np(libc::pthread_self(), &mut attr) != 0 {
            return None;
        }
        let mut addr = std::ptr::null_mut();
        let mut size = 0;
        let rc = libc::pthread_attr_getstack(&attr, &mut addr, &mut size);
        libc::pthread_attr_destroy(&mut attr);
        (rc == 0).then(|| StackExtent {
            low: addr as usize,
            high: addr as usize + size,
        })
    }
}

#[cfg(not(target_os = "linux"))]
pub(crate) fn current_stack() -> Option<StackExtent> {
    None
}
