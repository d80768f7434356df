//! Host monotonic clock in microseconds. Processes on one host read the same
//! clock, which is what makes cross-process latency measurements valid.

#[cfg(unix)]
pub fn monotonic_us() -> u64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_MONOTONIC, &mut ts) };
    assert_eq!(rc, 0, "CLOCK_MONOTONIC unavailable");
    ts.tv_sec as u64 * 1_000_000 + ts.tv_nsec as u64 / 1_000
}

#[cfg(not(unix))]
pub fn monotonic_us() -> u64 {
    use std::sync::OnceLock;
    use std::time::Instant;
    static ORIGIN: OnceLock<Instant> = OnceLock::new();
    ORIGIN.get_or_init(Instant::now).elapsed().as_micros() as u64
}

/// Sleeps until the monotonic clock reaches `deadline`.
pub fn sleep_until(deadline: u64) {
    let now = monotonic_us();
    if deadline > now {
        std::thread::sleep(std::time::Duration::from_micros(deadline - now));
    }
}
