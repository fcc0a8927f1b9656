//! Bandwidth pacing for per-endpoint senders.

use std::time::{Duration, Instant};

/// Zero-burst rate pacer: every acquired byte schedules `1/rate` seconds of
/// virtual time, and the sender drains the schedule before declaring the
/// transfer done. Total elapsed time from the first acquire through
/// [`Throttle::drain`] is therefore at least `bytes / rate`, which is the
/// property the throughput law leans on; a bucket with burst capacity would
/// undercut it by the burst size.
#[derive(Debug)]
pub struct Throttle {
    rate: f64,
    scheduled_until: Option<Instant>,
}

impl Throttle {
    /// `rate` in bytes per second; must be positive.
    pub fn new(rate: f64) -> Self {
        assert!(rate > 0.0, "throttle rate must be positive");
        Throttle {
            rate,
            scheduled_until: None,
        }
    }

    /// Block until previously acquired bytes have drained, then schedule
    /// `bytes` more.
    pub fn acquire(&mut self, bytes: usize) {
        let now = Instant::now();
        let start = match self.scheduled_until {
            None => now,
            Some(t) => {
                if t > now {
                    std::thread::sleep(t - now);
                }
                t.max(now)
            }
        };
        self.scheduled_until = Some(start + Duration::from_secs_f64(bytes as f64 / self.rate));
    }

    /// Wait out the remaining schedule.
    pub fn drain(&mut self) {
        if let Some(t) = self.scheduled_until {
            let now = Instant::now();
            if t > now {
                std::thread::sleep(t - now);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elapsed_is_at_least_bytes_over_rate() {
        let rate = 10e6; // 10 MB/s
        let total = 1_000_000usize;
        let mut throttle = Throttle::new(rate);
        let t0 = Instant::now();
        for _ in 0..10 {
            throttle.acquire(total / 10);
        }
        throttle.drain();
        let elapsed = t0.elapsed().as_secs_f64();
        let floor = total as f64 / rate;
        assert!(elapsed >= floor, "{elapsed} < {floor}");
        assert!(elapsed < floor * 1.5, "{elapsed} far above {floor}");
    }

    #[test]
    fn drain_without_acquire_returns_immediately() {
        let mut throttle = Throttle::new(1.0);
        let t0 = Instant::now();
        throttle.drain();
        assert!(t0.elapsed() < Duration::from_millis(50));
    }
}
