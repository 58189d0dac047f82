use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Sliding-window limiter: at most `capacity` units may be acquired in any
/// window of length `period`. Shared by reference between threads; callers
/// block in [`RateLimiter::acquire`] until their cost fits.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: u64,
    period: Duration,
    window: Mutex<VecDeque<(Instant, u64)>>,
}

impl RateLimiter {
    pub fn new(capacity: u64, period: Duration) -> Self {
        assert!(capacity > 0, "rate limiter capacity must be positive");
        Self {
            capacity,
            period,
            window: Mutex::new(VecDeque::new()),
        }
    }

    pub fn per_second(capacity: u64) -> Self {
        Self::new(capacity, Duration::from_secs(1))
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    /// Blocks until `cost` units fit in the window. A cost larger than the
    /// capacity is admitted once the window is empty.
    pub fn acquire(&self, cost: u64) {
        loop {
            let wait = {
                let mut window = self.window.lock().expect("limiter lock poisoned");
                let now = Instant::now();
                while let Some(&(t, _)) = window.front() {
                    if now.duration_since(t) >= self.period {
                        window.pop_front();
                    } else {
                        break;
                    }
                }
                let used: u64 = window.iter().map(|(_, c)| c).sum();
                if window.is_empty() || used + cost <= self.capacity {
                    window.push_back((now, cost));
                    return;
                }
                let oldest = window.front().expect("nonempty window").0;
                self.period.saturating_sub(now.duration_since(oldest))
            };
            std::thread::sleep(wait.max(Duration::from_micros(100)));
        }
    }
}
