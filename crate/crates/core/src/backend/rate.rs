//! Request pacing and retry backoff against an injectable clock.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Time elapsed since the clock's origin.
    fn now(&self) -> Duration;

    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Manually advanced clock; `sleep` advances time instantly and is recorded.
#[derive(Debug, Default)]
pub struct FakeClock {
    state: Mutex<(Duration, Vec<Duration>)>,
}

impl FakeClock {
    pub fn advance(&self, d: Duration) {
        self.state.lock().expect("clock").0 += d;
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.state.lock().expect("clock").1.clone()
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        self.state.lock().expect("clock").0
    }

    fn sleep(&self, d: Duration) {
        let mut s = self.state.lock().expect("clock");
        s.0 += d;
        s.1.push(d);
    }
}

/// Spaces request start times at least `1 / rps` apart.
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Duration>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    /// `rps <= 0` disables pacing.
    pub fn new(rps: f64, clock: Arc<dyn Clock>) -> Self {
        let interval = if rps > 0.0 && rps.is_finite() {
            Duration::from_secs_f64(1.0 / rps)
        } else {
            Duration::ZERO
        };
        Self {
            interval,
            next_slot: Mutex::new(Duration::ZERO),
            clock,
        }
    }

    /// Blocks until the caller's slot and returns the slot time.
    pub fn acquire(&self) -> Duration {
        let (slot, wait) = {
            let mut next = self.next_slot.lock().expect("rate limiter");
            let now = self.clock.now();
            let slot = now.max(*next);
            *next = slot + self.interval;
            (slot, slot - now)
        };
        if !wait.is_zero() {
            self.clock.sleep(wait);
        }
        slot
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }
}

/// Exponential backoff: `initial * 2^(attempt - 1)` before retry `attempt`.
pub fn backoff(initial: Duration, attempt: u32) -> Duration {
    initial * 2u32.saturating_pow(attempt.saturating_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn never_exceeds_rps() {
        let clock = Arc::new(FakeClock::default());
        let limiter = RateLimiter::new(5.0, clock.clone());
        let mut starts = Vec::new();
        for i in 0..60 {
            if i % 7 == 0 {
                clock.advance(Duration::from_millis(130));
            }
            limiter.acquire();
            starts.push(clock.now());
        }
        for (i, &t) in starts.iter().enumerate() {
            let in_window = starts[i..]
                .iter()
                .take_while(|&&u| u < t + Duration::from_secs(1))
                .count();
            assert!(in_window <= 5, "{in_window} requests within 1s of {t:?}");
        }
    }

    #[test]
    fn concurrent_slots_are_spaced() {
        let clock = Arc::new(FakeClock::default());
        let limiter = Arc::new(RateLimiter::new(10.0, clock));
        let slots: Vec<Duration> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|_| {
                    let l = limiter.clone();
                    s.spawn(move || (0..10).map(|_| l.acquire()).collect::<Vec<_>>())
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
        });
        let mut slots = slots;
        slots.sort();
        for w in slots.windows(2) {
            assert!(w[1] - w[0] >= Duration::from_millis(100) - Duration::from_nanos(1));
        }
    }

    #[test]
    fn backoff_doubles() {
        let s = Duration::from_secs(1);
        assert_eq!(backoff(s, 1), s);
        assert_eq!(backoff(s, 2), 2 * s);
        assert_eq!(backoff(s, 3), 4 * s);
    }

    #[test]
    fn zero_rps_is_unpaced() {
        let clock = Arc::new(FakeClock::default());
        let limiter = RateLimiter::new(0.0, clock.clone());
        for _ in 0..10 {
            limiter.acquire();
        }
        assert!(clock.sleeps().is_empty());
    }
}
