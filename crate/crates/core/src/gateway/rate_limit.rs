use std::collections::VecDeque;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

/// Sliding-window limiter shared by every caller of a gateway.
///
/// A rate `r >= 1` admits `floor(r)` calls per one-second window; a rate
/// below one admits a single call per `1/r` seconds. An infinite rate admits
/// everything.
#[derive(Debug)]
pub struct RateLimiter {
    window: Duration,
    capacity: usize,
    issued: Option<Mutex<VecDeque<Instant>>>,
}

impl RateLimiter {
    pub fn new(rate: f64) -> Self {
        if rate.is_infinite() {
            return Self {
                window: Duration::ZERO,
                capacity: usize::MAX,
                issued: None,
            };
        }
        let (window, capacity) = if rate >= 1.0 {
            (Duration::from_secs(1), rate.floor() as usize)
        } else {
            (Duration::from_secs_f64(1.0 / rate), 1)
        };
        Self {
            window,
            capacity,
            issued: Some(Mutex::new(VecDeque::with_capacity(capacity.min(4096)))),
        }
    }

    /// Blocks until a call may be issued, then records it.
    pub fn acquire(&self) {
        let Some(issued) = &self.issued else {
            return;
        };
        loop {
            let wait = {
                let mut log = issued.lock().expect("rate limiter lock");
                let now = Instant::now();
                while log
                    .front()
                    .is_some_and(|&t| now.duration_since(t) >= self.window)
                {
                    log.pop_front();
                }
                if log.len() < self.capacity {
                    log.push_back(now);
                    return;
                }
                self.window - now.duration_since(*log.front().expect("log is full"))
            };
            thread::sleep(wait);
        }
    }
}
