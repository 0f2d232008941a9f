//! Monotonic clocks injected into the orchestrator and backends.
//!
//! [`MonotonicClock`] reads wall time. [`VirtualClock`] reads tokio's clock,
//! which can be paused: inside a paused runtime every sleep completes as soon
//! as all tasks are idle, and durations come out exactly as configured.

use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::future::BoxFuture;

pub trait Clock: Send + Sync {
    /// Seconds since the clock's origin.
    fn now(&self) -> f64;

    fn sleep(&self, duration: Duration) -> BoxFuture<'static, ()>;

    fn sleep_secs(&self, secs: f64) -> BoxFuture<'static, ()> {
        self.sleep(Duration::from_secs_f64(secs.max(0.0)))
    }
}

pub type SharedClock = Arc<dyn Clock>;

#[derive(Debug, Clone)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }

    pub fn shared() -> SharedClock {
        Arc::new(Self::new())
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }

    fn sleep(&self, duration: Duration) -> BoxFuture<'static, ()> {
        Box::pin(tokio::time::sleep(duration))
    }
}

/// Clock backed by tokio's (pausable) time source.
///
/// Must be created and used inside a tokio runtime. Under
/// [`VirtualClock::runtime`] time is paused and advances only through sleeps.
/// Tokio timers tick in milliseconds, so one clock second is mapped onto
/// [`VIRTUAL_TIME_SCALE`] tokio seconds to keep sub-millisecond delays exact.
pub const VIRTUAL_TIME_SCALE: u32 = 1000;

#[derive(Debug, Clone)]
pub struct VirtualClock {
    origin: tokio::time::Instant,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self {
            origin: tokio::time::Instant::now(),
        }
    }

    pub fn shared() -> SharedClock {
        Arc::new(Self::new())
    }

    /// A current-thread runtime with time paused.
    pub fn runtime() -> std::io::Result<tokio::runtime::Runtime> {
        tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .start_paused(true)
            .build()
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> f64 {
        (tokio::time::Instant::now() - self.origin).as_nanos() as f64
            / (1e9 * f64::from(VIRTUAL_TIME_SCALE))
    }

    fn sleep(&self, duration: Duration) -> BoxFuture<'static, ()> {
        Box::pin(tokio::time::sleep(duration * VIRTUAL_TIME_SCALE))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test(start_paused = true)]
    async fn virtual_sleep_is_exact() {
        let clock = VirtualClock::new();
        clock.sleep_secs(1.25).await;
        assert_eq!(clock.now(), 1.25);
    }

    #[tokio::test(start_paused = true)]
    async fn sub_millisecond_delays_survive() {
        let clock = VirtualClock::new();
        clock.sleep_secs(1.3131).await;
        assert!((clock.now() - 1.3131).abs() < 1e-12);
    }

    #[tokio::test(start_paused = true)]
    async fn concurrent_sleeps_overlap() {
        let clock = VirtualClock::new();
        futures::join!(clock.sleep_secs(2.0), clock.sleep_secs(3.0));
        assert_eq!(clock.now(), 3.0);
    }
}
