//! Exponential-backoff retry shared by the remote inference and LLM clients.

use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Retries after the first attempt; total attempts = `max_retries + 1`.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub factor: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 100,
            factor: 2,
        }
    }
}

/// Whether a failed attempt may be retried.
pub enum Attempt<E> {
    Transient(E),
    Fatal(E),
}

#[derive(Debug)]
pub struct Exhausted<E> {
    /// Retries performed before giving up (0 when the first error was fatal).
    pub retries: u32,
    pub last: E,
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        Self {
            max_retries,
            base_delay_ms: 0,
            factor: 2,
        }
    }

    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let mult = u64::from(self.factor).saturating_pow(retry);
        Duration::from_millis(self.base_delay_ms.saturating_mul(mult))
    }

    pub fn run<T, E>(&self, mut op: impl FnMut(u32) -> Result<T, Attempt<E>>) -> Result<T, Exhausted<E>> {
        let mut retry = 0;
        loop {
            match op(retry) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(last)) => return Err(Exhausted { retries: retry, last }),
                Err(Attempt::Transient(last)) => {
                    if retry >= self.max_retries {
                        return Err(Exhausted { retries: retry, last });
                    }
                    let d = self.delay(retry);
                    tracing::debug!(retry, delay_ms = d.as_millis() as u64, "transient failure, backing off");
                    if !d.is_zero() {
                        std::thread::sleep(d);
                    }
                    retry += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy::default();
        let ms: Vec<u128> = (0..4).map(|r| p.delay(r).as_millis()).collect();
        assert_eq!(ms, vec![100, 200, 400, 800]);
    }

    #[test]
    fn stops_after_max_retries() {
        let mut calls = 0;
        let r: Result<(), _> = RetryPolicy::no_delay(3).run(|_| {
            calls += 1;
            Err(Attempt::Transient("down"))
        });
        let e = r.unwrap_err();
        assert_eq!(calls, 4);
        assert_eq!(e.retries, 3);
    }

    #[test]
    fn fatal_is_not_retried() {
        let mut calls = 0;
        let r: Result<(), _> = RetryPolicy::no_delay(3).run(|_| {
            calls += 1;
            Err(Attempt::Fatal("bad request"))
        });
        assert_eq!(calls, 1);
        assert_eq!(r.unwrap_err().retries, 0);
    }

    #[test]
    fn recovers_midway() {
        let r = RetryPolicy::no_delay(3).run(|n| if n < 2 { Err(Attempt::Transient(())) } else { Ok(n) });
        assert_eq!(r.unwrap(), 2);
    }
}
