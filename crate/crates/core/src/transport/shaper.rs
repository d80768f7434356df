use crate::reduction::Bandwidth;

const MICRO: u128 = 1_000_000;

/// Token-bucket rate limiter in the style of Linux `tbf`.
///
/// Tokens are bits; the bucket refills at `rate` and holds at most `burst`.
/// The bucket starts full. Internally tokens are kept in millionths of a bit
/// so that `rate * elapsed_us` refills are exact.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    rate: Bandwidth,
    burst_bits: u64,
    tokens: u128,
    last_refill: u64,
}

impl TokenBucket {
    pub fn new(rate: Bandwidth, burst_bits: u64, now: u64) -> Self {
        let burst_bits = burst_bits.max(1);
        Self { rate, burst_bits, tokens: burst_bits as u128 * MICRO, last_refill: now }
    }

    /// Bucket sized to hold `burst_us` worth of traffic at `rate`.
    pub fn with_burst_time(rate: Bandwidth, burst_us: u64, now: u64) -> Self {
        Self::new(rate, rate.bits_in(burst_us), now)
    }

    pub fn rate(&self) -> Bandwidth {
        self.rate
    }

    pub fn burst_bits(&self) -> u64 {
        self.burst_bits
    }

    /// Whole bits currently available.
    pub fn tokens(&self) -> u64 {
        (self.tokens / MICRO) as u64
    }

    fn refill(&mut self, now: u64) {
        if now > self.last_refill {
            let add = self.rate.bps() as u128 * (now - self.last_refill) as u128;
            self.tokens = (self.tokens + add).min(self.burst_bits as u128 * MICRO);
            self.last_refill = now;
        }
    }

    /// Charges a frame of `frame_bits` and returns the earliest time (µs) at
    /// which it has fully left the shaper. A frame that the bucket cannot
    /// cover drains it and waits for the remainder at the link rate; this
    /// also handles frames larger than the burst. Calls must be made in
    /// non-decreasing time order; a `now` earlier than the previous
    /// completion is treated as that completion time.
    pub fn admit(&mut self, frame_bits: u64, now: u64) -> u64 {
        let t = now.max(self.last_refill);
        self.refill(t);
        let need = frame_bits as u128 * MICRO;
        if self.tokens >= need {
            self.tokens -= need;
            return t;
        }
        // Tokens are consumed as they arrive, so the bucket never reaches
        // its cap while the frame is waiting.
        let deficit = need - self.tokens;
        let rate = self.rate.bps() as u128;
        let wait = deficit.div_ceil(rate);
        self.tokens = (wait * rate - deficit).min(self.burst_bits as u128 * MICRO);
        self.last_refill = t + wait as u64;
        self.last_refill
    }
}
