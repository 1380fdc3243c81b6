use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ChannelError;

/// Network impairments applied to one direction of the channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// One-way delay, ms.
    pub delay_ms: f64,
    /// Extra delay drawn uniformly from `[0, jitter_ms]`, ms.
    pub jitter_ms: f64,
    pub loss_prob: f64,
    /// Probability that a packet is held back by `reorder_holdback_ms`.
    pub reorder_prob: f64,
    pub reorder_holdback_ms: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            delay_ms: 0.0,
            jitter_ms: 0.0,
            loss_prob: 0.0,
            reorder_prob: 0.0,
            reorder_holdback_ms: 2.0,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let ok = self.delay_ms >= 0.0
            && self.jitter_ms >= 0.0
            && self.reorder_holdback_ms >= 0.0
            && (0.0..=1.0).contains(&self.loss_prob)
            && (0.0..=1.0).contains(&self.reorder_prob)
            && self.delay_ms.is_finite()
            && self.jitter_ms.is_finite()
            && self.reorder_holdback_ms.is_finite();
        if ok {
            Ok(())
        } else {
            Err(ChannelError::InvalidConfig(format!("{self:?}")))
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.delay_ms == 0.0 && self.jitter_ms == 0.0 && self.loss_prob == 0.0 && self.reorder_prob == 0.0
    }
}

/// One entry of the delivery log.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Delivery {
    pub seq: u64,
    /// µs.
    pub sent: u64,
    /// Scheduled arrival, µs; `None` when dropped.
    pub delivered: Option<u64>,
}

#[derive(Clone, Debug)]
struct InFlight<P> {
    sent: u64,
    at: u64,
    seq: u64,
    payload: P,
}

/// Seeded lossy, delaying, reordering link.
#[derive(Clone, Debug)]
pub struct ImpairedLink<P> {
    cfg: ChannelConfig,
    rng: ChaCha8Rng,
    queue: Vec<InFlight<P>>,
    next_seq: u64,
    log: Vec<Delivery>,
    record: bool,
}

fn ms_to_us(ms: f64) -> u64 {
    (ms * 1000.0).round() as u64
}

impl<P> ImpairedLink<P> {
    pub fn new(cfg: ChannelConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            queue: Vec::new(),
            next_seq: 0,
            log: Vec::new(),
            record: true,
        }
    }

    /// Keeps the delivery log empty (long batch runs).
    pub fn without_log(mut self) -> Self {
        self.record = false;
        self
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    /// Queues a packet sent at `now` (µs).
    pub fn send(&mut self, now: u64, payload: P) {
        let seq = self.next_seq;
        self.next_seq += 1;
        let (lost, jitter, reorder) = if self.cfg.is_ideal() {
            (false, 0.0, false)
        } else {
            let lost = self.rng.random::<f64>() < self.cfg.loss_prob;
            let jitter = self.rng.random::<f64>() * self.cfg.jitter_ms;
            let reorder = self.rng.random::<f64>() < self.cfg.reorder_prob;
            (lost, jitter, reorder)
        };
        if lost {
            if self.record {
                self.log.push(Delivery {
                    seq,
                    sent: now,
                    delivered: None,
                });
            }
            return;
        }
        let mut delay = self.cfg.delay_ms + jitter;
        if reorder {
            delay += self.cfg.reorder_holdback_ms;
        }
        self.queue.push(InFlight {
            sent: now,
            at: now + ms_to_us(delay),
            seq,
            payload,
        });
    }

    /// Packets due at or before `now`, ordered by delivery time then send
    /// order.
    pub fn poll(&mut self, now: u64) -> Vec<P> {
        if self.queue.is_empty() {
            return Vec::new();
        }
        let mut due = Vec::new();
        let mut keep = Vec::with_capacity(self.queue.len());
        for p in self.queue.drain(..) {
            if p.at <= now {
                due.push(p);
            } else {
                keep.push(p);
            }
        }
        self.queue = keep;
        due.sort_by_key(|p| (p.at, p.seq));
        due.into_iter()
            .map(|p| {
                if self.record {
                    self.log.push(Delivery {
                        seq: p.seq,
                        sent: p.sent,
                        delivered: Some(p.at),
                    });
                }
                p.payload
            })
            .collect()
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn log(&self) -> &[Delivery] {
        &self.log
    }
}
