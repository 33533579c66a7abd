//! Non-blocking exchange of seeds with an external mutator.
//!
//! The fuzzing loop offers scheduled seeds into a drop-oldest queue and calls
//! [`LlmChannel::pump`] once per iteration. Nothing here waits on the endpoint.

pub mod queue;
pub mod transport;
pub mod wire;

pub use queue::{BoundedQueue, DEFAULT_CAPACITY};
pub use transport::{Endpoint, InProcessTransport, SendOutcome, SocketTransport, Transport};
pub use wire::{MutationRequest, MutationResponse};

use serde::{Deserialize, Serialize};

use crate::corpus::SeedId;
use crate::hexcodec::{self, Gate};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelStats {
    /// Requests accepted into the queue.
    pub offers: u64,
    pub evictions: u64,
    /// Requests handed to the transport.
    pub sent: u64,
    /// Responses that decoded to a non-empty payload.
    pub deliveries: u64,
    pub voids: u64,
    /// Offers skipped by the length gate.
    pub gated: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Offer {
    Queued,
    /// Queued after evicting the oldest request, for this seed.
    Evicted(SeedId),
    Gated,
    /// Identical to the previous accepted offer.
    Duplicate,
    BadTag,
}

/// A mutated candidate returned by the endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub parent: SeedId,
    pub payload: Vec<u8>,
}

pub struct LlmChannel {
    queue: BoundedQueue<MutationRequest>,
    transport: Box<dyn Transport>,
    max_hex_len: usize,
    last: Option<(SeedId, String)>,
    stats: ChannelStats,
}

impl LlmChannel {
    pub fn new(transport: Box<dyn Transport>, capacity: usize, max_hex_len: usize) -> Self {
        Self {
            queue: BoundedQueue::new(capacity),
            transport,
            max_hex_len,
            last: None,
            stats: ChannelStats::default(),
        }
    }

    pub fn offer(&mut self, seed_id: SeedId, format_tag: &str, payload: &[u8], now: f64) -> Offer {
        if !wire::is_valid_tag(format_tag) {
            return Offer::BadTag;
        }
        if hexcodec::gate_bytes(payload.len(), None, self.max_hex_len) == Gate::Skip {
            self.stats.gated += 1;
            return Offer::Gated;
        }
        let hex = hexcodec::encode(payload);
        if self.last.as_ref().is_some_and(|(id, h)| *id == seed_id && *h == hex) {
            return Offer::Duplicate;
        }
        self.last = Some((seed_id, hex.clone()));
        self.stats.offers += 1;
        let req = MutationRequest {
            seed_id,
            format_tag: format_tag.to_string(),
            hex,
            offered_at: now,
        };
        match self.queue.offer(req) {
            Some(old) => {
                self.stats.evictions += 1;
                Offer::Evicted(old.seed_id)
            }
            None => Offer::Queued,
        }
    }

    /// Hand the head request to the transport if it can take it, then collect
    /// at most one response.
    pub fn pump(&mut self) -> Option<Delivery> {
        if let Some(head) = self.queue.front() {
            if self.transport.try_send(head) == SendOutcome::Sent {
                self.queue.pop_front();
                self.stats.sent += 1;
            }
        }
        let res = self.transport.try_recv()?;
        // Re-check on this side even though the endpoint sanitizes.
        let payload = res
            .hex
            .as_deref()
            .and_then(hexcodec::sanitize_response)
            .and_then(|h| hexcodec::decode(&h).ok())
            .filter(|p| !p.is_empty());
        match payload {
            Some(payload) => {
                self.stats.deliveries += 1;
                Some(Delivery {
                    parent: res.seed_id,
                    payload,
                })
            }
            None => {
                self.stats.voids += 1;
                None
            }
        }
    }

    pub fn queue(&self) -> &BoundedQueue<MutationRequest> {
        &self.queue
    }

    pub fn stats(&self) -> ChannelStats {
        self.stats
    }

    pub fn is_connected(&self) -> bool {
        self.transport.is_connected()
    }
}
