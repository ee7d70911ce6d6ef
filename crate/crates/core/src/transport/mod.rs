//! Message passing between the three parties with per-protocol accounting.
//!
//! A [`Link`] moves [`Message`]s; [`Network`] sits on top of it, enforces
//! per-pair sequence numbers and records bytes, messages and rounds under the
//! currently active label path.

pub mod cost;
pub mod local;
pub mod tcp;

use crate::error::TransportError;
use crate::rss::PartyId;

pub use cost::{CostReport, Counters, PartyCost, ProtocolCost};
pub use local::{local_links, spawn_local_parties, spawn_parties_with_links, LocalLink};

/// Length prefix added to every frame on the wire.
pub const FRAME_OVERHEAD: u64 = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub sender: PartyId,
    pub receiver: PartyId,
    pub sequence: u64,
    pub payload: Vec<u8>,
}

/// A party's endpoint to its two peers.
pub trait Link: Send {
    fn send(&mut self, msg: Message) -> Result<(), TransportError>;
    fn recv(&mut self, from: PartyId) -> Result<Message, TransportError>;
}

impl<L: Link + ?Sized> Link for Box<L> {
    fn send(&mut self, msg: Message) -> Result<(), TransportError> {
        (**self).send(msg)
    }

    fn recv(&mut self, from: PartyId) -> Result<Message, TransportError> {
        (**self).recv(from)
    }
}

pub struct Network {
    id: PartyId,
    link: Box<dyn Link>,
    next_send: [u64; 3],
    next_recv: [u64; 3],
    labels: Vec<String>,
    label: String,
    sent_since_recv: bool,
    cost: PartyCost,
}

impl Network {
    pub fn new(id: PartyId, link: Box<dyn Link>) -> Self {
        Network {
            id,
            link,
            next_send: [0; 3],
            next_recv: [0; 3],
            labels: Vec::new(),
            label: cost::UNLABELLED.to_string(),
            sent_since_recv: false,
            cost: PartyCost::default(),
        }
    }

    pub fn id(&self) -> PartyId {
        self.id
    }

    pub fn push_label(&mut self, label: &str) {
        self.labels.push(label.to_string());
        self.label = self.labels.join("/");
    }

    pub fn pop_label(&mut self) {
        self.labels.pop();
        self.label = if self.labels.is_empty() {
            cost::UNLABELLED.to_string()
        } else {
            self.labels.join("/")
        };
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// A send that follows a receive (or opens the session) starts a round.
    pub fn send(&mut self, to: PartyId, payload: Vec<u8>) -> Result<(), TransportError> {
        let len = payload.len() as u64;
        let msg = Message {
            sender: self.id,
            receiver: to,
            sequence: self.next_send[to.index()],
            payload,
        };
        self.link.send(msg)?;
        self.next_send[to.index()] += 1;
        let entry = self.cost.entry(&self.label);
        entry.bytes += len + FRAME_OVERHEAD;
        entry.payload_bytes += len;
        entry.messages += 1;
        if !self.sent_since_recv {
            entry.rounds += 1;
            self.sent_since_recv = true;
        }
        Ok(())
    }

    pub fn recv(&mut self, from: PartyId) -> Result<Vec<u8>, TransportError> {
        let expected = self.next_recv[from.index()];
        let msg = self.link.recv(from).map_err(|e| e.at_sequence(expected))?;
        if msg.sender != from || msg.receiver != self.id || msg.sequence != expected {
            return Err(TransportError::Sequence {
                party: self.id,
                peer: from,
                expected,
                got: msg.sequence,
            });
        }
        self.next_recv[from.index()] += 1;
        self.sent_since_recv = false;
        Ok(msg.payload)
    }

    pub fn cost(&self) -> &PartyCost {
        &self.cost
    }

    pub fn take_cost(&mut self) -> PartyCost {
        std::mem::take(&mut self.cost)
    }

    pub fn messages_sent_to(&self, to: PartyId) -> u64 {
        self.next_send[to.index()]
    }
}
