use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::rss::PartyId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures raised by a party's channel endpoints.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("{party}: peer {peer} disconnected (message #{sequence})")]
    Disconnected {
        party: PartyId,
        peer: PartyId,
        sequence: u64,
    },
    #[error("{party}: timed out after {after:?} waiting for {peer} (message #{sequence})")]
    Timeout {
        party: PartyId,
        peer: PartyId,
        sequence: u64,
        after: Duration,
    },
    #[error("{party}: out-of-order message from {peer}: expected #{expected}, got #{got}")]
    Sequence {
        party: PartyId,
        peer: PartyId,
        expected: u64,
        got: u64,
    },
    #[error("{party}: malformed payload from {peer}: {detail}")]
    Payload {
        party: PartyId,
        peer: PartyId,
        detail: String,
    },
    #[error("{party}: socket error talking to {peer}: {detail}")]
    Io {
        party: PartyId,
        peer: PartyId,
        detail: String,
    },
}

impl TransportError {
    /// Fills in the message index the receiver was waiting for.
    pub(crate) fn at_sequence(self, expected: u64) -> Self {
        match self {
            TransportError::Disconnected { party, peer, .. } => TransportError::Disconnected {
                party,
                peer,
                sequence: expected,
            },
            TransportError::Timeout {
                party, peer, after, ..
            } => TransportError::Timeout {
                party,
                peer,
                sequence: expected,
                after,
            },
            other => other,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside representable range (|r| < {limit})")]
    Range { value: f64, limit: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("share integrity violated: {0}")]
    Integrity(String),

    #[error(transparent)]
    Transport(#[from] TransportError),

    #[error("handshake failed on field `{field}`: {detail}")]
    Handshake { field: &'static str, detail: String },

    #[error("connect to {addr} timed out after {after:?}")]
    ConnectTimeout { addr: String, after: Duration },

    #[error("party {party} aborted: {source}")]
    Abort {
        party: PartyId,
        #[source]
        source: Box<Error>,
    },

    #[error("sampling step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("checksum mismatch in {what}: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum {
        what: String,
        stored: u32,
        computed: u32,
    },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    /// Strips `Abort`/`Step` wrappers down to the originating failure.
    pub fn root(&self) -> &Error {
        match self {
            Error::Abort { source, .. } | Error::Step { source, .. } => source.root(),
            other => other,
        }
    }
}
