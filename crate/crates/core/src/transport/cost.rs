use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Label for traffic sent outside any labelled scope.
pub const UNLABELLED: &str = "other";

/// One party's counters under one label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub bytes: u64,
    pub payload_bytes: u64,
    pub messages: u64,
    pub rounds: u64,
}

impl Counters {
    fn add(&mut self, other: &Counters) {
        self.bytes += other.bytes;
        self.payload_bytes += other.payload_bytes;
        self.messages += other.messages;
        self.rounds += other.rounds;
    }
}

/// What one party observed about its own outgoing traffic.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyCost {
    pub per_label: BTreeMap<String, Counters>,
}

impl PartyCost {
    pub(crate) fn entry(&mut self, label: &str) -> &mut Counters {
        if !self.per_label.contains_key(label) {
            self.per_label
                .insert(label.to_string(), Counters::default());
        }
        self.per_label.get_mut(label).expect("inserted above")
    }

    pub fn total(&self) -> Counters {
        let mut t = Counters::default();
        for c in self.per_label.values() {
            t.add(c);
        }
        t
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolCost {
    pub bytes_sent: [u64; 3],
    pub payload_bytes: [u64; 3],
    pub messages_sent: [u64; 3],
    /// Maximum over parties of the rounds each one started under this label.
    pub rounds: u64,
}

impl ProtocolCost {
    pub fn total_bytes(&self) -> u64 {
        self.bytes_sent.iter().sum()
    }

    pub fn total_payload_bytes(&self) -> u64 {
        self.payload_bytes.iter().sum()
    }

    pub fn total_messages(&self) -> u64 {
        self.messages_sent.iter().sum()
    }
}

/// Merged accounting for a three-party run.
///
/// Bytes include a 4-byte length frame per message; `payload_bytes` excludes
/// it. Global `rounds` is the sum of the per-label round counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub bytes_sent: [u64; 3],
    pub payload_bytes: [u64; 3],
    pub messages_sent: [u64; 3],
    pub rounds: u64,
    pub per_protocol: BTreeMap<String, ProtocolCost>,
}

impl CostReport {
    pub fn from_parties(parties: [&PartyCost; 3]) -> Self {
        let mut report = CostReport::default();
        for (i, p) in parties.iter().enumerate() {
            for (label, c) in &p.per_label {
                let e = report.per_protocol.entry(label.clone()).or_default();
                e.bytes_sent[i] += c.bytes;
                e.payload_bytes[i] += c.payload_bytes;
                e.messages_sent[i] += c.messages;
                e.rounds = e.rounds.max(c.rounds);
            }
        }
        report.recompute_totals();
        report
    }

    /// Report of a single party's view, as produced by one TCP daemon.
    pub fn from_single(index: usize, cost: &PartyCost) -> Self {
        let empty = PartyCost::default();
        let mut views = [&empty, &empty, &empty];
        views[index] = cost;
        CostReport::from_parties(views)
    }

    fn recompute_totals(&mut self) {
        self.bytes_sent = [0; 3];
        self.payload_bytes = [0; 3];
        self.messages_sent = [0; 3];
        self.rounds = 0;
        for e in self.per_protocol.values() {
            for i in 0..3 {
                self.bytes_sent[i] += e.bytes_sent[i];
                self.payload_bytes[i] += e.payload_bytes[i];
                self.messages_sent[i] += e.messages_sent[i];
            }
            self.rounds += e.rounds;
        }
    }

    /// Combines reports of separate daemons (disjoint parties) of one run.
    pub fn combine_parties(reports: &[CostReport]) -> Self {
        let mut out = CostReport::default();
        for r in reports {
            for (label, c) in &r.per_protocol {
                let e = out.per_protocol.entry(label.clone()).or_default();
                for i in 0..3 {
                    e.bytes_sent[i] += c.bytes_sent[i];
                    e.payload_bytes[i] += c.payload_bytes[i];
                    e.messages_sent[i] += c.messages_sent[i];
                }
                e.rounds = e.rounds.max(c.rounds);
            }
        }
        out.recompute_totals();
        out
    }

    /// Adds a later, sequential run (e.g. another trial) to this one.
    pub fn accumulate(&mut self, other: &CostReport) {
        for (label, c) in &other.per_protocol {
            let e = self.per_protocol.entry(label.clone()).or_default();
            for i in 0..3 {
                e.bytes_sent[i] += c.bytes_sent[i];
                e.payload_bytes[i] += c.payload_bytes[i];
                e.messages_sent[i] += c.messages_sent[i];
            }
            e.rounds += c.rounds;
        }
        self.recompute_totals();
    }

    pub fn total_bytes(&self) -> u64 {
        self.bytes_sent.iter().sum()
    }

    pub fn total_payload_bytes(&self) -> u64 {
        self.payload_bytes.iter().sum()
    }

    pub fn total_messages(&self) -> u64 {
        self.messages_sent.iter().sum()
    }

    /// Costs of every label starting with `prefix` (a path segment match).
    pub fn under(&self, prefix: &str) -> ProtocolCost {
        let mut out = ProtocolCost::default();
        for (label, c) in &self.per_protocol {
            let hit = label == prefix
                || label.starts_with(prefix) && label[prefix.len()..].starts_with('/');
            if hit {
                for i in 0..3 {
                    out.bytes_sent[i] += c.bytes_sent[i];
                    out.payload_bytes[i] += c.payload_bytes[i];
                    out.messages_sent[i] += c.messages_sent[i];
                }
                out.rounds += c.rounds;
            }
        }
        out
    }

    /// Line-oriented `key=value` rendering.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "bytes_sent={}", join(&self.bytes_sent));
        let _ = writeln!(s, "payload_bytes={}", join(&self.payload_bytes));
        let _ = writeln!(s, "messages_sent={}", join(&self.messages_sent));
        let _ = writeln!(s, "rounds={}", self.rounds);
        let _ = writeln!(s, "total_bytes={}", self.total_bytes());
        for (label, c) in &self.per_protocol {
            let _ = writeln!(
                s,
                "protocol.{label}=bytes:{} payload:{} messages:{} rounds:{}",
                c.total_bytes(),
                c.total_payload_bytes(),
                c.total_messages(),
                c.rounds
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cost report serializes")
    }
}

fn join(v: &[u64; 3]) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn party(label: &str, bytes: u64, rounds: u64) -> PartyCost {
        let mut p = PartyCost::default();
        *p.entry(label) = Counters {
            bytes,
            payload_bytes: bytes - 4,
            messages: 1,
            rounds,
        };
        p
    }

    #[test]
    fn totals_equal_sum_of_protocols() {
        let mut a = party("mul", 12, 1);
        a.entry("trunc").bytes = 20;
        a.entry("trunc").rounds = 2;
        let b = party("mul", 12, 1);
        let c = party("trunc", 8, 1);
        let r = CostReport::from_parties([&a, &b, &c]);
        let by_label: u64 = r.per_protocol.values().map(|p| p.total_bytes()).sum();
        assert_eq!(r.total_bytes(), by_label);
        assert_eq!(r.rounds, 1 + 2);
        assert_eq!(r.bytes_sent, [32, 12, 8]);
    }

    #[test]
    fn prefix_selection_respects_segments() {
        let mut a = PartyCost::default();
        a.entry("softmax/max").bytes = 5;
        a.entry("softmax").bytes = 1;
        a.entry("softmaxx").bytes = 100;
        let e = PartyCost::default();
        let r = CostReport::from_parties([&a, &e, &e]);
        assert_eq!(r.under("softmax").total_bytes(), 6);
    }
}
