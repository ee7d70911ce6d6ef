use std::thread;
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use super::{CostReport, Link, Message, Network, PartyCost};
use crate::error::{Error, Result, TransportError};
use crate::rss::PartyId;

/// In-process endpoint backed by unbounded channels.
pub struct LocalLink {
    id: PartyId,
    tx: [Option<Sender<Message>>; 3],
    rx: [Option<Receiver<Message>>; 3],
    timeout: Duration,
}

/// Fully connected triple of in-process links.
pub fn local_links(timeout: Duration) -> [LocalLink; 3] {
    let mut tx: [[Option<Sender<Message>>; 3]; 3] = Default::default();
    let mut rx: [[Option<Receiver<Message>>; 3]; 3] = Default::default();
    for s in 0..3 {
        for r in 0..3 {
            if s != r {
                let (t, x) = unbounded();
                tx[s][r] = Some(t);
                rx[r][s] = Some(x);
            }
        }
    }
    let mut links = tx
        .into_iter()
        .zip(rx)
        .enumerate()
        .map(|(i, (tx, rx))| LocalLink {
            id: PartyId::ALL[i],
            tx,
            rx,
            timeout,
        });
    [
        links.next().unwrap(),
        links.next().unwrap(),
        links.next().unwrap(),
    ]
}

impl Link for LocalLink {
    fn send(&mut self, msg: Message) -> Result<(), TransportError> {
        let to = msg.receiver;
        let sequence = msg.sequence;
        let tx = self.tx[to.index()]
            .as_ref()
            .ok_or(TransportError::Payload {
                party: self.id,
                peer: to,
                detail: "no channel to self".into(),
            })?;
        tx.send(msg).map_err(|_| TransportError::Disconnected {
            party: self.id,
            peer: to,
            sequence,
        })
    }

    fn recv(&mut self, from: PartyId) -> Result<Message, TransportError> {
        let rx = self.rx[from.index()]
            .as_ref()
            .ok_or(TransportError::Payload {
                party: self.id,
                peer: from,
                detail: "no channel from self".into(),
            })?;
        rx.recv_timeout(self.timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => TransportError::Timeout {
                party: self.id,
                peer: from,
                sequence: 0,
                after: self.timeout,
            },
            RecvTimeoutError::Disconnected => TransportError::Disconnected {
                party: self.id,
                peer: from,
                sequence: 0,
            },
        })
    }
}

/// Runs three party programs concurrently over in-process channels.
pub fn spawn_local_parties<T, F>(timeout: Duration, f: F) -> Result<([T; 3], CostReport)>
where
    T: Send,
    F: Fn(&mut Network) -> Result<T> + Sync,
{
    let [a, b, c] = local_links(timeout);
    spawn_parties_with_links([Box::new(a), Box::new(b), Box::new(c)], f)
}

/// Same as [`spawn_local_parties`] over caller-supplied links.
pub fn spawn_parties_with_links<T, F>(
    links: [Box<dyn Link>; 3],
    f: F,
) -> Result<([T; 3], CostReport)>
where
    T: Send,
    F: Fn(&mut Network) -> Result<T> + Sync,
{
    let outcomes: Vec<(Result<T>, PartyCost)> = thread::scope(|s| {
        let handles: Vec<_> = links
            .into_iter()
            .enumerate()
            .map(|(i, link)| {
                let f = &f;
                s.spawn(move || {
                    let mut net = Network::new(PartyId::ALL[i], link);
                    let out = f(&mut net);
                    let cost = net.take_cost();
                    (out, cost)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("party thread panicked"))
            .collect()
    });

    let costs: Vec<PartyCost> = outcomes.iter().map(|(_, c)| c.clone()).collect();
    let report = CostReport::from_parties([&costs[0], &costs[1], &costs[2]]);

    let mut values = Vec::with_capacity(3);
    let mut errors = Vec::new();
    for (i, (out, _)) in outcomes.into_iter().enumerate() {
        match out {
            Ok(v) => values.push(v),
            Err(e) => errors.push((PartyId::ALL[i], e)),
        }
    }
    if !errors.is_empty() {
        let pick = errors
            .iter()
            .position(|(_, e)| !matches!(e.root(), Error::Transport(_)))
            .or_else(|| {
                errors.iter().position(|(_, e)| {
                    !matches!(
                        e.root(),
                        Error::Transport(TransportError::Disconnected { .. })
                    )
                })
            })
            .unwrap_or(0);
        let (party, source) = errors.swap_remove(pick);
        return Err(Error::Abort {
            party,
            source: Box::new(source),
        });
    }
    let values: [T; 3] = values
        .try_into()
        .unwrap_or_else(|_| unreachable!("three results"));
    Ok((values, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: Duration = Duration::from_secs(5);

    #[test]
    fn ping_around_the_ring_is_one_round() {
        let (out, report) = spawn_local_parties(T, |net| {
            let id = net.id();
            net.send(id.next(), vec![id.index() as u8])?;
            Ok(net.recv(id.prev())?[0])
        })
        .unwrap();
        assert_eq!(out, [2, 0, 1]);
        assert_eq!(report.rounds, 1);
        assert_eq!(report.bytes_sent, [5, 5, 5]);
    }

    #[test]
    fn eight_bytes_cost_eight_plus_framing() {
        let (out, report) = spawn_local_parties(T, |net| {
            if net.id() == PartyId::P0 {
                net.send(PartyId::P2, (1..=8).collect())?;
            }
            if net.id() == PartyId::P2 {
                return Ok(net.recv(PartyId::P0)?);
            }
            Ok(vec![])
        })
        .unwrap();
        assert_eq!(out[2], (1..=8).collect::<Vec<u8>>());
        assert_eq!(report.bytes_sent[0], 8 + super::super::FRAME_OVERHEAD);
        assert_eq!(report.payload_bytes[0], 8);
    }

    #[test]
    fn recv_from_closed_peer_is_an_error() {
        let [a, b, _c] = local_links(T);
        drop(b);
        let mut net = Network::new(PartyId::P0, Box::new(a));
        assert!(matches!(
            net.recv(PartyId::P1),
            Err(TransportError::Disconnected { .. })
        ));
    }

    #[test]
    fn failing_party_is_named() {
        let err = spawn_local_parties(T, |net| {
            if net.id() == PartyId::P1 {
                return Err(Error::Argument("boom".into()));
            }
            net.recv(PartyId::P1)?;
            Ok(())
        })
        .unwrap_err();
        match err {
            Error::Abort { party, source } => {
                assert_eq!(party, PartyId::P1);
                assert!(matches!(*source, Error::Argument(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn labels_partition_the_traffic() {
        let (_, report) = spawn_local_parties(T, |net| {
            let id = net.id();
            net.push_label("a");
            net.send(id.next(), vec![0; 3])?;
            net.recv(id.prev())?;
            net.push_label("b");
            net.send(id.next(), vec![0; 5])?;
            net.recv(id.prev())?;
            net.pop_label();
            net.pop_label();
            net.send(id.next(), vec![0; 1])?;
            net.recv(id.prev())?;
            Ok(())
        })
        .unwrap();
        assert_eq!(report.per_protocol["a"].total_payload_bytes(), 9);
        assert_eq!(report.per_protocol["a/b"].total_payload_bytes(), 15);
        assert_eq!(report.per_protocol["other"].total_payload_bytes(), 3);
        assert_eq!(report.rounds, 3);
    }
}
