//! Checks the cost report against bytes observed at the link layer.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use secdiff_core::nonlinear::SoftmaxConfig;
use secdiff_core::rss::{PartySetup, ZeroShareGenerator};
use secdiff_core::transport::{local_links, spawn_parties_with_links, Link, Message};
use secdiff_core::{FixedEncoding, Party, PartyId, TransportError};

/// Length prefix of every frame on the wire.
const FRAME: u64 = 4;

struct Counting<L> {
    inner: L,
    bytes: Arc<AtomicU64>,
    messages: Arc<AtomicU64>,
}

impl<L: Link> Link for Counting<L> {
    fn send(&mut self, msg: Message) -> Result<(), TransportError> {
        self.bytes
            .fetch_add(FRAME + msg.payload.len() as u64, Ordering::SeqCst);
        self.messages.fetch_add(1, Ordering::SeqCst);
        self.inner.send(msg)
    }

    fn recv(&mut self, from: PartyId) -> Result<Message, TransportError> {
        self.inner.recv(from)
    }
}

#[test]
fn reported_bytes_equal_bytes_handed_to_the_link() {
    let counters: Vec<(Arc<AtomicU64>, Arc<AtomicU64>)> =
        (0..3).map(|_| (Arc::default(), Arc::default())).collect();
    let links: Vec<Box<dyn Link>> = local_links(Duration::from_secs(30))
        .into_iter()
        .zip(&counters)
        .map(|(l, (b, m))| {
            Box::new(Counting {
                inner: l,
                bytes: b.clone(),
                messages: m.clone(),
            }) as Box<dyn Link>
        })
        .collect();
    let links: [Box<dyn Link>; 3] = links.try_into().ok().unwrap();
    let setup = PartySetup::from_master(11);
    let enc = FixedEncoding::default();
    let (_, report) = spawn_parties_with_links(links, |net| {
        let mut p = Party::new(net, &setup, enc);
        let x = p.public(
            vec![4, 8],
            &(0..32).map(|i| i as f64 / 7.0 - 2.0).collect::<Vec<_>>(),
        )?;
        let s = p.softmax(&SoftmaxConfig::mpc(), &x)?;
        let y = p.silu(&s)?;
        p.mul(&x, &y)
    })
    .unwrap();
    for (i, (b, m)) in counters.iter().enumerate() {
        assert_eq!(report.bytes_sent[i], b.load(Ordering::SeqCst), "P{i} bytes");
        assert_eq!(
            report.messages_sent[i],
            m.load(Ordering::SeqCst),
            "P{i} messages"
        );
        assert_eq!(
            report.bytes_sent[i],
            report.payload_bytes[i] + FRAME * report.messages_sent[i]
        );
    }
    let by_label: u64 = report.per_protocol.values().map(|c| c.total_bytes()).sum();
    assert_eq!(by_label, report.total_bytes());
    let softmax = report.under("softmax");
    assert!(softmax.total_bytes() > 0);
    assert!(softmax.total_bytes() < report.total_bytes());
}

#[test]
fn zero_shares_vanish_across_parties() {
    let setup = PartySetup::from_master(3);
    let mut gens: Vec<ZeroShareGenerator> =
        PartyId::ALL.iter().map(|&id| setup.generator(id)).collect();
    for n in [1, 5, 64] {
        let parts: Vec<Vec<u64>> = gens.iter_mut().map(|g| g.zero_share(n)).collect();
        for k in 0..n {
            let s = parts[0][k]
                .wrapping_add(parts[1][k])
                .wrapping_add(parts[2][k]);
            assert_eq!(s, 0);
        }
        assert!(parts[0].iter().any(|&v| v != 0));
    }
}
