use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::PartyId;

pub type PrfKey = [u8; 16];

/// Stream identifiers for everything derived from one master seed.
pub mod stream {
    pub const PAIR_KEYS: u64 = 1;
    pub const DEALER: u64 = 2;
    pub const PUBLIC_NOISE: u64 = 3;
    pub const WEIGHTS: u64 = 4;
}

/// ChaCha20 generator for `(seed, stream)`; all reproducible randomness goes
/// through here.
pub fn seeded_stream(seed: u64, stream_id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// `PRF(key, ctr)` expanded to `n` words: ChaCha20 keyed by `key`, nonce `ctr`.
pub fn prf(key: &PrfKey, ctr: u64, n: usize) -> Vec<u64> {
    let mut seed = [0u8; 32];
    seed[..16].copy_from_slice(key);
    let mut rng = ChaCha20Rng::from_seed(seed);
    rng.set_stream(ctr);
    (0..n).map(|_| rng.next_u64()).collect()
}

/// Pairwise keys: `keys[i]` is shared by `P_i` and `P_{i+1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartySetup {
    keys: [PrfKey; 3],
}

impl PartySetup {
    pub fn from_keys(keys: [PrfKey; 3]) -> Self {
        PartySetup { keys }
    }

    pub fn from_master(seed: u64) -> Self {
        let mut rng = seeded_stream(seed, stream::PAIR_KEYS);
        let mut keys = [[0u8; 16]; 3];
        for k in &mut keys {
            rng.fill_bytes(k);
        }
        PartySetup { keys }
    }

    pub fn generator(&self, id: PartyId) -> ZeroShareGenerator {
        ZeroShareGenerator::new(id, self.keys[id.index()], self.keys[id.prev().index()])
    }
}

/// Per-party source of correlated randomness. Every protocol call consumes
/// one counter value on all three parties in lockstep.
#[derive(Clone, Debug)]
pub struct ZeroShareGenerator {
    id: PartyId,
    seed_with_next: PrfKey,
    seed_with_prev: PrfKey,
    counter: u64,
}

impl ZeroShareGenerator {
    pub fn new(id: PartyId, seed_with_next: PrfKey, seed_with_prev: PrfKey) -> Self {
        ZeroShareGenerator {
            id,
            seed_with_next,
            seed_with_prev,
            counter: 0,
        }
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_counter(&mut self) -> u64 {
        let c = self.counter;
        self.counter += 1;
        c
    }

    /// `alpha_i = PRF(k_next, ctr) - PRF(k_prev, ctr)` at a given counter.
    pub fn alpha_at(&self, ctr: u64, n: usize) -> Vec<u64> {
        let a = prf(&self.seed_with_next, ctr, n);
        let b = prf(&self.seed_with_prev, ctr, n);
        a.iter().zip(&b).map(|(x, y)| x.wrapping_sub(*y)).collect()
    }

    pub fn zero_share(&mut self, n: usize) -> Vec<u64> {
        let ctr = self.next_counter();
        self.alpha_at(ctr, n)
    }

    /// Boolean analogue: the three masks XOR to zero.
    pub fn zero_share_bits(&mut self, words: usize) -> Vec<u64> {
        let ctr = self.next_counter();
        let a = prf(&self.seed_with_next, ctr, words);
        let b = prf(&self.seed_with_prev, ctr, words);
        a.iter().zip(&b).map(|(x, y)| x ^ y).collect()
    }

    /// Stream known to this party and `peer` only.
    pub(crate) fn pair_stream(&self, peer: PartyId, ctr: u64, n: usize) -> Vec<u64> {
        if peer == self.id.next() {
            prf(&self.seed_with_next, ctr, n)
        } else {
            debug_assert_eq!(peer, self.id.prev());
            prf(&self.seed_with_prev, ctr, n)
        }
    }
}
