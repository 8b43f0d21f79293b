//! Block-keyed pseudorandom bijection on user IDs.
//!
//! One round shuffles (cyclic bit rotation, the perfect riffle) and shifts
//! (modular addition of an LCG-derived value). Hundreds of rounds decorrelate
//! IDs well enough for bitmap compression; this is not a cryptographic
//! permutation and makes no secrecy claims. All arithmetic is integer-only,
//! so images are identical across platforms.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;

/// LCG multiplier; hex 5EED, satisfies the Hull-Dobell full-period
/// constraint for power-of-two moduli (5 mod 8).
pub const LCG_FACTOR: u64 = 0x5EED;

/// Round count that pushes avalanche correlations below a few percent at the
/// supported domain sizes.
pub const DEFAULT_BASE_ROUNDS: u32 = 200;

/// Parameters of the block-keyed ID permutation.
///
/// `extra_rounds` comes from the root-of-trust flag field. Zero means the
/// permutation is disabled entirely; a nonzero value is added on top of
/// `base_rounds`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermParams {
    /// Domain log-size; the permutation acts on `[0, 2^d)`.
    pub d: u32,
    /// Seed of the round-value sequence.
    pub block_number: u64,
    pub base_rounds: u32,
    pub extra_rounds: u8,
}

impl PermParams {
    pub fn new(d: u32, block_number: u64, base_rounds: u32, extra_rounds: u8) -> Result<PermParams, Error> {
        if !(1..=16).contains(&d) {
            return Err(Error::DomainSizeOutOfRange(d));
        }
        debug_assert!(extra_rounds < 32);
        Ok(PermParams { d, block_number, base_rounds, extra_rounds })
    }

    pub fn domain_size(&self) -> u64 {
        1u64 << self.d
    }

    /// Total rounds applied; 0 when the permutation is disabled.
    pub fn effective_rounds(&self) -> u32 {
        if self.extra_rounds == 0 {
            0
        } else {
            self.base_rounds + u32::from(self.extra_rounds)
        }
    }
}

fn check_id(id: u64, d: u32) -> Result<(), Error> {
    if id >= 1 << d {
        return Err(Error::IdOutOfRange { id, n: 1 << d });
    }
    Ok(())
}

/// Cyclic shift left by one over `d` bits: the top bit moves to position 0.
/// Dividing the deck in half and interleaving.
pub fn sigma(i: u64, d: u32) -> Result<u64, Error> {
    check_id(i, d)?;
    let n = 1u64 << d;
    Ok(((i << 1) & (n - 1)) | (i >> (d - 1)))
}

fn sigma_inv(i: u64, d: u32) -> u64 {
    (i >> 1) | ((i & 1) << (d - 1))
}

/// Shift: add a round value modulo the domain size.
pub fn tau(i: u64, v: u64, n: u64) -> u64 {
    (i + v) % n
}

/// One LCG step: `(0x5EED * v + 1) mod n`, `n` a power of two.
pub fn lcg_next(v: u64, n: u64) -> u64 {
    debug_assert!(n.is_power_of_two());
    (LCG_FACTOR.wrapping_mul(v) + 1) & (n - 1)
}

/// Applies `rounds` shuffle-shift rounds. Round values start at
/// `block_number mod n` and advance through the LCG.
pub fn permute_rounds(id: u64, d: u32, block_number: u64, rounds: u32) -> Result<u64, Error> {
    check_id(id, d)?;
    let n = 1u64 << d;
    let mut v = block_number & (n - 1);
    let mut x = id;
    for _ in 0..rounds {
        x = sigma(tau(x, v, n), d)?;
        v = lcg_next(v, n);
    }
    Ok(x)
}

/// Image of every id under `rounds` shuffle-shift rounds, computed by moving
/// the whole range through each round at once. `table[id] = image`.
pub fn permutation_table(d: u32, block_number: u64, rounds: u32) -> Result<Vec<u32>, Error> {
    if !(1..=16).contains(&d) {
        return Err(Error::DomainSizeOutOfRange(d));
    }
    let n = 1usize << d;
    let mut table: Vec<u32> = (0..n as u32).collect();
    let mut v = block_number & (n as u64 - 1);
    for _ in 0..rounds {
        for x in table.iter_mut() {
            *x = sigma(tau(u64::from(*x), v, n as u64), d)? as u32;
        }
        v = lcg_next(v, n as u64);
    }
    Ok(table)
}

/// Maps a raw ID to its bitmap position for the block. Identity when the
/// params disable the permutation.
pub fn permute(id: u64, params: &PermParams) -> Result<u64, Error> {
    check_id(id, params.d)?;
    permute_rounds(id, params.d, params.block_number, params.effective_rounds())
}

/// Two-sided inverse of [`permute`]: replays the round values in reverse,
/// undoing each shuffle-shift.
pub fn invert(position: u64, params: &PermParams) -> Result<u64, Error> {
    check_id(position, params.d)?;
    let n = params.domain_size();
    let rounds = params.effective_rounds();
    let mut vs = Vec::with_capacity(rounds as usize);
    let mut v = params.block_number & (n - 1);
    for _ in 0..rounds {
        vs.push(v);
        v = lcg_next(v, n);
    }
    let mut x = position;
    for &v in vs.iter().rev() {
        x = tau(sigma_inv(x, params.d), n - v % n, n) % n;
    }
    Ok(x)
}

/// Avalanche-criterion measurement of the permutation.
#[derive(Debug, Clone)]
pub struct AvalancheReport {
    pub d: u32,
    pub t: u32,
    pub samples: usize,
    /// `k_matrix[k][l]` = frequency with which flipping input bit k flips
    /// output bit l.
    pub k_matrix: Vec<Vec<f64>>,
    /// Max deviation of any matrix entry above 1/2.
    pub delta: f64,
}

/// Sweeps the full domain for `block_samples` block numbers drawn from
/// [0, 10000], measuring how often each output bit flips in response to each
/// flipped input bit.
pub fn avalanche(d: u32, t: u32, block_samples: usize, seed: u64) -> Result<AvalancheReport, Error> {
    if !(1..=16).contains(&d) {
        return Err(Error::DomainSizeOutOfRange(d));
    }
    let n = 1usize << d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![vec![0u64; d as usize]; d as usize];
    for _ in 0..block_samples {
        let block_number = rng.gen_range(0..=10_000u64);
        let table = permutation_table(d, block_number, t)?;
        for x in 0..n {
            for k in 0..d as usize {
                let diff = table[x] ^ table[x ^ (1 << k)];
                for l in 0..d as usize {
                    counts[k][l] += u64::from(diff >> l & 1);
                }
            }
        }
    }
    let total = (block_samples * n) as f64;
    let k_matrix: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / total).collect())
        .collect();
    let delta = k_matrix
        .iter()
        .flatten()
        .map(|&k| k - 0.5)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(AvalancheReport { d, t, samples: block_samples, k_matrix, delta })
}
