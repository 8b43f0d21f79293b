//! Desk-scale simulator of the PLS broadcast chain.
//!
//! Each interval the sequencer transmits three values derived from the
//! current secret `N_k` and the next one: `P_k = H(N_k)`,
//! `L_k = H(N_next) XOR N_k`, and `S_k`, the root-of-trust bytes masked with
//! `H(N_next)` and enciphered under a key only the holder of `N_k` can form.
//! A receiver checks `H(L_prev XOR P_k) = P_prev` to chain interval k to
//! k−1, then deciphers the previous S-message with the freshly revealed
//! secret; the decoded message's zero redundancy field is what separates an
//! honest unlock from jamming.
//!
//! Reference cipher: AES-128 in PCBC mode with a zero IV — safe here because
//! every key is used for exactly one message. The 256-bit secret is adapted
//! to the 128-bit key by a domain-separated hash (`H("PLS-key" ∥ N)`
//! truncated); deriving the key as a plain truncation of `H(N)` would hand
//! every listener the key the moment `P = H(N)` is broadcast.

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockDecrypt, BlockEncrypt, KeyInit};
use aes::Aes128;
use sha2::{Digest as _, Sha256};

use crate::error::Error;
use crate::rootoftrust::RootOfTrust;

pub const SECRET_BYTES: usize = 32;
const CIPHER_BLOCK: usize = 16;
const KEY_DOMAIN: &[u8] = b"PLS-key";

pub type Secret = [u8; SECRET_BYTES];

fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

fn xor32(a: &[u8; 32], b: &[u8; 32]) -> [u8; 32] {
    let mut out = [0u8; 32];
    for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(b)) {
        *o = x ^ y;
    }
    out
}

/// 128-bit cipher key from a 256-bit secret, domain-separated from `H(N)`.
fn cipher_key(secret: &Secret) -> [u8; CIPHER_BLOCK] {
    let mut input = Vec::with_capacity(KEY_DOMAIN.len() + SECRET_BYTES);
    input.extend_from_slice(KEY_DOMAIN);
    input.extend_from_slice(secret);
    sha256(&input)[..CIPHER_BLOCK].try_into().unwrap()
}

/// PCBC with a zero IV: block i's cipher input is `P_i XOR (P_{i-1} XOR
/// C_{i-1})`, chaining both plaintext and ciphertext. Input is zero-padded
/// to a whole block.
fn pcbc_encrypt(key: &[u8; CIPHER_BLOCK], plaintext: &[u8]) -> Vec<u8> {
    let cipher = Aes128::new(GenericArray::from_slice(key));
    let mut padded = plaintext.to_vec();
    padded.resize(plaintext.len().div_ceil(CIPHER_BLOCK) * CIPHER_BLOCK, 0);
    let mut chain = [0u8; CIPHER_BLOCK];
    let mut out = Vec::with_capacity(padded.len());
    for block in padded.chunks(CIPHER_BLOCK) {
        let mut buf = [0u8; CIPHER_BLOCK];
        for (b, (p, c)) in buf.iter_mut().zip(block.iter().zip(&chain)) {
            *b = p ^ c;
        }
        let mut ga = GenericArray::from(buf);
        cipher.encrypt_block(&mut ga);
        for (c, (p, e)) in chain.iter_mut().zip(block.iter().zip(&ga)) {
            *c = p ^ e;
        }
        out.extend_from_slice(&ga);
    }
    out
}

fn pcbc_decrypt(key: &[u8; CIPHER_BLOCK], ciphertext: &[u8]) -> Result<Vec<u8>, Error> {
    if ciphertext.is_empty() || ciphertext.len() % CIPHER_BLOCK != 0 {
        return Err(Error::UnlockRejected("ciphertext is not block-aligned"));
    }
    let cipher = Aes128::new(GenericArray::from_slice(key));
    let mut chain = [0u8; CIPHER_BLOCK];
    let mut out = Vec::with_capacity(ciphertext.len());
    for block in ciphertext.chunks(CIPHER_BLOCK) {
        let mut ga = GenericArray::clone_from_slice(block);
        cipher.decrypt_block(&mut ga);
        let mut plain = [0u8; CIPHER_BLOCK];
        for (p, (d, c)) in plain.iter_mut().zip(ga.iter().zip(&chain)) {
            *p = d ^ c;
        }
        for (c, (p, e)) in chain.iter_mut().zip(plain.iter().zip(block)) {
            *c = p ^ e;
        }
        out.extend_from_slice(&plain);
    }
    Ok(out)
}

/// One interval's broadcast triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlsInterval {
    pub k: usize,
    /// `H(N_{k+1}) XOR N_k`: commits the next secret, reveals this one later.
    pub l: [u8; 32],
    /// The masked, enciphered root-of-trust bytes.
    pub s: Vec<u8>,
    /// `H(N_k)`, the hash the previous interval committed to.
    pub p: [u8; 32],
}

/// Builds interval `k`'s messages from the two live secrets and the payload.
pub fn gen_interval(k: usize, n_k: &Secret, n_next: &Secret, j: &[u8]) -> PlsInterval {
    let mask = sha256(n_next);
    let mut masked = j.to_vec();
    // J is at least the 40-byte empty message; only its head is masked.
    for (byte, m) in masked.iter_mut().zip(&mask) {
        *byte ^= m;
    }
    PlsInterval {
        k,
        l: xor32(&mask, n_k),
        s: pcbc_encrypt(&cipher_key(n_k), &masked),
        p: sha256(n_k),
    }
}

/// Chains interval k to k−1: `H(L_{k-1} XOR P_k) = P_{k-1}`.
pub fn verify_interval(l_prev: &[u8; 32], p_k: &[u8; 32], p_prev: &[u8; 32]) -> bool {
    sha256(&xor32(l_prev, p_k)) == *p_prev
}

/// Recovers and validates the previous interval's payload once `P_k` has
/// revealed `N_{k-1} = L_{k-1} XOR P_k`. The decoded message's structural
/// checks — above all the 32 zero redundancy bits — reject a random or
/// replayed S-message with overwhelming probability.
pub fn unlock(
    p_k: &[u8; 32],
    l_prev: &[u8; 32],
    s_prev: &[u8],
) -> Result<(Vec<u8>, RootOfTrust), Error> {
    let revealed = xor32(l_prev, p_k);
    let mut j = pcbc_decrypt(&cipher_key(&revealed), s_prev)?;
    if j.len() < 32 {
        return Err(Error::UnlockRejected("payload shorter than the mask"));
    }
    for (byte, m) in j.iter_mut().zip(p_k) {
        *byte ^= m;
    }
    let rot = RootOfTrust::decode(&j)?;
    Ok((j, rot))
}

/// The simulated sequencer: a seeded source of interval secrets.
#[derive(Debug)]
pub struct Sequencer {
    rng: rand_chacha::ChaCha8Rng,
    n_curr: Secret,
    n_next: Secret,
    k: usize,
}

impl Sequencer {
    pub fn new(seed: u64) -> Sequencer {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n_curr = rng.gen();
        let n_next = rng.gen();
        Sequencer { rng, n_curr, n_next, k: 0 }
    }

    /// `P_0`, handed to clients out of band before the chain starts.
    pub fn anchor(&self) -> [u8; 32] {
        sha256(&self.n_curr)
    }

    /// Emits the next interval carrying `j`, then rotates the secrets.
    pub fn broadcast(&mut self, j: &[u8]) -> PlsInterval {
        use rand::Rng;
        let interval = gen_interval(self.k, &self.n_curr, &self.n_next, j);
        self.n_curr = self.n_next;
        self.n_next = self.rng.gen();
        self.k += 1;
        interval
    }
}
