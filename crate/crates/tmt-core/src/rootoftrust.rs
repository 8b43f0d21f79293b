//! Bit-exact codec for the per-block root-of-trust message, plus the
//! server-side policy picking the bitmap encoding and the permutation's
//! extra-round count.
//!
//! Wire layout (bit offsets, MSB-first within each byte):
//! tree root at 0 (256 bits), n−1 and m at 256 (12 bits each), flags at 280,
//! the L-bit bitmap payload at 288, and 32 zero redundancy bits at L+288;
//! the whole message is zero-padded to a byte boundary. The redundancy field
//! is what lets a receiver discard a random or garbled message outright.

use crate::bits::{BitReader, BitWriter};
use crate::error::Error;
use crate::shuffleshift;
use crate::tunstall::{self, TunstallCodebook};

/// Address-space ceiling: n−1 must fit in 12 bits.
pub const MAX_USERS: usize = 4096;
/// Bitmap payload budget in bits.
pub const MAX_PAYLOAD_BITS: usize = 1024;
/// Zero bits trailing the payload.
pub const REDUNDANCY_BITS: usize = 32;
/// Fixed field widths before the payload.
pub const HEADER_BITS: usize = 256 + 12 + 12 + 8;

/// Encoding of the occupancy bitmap, flag bits 0–1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitmapMode {
    Plain = 0,
    Compressed = 1,
    List = 2,
    Empty = 3,
}

impl BitmapMode {
    fn from_bits(bits: u8) -> BitmapMode {
        match bits & 3 {
            0 => BitmapMode::Plain,
            1 => BitmapMode::Compressed,
            2 => BitmapMode::List,
            _ => BitmapMode::Empty,
        }
    }
}

/// Bits needed to index a position in `[0, n)`.
fn index_bits(n: usize) -> u32 {
    (n as u64).next_power_of_two().trailing_zeros()
}

/// The block's broadcast trust anchor.
///
/// `payload` holds the bitmap field exactly as it appears on the wire:
/// the raw bitmap (plain), sorted fixed-width positions (list), packed
/// codewords (compressed), or nothing (empty).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootOfTrust {
    pub tree_root: [u8; 32],
    pub n: usize,
    pub m: usize,
    pub mode: BitmapMode,
    /// Codeword width flag: false → w=4, true → w=8.
    pub wide_codewords: bool,
    /// Extra permutation rounds, 0 = permutation disabled.
    pub extra_rounds: u8,
    pub payload: Vec<bool>,
}

impl RootOfTrust {
    /// Assembles the message for a permuted bitmap, picking the shortest
    /// payload encoding.
    pub fn from_bitmap(
        tree_root: [u8; 32],
        bitmap: &[bool],
        extra_rounds: u8,
    ) -> Result<RootOfTrust, Error> {
        let choice = choose_mode(bitmap)?;
        Ok(RootOfTrust {
            tree_root,
            n: bitmap.len(),
            m: bitmap.iter().filter(|&&b| b).count(),
            mode: choice.mode,
            wide_codewords: choice.wide_codewords,
            extra_rounds,
            payload: choice.payload,
        })
    }

    pub fn flags(&self) -> u8 {
        self.mode as u8 | u8::from(self.wide_codewords) << 2 | self.extra_rounds << 3
    }

    pub fn codeword_width(&self) -> u8 {
        if self.wide_codewords {
            8
        } else {
            4
        }
    }

    /// Payload length L in bits.
    pub fn payload_bits(&self) -> usize {
        self.payload.len()
    }

    /// Reconstructs the logical n-bit occupancy bitmap from the payload.
    pub fn bitmap(&self) -> Result<Vec<bool>, Error> {
        match self.mode {
            BitmapMode::Empty => {
                if self.m != 0 || !self.payload.is_empty() {
                    return Err(Error::RotRejected("empty mode with occupants"));
                }
                Ok(vec![false; self.n])
            }
            BitmapMode::Plain => {
                if self.payload.len() != self.n {
                    return Err(Error::RotRejected("plain payload length is not n"));
                }
                Ok(self.payload.clone())
            }
            BitmapMode::List => {
                let width = index_bits(self.n);
                if self.payload.len() != self.m * width as usize {
                    return Err(Error::RotRejected("list payload length mismatch"));
                }
                let mut reader_pos = 0usize;
                let mut bitmap = vec![false; self.n];
                let mut prev: Option<usize> = None;
                for _ in 0..self.m {
                    let mut pos = 0usize;
                    for _ in 0..width {
                        pos = pos << 1 | usize::from(self.payload[reader_pos]);
                        reader_pos += 1;
                    }
                    if pos >= self.n {
                        return Err(Error::RotRejected("list position out of range"));
                    }
                    if prev.is_some_and(|p| p >= pos) {
                        return Err(Error::RotRejected("list positions not ascending"));
                    }
                    prev = Some(pos);
                    bitmap[pos] = true;
                }
                Ok(bitmap)
            }
            BitmapMode::Compressed => {
                if self.m == 0 || self.m >= self.n {
                    return Err(Error::RotRejected("compressed mode needs 0 < m < n"));
                }
                let w = self.codeword_width();
                if self.payload.len() % w as usize != 0 {
                    return Err(Error::RotRejected("compressed payload not codeword-aligned"));
                }
                let codebook = TunstallCodebook::build(self.m as f64 / self.n as f64, w)?;
                let codewords: Vec<u8> = self
                    .payload
                    .chunks(w as usize)
                    .map(|c| c.iter().fold(0u8, |acc, &b| acc << 1 | u8::from(b)))
                    .collect();
                let bitmap = tunstall::decode(&codewords, self.n, &codebook)?;
                if bitmap.iter().filter(|&&b| b).count() != self.m {
                    return Err(Error::RotRejected("decoded popcount differs from m"));
                }
                Ok(bitmap)
            }
        }
    }

    fn check(&self) -> Result<(), Error> {
        if self.n == 0 || self.n > MAX_USERS {
            return Err(Error::AddressSpaceTooLarge(self.n));
        }
        if self.m > self.n {
            return Err(Error::TooManyUsers { m: self.m, n: self.n });
        }
        if self.extra_rounds >= 32 {
            return Err(Error::RotRejected("extra rounds exceed the 5-bit field"));
        }
        if self.payload.len() > MAX_PAYLOAD_BITS {
            return Err(Error::PayloadTooLong(self.payload.len()));
        }
        if (self.mode == BitmapMode::Empty) != (self.m == 0) {
            return Err(Error::RotRejected("empty mode iff m = 0"));
        }
        // The payload must actually describe m occupants of an n-bit map.
        let bitmap = self.bitmap()?;
        if bitmap.iter().filter(|&&b| b).count() != self.m {
            return Err(Error::RotRejected("payload popcount differs from m"));
        }
        Ok(())
    }

    /// Serializes to the wire layout; total length is L + 320 bits before
    /// the byte pad.
    pub fn encode(&self) -> Result<Vec<u8>, Error> {
        self.check()?;
        let mut w = BitWriter::new();
        w.push_bytes(&self.tree_root);
        w.push_bits(self.n as u64 - 1, 12);
        w.push_bits(self.m as u64, 12);
        w.push_bits(u64::from(self.flags()), 8);
        w.push_bools(&self.payload);
        w.push_bits(0, REDUNDANCY_BITS as u32);
        debug_assert_eq!(w.bit_len(), self.payload.len() + HEADER_BITS + REDUNDANCY_BITS);
        Ok(w.finish())
    }

    /// Parses and validates a possibly hostile byte string. Trailing zero
    /// bytes beyond the byte pad are tolerated (cipher-block padding);
    /// anything else is rejected.
    pub fn decode(bytes: &[u8]) -> Result<RootOfTrust, Error> {
        let mut r = BitReader::new(bytes);
        let tree_root: [u8; 32] = r
            .read_bytes(32)
            .ok_or(Error::RotRejected("message shorter than the header"))?
            .try_into()
            .unwrap();
        let short = Error::RotRejected("message shorter than the header");
        let n = r.read_bits(12).ok_or(short)? as usize + 1;
        let m = r.read_bits(12).ok_or(Error::RotRejected("message shorter than the header"))? as usize;
        let flags = r.read_bits(8).ok_or(Error::RotRejected("message shorter than the header"))? as u8;
        if m > n {
            return Err(Error::RotRejected("m exceeds n"));
        }
        let mode = BitmapMode::from_bits(flags);
        let wide_codewords = flags >> 2 & 1 == 1;
        let extra_rounds = flags >> 3;

        let truncated = Error::RotRejected("payload truncated");
        let payload = match mode {
            BitmapMode::Empty => Vec::new(),
            BitmapMode::Plain => r.read_bools(n).ok_or(truncated)?,
            BitmapMode::List => r
                .read_bools(m * index_bits(n) as usize)
                .ok_or(Error::RotRejected("payload truncated"))?,
            BitmapMode::Compressed => {
                if m == 0 || m >= n {
                    return Err(Error::RotRejected("compressed mode needs 0 < m < n"));
                }
                let w = if wide_codewords { 8u8 } else { 4 };
                let codebook = TunstallCodebook::build(m as f64 / n as f64, w)?;
                // Greedy: the encoder emits a codeword only while short of n
                // source bits, so reading until >= n bits lands exactly on
                // the honest codeword count.
                let mut payload = Vec::new();
                let mut decoded = 0usize;
                while decoded < n {
                    if payload.len() + w as usize > MAX_PAYLOAD_BITS {
                        return Err(Error::RotRejected("compressed payload exceeds the budget"));
                    }
                    let cw = r
                        .read_bits(u32::from(w))
                        .ok_or(Error::RotRejected("payload truncated"))?;
                    for s in (0..w).rev() {
                        payload.push(cw >> s & 1 == 1);
                    }
                    decoded += codebook
                        .chunk(cw as usize)
                        .ok_or(Error::RotRejected("unknown codeword"))?
                        .len();
                }
                payload
            }
        };
        if payload.len() > MAX_PAYLOAD_BITS {
            return Err(Error::PayloadTooLong(payload.len()));
        }
        let redundancy = r
            .read_bits(REDUNDANCY_BITS as u32)
            .ok_or(Error::RotRejected("missing redundancy field"))?;
        if redundancy != 0 {
            return Err(Error::RotRejected("nonzero redundancy"));
        }
        // Byte pad and any cipher padding must be zero.
        while let Some(bit) = r.read_bit() {
            if bit {
                return Err(Error::RotRejected("nonzero trailing padding"));
            }
        }

        let rot = RootOfTrust { tree_root, n, m, mode, wide_codewords, extra_rounds, payload };
        rot.check()?;
        Ok(rot)
    }
}

/// A payload encoding picked by the server.
#[derive(Debug, Clone)]
pub struct ModeChoice {
    pub mode: BitmapMode,
    pub wide_codewords: bool,
    pub payload: Vec<bool>,
}

fn list_payload(bitmap: &[bool], width: u32) -> Vec<bool> {
    let mut payload = Vec::new();
    for (pos, _) in bitmap.iter().enumerate().filter(|&(_, &b)| b) {
        for s in (0..width).rev() {
            payload.push(pos as u64 >> s & 1 == 1);
        }
    }
    payload
}

fn compressed_payload(bitmap: &[bool], m: usize, w: u8) -> Result<Vec<bool>, Error> {
    let codebook = TunstallCodebook::build(m as f64 / bitmap.len() as f64, w)?;
    let (codewords, _) = tunstall::encode(bitmap, &codebook);
    let mut payload = Vec::with_capacity(codewords.len() * w as usize);
    for cw in codewords {
        for s in (0..w).rev() {
            payload.push(cw >> s & 1 == 1);
        }
    }
    Ok(payload)
}

/// Picks the shortest payload among plain, list, and compressed (w = 4, 8).
/// Ties prefer the simpler encoding in that order.
pub fn choose_mode(bitmap: &[bool]) -> Result<ModeChoice, Error> {
    let n = bitmap.len();
    if n == 0 || n > MAX_USERS {
        return Err(Error::AddressSpaceTooLarge(n));
    }
    let m = bitmap.iter().filter(|&&b| b).count();
    if m == 0 {
        return Ok(ModeChoice { mode: BitmapMode::Empty, wide_codewords: false, payload: Vec::new() });
    }
    let mut best = ModeChoice {
        mode: BitmapMode::Plain,
        wide_codewords: false,
        payload: bitmap.to_vec(),
    };
    let list = list_payload(bitmap, index_bits(n));
    if list.len() < best.payload.len() {
        best = ModeChoice { mode: BitmapMode::List, wide_codewords: false, payload: list };
    }
    if m < n {
        for w in [4u8, 8] {
            let payload = compressed_payload(bitmap, m, w)?;
            if payload.len() < best.payload.len() {
                best = ModeChoice {
                    mode: BitmapMode::Compressed,
                    wide_codewords: w == 8,
                    payload,
                };
            }
        }
    }
    Ok(best)
}

/// The server's pick of permutation and payload encoding for one block.
#[derive(Debug, Clone)]
pub struct PermutationChoice {
    pub extra_rounds: u8,
    pub mode: BitmapMode,
    pub wide_codewords: bool,
    pub payload: Vec<bool>,
    /// The bitmap after the chosen permutation.
    pub permuted: Vec<bool>,
}

/// Tries the disabled permutation and all 31 extra-round values, compressing
/// each permuted bitmap, and keeps the shortest payload (ties go to the
/// smallest extra-round count). Permutation tables are grown one round at a
/// time, so the sweep costs ~31 rounds rather than ~31·(base+extra).
pub fn search_extra_rounds(
    raw_bitmap: &[bool],
    block_number: u64,
    base_rounds: u32,
) -> Result<PermutationChoice, Error> {
    let n = raw_bitmap.len();
    if !n.is_power_of_two() {
        return Err(Error::LeafCountNotPowerOfTwo(n));
    }
    let d = n.trailing_zeros();
    let m = raw_bitmap.iter().filter(|&&b| b).count();
    if m == 0 {
        return Ok(PermutationChoice {
            extra_rounds: 0,
            mode: BitmapMode::Empty,
            wide_codewords: false,
            payload: Vec::new(),
            permuted: raw_bitmap.to_vec(),
        });
    }

    let raw_choice = choose_mode(raw_bitmap)?;
    let mut best = PermutationChoice {
        extra_rounds: 0,
        mode: raw_choice.mode,
        wide_codewords: raw_choice.wide_codewords,
        payload: raw_choice.payload,
        permuted: raw_bitmap.to_vec(),
    };

    let set_ids: Vec<usize> = (0..n).filter(|&i| raw_bitmap[i]).collect();
    let mut table: Vec<u32> = (0..n as u32).collect();
    let mut v = block_number & (n as u64 - 1);
    for _ in 0..base_rounds {
        for x in table.iter_mut() {
            *x = shuffleshift::sigma(shuffleshift::tau(u64::from(*x), v, n as u64), d)? as u32;
        }
        v = shuffleshift::lcg_next(v, n as u64);
    }
    for extra in 1..=31u8 {
        for x in table.iter_mut() {
            *x = shuffleshift::sigma(shuffleshift::tau(u64::from(*x), v, n as u64), d)? as u32;
        }
        v = shuffleshift::lcg_next(v, n as u64);
        let mut permuted = vec![false; n];
        for &id in &set_ids {
            permuted[table[id] as usize] = true;
        }
        let choice = choose_mode(&permuted)?;
        if choice.payload.len() < best.payload.len() {
            best = PermutationChoice {
                extra_rounds: extra,
                mode: choice.mode,
                wide_codewords: choice.wide_codewords,
                payload: choice.payload,
                permuted,
            };
        }
    }
    Ok(best)
}
