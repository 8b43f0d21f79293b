//! MSB-first bit packing for sub-byte wire fields.

/// Appends bits most-significant-first within each byte.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bit_len: usize,
}

impl BitWriter {
    pub fn new() -> BitWriter {
        BitWriter::default()
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub fn push_bit(&mut self, bit: bool) {
        if self.bit_len % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            let byte = self.bytes.last_mut().unwrap();
            *byte |= 1 << (7 - self.bit_len % 8);
        }
        self.bit_len += 1;
    }

    /// Writes the low `width` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, width: u32) {
        for shift in (0..width).rev() {
            self.push_bit(value >> shift & 1 == 1);
        }
    }

    pub fn push_bools(&mut self, bits: &[bool]) {
        for &b in bits {
            self.push_bit(b);
        }
    }

    pub fn push_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.push_bits(u64::from(b), 8);
        }
    }

    /// Zero-pads to a whole byte and returns the buffer.
    pub fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

/// Reads bits most-significant-first within each byte.
#[derive(Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> BitReader<'a> {
        BitReader { bytes, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() * 8 - self.pos
    }

    pub fn read_bit(&mut self) -> Option<bool> {
        if self.pos >= self.bytes.len() * 8 {
            return None;
        }
        let bit = self.bytes[self.pos / 8] >> (7 - self.pos % 8) & 1 == 1;
        self.pos += 1;
        Some(bit)
    }

    pub fn read_bits(&mut self, width: u32) -> Option<u64> {
        if width as usize > self.remaining() {
            return None;
        }
        let mut value = 0u64;
        for _ in 0..width {
            value = value << 1 | u64::from(self.read_bit()?);
        }
        Some(value)
    }

    pub fn read_bools(&mut self, count: usize) -> Option<Vec<bool>> {
        if count > self.remaining() {
            return None;
        }
        (0..count).map(|_| self.read_bit()).collect()
    }

    pub fn read_bytes(&mut self, count: usize) -> Option<Vec<u8>> {
        (0..count)
            .map(|_| self.read_bits(8).map(|b| b as u8))
            .collect()
    }
}
