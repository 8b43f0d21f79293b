use thiserror::Error;

/// Errors across the tree, codec and block-building layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("leaf count {0} is not a power of two")]
    LeafCountNotPowerOfTwo(usize),
    #[error("a truncated tree needs at least one record; use the empty root-of-trust mode")]
    EmptyTree,
    #[error("leaf index {index} out of range for {leaves} leaves")]
    LeafIndexOutOfRange { index: usize, leaves: usize },
    #[error("probability {0} outside the open interval (0,1)")]
    ProbabilityOutOfRange(f64),
    #[error("unsupported codeword width {0}; only 4 and 8 are defined")]
    UnsupportedCodewordWidth(u8),
    #[error("codeword stream decodes to {got} bits, fewer than the {want} required")]
    MalformedCodewordStream { got: usize, want: usize },
    #[error("domain log-size {0} outside the supported range 1..=16")]
    DomainSizeOutOfRange(u32),
    #[error("id {id} out of range for domain size {n}")]
    IdOutOfRange { id: u64, n: u64 },
    #[error("root-of-trust rejected: {0}")]
    RotRejected(&'static str),
    #[error("bitmap payload of {0} bits exceeds the 1024-bit field limit")]
    PayloadTooLong(usize),
    #[error("user count {m} exceeds address space {n}")]
    TooManyUsers { m: usize, n: usize },
    #[error("address space {0} exceeds the 4096-user ceiling")]
    AddressSpaceTooLarge(usize),
    #[error("duplicate user id {0} in block input")]
    DuplicateId(u64),
    #[error("unknown block {0}")]
    UnknownBlock(u64),
    #[error("local index {index} out of range for block with {m} records")]
    LocalIndexOutOfRange { index: usize, m: usize },
    #[error("store transport failure: {0}")]
    Transport(String),
    #[error("S-message rejected: {0}")]
    UnlockRejected(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
}
