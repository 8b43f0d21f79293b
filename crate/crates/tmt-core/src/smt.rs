//! NULL-aware binary Merkle trees.
//!
//! Two tree shapes are built on the same hashing rules: a sparse tree indexed
//! by raw user ID, where unoccupied leaves carry the `NULL` label, and a dense
//! truncated tree indexed by local ID, where the first `m` leaves are occupied
//! contiguously and the rest are `NULL`. `NULL` propagates upward: the parent
//! of two `NULL` children is `NULL`. A parent with exactly one `NULL` child is
//! hashed by substituting the bit-complement of the live child, which makes
//! the construction resistant to sibling-swap and subtree-rotation second
//! preimages.

use sha2::{Digest as _, Sha256};

use crate::error::Error;

/// Hash output width in bytes. Tests rely on this constant directly.
pub const DIGEST_BYTES: usize = 32;

/// Raw hash value.
pub type Hash = [u8; DIGEST_BYTES];

/// A node or leaf label: either a real hash or the distinguished NULL label.
///
/// NULL is a representation-level tag. It is never serialized; presence masks
/// carry it on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Digest {
    Null,
    Value(Hash),
}

impl Digest {
    pub fn is_null(&self) -> bool {
        matches!(self, Digest::Null)
    }

    /// Digest of an opaque record byte string, used as a leaf label.
    pub fn of_record(bytes: &[u8]) -> Digest {
        let mut h = Sha256::new();
        h.update(bytes);
        Digest::Value(h.finalize().into())
    }

    pub fn as_hash(&self) -> Option<&Hash> {
        match self {
            Digest::Null => None,
            Digest::Value(h) => Some(h),
        }
    }
}

/// Bit-complement of a hash value. An involution: `flip(flip(x)) == x`.
pub fn flip(x: &Hash) -> Hash {
    let mut out = *x;
    for b in &mut out {
        *b = !*b;
    }
    out
}

fn hash_pair(left: &Hash, right: &Hash) -> Hash {
    let mut h = Sha256::new();
    h.update(left);
    h.update(right);
    h.finalize().into()
}

/// Parent label of two child labels.
///
/// Both NULL yields NULL. A single NULL child is replaced by the complement of
/// the live child before hashing, so the result depends on which side the
/// live child sits on.
pub fn combine(left: &Digest, right: &Digest) -> Digest {
    match (left, right) {
        (Digest::Null, Digest::Null) => Digest::Null,
        (Digest::Value(x), Digest::Null) => Digest::Value(hash_pair(x, &flip(x))),
        (Digest::Null, Digest::Value(x)) => Digest::Value(hash_pair(&flip(x), x)),
        (Digest::Value(x), Digest::Value(y)) => Digest::Value(hash_pair(x, y)),
    }
}

/// An immutable NULL-aware Merkle tree.
///
/// `levels[0]` holds the `2^height` leaves; `levels[height]` holds the root.
#[derive(Debug, Clone)]
pub struct MerkleTree {
    height: u32,
    levels: Vec<Vec<Digest>>,
}

/// A leaf proof: the presence mask plus the non-NULL adjunct labels.
///
/// Mask bit `k` is set iff the level-`k` sibling of the path node is non-NULL;
/// `adjuncts` lists exactly those siblings in leaf-to-root order, so
/// `adjuncts.len() == mask.count_ones()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjunctPath {
    pub leaf_index: usize,
    pub mask: u32,
    pub adjuncts: Vec<Hash>,
}

impl MerkleTree {
    fn from_leaves(leaves: Vec<Digest>) -> MerkleTree {
        debug_assert!(leaves.len().is_power_of_two());
        let height = leaves.len().trailing_zeros();
        let mut levels = vec![leaves];
        for k in 0..height as usize {
            let below = &levels[k];
            let above: Vec<Digest> = below
                .chunks(2)
                .map(|pair| combine(&pair[0], &pair[1]))
                .collect();
            levels.push(above);
        }
        MerkleTree { height, levels }
    }

    /// Sparse tree over a full slot array; `None` slots become NULL leaves.
    /// The slot count must be a power of two.
    pub fn build_sparse(leaves: &[Option<Hash>]) -> Result<MerkleTree, Error> {
        if !leaves.len().is_power_of_two() {
            return Err(Error::LeafCountNotPowerOfTwo(leaves.len()));
        }
        let leaves = leaves
            .iter()
            .map(|slot| match slot {
                Some(h) => Digest::Value(*h),
                None => Digest::Null,
            })
            .collect();
        Ok(MerkleTree::from_leaves(leaves))
    }

    /// Dense truncated tree: height `ceil(log2 m)`, leaves `0..m` occupied
    /// contiguously, trailing leaves NULL. The shape is a pure function of
    /// `m`; see [`shape_mask`].
    ///
    /// For `m == 1` the root is the single leaf label itself (no hashing).
    pub fn build_truncated(record_hashes: &[Hash]) -> Result<MerkleTree, Error> {
        let m = record_hashes.len();
        if m == 0 {
            return Err(Error::EmptyTree);
        }
        let slots = m.next_power_of_two();
        let mut leaves = vec![Digest::Null; slots];
        for (leaf, h) in leaves.iter_mut().zip(record_hashes) {
            *leaf = Digest::Value(*h);
        }
        Ok(MerkleTree::from_leaves(leaves))
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn leaf_count(&self) -> usize {
        self.levels[0].len()
    }

    pub fn leaf(&self, index: usize) -> Option<&Digest> {
        self.levels[0].get(index)
    }

    pub fn root(&self) -> Digest {
        self.levels[self.height as usize][0]
    }

    /// Proof for any leaf, occupied or NULL (the latter is the absence proof
    /// on the baseline sparse tree).
    pub fn prove(&self, leaf_index: usize) -> Result<(Digest, AdjunctPath), Error> {
        if leaf_index >= self.leaf_count() {
            return Err(Error::LeafIndexOutOfRange {
                index: leaf_index,
                leaves: self.leaf_count(),
            });
        }
        let mut mask = 0u32;
        let mut adjuncts = Vec::new();
        for k in 0..self.height as usize {
            let pos = leaf_index >> k;
            let sibling = &self.levels[k][pos ^ 1];
            if let Digest::Value(h) = sibling {
                mask |= 1 << k;
                adjuncts.push(*h);
            }
        }
        Ok((
            self.levels[0][leaf_index],
            AdjunctPath {
                leaf_index,
                mask,
                adjuncts,
            },
        ))
    }
}

/// Folds a leaf up to the root and compares. Hostile inputs are expected:
/// malformed proofs return `false`, never panic.
///
/// Leaf index bits are consumed least-significant-first; where a mask bit is
/// clear the NULL combining rule applies instead of consuming an adjunct.
pub fn verify(root: &Digest, leaf_index: usize, leaf: &Digest, path: &AdjunctPath, height: u32) -> bool {
    if height >= usize::BITS || leaf_index >= (1usize << height) || path.leaf_index != leaf_index {
        return false;
    }
    if height < 32 && path.mask >> height != 0 {
        return false;
    }
    if path.adjuncts.len() != path.mask.count_ones() as usize {
        return false;
    }
    let mut current = *leaf;
    let mut next_adjunct = path.adjuncts.iter();
    for k in 0..height {
        let sibling = if path.mask >> k & 1 == 1 {
            match next_adjunct.next() {
                Some(h) => Digest::Value(*h),
                None => return false,
            }
        } else {
            Digest::Null
        };
        current = if leaf_index >> k & 1 == 0 {
            combine(&current, &sibling)
        } else {
            combine(&sibling, &current)
        };
    }
    current == *root
}

/// Reconstructs a truncated tree's proof mask from `m` alone, so the store
/// need not transmit it. Equals `prove(i).mask` for every index of
/// `build_truncated` with `m` leaves.
pub fn shape_mask(m: usize, leaf_index: usize) -> Result<u32, Error> {
    if m == 0 {
        return Err(Error::EmptyTree);
    }
    let slots = m.next_power_of_two();
    if leaf_index >= slots {
        return Err(Error::LeafIndexOutOfRange {
            index: leaf_index,
            leaves: slots,
        });
    }
    let height = slots.trailing_zeros();
    let mut mask = 0u32;
    for k in 0..height {
        // The level-k sibling subtree spans 2^k contiguous leaves; it is
        // non-NULL iff its first leaf falls below m.
        let sibling_start = ((leaf_index >> k) ^ 1) << k;
        if sibling_start < m {
            mask |= 1 << k;
        }
    }
    Ok(mask)
}

/// Height of the truncated tree carrying `m` records: `ceil(log2 m)`.
pub fn truncated_height(m: usize) -> u32 {
    m.next_power_of_two().trailing_zeros()
}
