//! Server-side block building, a simulated content-addressable store, and
//! the client lookup / proof-of-absence flows.
//!
//! The server renumbers each block's contributors by the rank of their
//! permuted bitmap position, builds the truncated tree over record digests in
//! that order, and publishes the root-of-trust. Clients decide presence from
//! the authenticated bitmap alone — an absent counterparty costs zero store
//! traffic — and verify fetched paths against the tree root, reconstructing
//! the proof mask locally from `m`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::Error;
use crate::rootoftrust::{self, RootOfTrust};
use crate::shuffleshift::{self, PermParams};
use crate::smt::{self, AdjunctPath, Digest, Hash, MerkleTree};

/// One published block: the raw inputs plus everything the server derived.
#[derive(Debug)]
pub struct Block {
    pub number: u64,
    /// `(raw_id, record)` pairs in new-ID order.
    pub records: Vec<(u64, Vec<u8>)>,
    pub bitmap_raw: Vec<bool>,
    /// Absent for an empty block.
    pub tree: Option<MerkleTree>,
    pub rot: RootOfTrust,
    /// Content address of the serialized block in the store.
    pub digest: Hash,
}

/// Leaf digest of a record: the hash of its length-prefixed serialization.
pub fn record_digest(record: &[u8]) -> Hash {
    let mut framed = Vec::with_capacity(4 + record.len());
    framed.extend_from_slice(&(record.len() as u32).to_be_bytes());
    framed.extend_from_slice(record);
    match Digest::of_record(&framed) {
        Digest::Value(h) => h,
        Digest::Null => unreachable!(),
    }
}

fn serialize_block(number: u64, n: usize, records: &[(u64, Vec<u8>)]) -> Vec<u8> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&number.to_be_bytes());
    bytes.extend_from_slice(&(n as u16).to_be_bytes());
    bytes.extend_from_slice(&(records.len() as u16).to_be_bytes());
    for (raw_id, record) in records {
        bytes.extend_from_slice(&(*raw_id as u16).to_be_bytes());
        bytes.extend_from_slice(&(record.len() as u32).to_be_bytes());
        bytes.extend_from_slice(record);
    }
    bytes
}

fn parse_block(bytes: &[u8]) -> Result<(u64, usize, Vec<(u64, Vec<u8>)>), Error> {
    let bad = || Error::Transport("malformed block bytes".into());
    let take = |bytes: &[u8], at: &mut usize, len: usize| -> Result<Vec<u8>, Error> {
        let end = at.checked_add(len).filter(|&e| e <= bytes.len()).ok_or_else(bad)?;
        let out = bytes[*at..end].to_vec();
        *at = end;
        Ok(out)
    };
    let mut at = 0usize;
    let number = u64::from_be_bytes(take(bytes, &mut at, 8)?.try_into().unwrap());
    let n = u16::from_be_bytes(take(bytes, &mut at, 2)?.try_into().unwrap()) as usize;
    let m = u16::from_be_bytes(take(bytes, &mut at, 2)?.try_into().unwrap()) as usize;
    let mut records = Vec::with_capacity(m);
    for _ in 0..m {
        let raw_id = u16::from_be_bytes(take(bytes, &mut at, 2)?.try_into().unwrap());
        let len = u32::from_be_bytes(take(bytes, &mut at, 4)?.try_into().unwrap()) as usize;
        records.push((u64::from(raw_id), take(bytes, &mut at, len)?));
    }
    if at != bytes.len() {
        return Err(bad());
    }
    Ok((number, n, records))
}

/// In-memory content-addressable store with an optional directory mirror
/// (one file per blob, named by the hex digest). Untrusted by construction:
/// nothing it serves carries authentication.
#[derive(Debug, Default)]
pub struct CasStore {
    blobs: HashMap<Hash, Vec<u8>>,
    /// Per-block tree for path queries, block number → tree.
    index: HashMap<u64, MerkleTree>,
    served: AtomicU64,
    dir: Option<PathBuf>,
}

impl CasStore {
    pub fn new() -> CasStore {
        CasStore::default()
    }

    /// A store mirroring every blob into `dir`.
    pub fn with_directory(dir: &Path) -> Result<CasStore, Error> {
        std::fs::create_dir_all(dir)?;
        Ok(CasStore { dir: Some(dir.to_path_buf()), ..CasStore::default() })
    }

    /// Loads a directory written by [`CasStore::with_directory`], rebuilding
    /// the per-block path index from the stored bytes. Files that do not
    /// parse as blocks are kept as opaque blobs.
    pub fn open_directory(dir: &Path) -> Result<CasStore, Error> {
        let mut store = CasStore::with_directory(dir)?;
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|s| s.to_str()) else { continue };
            let Ok(raw) = hex::decode(name) else { continue };
            let Ok(digest) = Hash::try_from(raw.as_slice()) else { continue };
            let bytes = std::fs::read(&path)?;
            store.insert_blob(digest, bytes)?;
        }
        Ok(store)
    }

    fn insert_blob(&mut self, digest: Hash, bytes: Vec<u8>) -> Result<(), Error> {
        if let Ok((number, _, records)) = parse_block(&bytes) {
            if !records.is_empty() {
                let hashes: Vec<Hash> =
                    records.iter().map(|(_, r)| record_digest(r)).collect();
                self.index.insert(number, MerkleTree::build_truncated(&hashes)?);
            }
        }
        if let Some(dir) = &self.dir {
            std::fs::write(dir.join(hex::encode(digest)), &bytes)?;
        }
        self.blobs.insert(digest, bytes);
        Ok(())
    }

    /// Serves the leaf digest and adjunct list for a local index; the mask is
    /// not transmitted, the client reconstructs it from `m`. Each response
    /// bills 32·(1 + adjuncts) bytes to the served counter.
    pub fn get_path(&self, block_number: u64, local_index: usize) -> Result<(Hash, Vec<Hash>), Error> {
        let tree = self.index.get(&block_number).ok_or(Error::UnknownBlock(block_number))?;
        let (leaf, path) = tree.prove(local_index)?;
        let leaf = match leaf {
            Digest::Value(h) => h,
            Digest::Null => {
                return Err(Error::LocalIndexOutOfRange {
                    index: local_index,
                    m: tree.leaf_count(),
                })
            }
        };
        self.served
            .fetch_add(32 * (1 + path.adjuncts.len()) as u64, Ordering::Relaxed);
        Ok((leaf, path.adjuncts))
    }

    pub fn get_blob(&self, digest: &Hash) -> Option<&[u8]> {
        self.blobs.get(digest).map(Vec::as_slice)
    }

    /// Total bytes served to clients so far.
    pub fn served_bytes(&self) -> u64 {
        self.served.load(Ordering::Relaxed)
    }

    /// Malicious-store hook for demos and tests: substitutes the leaf at a
    /// local index so subsequent path responses fold to a wrong root.
    pub fn tamper_leaf(&mut self, block_number: u64, local_index: usize, fake: Hash) -> Result<(), Error> {
        let tree = self.index.get_mut(&block_number).ok_or(Error::UnknownBlock(block_number))?;
        let m = tree.leaf_count();
        let mut hashes: Vec<Hash> = (0..m)
            .filter_map(|i| tree.leaf(i).and_then(|d| d.as_hash().copied()))
            .collect();
        if local_index >= hashes.len() {
            return Err(Error::LocalIndexOutOfRange { index: local_index, m: hashes.len() });
        }
        hashes[local_index] = fake;
        *tree = MerkleTree::build_truncated(&hashes)?;
        Ok(())
    }
}

/// Builds and publishes one block: permutes the contributor bitmap with the
/// best extra-round count, renumbers contributors by permuted-position rank,
/// builds the truncated tree, assembles the root-of-trust, and stores the
/// serialized block under its digest.
pub fn build_block(
    number: u64,
    records: &[(u64, Vec<u8>)],
    n: usize,
    base_rounds: u32,
    cas: &mut CasStore,
) -> Result<Block, Error> {
    if !n.is_power_of_two() || n > rootoftrust::MAX_USERS {
        return Err(Error::AddressSpaceTooLarge(n));
    }
    let mut bitmap_raw = vec![false; n];
    for &(raw_id, _) in records {
        if raw_id >= n as u64 {
            return Err(Error::IdOutOfRange { id: raw_id, n: n as u64 });
        }
        if std::mem::replace(&mut bitmap_raw[raw_id as usize], true) {
            return Err(Error::DuplicateId(raw_id));
        }
    }

    let choice = rootoftrust::search_extra_rounds(&bitmap_raw, number, base_rounds)?;
    let params = PermParams::new(n.trailing_zeros(), number, base_rounds, choice.extra_rounds)?;

    // New ID = ones preceding the record's permuted position.
    let mut ranked: Vec<(usize, &(u64, Vec<u8>))> = records
        .iter()
        .map(|rec| {
            let pos = shuffleshift::permute(rec.0, &params)? as usize;
            debug_assert!(choice.permuted[pos]);
            Ok((choice.permuted[..pos].iter().filter(|&&b| b).count(), rec))
        })
        .collect::<Result<_, Error>>()?;
    ranked.sort_by_key(|&(new_id, _)| new_id);
    debug_assert!(ranked.iter().enumerate().all(|(i, &(id, _))| i == id));
    let records: Vec<(u64, Vec<u8>)> = ranked.into_iter().map(|(_, rec)| rec.clone()).collect();

    let (tree, tree_root) = if records.is_empty() {
        (None, [0u8; 32])
    } else {
        let hashes: Vec<Hash> = records.iter().map(|(_, r)| record_digest(r)).collect();
        let tree = MerkleTree::build_truncated(&hashes)?;
        let root = *tree.root().as_hash().expect("nonempty tree root");
        (Some(tree), root)
    };

    let rot = RootOfTrust {
        tree_root,
        n,
        m: records.len(),
        mode: choice.mode,
        wide_codewords: choice.wide_codewords,
        extra_rounds: choice.extra_rounds,
        payload: choice.payload,
    };
    rot.encode()?; // enforce the wire invariants before publication

    let bytes = serialize_block(number, n, &records);
    let digest = match Digest::of_record(&bytes) {
        Digest::Value(h) => h,
        Digest::Null => unreachable!(),
    };
    cas.insert_blob(digest, bytes)?;

    Ok(Block { number, records, bitmap_raw, tree, rot, digest })
}

/// Outcome of one client probe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LookupResult {
    Present {
        record_digest: Hash,
        path: AdjunctPath,
        verified: bool,
    },
    /// The permuted bitmap position that was 0; no store traffic occurred.
    Absent { position: usize },
}

/// Per-block client state: decoded bitmap, ones-rank prefix table and the
/// full permutation image, computed once so a follower probing many ids per
/// block pays the decode cost a single time.
#[derive(Debug)]
pub struct BlockView {
    block_number: u64,
    tree_root: Hash,
    m: usize,
    bitmap: Vec<bool>,
    /// `rank[pos]` = ones strictly before `pos`.
    rank: Vec<u32>,
    table: Vec<u32>,
}

impl BlockView {
    pub fn new(rot: &RootOfTrust, block_number: u64, base_rounds: u32) -> Result<BlockView, Error> {
        let n = rot.n;
        if !n.is_power_of_two() {
            return Err(Error::LeafCountNotPowerOfTwo(n));
        }
        let bitmap = rot.bitmap()?;
        let params = PermParams::new(n.trailing_zeros(), block_number, base_rounds, rot.extra_rounds)?;
        let table = shuffleshift::permutation_table(params.d, block_number, params.effective_rounds())?;
        let mut rank = Vec::with_capacity(n);
        let mut ones = 0u32;
        for &b in &bitmap {
            rank.push(ones);
            ones += u32::from(b);
        }
        Ok(BlockView { block_number, tree_root: rot.tree_root, m: rot.m, bitmap, rank, table })
    }

    /// Probes one id: absence straight off the bitmap, presence via a store
    /// fetch verified against the tree root with a locally rebuilt mask.
    pub fn lookup(&self, raw_id: u64, cas: &CasStore) -> Result<LookupResult, Error> {
        let n = self.bitmap.len();
        if raw_id >= n as u64 {
            return Err(Error::IdOutOfRange { id: raw_id, n: n as u64 });
        }
        let position = self.table[raw_id as usize] as usize;
        if !self.bitmap[position] {
            return Ok(LookupResult::Absent { position });
        }

        let local_index = self.rank[position] as usize;
        let (leaf, adjuncts) = cas.get_path(self.block_number, local_index)?;
        let mask = smt::shape_mask(self.m, local_index)?;
        let path = AdjunctPath { leaf_index: local_index, mask, adjuncts };
        let verified = smt::verify(
            &Digest::Value(self.tree_root),
            local_index,
            &Digest::Value(leaf),
            &path,
            smt::truncated_height(self.m),
        );
        Ok(LookupResult::Present { record_digest: leaf, path, verified })
    }
}

/// Client-side lookup against an authenticated root-of-trust. Absence is
/// decided from the bitmap alone; presence fetches the path from the store
/// and verifies it against `rot.tree_root` with a locally rebuilt mask.
pub fn client_lookup(
    rot: &RootOfTrust,
    block_number: u64,
    raw_id: u64,
    base_rounds: u32,
    cas: &CasStore,
) -> Result<LookupResult, Error> {
    if raw_id >= rot.n as u64 {
        return Err(Error::IdOutOfRange { id: raw_id, n: rot.n as u64 });
    }
    BlockView::new(rot, block_number, base_rounds)?.lookup(raw_id, cas)
}

/// Client-side traffic of a completed lookup: zero for absence, 32 bytes per
/// received hash (leaf plus adjuncts) for presence.
pub fn comm_cost(result: &LookupResult) -> usize {
    match result {
        LookupResult::Absent { .. } => 0,
        LookupResult::Present { path, .. } => 32 * (1 + path.adjuncts.len()),
    }
}
