//! Variable-to-fixed Tunstall coding of occupancy bitmaps.
//!
//! The dictionary is a complete binary tree grown greedily: the
//! maximum-likelihood leaf is split until `2^w` leaves exist, then leaves are
//! numbered in prefix (root, 0-child, 1-child) order. Encoder and decoder
//! each rebuild the dictionary from the shared `(p, w)` pair, so no table
//! travels on the wire.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;

const SUPPORTED_WIDTHS: [u8; 2] = [4, 8];

/// Zero-order per-bit entropy `H0 = -p log2 p - (1-p) log2 (1-p)`.
pub fn entropy(p: f64) -> Result<f64, Error> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    Ok(-p * p.log2() - (1.0 - p) * (1.0 - p).log2())
}

#[derive(Debug, Clone, Copy)]
struct Node {
    /// Number of 1-edges and total edges on the root path. The chunk's
    /// log-likelihood is a pure function of these two counts, so leaves with
    /// equal counts tie exactly, bit for bit.
    ones: u32,
    len: u32,
    children: Option<[usize; 2]>, // [0-child, 1-child]
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    log2_lh: f64,
    seq: u64,
    node: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max-heap: highest likelihood first; exact ties go to the leaf
        // created earliest (0-children are created before 1-children).
        self.log2_lh
            .total_cmp(&other.log2_lh)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Shared Tunstall dictionary for a given `(p, w)`.
#[derive(Debug, Clone)]
pub struct TunstallCodebook {
    w: u8,
    p: f64,
    nodes: Vec<Node>,
    root: usize,
    /// Leaf node index per codeword, in prefix numbering order.
    leaf_of_codeword: Vec<usize>,
    /// Codeword per node index (leaves only; internal nodes hold 0).
    codeword_of_node: Vec<u8>,
    /// Chunk bit-string per codeword.
    decode_table: Vec<Vec<bool>>,
}

/// One codebook row, as dumped by the CLI.
#[derive(Debug, Clone)]
pub struct CodebookEntry {
    pub codeword: u16,
    pub neg_log2_likelihood: f64,
    pub chunk: Vec<bool>,
}

impl TunstallCodebook {
    /// Greedy dictionary construction from `(p, w)`.
    pub fn build(p: f64, w: u8) -> Result<TunstallCodebook, Error> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::ProbabilityOutOfRange(p));
        }
        if !SUPPORTED_WIDTHS.contains(&w) {
            return Err(Error::UnsupportedCodewordWidth(w));
        }
        let target_leaves = 1usize << w;
        let log2_p = p.log2();
        let log2_q = (1.0 - p).log2();
        // Canonical log-likelihood: always the same expression of (ones, len),
        // so equal-count chunks compare exactly equal.
        let log2_lh = |ones: u32, len: u32| {
            f64::from(ones) * log2_p + f64::from(len - ones) * log2_q
        };

        let mut nodes = vec![Node { ones: 0, len: 0, children: None }];
        let root = 0usize;
        let mut heap = std::collections::BinaryHeap::new();
        let mut seq = 0u64;
        let split = |nodes: &mut Vec<Node>,
                         heap: &mut std::collections::BinaryHeap<Candidate>,
                         seq: &mut u64,
                         parent: usize| {
            let Node { ones, len, .. } = nodes[parent];
            let mut child = |one: bool, nodes: &mut Vec<Node>, seq: &mut u64| {
                let idx = nodes.len();
                let ones = ones + u32::from(one);
                nodes.push(Node { ones, len: len + 1, children: None });
                heap.push(Candidate { log2_lh: log2_lh(ones, len + 1), seq: *seq, node: idx });
                *seq += 1;
                idx
            };
            let zero_child = child(false, nodes, seq);
            let one_child = child(true, nodes, seq);
            nodes[parent].children = Some([zero_child, one_child]);
        };

        split(&mut nodes, &mut heap, &mut seq, root);
        let mut leaves = 2usize;
        while leaves < target_leaves {
            let best = heap.pop().expect("heap tracks every live leaf");
            split(&mut nodes, &mut heap, &mut seq, best.node);
            leaves += 1;
        }

        // Prefix-order numbering: visit node, then 0-child, then 1-child.
        let mut leaf_of_codeword = Vec::with_capacity(target_leaves);
        let mut decode_table = Vec::with_capacity(target_leaves);
        let mut stack = vec![(root, Vec::new())];
        while let Some((idx, chunk)) = stack.pop() {
            match nodes[idx].children {
                None => {
                    leaf_of_codeword.push(idx);
                    decode_table.push(chunk);
                }
                Some([zero, one]) => {
                    let mut one_chunk = chunk.clone();
                    one_chunk.push(true);
                    let mut zero_chunk = chunk;
                    zero_chunk.push(false);
                    // Pushed in reverse so the 0-child pops first.
                    stack.push((one, one_chunk));
                    stack.push((zero, zero_chunk));
                }
            }
        }
        debug_assert_eq!(leaf_of_codeword.len(), target_leaves);
        let mut codeword_of_node = vec![0u8; nodes.len()];
        for (cw, &leaf) in leaf_of_codeword.iter().enumerate() {
            codeword_of_node[leaf] = cw as u8;
        }

        Ok(TunstallCodebook { w, p, nodes, root, leaf_of_codeword, codeword_of_node, decode_table })
    }

    pub fn codeword_width(&self) -> u8 {
        self.w
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Chunk bits assigned to a codeword.
    pub fn chunk(&self, codeword: usize) -> Option<&[bool]> {
        self.decode_table.get(codeword).map(Vec::as_slice)
    }

    /// All rows in codeword order, with `-log2` chunk likelihoods.
    pub fn entries(&self) -> Vec<CodebookEntry> {
        self.leaf_of_codeword
            .iter()
            .enumerate()
            .map(|(cw, &idx)| {
                let node = self.nodes[idx];
                let lh = f64::from(node.ones) * self.p.log2()
                    + f64::from(node.len - node.ones) * (1.0 - self.p).log2();
                CodebookEntry {
                    codeword: cw as u16,
                    neg_log2_likelihood: -lh,
                    chunk: self.decode_table[cw].clone(),
                }
            })
            .collect()
    }
}

/// Encodes a bit-string by walking it down the dictionary tree, emitting a
/// codeword at each leaf. A source that ends mid-tree is padded with 0-bits
/// until a leaf is reached; the pad length is returned but never transmitted
/// (the decoder truncates to the bit count carried by the root-of-trust).
pub fn encode(bits: &[bool], codebook: &TunstallCodebook) -> (Vec<u8>, usize) {
    let mut codewords = Vec::new();
    let mut pad_bits = 0usize;
    let mut pos = 0usize;
    while pos < bits.len() {
        let mut node = codebook.root;
        loop {
            match codebook.nodes[node].children {
                None => break,
                Some(children) => {
                    let bit = if pos < bits.len() {
                        bits[pos]
                    } else {
                        pad_bits += 1;
                        false
                    };
                    pos += 1;
                    node = children[usize::from(bit)];
                }
            }
        }
        codewords.push(codebook.codeword_of_node[node]);
    }
    (codewords, pad_bits)
}

/// Inverse of [`encode`]: concatenates the chunks behind each codeword and
/// truncates to `n_bits`. A stream that decodes short is malformed.
pub fn decode(
    codewords: &[u8],
    n_bits: usize,
    codebook: &TunstallCodebook,
) -> Result<Vec<bool>, Error> {
    let mut bits = Vec::with_capacity(n_bits);
    for &cw in codewords {
        match codebook.chunk(cw as usize) {
            Some(chunk) => bits.extend_from_slice(chunk),
            None => return Err(Error::MalformedCodewordStream { got: bits.len(), want: n_bits }),
        }
    }
    if bits.len() < n_bits {
        return Err(Error::MalformedCodewordStream { got: bits.len(), want: n_bits });
    }
    bits.truncate(n_bits);
    Ok(bits)
}

/// Compression statistics of one run over random zero-order input.
#[derive(Debug, Clone, Copy)]
pub struct CompressionReport {
    /// Source length in bits.
    pub n: usize,
    /// Emitted codeword count.
    pub r: usize,
    /// Compression ratio `r*w/n`.
    pub kappa: f64,
    /// Per-bit entropy of the source model.
    pub h0: f64,
    /// Residual redundancy `(kappa - h0) / h0`.
    pub rho: f64,
}

/// Encodes `n_bits` of seeded Bernoulli(p) input and reports the ratio
/// against the entropy bound.
pub fn measure(p: f64, w: u8, n_bits: usize, seed: u64) -> Result<CompressionReport, Error> {
    let codebook = TunstallCodebook::build(p, w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits: Vec<bool> = (0..n_bits).map(|_| rng.gen_bool(p)).collect();
    let (codewords, _) = encode(&bits, &codebook);
    let r = codewords.len();
    let kappa = (r * w as usize) as f64 / n_bits as f64;
    let h0 = entropy(p)?;
    Ok(CompressionReport { n: n_bits, r, kappa, h0, rho: (kappa - h0) / h0 })
}
