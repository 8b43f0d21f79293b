//! Acceptance gate: one test per release criterion, each printing a single
//! PASS line with its measured numbers (visible with `--nocapture`).
//! Tolerances are pinned here and nowhere else.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tmt_core::blockstore::{self, BlockView, CasStore, LookupResult};
use tmt_core::rootoftrust::{self, BitmapMode, RootOfTrust};
use tmt_core::shuffleshift::{self, PermParams, DEFAULT_BASE_ROUNDS};
use tmt_core::{pathstats, plschain, smt, tunstall};

fn pass(criterion: u32, detail: &str) {
    println!("criterion {criterion:>2} PASS: {detail}");
}

/// Reference path-weight table at p = 0.1: per-level means and per-weight
/// percentages (index = weight).
const WEIGHT_TABLE: &[(u32, f64, &[f64])] = &[
    (2, 0.200, &[81.0, 18.0, 1.0]),
    (3, 0.390, &[65.6, 30.0, 4.2, 0.2]),
    (4, 0.734, &[43.0, 42.2, 13.1, 1.6, 0.1]),
    (5, 1.303, &[18.5, 42.7, 29.7, 8.1, 0.9, 0.0]),
    (6, 2.118, &[3.4, 23.0, 40.3, 25.7, 6.8, 0.8, 0.0]),
    (7, 3.084, &[0.1, 4.1, 23.6, 39.8, 25.0, 6.6, 0.7, 0.0]),
    (8, 4.083, &[0.0, 0.1, 4.1, 23.6, 39.8, 25.0, 6.6, 0.7, 0.0]),
    (9, 5.083, &[0.0, 0.0, 0.1, 4.1, 23.6, 39.8, 25.0, 6.6, 0.7, 0.0]),
    (10, 6.083, &[0.0, 0.0, 0.0, 0.1, 4.1, 23.6, 39.8, 25.0, 6.6, 0.7, 0.0]),
];

#[test]
fn criterion_01_weight_table_analytic() {
    let start = Instant::now();
    for &(k, mean, cells) in WEIGHT_TABLE {
        let d = pathstats::pdf(k, 0.1).unwrap();
        assert!((d.mean() - mean).abs() <= 1e-3, "k={k} mean {} vs {mean}", d.mean());
        assert_eq!(d.probs.len(), cells.len());
        for (i, (&got, &want)) in d.probs.iter().zip(cells).enumerate() {
            assert!(
                (got * 100.0 - want).abs() <= 0.05,
                "k={k} weight {i}: {:.3}% vs {want}%",
                got * 100.0
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    pass(1, &format!("weight table k=2..10 within 0.05pp / 1e-3, {elapsed:?}"));
}

#[test]
fn criterion_02_recurrence_vs_oracles() {
    let start = Instant::now();
    // Exhaustive enumeration for small trees.
    for k in 1..=4u32 {
        for p in [0.05, 0.1, 0.15] {
            let analytic = pathstats::pdf(k, p).unwrap();
            let leaves = 1usize << k;
            let mut brute = vec![0.0; k as usize + 1];
            for pattern in 0u64..1 << leaves {
                let occ: Vec<bool> = (0..leaves).map(|i| pattern >> i & 1 == 1).collect();
                let ones = pattern.count_ones() as i32;
                let lh = p.powi(ones) * (1.0 - p).powi(leaves as i32 - ones);
                brute[pathstats::path_weight_from_occupancy(&occ, k)] += lh;
            }
            for (got, want) in analytic.probs.iter().zip(&brute) {
                assert!((got - want).abs() <= 1e-9, "k={k} p={p}");
            }
        }
    }
    // Monte-Carlo at scale.
    let mut worst_tv = 0.0f64;
    for k in 1..=10u32 {
        for p in [0.05, 0.1, 0.15] {
            let analytic = pathstats::pdf(k, p).unwrap();
            let mc = pathstats::monte_carlo_pdf(k, p, 100_000, 0xACCE5).unwrap();
            let tv = analytic.total_variation(&mc);
            assert!(tv < 0.01, "k={k} p={p}: tv {tv}");
            worst_tv = worst_tv.max(tv);
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    pass(2, &format!("enumeration exact to 1e-9, MC worst TV {worst_tv:.4}, {elapsed:?}"));
}

#[test]
fn criterion_03_redundancy_table() {
    // (w, p, reference rho %, tolerance pp)
    let rows = [
        (4u8, 0.05, 30.4, 3.0),
        (4, 0.10, 7.5, 1.5),
        (4, 0.15, 6.9, 1.5),
        (8, 0.05, 13.4, 1.5),
        (8, 0.10, 4.6, 1.5),
        (8, 0.15, 3.8, 1.5),
    ];
    let start = Instant::now();
    for (w, p, rho, tol) in rows {
        let row_start = Instant::now();
        let report = tunstall::measure(p, w, 1_000_000, 0xACCE5).unwrap();
        let got = report.rho * 100.0;
        assert!((got - rho).abs() <= tol, "w={w} p={p}: rho {got:.2}% vs {rho}%");
        assert!(row_start.elapsed().as_secs_f64() < 10.0);
    }
    pass(3, &format!("all 6 redundancy rows within tolerance, {:?}", start.elapsed()));
}

#[test]
fn criterion_04_codebook_exact() {
    // Chunks with their -log2 likelihoods; the all-zeros cell is pinned to
    // its formula value -13*log2(0.85) = 3.048.
    let expected: [(&str, f64); 16] = [
        ("0000000000000", 3.048),
        ("0000000000001", 5.55),
        ("000000000001", 5.32),
        ("00000000001", 5.08),
        ("0000000001", 4.85),
        ("000000001", 4.61),
        ("00000001", 4.38),
        ("0000001", 4.14),
        ("000001", 3.91),
        ("00001", 3.67),
        ("0001", 3.44),
        ("001", 3.20),
        ("010", 3.20),
        ("011", 5.70),
        ("10", 2.97),
        ("11", 5.47),
    ];
    let cb = tunstall::TunstallCodebook::build(0.15, 4).unwrap();
    let entries = cb.entries();
    assert_eq!(entries.len(), 16);
    let mut got: Vec<(String, f64)> = entries
        .iter()
        .map(|e| {
            let chunk: String = e.chunk.iter().map(|&b| if b { '1' } else { '0' }).collect();
            (chunk, e.neg_log2_likelihood)
        })
        .collect();
    got.sort_by(|a, b| a.0.cmp(&b.0));
    let mut want: Vec<(String, f64)> = expected.iter().map(|&(c, l)| (c.into(), l)).collect();
    want.sort_by(|a, b| a.0.cmp(&b.0));
    for ((gc, gl), (wc, wl)) in got.iter().zip(&want) {
        assert_eq!(gc, wc, "chunk set mismatch");
        assert!((gl - wl).abs() <= 0.01, "{gc}: {gl:.3} vs {wl}");
    }
    pass(4, "codebook(0.15, 4) chunk set exact, likelihoods within 0.01");
}

#[test]
fn criterion_05_avalanche_table() {
    let start = Instant::now();
    let mut deltas = std::collections::BTreeMap::new();
    for d in [10u32, 11, 12] {
        for t in [100u32, 150, 200] {
            let report = shuffleshift::avalanche(d, t, 50, 0xACCE5).unwrap();
            deltas.insert((d, t), report.delta);
        }
        assert!(
            deltas[&(d, 100)] > deltas[&(d, 150)] && deltas[&(d, 150)] > deltas[&(d, 200)],
            "delta not monotone at d={d}"
        );
    }
    assert!(deltas[&(10, 200)] <= 0.02, "delta(10,200) = {}", deltas[&(10, 200)]);
    assert!(deltas[&(10, 100)] >= 0.03, "delta(10,100) = {}", deltas[&(10, 100)]);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    pass(
        5,
        &format!(
            "delta(10,200)={:.4}, delta(10,100)={:.4}, monotone for d=10..12, {elapsed:?}",
            deltas[&(10, 200)],
            deltas[&(10, 100)]
        ),
    );
}

#[test]
fn criterion_06_bijectivity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE5);
    for d in [10u32, 11, 12] {
        let n = 1usize << d;
        for _ in 0..50 {
            let block = rng.gen_range(0..=1_000_000u64);
            let params = PermParams::new(d, block, DEFAULT_BASE_ROUNDS, 5).unwrap();
            let table =
                shuffleshift::permutation_table(d, block, params.effective_rounds()).unwrap();
            let mut seen = vec![false; n];
            for (id, &pos) in table.iter().enumerate() {
                assert!(!seen[pos as usize], "collision at d={d} block={block}");
                seen[pos as usize] = true;
                assert_eq!(
                    shuffleshift::invert(u64::from(pos), &params).unwrap(),
                    id as u64
                );
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    pass(6, &format!("collision-free + two-sided inverse, n=1024/2048/4096 x 50 blocks, {elapsed:?}"));
}

#[test]
fn criterion_07_proof_soundness() {
    use smt::{verify, Digest, MerkleTree};
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE5);
    let mut honest = 0u64;
    let mut forgeries_tried = 0u64;

    for leaves in [2usize, 4, 8, 16, 32, 64] {
        let height = leaves.trailing_zeros();
        // Random occupancy plus the all-full and single-leaf corner cases.
        let mut patterns: Vec<Vec<Option<smt::Hash>>> = vec![
            (0..leaves).map(|_| Some(rng.gen())).collect(),
            {
                let mut v = vec![None; leaves];
                v[leaves / 2] = Some(rng.gen());
                v
            },
        ];
        for _ in 0..3 {
            patterns.push(
                (0..leaves)
                    .map(|_| if rng.gen_bool(0.4) { Some(rng.gen()) } else { None })
                    .collect(),
            );
        }
        for pattern in patterns {
            let tree = MerkleTree::build_sparse(&pattern).unwrap();
            let root = tree.root();
            for index in 0..leaves {
                let (leaf, path) = tree.prove(index).unwrap();
                assert!(verify(&root, index, &leaf, &path, height));
                honest += 1;

                // Leaf substitution (including NULL-leaf forgeries).
                let fake = Digest::of_record(b"forged");
                if fake != leaf {
                    assert!(!verify(&root, index, &fake, &path, height));
                    forgeries_tried += 1;
                }
                // Single-bit mask flips.
                for k in 0..height {
                    let mut p = path.clone();
                    p.mask ^= 1 << k;
                    // Keep the adjunct count consistent where possible so the
                    // structural precheck is not what rejects it.
                    if p.mask.count_ones() > path.mask.count_ones() {
                        p.adjuncts.push(rng.gen());
                    } else if !p.adjuncts.is_empty() {
                        p.adjuncts.pop();
                    }
                    assert!(!verify(&root, index, &leaf, &p, height), "mask flip passed");
                    forgeries_tried += 1;
                }
                // Single-bit adjunct corruption.
                for a in 0..path.adjuncts.len() {
                    for bit in [0usize, 7, 128, 255] {
                        let mut p = path.clone();
                        p.adjuncts[a][bit / 8] ^= 1 << (bit % 8);
                        assert!(!verify(&root, index, &leaf, &p, height));
                        forgeries_tried += 1;
                    }
                }
                // Index-bit flips. Flipping index bit k swaps the fold
                // direction at level k, so a non-NULL running value cannot
                // survive a flip at a NULL-sibling level (the flip defense in
                // the combine rule). The only flips allowed to verify are
                // those where both indices sit in the same all-NULL region —
                // the proof then states a true absence about the other index,
                // not a forgery.
                for k in 0..height {
                    let other = index ^ (1 << k);
                    let mut p = path.clone();
                    p.leaf_index = other;
                    if verify(&root, other, &leaf, &p, height) {
                        assert!(leaf.is_null());
                        assert_eq!(tree.leaf(other), Some(&leaf));
                    } else {
                        forgeries_tried += 1;
                    }
                }
            }
        }
    }
    pass(7, &format!("{honest} honest proofs verified, {forgeries_tried} forgeries all rejected"));
}

#[test]
fn criterion_08_end_to_end() {
    let start = Instant::now();
    let n = 1024usize;
    let blocks = 10_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE5);
    let mut cas = CasStore::new();
    let mut max_weight_seen = 0usize;
    let mut weight_sum = 0u64;
    let mut presences = 0u64;

    for number in 0..blocks {
        let records: Vec<(u64, Vec<u8>)> = (0..n as u64)
            .filter(|_| rng.gen_bool(0.1))
            .map(|id| (id, format!("b{number}-u{id}").into_bytes()))
            .collect();
        let contributors: Vec<bool> = {
            let mut v = vec![false; n];
            for &(id, _) in &records {
                v[id as usize] = true;
            }
            v
        };
        let block =
            blockstore::build_block(number, &records, n, DEFAULT_BASE_ROUNDS, &mut cas).unwrap();
        let rot = RootOfTrust::decode(&block.rot.encode().unwrap()).unwrap();
        let view = BlockView::new(&rot, number, DEFAULT_BASE_ROUNDS).unwrap();
        let weight_cap = smt::truncated_height(rot.m.max(1)) as usize;

        for id in 0..n as u64 {
            let before = cas.served_bytes();
            match view.lookup(id, &cas).unwrap() {
                LookupResult::Present { path, verified, .. } => {
                    assert!(contributors[id as usize], "block {number}: phantom presence {id}");
                    assert!(verified, "block {number}: id {id} failed verification");
                    assert!(path.adjuncts.len() <= weight_cap);
                    max_weight_seen = max_weight_seen.max(path.adjuncts.len());
                    weight_sum += path.adjuncts.len() as u64;
                    presences += 1;
                }
                LookupResult::Absent { .. } => {
                    assert!(!contributors[id as usize], "block {number}: contributor {id} absent");
                    assert_eq!(cas.served_bytes(), before, "absence caused store traffic");
                }
            }
        }
    }
    let mean_weight = weight_sum as f64 / presences as f64;
    assert!((1.0..=7.0).contains(&mean_weight), "mean presence weight {mean_weight}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    pass(
        8,
        &format!(
            "{blocks} blocks exhaustively probed; mean presence weight {mean_weight:.2}, max {max_weight_seen}, {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_09_wire_format() {
    // Golden fixture: list mode, n=1024, m=2 at {3, 700}, extra rounds 5;
    // byte values fixed by an independent bit-packing script.
    let golden_hex = "a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5\
                      3ff0022a00ebc000000000";
    let golden = hex::decode(golden_hex).unwrap();
    let rot = RootOfTrust::decode(&golden).unwrap();
    assert_eq!(rot.encode().unwrap(), golden);
    assert_eq!((rot.n, rot.m, rot.extra_rounds), (1024, 2, 5));
    assert_eq!(rot.mode, BitmapMode::List);
    // Total length is L + 320 bits before the byte pad.
    assert_eq!(golden.len(), (rot.payload_bits() + 320 + 7) / 8);

    // Compressed payload size at (n, m) = (1024, 102): entropy floor ~482
    // bits plus measured Tunstall redundancy.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE5);
    let mut sizes = Vec::new();
    for _ in 0..20 {
        let mut bitmap = vec![false; 1024];
        let mut placed = 0;
        while placed < 102 {
            let pos = rng.gen_range(0..1024);
            if !bitmap[pos] {
                bitmap[pos] = true;
                placed += 1;
            }
        }
        let choice = rootoftrust::choose_mode(&bitmap).unwrap();
        assert_eq!(choice.mode, BitmapMode::Compressed);
        assert!(
            (482..=560).contains(&choice.payload.len()),
            "payload {} bits",
            choice.payload.len()
        );
        sizes.push(choice.payload.len());
    }
    pass(
        9,
        &format!(
            "golden fixture bit-exact; compressed payloads {}..{} bits for m=102",
            sizes.iter().min().unwrap(),
            sizes.iter().max().unwrap()
        ),
    );
}

#[test]
fn criterion_10_pls_chain() {
    let start = Instant::now();
    // 100-interval honest chain: verify + unlock everywhere.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE5);
    let mut seq = plschain::Sequencer::new(0xACCE5);
    let mut payloads = Vec::new();
    let mut intervals = Vec::new();
    for _ in 0..100 {
        let mut bitmap = vec![false; 1024];
        for _ in 0..102 {
            loop {
                let pos = rng.gen_range(0..1024);
                if !bitmap[pos] {
                    bitmap[pos] = true;
                    break;
                }
            }
        }
        let rot = RootOfTrust::from_bitmap(rng.gen(), &bitmap, 1).unwrap();
        let j = rot.encode().unwrap();
        intervals.push(seq.broadcast(&j));
        payloads.push(j);
    }
    let mut p_prev = intervals[0].p;
    for k in 1..intervals.len() {
        let (prev, cur) = (&intervals[k - 1], &intervals[k]);
        assert!(plschain::verify_interval(&prev.l, &cur.p, &p_prev), "interval {k}");
        let (j, _) = plschain::unlock(&cur.p, &prev.l, &prev.s).unwrap();
        assert!(j.starts_with(&payloads[k - 1]), "interval {k} payload");
        p_prev = cur.p;
    }

    // Random S-messages of the honest length: one in a billion may pass the
    // 32-bit redundancy by chance; 10^6 trials must all be rejected.
    let i0 = &intervals[0];
    let i1 = &intervals[1];
    let mut fake = vec![0u8; i0.s.len()];
    for trial in 0..1_000_000u64 {
        rng.fill(&mut fake[..]);
        assert!(
            plschain::unlock(&i1.p, &i0.l, &fake).is_err(),
            "random S accepted at trial {trial}"
        );
    }
    let elapsed = start.elapsed();
    pass(10, &format!("100 intervals verified+unlocked; 10^6 random S all rejected, {elapsed:?}"));
}
