//! Analytic path-weight statistics of the sparse Merkle tree under the
//! uncorrelated-occupancy model, a Monte-Carlo oracle, and the comparison
//! against the truncated dense tree.
//!
//! The weight of a leaf's proof material is the number of hashes that travel
//! with it: the leaf's own label when occupied plus the non-NULL adjunct
//! subtrees along its path. Occupancy is i.i.d. Bernoulli(p) per leaf, so the
//! weight at height k is a sum of independent indicators and obeys a cheap
//! recurrence in k.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::smt;

/// Distribution of path weight at tree level `k`.
#[derive(Debug, Clone)]
pub struct WeightPdf {
    pub level: u32,
    pub p: f64,
    /// `probs[i]` = Pr(weight = i), for i in 0..=level.
    pub probs: Vec<f64>,
}

fn check_p(p: f64) -> Result<(), Error> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    Ok(())
}

/// Probability that a height-`k` subtree is entirely NULL: `(1-p)^(2^k)`.
///
/// Evaluated in log space; naive repeated multiplication loses accuracy long
/// before `(0.9)^1024`.
pub fn alpha(k: u32, p: f64) -> Result<f64, Error> {
    check_p(p)?;
    Ok((((1.0 - p).ln()) * (2f64.powi(k as i32))).exp())
}

/// Analytic weight distribution at level `k`, by the level recurrence.
///
/// `PDF_1 = {1-p, p}`; each step to the next level mixes in the indicator of
/// the newly exposed adjunct subtree. The subtree sizes follow the reference
/// evaluation of the model: the step from level `j` to `j+1` mixes with
/// weight `alpha(j-1, p)`, so the first two indicators are both single-leaf
/// ones.
pub fn pdf(k: u32, p: f64) -> Result<WeightPdf, Error> {
    check_p(p)?;
    assert!(k >= 1, "pdf is defined for k >= 1");
    let mut probs = vec![1.0 - p, p];
    for j in 1..k {
        let a = alpha(j - 1, p)?;
        let mut next = vec![0.0; probs.len() + 1];
        for (i, &q) in probs.iter().enumerate() {
            next[i] += a * q;
            next[i + 1] += (1.0 - a) * q;
        }
        probs = next;
    }
    Ok(WeightPdf { level: k, p, probs })
}

impl WeightPdf {
    /// Average path weight.
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, q)| i as f64 * q).sum()
    }

    pub fn std_dev(&self) -> f64 {
        let mean = self.mean();
        let var: f64 = self
            .probs
            .iter()
            .enumerate()
            .map(|(i, q)| (i as f64 - mean).powi(2) * q)
            .sum();
        var.sqrt()
    }

    /// Pr(weight > l_max).
    pub fn tail_prob(&self, l_max: usize) -> f64 {
        self.probs.iter().skip(l_max + 1).sum()
    }

    /// Total-variation distance to another distribution over the same support.
    pub fn total_variation(&self, other: &WeightPdf) -> f64 {
        let len = self.probs.len().max(other.probs.len());
        let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        (0..len)
            .map(|i| (at(&self.probs, i) - at(&other.probs, i)).abs())
            .sum::<f64>()
            / 2.0
    }
}

/// Structural weight of leaf 0's proof material given sampled occupancies.
///
/// Indicator ranges per level: the leaf itself, its sibling leaf, then the
/// sibling subtrees [2, 4), [4, 8), ... — one range per level, matching the
/// recurrence in [`pdf`]. `occ` must cover at least `2^(k-1)` leaves
/// (`occ[0]` alone for k = 1).
pub fn path_weight_from_occupancy(occ: &[bool], k: u32) -> usize {
    let mut weight = usize::from(occ[0]);
    if k >= 2 {
        weight += usize::from(occ[1]);
    }
    for j in 1..k.saturating_sub(1) {
        let start = 1usize << j;
        let end = 1usize << (j + 1);
        if occ[start..end].iter().any(|&b| b) {
            weight += 1;
        }
    }
    weight
}

/// Monte-Carlo oracle for [`pdf`]: samples leaf occupancies i.i.d.
/// Bernoulli(p) and measures the structural weight of leaf 0's path. The
/// weight law does not depend on which leaf is fixed, so leaf 0 is used
/// throughout.
pub fn monte_carlo_pdf(k: u32, p: f64, trials: usize, rng_seed: u64) -> Result<WeightPdf, Error> {
    check_p(p)?;
    assert!(trials >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut counts = vec![0usize; k as usize + 1];
    let mut occ = vec![false; 1usize << k.saturating_sub(1)];
    for _ in 0..trials {
        occ[0] = rng.gen_bool(p);
        if k >= 2 {
            occ[1] = rng.gen_bool(p);
        }
        for j in 1..k.saturating_sub(1) {
            let start = 1usize << j;
            let end = 1usize << (j + 1);
            // Only "any occupied in range" matters; stop at the first hit.
            let mut any = false;
            for slot in &mut occ[start..end] {
                *slot = false;
                if !any && rng.gen_bool(p) {
                    *slot = true;
                    any = true;
                }
            }
        }
        counts[path_weight_from_occupancy(&occ, k)] += 1;
    }
    let probs = counts.iter().map(|&c| c as f64 / trials as f64).collect();
    Ok(WeightPdf { level: k, p, probs })
}

/// Mean proof weight of a truncated dense tree carrying `round(n*p)` leaves,
/// averaged over the occupied leaf positions. Returns 0 when the rounded
/// count is 0 or 1 (single-leaf trees need no adjuncts).
pub fn truncated_mean_weight(n: usize, p: f64) -> Result<f64, Error> {
    check_p(p)?;
    if !n.is_power_of_two() {
        return Err(Error::LeafCountNotPowerOfTwo(n));
    }
    let m = (n as f64 * p).round() as usize;
    if m == 0 {
        return Ok(0.0);
    }
    let total: u32 = (0..m)
        .map(|i| smt::shape_mask(m, i).map(u32::count_ones))
        .sum::<Result<u32, Error>>()?;
    Ok(f64::from(total) / m as f64)
}
