//! Kendall rank correlation, tie-corrected (tau-b), in `O(n log n)`.

use std::cmp::Ordering;

use crate::error::{check_len, Error, Result};

/// Pair counts underlying tau-b. All counts are over unordered pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub pairs: u64,
    /// Pairs tied in `a` (including those also tied in `b`).
    pub ties_a: u64,
    /// Pairs tied in `b` (including those also tied in `a`).
    pub ties_b: u64,
    /// Pairs tied in both.
    pub ties_both: u64,
    /// Pairs ordered oppositely by `a` and `b`.
    pub discordant: u64,
}

impl PairCounts {
    pub fn concordant(&self) -> u64 {
        self.pairs + self.ties_both - self.ties_a - self.ties_b - self.discordant
    }

    pub fn tau_b(&self) -> Result<f64> {
        let na = self.pairs - self.ties_a;
        let nb = self.pairs - self.ties_b;
        if na == 0 || nb == 0 {
            return Err(Error::Undefined("kendall tau of a constant vector"));
        }
        let s = self.concordant() as f64 - self.discordant as f64;
        Ok((s / (na as f64 * nb as f64).sqrt()).clamp(-1.0, 1.0))
    }
}

fn tie_pairs<T: PartialEq>(sorted: impl Iterator<Item = T>) -> u64 {
    let mut total = 0;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for v in sorted {
        if prev.as_ref() == Some(&v) {
            run += 1;
        } else {
            total += run * (run.saturating_sub(1)) / 2;
            run = 1;
        }
        prev = Some(v);
    }
    total + run * run.saturating_sub(1) / 2
}

/// Knight's algorithm: sort by `(a, b)`, then count the inversions of `b`
/// with a merge sort.
pub fn pair_counts(a: &[f64], b: &[f64]) -> Result<PairCounts> {
    check_len(a.len(), b.len())?;
    if a.len() < 2 {
        return Err(Error::input("kendall tau needs at least two observations"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::input("kendall tau input contains NaN"));
    }
    // adding 0.0 folds -0.0 into 0.0 so total_cmp agrees with ==
    let a: Vec<f64> = a.iter().map(|v| v + 0.0).collect();
    let b: Vec<f64> = b.iter().map(|v| v + 0.0).collect();
    let n = a.len() as u64;
    let mut idx: Vec<usize> = (0..a.len()).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));

    let ties_a = tie_pairs(idx.iter().map(|&i| a[i]));
    let ties_both = tie_pairs(idx.iter().map(|&i| (a[i], b[i])));

    let mut keys: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let mut buf = vec![0.0; keys.len()];
    let discordant = merge_count(&mut keys, &mut buf);
    let ties_b = tie_pairs(keys.iter().copied());

    Ok(PairCounts {
        pairs: n * (n - 1) / 2,
        ties_a,
        ties_b,
        ties_both,
        discordant,
    })
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]) == Ordering::Less {
            swaps += (mid - i) as u64;
            buf[k] = v[j];
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    pair_counts(a, b)?.tau_b()
}
