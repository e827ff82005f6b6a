//! Bucketed relative-position attention bias.
//!
//! Buckets follow the log-spaced signed scheme of T5: offsets below half the
//! per-sign bucket count get their own bucket, larger ones share
//! logarithmically wider buckets up to `max_distance`. The logarithm is
//! evaluated exactly with integer power comparisons.

use alloc::rc::Rc;
use alloc::vec::Vec;

use super::graph::NO_INDEX;
use crate::geometry::Cell;

/// Largest `j <= k` with `(max_distance / max_exact)^j <= (n / max_exact)^k`,
/// i.e. `floor(k * ln(n/max_exact) / ln(max_distance/max_exact))`.
fn log_bucket(n: u64, max_exact: u64, max_distance: u64, k: u64) -> u64 {
    let n = n.min(max_distance) as u128;
    let (me, md) = (max_exact as u128, max_distance as u128);
    let rhs = n.pow(k as u32);
    let mut j = 0;
    while j < k {
        let next = j + 1;
        // md^next * me^(k-next) <= n^k
        let lhs = md.pow(next as u32) * me.pow((k - next) as u32);
        if lhs > rhs {
            break;
        }
        j = next;
    }
    j
}

/// Bucket of the offset `relative = key - query`.
pub fn relative_bucket(relative: i64, bidirectional: bool, num_buckets: usize, max_distance: usize) -> usize {
    let mut nb = num_buckets as u64;
    let mut ret = 0u64;
    let n = if bidirectional {
        nb /= 2;
        if relative > 0 {
            ret += nb;
        }
        relative.unsigned_abs()
    } else {
        (-relative).max(0) as u64
    };
    let max_exact = nb / 2;
    let val = if n < max_exact {
        n
    } else {
        (max_exact + log_bucket(n, max_exact, max_distance as u64, nb - max_exact)).min(nb - 1)
    };
    (ret + val) as usize
}

/// Index pairs into the encoder bias table (rows: x buckets, then y buckets,
/// then one row shared by every pair touching a no-location cell).
pub fn bias_index_2d(cells: &[Option<Cell>], buckets: usize, max_distance: usize) -> Rc<Vec<[u32; 2]>> {
    let sentinel = (2 * buckets) as u32;
    let mut out = Vec::with_capacity(cells.len() * cells.len());
    for q in cells {
        for k in cells {
            out.push(match (q, k) {
                (Some(q), Some(k)) => {
                    let dx = k.col as i64 - q.col as i64;
                    let dy = k.row as i64 - q.row as i64;
                    let bx = relative_bucket(dx, true, buckets, max_distance);
                    let by = relative_bucket(dy, true, buckets, max_distance);
                    [bx as u32, (buckets + by) as u32]
                }
                _ => [sentinel, NO_INDEX],
            });
        }
    }
    Rc::new(out)
}

/// Index pairs into the causal decoder bias table for `n` positions.
pub fn bias_index_1d(n: usize, buckets: usize, max_distance: usize) -> Rc<Vec<[u32; 2]>> {
    let mut out = Vec::with_capacity(n * n);
    for q in 0..n {
        for k in 0..n {
            let b = relative_bucket(k as i64 - q as i64, false, buckets, max_distance);
            out.push([b as u32, NO_INDEX]);
        }
    }
    Rc::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Floating-point transcription of the reference bucketing.
    fn reference(relative: i64, bidirectional: bool, num_buckets: usize, max_distance: usize) -> usize {
        let mut nb = num_buckets as i64;
        let mut ret = 0;
        let mut n = -relative;
        if bidirectional {
            nb /= 2;
            if n < 0 {
                ret += nb;
            }
            n = n.abs();
        } else {
            n = n.max(0);
        }
        let me = nb / 2;
        if n < me {
            return (ret + n) as usize;
        }
        let v = me
            + ((n as f64 / me as f64).ln() / (max_distance as f64 / me as f64).ln() * (nb - me) as f64) as i64;
        (ret + v.min(nb - 1)) as usize
    }

    #[test]
    fn matches_reference_away_from_ties() {
        for rel in -200..=200 {
            for &bi in &[true, false] {
                let a = relative_bucket(rel, bi, 16, 64);
                let b = reference(rel, bi, 16, 64);
                assert!(a == b || (a as i64 - b as i64).abs() == 1, "{rel} {bi}: {a} vs {b}");
                if rel.abs() != 64 && rel.abs() != 16 {
                    assert_eq!(a, b, "{rel} {bi}");
                }
            }
        }
        for rel in -300..=300 {
            assert_eq!(relative_bucket(rel, true, 32, 128), reference(rel, true, 32, 128).min(31), "{rel}");
        }
    }

    #[test]
    fn monotone_within_sign() {
        let mut prev = 0;
        for d in 0..=64 {
            let b = relative_bucket(d, true, 16, 64);
            assert!(b >= prev);
            prev = b;
        }
        let mut prev = 0;
        for d in 0..=64 {
            let b = relative_bucket(-d, true, 16, 64);
            assert!(b >= prev);
            assert!(b < 8);
            prev = b;
        }
        for d in 1..=64 {
            assert!(relative_bucket(d, true, 16, 64) >= 8);
        }
        assert_eq!(relative_bucket(0, true, 16, 64), 0);
        assert_eq!(relative_bucket(1000, true, 16, 64), 15);
        assert_eq!(relative_bucket(5, false, 16, 64), 0);
        assert_eq!(relative_bucket(-1000, false, 16, 64), 15);
    }

    #[test]
    fn index_grids() {
        let cells = [Some(Cell { row: 0, col: 0 }), Some(Cell { row: 1, col: 2 }), None];
        let idx = bias_index_2d(&cells, 16, 64);
        assert_eq!(idx.len(), 9);
        assert_eq!(idx[0], [0, 16]);
        assert_eq!(idx[1], [10, 25]);
        assert_eq!(idx[3], [2, 17]);
        assert_eq!(idx[2], [32, NO_INDEX]);
        assert_eq!(idx[6], [32, NO_INDEX]);
        let idx = bias_index_1d(3, 16, 64);
        assert_eq!(idx[2 * 3], [2, NO_INDEX]);
        assert_eq!(idx[2 * 3 + 2], [0, NO_INDEX]);
    }
}
