//! Kendall's tau-b, counted in O(n log n) by sorting and merge-sort inversions.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classification of all n(n-1)/2 unordered pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairCounts {
    pub concordant: u64,
    pub discordant: u64,
    /// Tied in x only.
    pub ties_x: u64,
    /// Tied in y only.
    pub ties_y: u64,
    /// Tied in both.
    pub ties_xy: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.concordant + self.discordant + self.ties_x + self.ties_y + self.ties_xy
    }

    /// tau-b, or `None` when both margins are constant.
    pub fn tau_b(&self) -> Option<f64> {
        let cd = (self.concordant + self.discordant) as f64;
        let dx = cd + self.ties_x as f64;
        let dy = cd + self.ties_y as f64;
        if dx == 0.0 && dy == 0.0 {
            return None;
        }
        if dx == 0.0 || dy == 0.0 {
            return Some(0.0);
        }
        let s = self.concordant as f64 - self.discordant as f64;
        Some((s / (dx * dy).sqrt()).clamp(-1.0, 1.0))
    }
}

fn n_pairs(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

/// Sum of t(t-1)/2 over runs of equal consecutive elements.
fn tied_pairs<T, F: Fn(&T, &T) -> bool>(sorted: &[T], eq: F) -> u64 {
    let mut total = 0;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if eq(&w[0], &w[1]) {
            run += 1;
        } else {
            total += n_pairs(run);
            run = 1;
        }
    }
    total + n_pairs(run)
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    if n <= 16 {
        // insertion sort; each shift past a strictly greater element is one inversion
        let mut swaps = 0;
        for i in 1..n {
            let x = v[i];
            let mut j = i;
            while j > 0 && v[j - 1] > x {
                v[j] = v[j - 1];
                j -= 1;
                swaps += 1;
            }
            v[j] = x;
        }
        return swaps;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
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

/// Pair classification in O(n log n).
pub fn pair_counts(x: &[f64], y: &[f64]) -> Result<PairCounts> {
    check_inputs(x, y)?;
    let n = x.len() as u64;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n1 = tied_pairs(&pairs, |a, b| a.0 == b.0);
    let n3 = tied_pairs(&pairs, |a, b| a.0 == b.0 && a.1 == b.1);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let discordant = merge_count(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys, |a, b| a == b);
    let concordant = n_pairs(n) + n3 - n1 - n2 - discordant;
    Ok(PairCounts {
        concordant,
        discordant,
        ties_x: n1 - n3,
        ties_y: n2 - n3,
        ties_xy: n3,
    })
}

/// Reference O(n^2) pair classification.
pub fn pair_counts_naive(x: &[f64], y: &[f64]) -> Result<PairCounts> {
    check_inputs(x, y)?;
    let mut c = PairCounts::default();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let ox = x[i].total_cmp(&x[j]);
            let oy = y[i].total_cmp(&y[j]);
            match (ox, oy) {
                (Ordering::Equal, Ordering::Equal) => c.ties_xy += 1,
                (Ordering::Equal, _) => c.ties_x += 1,
                (_, Ordering::Equal) => c.ties_y += 1,
                _ if ox == oy => c.concordant += 1,
                _ => c.discordant += 1,
            }
        }
    }
    Ok(c)
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Data(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Data("Kendall's tau needs at least two observations".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Data("Kendall's tau input contains NaN".into()));
    }
    Ok(())
}

/// Kendall's tau-b. A single constant argument gives 0; two constant
/// arguments are an error.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    pair_counts(x, y)?
        .tau_b()
        .ok_or_else(|| Error::Data("Kendall's tau is undefined when both inputs are constant".into()))
}

/// Symmetric matrix of pairwise tau-b with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl TauMatrix {
    pub fn d(&self) -> usize {
        self.names.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Absolute values, the edge weights used for structure selection.
    pub fn abs(&self) -> Vec<Vec<f64>> {
        self.values.iter().map(|r| r.iter().map(|v| v.abs()).collect()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variable");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (n, row) in self.names.iter().zip(&self.values) {
            out.push_str(n);
            for v in row {
                out.push_str(&format!(",{}", crate::json::round_sig(*v)));
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise tau-b over the columns; pairs are computed in parallel.
pub fn tau_matrix(columns: &[Vec<f64>], names: &[String]) -> Result<TauMatrix> {
    let d = columns.len();
    if d < 2 {
        return Err(Error::Data(format!("tau matrix needs at least two variables, got {d}")));
    }
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let taus = pairs
        .par_iter()
        .map(|&(i, j)| {
            kendall_tau(&columns[i], &columns[j]).map_err(|e| Error::Data(format!("pair ({}, {}): {e}", names[i], names[j])))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = vec![vec![0.0; d]; d];
    for (i, row) in values.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for (&(i, j), t) in pairs.iter().zip(taus) {
        values[i][j] = t;
        values[j][i] = t;
    }
    Ok(TauMatrix {
        names: names.to_vec(),
        values,
    })
}
