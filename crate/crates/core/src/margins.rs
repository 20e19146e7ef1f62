//! Empirical margins: the rank transform to pseudo-observations and its
//! inverse, the type-1 empirical quantile.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DataTable, VariableKind, VariableMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    AverageRank,
    #[default]
    Jitter,
}

impl std::str::FromStr for TiePolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "average_rank" | "average" => Ok(TiePolicy::AverageRank),
            "jitter" => Ok(TiePolicy::Jitter),
            other => Err(format!("unknown tie policy {other:?} (expected average_rank or jitter)")),
        }
    }
}

/// Empirical distribution of one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalModel {
    pub variable: String,
    pub kind: VariableKind,
    pub sorted_values: Vec<f64>,
    pub n: usize,
}

impl MarginalModel {
    /// True when every observation is the same value.
    pub fn is_degenerate(&self) -> bool {
        self.sorted_values.first() == self.sorted_values.last()
    }

    /// True when at least two observations coincide.
    pub fn has_ties(&self) -> bool {
        self.sorted_values.windows(2).any(|w| w[0] == w[1])
    }

    /// Number of observations strictly below and at most `x`.
    fn rank_bounds(&self, x: f64) -> (usize, usize) {
        let lo = self.sorted_values.partition_point(|&v| v < x);
        let hi = self.sorted_values.partition_point(|&v| v <= x);
        (lo, hi)
    }

    /// Empirical CDF rescaled by n+1, with its left limit.
    pub fn cdf_pair(&self, x: f64) -> (f64, f64) {
        let (lo, hi) = self.rank_bounds(x);
        let m = (self.n + 1) as f64;
        (hi as f64 / m, lo as f64 / m)
    }
}

pub fn fit_marginal(column: &[f64], meta: &VariableMeta) -> Result<MarginalModel> {
    if column.is_empty() {
        return Err(Error::Data(format!("column {} is empty", meta.name)));
    }
    if let Some(bad) = column.iter().find(|x| !x.is_finite()) {
        return Err(Error::Data(format!("column {} contains non-finite value {bad}", meta.name)));
    }
    let mut sorted_values = column.to_vec();
    sorted_values.sort_by(f64::total_cmp);
    let model = MarginalModel {
        variable: meta.name.clone(),
        kind: meta.kind,
        n: sorted_values.len(),
        sorted_values,
    };
    if model.is_degenerate() {
        log::warn!("variable {} is constant", meta.name);
    }
    Ok(model)
}

/// Result of a rank transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Pit {
    pub values: Vec<f64>,
    /// Inputs that fell outside the model's support and were clamped.
    pub n_clamped: usize,
}

/// Rank transform rank/(n+1). A value tied with k-1 others occupies the rank
/// ranks lo+1..lo+k; average rank takes their mean lo + (k+1)/2, jitter draws
/// uniformly inside (lo + 1/2, lo + k + 1/2), centred on that mean. Untied
/// values get their rank under both policies.
pub fn pit(column: &[f64], model: &MarginalModel, tie_policy: TiePolicy, seed: u64) -> Pit {
    let m = (model.n + 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n_clamped = 0;
    let values = column
        .iter()
        .map(|&x| {
            let (lo, hi) = model.rank_bounds(x);
            let k = hi - lo;
            let rank = match k {
                0 => {
                    n_clamped += 1;
                    (lo as f64 + 0.5).clamp(1.0, model.n as f64)
                }
                1 => hi as f64,
                _ => match tie_policy {
                    TiePolicy::AverageRank => lo as f64 + (k as f64 + 1.0) / 2.0,
                    TiePolicy::Jitter => {
                        let w: f64 = rng.sample(Open01);
                        lo as f64 + 0.5 + w * k as f64
                    }
                },
            };
            rank / m
        })
        .collect();
    if n_clamped > 0 {
        log::info!(
            "variable {}: {n_clamped} values outside the fitted support were clamped",
            model.variable
        );
    }
    Pit { values, n_clamped }
}

/// Type-1 empirical quantile: `sorted_values[ceil(u n) - 1]` (0-based).
pub fn inverse_pit(u: &[f64], model: &MarginalModel) -> Vec<f64> {
    u.iter().map(|&p| quantile(model, p)).collect()
}

fn quantile(model: &MarginalModel, p: f64) -> f64 {
    let n = model.n;
    let idx = (p * n as f64).ceil() as isize - 1;
    model.sorted_values[idx.clamp(0, n as isize - 1) as usize]
}

/// Column-major n x d matrix of pseudo-observations.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoObs {
    columns: Vec<Vec<f64>>,
    names: Vec<String>,
}

impl PseudoObs {
    pub fn new(columns: Vec<Vec<f64>>, names: Vec<String>) -> Result<Self> {
        if columns.len() != names.len() {
            return Err(Error::Data(format!(
                "{} columns but {} names",
                columns.len(),
                names.len()
            )));
        }
        let n = columns.first().map_or(0, Vec::len);
        for (c, name) in columns.iter().zip(&names) {
            if c.len() != n {
                return Err(Error::Data(format!("column {name} has {} rows, expected {n}", c.len())));
            }
            if let Some(bad) = c.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
                return Err(Error::Data(format!("column {name} has value {bad} outside (0,1)")));
            }
        }
        Ok(PseudoObs { columns, names })
    }

    /// Uses default names `V1..Vd`.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let names = (1..=columns.len()).map(|j| format!("V{j}")).collect();
        PseudoObs::new(columns, names)
    }

    pub fn n(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn d(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Pseudo-observations and margins for a fully observed table.
#[derive(Debug, Clone)]
pub struct Transformed {
    pub pseudo_obs: PseudoObs,
    pub marginals: Vec<MarginalModel>,
    pub n_clamped: usize,
}

/// Column seed derived from the run seed; columns draw independent streams.
pub fn column_seed(seed: u64, j: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(j as u64).rotate_left(17) ^ seed
}

pub fn transform_table(table: &DataTable, tie_policy: TiePolicy, seed: u64) -> Result<Transformed> {
    let results = table
        .columns()
        .par_iter()
        .enumerate()
        .map(|(j, col)| {
            let x = col.dense()?;
            let model = fit_marginal(&x, &col.meta)?;
            let p = pit(&x, &model, tie_policy, column_seed(seed, j));
            Ok((model, p))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut columns = Vec::with_capacity(results.len());
    let mut marginals = Vec::with_capacity(results.len());
    let mut n_clamped = 0;
    for (model, p) in results {
        n_clamped += p.n_clamped;
        columns.push(p.values);
        marginals.push(model);
    }
    Ok(Transformed {
        pseudo_obs: PseudoObs::new(columns, table.names())?,
        marginals,
        n_clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta(kind: VariableKind) -> VariableMeta {
        VariableMeta::new("x", kind)
    }

    fn model(x: &[f64]) -> MarginalModel {
        fit_marginal(x, &meta(VariableKind::Continuous)).unwrap()
    }

    #[test]
    fn fit_sorts_and_counts() {
        let m = model(&[3.0, 1.0, 2.0]);
        assert_eq!(m.sorted_values, vec![1.0, 2.0, 3.0]);
        assert_eq!(m.n, 3);
        assert!(model(&[5.0, 5.0, 5.0]).is_degenerate());
        let b = fit_marginal(&[0.0, 1.0, 0.0, 1.0], &meta(VariableKind::Binary)).unwrap();
        assert_eq!(b.sorted_values, vec![0.0, 0.0, 1.0, 1.0]);
        assert!(fit_marginal(&[], &meta(VariableKind::Continuous)).is_err());
    }

    #[test]
    fn average_rank_pit() {
        let x = [10.0, 20.0, 30.0];
        assert_eq!(pit(&x, &model(&x), TiePolicy::AverageRank, 0).values, vec![0.25, 0.5, 0.75]);
        let t = [1.0, 1.0, 2.0];
        let p = pit(&t, &model(&t), TiePolicy::AverageRank, 0).values;
        assert_eq!(p, vec![1.5 / 4.0, 1.5 / 4.0, 0.75]);
    }

    #[test]
    fn jitter_spreads_ties_reproducibly() {
        let x = [1.0, 1.0];
        let m = model(&x);
        let a = pit(&x, &m, TiePolicy::Jitter, 42).values;
        let b = pit(&x, &m, TiePolicy::Jitter, 42).values;
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        assert!(a.iter().all(|&u| u > 0.5 / 3.0 && u < 2.5 / 3.0));
        assert_ne!(a, pit(&x, &m, TiePolicy::Jitter, 43).values);
    }

    #[test]
    fn quantile_data_round_trips() {
        let x = [0.25, 0.5, 0.75];
        assert_eq!(pit(&x, &model(&x), TiePolicy::Jitter, 1).values, vec![0.25, 0.5, 0.75]);
    }

    #[test]
    fn inverse_pit_is_type_one_quantile() {
        let m = model(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(inverse_pit(&[0.5], &m), vec![2.0]);
        assert_eq!(inverse_pit(&[1e-12], &m), vec![1.0]);
        assert_eq!(inverse_pit(&[0.9999], &m), vec![4.0]);
    }

    #[test]
    fn out_of_support_is_clamped() {
        let m = model(&[1.0, 2.0, 3.0]);
        let p = pit(&[0.0, 2.5, 9.0], &m, TiePolicy::AverageRank, 0);
        assert_eq!(p.n_clamped, 3);
        assert_eq!(p.values, vec![0.25, 2.5 / 4.0, 0.75]);
    }

    fn tied_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0i32..8, 2..60).prop_map(|v| v.into_iter().map(f64::from).collect())
    }

    proptest! {
        #[test]
        fn pit_is_monotone_and_interior(x in tied_vec(), seed in any::<u64>()) {
            let m = model(&x);
            for policy in [TiePolicy::AverageRank, TiePolicy::Jitter] {
                let u = pit(&x, &m, policy, seed).values;
                for i in 0..x.len() {
                    prop_assert!(u[i] > 0.0 && u[i] < 1.0);
                    for j in 0..x.len() {
                        if x[i] < x[j] {
                            prop_assert!(u[i] < u[j]);
                        }
                    }
                }
            }
        }

        #[test]
        fn tie_free_pit_is_a_rank_permutation(x in prop::collection::hash_set(-1000i32..1000, 2..80)) {
            let x: Vec<f64> = x.into_iter().map(f64::from).collect();
            let n = x.len();
            let mut u: Vec<f64> = pit(&x, &model(&x), TiePolicy::Jitter, 5).values;
            u.sort_by(f64::total_cmp);
            let expect: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
            prop_assert_eq!(u, expect);
        }

        #[test]
        fn average_rank_invariant_to_increasing_maps(x in tied_vec()) {
            let y: Vec<f64> = x.iter().map(|v| (v * 0.3).exp() + 7.0).collect();
            prop_assert_eq!(
                pit(&x, &model(&x), TiePolicy::AverageRank, 0).values,
                pit(&y, &model(&y), TiePolicy::AverageRank, 0).values
            );
        }

        #[test]
        fn jitter_stays_within_rank_interval_of_average(x in tied_vec(), seed in any::<u64>()) {
            let m = model(&x);
            let a = pit(&x, &m, TiePolicy::AverageRank, 0).values;
            let j = pit(&x, &m, TiePolicy::Jitter, seed).values;
            let k_max = x.len() as f64;
            for (ai, ji) in a.iter().zip(&j) {
                // distance bounded by half the tie width
                prop_assert!((ai - ji).abs() <= 0.5 * k_max / (x.len() + 1) as f64);
            }
        }

        #[test]
        fn inverse_pit_recovers_tie_free_values(x in prop::collection::hash_set(-500i32..500, 1..60)) {
            let x: Vec<f64> = x.into_iter().map(f64::from).collect();
            let m = model(&x);
            let u = pit(&x, &m, TiePolicy::AverageRank, 0).values;
            prop_assert_eq!(inverse_pit(&u, &m), x);
        }
    }
}
