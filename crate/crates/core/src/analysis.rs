//! Reports built on fitted vines: C-vine centrality rankings, first-tree hub
//! clusters and co-morbidity clusters of binary indicators.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bicop::{Family, Rotation};
use crate::error::{Error, Result};
use crate::ingest::{DataTable, VariableKind};
use crate::margins::{transform_table, PseudoObs, TiePolicy};
use crate::structure::{build_cvine_levels, build_rvine, dot_quote, FitSettings, VineStructure};

/// Smallest cohort accepted by [`conditioned_ranking`].
pub const DEFAULT_MIN_ROWS: usize = 200;

/// Default smallest first-tree degree of a reported hub.
pub const DEFAULT_MIN_DEGREE: usize = 3;

/// Indicators rarer than this are excluded from co-morbidity reports.
pub const MIN_PREVALENCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborTau {
    pub variable: String,
    pub tau: f64,
}

/// The centre chosen at one C-vine level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterLevel {
    pub level: usize,
    pub center: String,
    /// Full node label: conditioned set and conditioning set.
    pub node: String,
    pub conditioning: Vec<String>,
    pub score: f64,
    pub neighbors: Vec<NeighborTau>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityRanking {
    pub n: usize,
    pub variables: Vec<String>,
    pub levels: Vec<CenterLevel>,
}

impl CentralityRanking {
    pub fn centers(&self) -> Vec<&str> {
        self.levels.iter().map(|l| l.center.as_str()).collect()
    }

    /// Plain-text table, one line per level.
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<6} {:<16} {:>8}  {}\n", "level", "center", "score", "node");
        for l in &self.levels {
            let _ = writeln!(out, "{:<6} {:<16} {:>8.4}  {}", l.level, l.center, l.score, l.node);
        }
        out
    }
}

/// Orders variables by C-vine centrality: the centres of the first `levels`
/// trees with their sum-of-|tau| scores.
pub fn rank_central_variables(u: &PseudoObs, levels: usize, settings: &FitSettings) -> Result<CentralityRanking> {
    if levels == 0 || levels + 1 > u.d() {
        return Err(Error::Data(format!(
            "levels must be between 1 and {} for {} variables, got {levels}",
            u.d().saturating_sub(1),
            u.d()
        )));
    }
    let s = build_cvine_levels(u, settings, Some(levels))?;
    let names = u.names();
    let mut conditioning: Vec<String> = Vec::new();
    let levels = s
        .centers
        .iter()
        .map(|c| {
            let level = CenterLevel {
                level: c.level,
                center: names[c.variable].clone(),
                node: c.node.clone(),
                conditioning: conditioning.clone(),
                score: c.score,
                neighbors: c
                    .neighbors
                    .iter()
                    .map(|&(v, tau)| NeighborTau {
                        variable: names[v].clone(),
                        tau,
                    })
                    .collect(),
            };
            conditioning.push(names[c.variable].clone());
            level
        })
        .collect();
    Ok(CentralityRanking {
        n: u.n(),
        variables: names.to_vec(),
        levels,
    })
}

/// Pipeline settings for table-level analyses.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOptions {
    pub levels: usize,
    pub settings: FitSettings,
    pub tie_policy: TiePolicy,
    pub seed: u64,
    pub min_rows: usize,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions {
            levels: 6,
            settings: FitSettings::default(),
            tie_policy: TiePolicy::Jitter,
            seed: 0,
            min_rows: DEFAULT_MIN_ROWS,
        }
    }
}

/// Margins then ranking on a fully observed table; `levels` is capped at d-1.
pub fn rank_table(t: &DataTable, opts: &RankOptions) -> Result<CentralityRanking> {
    let tr = transform_table(t, opts.tie_policy, opts.seed)?;
    let levels = opts.levels.min(t.n_cols().saturating_sub(1));
    rank_central_variables(&tr.pseudo_obs, levels, &opts.settings)
}

/// `variable=value` row filter. Values match the numeric code or, for
/// relabelled binary columns, the original label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub variable: String,
    pub value: String,
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (var, value) = s
            .split_once('=')
            .ok_or_else(|| format!("condition {s:?} is not of the form variable=value"))?;
        let (var, value) = (var.trim(), value.trim());
        if var.is_empty() || value.is_empty() {
            return Err(format!("condition {s:?} has an empty side"));
        }
        Ok(Condition {
            variable: var.to_string(),
            value: value.to_string(),
        })
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}={}", self.variable, self.value)
    }
}

impl Condition {
    fn code(&self, t: &DataTable) -> Result<(usize, f64)> {
        let j = t
            .columns()
            .iter()
            .position(|c| c.name() == self.variable)
            .ok_or_else(|| Error::Schema(format!("condition variable {} not in table", self.variable)))?;
        let col = &t.columns()[j];
        if let Some(k) = col.levels.iter().position(|l| *l == self.value) {
            return Ok((j, k as f64));
        }
        let x = self
            .value
            .parse::<f64>()
            .map_err(|_| Error::Data(format!("condition value {:?} is not a value of {}", self.value, self.variable)))?;
        Ok((j, x))
    }
}

/// Rows matching every condition.
pub fn filter_conditions(t: &DataTable, conditions: &[Condition]) -> Result<DataTable> {
    let codes = conditions.iter().map(|c| c.code(t)).collect::<Result<Vec<_>>>()?;
    Ok(t.filter_rows(|i| codes.iter().all(|&(j, x)| t.columns()[j].values[i] == Some(x))))
}

/// Ranking within the cohort defined by `conditions`; the conditioning
/// variables are dropped because they are constant inside the cohort.
pub fn conditioned_ranking(t: &DataTable, conditions: &[Condition], opts: &RankOptions) -> Result<CentralityRanking> {
    let subset = filter_conditions(t, conditions)?;
    if subset.n_rows() < opts.min_rows {
        let desc: Vec<String> = conditions.iter().map(Condition::to_string).collect();
        return Err(Error::Data(format!(
            "cohort {} has {} rows, fewer than the required {}",
            desc.join(","),
            subset.n_rows(),
            opts.min_rows
        )));
    }
    let keep: Vec<String> = t
        .names()
        .into_iter()
        .filter(|n| !conditions.iter().any(|c| c.variable == *n))
        .collect();
    rank_table(&subset.select(&keep)?, opts)
}

/// Rankings under both tie policies and the number of levels whose centres agree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TieSensitivity {
    pub jitter: CentralityRanking,
    pub average_rank: CentralityRanking,
    pub agreeing_levels: usize,
}

pub fn tie_sensitivity(t: &DataTable, opts: &RankOptions) -> Result<TieSensitivity> {
    let jitter = rank_table(
        t,
        &RankOptions {
            tie_policy: TiePolicy::Jitter,
            ..opts.clone()
        },
    )?;
    let average_rank = rank_table(
        t,
        &RankOptions {
            tie_policy: TiePolicy::AverageRank,
            ..opts.clone()
        },
    )?;
    let agreeing_levels = jitter
        .levels
        .iter()
        .zip(&average_rank.levels)
        .filter(|(a, b)| a.center == b.center)
        .count();
    Ok(TieSensitivity {
        jitter,
        average_rank,
        agreeing_levels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterNeighbor {
    pub variable: String,
    pub family: Option<Family>,
    pub rotation: Option<Rotation>,
    pub params: Vec<f64>,
    /// Sample Kendall's tau of the edge.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hub {
    pub variable: String,
    pub degree: usize,
    pub tau_sum: f64,
    pub neighbors: Vec<ClusterNeighbor>,
}

impl Hub {
    /// Star subgraph of the hub in DOT.
    pub fn to_dot(&self) -> String {
        let mut out = format!("graph {} {{\n", dot_quote(&format!("hub_{}", self.variable)));
        let _ = writeln!(out, "  {} [shape=box];", dot_quote(&self.variable));
        for n in &self.neighbors {
            let label = match n.family {
                Some(f) => format!("{f} tau={:.3}", n.tau),
                None => format!("tau={:.3}", n.tau),
            };
            let _ = writeln!(
                out,
                "  {} -- {} [label={}];",
                dot_quote(&self.variable),
                dot_quote(&n.variable),
                dot_quote(&label)
            );
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub min_degree: usize,
    pub hubs: Vec<Hub>,
}

impl ClusterReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("hubs with first-tree degree >= {}\n", self.min_degree);
        for h in &self.hubs {
            let ns: Vec<String> = h.neighbors.iter().map(|n| format!("{} ({:+.3})", n.variable, n.tau)).collect();
            let _ = writeln!(out, "{} [degree {}, sum|tau| {:.4}]: {}", h.variable, h.degree, h.tau_sum, ns.join(", "));
        }
        out
    }
}

/// Hubs of the first tree: nodes of degree at least `min_degree` with their
/// neighbours, sorted by degree, then sum of |tau|, then name.
pub fn extract_clusters(s: &VineStructure, min_degree: usize) -> ClusterReport {
    let deg = s.first_tree_degrees();
    let first = s.trees.first().map(Vec::as_slice).unwrap_or(&[]);
    let mut hubs: Vec<Hub> = (0..s.d)
        .filter(|&v| deg[v] >= min_degree.max(1))
        .map(|v| {
            let neighbors: Vec<ClusterNeighbor> = first
                .iter()
                .filter_map(|e| e.partner(v).map(|w| (e, w)))
                .map(|(e, w)| ClusterNeighbor {
                    variable: s.names[w].clone(),
                    family: e.spec.as_ref().map(|sp| sp.family()),
                    rotation: e.spec.as_ref().map(|sp| sp.rotation()),
                    params: e.spec.as_ref().map_or_else(Vec::new, |sp| sp.params().to_vec()),
                    tau: e.spec.as_ref().map_or(e.weight, |sp| sp.tau),
                })
                .collect();
            Hub {
                variable: s.names[v].clone(),
                degree: deg[v],
                tau_sum: neighbors.iter().map(|n| n.tau.abs()).sum(),
                neighbors,
            }
        })
        .collect();
    hubs.sort_by(|a, b| {
        b.degree
            .cmp(&a.degree)
            .then_with(|| b.tau_sum.total_cmp(&a.tau_sum))
            .then_with(|| a.variable.cmp(&b.variable))
    });
    ClusterReport { min_degree, hubs }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedIndicator {
    pub variable: String,
    pub prevalence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComorbidityReport {
    pub excluded: Vec<ExcludedIndicator>,
    pub clusters: ClusterReport,
    pub structure: VineStructure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComorbidityOptions {
    pub settings: FitSettings,
    pub tie_policy: TiePolicy,
    pub seed: u64,
    pub min_degree: usize,
    pub min_prevalence: f64,
}

impl Default for ComorbidityOptions {
    fn default() -> Self {
        ComorbidityOptions {
            settings: FitSettings::default(),
            tie_policy: TiePolicy::Jitter,
            seed: 0,
            min_degree: DEFAULT_MIN_DEGREE,
            min_prevalence: MIN_PREVALENCE,
        }
    }
}

/// Fraction of ones among the observed cells of a binary column.
pub fn prevalence(t: &DataTable, name: &str) -> Result<f64> {
    let col = t
        .column(name)
        .ok_or_else(|| Error::Schema(format!("variable {name} not in table")))?;
    let obs = col.observed();
    if obs.is_empty() {
        return Err(Error::Data(format!("indicator {name} has no observed values")));
    }
    Ok(obs.iter().filter(|&&x| x == 1.0).count() as f64 / obs.len() as f64)
}

/// R-vine on indicators and covariates; its first-tree hubs are the
/// co-occurrence clusters. Rare indicators are excluded and reported.
pub fn comorbidity_report(
    t: &DataTable,
    indicators: &[String],
    covariates: &[String],
    opts: &ComorbidityOptions,
) -> Result<ComorbidityReport> {
    let mut keep = Vec::new();
    let mut excluded = Vec::new();
    for name in indicators {
        let col = t
            .column(name)
            .ok_or_else(|| Error::Schema(format!("indicator {name} not in table")))?;
        if col.meta.kind != VariableKind::Binary {
            return Err(Error::Schema(format!("indicator {name} is not binary")));
        }
        let p = prevalence(t, name)?;
        if p < opts.min_prevalence {
            log::warn!("indicator {name} excluded: prevalence {p:.4} below {}", opts.min_prevalence);
            excluded.push(ExcludedIndicator {
                variable: name.clone(),
                prevalence: p,
            });
        } else {
            keep.push(name.clone());
        }
    }
    for name in covariates {
        let col = t
            .column(name)
            .ok_or_else(|| Error::Schema(format!("covariate {name} not in table")))?;
        if col.meta.kind == VariableKind::Binary {
            return Err(Error::Schema(format!("covariate {name} must be continuous or ordinal")));
        }
        keep.push(name.clone());
    }
    if keep.len() < 2 {
        return Err(Error::Data(format!(
            "co-morbidity analysis needs at least two variables after exclusions, got {}",
            keep.len()
        )));
    }
    let tr = transform_table(&t.select(&keep)?, opts.tie_policy, opts.seed)?;
    let structure = build_rvine(&tr.pseudo_obs, &opts.settings)?;
    Ok(ComorbidityReport {
        excluded,
        clusters: extract_clusters(&structure, opts.min_degree),
        structure,
    })
}
