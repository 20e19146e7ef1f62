//! Simulation from a fitted vine by the inverse Rosenblatt transform.
//!
//! The sampling order is found by peeling: a conditioned variable of the top
//! edge that appears in exactly one edge per tree, and in no conditioning
//! set, can be removed together with those edges, leaving a smaller vine.
//! Variables are then simulated in reverse peeling order.

use std::collections::HashMap;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bicop::{BicopSpec, CondOn, EPS};
use crate::error::{Error, Result};
use crate::margins::{inverse_pit, PseudoObs};
use crate::structure::{cond_on_partner, first_arg, VineEdge, VineStructure};
use crate::vinefit::FittedVine;

/// Rows per random stream.
pub const BLOCK_ROWS: usize = 1024;

/// Identity of the random source, recorded with every batch.
pub const GENERATOR: &str = "chacha8, one stream per 1024-row block";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleBatch {
    pub names: Vec<String>,
    /// Column-major uniforms.
    pub uniforms: Vec<Vec<f64>>,
    /// Column-major values on the data scale, when requested.
    pub data_scale: Option<Vec<Vec<f64>>>,
    pub seed: u64,
    pub generator: String,
}

impl SampleBatch {
    pub fn n(&self) -> usize {
        self.uniforms.first().map_or(0, Vec::len)
    }

    pub fn d(&self) -> usize {
        self.uniforms.len()
    }

    pub fn pseudo_obs(&self) -> Result<PseudoObs> {
        PseudoObs::new(self.uniforms.clone(), self.names.clone())
    }
}

#[derive(Debug, Clone)]
struct EdgeStep {
    spec: BicopSpec,
    on: CondOn,
    self_first: bool,
    /// Slot of `u_{a|D}`.
    self_in: usize,
    /// Slot of `u_{b|D}`.
    partner_in: usize,
    /// Slot of `u_{a|D,b}`.
    self_out: usize,
    /// Slot of `u_{b|D,a}`.
    partner_out: usize,
}

#[derive(Debug, Clone)]
struct VarStep {
    var: usize,
    base: usize,
    /// Edges holding `var` as conditioned variable, top tree first.
    edges: Vec<EdgeStep>,
}

/// Precomputed simulation order and scratch layout for one structure.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    d: usize,
    steps: Vec<VarStep>,
    n_slots: usize,
}

fn var_key(conditioning: &[usize], var: usize) -> (Vec<usize>, usize) {
    let mut u = conditioning.to_vec();
    u.push(var);
    u.sort_unstable();
    (u, var)
}

impl SamplingPlan {
    pub fn new(s: &VineStructure) -> Result<Self> {
        if s.d == 0 {
            return Err(Error::Structure("cannot sample a vine without variables".into()));
        }
        let all: Vec<&VineEdge> = s.edges().collect();
        if all.iter().any(|e| e.spec.is_none()) {
            return Err(Error::Structure("sampling needs a copula on every edge".into()));
        }
        let mut remaining: Vec<bool> = vec![true; all.len()];
        let mut vars: Vec<usize> = (0..s.d).collect();
        let mut peeled: Vec<(usize, Vec<usize>)> = Vec::with_capacity(s.d);
        while vars.len() > 1 {
            let k = vars.len();
            let top: Vec<usize> = (0..all.len()).filter(|&i| remaining[i] && all[i].level == k - 1).collect();
            if top.len() != 1 {
                return Err(Error::Structure(format!("tree {} does not have a single edge", k - 1)));
            }
            let pick = all[top[0]].conditioned.iter().find_map(|&a| {
                let mut owned = Vec::with_capacity(k - 1);
                for m in 1..k {
                    let hits: Vec<usize> = (0..all.len())
                        .filter(|&i| remaining[i] && all[i].level == m && all[i].conditioned.contains(&a))
                        .collect();
                    if hits.len() != 1 {
                        return None;
                    }
                    owned.push(hits[0]);
                }
                let in_conditioning = (0..all.len()).any(|i| remaining[i] && all[i].conditioning.contains(&a));
                (!in_conditioning).then_some((a, owned))
            });
            let (a, owned) = pick.ok_or_else(|| {
                Error::Structure(format!("no variable can be peeled from the tree-{} edge", k - 1))
            })?;
            for &i in &owned {
                remaining[i] = false;
            }
            vars.retain(|&v| v != a);
            peeled.push((a, owned));
        }
        peeled.push((vars[0], Vec::new()));
        peeled.reverse();

        let mut slots: HashMap<(Vec<usize>, usize), usize> = HashMap::new();
        let slot = |k: (Vec<usize>, usize), slots: &mut HashMap<_, usize>| {
            let n = slots.len();
            *slots.entry(k).or_insert(n)
        };
        let mut available = std::collections::HashSet::new();
        let mut steps = Vec::with_capacity(s.d);
        for (a, owned) in peeled {
            let base = slot(var_key(&[], a), &mut slots);
            let mut edges = Vec::with_capacity(owned.len());
            // top tree first
            for &i in owned.iter().rev() {
                let e = all[i];
                let b = e.partner(a).expect("owned edge holds the variable");
                let partner_key = var_key(&e.conditioning, b);
                if !available.contains(&partner_key) {
                    return Err(Error::Structure(format!(
                        "edge {:?}|{:?} needs a value not yet simulated",
                        e.conditioned, e.conditioning
                    )));
                }
                let mut with_b = e.conditioning.clone();
                with_b.push(b);
                let mut with_a = e.conditioning.clone();
                with_a.push(a);
                edges.push(EdgeStep {
                    spec: e.spec.clone().expect("checked above"),
                    on: cond_on_partner(e, a),
                    self_first: first_arg(e, a),
                    self_in: slot(var_key(&e.conditioning, a), &mut slots),
                    partner_in: slot(partner_key, &mut slots),
                    self_out: slot(var_key(&with_b, a), &mut slots),
                    partner_out: slot(var_key(&with_a, b), &mut slots),
                });
            }
            available.insert(var_key(&[], a));
            for &i in &owned {
                let e = all[i];
                let b = e.partner(a).expect("owned edge holds the variable");
                let mut with_b = e.conditioning.clone();
                with_b.push(b);
                let mut with_a = e.conditioning.clone();
                with_a.push(a);
                available.insert(var_key(&with_b, a));
                available.insert(var_key(&with_a, b));
            }
            steps.push(VarStep { var: a, base, edges });
        }
        Ok(SamplingPlan {
            d: s.d,
            steps,
            n_slots: slots.len(),
        })
    }

    /// Simulation order of the variables.
    pub fn order(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.var).collect()
    }

    /// Maps independent uniforms `w` (in plan order) to one vine row, indexed
    /// by variable.
    pub fn transform_row(&self, w: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
        scratch.clear();
        scratch.resize(self.n_slots, f64::NAN);
        for (step, &wi) in self.steps.iter().zip(w) {
            let mut cur = wi;
            for es in &step.edges {
                scratch[es.self_out] = cur;
                cur = es.spec.hinv(cur, scratch[es.partner_in], es.on).clamp(EPS, 1.0 - EPS);
                scratch[es.self_in] = cur;
            }
            scratch[step.base] = cur;
            for es in &step.edges {
                let (ua, ub) = (scratch[es.self_in], scratch[es.partner_in]);
                let hb = if es.self_first {
                    es.spec.hfunc(ua, ub, CondOn::First)
                } else {
                    es.spec.hfunc(ub, ua, CondOn::Second)
                };
                scratch[es.partner_out] = hb.clamp(EPS, 1.0 - EPS);
            }
            out[step.var] = cur;
        }
    }
}

/// Simulates `n` rows of the copula. Rows are grouped in blocks of
/// [`BLOCK_ROWS`], each drawing from its own ChaCha8 stream, so results do not
/// depend on the thread count.
pub fn sample_uniform(fv: &FittedVine, n: usize, seed: u64) -> Result<SampleBatch> {
    sample_structure(&fv.structure, n, seed)
}

pub fn sample_structure(s: &VineStructure, n: usize, seed: u64) -> Result<SampleBatch> {
    let plan = SamplingPlan::new(s)?;
    let d = plan.d;
    let n_blocks = n.div_ceil(BLOCK_ROWS);
    let blocks: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let rows = BLOCK_ROWS.min(n - b * BLOCK_ROWS);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut scratch = Vec::new();
            let mut w = vec![0.0; d];
            let mut out = vec![0.0; rows * d];
            for r in 0..rows {
                for x in w.iter_mut() {
                    *x = rng.sample(Open01);
                }
                plan.transform_row(&w, &mut scratch, &mut out[r * d..(r + 1) * d]);
            }
            out
        })
        .collect();
    let mut uniforms = vec![Vec::with_capacity(n); d];
    for block in &blocks {
        for row in block.chunks_exact(d) {
            for (col, &x) in uniforms.iter_mut().zip(row) {
                col.push(x);
            }
        }
    }
    if let Some((j, _)) = uniforms
        .iter()
        .enumerate()
        .find(|(_, c)| c.iter().any(|x| !x.is_finite()))
    {
        return Err(Error::Numeric(format!("sampling produced non-finite values for {}", s.names[j])));
    }
    Ok(SampleBatch {
        names: s.names.clone(),
        uniforms,
        data_scale: None,
        seed,
        generator: GENERATOR.to_string(),
    })
}

/// [`sample_uniform`] pushed through each margin's empirical quantile.
pub fn sample_data_scale(fv: &FittedVine, n: usize, seed: u64) -> Result<SampleBatch> {
    if fv.marginals.len() != fv.d() {
        return Err(Error::Structure("model has no marginals for data-scale sampling".into()));
    }
    let mut batch = sample_uniform(fv, n, seed)?;
    let data = batch
        .uniforms
        .par_iter()
        .zip(&fv.marginals)
        .map(|(u, m)| inverse_pit(u, m))
        .collect();
    batch.data_scale = Some(data);
    Ok(batch)
}

/// Kolmogorov-Smirnov distance between a sample and the uniform law.
pub fn ks_uniform(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
