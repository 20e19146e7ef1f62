//! Whole-vine likelihood accounting and the conditional pseudo-observation
//! recursion shared by fitting, evaluation and refitting.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bicop::{criteria, fit_with_tau, select_family_with_tau, BicopSpec, CondOn, SelectionSettings, EPS};
use crate::dependence::kendall_tau;
use crate::error::{Error, Result};
use crate::ingest::CurationLog;
use crate::margins::{MarginalModel, PseudoObs, TiePolicy};
use crate::structure::{
    build_cvine, build_dvine, build_rvine, validate_structure, FitSettings, VineEdge, VineKind, VineStructure,
};

/// Version of the model JSON layout.
pub const MODEL_VERSION: u32 = 1;

/// Scale of the reported log-likelihood: rank-based margins contribute a
/// constant, so only the copula terms are counted.
pub const LOGLIK_SCALE: &str = "copula";

/// A fully fitted vine with its margins and fit metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedVine {
    pub version: u32,
    pub structure: VineStructure,
    pub marginals: Vec<MarginalModel>,
    /// Original labels of relabelled binary columns (empty otherwise).
    #[serde(default)]
    pub levels: Vec<Vec<String>>,
    pub n: usize,
    pub n_params: usize,
    pub loglik: f64,
    pub loglik_scale: String,
    pub aic: f64,
    pub bic: f64,
    pub seed: u64,
    pub tie_policy: TiePolicy,
    pub settings: FitSettings,
    #[serde(default)]
    pub curation_log: Option<CurationLog>,
}

impl FittedVine {
    /// Wraps a fitted structure; the log-likelihood is the sum of the edge
    /// log-likelihoods recorded during fitting.
    pub fn new(
        structure: VineStructure,
        marginals: Vec<MarginalModel>,
        n: usize,
        seed: u64,
        tie_policy: TiePolicy,
        settings: FitSettings,
    ) -> Result<Self> {
        if !structure.is_fitted() {
            return Err(Error::Structure("every edge needs a fitted copula".into()));
        }
        if !marginals.is_empty() && marginals.len() != structure.d {
            return Err(Error::Structure(format!(
                "{} marginals for {} variables",
                marginals.len(),
                structure.d
            )));
        }
        let mut fv = FittedVine {
            version: MODEL_VERSION,
            levels: vec![Vec::new(); structure.d],
            structure,
            marginals,
            n,
            n_params: 0,
            loglik: 0.0,
            loglik_scale: LOGLIK_SCALE.to_string(),
            aic: 0.0,
            bic: 0.0,
            seed,
            tie_policy,
            settings,
            curation_log: None,
        };
        fv.n_params = param_count(&fv.structure);
        fv.loglik = fv.structure.edges().map(|e| e.spec.as_ref().map_or(0.0, |s| s.loglik)).sum();
        (fv.aic, fv.bic) = model_criteria(&fv);
        Ok(fv)
    }

    pub fn d(&self) -> usize {
        self.structure.d
    }

    pub fn names(&self) -> &[String] {
        &self.structure.names
    }

    /// Parses and checks a model JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let fv: FittedVine = serde_json::from_str(text)?;
        if fv.version != MODEL_VERSION {
            return Err(Error::Schema(format!(
                "model version {} is not supported (expected {MODEL_VERSION})",
                fv.version
            )));
        }
        let diag = validate_structure(&fv.structure);
        if !diag.ok() {
            return Err(Error::Schema(diag.violations.join("; ")));
        }
        if !fv.structure.is_fitted() {
            return Err(Error::Schema("model has edges without a copula".into()));
        }
        Ok(fv)
    }

    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string(self)
    }
}

/// Total number of copula parameters.
pub fn param_count(s: &VineStructure) -> usize {
    s.edges().map(|e| e.spec.as_ref().map_or(0, BicopSpec::param_count)).sum()
}

/// `(aic, bic)` from the stored log-likelihood and total parameter count.
pub fn model_criteria(fv: &FittedVine) -> (f64, f64) {
    criteria(param_count(&fv.structure), fv.loglik, fv.n)
}

fn clamp_open(x: f64) -> f64 {
    x.clamp(EPS, 1.0 - EPS)
}

/// `(u_{a|D,b}, u_{b|D,a})` for an edge with copula arguments `(x, y)`.
pub(crate) fn h_outputs(spec: &BicopSpec, x: &[f64], y: &[f64]) -> (Arc<Vec<f64>>, Arc<Vec<f64>>) {
    let hx = x
        .par_iter()
        .zip(y)
        .map(|(&a, &b)| clamp_open(spec.hfunc(a, b, CondOn::Second)))
        .collect();
    let hy = x
        .par_iter()
        .zip(y)
        .map(|(&a, &b)| clamp_open(spec.hfunc(a, b, CondOn::First)))
        .collect();
    (Arc::new(hx), Arc::new(hy))
}

/// Pseudo-observations for the next tree: `u_left` belongs to the smaller
/// conditioned variable, `u_right` to the larger.
pub fn conditional_pseudo_obs(edge: &VineEdge, u_left: &[f64], u_right: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let spec = edge.spec.as_ref().ok_or_else(|| {
        Error::Structure(format!(
            "edge {:?}|{:?} has no fitted copula",
            edge.conditioned, edge.conditioning
        ))
    })?;
    if u_left.len() != u_right.len() {
        return Err(Error::Data("conditional inputs differ in length".into()));
    }
    let (a, b) = h_outputs(spec, u_left, u_right);
    Ok((a.as_ref().clone(), b.as_ref().clone()))
}

type Key = (Vec<usize>, usize);

fn key(conditioning: &[usize], var: usize) -> Key {
    let mut u = conditioning.to_vec();
    u.push(var);
    u.sort_unstable();
    (u, var)
}

/// Walks the trees level by level. `visit` receives each edge with its two
/// copula arguments and returns the copula used to produce the next level's
/// pseudo-observations plus a per-edge result.
fn propagate<T, F>(s: &VineStructure, u: &PseudoObs, visit: F) -> Result<Vec<Vec<T>>>
where
    T: Send,
    F: Fn(&VineEdge, &[f64], &[f64]) -> Result<(BicopSpec, T)> + Sync,
{
    if u.d() != s.d {
        return Err(Error::Data(format!(
            "data has {} columns, model has {} variables",
            u.d(),
            s.d
        )));
    }
    let mut current: HashMap<Key, Arc<Vec<f64>>> =
        (0..s.d).map(|j| ((vec![j], j), Arc::new(u.column(j).to_vec()))).collect();
    let mut out = Vec::with_capacity(s.trees.len());
    for (m0, tree) in s.trees.iter().enumerate() {
        let last = m0 + 1 == s.trees.len();
        let results = tree
            .par_iter()
            .map(|e| {
                let [a, b] = e.conditioned;
                let lookup = |v| {
                    current.get(&key(&e.conditioning, v)).cloned().ok_or_else(|| {
                        Error::Structure(format!("edge {:?}|{:?} has no input for {v}", e.conditioned, e.conditioning))
                    })
                };
                let (x, y) = (lookup(a)?, lookup(b)?);
                let (spec, t) = visit(e, &x, &y)?;
                let outputs = if last { None } else { Some(h_outputs(&spec, &x, &y)) };
                Ok((t, outputs))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut next = HashMap::new();
        let mut level = Vec::with_capacity(results.len());
        for (e, (t, outputs)) in tree.iter().zip(results) {
            if let Some((hx, hy)) = outputs {
                let mut cond = e.conditioning.clone();
                cond.push(e.conditioned[1]);
                next.insert(key(&cond, e.conditioned[0]), hx);
                let mut cond = e.conditioning.clone();
                cond.push(e.conditioned[0]);
                next.insert(key(&cond, e.conditioned[1]), hy);
            }
            level.push(t);
        }
        current = next;
        out.push(level);
    }
    Ok(out)
}

fn fitted_spec(e: &VineEdge) -> Result<&BicopSpec> {
    e.spec.as_ref().ok_or_else(|| {
        Error::Structure(format!("edge {:?}|{:?} has no fitted copula", e.conditioned, e.conditioning))
    })
}

/// Per-row log-density of one edge, rows in parallel.
fn edge_log_densities(spec: &BicopSpec, x: &[f64], y: &[f64]) -> Vec<f64> {
    if spec.family() == crate::bicop::Family::Independence {
        return vec![0.0; x.len()];
    }
    x.par_iter().zip(y).map(|(&a, &b)| spec.log_pdf(a, b)).collect()
}

/// Log-likelihood of every edge on `u`, tree by tree.
pub fn edge_logliks(s: &VineStructure, u: &PseudoObs) -> Result<Vec<Vec<f64>>> {
    propagate(s, u, |e, x, y| {
        let spec = fitted_spec(e)?;
        // summed in row order so the result does not depend on thread count
        let ll: f64 = edge_log_densities(spec, x, y).iter().sum();
        Ok((spec.clone(), ll))
    })
}

/// Sum over rows and edges of the pair-copula log-densities.
pub fn vine_loglik(fv: &FittedVine, u: &PseudoObs) -> Result<f64> {
    Ok(edge_logliks(&fv.structure, u)?.iter().flatten().sum())
}

/// Log copula density of every row.
pub fn log_density(s: &VineStructure, u: &PseudoObs) -> Result<Vec<f64>> {
    let per_edge = propagate(s, u, |e, x, y| {
        let spec = fitted_spec(e)?;
        Ok((spec.clone(), edge_log_densities(spec, x, y)))
    })?;
    let mut total = vec![0.0; u.n()];
    for ld in per_edge.iter().flatten() {
        for (t, v) in total.iter_mut().zip(ld) {
            *t += v;
        }
    }
    Ok(total)
}

/// How [`refit`] treats the copula families of a fixed structure.
#[derive(Debug, Clone, PartialEq)]
pub enum RefitMode {
    /// Re-estimate parameters of the stored family and rotation.
    KeepFamilies,
    /// Run family selection again on every edge.
    Select(SelectionSettings),
}

/// Re-estimates the copulas of a fixed structure on new data.
pub fn refit(s: &VineStructure, u: &PseudoObs, mode: &RefitMode) -> Result<VineStructure> {
    let specs = propagate(s, u, |e, x, y| {
        let tau = kendall_tau(x, y)?;
        let spec = match mode {
            RefitMode::KeepFamilies => {
                let old = fitted_spec(e)?;
                fit_with_tau(old.family(), old.rotation(), x, y, tau)?
            }
            RefitMode::Select(settings) => select_family_with_tau(x, y, tau, settings)?,
        };
        Ok((spec.clone(), spec))
    })?;
    let mut out = s.clone();
    for (tree, level) in out.trees.iter_mut().zip(specs) {
        for (e, spec) in tree.iter_mut().zip(level) {
            e.weight = spec.tau.abs();
            e.spec = Some(spec);
        }
    }
    Ok(out)
}

/// Builds and fits a vine of the requested kind. `order` is used by D-vines
/// only and defaults to the column order.
pub fn fit_structure(u: &PseudoObs, kind: VineKind, order: Option<&[usize]>, settings: &FitSettings) -> Result<VineStructure> {
    match kind {
        VineKind::Rvine => build_rvine(u, settings),
        VineKind::Cvine => build_cvine(u, settings),
        VineKind::Dvine => {
            let default: Vec<usize> = (0..u.d()).collect();
            build_dvine(u, order.unwrap_or(&default), settings)
        }
    }
}

#[cfg(test)]
mod tests;
