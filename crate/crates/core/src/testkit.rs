//! Helpers for simulating data from hand-specified vines in unit tests.

use crate::bicop::{BicopSpec, Copula, Family, Rotation};
use crate::margins::PseudoObs;
use crate::sample::sample_structure;
use crate::structure::{structure_from_edges, with_copulas, VineKind, VineStructure};

pub type EdgeDef = (usize, usize, Vec<usize>, Copula);

pub fn names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("X{j}")).collect()
}

pub fn cop(family: Family, params: &[f64]) -> Copula {
    Copula::new(family, Rotation::R0, params).unwrap()
}

pub fn gauss(rho: f64) -> Copula {
    cop(Family::Gaussian, &[rho])
}

pub fn indep() -> Copula {
    Copula::independence()
}

/// Gaussian copula with the given Kendall's tau.
pub fn gauss_tau(tau: f64) -> Copula {
    gauss((std::f64::consts::FRAC_PI_2 * tau).sin())
}

pub fn vine(kind: VineKind, d: usize, trees: Vec<Vec<EdgeDef>>) -> VineStructure {
    let mut specs = Vec::new();
    let shape = trees
        .into_iter()
        .map(|t| {
            t.into_iter()
                .map(|(a, b, cond, c)| {
                    specs.push(BicopSpec::from_fit(c, 0.0, c.tau(), 0, true));
                    (a, b, cond)
                })
                .collect()
        })
        .collect();
    with_copulas(structure_from_edges(names(d), kind, shape).unwrap(), specs).unwrap()
}

pub fn draw(s: &VineStructure, n: usize, seed: u64) -> PseudoObs {
    sample_structure(s, n, seed).unwrap().pseudo_obs().unwrap()
}

/// Markov chain X1 - X2 - ... - Xd with Gaussian links of the given tau.
pub fn chain(d: usize, tau: f64) -> VineStructure {
    let mut trees = Vec::new();
    for m in 1..d {
        let t = (0..d - m)
            .map(|i| {
                let c = if m == 1 { gauss_tau(tau) } else { indep() };
                (i, i + m, (i + 1..i + m).collect(), c)
            })
            .collect();
        trees.push(t);
    }
    vine(VineKind::Dvine, d, trees)
}

/// C-vine whose first centre is variable 0, linked to all others with
/// `tau`; everything else is conditionally independent.
pub fn hub(d: usize, tau: f64) -> VineStructure {
    let mut trees = Vec::new();
    for m in 1..d {
        let centre = m - 1;
        let t = (m..d)
            .map(|j| {
                let c = if m == 1 { gauss_tau(tau) } else { indep() };
                (centre, j, (0..centre).collect(), c)
            })
            .collect();
        trees.push(t);
    }
    vine(VineKind::Cvine, d, trees)
}
