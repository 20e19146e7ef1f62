//! Maximum-likelihood estimation started from tau inversion, and
//! information-criterion family selection.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::base::{student_const, student_log_pdf};
use super::{
    clamp01, loglik, max_abs_tau, tau_to_param, BicopSpec, Copula, Family, Rotation, CLAYTON_MAX, FRANK_MAX,
    GUMBEL_MAX, NU_MAX, NU_MIN,
};
use crate::dependence::kendall_tau;
use crate::error::{Error, Result};
use crate::special::{brent_minimize, norm_ppf, t_ppf};

/// Smallest sample accepted by the estimators.
pub const MIN_FIT_N: usize = 30;

const RHO_MAX: f64 = 0.9999;
const NU_GRID: [f64; 11] = [2.0, 2.5, 3.0, 4.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0, 50.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Aic,
    Bic,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
        })
    }
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => Err(format!("unknown criterion {other:?} (expected aic or bic)")),
        }
    }
}

/// Candidate families and the selection rule for one pair copula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSettings {
    pub families: Vec<Family>,
    pub criterion: Criterion,
    /// Independence joins the candidates when |tau| falls below this.
    pub independence_threshold: f64,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        SelectionSettings {
            families: vec![Family::Gaussian, Family::StudentT, Family::Clayton, Family::Frank],
            criterion: Criterion::Aic,
            independence_threshold: 0.02,
        }
    }
}

impl SelectionSettings {
    pub fn with_families(families: &[Family]) -> Self {
        SelectionSettings {
            families: families.to_vec(),
            ..Default::default()
        }
    }
}

fn check_sample(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::Data(format!("paired samples differ in length: {} vs {}", u.len(), v.len())));
    }
    if u.len() < MIN_FIT_N {
        return Err(Error::Data(format!(
            "copula estimation needs at least {MIN_FIT_N} observations, got {}",
            u.len()
        )));
    }
    Ok(())
}

pub fn fit(family: Family, rotation: Rotation, u: &[f64], v: &[f64]) -> Result<BicopSpec> {
    check_sample(u, v)?;
    let tau = kendall_tau(u, v)?;
    fit_with_tau(family, rotation, u, v, tau)
}

/// [`fit`] with the sample Kendall's tau already known.
pub fn fit_with_tau(family: Family, rotation: Rotation, u: &[f64], v: &[f64], tau: f64) -> Result<BicopSpec> {
    check_sample(u, v)?;
    let n = u.len();
    let u: Vec<f64> = u.iter().map(|&x| clamp01(x)).collect();
    let v: Vec<f64> = v.iter().map(|&x| clamp01(x)).collect();
    let (copula, ll, converged) = match family {
        Family::Independence => (Copula::independence(), 0.0, true),
        Family::Gaussian => fit_gaussian(&u, &v, tau)?,
        Family::StudentT => fit_student(&u, &v, tau)?,
        Family::Clayton | Family::Gumbel | Family::Frank => fit_one_param(family, rotation, &u, &v, tau)?,
    };
    if !ll.is_finite() {
        return Err(Error::Numeric(format!(
            "{family} fit produced a non-finite log-likelihood"
        )));
    }
    Ok(BicopSpec::from_fit(copula, ll, tau, n, converged))
}

fn rho_from_tau(tau: f64) -> f64 {
    (std::f64::consts::FRAC_PI_2 * tau).sin().clamp(-RHO_MAX, RHO_MAX)
}

fn fit_gaussian(u: &[f64], v: &[f64], tau: f64) -> Result<(Copula, f64, bool)> {
    // the log-likelihood only depends on three sums of normal scores
    let n = u.len() as f64;
    let (mut s2, mut sxy) = (0.0, 0.0);
    for (&a, &b) in u.iter().zip(v) {
        let (x, y) = (norm_ppf(a), norm_ppf(b));
        s2 += x * x + y * y;
        sxy += x * y;
    }
    let ll = |r: f64| {
        let q = 1.0 - r * r;
        -0.5 * n * q.ln() - (r * r * s2 - 2.0 * r * sxy) / (2.0 * q)
    };
    let r0 = rho_from_tau(tau);
    let m = brent_minimize(|r| -ll(r), -RHO_MAX, RHO_MAX, 1e-10, 200);
    let (r, conv) = if m.fx.is_finite() && -m.fx >= ll(r0) { (m.x, m.converged) } else { (r0, false) };
    Ok((Copula::new(Family::Gaussian, Rotation::R0, &[r])?, ll(r), conv))
}

struct StudentScores {
    nu: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    lconst: f64,
}

impl StudentScores {
    fn new(u: &[f64], v: &[f64], nu: f64) -> Self {
        let x = u.par_iter().map(|&a| t_ppf(a, nu)).collect();
        let y = v.par_iter().map(|&b| t_ppf(b, nu)).collect();
        StudentScores {
            nu,
            x,
            y,
            lconst: student_const(nu),
        }
    }

    fn loglik(&self, rho: f64) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(&a, &b)| student_log_pdf(rho, self.nu, self.lconst, a, b))
            .sum()
    }
}

/// Vertex of the parabola through three points, when it opens downward.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<f64> {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curv = (d2 - d1) / (x[2] - x[0]);
    (curv < 0.0).then(|| 0.5 * (x[0] + x[1]) - d1 / (2.0 * curv))
}

/// Profiles nu over a fixed grid at the tau-inversion rho, refines nu with one
/// parabolic step in log nu, then refines rho at the chosen nu.
fn fit_student(u: &[f64], v: &[f64], tau: f64) -> Result<(Copula, f64, bool)> {
    let r0 = rho_from_tau(tau);
    let grid: Vec<f64> = NU_GRID.iter().map(|&nu| StudentScores::new(u, v, nu).loglik(r0)).collect();
    let best = (0..grid.len())
        .max_by(|&a, &b| grid[a].total_cmp(&grid[b]).then(b.cmp(&a)))
        .expect("grid non-empty");
    let (mut nu, mut ll_nu) = (NU_GRID[best], grid[best]);
    if best > 0 && best + 1 < NU_GRID.len() {
        let x = [NU_GRID[best - 1].ln(), NU_GRID[best].ln(), NU_GRID[best + 1].ln()];
        let y = [grid[best - 1], grid[best], grid[best + 1]];
        if let Some(vx) = parabola_vertex(x, y) {
            let cand = vx.clamp(x[0], x[2]).exp();
            let ll = StudentScores::new(u, v, cand).loglik(r0);
            if ll > ll_nu {
                (nu, ll_nu) = (cand, ll);
            }
        }
    }
    let scores = StudentScores::new(u, v, nu.clamp(NU_MIN, NU_MAX));
    let r_lo = (r0 - 0.15).max(-RHO_MAX);
    let r_hi = (r0 + 0.15).min(RHO_MAX);
    let m_rho = brent_minimize(|r| -scores.loglik(r), r_lo, r_hi, 1e-8, 100);
    let (rho, ll, conv) = if -m_rho.fx >= ll_nu {
        (m_rho.x, -m_rho.fx, m_rho.converged)
    } else {
        (r0, ll_nu, false)
    };
    Ok((Copula::new(Family::StudentT, Rotation::R0, &[rho, scores.nu])?, ll, conv))
}

fn fit_one_param(family: Family, rotation: Rotation, u: &[f64], v: &[f64], tau: f64) -> Result<(Copula, f64, bool)> {
    if rotation != Rotation::R0 && !family.is_rotatable() {
        return Err(Error::Param {
            family: family.name().to_string(),
            detail: format!("rotation {} is not supported", rotation.degrees()),
        });
    }
    let base_tau = if rotation.is_negative() { -tau } else { tau };
    let (lo, hi) = match family {
        Family::Clayton => (1e-4, CLAYTON_MAX),
        Family::Gumbel => (1.0, GUMBEL_MAX),
        _ => (-FRANK_MAX, FRANK_MAX),
    };
    let cap = max_abs_tau(family) - 1e-9;
    let t0 = match family {
        Family::Frank if base_tau.abs() < 1e-6 => 1e-6_f64.copysign(base_tau),
        Family::Frank => base_tau.clamp(-cap, cap),
        _ => base_tau.clamp(1e-4, cap),
    };
    let th0 = tau_to_param(family, t0)?[0].clamp(lo, hi);
    let ll = |th: f64| match Copula::new(family, rotation, &[th]) {
        Ok(c) => loglik(&c, u, v),
        Err(_) => f64::NEG_INFINITY,
    };
    let l0 = ll(th0);
    let m = brent_minimize(|th| -ll(th), lo, hi, 1e-8, 200);
    let (mut th, conv) = if m.fx.is_finite() && -m.fx >= l0 { (m.x, m.converged) } else { (th0, false) };
    if family == Family::Frank && th.abs() < 1e-8 {
        th = 1e-8_f64.copysign(th0);
    }
    Ok((Copula::new(family, rotation, &[th])?, ll(th), conv))
}

/// The family/rotation pairs that [`select_family`] will fit.
pub fn candidates(tau: f64, settings: &SelectionSettings) -> Vec<(Family, Rotation)> {
    let mut out = Vec::new();
    let mut push = |c: (Family, Rotation)| {
        if !out.contains(&c) {
            out.push(c);
        }
    };
    if tau.abs() < settings.independence_threshold {
        push((Family::Independence, Rotation::R0));
    }
    for &f in &settings.families {
        if f.is_rotatable() {
            let rots = if tau >= 0.0 {
                [Rotation::R0, Rotation::R180]
            } else {
                [Rotation::R90, Rotation::R270]
            };
            for r in rots {
                push((f, r));
            }
        } else {
            push((f, Rotation::R0));
        }
    }
    out
}

pub fn select_family(u: &[f64], v: &[f64], settings: &SelectionSettings) -> Result<BicopSpec> {
    check_sample(u, v)?;
    let tau = kendall_tau(u, v)?;
    select_family_with_tau(u, v, tau, settings)
}

/// Fits every candidate in parallel and keeps the one minimising the
/// criterion; ties go to the earlier candidate.
pub fn select_family_with_tau(u: &[f64], v: &[f64], tau: f64, settings: &SelectionSettings) -> Result<BicopSpec> {
    if settings.families.is_empty() {
        return Err(Error::Data("no candidate copula families".into()));
    }
    let cands = candidates(tau, settings);
    let fits: Vec<Result<BicopSpec>> = cands
        .par_iter()
        .map(|&(f, r)| fit_with_tau(f, r, u, v, tau))
        .collect();
    let mut best: Option<BicopSpec> = None;
    let mut errors = Vec::new();
    for (fit, (f, r)) in fits.into_iter().zip(&cands) {
        match fit {
            Ok(s) => {
                let c = s.criterion(settings.criterion);
                if best.as_ref().is_none_or(|b| c < b.criterion(settings.criterion)) {
                    best = Some(s);
                }
            }
            Err(e) => {
                log::debug!("{f} rotated {} failed: {e}", r.degrees());
                errors.push(format!("{f}{}: {e}", r.degrees()));
            }
        }
    }
    best.ok_or_else(|| Error::Numeric(format!("every candidate fit failed: {}", errors.join("; "))))
}
