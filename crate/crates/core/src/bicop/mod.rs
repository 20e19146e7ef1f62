//! Bivariate copula families: evaluation, tau conversions, estimation and
//! information-criterion selection.

mod base;
mod fit;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{bisect, debye1};

pub use fit::{
    candidates, fit, fit_with_tau, select_family, select_family_with_tau, Criterion, SelectionSettings, MIN_FIT_N,
};

/// Pseudo-observations are clamped into `[EPS, 1 - EPS]` before density work.
pub const EPS: f64 = 1e-10;

/// Student-t degrees-of-freedom range.
pub const NU_MIN: f64 = 2.0;
pub const NU_MAX: f64 = 50.0;
pub const CLAYTON_MAX: f64 = 28.0;
pub const FRANK_MAX: f64 = 35.0;
pub const GUMBEL_MAX: f64 = 17.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Independence,
    Gaussian,
    #[serde(rename = "student", alias = "studentt", alias = "t")]
    StudentT,
    Clayton,
    Frank,
    Gumbel,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Independence,
        Family::Gaussian,
        Family::StudentT,
        Family::Clayton,
        Family::Frank,
        Family::Gumbel,
    ];

    pub fn param_count(self) -> usize {
        match self {
            Family::Independence => 0,
            Family::StudentT => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Independence => "independence",
            Family::Gaussian => "gaussian",
            Family::StudentT => "student",
            Family::Clayton => "clayton",
            Family::Frank => "frank",
            Family::Gumbel => "gumbel",
        }
    }

    /// Families whose base copula only covers positive dependence.
    pub fn is_rotatable(self) -> bool {
        matches!(self, Family::Clayton | Family::Gumbel)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "independence" | "indep" => Ok(Family::Independence),
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "student" | "studentt" | "student_t" | "student-t" | "t" => Ok(Family::StudentT),
            "clayton" => Ok(Family::Clayton),
            "frank" => Ok(Family::Frank),
            "gumbel" => Ok(Family::Gumbel),
            other => Err(format!("unknown copula family {other:?}")),
        }
    }
}

/// Counter-clockwise rotation of the copula density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub enum Rotation {
    #[default]
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub fn degrees(self) -> u16 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }

    /// Rotations 90 and 270 flip the sign of dependence.
    pub fn is_negative(self) -> bool {
        matches!(self, Rotation::R90 | Rotation::R270)
    }
}

impl TryFrom<u16> for Rotation {
    type Error = String;

    fn try_from(d: u16) -> std::result::Result<Self, Self::Error> {
        match d {
            0 => Ok(Rotation::R0),
            90 => Ok(Rotation::R90),
            180 => Ok(Rotation::R180),
            270 => Ok(Rotation::R270),
            other => Err(format!("rotation must be 0, 90, 180 or 270, got {other}")),
        }
    }
}

impl From<Rotation> for u16 {
    fn from(r: Rotation) -> u16 {
        r.degrees()
    }
}

/// Which argument the h-function conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondOn {
    /// `dC/du`: distribution of V given U = u.
    First,
    /// `dC/dv`: distribution of U given V = v.
    Second,
}

/// A parametrised bivariate copula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Copula {
    family: Family,
    rotation: Rotation,
    params: [f64; 2],
}

fn clamp01(x: f64) -> f64 {
    x.clamp(EPS, 1.0 - EPS)
}

impl Copula {
    pub fn new(family: Family, rotation: Rotation, params: &[f64]) -> Result<Self> {
        let bad = |detail: String| Error::Param {
            family: family.name().to_string(),
            detail,
        };
        if params.len() != family.param_count() {
            return Err(bad(format!(
                "expected {} parameters, got {}",
                family.param_count(),
                params.len()
            )));
        }
        if rotation != Rotation::R0 && !family.is_rotatable() {
            return Err(bad(format!("rotation {} is not supported", rotation.degrees())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(bad(format!("non-finite parameter in {params:?}")));
        }
        let mut p = [0.0; 2];
        p[..params.len()].copy_from_slice(params);
        let ok = match family {
            Family::Independence => true,
            Family::Gaussian => p[0].abs() < 1.0,
            Family::StudentT => p[0].abs() < 1.0 && (NU_MIN..=NU_MAX).contains(&p[1]),
            Family::Clayton => p[0] > 0.0 && p[0] <= CLAYTON_MAX,
            Family::Frank => p[0] != 0.0 && p[0].abs() <= FRANK_MAX,
            Family::Gumbel => (1.0..=GUMBEL_MAX).contains(&p[0]),
        };
        if !ok {
            return Err(bad(format!("parameters {params:?} outside the admissible domain")));
        }
        Ok(Copula {
            family,
            rotation,
            params: p,
        })
    }

    pub fn independence() -> Self {
        Copula {
            family: Family::Independence,
            rotation: Rotation::R0,
            params: [0.0; 2],
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn rotation(&self) -> Rotation {
        self.rotation
    }

    pub fn params(&self) -> &[f64] {
        &self.params[..self.family.param_count()]
    }

    pub fn param_count(&self) -> usize {
        self.family.param_count()
    }

    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (u.clamp(0.0, 1.0), v.clamp(0.0, 1.0));
        if u == 0.0 || v == 0.0 {
            return 0.0;
        }
        if u == 1.0 {
            return v;
        }
        if v == 1.0 {
            return u;
        }
        let c0 = |a: f64, b: f64| {
            if a <= 0.0 || b <= 0.0 {
                0.0
            } else if a >= 1.0 {
                b
            } else if b >= 1.0 {
                a
            } else {
                base::cdf(self.family, self.params, a, b)
            }
        };
        let c = match self.rotation {
            Rotation::R0 => c0(u, v),
            Rotation::R90 => v - c0(1.0 - u, v),
            Rotation::R180 => u + v - 1.0 + c0(1.0 - u, 1.0 - v),
            Rotation::R270 => u - c0(u, 1.0 - v),
        };
        c.clamp((u + v - 1.0).max(0.0), u.min(v))
    }

    pub fn log_pdf(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (clamp01(u), clamp01(v));
        let (a, b) = match self.rotation {
            Rotation::R0 => (u, v),
            Rotation::R90 => (1.0 - u, v),
            Rotation::R180 => (1.0 - u, 1.0 - v),
            Rotation::R270 => (u, 1.0 - v),
        };
        base::log_pdf(self.family, self.params, a, b)
    }

    pub fn pdf(&self, u: f64, v: f64) -> f64 {
        self.log_pdf(u, v).exp()
    }

    /// `hfunc(u, v, Second) = dC/dv`, `hfunc(u, v, First) = dC/du`.
    pub fn hfunc(&self, u: f64, v: f64, on: CondOn) -> f64 {
        let (u, v) = (clamp01(u), clamp01(v));
        let h0 = |a: f64, b: f64| base::h(self.family, self.params, a, b);
        let out = match (self.rotation, on) {
            (Rotation::R0, CondOn::Second) => h0(u, v),
            (Rotation::R0, CondOn::First) => h0(v, u),
            (Rotation::R90, CondOn::Second) => 1.0 - h0(1.0 - u, v),
            (Rotation::R90, CondOn::First) => h0(v, 1.0 - u),
            (Rotation::R180, CondOn::Second) => 1.0 - h0(1.0 - u, 1.0 - v),
            (Rotation::R180, CondOn::First) => 1.0 - h0(1.0 - v, 1.0 - u),
            (Rotation::R270, CondOn::Second) => h0(u, 1.0 - v),
            (Rotation::R270, CondOn::First) => 1.0 - h0(1.0 - v, u),
        };
        out.clamp(0.0, 1.0)
    }

    /// Inverse of [`Copula::hfunc`] in its free argument: with `on = Second`
    /// returns `u` solving `hfunc(u, cond, Second) = w`; with `on = First`
    /// returns `v` solving `hfunc(cond, v, First) = w`.
    pub fn hinv(&self, w: f64, cond: f64, on: CondOn) -> f64 {
        let (w, c) = (clamp01(w), clamp01(cond));
        let hi0 = |a: f64, b: f64| base::hinv(self.family, self.params, a, b);
        // exchangeability makes both directions share one inverse
        let out = match (self.rotation, on) {
            (Rotation::R0, _) => hi0(w, c),
            (Rotation::R90, CondOn::Second) => 1.0 - hi0(1.0 - w, c),
            (Rotation::R90, CondOn::First) => hi0(w, 1.0 - c),
            (Rotation::R180, _) => 1.0 - hi0(1.0 - w, 1.0 - c),
            (Rotation::R270, CondOn::Second) => hi0(w, 1.0 - c),
            (Rotation::R270, CondOn::First) => 1.0 - hi0(1.0 - w, c),
        };
        out.clamp(0.0, 1.0)
    }

    pub fn tau(&self) -> f64 {
        let t = param_to_tau(self.family, self.params());
        if self.rotation.is_negative() {
            -t
        } else {
            t
        }
    }

    /// Probability of the rectangle `[u_left, u] x [v_left, v]`.
    pub fn discrete_prob(&self, u: f64, u_left: f64, v: f64, v_left: f64) -> Result<f64> {
        if u_left > u || v_left > v {
            return Err(Error::Data(format!(
                "rectangle corners out of order: u in [{u_left}, {u}], v in [{v_left}, {v}]"
            )));
        }
        if [u, u_left, v, v_left].iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Data("rectangle corners must lie in [0, 1]".into()));
        }
        let p = self.cdf(u, v) - self.cdf(u_left, v) - self.cdf(u, v_left) + self.cdf(u_left, v_left);
        Ok(p.max(0.0))
    }
}

/// Kendall's tau of the unrotated family.
pub fn param_to_tau(family: Family, params: &[f64]) -> f64 {
    match family {
        Family::Independence => 0.0,
        Family::Gaussian | Family::StudentT => std::f64::consts::FRAC_2_PI * params[0].asin(),
        Family::Clayton => params[0] / (params[0] + 2.0),
        Family::Gumbel => 1.0 - 1.0 / params[0],
        Family::Frank => frank_tau(params[0]),
    }
}

fn frank_tau(th: f64) -> f64 {
    if th == 0.0 {
        return 0.0;
    }
    let a = th.abs();
    let t = if a < 1e-4 {
        // series: tau ~ th/9 - th^3/900
        a / 9.0 - a.powi(3) / 900.0
    } else {
        1.0 - 4.0 / a * (1.0 - debye1(a))
    };
    t.copysign(th)
}

/// Largest |tau| attainable inside the parameter domain of the family.
pub fn max_abs_tau(family: Family) -> f64 {
    match family {
        Family::Independence => 0.0,
        Family::Gaussian | Family::StudentT => 1.0,
        Family::Clayton => param_to_tau(family, &[CLAYTON_MAX]),
        Family::Gumbel => param_to_tau(family, &[GUMBEL_MAX]),
        Family::Frank => frank_tau(FRANK_MAX),
    }
}

/// Inverts [`param_to_tau`] for the unrotated family. The Student-t degrees of
/// freedom are not identified by tau; 4 is returned as a starting value.
pub fn tau_to_param(family: Family, tau: f64) -> Result<Vec<f64>> {
    let bad = |detail: String| Error::Param {
        family: family.name().to_string(),
        detail,
    };
    if !tau.is_finite() || tau.abs() >= 1.0 {
        return Err(bad(format!("tau {tau} outside (-1, 1)")));
    }
    match family {
        Family::Independence => {
            if tau == 0.0 {
                Ok(vec![])
            } else {
                Err(bad(format!("tau {tau} is not attainable")))
            }
        }
        Family::Gaussian => Ok(vec![(std::f64::consts::FRAC_PI_2 * tau).sin()]),
        Family::StudentT => Ok(vec![(std::f64::consts::FRAC_PI_2 * tau).sin(), 4.0]),
        Family::Clayton => {
            if tau <= 0.0 || tau > max_abs_tau(family) {
                return Err(bad(format!("tau {tau} is not attainable")));
            }
            Ok(vec![2.0 * tau / (1.0 - tau)])
        }
        Family::Gumbel => {
            if tau < 0.0 || tau > max_abs_tau(family) {
                return Err(bad(format!("tau {tau} is not attainable")));
            }
            Ok(vec![1.0 / (1.0 - tau)])
        }
        Family::Frank => {
            if tau == 0.0 || tau.abs() > max_abs_tau(family) {
                return Err(bad(format!("tau {tau} is not attainable")));
            }
            let a = tau.abs();
            let th = bisect(|t| frank_tau(t) - a, 0.0, FRANK_MAX, 1e-13, 200)
                .ok_or_else(|| Error::Numeric(format!("Frank tau inversion failed at tau {tau}")))?;
            Ok(vec![th.copysign(tau)])
        }
    }
}

/// A fitted bivariate copula with its fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct BicopSpec {
    copula: Copula,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    /// Sample Kendall's tau of the data the copula was fitted on.
    pub tau: f64,
    pub n: usize,
    /// False when the optimiser failed and the tau-inversion estimate was kept.
    pub converged: bool,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    family: Family,
    #[serde(default)]
    rotation: Rotation,
    params: Vec<f64>,
    loglik: f64,
    aic: f64,
    bic: f64,
    tau: f64,
    n: usize,
    #[serde(default = "yes")]
    converged: bool,
}

fn yes() -> bool {
    true
}

impl TryFrom<RawSpec> for BicopSpec {
    type Error = Error;

    fn try_from(r: RawSpec) -> Result<Self> {
        Ok(BicopSpec {
            copula: Copula::new(r.family, r.rotation, &r.params)?,
            loglik: r.loglik,
            aic: r.aic,
            bic: r.bic,
            tau: r.tau,
            n: r.n,
            converged: r.converged,
        })
    }
}

impl From<BicopSpec> for RawSpec {
    fn from(s: BicopSpec) -> RawSpec {
        RawSpec {
            family: s.copula.family,
            rotation: s.copula.rotation,
            params: s.copula.params().to_vec(),
            loglik: s.loglik,
            aic: s.aic,
            bic: s.bic,
            tau: s.tau,
            n: s.n,
            converged: s.converged,
        }
    }
}

impl BicopSpec {
    /// Wraps a copula with a known log-likelihood; criteria follow from it.
    pub fn from_fit(copula: Copula, loglik: f64, tau: f64, n: usize, converged: bool) -> Self {
        let (aic, bic) = criteria(copula.param_count(), loglik, n);
        BicopSpec {
            copula,
            loglik,
            aic,
            bic,
            tau,
            n,
            converged,
        }
    }

    /// Evaluates the log-likelihood of `copula` on the data and wraps it.
    pub fn evaluate(copula: Copula, u: &[f64], v: &[f64]) -> Result<Self> {
        let tau = crate::dependence::kendall_tau(u, v)?;
        Ok(BicopSpec::from_fit(copula, loglik(&copula, u, v), tau, u.len(), true))
    }

    pub fn independence(tau: f64, n: usize) -> Self {
        BicopSpec::from_fit(Copula::independence(), 0.0, tau, n, true)
    }

    pub fn copula(&self) -> &Copula {
        &self.copula
    }

    pub fn family(&self) -> Family {
        self.copula.family
    }

    pub fn rotation(&self) -> Rotation {
        self.copula.rotation
    }

    pub fn params(&self) -> &[f64] {
        self.copula.params()
    }

    pub fn param_count(&self) -> usize {
        self.copula.param_count()
    }

    /// Kendall's tau implied by the fitted parameters.
    pub fn implied_tau(&self) -> f64 {
        self.copula.tau()
    }

    pub fn criterion(&self, c: Criterion) -> f64 {
        match c {
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
        }
    }

    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        self.copula.cdf(u, v)
    }

    pub fn pdf(&self, u: f64, v: f64) -> f64 {
        self.copula.pdf(u, v)
    }

    pub fn log_pdf(&self, u: f64, v: f64) -> f64 {
        self.copula.log_pdf(u, v)
    }

    pub fn hfunc(&self, u: f64, v: f64, on: CondOn) -> f64 {
        self.copula.hfunc(u, v, on)
    }

    pub fn hinv(&self, w: f64, cond: f64, on: CondOn) -> f64 {
        self.copula.hinv(w, cond, on)
    }

    pub fn discrete_prob(&self, u: f64, u_left: f64, v: f64, v_left: f64) -> Result<f64> {
        self.copula.discrete_prob(u, u_left, v, v_left)
    }

    /// Short label such as `clayton180(2.1)` for reports and DOT output.
    pub fn label(&self) -> String {
        let rot = if self.rotation() == Rotation::R0 {
            String::new()
        } else {
            self.rotation().degrees().to_string()
        };
        let params: Vec<String> = self.params().iter().map(|p| format!("{p:.3}")).collect();
        format!("{}{}({})", self.family(), rot, params.join(","))
    }
}

/// `(aic, bic)` for `k` parameters.
pub fn criteria(k: usize, loglik: f64, n: usize) -> (f64, f64) {
    let k = k as f64;
    (2.0 * k - 2.0 * loglik, k * (n.max(1) as f64).ln() - 2.0 * loglik)
}

/// Sum of log-densities over paired observations.
pub fn loglik(copula: &Copula, u: &[f64], v: &[f64]) -> f64 {
    if copula.family == Family::Independence {
        return 0.0;
    }
    u.iter().zip(v).map(|(&a, &b)| copula.log_pdf(a, b)).sum()
}
