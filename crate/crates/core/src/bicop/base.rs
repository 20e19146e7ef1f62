//! Unrotated family kernels. `h(u, v)` is `dC(u, v)/dv`, the conditional
//! distribution of U given V = v; all families here are exchangeable, so the
//! other conditional is `h(v, u)`.

use statrs::function::gamma::ln_gamma;

use super::Family;
use crate::special::{bisect, bvn_cdf, integrate, norm_cdf, norm_ppf, t_cdf, t_ppf};

/// `ln(exp(z) - 1)` for `z > 0` without overflow.
fn ln_expm1(z: f64) -> f64 {
    if z > 40.0 {
        z
    } else {
        z.exp_m1().ln()
    }
}

/// `ln(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 40.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

pub(super) fn cdf(f: Family, p: [f64; 2], u: f64, v: f64) -> f64 {
    match f {
        Family::Independence => u * v,
        Family::Gaussian => {
            if p[0] == 0.0 {
                u * v
            } else {
                bvn_cdf(norm_ppf(u), norm_ppf(v), p[0])
            }
        }
        Family::StudentT => {
            // C(u, v) = integral of h(u | s) over s in (0, v)
            let (val, _) = integrate(|s| h(f, p, u, s), 0.0, v, 1e-15, 400);
            val
        }
        Family::Clayton => {
            let t = clayton_ln_t(p[0], u, v);
            (-t / p[0]).exp()
        }
        Family::Frank => {
            let th = p[0];
            if th == 0.0 {
                return u * v;
            }
            let e = |x: f64| (-th * x).exp_m1();
            -(e(u) * e(v) / e(1.0)).ln_1p() / th
        }
        Family::Gumbel => {
            let a = gumbel_a(p[0], u, v);
            (-a.powf(1.0 / p[0])).exp()
        }
    }
}

/// `ln(u^-th + v^-th - 1)` for Clayton, stable at both ends of the unit square.
fn clayton_ln_t(th: f64, u: f64, v: f64) -> f64 {
    let a = -th * u.ln();
    let b = -th * v.ln();
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + ((-hi).exp() * lo.exp_m1()).ln_1p()
}

fn gumbel_a(th: f64, u: f64, v: f64) -> f64 {
    (-u.ln()).powf(th) + (-v.ln()).powf(th)
}

pub(super) fn log_pdf(f: Family, p: [f64; 2], u: f64, v: f64) -> f64 {
    match f {
        Family::Independence => 0.0,
        Family::Gaussian => gaussian_log_pdf(p[0], norm_ppf(u), norm_ppf(v)),
        Family::StudentT => {
            let nu = p[1];
            student_log_pdf(p[0], nu, student_const(nu), t_ppf(u, nu), t_ppf(v, nu))
        }
        Family::Clayton => {
            let th = p[0];
            (1.0 + th).ln() - (1.0 + th) * (u.ln() + v.ln()) - (2.0 + 1.0 / th) * clayton_ln_t(th, u, v)
        }
        Family::Frank => {
            let th = p[0];
            if th == 0.0 {
                return 0.0;
            }
            let e = |x: f64| (-th * x).exp_m1();
            let e1 = e(1.0);
            let den = e1 + e(u) * e(v);
            (th * -e1).ln() - th * (u + v) - 2.0 * den.abs().ln()
        }
        Family::Gumbel => {
            let th = p[0];
            let (x, y) = (-u.ln(), -v.ln());
            let a = x.powf(th) + y.powf(th);
            let a_inv = a.powf(1.0 / th);
            -a_inv + x + y + (th - 1.0) * (x.ln() + y.ln()) + (2.0 / th - 2.0) * a.ln()
                + ((th - 1.0) / a_inv).ln_1p()
        }
    }
}

pub(super) fn gaussian_log_pdf(rho: f64, x: f64, y: f64) -> f64 {
    let r2 = rho * rho;
    -0.5 * (1.0 - r2).ln() - (r2 * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * (1.0 - r2))
}

/// Gamma-function constant of the t copula log-density for `nu`.
pub(super) fn student_const(nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 2.0)) + ln_gamma(0.5 * nu) - 2.0 * ln_gamma(0.5 * (nu + 1.0))
}

/// t copula log-density at t-quantiles `x`, `y`.
pub(super) fn student_log_pdf(rho: f64, nu: f64, lconst: f64, x: f64, y: f64) -> f64 {
    let one_r2 = 1.0 - rho * rho;
    let q = (x * x + y * y - 2.0 * rho * x * y) / (nu * one_r2);
    lconst - 0.5 * one_r2.ln() - 0.5 * (nu + 2.0) * q.ln_1p()
        + 0.5 * (nu + 1.0) * ((x * x / nu).ln_1p() + (y * y / nu).ln_1p())
}

pub(super) fn h(f: Family, p: [f64; 2], u: f64, v: f64) -> f64 {
    match f {
        Family::Independence => u,
        Family::Gaussian => {
            let rho = p[0];
            norm_cdf((norm_ppf(u) - rho * norm_ppf(v)) / (1.0 - rho * rho).sqrt())
        }
        Family::StudentT => {
            let (rho, nu) = (p[0], p[1]);
            let x = t_ppf(u, nu);
            let y = t_ppf(v, nu);
            let scale = ((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
            t_cdf((x - rho * y) / scale, nu + 1.0)
        }
        Family::Clayton => {
            let th = p[0];
            // (1 + v^th (u^-th - 1))^(-(1+th)/th)
            let b = th * v.ln() + ln_expm1(-th * u.ln());
            (-(1.0 + th) / th * softplus(b)).exp()
        }
        Family::Frank => {
            let th = p[0];
            if th == 0.0 {
                return u;
            }
            let e = |x: f64| (-th * x).exp_m1();
            (-th * v).exp() * e(u) / (e(1.0) + e(u) * e(v))
        }
        Family::Gumbel => {
            let th = p[0];
            let (x, y) = (-u.ln(), -v.ln());
            let a = x.powf(th) + y.powf(th);
            let z = a.powf(1.0 / th);
            // C * A^(1/th - 1) * y^(th - 1) / v, in logs
            (-z + (1.0 - th) * z.ln() + (th - 1.0) * y.ln() + y).exp()
        }
    }
}

/// Solves `h(u, v) = w` for `u`.
pub(super) fn hinv(f: Family, p: [f64; 2], w: f64, v: f64) -> f64 {
    match f {
        Family::Independence => w,
        Family::Gaussian => {
            let rho = p[0];
            norm_cdf(norm_ppf(w) * (1.0 - rho * rho).sqrt() + rho * norm_ppf(v))
        }
        Family::StudentT => {
            let (rho, nu) = (p[0], p[1]);
            let y = t_ppf(v, nu);
            let scale = ((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
            t_cdf(t_ppf(w, nu + 1.0) * scale + rho * y, nu)
        }
        Family::Clayton => {
            let th = p[0];
            // u = (1 + v^-th (w^(-th/(1+th)) - 1))^(-1/th)
            let b = -th * v.ln() + ln_expm1(-th / (1.0 + th) * w.ln());
            (-softplus(b) / th).exp()
        }
        Family::Frank => {
            let th = p[0];
            if th == 0.0 {
                return w;
            }
            let e1 = (-th).exp_m1();
            let x = w * e1 / (w + (1.0 - w) * (-th * v).exp());
            -x.ln_1p() / th
        }
        Family::Gumbel => gumbel_hinv(p[0], w, v),
    }
}

/// With z = A^(1/th) and d = z - y, `ln h = -d - (th-1) ln(1 + d/y)`; solve
/// `g(d) = d + (th-1) ln(1 + d/y) + ln w = 0` on the bracket `[0, -ln w]`.
fn gumbel_hinv(th: f64, w: f64, v: f64) -> f64 {
    let y = -v.ln();
    let lw = w.ln();
    if th == 1.0 {
        return w;
    }
    let g = |d: f64| d + (th - 1.0) * (d / y).ln_1p() + lw;
    let (mut lo, mut hi) = (0.0, -lw);
    let mut d = 0.5 * hi;
    let mut converged = false;
    for _ in 0..100 {
        let gd = g(d);
        if gd > 0.0 {
            hi = d;
        } else {
            lo = d;
        }
        let dg = 1.0 + (th - 1.0) / (y + d);
        let mut next = d - gd / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - d).abs() <= 1e-15 * (1.0 + d) {
            d = next;
            converged = true;
            break;
        }
        d = next;
    }
    if !converged {
        d = bisect(g, lo, hi, 1e-15, 200).unwrap_or(d);
    }
    // x^th = z^th - y^th = y^th (exp(th ln(1 + d/y)) - 1)
    let x = y * (th * (d / y).ln_1p()).exp_m1().powf(1.0 / th);
    (-x).exp()
}
