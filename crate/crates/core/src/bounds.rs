//! Certificate functions behind the price-of-anarchy constants of the
//! randomized mechanisms.
//!
//! For two-bidder rFPA with bid ratio `beta = b_own / b_other`, the win
//! probability is `m_beta` and `s_beta` lower-bounds the spend per unit of
//! value lost. The certificate
//! `min{gamma, alpha * eta, min_beta eta * m_beta + gamma * s_beta}` is the
//! welfare fraction guaranteed by the charging argument. For quasi-proportional FPA the bounds are closed form.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_BETA_GRID: usize = 10_000;
const GOLDEN_TOL: f64 = 1e-10;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 1.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must be finite and > 1, got {alpha}")))
    }
}

fn check_beta_closed(beta: f64, alpha: f64) -> Result<()> {
    check_alpha(alpha)?;
    let lo = 1.0 / alpha;
    if beta >= lo * (1.0 - 1e-15) && beta <= alpha * (1.0 + 1e-15) {
        Ok(())
    } else {
        Err(Error::Domain(format!("beta = {beta} outside [{lo}, {alpha}]")))
    }
}

fn m_unchecked(beta: f64, alpha: f64) -> f64 {
    0.5 * (1.0 + beta.ln() / alpha.ln())
}

fn s_nonuniform_unchecked(beta: f64, alpha: f64) -> f64 {
    let lb = beta.ln();
    let la = alpha.ln();
    let d = 2.0 * (1.0 + la + lb);
    (1.0 + lb / la) / d + (1.0 - lb / la) / (beta * d)
}

fn s_uniform_unchecked(beta: f64, alpha: f64) -> f64 {
    let m = m_unchecked(beta, alpha);
    m + (1.0 - m) / beta
}

/// Win probability at bid ratio `beta`, strictly inside `(1/alpha, alpha)`.
pub fn m_beta(beta: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(beta > 1.0 / alpha && beta < alpha) {
        return Err(Error::Domain(format!(
            "beta = {beta} outside ({}, {alpha})",
            1.0 / alpha
        )));
    }
    Ok(m_unchecked(beta, alpha))
}

/// Spend weight for per-query bids, on the closed interval `[1/alpha, alpha]`.
pub fn s_beta_nonuniform(beta: f64, alpha: f64) -> Result<f64> {
    check_beta_closed(beta, alpha)?;
    Ok(s_nonuniform_unchecked(beta, alpha))
}

/// Spend weight under uniform bidding, on the closed interval `[1/alpha, alpha]`.
pub fn s_beta_uniform(beta: f64, alpha: f64) -> Result<f64> {
    check_beta_closed(beta, alpha)?;
    Ok(s_uniform_unchecked(beta, alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateResult {
    pub value: f64,
    pub argmin_beta: f64,
    pub grid_size: usize,
    pub refined: bool,
    pub uniform: bool,
    pub alpha: f64,
    pub eta: f64,
    pub gamma: f64,
    /// True when gamma was not supplied and `1 - eta` was used.
    pub gamma_defaulted: bool,
    /// `eta * m_beta + gamma * s_beta` minimized over beta.
    pub beta_term: f64,
}

/// Evaluates the certificate on a geometric beta grid, then refines the
/// minimum by golden-section search in `ln beta` between the neighbours of
/// the grid argmin. `gamma = None` means `1 - eta`.
pub fn certify_rfpa(alpha: f64, eta: f64, gamma: Option<f64>, uniform: bool, grid: usize) -> Result<CertificateResult> {
    check_alpha(alpha)?;
    let gamma_defaulted = gamma.is_none();
    let gamma = gamma.unwrap_or(1.0 - eta);
    if !(eta >= 0.0 && gamma >= 0.0 && eta.is_finite() && gamma.is_finite()) {
        return Err(Error::Domain(format!(
            "eta and gamma must be finite and >= 0, got {eta}, {gamma}"
        )));
    }
    if grid < 3 {
        return Err(Error::Domain(format!("beta grid needs at least 3 points, got {grid}")));
    }
    let la = alpha.ln();
    let s = if uniform {
        s_uniform_unchecked
    } else {
        s_nonuniform_unchecked
    };
    let objective = |x: f64| {
        let beta = x.exp();
        eta * m_unchecked(beta, alpha) + gamma * s(beta, alpha)
    };
    let xs: Vec<f64> = (0..grid)
        .map(|k| -la + 2.0 * la * k as f64 / (grid - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.par_iter().map(|&x| objective(x)).collect();
    let (k_min, _) = ys.iter().enumerate().fold(
        (0, f64::INFINITY),
        |(bk, bv), (k, &y)| if y < bv { (k, y) } else { (bk, bv) },
    );

    let lo = xs[k_min.saturating_sub(1)];
    let hi = xs[(k_min + 1).min(grid - 1)];
    let (x_ref, y_ref) = golden_section(&objective, lo, hi, GOLDEN_TOL);
    let (x_best, beta_term) = if y_ref < ys[k_min] {
        (x_ref, y_ref)
    } else {
        (xs[k_min], ys[k_min])
    };
    let value = gamma.min(alpha * eta).min(beta_term);
    Ok(CertificateResult {
        value,
        argmin_beta: x_best.exp(),
        grid_size: grid,
        refined: true,
        uniform,
        alpha,
        eta,
        gamma,
        gamma_defaulted,
        beta_term,
    })
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn check_qp(eta: f64, alpha: f64, n: usize) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Domain(format!("eta must lie in (0, 1), got {eta}")));
    }
    if !(alpha >= 1.0) {
        return Err(Error::Domain(format!("alpha must be >= 1, got {alpha}")));
    }
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 bidders, got {n}")));
    }
    Ok(())
}

/// Spend floor on a query whose value-`v` bidder wins with probability in `(0, eta]`.
pub fn qp_spend_lowerbound(v: f64, eta: f64, alpha: f64, n: usize) -> Result<f64> {
    check_qp(eta, alpha, n)?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::Domain(format!("value must be finite and >= 0, got {v}")));
    }
    let ne = (n as f64 * eta).powf(1.0 / alpha);
    Ok(v * alpha * (1.0 - eta) / (ne * (alpha - alpha * eta + 1.0)))
}

/// Welfare ratio bound for quasi-proportional FPA.
pub fn qp_poa_bound(eta: f64, alpha: f64, n: usize) -> Result<f64> {
    check_qp(eta, alpha, n)?;
    let ne = (n as f64 * eta).powf(1.0 / alpha);
    Ok(1.0 / eta + ne * (alpha - alpha * eta + 1.0) / (alpha * (1.0 - eta)))
}

/// Lowest bid at which raising the bid stops paying off, when the win
/// probability is at most `eta`.
pub fn qp_local_optimality_bid_lb(v: f64, eta: f64, alpha: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) || !(alpha >= 1.0) || !(v >= 0.0 && v.is_finite()) {
        return Err(Error::Domain(format!(
            "need v >= 0, eta in (0, 1), alpha >= 1; got v = {v}, eta = {eta}, alpha = {alpha}"
        )));
    }
    Ok(v * alpha * (1.0 / eta - 1.0) / (alpha / eta - alpha + 1.0 / eta))
}

/// Root of `b^(alpha+1) + b K (alpha+1) - K v alpha`, where `K` is the sum of
/// `b_k^alpha` over the opposing bids: the bid where the value-minus-payment
/// `(v - b) b^alpha / (b^alpha + K)` stops increasing.
pub fn qp_stationary_bid(v: f64, alpha: f64, others: &[f64]) -> Result<f64> {
    if !(alpha >= 1.0) || !(v > 0.0 && v.is_finite()) {
        return Err(Error::Domain(format!(
            "need v > 0 and alpha >= 1; got v = {v}, alpha = {alpha}"
        )));
    }
    let logs: Vec<f64> = others.iter().filter(|&&b| b > 0.0).map(|b| alpha * b.ln()).collect();
    if logs.is_empty() {
        return Err(Error::Bisection(
            "no positive opposing bid, so no interior stationary point".into(),
        ));
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ln_k = top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
    // Divided by K so that huge powers stay finite.
    let g = |b: f64| {
        let head = if b > 0.0 {
            ((alpha + 1.0) * b.ln() - ln_k).exp()
        } else {
            0.0
        };
        head + b * (alpha + 1.0) - v * alpha
    };
    let (mut lo, mut hi) = (0.0, v);
    if !(g(lo) < 0.0 && g(hi) > 0.0) {
        return Err(Error::Bisection(format!("no sign change on [0, {v}]")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m_beta_points() {
        let a = 1.4;
        assert!((m_beta(1.0, a).unwrap() - 0.5).abs() < 1e-15);
        assert!((m_beta(a.sqrt(), a).unwrap() - 0.75).abs() < 1e-12);
        assert!(m_beta(a * (1.0 - 1e-12), a).unwrap() > 1.0 - 1e-9);
        assert!(m_beta(a, a).is_err());
    }

    #[test]
    fn s_beta_at_one() {
        let s = s_beta_nonuniform(1.0, 1.4).unwrap();
        assert!((s - 1.0 / (1.0 + 1.4f64.ln())).abs() < 1e-12);
        assert!((s - 0.7482385137517997).abs() < 1e-12);
        assert!((s_beta_uniform(1.0, 7.62).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn s_beta_uniform_at_two() {
        let a: f64 = 7.62;
        let expect = 0.5 * (1.0 + 2f64.ln() / a.ln()) * 0.5 + 0.5;
        assert!((s_beta_uniform(2.0, a).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn rfpa_certificate_clears_target() {
        let c = certify_rfpa(1.4, 0.44, Some(0.56), false, DEFAULT_BETA_GRID).unwrap();
        assert!(c.value >= 1.0 / 1.8 - 1e-4, "{c:?}");
        let zero = certify_rfpa(1.4, 0.44, Some(0.0), false, DEFAULT_BETA_GRID).unwrap();
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn qp_hand_values() {
        assert!((qp_spend_lowerbound(1.0, 0.5, 2.0, 2).unwrap() - 0.5).abs() < 1e-12);
        assert!((qp_poa_bound(0.5, 1e4, 3).unwrap() - 3.0).abs() < 1e-3);
        assert_eq!(qp_local_optimality_bid_lb(0.0, 0.3, 2.0).unwrap(), 0.0);
        assert!(qp_spend_lowerbound(1.0, 1.0, 2.0, 2).is_err());
    }

    #[test]
    fn stationary_bid_solves_first_order_condition() {
        let (v, a) = (3.0, 2.0);
        let b = qp_stationary_bid(v, a, &[1.0]).unwrap();
        // K = 1
        assert!((b.powf(a + 1.0) + b * (a + 1.0) - v * a).abs() < 1e-9);
    }
}
