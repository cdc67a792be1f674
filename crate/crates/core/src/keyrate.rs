//! Asymptotic collective-attack key rate for GMCS with reverse
//! reconciliation and homodyne detection.
//!
//! With `V = V_A + 1`, `χ_line = 1/T − 1 + ξ`, `χ_hom = (1 − η + v_ele)/η`
//! and `χ_tot = χ_line + χ_hom/T`:
//!
//! ```text
//! I_AB = ½·log₂((V + χ_tot)/(1 + χ_tot))
//! K    = β·I_AB − χ_BE
//! ```
//!
//! where `χ_BE` is the Holevo bound obtained from the symplectic eigenvalues
//! of Eve's state and of the state conditioned on Bob's measurement. Under
//! [`ReceiverTrust::UntrustedEfficiency`] the same expression is evaluated
//! with `T → ηT` and `η → 1`, leaving only the electronic noise trusted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::model::{DetectorModel, ProtocolModel, ReceiverTrust};

/// Slack below 1 tolerated on symplectic eigenvalues before erroring.
const EIGEN_TOL: f64 = 1e-9;
/// Upper end of the ξ bracket for the null-key search, SNU.
pub const XI_BRACKET_HI: f64 = 5.0;
/// Modulation-variance search domain, SNU.
pub const VA_DOMAIN: (f64, f64) = (1.0, 100.0);
const VA_GRID_POINTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    /// Alice-Bob mutual information, bits/pulse.
    pub i_ab: f64,
    /// Holevo bound on Eve's information about Bob, bits/pulse.
    pub chi_be: f64,
    /// `β·I_AB − χ_BE`, bits/pulse.
    pub k: f64,
    pub v_a_used: f64,
    pub xi_null: Option<f64>,
    /// Set when no excess noise in the bracket yields a positive key.
    pub no_key: bool,
}

/// `G(x) = (x+1)·log₂(x+1) − x·log₂x`, the entropy of a thermal state with
/// mean photon number `x`.
pub fn entropy_g(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (x + 1.0) * (x + 1.0).log2() - x * x.log2()
    }
}

/// Receiver parameters as seen by the security proof.
fn effective(proto: &ProtocolModel, t: f64, det: &DetectorModel) -> (f64, f64, f64) {
    match proto.receiver {
        ReceiverTrust::Trusted => (t, det.eta, det.v_ele),
        ReceiverTrust::UntrustedEfficiency => (det.eta * t, 1.0, det.v_ele),
    }
}

/// Roots of `λ⁴ − s·λ² + p` as `(λ₊, λ₋)`.
fn eigen_pair(s: f64, p: f64) -> Result<(f64, f64)> {
    let mut disc = s * s - 4.0 * p;
    if disc < 0.0 {
        if disc > -1e-9 * s * s {
            disc = 0.0;
        } else {
            return Err(Error::domain(format!(
                "negative discriminant {disc} in symplectic spectrum"
            )));
        }
    }
    let root = disc.sqrt();
    Ok((((s + root) / 2.0).sqrt(), ((s - root) / 2.0).max(0.0).sqrt()))
}

fn checked_eigen(lambda: f64) -> Result<f64> {
    if !(lambda >= 1.0 - EIGEN_TOL) {
        return Err(Error::domain(format!(
            "symplectic eigenvalue {lambda} below 1; covariance matrix is unphysical"
        )));
    }
    Ok(lambda.max(1.0))
}

/// The four symplectic eigenvalues `[λ₁, λ₂, λ₃, λ₄]` for modulation `v_a`.
pub fn symplectic_eigenvalues(v_a: f64, t: f64, xi: f64, eta: f64, v_ele: f64) -> Result<[f64; 4]> {
    let v = v_a + 1.0;
    let chi_line = 1.0 / t - 1.0 + xi;
    let chi_hom = (1.0 - eta + v_ele) / eta;
    let chi_tot = chi_line + chi_hom / t;

    let a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + chi_line).powi(2);
    let b = t * t * (v * chi_line + 1.0).powi(2);
    let (l1, l2) = eigen_pair(a, b)?;

    let sqrt_b = b.sqrt();
    let denom = t * (v + chi_tot);
    let c = (a * chi_hom + v * sqrt_b + t * (v + chi_line)) / denom;
    let d = sqrt_b * (v + sqrt_b * chi_hom) / denom;
    let (l3, l4) = eigen_pair(c, d)?;

    Ok([
        checked_eigen(l1)?,
        checked_eigen(l2)?,
        checked_eigen(l3)?,
        checked_eigen(l4)?,
    ])
}

/// Secret key rate at transmission `t` and excess noise `xi`.
pub fn key_rate(proto: &ProtocolModel, t: f64, xi: f64, det: &DetectorModel) -> Result<KeyRateReport> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::domain(format!("key rate needs 0 < T <= 1, got {t}")));
    }
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(Error::domain(format!("key rate needs xi >= 0, got {xi}")));
    }
    if !(proto.beta > 0.0 && proto.beta <= 1.0) {
        return Err(Error::domain(format!(
            "key rate needs 0 < beta <= 1, got {}",
            proto.beta
        )));
    }
    let (t_eff, eta, v_ele) = effective(proto, t, det);
    let v = proto.v_a + 1.0;
    let chi_line = 1.0 / t_eff - 1.0 + xi;
    let chi_tot = chi_line + (1.0 - eta + v_ele) / eta / t_eff;
    let i_ab = 0.5 * ((v + chi_tot) / (1.0 + chi_tot)).log2();

    let [l1, l2, l3, l4] = symplectic_eigenvalues(proto.v_a, t_eff, xi, eta, v_ele)?;
    let g = |l: f64| entropy_g((l - 1.0) / 2.0);
    let chi_be = g(l1) + g(l2) - g(l3) - g(l4);

    Ok(KeyRateReport {
        i_ab,
        chi_be,
        k: proto.beta * i_ab - chi_be,
        v_a_used: proto.v_a,
        xi_null: None,
        no_key: false,
    })
}

/// Result of the null-key threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullThreshold {
    pub xi_null: f64,
    pub no_key: bool,
}

/// Largest excess noise with a non-negative key rate, by bisection on
/// `[0, XI_BRACKET_HI]`.
pub fn xi_null(proto: &ProtocolModel, t: f64, det: &DetectorModel) -> Result<NullThreshold> {
    let k = |xi: f64| key_rate(proto, t, xi, det).map(|r| r.k);
    let none = NullThreshold {
        xi_null: 0.0,
        no_key: true,
    };

    let k_lo = k(0.0)?;
    if k_lo <= 0.0 {
        return Ok(none);
    }
    let k_hi = k(XI_BRACKET_HI)?;
    if k_hi > 0.0 {
        log::warn!("key rate still positive at xi = {XI_BRACKET_HI}; no sign change in bracket");
        return Ok(none);
    }

    // K must fall monotonically across the bracket for the root to be unique.
    let scan = 50;
    let mut prev = k_lo;
    for i in 1..=scan {
        let cur = k(XI_BRACKET_HI * i as f64 / scan as f64)?;
        if cur >= prev {
            return Err(Error::domain(format!(
                "key rate not decreasing in xi near {}",
                XI_BRACKET_HI * i as f64 / scan as f64
            )));
        }
        prev = cur;
    }

    let (mut lo, mut hi) = (0.0, XI_BRACKET_HI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if k(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(NullThreshold {
        xi_null: lo,
        no_key: false,
    })
}

/// Chosen modulation variance and its key rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaChoice {
    pub v_a: f64,
    pub k: f64,
    pub no_key: bool,
}

/// Maximises `K(V_A)` over [`VA_DOMAIN`] at the assumed excess noise.
///
/// A 100-point grid is scanned first. If the scan is strictly unimodal, a
/// golden-section search refines the maximum inside the neighbouring grid
/// cells; otherwise the grid argmax (smallest `V_A` on ties) is returned.
pub fn optimize_va(proto: &ProtocolModel, t: f64, det: &DetectorModel, xi_assumed: f64) -> Result<VaChoice> {
    let (lo, hi) = VA_DOMAIN;
    let k_at = |v_a: f64| key_rate(&ProtocolModel { v_a, ..*proto }, t, xi_assumed, det).map(|r| r.k);

    let step = (hi - lo) / (VA_GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..VA_GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let values = grid.iter().map(|&v| k_at(v)).collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    let unimodal = values[..=best].windows(2).all(|w| w[1] > w[0]) && values[best..].windows(2).all(|w| w[1] < w[0]);

    let mut choice = VaChoice {
        v_a: grid[best],
        k: values[best],
        no_key: false,
    };
    if unimodal {
        let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut kc, mut kd) = (k_at(c)?, k_at(d)?);
        while b - a > 1e-7 {
            if kc >= kd {
                b = d;
                d = c;
                kd = kc;
                c = b - inv_phi * (b - a);
                kc = k_at(c)?;
            } else {
                a = c;
                c = d;
                kc = kd;
                d = a + inv_phi * (b - a);
                kd = k_at(d)?;
            }
        }
        let v_a = (0.5 * (a + b)).clamp(lo, hi);
        let k = k_at(v_a)?;
        if k > choice.k {
            choice = VaChoice { v_a, k, no_key: false };
        }
    }
    choice.no_key = choice.k <= 0.0;
    Ok(choice)
}

/// Key rate and null-key threshold Alice and Bob infer from an estimate.
///
/// The threshold is evaluated at the estimated transmission (capped at 1)
/// and the configured `V_A`; the rate uses `max(ξ̂, 0)`.
pub fn assess(est: &Estimate, proto: &ProtocolModel, det: &DetectorModel) -> Result<KeyRateReport> {
    if !(est.t_hat > 0.0) {
        return Err(Error::Degenerate(format!(
            "estimated transmission {} is not positive",
            est.t_hat
        )));
    }
    let t = est.t_hat.min(1.0);
    let threshold = xi_null(proto, t, det)?;
    let mut report = key_rate(proto, t, est.xi_hat.max(0.0), det)?;
    report.xi_null = Some(threshold.xi_null);
    report.no_key = threshold.no_key;
    Ok(report)
}

/// Security breach: Alice and Bob would accept a key (`ξ̂ < ξ_null`) even
/// though Eve holds a full intercept-resend copy.
pub fn breach(est: &Estimate, report: &KeyRateReport) -> bool {
    match report.xi_null {
        Some(threshold) if !report.no_key => est.xi_hat < threshold,
        _ => false,
    }
}
