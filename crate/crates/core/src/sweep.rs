//! Attack sweeps over blinding ratio and distance.
//!
//! Each grid point simulates linear and saturated detectors on the same
//! draws and runs Alice and Bob's estimation and key-rate assessment on
//! both.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimate::{estimate_channel, Estimate};
use crate::keyrate::{assess, breach, KeyRateReport};
use crate::mc::{simulate_moments, SimScenario};
use crate::model::ChannelModel;
use crate::presets::design_va;

/// How the modulation variance is picked at each distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VaPolicy {
    /// Re-optimised for the nominal transmission at each distance.
    Optimized,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackPoint {
    pub length_km: f64,
    pub r: f64,
    pub v_a: f64,
    pub linear: Estimate,
    pub clipped: Estimate,
    /// Assessment of the saturated estimate, carrying `ξ_null`.
    pub report: KeyRateReport,
    pub breach: bool,
}

impl AttackPoint {
    pub fn xi_null(&self) -> f64 {
        self.report.xi_null.unwrap_or(0.0)
    }
}

/// Scenario `base` moved to `length_km` with blinding ratio `r`.
pub fn point_scenario(base: &SimScenario, length_km: f64, r: f64, va: VaPolicy) -> Result<SimScenario> {
    let channel = ChannelModel {
        length_km,
        ..base.channel
    };
    let mut protocol = base.protocol;
    protocol.v_a = match va {
        VaPolicy::Optimized => design_va(&protocol, &base.detector, &channel)?,
        VaPolicy::Fixed(v_a) => v_a,
    };
    let mut attack = base.attack;
    attack.r = r;
    Ok(SimScenario {
        protocol,
        channel,
        attack,
        ..*base
    })
}

/// Simulates and assesses one grid point.
pub fn evaluate_point(base: &SimScenario, length_km: f64, r: f64, va: VaPolicy) -> Result<AttackPoint> {
    let scn = point_scenario(base, length_km, r, va)?;
    let m = simulate_moments(&scn)?;
    let linear = estimate_channel(&m.linear, &scn.detector, &scn.protocol)?;
    let clipped =
        estimate_channel(&m.clipped, &scn.detector, &scn.protocol)?.with_clipped_fraction(m.clipped_fraction());
    let report = assess(&clipped, &scn.protocol, &scn.detector)?;
    Ok(AttackPoint {
        length_km,
        r,
        v_a: scn.protocol.v_a,
        linear,
        clipped,
        breach: breach(&clipped, &report),
        report,
    })
}

/// All `(L, r)` combinations, ordered by distance then ratio.
///
/// Every point reuses `base.seed`; the points run one after another and
/// each one is parallel internally.
pub fn sweep(base: &SimScenario, lengths_km: &[f64], ratios: &[f64], va: VaPolicy) -> Result<Vec<AttackPoint>> {
    let mut out = Vec::with_capacity(lengths_km.len() * ratios.len());
    for &l in lengths_km {
        for &r in ratios {
            out.push(evaluate_point(base, l, r, va)?);
        }
    }
    Ok(out)
}

/// Smallest ratio that breaches at `length_km`, if any.
pub fn breach_point(points: &[AttackPoint], length_km: f64) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.length_km == length_km && p.breach)
        .map(|p| p.r)
        .min_by(f64::total_cmp)
}

/// `start, start+step, …` up to `end` inclusive, built from integer steps.
pub fn grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let count = ((end - start) / step + 1e-9).floor() as usize;
    (0..=count).map(|i| start + step * i as f64).collect()
}

/// Sorted union of two grids with near-duplicates removed.
pub fn merge_grids(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    all
}
