//! Post-processing countermeasure: discard blocks in which too many
//! recorded samples sit outside security thresholds `[S₂, S₁]` placed
//! strictly inside the detector's linear range.
//!
//! Verdicts only ever look at saturated data, which is what Bob records.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{run_range, SimScenario, TrialBatch};
use crate::model::DetectorModel;

/// Default thresholds as a fraction of the detector limits.
pub const DEFAULT_THRESHOLD_RATIO: f64 = 0.95;
pub const DEFAULT_MAX_FRACTION: f64 = 1e-3;
pub const DEFAULT_BLOCK_SIZE: usize = 100_000;
pub const DEFAULT_BLOCKS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardPolicy {
    pub s_lo: f64,
    pub s_hi: f64,
    /// Largest tolerated fraction of out-of-threshold samples.
    pub max_fraction: f64,
}

impl GuardPolicy {
    pub fn new(s_lo: f64, s_hi: f64, max_fraction: f64, det: &DetectorModel) -> Result<Self> {
        let policy = Self {
            s_lo,
            s_hi,
            max_fraction,
        };
        policy.validate(det)?;
        Ok(policy)
    }

    /// Symmetric thresholds at `ratio·α`.
    pub fn symmetric(ratio: f64, max_fraction: f64, det: &DetectorModel) -> Result<Self> {
        Self::new(ratio * det.alpha_lo, ratio * det.alpha_hi, max_fraction, det)
    }

    pub fn default_for(det: &DetectorModel) -> Result<Self> {
        Self::symmetric(DEFAULT_THRESHOLD_RATIO, DEFAULT_MAX_FRACTION, det)
    }

    pub fn validate(&self, det: &DetectorModel) -> Result<()> {
        if !(det.alpha_lo < self.s_lo && self.s_lo < self.s_hi && self.s_hi < det.alpha_hi) {
            return Err(Error::config(format!(
                "guard thresholds must satisfy alpha_lo < s_lo < s_hi < alpha_hi, got {} < {} < {} < {}",
                det.alpha_lo, self.s_lo, self.s_hi, det.alpha_hi
            )));
        }
        // max_fraction = 1 is allowed as the never-discard policy.
        if !(0.0..=1.0).contains(&self.max_fraction) {
            return Err(Error::config(format!(
                "guard.max_fraction must be in [0, 1], got {}",
                self.max_fraction
            )));
        }
        Ok(())
    }

    #[inline]
    fn outside(&self, x: f64) -> bool {
        x >= self.s_hi || x <= self.s_lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardVerdict {
    pub fraction_outside: f64,
    pub accept: bool,
    pub n: usize,
}

fn verdict(samples: &[f64], policy: &GuardPolicy) -> GuardVerdict {
    let outside = samples.iter().filter(|&&x| policy.outside(x)).count();
    let fraction_outside = outside as f64 / samples.len() as f64;
    GuardVerdict {
        fraction_outside,
        accept: fraction_outside <= policy.max_fraction,
        n: samples.len(),
    }
}

/// Judges one block of recorded data.
pub fn evaluate(batch: &TrialBatch, policy: &GuardPolicy, det: &DetectorModel) -> Result<GuardVerdict> {
    policy.validate(det)?;
    if batch.n() == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok(verdict(&batch.x_b, policy))
}

/// One row of the ROC table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocRow {
    pub s_hi: f64,
    pub s_lo: f64,
    pub max_fraction: f64,
    /// Fraction of honest blocks discarded.
    pub false_alarm: f64,
    /// Fraction of attacked blocks discarded.
    pub detection: f64,
    pub n_blocks: usize,
    pub block_size: usize,
}

/// Per-block verdicts under one policy for both scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVerdicts {
    pub honest: Vec<GuardVerdict>,
    pub attack: Vec<GuardVerdict>,
}

/// Recorded `X_B` of `blocks` consecutive blocks, saturation forced on.
fn recorded_blocks(scn: &SimScenario, blocks: usize, block_size: usize) -> Result<Vec<Vec<f64>>> {
    let scn = SimScenario {
        clipping: true,
        n: blocks * block_size,
        ..*scn
    };
    (0..blocks)
        .into_par_iter()
        .map(|b| run_range(&scn, b * block_size..(b + 1) * block_size, 1).map(|batch| batch.x_b))
        .collect()
}

/// Per-block verdicts of `policy` over `blocks` honest and attacked blocks.
pub fn block_verdicts(
    honest: &SimScenario,
    attack: &SimScenario,
    policy: &GuardPolicy,
    blocks: usize,
    block_size: usize,
) -> Result<BlockVerdicts> {
    policy.validate(&honest.detector)?;
    check_shared_detector(honest, attack)?;
    if blocks == 0 || block_size == 0 {
        return Err(Error::config("guard needs at least one non-empty block"));
    }
    let judge = |data: Vec<Vec<f64>>| data.iter().map(|x| verdict(x, policy)).collect::<Vec<_>>();
    Ok(BlockVerdicts {
        honest: judge(recorded_blocks(honest, blocks, block_size)?),
        attack: judge(recorded_blocks(attack, blocks, block_size)?),
    })
}

fn check_shared_detector(honest: &SimScenario, attack: &SimScenario) -> Result<()> {
    if honest.detector != attack.detector {
        return Err(Error::config(
            "honest and attack scenarios must share the detector configuration",
        ));
    }
    Ok(())
}

/// Empirical false-alarm and detection rates of each policy over
/// `blocks` independent blocks of each scenario.
pub fn roc_sweep(
    honest: &SimScenario,
    attack: &SimScenario,
    policies: &[GuardPolicy],
    blocks: usize,
    block_size: usize,
) -> Result<Vec<RocRow>> {
    check_shared_detector(honest, attack)?;
    for p in policies {
        p.validate(&honest.detector)?;
    }
    if blocks == 0 || block_size == 0 {
        return Err(Error::config("guard needs at least one non-empty block"));
    }
    let honest_data = recorded_blocks(honest, blocks, block_size)?;
    let attack_data = recorded_blocks(attack, blocks, block_size)?;
    let discard_rate = |data: &[Vec<f64>], p: &GuardPolicy| {
        data.iter().filter(|x| !verdict(x, p).accept).count() as f64 / data.len() as f64
    };
    Ok(policies
        .par_iter()
        .map(|p| RocRow {
            s_hi: p.s_hi,
            s_lo: p.s_lo,
            max_fraction: p.max_fraction,
            false_alarm: discard_rate(&honest_data, p),
            detection: discard_rate(&attack_data, p),
            n_blocks: blocks,
            block_size,
        })
        .collect())
}

/// Symmetric thresholds at 80-95 % of the limits crossed with tolerated
/// fractions 10⁻⁴, 10⁻³ and 10⁻².
pub fn default_policy_grid(det: &DetectorModel) -> Result<Vec<GuardPolicy>> {
    let mut grid = Vec::new();
    for ratio in [0.80, 0.85, 0.90, DEFAULT_THRESHOLD_RATIO] {
        for max_fraction in [1e-4, DEFAULT_MAX_FRACTION, 1e-2] {
            grid.push(GuardPolicy::symmetric(ratio, max_fraction, det)?);
        }
    }
    Ok(grid)
}
