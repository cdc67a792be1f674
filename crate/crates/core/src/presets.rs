//! Named scenario presets.
//!
//! Every preset resolves `V_A` with [`optimize_va`] at the nominal channel
//! transmission and [`XI_DESIGN`] excess noise, which is how a deployment
//! would pick its modulation before any attack is present.

use crate::error::{Error, Result};
use crate::keyrate::optimize_va;
use crate::mc::SimScenario;
use crate::model::{AttackModel, ChannelModel, CharacterizationSetup, DetectorModel, ProtocolModel};

/// Excess noise the modulation variance is optimised for, SNU.
pub const XI_DESIGN: f64 = 0.01;
/// Detection efficiency of the excess-noise sweep presets.
pub const ETA_SWEEP: f64 = 0.55;
pub const DEFAULT_SEED: u64 = 1;

/// Breach-condition blinding ratio.
pub const R_BREACH: f64 = 0.1274;

pub const NAMES: [&str; 6] = ["baseline", "fig4a-r0.10", "fig4a-r0.11", "fig4b", "fig5", "fig6"];

/// LO powers (µW) at which the two characterisation balance settings reach
/// the DAQ limit, less balanced first.
pub const BALANCE_ONSETS_UW: [f64; 2] = [35.0, 45.0];

/// One detector balance setting of the characterisation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceSetting {
    pub label: &'static str,
    pub onset_uw: f64,
    pub t_port: f64,
}

/// Balance settings whose mean output saturates at [`BALANCE_ONSETS_UW`].
pub fn balance_settings(det: &DetectorModel, setup: &CharacterizationSetup) -> [BalanceSetting; 2] {
    let [a, b] = BALANCE_ONSETS_UW;
    [
        BalanceSetting {
            label: "setting1",
            onset_uw: a,
            t_port: setup.t_port_saturating_at(det, a),
        },
        BalanceSetting {
            label: "setting2",
            onset_uw: b,
            t_port: setup.t_port_saturating_at(det, b),
        },
    ]
}

/// `V_A` maximising the key rate on `channel` at [`XI_DESIGN`].
pub fn design_va(proto: &ProtocolModel, det: &DetectorModel, channel: &ChannelModel) -> Result<f64> {
    Ok(optimize_va(proto, channel.transmission(), det, XI_DESIGN)?.v_a)
}

/// Resolves a preset by name.
pub fn preset(name: &str) -> Result<SimScenario> {
    let (eta, r, n) = match name {
        "baseline" => (DetectorModel::default().eta, 0.0, 1_000_000),
        "fig4a-r0.10" => (DetectorModel::default().eta, 0.10, 10_000_000),
        "fig4a-r0.11" => (DetectorModel::default().eta, 0.11, 10_000_000),
        "fig4b" => (DetectorModel::default().eta, R_BREACH, 10_000_000),
        "fig5" => (ETA_SWEEP, 0.10, 1_000_000),
        "fig6" => (ETA_SWEEP, R_BREACH, 1_000_000),
        other => {
            return Err(Error::config(format!(
                "unknown preset '{other}', expected one of {}",
                NAMES.join(", ")
            )))
        }
    };
    let detector = DetectorModel {
        eta,
        ..DetectorModel::default()
    };
    let channel = ChannelModel::default();
    let attack = if name == "baseline" {
        AttackModel::honest()
    } else {
        AttackModel::blinding(r)
    };
    let mut protocol = ProtocolModel::default();
    protocol.v_a = design_va(&protocol, &detector, &channel)?;
    Ok(SimScenario {
        protocol,
        detector,
        channel,
        attack,
        clipping: true,
        seed: DEFAULT_SEED,
        n,
    })
}
