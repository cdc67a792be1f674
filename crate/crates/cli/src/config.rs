//! Effective run configuration.
//!
//! A configuration is a flat set of dotted keys (`detector.eta`, `sim.seed`,
//! ...). Defaults come from the selected preset; a TOML file and `--set`
//! overrides may only change keys that already exist.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use hdblind_core::mc::SimScenario;
use hdblind_core::model::{
    AttackModel, ChannelModel, CharacterizationSetup, DetectorModel, ProtocolModel, ReceiverTrust,
};
use hdblind_core::presets::{self, design_va, BALANCE_ONSETS_UW};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Modulation variance: fixed, or optimised for the configured channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VaSetting {
    Auto,
    Fixed(f64),
}

impl Serialize for VaSetting {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            VaSetting::Auto => s.serialize_str("auto"),
            VaSetting::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for VaSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = VaSetting;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"auto\"")
            }
            fn visit_str<E: de::Error>(self, s: &str) -> std::result::Result<VaSetting, E> {
                if s == "auto" {
                    Ok(VaSetting::Auto)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(s), &self))
                }
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<VaSetting, E> {
                Ok(VaSetting::Fixed(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<VaSetting, E> {
                Ok(VaSetting::Fixed(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<VaSetting, E> {
                Ok(VaSetting::Fixed(v as f64))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub v_a: VaSetting,
    pub beta: f64,
    pub receiver: ReceiverTrust,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n: usize,
    pub clipping: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig2Config {
    pub onset1_uw: f64,
    pub onset2_uw: f64,
    pub power_max_uw: f64,
    pub power_step_uw: f64,
    pub n_per_point: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig3Config {
    pub r_max: f64,
    pub r_step: f64,
    /// Second intensity-fluctuation ratio plotted next to `attack.f_ext`.
    pub f_ext_alt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig4Config {
    pub scatter_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig5Config {
    pub l_max_km: f64,
    pub l_step_km: f64,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig6Config {
    pub coarse_max: f64,
    pub coarse_step: f64,
    pub fine_min: f64,
    pub fine_max: f64,
    pub fine_step: f64,
    pub lengths_km: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuardConfig {
    pub s_lo: f64,
    pub s_hi: f64,
    pub max_fraction: f64,
    pub block_size: usize,
    pub blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub protocol: ProtocolConfig,
    pub detector: DetectorModel,
    pub channel: ChannelModel,
    pub attack: AttackModel,
    pub bench: CharacterizationSetup,
    pub fig2: Fig2Config,
    pub fig3: Fig3Config,
    pub fig4: Fig4Config,
    pub fig5: Fig5Config,
    pub fig6: Fig6Config,
    pub guard: GuardConfig,
}

impl RunConfig {
    /// Defaults of a named preset.
    pub fn from_preset(name: &str) -> Result<Self> {
        let scn = presets::preset(name)?;
        let det = scn.detector;
        Ok(RunConfig {
            sim: SimConfig {
                seed: scn.seed,
                n: scn.n,
                clipping: scn.clipping,
            },
            protocol: ProtocolConfig {
                v_a: VaSetting::Auto,
                beta: scn.protocol.beta,
                receiver: scn.protocol.receiver,
            },
            detector: det,
            channel: scn.channel,
            attack: scn.attack,
            bench: CharacterizationSetup::default(),
            fig2: Fig2Config {
                onset1_uw: BALANCE_ONSETS_UW[0],
                onset2_uw: BALANCE_ONSETS_UW[1],
                power_max_uw: 100.0,
                power_step_uw: 1.0,
                n_per_point: 100_000,
            },
            fig3: Fig3Config {
                r_max: 0.15,
                r_step: 0.001,
                f_ext_alt: 0.02,
            },
            fig4: Fig4Config {
                scatter_points: 100_000,
            },
            fig5: Fig5Config {
                l_max_km: 100.0,
                l_step_km: 10.0,
                ratios: vec![0.10, 0.11, 0.12, 0.13, 0.14],
            },
            fig6: Fig6Config {
                coarse_max: 0.14,
                coarse_step: 0.01,
                fine_min: 0.124,
                fine_max: 0.130,
                fine_step: 0.0005,
                lengths_km: vec![20.0, 25.0, 30.0, 35.0, 40.0],
            },
            guard: GuardConfig {
                s_lo: hdblind_core::guard::DEFAULT_THRESHOLD_RATIO * det.alpha_lo,
                s_hi: hdblind_core::guard::DEFAULT_THRESHOLD_RATIO * det.alpha_hi,
                max_fraction: hdblind_core::guard::DEFAULT_MAX_FRACTION,
                block_size: hdblind_core::guard::DEFAULT_BLOCK_SIZE,
                blocks: hdblind_core::guard::DEFAULT_BLOCKS,
            },
        })
    }

    pub fn flatten(&self) -> BTreeMap<String, Value> {
        let mut out = BTreeMap::new();
        flatten_into(&mut out, "", serde_json::to_value(self).expect("config serializes"));
        out
    }

    fn from_flat(flat: &BTreeMap<String, Value>) -> Result<Self> {
        let mut root = Map::new();
        for (key, value) in flat {
            let mut node = &mut root;
            let mut parts = key.split('.').peekable();
            while let Some(part) = parts.next() {
                if parts.peek().is_none() {
                    node.insert(part.to_string(), value.clone());
                } else {
                    node = node
                        .entry(part.to_string())
                        .or_insert_with(|| Value::Object(Map::new()))
                        .as_object_mut()
                        .expect("config sections are objects");
                }
            }
        }
        serde_json::from_value(Value::Object(root)).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Applies `overrides`, rejecting keys the configuration does not have.
    pub fn with_overrides<I>(&self, overrides: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Value)>,
    {
        let mut flat = self.flatten();
        for (key, value) in overrides {
            match flat.get_mut(&key) {
                Some(slot) => *slot = value,
                None => return Err(CliError::Config(format!("unknown configuration key '{key}'"))),
            }
        }
        let cfg = Self::from_flat(&flat)?;
        cfg.scenario()?;
        Ok(cfg)
    }

    /// Canonical `key = value` text, one line per key in sorted order.
    pub fn canonical_lines(&self) -> Vec<String> {
        self.flatten().iter().map(|(k, v)| format!("{k} = {v}")).collect()
    }

    pub fn sha256(&self) -> String {
        let mut hasher = Sha256::new();
        for line in self.canonical_lines() {
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Protocol parameters with `V_A` resolved for `channel`.
    pub fn protocol_for(&self, channel: &ChannelModel) -> Result<ProtocolModel> {
        let mut proto = ProtocolModel {
            v_a: 0.0,
            beta: self.protocol.beta,
            receiver: self.protocol.receiver,
        };
        proto.v_a = match self.protocol.v_a {
            VaSetting::Fixed(v) => v,
            VaSetting::Auto => design_va(&proto, &self.detector, channel)?,
        };
        Ok(proto)
    }

    pub fn scenario(&self) -> Result<SimScenario> {
        let scn = SimScenario {
            protocol: self.protocol_for(&self.channel)?,
            detector: self.detector,
            channel: self.channel,
            attack: self.attack,
            clipping: self.sim.clipping,
            seed: self.sim.seed,
            n: self.sim.n,
        };
        scn.validate()?;
        Ok(scn)
    }
}

fn flatten_into(out: &mut BTreeMap<String, Value>, prefix: &str, value: Value) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
                flatten_into(out, &key, v);
            }
        }
        leaf => {
            out.insert(prefix.to_string(), leaf);
        }
    }
}

/// Parses a `--set key=value` argument. The value is read as JSON when it
/// parses as such and as a bare string otherwise.
pub fn parse_assignment(arg: &str) -> Result<(String, Value)> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("expected key=value, got '{arg}'")))?;
    let raw = raw.trim();
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

/// Reads a TOML document of dotted keys or nested tables.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, Value)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let json = serde_json::to_value(table).map_err(|e| CliError::Config(e.to_string()))?;
    let mut flat = BTreeMap::new();
    flatten_into(&mut flat, "", json);
    Ok(flat.into_iter().collect())
}
