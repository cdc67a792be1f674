//! Physical parameters and closed-form homodyne-detector formulas.
//!
//! Protocol-level quantities are normalised to shot-noise units: variances
//! are divided by `N₀ = η·I_lo` and amplitudes by `√N₀`. The LO-only
//! detector statistics ([`DetectorModel::hd_mean_lo_only`],
//! [`DetectorModel::hd_variance_lo_only`]) are in raw photon-count units and
//! only feed the detector-characterisation mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planck constant, J·s.
const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s.
const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Balanced homodyne detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Overall detection efficiency η.
    pub eta: f64,
    /// Electronic noise variance in SNU.
    pub v_ele: f64,
    /// Overall transmission seen by light entering the LO port.
    pub t_lo: f64,
    /// Photons per LO pulse.
    pub i_lo: f64,
    /// Relative LO intensity fluctuation.
    pub f_lo: f64,
    /// Upper linear detection limit, in √N₀.
    pub alpha_hi: f64,
    /// Lower linear detection limit, in √N₀.
    pub alpha_lo: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            eta: 0.6,
            v_ele: 0.01,
            t_lo: 0.5,
            i_lo: 1e8,
            f_lo: 0.0,
            alpha_hi: 20.0,
            alpha_lo: -20.0,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::config(format!(
                "detector.eta must be in (0, 1], got {}",
                self.eta
            )));
        }
        if !(self.v_ele >= 0.0 && self.v_ele.is_finite()) {
            return Err(Error::config(format!(
                "detector.v_ele must be >= 0, got {}",
                self.v_ele
            )));
        }
        if !(self.t_lo > 0.0 && self.t_lo < 1.0) {
            return Err(Error::config(format!(
                "detector.t_lo must be in (0, 1), got {}",
                self.t_lo
            )));
        }
        if !(self.i_lo >= 1.0 && self.i_lo.is_finite()) {
            return Err(Error::config(format!("detector.i_lo must be >= 1, got {}", self.i_lo)));
        }
        if !(self.f_lo >= 0.0 && self.f_lo.is_finite()) {
            return Err(Error::config(format!("detector.f_lo must be >= 0, got {}", self.f_lo)));
        }
        if !(self.alpha_lo < self.alpha_hi) {
            return Err(Error::config(format!(
                "detector limits must satisfy alpha_lo < alpha_hi, got [{}, {}]",
                self.alpha_lo, self.alpha_hi
            )));
        }
        Ok(())
    }

    /// Shot noise `N₀ = η·I_lo` in photon-count units.
    pub fn shot_noise(&self) -> f64 {
        self.eta * self.i_lo
    }

    /// Mean LO-only output `η(1 − 2T)·I_lo`, caused by LO leakage through an
    /// imbalanced beam splitter.
    pub fn hd_mean_lo_only(&self, t_port: f64) -> f64 {
        self.eta * (1.0 - 2.0 * t_port) * self.i_lo
    }

    /// LO-only output variance: intensity-fluctuation leakage, imbalanced
    /// shot noise and electronic noise.
    pub fn hd_variance_lo_only(&self, t_port: f64) -> f64 {
        let leak = self.eta * (1.0 - 2.0 * t_port) * self.f_lo * self.i_lo;
        leak * leak + 4.0 * (1.0 - t_port) * t_port * self.eta * self.i_lo + self.v_ele
    }

    /// Saturates `x` to the linear range `[alpha_lo, alpha_hi]`.
    pub fn clip(&self, x: f64) -> f64 {
        clip(x, self.alpha_lo, self.alpha_hi)
    }
}

/// Piecewise saturation of an ADC output to `[lo, hi]`.
#[inline]
pub fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    if x >= hi {
        hi
    } else if x <= lo {
        lo
    } else {
        x
    }
}

/// Common-mode rejection ratio of a detector with imbalance factor `epsilon`.
///
/// Reported as `20·log₁₀(2ε)` dB so a well balanced detector reads as a
/// large negative figure (ε = 0.12 % gives about −52.4 dB).
pub fn cmrr(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::domain(format!("CMRR needs epsilon > 0, got {epsilon}")));
    }
    Ok(20.0 * (2.0 * epsilon).log10())
}

/// Fiber link between Alice and Bob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub length_km: f64,
    pub loss_db_per_km: f64,
    /// Excess noise of the honest channel, SNU referred to the channel input.
    /// Zero in the attack studies; used for false-alarm studies.
    pub xi_intrinsic: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            length_km: 25.0,
            loss_db_per_km: 0.21,
            xi_intrinsic: 0.0,
        }
    }
}

impl ChannelModel {
    pub fn new(length_km: f64) -> Self {
        Self {
            length_km,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_km >= 0.0 && self.length_km.is_finite()) {
            return Err(Error::config(format!(
                "channel.length_km must be >= 0, got {}",
                self.length_km
            )));
        }
        if !(self.loss_db_per_km > 0.0 && self.loss_db_per_km.is_finite()) {
            return Err(Error::config(format!(
                "channel.loss_db_per_km must be > 0, got {}",
                self.loss_db_per_km
            )));
        }
        if !(self.xi_intrinsic >= 0.0 && self.xi_intrinsic.is_finite()) {
            return Err(Error::config(format!(
                "channel.xi_intrinsic must be >= 0, got {}",
                self.xi_intrinsic
            )));
        }
        Ok(())
    }

    /// `T = 10^(−a·L/10)`.
    pub fn transmission(&self) -> f64 {
        10f64.powf(-self.loss_db_per_km * self.length_km / 10.0)
    }
}

/// Eve's intercept-resend plus blinding-light configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    pub active: bool,
    /// Photon-number ratio `I_ext / I_lo`.
    pub r: f64,
    /// HD transmission for the external light entering the signal port.
    pub t_ext: f64,
    /// External laser relative intensity fluctuation.
    pub f_ext: f64,
    /// Technical excess noise, SNU.
    pub xi_tech: f64,
    /// Re-preparation gain after heterodyne detection; must be √2.
    pub gain: f64,
}

impl Default for AttackModel {
    fn default() -> Self {
        Self {
            active: true,
            r: 0.0,
            t_ext: 0.49,
            f_ext: 0.001,
            xi_tech: 0.1,
            gain: std::f64::consts::SQRT_2,
        }
    }
}

impl AttackModel {
    pub fn honest() -> Self {
        Self {
            active: false,
            ..Self::default()
        }
    }

    pub fn blinding(r: f64) -> Self {
        Self { r, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(Error::config(format!("attack.r must be >= 0, got {}", self.r)));
        }
        if !(self.t_ext > 0.0 && self.t_ext < 1.0) {
            return Err(Error::config(format!(
                "attack.t_ext must be in (0, 1), got {}",
                self.t_ext
            )));
        }
        if !(self.f_ext >= 0.0 && self.f_ext.is_finite()) {
            return Err(Error::config(format!("attack.f_ext must be >= 0, got {}", self.f_ext)));
        }
        if !(self.xi_tech >= 0.0 && self.xi_tech.is_finite()) {
            return Err(Error::config(format!(
                "attack.xi_tech must be >= 0, got {}",
                self.xi_tech
            )));
        }
        if self.gain != std::f64::consts::SQRT_2 {
            return Err(Error::config(format!(
                "attack.gain is fixed to sqrt(2) by the intercept-resend strategy, got {}",
                self.gain
            )));
        }
        Ok(())
    }

    /// Excess noise of heterodyne intercept-resend: one vacuum unit from the
    /// heterodyne beam splitter and one from coherent re-preparation.
    pub fn xi_ir(&self) -> f64 {
        if self.active {
            2.0
        } else {
            0.0
        }
    }

    /// Technical noise, zero for the honest channel.
    pub fn xi_tech(&self) -> f64 {
        if self.active {
            self.xi_tech
        } else {
            0.0
        }
    }

    /// Shot noise of the external light at Bob, SNU: `4·T_ext(1 − T_ext)·R`.
    pub fn external_shot_noise(&self, _det: &DetectorModel) -> f64 {
        if !self.active {
            return 0.0;
        }
        4.0 * self.t_ext * (1.0 - self.t_ext) * self.r
    }

    /// Intensity-fluctuation noise of the external light at Bob, SNU:
    /// `R²·η·f_ext²·(1 − 2T_ext)²·I_lo`.
    pub fn external_fluctuation_noise(&self, det: &DetectorModel) -> f64 {
        if !self.active {
            return 0.0;
        }
        let imbalance = 1.0 - 2.0 * self.t_ext;
        self.r * self.r * det.eta * self.f_ext * self.f_ext * imbalance * imbalance * det.i_lo
    }

    /// Total external-light noise referred to the channel input.
    pub fn external_excess_noise(&self, det: &DetectorModel, ch: &ChannelModel) -> Result<f64> {
        let t = ch.transmission();
        if !(t > 0.0) {
            return Err(Error::domain(format!(
                "channel transmission underflows to zero at {} km",
                ch.length_km
            )));
        }
        Ok((self.external_shot_noise(det) + self.external_fluctuation_noise(det)) / t)
    }

    /// Deterministic HD offset from the external light, in √N₀:
    /// `R·√(η·I_lo)·(1 − 2T_ext)`.
    pub fn external_offset(&self, det: &DetectorModel) -> f64 {
        if !self.active {
            return 0.0;
        }
        self.r * (det.eta * det.i_lo).sqrt() * (1.0 - 2.0 * self.t_ext)
    }
}

/// How the secret key rate treats Bob's detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReceiverTrust {
    /// Calibrated η and `v_ele` both belong to Bob.
    Trusted,
    /// η is folded into the channel (`T → ηT`); only `v_ele` stays trusted.
    #[default]
    UntrustedEfficiency,
}

impl ReceiverTrust {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReceiverTrust::Trusted => "trusted",
            ReceiverTrust::UntrustedEfficiency => "untrusted-efficiency",
        }
    }
}

impl std::str::FromStr for ReceiverTrust {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trusted" => Ok(ReceiverTrust::Trusted),
            "untrusted-efficiency" => Ok(ReceiverTrust::UntrustedEfficiency),
            other => Err(Error::config(format!(
                "unknown receiver trust model {other:?} (expected trusted | untrusted-efficiency)"
            ))),
        }
    }
}

/// Alice's modulation and the post-processing assumptions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolModel {
    /// Gaussian modulation variance, SNU.
    pub v_a: f64,
    /// Reverse-reconciliation efficiency.
    pub beta: f64,
    pub receiver: ReceiverTrust,
}

impl Default for ProtocolModel {
    fn default() -> Self {
        Self {
            v_a: 4.0,
            beta: 0.95,
            receiver: ReceiverTrust::default(),
        }
    }
}

impl ProtocolModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_a >= 0.0 && self.v_a.is_finite()) {
            return Err(Error::config(format!("protocol.v_a must be >= 0, got {}", self.v_a)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::config(format!(
                "protocol.beta must be in (0, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Bench setup for the LO-only detector characterisation (volts domain).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationSetup {
    pub wavelength_nm: f64,
    pub rep_rate_hz: f64,
    /// Output volts per photon of photocurrent difference.
    pub volts_per_photon: f64,
    /// Symmetric DAQ range, volts.
    pub daq_limit_v: f64,
    /// Electronic noise variance at the DAQ, V².
    pub electronic_var_v2: f64,
}

impl Default for CharacterizationSetup {
    fn default() -> Self {
        Self {
            wavelength_nm: 1550.0,
            rep_rate_hz: 1e6,
            volts_per_photon: 3.4e-6,
            daq_limit_v: 0.5,
            electronic_var_v2: 1e-5,
        }
    }
}

impl CharacterizationSetup {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("wavelength_nm", self.wavelength_nm),
            ("rep_rate_hz", self.rep_rate_hz),
            ("volts_per_photon", self.volts_per_photon),
            ("daq_limit_v", self.daq_limit_v),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("fig2.{name} must be > 0, got {v}")));
            }
        }
        if !(self.electronic_var_v2 >= 0.0) {
            return Err(Error::config(format!(
                "fig2.electronic_var_v2 must be >= 0, got {}",
                self.electronic_var_v2
            )));
        }
        Ok(())
    }

    pub fn photon_energy_j(&self) -> f64 {
        PLANCK * SPEED_OF_LIGHT / (self.wavelength_nm * 1e-9)
    }

    /// Photons per pulse for an average optical power in µW.
    pub fn photons_per_pulse(&self, power_uw: f64) -> f64 {
        power_uw * 1e-6 / (self.rep_rate_hz * self.photon_energy_j())
    }

    /// LO-port transmission whose leakage offset reaches the DAQ limit
    /// exactly at `power_uw`.
    pub fn t_port_saturating_at(&self, det: &DetectorModel, power_uw: f64) -> f64 {
        let photons = self.photons_per_pulse(power_uw);
        let epsilon = self.daq_limit_v / (self.volts_per_photon * det.eta * photons);
        (1.0 - epsilon) / 2.0
    }

    /// Unclipped mean output in volts.
    pub fn mean_volts(&self, det: &DetectorModel, t_port: f64, power_uw: f64) -> f64 {
        let lo = DetectorModel {
            i_lo: self.photons_per_pulse(power_uw),
            ..*det
        };
        self.volts_per_photon * lo.hd_mean_lo_only(t_port)
    }

    /// Unclipped variance in V², with electronic noise given in volts.
    pub fn variance_volts(&self, det: &DetectorModel, t_port: f64, power_uw: f64) -> f64 {
        let lo = DetectorModel {
            i_lo: self.photons_per_pulse(power_uw),
            v_ele: 0.0,
            ..*det
        };
        self.volts_per_photon * self.volts_per_photon * lo.hd_variance_lo_only(t_port) + self.electronic_var_v2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn det() -> DetectorModel {
        DetectorModel::default()
    }

    #[test]
    fn lo_mean_examples() {
        assert_eq!(det().hd_mean_lo_only(0.5), 0.0);
        assert_relative_eq!(det().hd_mean_lo_only(0.49), 1.2e6, max_relative = 1e-9);
        let d = det();
        let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        for w in grid.windows(2) {
            assert!(d.hd_mean_lo_only(w[1]) < d.hd_mean_lo_only(w[0]));
        }
        assert!(d.hd_mean_lo_only(0.6) < 0.0);
    }

    #[test]
    fn lo_variance_examples() {
        let d = det();
        assert_eq!(d.hd_variance_lo_only(0.5), d.eta * d.i_lo + d.v_ele);
        let doubled = DetectorModel {
            i_lo: 2e8,
            v_ele: 0.0,
            ..d
        };
        let single = DetectorModel { v_ele: 0.0, ..d };
        assert_relative_eq!(
            doubled.hd_variance_lo_only(0.5),
            2.0 * single.hd_variance_lo_only(0.5),
            max_relative = 1e-12
        );

        let noisy = DetectorModel { f_lo: 0.02, ..d };
        let fluct = noisy.hd_variance_lo_only(0.49) - 4.0 * 0.51 * 0.49 * 6e7 - d.v_ele;
        assert_relative_eq!(fluct, 5.76e8, max_relative = 1e-9);
        assert!(fluct > 59_976_000.0);
    }

    #[test]
    fn shot_noise_is_variance_slope() {
        let a = DetectorModel { i_lo: 1e8, ..det() };
        let b = DetectorModel { i_lo: 3e8, ..det() };
        let slope = (b.hd_variance_lo_only(0.5) - a.hd_variance_lo_only(0.5)) / (b.i_lo - a.i_lo);
        assert_relative_eq!(slope * a.i_lo, a.shot_noise(), max_relative = 1e-12);
    }

    #[test]
    fn cmrr_values() {
        assert_relative_eq!(cmrr(0.0012).unwrap(), -52.395_775_165_767_88, max_relative = 1e-9);
        assert_eq!(cmrr(0.5).unwrap(), 0.0);
        assert_relative_eq!(cmrr(0.05).unwrap(), -20.0, max_relative = 1e-12);
        assert!(matches!(cmrr(0.0), Err(Error::Domain(_))));
        assert!(matches!(cmrr(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn clip_examples() {
        let d = det();
        assert_eq!(d.clip(0.0), 0.0);
        assert_eq!(d.clip(25.0), 20.0);
        assert_eq!(d.clip(-31.7), -20.0);
        assert_eq!(d.clip(20.0), 20.0);
        assert_eq!(d.clip(19.999), 19.999);
    }

    #[test]
    fn external_noise_examples() {
        let d = det();
        let att = AttackModel::blinding(0.1274);
        assert_eq!(AttackModel::blinding(0.0).external_shot_noise(&d), 0.0);
        assert_relative_eq!(att.external_shot_noise(&d), 0.127_349_04, max_relative = 1e-9);
        let half = AttackModel {
            t_ext: 0.5,
            ..AttackModel::blinding(1.0)
        };
        let other = AttackModel {
            t_ext: 0.3,
            ..AttackModel::blinding(1.0)
        };
        assert_eq!(half.external_shot_noise(&d), 1.0);
        assert!(other.external_shot_noise(&d) < 1.0);

        assert_eq!(AttackModel { f_ext: 0.0, ..att }.external_fluctuation_noise(&d), 0.0);
        assert_relative_eq!(att.external_fluctuation_noise(&d), 3.895_382_4e-4, max_relative = 1e-9);
        let common = AttackModel { f_ext: 0.02, ..att };
        assert_relative_eq!(
            common.external_fluctuation_noise(&d),
            400.0 * att.external_fluctuation_noise(&d),
            max_relative = 1e-9
        );
    }

    #[test]
    fn external_excess_examples() {
        let d = det();
        for l in [0.0, 10.0, 80.0] {
            let xi = AttackModel::blinding(0.0)
                .external_excess_noise(&d, &ChannelModel::new(l))
                .unwrap();
            assert_eq!(xi, 0.0);
        }
        let att = AttackModel::blinding(0.1274);
        let at_bob = att.external_shot_noise(&d) + att.external_fluctuation_noise(&d);
        assert_eq!(att.external_excess_noise(&d, &ChannelModel::new(0.0)).unwrap(), at_bob);
        assert_relative_eq!(
            att.external_excess_noise(&d, &ChannelModel::new(25.0)).unwrap(),
            0.427_880_089_575_581_3,
            max_relative = 1e-9
        );
        let far = ChannelModel::new(1e6);
        assert!(matches!(att.external_excess_noise(&d, &far), Err(Error::Domain(_))));
    }

    #[test]
    fn external_offset_examples() {
        let d = det();
        assert_eq!(AttackModel::blinding(0.0).external_offset(&d), 0.0);
        assert_relative_eq!(
            AttackModel::blinding(0.1274).external_offset(&d),
            19.736_723_132_273,
            max_relative = 1e-9
        );
        let balanced = AttackModel {
            t_ext: 0.5,
            ..AttackModel::blinding(0.3)
        };
        assert_eq!(balanced.external_offset(&d), 0.0);
    }

    #[test]
    fn inactive_attack_contributes_nothing() {
        let d = det();
        let att = AttackModel {
            r: 0.2,
            ..AttackModel::honest()
        };
        assert_eq!(att.xi_ir(), 0.0);
        assert_eq!(att.xi_tech(), 0.0);
        assert_eq!(att.external_offset(&d), 0.0);
        assert_eq!(att.external_shot_noise(&d), 0.0);
        assert_eq!(att.external_fluctuation_noise(&d), 0.0);
        assert_eq!(AttackModel::default().xi_ir(), 2.0);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(DetectorModel { eta: 0.0, ..det() }.validate().is_err());
        assert!(DetectorModel { t_lo: 1.0, ..det() }.validate().is_err());
        assert!(DetectorModel {
            alpha_lo: 20.0,
            ..det()
        }
        .validate()
        .is_err());
        assert!(DetectorModel { i_lo: 0.5, ..det() }.validate().is_err());
        assert!(AttackModel {
            gain: 1.0,
            ..AttackModel::default()
        }
        .validate()
        .is_err());
        assert!(AttackModel {
            r: -0.1,
            ..AttackModel::default()
        }
        .validate()
        .is_err());
        assert!(ProtocolModel {
            beta: 0.0,
            ..ProtocolModel::default()
        }
        .validate()
        .is_err());
        assert!(ChannelModel {
            loss_db_per_km: 0.0,
            ..ChannelModel::default()
        }
        .validate()
        .is_err());
        assert!(det().validate().is_ok());
        assert!(AttackModel::default().validate().is_ok());
    }

    #[test]
    fn transmission_at_zero_length_is_one() {
        assert_eq!(ChannelModel::new(0.0).transmission(), 1.0);
        assert_relative_eq!(
            ChannelModel::new(25.0).transmission(),
            10f64.powf(-0.525),
            max_relative = 1e-12
        );
    }

    #[test]
    fn characterization_saturation_power() {
        let setup = CharacterizationSetup::default();
        let d = det();
        let t = setup.t_port_saturating_at(&d, 45.0);
        assert!(t < 0.5 && t > 0.49);
        assert_relative_eq!(setup.mean_volts(&d, t, 45.0), setup.daq_limit_v, max_relative = 1e-12);
        // 1 µW at 1 MHz and 1550 nm is about 7.8e6 photons per pulse.
        assert_relative_eq!(setup.photons_per_pulse(1.0), 7.803e6, max_relative = 1e-3);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn clip_is_idempotent_and_monotone(x in -100.0f64..100.0, y in -100.0f64..100.0) {
            let d = DetectorModel::default();
            prop_assert_eq!(d.clip(d.clip(x)), d.clip(x));
            if x <= y {
                prop_assert!(d.clip(x) <= d.clip(y));
            }
            if x > d.alpha_lo && x < d.alpha_hi {
                prop_assert_eq!(d.clip(x), x);
            }
        }

        #[test]
        fn excess_noise_increases_with_r_and_length(
            r in 0.001f64..0.5,
            dr in 0.0001f64..0.1,
            l in 0.0f64..100.0,
            dl in 0.1f64..50.0,
        ) {
            let d = DetectorModel::default();
            let a = AttackModel::blinding(r);
            let b = AttackModel::blinding(r + dr);
            let ch = ChannelModel::new(l);
            let far = ChannelModel::new(l + dl);
            prop_assert!(b.external_excess_noise(&d, &ch).unwrap() > a.external_excess_noise(&d, &ch).unwrap());
            prop_assert!(a.external_excess_noise(&d, &far).unwrap() > a.external_excess_noise(&d, &ch).unwrap());
        }

        #[test]
        fn offset_and_shot_noise_vanish_only_at_zero(r in 0.0f64..1.0, t_ext in 0.01f64..0.99) {
            let d = DetectorModel::default();
            let a = AttackModel { r, t_ext, ..AttackModel::default() };
            prop_assert_eq!(a.external_shot_noise(&d) == 0.0, r == 0.0);
            if t_ext != 0.5 {
                prop_assert_eq!(a.external_offset(&d) == 0.0, r == 0.0);
            }
        }

        #[test]
        fn formulas_are_deterministic(r in 0.0f64..1.0, l in 0.0f64..100.0) {
            let d = DetectorModel::default();
            let a = AttackModel::blinding(r);
            let ch = ChannelModel::new(l);
            prop_assert_eq!(
                a.external_excess_noise(&d, &ch).unwrap().to_bits(),
                a.external_excess_noise(&d, &ch).unwrap().to_bits()
            );
            prop_assert_eq!(a.external_offset(&d).to_bits(), a.external_offset(&d).to_bits());
        }
    }
}
