//! Seeded Monte Carlo engine for per-pulse `(X_A, X_B)` records.
//!
//! Only the X quadrature is generated; P is statistically identical, so the
//! sifting step of the protocol has nothing to do here. Each pulse draws ten
//! standard normals from five counter-addressed streams (see [`crate::rng`]),
//! so a batch is a pure function of `(scenario, pulse index)` and any split
//! of the index range reproduces it exactly.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{MomentAccumulator, RunningMoments};
use crate::model::{clip, AttackModel, ChannelModel, CharacterizationSetup, DetectorModel, ProtocolModel};
use crate::rng::{domain, NormalStreams};

/// Pulses per reduction chunk. Moments are merged chunk by chunk in index
/// order, so the result does not depend on the thread count.
const CHUNK: usize = 1 << 16;

type ProtocolStreams = NormalStreams<5>;

/// Complete description of one simulated run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub protocol: ProtocolModel,
    pub detector: DetectorModel,
    pub channel: ChannelModel,
    pub attack: AttackModel,
    /// Apply the detector's linear-range saturation.
    pub clipping: bool,
    pub seed: u64,
    pub n: usize,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        self.detector.validate()?;
        self.channel.validate()?;
        self.attack.validate()?;
        if self.n < 1 {
            return Err(Error::config("sim.n must be >= 1"));
        }
        Ok(())
    }
}

/// Paired Alice/Bob records plus saturation flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialBatch {
    pub x_a: Vec<f64>,
    pub x_b: Vec<f64>,
    pub clipped_hi: Vec<bool>,
    pub clipped_lo: Vec<bool>,
}

impl TrialBatch {
    fn with_capacity(n: usize) -> Result<Self> {
        let mut b = TrialBatch::default();
        let alloc = |e: std::collections::TryReserveError| {
            log::error!("batch allocation failed: {e}");
            Error::Allocation { requested: n }
        };
        b.x_a.try_reserve_exact(n).map_err(alloc)?;
        b.x_b.try_reserve_exact(n).map_err(alloc)?;
        b.clipped_hi.try_reserve_exact(n).map_err(alloc)?;
        b.clipped_lo.try_reserve_exact(n).map_err(alloc)?;
        Ok(b)
    }

    pub fn n(&self) -> usize {
        self.x_a.len()
    }

    pub fn clipped_fraction(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        let clipped = self
            .clipped_hi
            .iter()
            .zip(&self.clipped_lo)
            .filter(|(&h, &l)| h || l)
            .count();
        clipped as f64 / self.n() as f64
    }
}

/// The ten standard normals one pulse consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseNoise {
    pub alice_mod: f64,
    /// Vacuum of Alice's coherent state, `X₀`.
    pub vacuum: f64,
    /// Vacuum added by Eve's heterodyne beam splitter, `X₀′`.
    pub eve_heterodyne: f64,
    /// Vacuum of Eve's re-prepared coherent state, `X₀″`.
    pub eve_prepare: f64,
    pub tech: f64,
    /// Vacuum entering through Bob's overall loss, `X₀‴`.
    pub bob_loss: f64,
    /// Vacuum beating with the external light, `X₀⁗`.
    pub ext_shot: f64,
    pub ext_jitter: f64,
    pub electronic: f64,
    pub honest_xi: f64,
}

impl PulseNoise {
    #[inline]
    fn draw(streams: &mut ProtocolStreams) -> Self {
        let [[a0, a1], [b0, b1], [c0, c1], [d0, d1], [e0, e1]] = streams.next_pulse();
        Self {
            alice_mod: a0,
            vacuum: a1,
            eve_heterodyne: b0,
            eve_prepare: b1,
            tech: c0,
            bob_loss: c1,
            ext_shot: d0,
            ext_jitter: d1,
            electronic: e0,
            honest_xi: e1,
        }
    }
}

/// Alice's modulation `X_A ~ N(0, V_A)` and transmitted quadrature
/// `X = X_A + X₀`.
#[inline]
pub fn alice_symbol(sqrt_v_a: f64, noise: &PulseNoise) -> (f64, f64) {
    let x_a = sqrt_v_a * noise.alice_mod;
    (x_a, x_a + noise.vacuum)
}

/// Draws `n` Alice symbols `(X_A, X)` from the protocol streams.
pub fn sample_alice(n: usize, v_a: f64, seed: u64) -> Result<Vec<(f64, f64)>> {
    if !(v_a >= 0.0) {
        return Err(Error::config(format!("v_a must be >= 0, got {v_a}")));
    }
    let sqrt_v_a = v_a.sqrt();
    let mut streams = ProtocolStreams::new(seed, domain::PROTOCOL, 0);
    Ok((0..n)
        .map(|_| alice_symbol(sqrt_v_a, &PulseNoise::draw(&mut streams)))
        .collect())
}

/// Heterodyne intercept and coherent resend:
/// `X_M = (X + X₀′)/√2`, `X_E = g·X_M + X₀″`.
#[inline]
pub fn eve_intercept_resend(x: f64, eve_heterodyne: f64, eve_prepare: f64, gain: f64) -> f64 {
    let x_m = (x + eve_heterodyne) * std::f64::consts::FRAC_1_SQRT_2;
    gain * x_m + eve_prepare
}

/// Scenario constants hoisted out of the per-pulse loop.
#[derive(Debug, Clone, Copy)]
struct Kernel {
    active: bool,
    gain: f64,
    sqrt_v_a: f64,
    sqrt_eta_t: f64,
    sqrt_loss: f64,
    sqrt_xi_tech: f64,
    offset: f64,
    /// External-light noise terms are weighted by `η` so that the linear
    /// output variance is `ηT·(ξ_IR + ξ_tech + ξ_ext) + 1 + v_ele`.
    jitter: f64,
    sqrt_n0_ext: f64,
    sqrt_v_ele: f64,
    sqrt_honest_xi: f64,
    alpha_lo: f64,
    alpha_hi: f64,
}

impl Kernel {
    fn new(scn: &SimScenario) -> Self {
        let det = &scn.detector;
        let att = &scn.attack;
        let eta_t = det.eta * scn.channel.transmission();
        let offset = att.external_offset(det);
        Kernel {
            active: att.active,
            gain: att.gain,
            sqrt_v_a: scn.protocol.v_a.sqrt(),
            sqrt_eta_t: eta_t.sqrt(),
            sqrt_loss: (1.0 - eta_t).max(0.0).sqrt(),
            sqrt_xi_tech: att.xi_tech().sqrt(),
            offset,
            jitter: offset * att.f_ext * det.eta.sqrt(),
            sqrt_n0_ext: (det.eta * att.external_shot_noise(det)).sqrt(),
            sqrt_v_ele: det.v_ele.sqrt(),
            sqrt_honest_xi: (eta_t * scn.channel.xi_intrinsic).sqrt(),
            alpha_lo: det.alpha_lo,
            alpha_hi: det.alpha_hi,
        }
    }

    /// Returns `(X_A, X_Bi)` with `X_Bi` the unsaturated detector output.
    #[inline]
    fn pulse(&self, noise: &PulseNoise) -> (f64, f64) {
        let (x_a, x) = alice_symbol(self.sqrt_v_a, noise);
        let x_bi = if self.active {
            let x_e = eve_intercept_resend(x, noise.eve_heterodyne, noise.eve_prepare, self.gain);
            self.sqrt_eta_t * (x_e + self.sqrt_xi_tech * noise.tech)
                + self.sqrt_loss * noise.bob_loss
                + self.offset
                + self.jitter * noise.ext_jitter
                + self.sqrt_n0_ext * noise.ext_shot
                + self.sqrt_v_ele * noise.electronic
        } else {
            self.sqrt_eta_t * x
                + self.sqrt_loss * noise.bob_loss
                + self.sqrt_v_ele * noise.electronic
                + self.sqrt_honest_xi * noise.honest_xi
        };
        (x_a, x_bi)
    }
}

/// Bob's detector output for one pulse of `scn`, with the supplied noise.
/// Returns the linear output and, when `scn.clipping` is set, the
/// saturated one.
pub fn bob_measure(scn: &SimScenario, noise: &PulseNoise) -> (f64, f64) {
    let kernel = Kernel::new(scn);
    let (_, x_bi) = kernel.pulse(noise);
    let x_b = if scn.clipping {
        clip(x_bi, kernel.alpha_lo, kernel.alpha_hi)
    } else {
        x_bi
    };
    (x_bi, x_b)
}

#[allow(clippy::too_many_arguments)]
fn fill(
    kernel: &Kernel,
    clipping: bool,
    seed: u64,
    start: usize,
    x_a: &mut [f64],
    x_b: &mut [f64],
    hi: &mut [bool],
    lo: &mut [bool],
) {
    let mut streams = ProtocolStreams::new(seed, domain::PROTOCOL, start as u64);
    for i in 0..x_a.len() {
        let (a, b) = kernel.pulse(&PulseNoise::draw(&mut streams));
        x_a[i] = a;
        if clipping {
            hi[i] = b >= kernel.alpha_hi;
            lo[i] = b <= kernel.alpha_lo;
            x_b[i] = clip(b, kernel.alpha_lo, kernel.alpha_hi);
        } else {
            hi[i] = false;
            lo[i] = false;
            x_b[i] = b;
        }
    }
}

/// Generates pulses `range` of the scenario.
pub fn run_range(scn: &SimScenario, range: Range<usize>, partitions: usize) -> Result<TrialBatch> {
    scn.validate()?;
    let n = range.len();
    let mut batch = TrialBatch::with_capacity(n)?;
    batch.x_a.resize(n, 0.0);
    batch.x_b.resize(n, 0.0);
    batch.clipped_hi.resize(n, false);
    batch.clipped_lo.resize(n, false);
    if n == 0 {
        return Ok(batch);
    }
    let kernel = Kernel::new(scn);
    let part = n.div_ceil(partitions.max(1));
    batch
        .x_a
        .par_chunks_mut(part)
        .zip(batch.x_b.par_chunks_mut(part))
        .zip(batch.clipped_hi.par_chunks_mut(part))
        .zip(batch.clipped_lo.par_chunks_mut(part))
        .enumerate()
        .for_each(|(k, (((a, b), hi), lo))| {
            fill(&kernel, scn.clipping, scn.seed, range.start + k * part, a, b, hi, lo);
        });
    Ok(batch)
}

/// Generates the full batch split over `partitions` index ranges.
pub fn run_partitioned(scn: &SimScenario, partitions: usize) -> Result<TrialBatch> {
    run_range(scn, 0..scn.n, partitions)
}

/// Generates the full batch.
pub fn run(scn: &SimScenario) -> Result<TrialBatch> {
    run_partitioned(scn, rayon::current_num_threads())
}

/// Streaming moments of a scenario for both detector models at once.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMoments {
    /// Moments of `(X_A, X_Bi)` with an unbounded detector.
    pub linear: MomentAccumulator,
    /// Moments of `(X_A, X_B)` after saturation to `[α₂, α₁]`.
    pub clipped: MomentAccumulator,
    pub clipped_hi: u64,
    pub clipped_lo: u64,
}

impl ScenarioMoments {
    fn merge(&mut self, other: &ScenarioMoments) {
        self.linear.merge(&other.linear);
        self.clipped.merge(&other.clipped);
        self.clipped_hi += other.clipped_hi;
        self.clipped_lo += other.clipped_lo;
    }

    pub fn clipped_fraction(&self) -> f64 {
        if self.clipped.n == 0 {
            0.0
        } else {
            (self.clipped_hi + self.clipped_lo) as f64 / self.clipped.n as f64
        }
    }
}

/// Simulates `scn.n` pulses without materialising them and returns the
/// linear and saturated moments from the same draws. `scn.clipping` is
/// ignored.
pub fn simulate_moments(scn: &SimScenario) -> Result<ScenarioMoments> {
    scn.validate()?;
    let kernel = Kernel::new(scn);
    let chunks = scn.n.div_ceil(CHUNK);
    let parts: Vec<ScenarioMoments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(scn.n);
            let mut streams = ProtocolStreams::new(scn.seed, domain::PROTOCOL, start as u64);
            let mut m = ScenarioMoments::default();
            for _ in start..end {
                let (a, b) = kernel.pulse(&PulseNoise::draw(&mut streams));
                m.linear.push(a, b);
                if b >= kernel.alpha_hi {
                    m.clipped_hi += 1;
                } else if b <= kernel.alpha_lo {
                    m.clipped_lo += 1;
                }
                m.clipped.push(a, clip(b, kernel.alpha_lo, kernel.alpha_hi));
            }
            m
        })
        .collect();
    let mut total = ScenarioMoments::default();
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

/// One LO-power point of the detector characterisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationPoint {
    pub power_uw: f64,
    pub mean_v: f64,
    pub var_v2: f64,
}

/// LO-only detector statistics versus LO power, in volts after the DAQ clamp.
pub fn simulate_lo_characterization(
    det: &DetectorModel,
    setup: &CharacterizationSetup,
    powers_uw: &[f64],
    t_port: f64,
    n_per_point: usize,
    seed: u64,
) -> Result<Vec<CharacterizationPoint>> {
    setup.validate()?;
    if powers_uw.is_empty() {
        return Err(Error::config("characterisation power grid is empty"));
    }
    if let Some(p) = powers_uw.iter().find(|p| !(**p >= 0.0)) {
        return Err(Error::config(format!("LO power must be >= 0, got {p}")));
    }
    if !(t_port > 0.0 && t_port < 1.0) {
        return Err(Error::config(format!("balance t_port must be in (0, 1), got {t_port}")));
    }
    if n_per_point < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: n_per_point as u64,
        });
    }
    let limit = setup.daq_limit_v;
    let sigma_ele = setup.electronic_var_v2.sqrt();
    let points = powers_uw
        .par_iter()
        .enumerate()
        .map(|(k, &power)| {
            let photons = setup.photons_per_pulse(power);
            let leak = setup.volts_per_photon * det.eta * (1.0 - 2.0 * t_port) * photons;
            let shot = setup.volts_per_photon * 2.0 * (det.eta * t_port * (1.0 - t_port) * photons).sqrt();
            let start = (k as u64) * n_per_point as u64;
            let mut streams = NormalStreams::<2>::new(seed, domain::CHARACTERIZATION, start);
            let mut m = RunningMoments::default();
            for _ in 0..n_per_point {
                let [[jitter, vacuum], [ele, _]] = streams.next_pulse();
                let v = leak * (1.0 + det.f_lo * jitter) + shot * vacuum + sigma_ele * ele;
                m.push(clip(v, -limit, limit));
            }
            CharacterizationPoint {
                power_uw: power,
                mean_v: m.mean,
                var_v2: m.variance(),
            }
        })
        .collect();
    Ok(points)
}
