//! Alice/Bob parameter estimation from paired quadrature records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::TrialBatch;
use crate::model::{DetectorModel, ProtocolModel};

/// Relative mismatch between configured and measured `V_A` that is logged.
const VA_MISMATCH_WARN: f64 = 0.03;

/// One-pass bivariate moments (Welford update, Chan merge).
///
/// Samples are shifted by the first pair seen before accumulation, so large
/// common offsets do not eat into the precision of the central moments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentAccumulator {
    pub n: u64,
    shift_a: f64,
    shift_b: f64,
    /// Means of the shifted samples.
    mean_a: f64,
    mean_b: f64,
    m2_a: f64,
    m2_b: f64,
    co_ab: f64,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accumulator holding the given means and central sums
    /// `Σ(a−ā)²`, `Σ(b−b̄)²`, `Σ(a−ā)(b−b̄)` over `n` samples.
    pub fn from_central_sums(n: u64, means: (f64, f64), m2_a: f64, m2_b: f64, co_ab: f64) -> Self {
        Self {
            n,
            shift_a: means.0,
            shift_b: means.1,
            mean_a: 0.0,
            mean_b: 0.0,
            m2_a,
            m2_b,
            co_ab,
        }
    }

    #[inline]
    pub fn push(&mut self, a: f64, b: f64) {
        if self.n == 0 {
            self.shift_a = a;
            self.shift_b = b;
        }
        let (a, b) = (a - self.shift_a, b - self.shift_b);
        self.n += 1;
        let n = self.n as f64;
        let da = a - self.mean_a;
        let db = b - self.mean_b;
        self.mean_a += da / n;
        self.mean_b += db / n;
        self.m2_a += da * (a - self.mean_a);
        self.m2_b += db * (b - self.mean_b);
        self.co_ab += da * (b - self.mean_b);
    }

    /// Combines two disjoint samples.
    pub fn merge(&mut self, other: &MomentAccumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        // Shifts are sample values, so their difference is small and exact
        // whenever the data share an offset.
        let da = (other.shift_a - self.shift_a) + (other.mean_a - self.mean_a);
        let db = (other.shift_b - self.shift_b) + (other.mean_b - self.mean_b);
        let w = na * nb / n;
        self.m2_a += other.m2_a + da * da * w;
        self.m2_b += other.m2_b + db * db * w;
        self.co_ab += other.co_ab + da * db * w;
        self.mean_a += da * nb / n;
        self.mean_b += db * nb / n;
        self.n += other.n;
    }

    pub fn merged(mut self, other: &MomentAccumulator) -> Self {
        self.merge(other);
        self
    }

    pub fn mean_a(&self) -> f64 {
        self.shift_a + self.mean_a
    }

    pub fn mean_b(&self) -> f64 {
        self.shift_b + self.mean_b
    }

    pub fn variance_a(&self) -> f64 {
        self.m2_a / (self.n as f64 - 1.0)
    }

    pub fn variance_b(&self) -> f64 {
        self.m2_b / (self.n as f64 - 1.0)
    }

    pub fn covariance(&self) -> f64 {
        self.co_ab / (self.n as f64 - 1.0)
    }
}

/// Univariate running mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningMoments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n as f64 - 1.0)
        }
    }
}

/// Sample moments of a batch.
pub fn accumulate(batch: &TrialBatch) -> Result<MomentAccumulator> {
    let n = batch.n() as u64;
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mut acc = MomentAccumulator::new();
    for (&a, &b) in batch.x_a.iter().zip(&batch.x_b) {
        acc.push(a, b);
    }
    Ok(acc)
}

/// Channel parameters inferred by Alice and Bob, shot-noise units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub v_a_hat: f64,
    pub v_b_hat: f64,
    pub cov_ab_hat: f64,
    pub t_hat: f64,
    pub xi_hat: f64,
    pub clipped_fraction: f64,
    pub n: u64,
    /// Shot-noise variance; 1 by normalisation.
    #[serde(skip)]
    pub n0_hat: f64,
    /// Descriptive standard error of `t_hat` (large-sample Gaussian approximation).
    #[serde(skip)]
    pub t_hat_se: f64,
    /// Descriptive standard error of `xi_hat`.
    #[serde(skip)]
    pub xi_hat_se: f64,
}

impl Estimate {
    pub fn with_clipped_fraction(mut self, fraction: f64) -> Self {
        self.clipped_fraction = fraction;
        self
    }
}

/// Inverts the linear channel model:
/// `Cov_AB = √(ηT)·V_A` and `V_B = ηT·V_A + 1 + ηT·ξ + v_ele`.
///
/// The measured `V_A` enters the inversion; the configured one is only used
/// as a sanity check.
pub fn estimate_channel(acc: &MomentAccumulator, det: &DetectorModel, proto: &ProtocolModel) -> Result<Estimate> {
    if acc.n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: acc.n });
    }
    let v_a = acc.variance_a();
    let v_b = acc.variance_b();
    let cov = acc.covariance();
    if !(v_a > 0.0) {
        return Err(Error::Degenerate(format!("modulation variance estimate is {v_a}")));
    }
    if !(cov > 0.0) {
        return Err(Error::Degenerate(format!(
            "Alice-Bob covariance is {cov}; the data are decorrelated"
        )));
    }
    if proto.v_a > 0.0 && ((v_a - proto.v_a) / proto.v_a).abs() > VA_MISMATCH_WARN {
        log::warn!(
            "measured V_A = {v_a:.4} differs from configured {:.4} by more than 3%",
            proto.v_a
        );
    }

    let slope = cov / v_a;
    let t_hat = slope * slope / det.eta;
    let eta_t = det.eta * t_hat;
    if !(eta_t > 0.0) {
        return Err(Error::Degenerate("estimated transmission is zero".into()));
    }
    let residual = v_b - slope * cov;
    let xi_hat = (residual - 1.0 - det.v_ele) / eta_t;

    let nf = acc.n as f64;
    let slope_se = (residual.max(0.0) / (nf * v_a)).sqrt();
    let t_hat_se = 2.0 * slope * slope_se / det.eta;
    let xi_hat_se = ((residual * (2.0 / nf).sqrt()) / eta_t).hypot(xi_hat * t_hat_se / t_hat);

    Ok(Estimate {
        v_a_hat: v_a,
        v_b_hat: v_b,
        cov_ab_hat: cov,
        t_hat,
        xi_hat,
        clipped_fraction: 0.0,
        n: acc.n,
        n0_hat: 1.0,
        t_hat_se,
        xi_hat_se,
    })
}

/// Moments, estimate and saturation fraction of a batch in one call.
pub fn estimate_batch(batch: &TrialBatch, det: &DetectorModel, proto: &ProtocolModel) -> Result<Estimate> {
    let acc = accumulate(batch)?;
    Ok(estimate_channel(&acc, det, proto)?.with_clipped_fraction(batch.clipped_fraction()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn batch_from(pairs: &[(f64, f64)]) -> TrialBatch {
        TrialBatch {
            x_a: pairs.iter().map(|p| p.0).collect(),
            x_b: pairs.iter().map(|p| p.1).collect(),
            clipped_hi: vec![false; pairs.len()],
            clipped_lo: vec![false; pairs.len()],
        }
    }

    /// Two-pass reference moments.
    fn two_pass(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let va = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / (n - 1.0);
        let vb = b.iter().map(|x| (x - mb) * (x - mb)).sum::<f64>() / (n - 1.0);
        let c = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
        (va, vb, c)
    }

    /// Deterministic mixed-scale data: large offsets, small spreads, sign flips.
    pub(crate) fn mixed_scale(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for i in 0..n {
            let u = ((i as f64) * 0.618_033_988_749_895).fract() - 0.5;
            let v = ((i as f64) * 0.414_213_562_373_095).fract() - 0.5;
            let scale = [1e-3, 1.0, 1e3][i % 3];
            a.push(1e6 + scale * u);
            b.push(-2e4 + 3.0 * scale * u + v);
        }
        (a, b)
    }

    #[test]
    fn constant_sequences_have_zero_moments() {
        let acc = accumulate(&batch_from(&[(2.5, -1.0); 10])).unwrap();
        assert_eq!(acc.variance_a(), 0.0);
        assert_eq!(acc.variance_b(), 0.0);
        assert_eq!(acc.covariance(), 0.0);
    }

    #[test]
    fn perfectly_correlated_pairs() {
        let pairs: Vec<_> = (0..100).map(|i| (i as f64 * 0.3, i as f64 * 0.3)).collect();
        let acc = accumulate(&batch_from(&pairs)).unwrap();
        assert_relative_eq!(acc.covariance(), acc.variance_b(), max_relative = 1e-12);
        assert_relative_eq!(acc.variance_a(), acc.variance_b(), max_relative = 1e-12);
    }

    #[test]
    fn one_pass_matches_two_pass_on_mixed_scales() {
        let (a, b) = mixed_scale(100_000);
        let pairs: Vec<_> = a.iter().copied().zip(b.iter().copied()).collect();
        let acc = accumulate(&batch_from(&pairs)).unwrap();
        let (va, vb, c) = two_pass(&a, &b);
        assert_relative_eq!(acc.variance_a(), va, max_relative = 1e-10);
        assert_relative_eq!(acc.variance_b(), vb, max_relative = 1e-10);
        assert_relative_eq!(acc.covariance(), c, max_relative = 1e-10);
    }

    #[test]
    fn merge_matches_single_pass() {
        let (a, b) = mixed_scale(30_001);
        let mut whole = MomentAccumulator::new();
        for (&x, &y) in a.iter().zip(&b) {
            whole.push(x, y);
        }
        let mut merged = MomentAccumulator::new();
        for chunk in (0..a.len()).collect::<Vec<_>>().chunks(997) {
            let mut part = MomentAccumulator::new();
            for &i in chunk {
                part.push(a[i], b[i]);
            }
            merged.merge(&part);
        }
        assert_eq!(merged.n, whole.n);
        assert_relative_eq!(merged.variance_a(), whole.variance_a(), max_relative = 1e-9);
        assert_relative_eq!(merged.variance_b(), whole.variance_b(), max_relative = 1e-9);
        assert_relative_eq!(merged.covariance(), whole.covariance(), max_relative = 1e-9);
        assert_relative_eq!(merged.mean_a(), whole.mean_a(), max_relative = 1e-12);
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let mut acc = MomentAccumulator::new();
        acc.push(1.0, 2.0);
        acc.push(3.0, 5.0);
        let before = acc;
        acc.merge(&MomentAccumulator::new());
        assert_eq!(acc, before);
        assert_eq!(MomentAccumulator::new().merged(&before), before);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        assert_eq!(
            accumulate(&batch_from(&[(1.0, 1.0)])),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        );
    }

    #[test]
    fn decorrelated_data_is_degenerate() {
        let pairs: Vec<_> = (0..100)
            .map(|i| (i as f64, if i % 2 == 0 { 1.0 } else { -1.0 } * 0.0))
            .collect();
        let acc = accumulate(&batch_from(&pairs)).unwrap();
        let err = estimate_channel(&acc, &DetectorModel::default(), &ProtocolModel::default());
        assert!(matches!(err, Err(Error::Degenerate(_))));
    }

    #[test]
    fn exact_linear_channel_is_inverted() {
        // Synthetic moments satisfying the linear model exactly.
        let det = DetectorModel::default();
        let (t, xi, v_a) = (0.3, 0.05, 4.0);
        let eta_t = det.eta * t;
        let n = 1_000_001u64;
        let scale = n as f64 - 1.0;
        let acc = MomentAccumulator::from_central_sums(
            n,
            (0.0, 0.0),
            v_a * scale,
            (eta_t * v_a + 1.0 + eta_t * xi + det.v_ele) * scale,
            eta_t.sqrt() * v_a * scale,
        );
        let est = estimate_channel(
            &acc,
            &det,
            &ProtocolModel {
                v_a,
                ..Default::default()
            },
        )
        .unwrap();
        assert_relative_eq!(est.t_hat, t, max_relative = 1e-12);
        assert_relative_eq!(est.xi_hat, xi, max_relative = 1e-9);
        assert_eq!(est.n0_hat, 1.0);
    }

    #[test]
    fn estimate_serializes_fixed_fields() {
        let est = Estimate {
            v_a_hat: 1.0,
            v_b_hat: 2.0,
            cov_ab_hat: 0.5,
            t_hat: 0.3,
            xi_hat: 0.01,
            clipped_fraction: 0.0,
            n: 10,
            n0_hat: 1.0,
            t_hat_se: 0.1,
            xi_hat_se: 0.1,
        };
        let json = serde_json::to_value(est).unwrap();
        let keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        let mut expected = vec![
            "v_a_hat",
            "v_b_hat",
            "cov_ab_hat",
            "t_hat",
            "xi_hat",
            "clipped_fraction",
            "n",
        ];
        expected.sort();
        let mut keys_sorted = keys.clone();
        keys_sorted.sort();
        assert_eq!(keys_sorted, expected);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn merge_is_order_tolerant(
            data in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 4..200),
            split in 1usize..199,
        ) {
            let split = split.min(data.len() - 1);
            let mut left = MomentAccumulator::new();
            let mut right = MomentAccumulator::new();
            for (i, &(a, b)) in data.iter().enumerate() {
                if i < split { left.push(a, b) } else { right.push(a, b) }
            }
            let lr = left.merged(&right);
            let rl = right.merged(&left);
            let tol = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-12);
            prop_assert!(tol(lr.m2_a, rl.m2_a));
            prop_assert!(tol(lr.m2_b, rl.m2_b));
            prop_assert!(tol(lr.co_ab, rl.co_ab));
        }

        #[test]
        fn moments_are_permutation_invariant(
            data in prop::collection::vec((-10f64..10.0, -10f64..10.0), 3..100),
        ) {
            let mut fwd = MomentAccumulator::new();
            let mut rev = MomentAccumulator::new();
            for &(a, b) in &data { fwd.push(a, b); }
            for &(a, b) in data.iter().rev() { rev.push(a, b); }
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs());
            prop_assert!(close(fwd.variance_a(), rev.variance_a()));
            prop_assert!(close(fwd.variance_b(), rev.variance_b()));
            prop_assert!(close(fwd.covariance(), rev.covariance()));
            prop_assert!(fwd.variance_b() >= 0.0);
        }
    }
}
