//! Window selection: the ring-based rule, the classical Lepski rule, the
//! oracle index and the deterministic propagation bound.

use std::fmt;

use crate::error::{Error, Result};
use crate::estimates::Estimates;
use crate::levels::{Levels, PairLevels};

/// Critical values `z_0, …, z_{K-1}`; `z_K` is fixed to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalValues {
    z: Vec<f64>,
    pub zeta: Option<f64>,
    pub alpha: f64,
    pub r: f64,
}

impl CriticalValues {
    pub fn new(z: Vec<f64>, alpha: f64, r: f64) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::input("need at least one critical value"));
        }
        if let Some(bad) = z.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::input(format!("critical values must be finite and >= 0, got {bad}")));
        }
        if !(alpha > 0.0) || !(r >= 1.0) {
            return Err(Error::input(format!("need alpha > 0 and r >= 1 (alpha={alpha}, r={r})")));
        }
        Ok(CriticalValues {
            z,
            zeta: None,
            alpha,
            r,
        })
    }

    /// The one-parameter family
    /// `z_k² = ζ·(2r·ln(s_k/s_K) + ln(1/α) + ln K)`, floored at zero.
    pub fn from_zeta(levels: &Levels, zeta: f64, alpha: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta.is_finite()) {
            return Err(Error::input(format!("zeta must be positive, got {zeta}")));
        }
        let k_max = levels.k_max();
        if k_max == 0 {
            return Err(Error::input("window family needs at least two windows"));
        }
        let z = zeta_shape(levels, alpha)
            .into_iter()
            .map(|q| (zeta * q).sqrt())
            .collect();
        let mut crit = CriticalValues::new(z, alpha, levels.r)?;
        crit.zeta = Some(zeta);
        Ok(crit)
    }

    pub fn k_max(&self) -> usize {
        self.z.len()
    }

    /// `z_k` for `k = 0..=K`.
    #[inline]
    pub fn z(&self, k: usize) -> f64 {
        if k == self.z.len() {
            1.0
        } else {
            self.z[k]
        }
    }

    /// `z_0, …, z_{K-1}`.
    pub fn values(&self) -> &[f64] {
        &self.z
    }

    /// Checks that `z_k` and `z_k s_k` are non-increasing over `k < K`.
    pub fn check_monotone(&self, levels: &Levels) -> Result<()> {
        self.check_dims(levels)?;
        let tol = 1e-12;
        for k in 1..self.z.len() {
            if self.z[k] > self.z[k - 1] * (1.0 + tol) {
                return Err(Error::Calibration(format!(
                    "z_{k} = {} exceeds z_{} = {}",
                    self.z[k],
                    k - 1,
                    self.z[k - 1]
                )));
            }
        }
        for k in 1..self.z.len() {
            let prev = self.z(k - 1) * levels.s(k - 1);
            let cur = self.z(k) * levels.s(k);
            if cur > prev * (1.0 + tol) {
                return Err(Error::Calibration(format!(
                    "z_k*s_k increases at k={k}: {prev} -> {cur}"
                )));
            }
        }
        Ok(())
    }

    fn check_dims(&self, levels: &Levels) -> Result<()> {
        if levels.k_max() != self.z.len() {
            return Err(Error::precondition(format!(
                "critical values for K={} used with levels for K={}",
                self.z.len(),
                levels.k_max()
            )));
        }
        Ok(())
    }
}

/// `max(0, 2r·ln(s_k/s_K) + ln(1/α) + ln K)` for `k < K`.
pub(crate) fn zeta_shape(levels: &Levels, alpha: f64) -> Vec<f64> {
    let k_max = levels.k_max();
    let s_last = levels.s(k_max);
    let offset = (1.0 / alpha).ln() + (k_max as f64).ln();
    (0..k_max)
        .map(|k| (2.0 * levels.r * (levels.s(k) / s_last).ln() + offset).max(0.0))
        .collect()
}

/// One executed comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestRecord {
    /// Step: the ring `U_{k+1} \ U_k` (ring rule) or the window `U_{k+1}`
    /// (Lepski rule) is under test.
    pub k: usize,
    /// Index of the earlier window it is compared with.
    pub j: usize,
    pub statistic: f64,
    pub threshold: f64,
}

impl TestRecord {
    /// Positive margin means rejection.
    pub fn margin(&self) -> f64 {
        self.statistic - self.threshold
    }

    pub fn rejects(&self) -> bool {
        !(self.statistic <= self.threshold)
    }
}

impl fmt::Display for TestRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.k,
            self.j,
            self.statistic,
            self.threshold,
            self.margin()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub base: Vec<f64>,
    pub rings: Vec<f64>,
    pub k_hat: usize,
    pub theta_hat: f64,
    /// Tests in execution order; the last one is the trigger when
    /// `k_hat < K`.
    pub tests: Vec<TestRecord>,
}

impl SelectionTrace {
    pub fn k_max(&self) -> usize {
        self.base.len() - 1
    }

    pub fn trigger(&self) -> Option<&TestRecord> {
        self.tests.last().filter(|t| t.rejects())
    }

    /// Rows `k,j,statistic,threshold,margin`.
    pub fn dump(&self) -> String {
        let mut out = String::from("k,j,statistic,threshold,margin\n");
        for t in &self.tests {
            out.push_str(&t.to_string());
            out.push('\n');
        }
        out
    }
}

/// Precomputed thresholds `z_j s_kj + z_{k+1} s_{k+1}` of the ring rule.
#[derive(Debug, Clone, PartialEq)]
pub struct RrThresholds {
    table: Vec<Vec<f64>>,
}

impl RrThresholds {
    pub fn new(levels: &Levels, crit: &CriticalValues) -> Result<Self> {
        crit.check_dims(levels)?;
        let table = (0..levels.k_max())
            .map(|k| {
                let tail = crit.z(k + 1) * levels.s(k + 1);
                (0..=k).map(|j| crit.z(j) * levels.ring(k, j) + tail).collect()
            })
            .collect();
        Ok(RrThresholds { table })
    }

    /// Thresholds for a single window, where nothing is tested.
    pub fn empty() -> Self {
        RrThresholds { table: Vec::new() }
    }

    pub fn k_max(&self) -> usize {
        self.table.len()
    }

    #[inline]
    pub fn threshold(&self, k: usize, j: usize) -> f64 {
        self.table[k][j]
    }

    /// Whether step `k` is accepted given `base[0..=k]`; tests run from
    /// `j = k` down to 0.
    #[inline]
    pub fn accepts(&self, k: usize, ring: f64, base: &[f64]) -> bool {
        let row = &self.table[k];
        (0..=k).rev().all(|j| (ring - base[j]).abs() <= row[j])
    }

    /// Selected index only.
    pub fn select(&self, base: &[f64], rings: &[f64]) -> usize {
        (0..self.k_max())
            .find(|&k| !self.accepts(k, rings[k], base))
            .unwrap_or(self.k_max())
    }
}

fn check_estimates(est: &Estimates, k_max: usize) -> Result<()> {
    if est.base.len() != k_max + 1 || est.rings.len() != k_max {
        return Err(Error::precondition(format!(
            "estimates for K={} do not match thresholds for K={k_max}",
            est.base.len().saturating_sub(1)
        )));
    }
    Ok(())
}

/// The ring-based rule with a full trace.
pub fn select_rr(est: &Estimates, levels: &Levels, crit: &CriticalValues) -> Result<SelectionTrace> {
    let thr = RrThresholds::new(levels, crit)?;
    select_rr_with(est, &thr)
}

pub fn select_rr_with(est: &Estimates, thr: &RrThresholds) -> Result<SelectionTrace> {
    let k_max = thr.k_max();
    check_estimates(est, k_max)?;
    let mut tests = Vec::new();
    let mut k_hat = k_max;
    'steps: for k in 0..k_max {
        for j in (0..=k).rev() {
            let rec = TestRecord {
                k,
                j,
                statistic: (est.rings[k] - est.base[j]).abs(),
                threshold: thr.threshold(k, j),
            };
            tests.push(rec);
            if rec.rejects() {
                k_hat = k;
                break 'steps;
            }
        }
    }
    Ok(SelectionTrace {
        base: est.base.clone(),
        rings: est.rings.clone(),
        k_hat,
        theta_hat: est.base[k_hat],
        tests,
    })
}

/// Thresholds `z_ℓ · s(θ̃_{k+1} - θ̃_ℓ)` of the classical rule.
#[derive(Debug, Clone, PartialEq)]
pub struct LepskiThresholds {
    table: Vec<Vec<f64>>,
}

impl LepskiThresholds {
    pub fn new(pair: &PairLevels, crit: &CriticalValues) -> Result<Self> {
        if pair.k_max() != crit.k_max() {
            return Err(Error::precondition(format!(
                "critical values for K={} used with pair levels for K={}",
                crit.k_max(),
                pair.k_max()
            )));
        }
        let table = (0..pair.k_max())
            .map(|k| (0..=k).map(|l| crit.z(l) * pair.get(k + 1, l)).collect())
            .collect();
        Ok(LepskiThresholds { table })
    }

    pub fn k_max(&self) -> usize {
        self.table.len()
    }

    #[inline]
    pub fn threshold(&self, k: usize, l: usize) -> f64 {
        self.table[k][l]
    }

    pub fn select(&self, base: &[f64]) -> usize {
        (0..self.k_max())
            .find(|&k| {
                let row = &self.table[k];
                (0..=k).rev().any(|l| !((base[k + 1] - base[l]).abs() <= row[l]))
            })
            .unwrap_or(self.k_max())
    }
}

/// The classical rule: `U_{k+1}` is accepted iff
/// `|θ̃_{k+1} - θ̃_ℓ| ≤ z_ℓ s(θ̃_{k+1} - θ̃_ℓ)` for every `ℓ ≤ k`.
pub fn select_lepski(est: &Estimates, pair: &PairLevels, crit: &CriticalValues) -> Result<SelectionTrace> {
    let thr = LepskiThresholds::new(pair, crit)?;
    select_lepski_with(est, &thr)
}

pub fn select_lepski_with(est: &Estimates, thr: &LepskiThresholds) -> Result<SelectionTrace> {
    let k_max = thr.k_max();
    if est.base.len() != k_max + 1 {
        return Err(Error::precondition("estimates do not match the threshold table"));
    }
    let mut tests = Vec::new();
    let mut k_hat = k_max;
    'steps: for k in 0..k_max {
        for l in (0..=k).rev() {
            let rec = TestRecord {
                k,
                j: l,
                statistic: (est.base[k + 1] - est.base[l]).abs(),
                threshold: thr.threshold(k, l),
            };
            tests.push(rec);
            if rec.rejects() {
                k_hat = k;
                break 'steps;
            }
        }
    }
    Ok(SelectionTrace {
        base: est.base.clone(),
        rings: est.rings.clone(),
        k_hat,
        theta_hat: est.base[k_hat],
        tests,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleInfo {
    pub k_star: usize,
    /// `V_k = max - min` of the signal over `U_k`.
    pub variations: Vec<f64>,
}

/// Oracle index `k* = min{k : V_{k+1} > z_{k+1} s_{k+1}} ∧ K` for a signal
/// given on the design (`g[i]` at design point `i`).
pub fn oracle_index(
    g: &[f64],
    family: &crate::windows::WindowFamily,
    levels: &Levels,
    crit: &CriticalValues,
) -> Result<OracleInfo> {
    crit.check_dims(levels)?;
    if levels.k_max() != family.k_max() {
        return Err(Error::precondition("levels do not match the window family"));
    }
    if family.order().iter().any(|&i| i >= g.len()) {
        return Err(Error::precondition("signal shorter than the design"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut variations = Vec::with_capacity(family.k_max() + 1);
    let mut seen = 0;
    for &n in family.counts() {
        for &i in &family.order()[seen..n] {
            lo = lo.min(g[i]);
            hi = hi.max(g[i]);
        }
        seen = n;
        variations.push(hi - lo);
    }
    let k_max = family.k_max();
    let k_star = (0..k_max)
        .find(|&k| variations[k + 1] > crit.z(k + 1) * levels.s(k + 1))
        .unwrap_or(k_max);
    Ok(OracleInfo { k_star, variations })
}

/// Propagation check for a step `k`: returns `(|θ̂ - θ̃_k|, bound)` with
/// `bound = max_{m=k..K-1} (z_k s_mk + z_{m+1} s_{m+1})`.
///
/// When `k < k̂`, `U_{k̂}` is `U_k` plus the rings `k..k̂-1`, each of which
/// passed its test against `θ̃_k`; betweenness of the loss then caps the
/// distance. For `k ≥ k̂` the left side is 0 by convention.
pub fn propagation_gap(
    trace: &SelectionTrace,
    k: usize,
    levels: &Levels,
    crit: &CriticalValues,
) -> Result<(f64, f64)> {
    crit.check_dims(levels)?;
    let k_max = levels.k_max();
    if trace.k_max() != k_max {
        return Err(Error::precondition("trace does not match the levels"));
    }
    if k >= k_max {
        return Ok((0.0, 0.0));
    }
    let rhs = (k..k_max)
        .map(|m| crit.z(k) * levels.ring(m, k) + crit.z(m + 1) * levels.s(m + 1))
        .fold(f64::NEG_INFINITY, f64::max);
    let lhs = if k < trace.k_hat {
        (trace.theta_hat - trace.base[k]).abs()
    } else {
        0.0
    };
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimates::base_estimates;
    use crate::levels::{levels_exact_mean, pair_levels_exact_mean};
    use crate::loss::LossKind;
    use crate::windows::{build_family_1d, equidistant_design, CountScheme, WindowFamily};

    fn bench_family() -> WindowFamily {
        build_family_1d(&equidistant_design(200), 0.0, &CountScheme::FromFive.counts(17)).unwrap()
    }

    fn flat_crit(k_max: usize, z: f64) -> CriticalValues {
        CriticalValues::new(vec![z; k_max], 1.0, 2.0).unwrap()
    }

    #[test]
    fn constant_data_takes_largest_window() {
        let fam = bench_family();
        let lv = levels_exact_mean(&fam, 2.0).unwrap();
        let est = base_estimates(&[1.25; 200], &fam, LossKind::Median).unwrap();
        let tr = select_rr(&est, &lv, &flat_crit(16, 1.0)).unwrap();
        assert_eq!(tr.k_hat, 16);
        assert_eq!(tr.theta_hat, 1.25);
        assert!(tr.tests.iter().all(|t| t.margin() < 0.0));
        assert!(tr.trigger().is_none());
        let pl = pair_levels_exact_mean(&fam, 2.0).unwrap();
        assert_eq!(select_lepski(&est, &pl, &flat_crit(16, 1.0)).unwrap().k_hat, 16);
    }

    #[test]
    fn outlier_ring_stops() {
        let fam = bench_family();
        let lv = levels_exact_mean(&fam, 2.0).unwrap();
        let crit = flat_crit(16, 1.5);
        let mut est = base_estimates(&[0.0; 200], &fam, LossKind::Mean).unwrap();
        let k = 6;
        est.rings[k] = est.base[0] + 10.0 * (crit.z(0) * lv.ring(k, 0) + crit.z(k + 1) * lv.s(k + 1));
        let tr = select_rr(&est, &lv, &crit).unwrap();
        assert_eq!(tr.k_hat, k);
        let trig = tr.trigger().unwrap();
        assert_eq!((trig.k, trig.j), (k, k));
        assert!(trig.margin() > 0.0);
    }

    #[test]
    fn step_signal_noiseless() {
        let fam = bench_family();
        let design = equidistant_design(200);
        let g: Vec<f64> = design.iter().map(|&x| if x.abs() <= 0.2 { 0.0 } else { 2.0 }).collect();
        let lv = levels_exact_mean(&fam, 2.0).unwrap();
        let est = base_estimates(&g, &fam, LossKind::Median).unwrap();
        // counts ..., 37, 46: the ring 37 → 46 is the first whose median is 2,
        // and a jump of 2 clears every threshold while z ≤ 2
        for z in [0.5, 1.0, 2.0] {
            let tr = select_rr(&est, &lv, &flat_crit(16, z)).unwrap();
            assert_eq!(tr.k_hat, 9, "z={z}");
        }
    }

    #[test]
    fn trace_invariants() {
        let fam = bench_family();
        let lv = levels_exact_mean(&fam, 2.0).unwrap();
        let values: Vec<f64> = (0..200).map(|i| ((i * 7919) % 23) as f64 / 23.0 - 0.5).collect();
        let est = base_estimates(&values, &fam, LossKind::Median).unwrap();
        for z in [0.1, 0.5, 1.0, 3.0] {
            let crit = flat_crit(16, z);
            let tr = select_rr(&est, &lv, &crit).unwrap();
            for t in &tr.tests {
                if t.k < tr.k_hat {
                    assert!(t.margin() <= 0.0);
                }
            }
            if tr.k_hat < 16 {
                assert!(tr.tests.iter().any(|t| t.k == tr.k_hat && t.margin() > 0.0));
            }
            assert_eq!(tr.theta_hat, tr.base[tr.k_hat]);
            let thr = RrThresholds::new(&lv, &crit).unwrap();
            assert_eq!(thr.select(&est.base, &est.rings), tr.k_hat);
            assert!(tr.dump().starts_with("k,j,statistic,threshold,margin\n"));
        }
    }

    #[test]
    fn two_window_lepski_is_a_two_sample_test() {
        let fam = build_family_1d(&equidistant_design(10), 0.0, &[4, 10]).unwrap();
        let pl = pair_levels_exact_mean(&fam, 2.0).unwrap();
        let crit = flat_crit(1, 1.0);
        let thr = (1.0f64 / 4.0 - 1.0 / 10.0).sqrt();
        let mut values = vec![0.0; 10];
        let est = |v: &[f64]| base_estimates(v, &fam, LossKind::Mean).unwrap();
        // shift the outer six so the mean of all ten moves by 0.6·d
        let d_ok = 0.99 * thr / 0.6;
        for (i, v) in values.iter_mut().enumerate() {
            if !fam.base().contains(&i) {
                *v = d_ok;
            }
        }
        assert_eq!(select_lepski(&est(&values), &pl, &crit).unwrap().k_hat, 1);
        let scale = 1.02 / 0.99;
        let far: Vec<f64> = values.iter().map(|v| v * scale).collect();
        assert_eq!(select_lepski(&est(&far), &pl, &crit).unwrap().k_hat, 0);
    }

    #[test]
    fn oracle_examples() {
        let fam = bench_family();
        let lv = levels_exact_mean(&fam, 2.0).unwrap();
        let crit = flat_crit(16, 1.0);
        let zero = oracle_index(&[0.0; 200], &fam, &lv, &crit).unwrap();
        assert_eq!(zero.k_star, 16);
        assert!(zero.variations.iter().all(|&v| v == 0.0));

        // thresholds z_k s_k ≡ 0.5: synthetic levels with s = 0.5
        let flat = Levels::from_tables(
            2.0,
            vec![0.5; 17],
            (0..16).map(|k| vec![0.6; k + 1]).collect(),
            crate::levels::LevelsMethod::ExactMean,
        )
        .unwrap();
        let design = equidistant_design(200);
        let g: Vec<f64> = design.iter().map(|&x| if x.abs() <= 0.2 { 0.0 } else { 2.0 }).collect();
        let info = oracle_index(&g, &fam, &flat, &crit).unwrap();
        // U_9 has 37 points, U_10 has 46 and the 40 interior points end in between
        assert_eq!(info.k_star, 9);
        assert!(info.variations.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn zeta_family_shape() {
        let fam = bench_family();
        let lv = levels_exact_mean(&fam, 2.0).unwrap();
        let crit = CriticalValues::from_zeta(&lv, 0.8, 1.0).unwrap();
        crit.check_monotone(&lv).unwrap();
        let z = crit.values();
        let expect0 = 0.8 * (2.0 * 2.0 * (lv.s(0) / lv.s(16)).ln() + 16f64.ln());
        assert!((z[0] * z[0] - expect0).abs() < 1e-12);
        assert_eq!(crit.z(16), 1.0);
        let bad = CriticalValues::new((0..16).map(|k| 1.0 + k as f64).collect(), 1.0, 2.0).unwrap();
        assert!(bad.check_monotone(&lv).is_err());
    }

    #[test]
    fn propagation_examples() {
        let fam = bench_family();
        let lv = levels_exact_mean(&fam, 2.0).unwrap();
        let crit = flat_crit(16, 1.0);
        let est = base_estimates(&[2.0; 200], &fam, LossKind::Median).unwrap();
        let tr = select_rr(&est, &lv, &crit).unwrap();
        for k in 0..16 {
            let (lhs, rhs) = propagation_gap(&tr, k, &lv, &crit).unwrap();
            assert_eq!(lhs, 0.0);
            assert!(rhs > 0.0);
        }
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let fam = bench_family();
        let lv = levels_exact_mean(&fam, 2.0).unwrap();
        assert!(RrThresholds::new(&lv, &flat_crit(3, 1.0)).is_err());
        assert!(CriticalValues::new(vec![1.0, -1.0], 1.0, 2.0).is_err());
        assert!(CriticalValues::new(vec![1.0], 0.0, 2.0).is_err());
    }
}
