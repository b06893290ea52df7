//! Monte Carlo calibration of the critical values under pure noise.
//!
//! For the ring rule the error of stopping at step `j` is
//! `|θ̃_j|^r · 1{∃ℓ ≤ j: |θ̃_{(j+1)\j} - θ̃_ℓ| > z_ℓ s_jℓ}` and the budget is
//! `Σ_j E₀[…] ≤ α s_K^r`. The classical rule uses `θ̃_{j+1}` and the pairwise
//! levels in place of the ring statistic. Every candidate is scored on the
//! same replicate set, so the objective is monotone in the thresholds and
//! bisection is well posed.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimates::{domain, noise_replicates, Estimates};
use crate::levels::{Levels, PairLevels};
use crate::loss::LossKind;
use crate::noise::NoiseKind;
use crate::selector::{zeta_shape, CriticalValues};
use crate::windows::WindowFamily;

pub const ZETA_MAX: f64 = 100.0;
pub const TOLERANCE: f64 = 1e-3;
const MIN_RUNS: usize = 1000;
const RECOMMENDED_RUNS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibMode {
    Zeta,
    Sequential,
}

impl fmt::Display for CalibMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CalibMode::Zeta => "zeta",
            CalibMode::Sequential => "sequential",
        })
    }
}

impl FromStr for CalibMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zeta" => Ok(CalibMode::Zeta),
            "sequential" => Ok(CalibMode::Sequential),
            _ => Err(Error::input(format!("unknown calibration mode '{s}' (zeta|sequential)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// Ring against earlier windows.
    RingRule,
    /// Classical Lepski: enlarged window against earlier windows.
    Lepski,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::RingRule => "rr",
            Rule::Lepski => "lepski",
        })
    }
}

impl FromStr for Rule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rr" => Ok(Rule::RingRule),
            "lepski" => Ok(Rule::Lepski),
            _ => Err(Error::input(format!("unknown selection rule '{s}' (rr|lepski)"))),
        }
    }
}

/// Levels needed to score one rule.
#[derive(Debug, Clone, Copy)]
pub enum RuleLevels<'a> {
    Ring(&'a Levels),
    Lepski { base: &'a Levels, pair: &'a PairLevels },
}

impl<'a> RuleLevels<'a> {
    pub fn base(&self) -> &'a Levels {
        match *self {
            RuleLevels::Ring(l) => l,
            RuleLevels::Lepski { base, .. } => base,
        }
    }

    pub fn rule(&self) -> Rule {
        match self {
            RuleLevels::Ring(_) => Rule::RingRule,
            RuleLevels::Lepski { .. } => Rule::Lepski,
        }
    }

    fn check(&self, family: &WindowFamily) -> Result<()> {
        let k_max = family.k_max();
        let ok = match *self {
            RuleLevels::Ring(l) => l.k_max() == k_max,
            RuleLevels::Lepski { base, pair } => base.k_max() == k_max && pair.k_max() == k_max,
        };
        if !ok {
            return Err(Error::precondition("levels do not match the window family"));
        }
        if k_max == 0 {
            return Err(Error::input("calibration needs at least two windows"));
        }
        Ok(())
    }

    /// Test statistic at step `j` against window `l`, divided by its level.
    #[inline]
    fn normalized(&self, est: &Estimates, j: usize, l: usize) -> f64 {
        match *self {
            RuleLevels::Ring(lv) => (est.rings[j] - est.base[l]).abs() / lv.ring(j, l),
            RuleLevels::Lepski { pair, .. } => (est.base[j + 1] - est.base[l]).abs() / pair.get(j + 1, l),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CalibConfig {
    pub r: f64,
    pub alpha: f64,
    pub runs: usize,
    pub family: WindowFamily,
    pub loss: LossKind,
    pub noise: NoiseKind,
    pub seed: u64,
    pub mode: CalibMode,
}

impl CalibConfig {
    fn validate(&self) -> Result<Vec<String>> {
        self.loss.validate()?;
        self.noise.validate()?;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::input(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.r >= 1.0) {
            return Err(Error::input(format!("r must be >= 1, got {}", self.r)));
        }
        if self.runs < MIN_RUNS {
            return Err(Error::input(format!(
                "calibration needs at least {MIN_RUNS} runs, got {}",
                self.runs
            )));
        }
        let mut warnings = Vec::new();
        if self.runs < RECOMMENDED_RUNS {
            warnings.push(format!("{} runs is below the recommended {RECOMMENDED_RUNS}", self.runs));
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibResult {
    pub crit: CriticalValues,
    pub mode: CalibMode,
    pub rule: Rule,
    /// Contribution of each `z_k` to the objective (the sequential terms).
    pub per_k_error_share: Vec<f64>,
    pub achieved_lhs: f64,
    /// `α s_K^r`.
    pub budget: f64,
    pub std_error: f64,
    pub seed: u64,
    pub runs: usize,
    pub warnings: Vec<String>,
}

/// Per-replicate quantities the objective depends on.
struct Replicates {
    k_max: usize,
    /// `|θ̃_j|^r`, row-major by replicate.
    weight: Vec<f64>,
    /// Normalized statistics `a_{jℓ}`, packed triangular rows per replicate.
    stat: Vec<f64>,
    tri: usize,
}

fn tri_index(j: usize, l: usize) -> usize {
    j * (j + 1) / 2 + l
}

impl Replicates {
    fn build(cfg: &CalibConfig, levels: RuleLevels<'_>, domain: u64) -> Replicates {
        let fam = cfg.family.localized();
        let k_max = fam.k_max();
        let tri = k_max * (k_max + 1) / 2;
        let reps = noise_replicates(&fam, cfg.loss, cfg.noise, cfg.runs, cfg.seed, domain);
        let rows: Vec<(Vec<f64>, Vec<f64>)> = reps
            .par_iter()
            .map(|est| {
                let w = (0..k_max).map(|j| est.base[j].abs().powf(cfg.r)).collect();
                let mut a = Vec::with_capacity(tri);
                for j in 0..k_max {
                    for l in 0..=j {
                        a.push(levels.normalized(est, j, l));
                    }
                }
                (w, a)
            })
            .collect();
        let mut weight = Vec::with_capacity(cfg.runs * k_max);
        let mut stat = Vec::with_capacity(cfg.runs * tri);
        for (w, a) in rows {
            weight.extend(w);
            stat.extend(a);
        }
        Replicates {
            k_max,
            weight,
            stat,
            tri,
        }
    }

    fn runs(&self) -> usize {
        self.weight.len() / self.k_max
    }

    fn rep(&self, i: usize) -> (&[f64], &[f64]) {
        (
            &self.weight[i * self.k_max..(i + 1) * self.k_max],
            &self.stat[i * self.tri..(i + 1) * self.tri],
        )
    }

    /// Per-replicate error sum `Σ_j w_j 1{∃ℓ ≤ j: a_jℓ > z_ℓ}`.
    fn replicate_error(&self, i: usize, z: &[f64]) -> f64 {
        let (w, a) = self.rep(i);
        (0..self.k_max)
            .filter(|&j| (0..=j).any(|l| a[tri_index(j, l)] > z[l]))
            .map(|j| w[j])
            .sum()
    }

    /// Mean and standard error of the global objective.
    fn objective(&self, z: &[f64]) -> (f64, f64) {
        let per: Vec<f64> = (0..self.runs()).map(|i| self.replicate_error(i, z)).collect();
        mean_and_se(&per)
    }

    /// Sequential term for `k`: steps `j ≥ k` where test `(j, k)` rejects and
    /// every test `(j, ℓ)`, `ℓ < k`, accepts.
    fn sequential_share(&self, k: usize, z: &[f64], zk: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.runs() {
            let (w, a) = self.rep(i);
            for j in k..self.k_max {
                let row = &a[tri_index(j, 0)..=tri_index(j, j)];
                if row[k] > zk && (0..k).all(|l| row[l] <= z[l]) {
                    total += w[j];
                }
            }
        }
        total / self.runs() as f64
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

fn budget(cfg: &CalibConfig, levels: &Levels) -> f64 {
    cfg.alpha * levels.s(levels.k_max()).powf(cfg.r)
}

fn finish(
    cfg: &CalibConfig,
    levels: RuleLevels<'_>,
    reps: &Replicates,
    crit: CriticalValues,
    warnings: Vec<String>,
) -> CalibResult {
    let z = crit.values();
    let per_k_error_share = (0..reps.k_max).map(|k| reps.sequential_share(k, z, z[k])).collect();
    let (achieved_lhs, std_error) = reps.objective(z);
    CalibResult {
        mode: cfg.mode,
        rule: levels.rule(),
        per_k_error_share,
        achieved_lhs,
        budget: budget(cfg, levels.base()),
        std_error,
        seed: cfg.seed,
        runs: cfg.runs,
        warnings,
        crit,
    }
}

/// Calibrates with the configured mode.
pub fn calibrate(cfg: &CalibConfig, levels: RuleLevels<'_>) -> Result<CalibResult> {
    match cfg.mode {
        CalibMode::Zeta => calibrate_zeta(cfg, levels),
        CalibMode::Sequential => calibrate_sequential(cfg, levels),
    }
}

/// Smallest `ζ` (to within [`TOLERANCE`]) in `(0, ZETA_MAX]` meeting the
/// global budget, with `z` from the one-parameter family.
pub fn calibrate_zeta(cfg: &CalibConfig, levels: RuleLevels<'_>) -> Result<CalibResult> {
    let warnings = cfg.validate()?;
    levels.check(&cfg.family)?;
    let base = levels.base();
    let target = budget(cfg, base);
    let reps = Replicates::build(cfg, levels, domain::CALIBRATION);
    let shape = zeta_shape(base, cfg.alpha);
    let z_of = |zeta: f64| -> Vec<f64> { shape.iter().map(|q| (zeta * q).sqrt()).collect() };
    let lhs = |zeta: f64| reps.objective(&z_of(zeta)).0;

    let zeta = if lhs(TOLERANCE) <= target {
        TOLERANCE
    } else {
        let top = lhs(ZETA_MAX);
        if top > target {
            return Err(Error::Calibration(format!(
                "budget {target:.6e} not reached at zeta = {ZETA_MAX} (objective {top:.6e})"
            )));
        }
        let (mut lo, mut hi) = (TOLERANCE, ZETA_MAX);
        while hi - lo > TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if lhs(mid) <= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let crit = CriticalValues::from_zeta(base, zeta, cfg.alpha)?;
    crit.check_monotone(base)?;
    Ok(finish(cfg, levels, &reps, crit, warnings))
}

/// Chooses `z_0, z_1, …` in turn, each the smallest value (to within
/// [`TOLERANCE`]) whose sequential term is at most `α s_K^r / K`.
pub fn calibrate_sequential(cfg: &CalibConfig, levels: RuleLevels<'_>) -> Result<CalibResult> {
    let warnings = cfg.validate()?;
    levels.check(&cfg.family)?;
    let base = levels.base();
    let reps = Replicates::build(cfg, levels, domain::CALIBRATION);
    let k_max = reps.k_max;
    let share_target = budget(cfg, base) / k_max as f64;
    let upper = reps.stat.iter().copied().fold(0.0, f64::max) + 1.0;
    let mut z = vec![0.0; k_max];
    for k in 0..k_max {
        let share = |zk: f64| reps.sequential_share(k, &z, zk);
        z[k] = if share(0.0) <= share_target {
            0.0
        } else {
            let (mut lo, mut hi) = (0.0, upper);
            while hi - lo > TOLERANCE {
                let mid = 0.5 * (lo + hi);
                if share(mid) <= share_target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
    }
    let crit = CriticalValues::new(z, cfg.alpha, cfg.r)?;
    Ok(finish(cfg, levels, &reps, crit, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verification {
    /// Achieved objective over `α s_K^r`.
    pub ratio: f64,
    /// Monte Carlo standard error of `ratio`.
    pub std_error: f64,
}

/// Scores `crit` on replicates drawn from a stream disjoint from the
/// calibration stream.
pub fn verify_calibration(cfg: &CalibConfig, crit: &CriticalValues, levels: RuleLevels<'_>) -> Result<Verification> {
    cfg.noise.validate()?;
    cfg.loss.validate()?;
    if cfg.runs == 0 {
        return Err(Error::input("verification needs at least one run"));
    }
    levels.check(&cfg.family)?;
    if crit.k_max() != cfg.family.k_max() {
        return Err(Error::precondition("critical values do not match the window family"));
    }
    let reps = Replicates::build(cfg, levels, domain::VERIFICATION);
    let (lhs, se) = reps.objective(crit.values());
    let b = budget(cfg, levels.base());
    Ok(Verification {
        ratio: lhs / b,
        std_error: se / b,
    })
}
