//! Stochastic error levels under pure noise.
//!
//! `s_j = E₀[|θ̃_j|^r]^{1/r}` is the noise scale of the base estimate on
//! `U_j`, and `s_kj = E₀[|θ̃_{(k+1)\k} - θ̃_j|^r]^{1/r}` (for `j ≤ k`) the
//! scale of the ring-versus-window test statistic. The ring `U_{k+1} \ U_k`
//! is disjoint from `U_j` whenever `j ≤ k`, so in the closed-form modes the
//! two variances simply add.

use std::fmt;

use crate::error::{Error, Result};
use crate::estimates::{domain, noise_replicates, Estimates};
use crate::loss::LossKind;
use crate::noise::{normal_abs_moment_root, NoiseKind};
use crate::windows::WindowFamily;

/// How a set of levels was obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelsMethod {
    ExactMean,
    Asymptotic,
    MonteCarlo { runs: usize, seed: u64 },
}

impl fmt::Display for LevelsMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelsMethod::ExactMean => write!(f, "exact_mean"),
            LevelsMethod::Asymptotic => write!(f, "asymptotic"),
            LevelsMethod::MonteCarlo { .. } => write!(f, "monte_carlo"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Levels {
    pub r: f64,
    /// `s_0, …, s_K`.
    pub s: Vec<f64>,
    /// Row `k` (for `k = 0..K`) holds `s_k0, …, s_kk`.
    pub s_ring: Vec<Vec<f64>>,
    pub method: LevelsMethod,
    pub warnings: Vec<String>,
}

impl Levels {
    pub fn k_max(&self) -> usize {
        self.s.len() - 1
    }

    pub fn s(&self, j: usize) -> f64 {
        self.s[j]
    }

    /// `s_kj` for `j ≤ k < K`.
    pub fn ring(&self, k: usize, j: usize) -> f64 {
        self.s_ring[k][j]
    }

    /// Levels for noise of scale `sigma` (every level is scale-equivariant).
    pub fn scaled(&self, sigma: f64) -> Levels {
        Levels {
            r: self.r,
            s: self.s.iter().map(|v| v * sigma).collect(),
            s_ring: self
                .s_ring
                .iter()
                .map(|row| row.iter().map(|v| v * sigma).collect())
                .collect(),
            method: self.method.clone(),
            warnings: self.warnings.clone(),
        }
    }

    /// Builds levels from explicit tables, checking shapes and positivity.
    pub fn from_tables(
        r: f64,
        s: Vec<f64>,
        s_ring: Vec<Vec<f64>>,
        method: LevelsMethod,
    ) -> Result<Levels> {
        if s.is_empty() || s_ring.len() + 1 != s.len() {
            return Err(Error::input("levels tables have inconsistent sizes"));
        }
        if s_ring.iter().enumerate().any(|(k, row)| row.len() != k + 1) {
            return Err(Error::input("ring level table must be lower triangular"));
        }
        let all_positive = s.iter().chain(s_ring.iter().flatten()).all(|&v| v > 0.0 && v.is_finite());
        if !all_positive {
            return Err(Error::input("error levels must be positive and finite"));
        }
        if r < 1.0 {
            return Err(Error::input(format!("moment order r must be >= 1, got {r}")));
        }
        Ok(Levels {
            r,
            s,
            s_ring,
            method,
            warnings: Vec::new(),
        })
    }
}

fn independent_rings(family: &WindowFamily, var_of: impl Fn(usize) -> f64, c_r: f64) -> Vec<Vec<f64>> {
    let counts = family.counts();
    (0..family.k_max())
        .map(|k| {
            let ring_var = var_of(counts[k + 1] - counts[k]);
            (0..=k)
                .map(|j| c_r * (ring_var + var_of(counts[j])).sqrt())
                .collect()
        })
        .collect()
}

/// Exact levels of sample means under unit-variance noise (`r = 2` only).
pub fn levels_exact_mean(family: &WindowFamily, r: f64) -> Result<Levels> {
    if r != 2.0 {
        return Err(Error::Unsupported(format!(
            "exact mean levels need r = 2 (got {r}); use Monte Carlo levels"
        )));
    }
    let var = |n: usize| 1.0 / n as f64;
    Ok(Levels {
        r,
        s: family.counts().iter().map(|&n| var(n).sqrt()).collect(),
        s_ring: independent_rings(family, var, 1.0),
        method: LevelsMethod::ExactMean,
        warnings: Vec::new(),
    })
}

/// Normal-limit levels for median and quantile estimates.
///
/// The estimate over `N` points has asymptotic variance `α(1-α)/(f0² N)`
/// (`1/(4 f0² N)` for the median) and the `r`-th moment root of a centred
/// normal is `c_r` times its standard deviation.
pub fn levels_asymptotic(family: &WindowFamily, loss: LossKind, f0: f64, r: f64) -> Result<Levels> {
    let alpha = match loss {
        LossKind::Median => 0.5,
        LossKind::Quantile(a) => a,
        other => {
            return Err(Error::Unsupported(format!(
                "asymptotic levels are only available for median and quantile losses, not {other}"
            )))
        }
    };
    if !(f0 > 0.0 && f0.is_finite()) {
        return Err(Error::input(format!("density at the target quantile must be positive, got {f0}")));
    }
    if r < 1.0 {
        return Err(Error::input(format!("moment order r must be >= 1, got {r}")));
    }
    let c_r = normal_abs_moment_root(r);
    let unit = alpha * (1.0 - alpha) / (f0 * f0);
    let var = |n: usize| unit / n as f64;
    Ok(Levels {
        r,
        s: family.counts().iter().map(|&n| c_r * var(n).sqrt()).collect(),
        s_ring: independent_rings(family, var, c_r),
        method: LevelsMethod::Asymptotic,
        warnings: Vec::new(),
    })
}

pub(crate) const MIN_MC_RUNS: usize = 1000;

fn moment_root(sum: f64, runs: usize, r: f64) -> f64 {
    (sum / runs as f64).powf(1.0 / r)
}

/// Monte Carlo levels from `runs` pure-noise replicates.
///
/// Sums are accumulated in replicate order after the parallel phase, so the
/// result is bitwise reproducible. The `s_j` sequence is made non-increasing
/// by a running minimum; any adjustment is reported in `warnings`.
pub fn levels_mc(
    family: &WindowFamily,
    loss: LossKind,
    noise: NoiseKind,
    runs: usize,
    r: f64,
    seed: u64,
) -> Result<Levels> {
    noise.validate()?;
    loss.validate()?;
    if runs == 0 {
        return Err(Error::input("Monte Carlo levels need at least one run"));
    }
    if r < 1.0 {
        return Err(Error::input(format!("moment order r must be >= 1, got {r}")));
    }
    let reps = noise_replicates(&family.localized(), loss, noise, runs, seed, domain::LEVELS);
    Ok(levels_from_replicates(&reps, r, LevelsMethod::MonteCarlo { runs, seed }))
}

pub(crate) fn levels_from_replicates(reps: &[Estimates], r: f64, method: LevelsMethod) -> Levels {
    let runs = reps.len();
    let k_max = reps[0].k_max();
    let mut s_sum = vec![0.0; k_max + 1];
    let mut ring_sum: Vec<Vec<f64>> = (0..k_max).map(|k| vec![0.0; k + 1]).collect();
    for est in reps {
        for (acc, b) in s_sum.iter_mut().zip(&est.base) {
            *acc += b.abs().powf(r);
        }
        for (k, row) in ring_sum.iter_mut().enumerate() {
            for (j, acc) in row.iter_mut().enumerate() {
                *acc += (est.rings[k] - est.base[j]).abs().powf(r);
            }
        }
    }
    let mut warnings = Vec::new();
    if runs < MIN_MC_RUNS {
        warnings.push(format!("only {runs} Monte Carlo runs (recommended >= {MIN_MC_RUNS})"));
    }
    let mut s: Vec<f64> = s_sum.iter().map(|&v| moment_root(v, runs, r)).collect();
    for j in 1..s.len() {
        if s[j] > s[j - 1] {
            warnings.push(format!("s_{j} raised above s_{} by sampling noise; clamped", j - 1));
            s[j] = s[j - 1];
        }
    }
    let s_ring = ring_sum
        .iter()
        .map(|row| row.iter().map(|&v| moment_root(v, runs, r)).collect())
        .collect();
    Levels {
        r,
        s,
        s_ring,
        method,
        warnings,
    }
}

/// Levels of the classical pairwise statistics `θ̃_{k+1} - θ̃_ℓ`, `ℓ ≤ k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLevels {
    pub r: f64,
    /// Row `k` (for `k = 0..K`) holds `s(θ̃_{k+1} - θ̃_ℓ)` for `ℓ = 0..=k`.
    pub pair: Vec<Vec<f64>>,
    pub method: LevelsMethod,
}

impl PairLevels {
    pub fn k_max(&self) -> usize {
        self.pair.len()
    }

    /// `E₀[|θ̃_{k+1} - θ̃_ℓ|^r]^{1/r}`.
    pub fn get(&self, k_plus_one: usize, l: usize) -> f64 {
        self.pair[k_plus_one - 1][l]
    }

    pub fn scaled(&self, sigma: f64) -> PairLevels {
        PairLevels {
            r: self.r,
            pair: self
                .pair
                .iter()
                .map(|row| row.iter().map(|v| v * sigma).collect())
                .collect(),
            method: self.method.clone(),
        }
    }

    pub fn from_table(r: f64, pair: Vec<Vec<f64>>, method: LevelsMethod) -> Result<PairLevels> {
        if pair.iter().enumerate().any(|(k, row)| row.len() != k + 1) {
            return Err(Error::input("pair level table must be lower triangular"));
        }
        if !pair.iter().flatten().all(|&v| v > 0.0 && v.is_finite()) {
            return Err(Error::input("pair levels must be positive and finite"));
        }
        Ok(PairLevels { r, pair, method })
    }
}

/// Exact pairwise levels of nested sample means (`r = 2`):
/// `Var(θ̃_{k+1} - θ̃_ℓ) = 1/N_ℓ - 1/N_{k+1}`.
pub fn pair_levels_exact_mean(family: &WindowFamily, r: f64) -> Result<PairLevels> {
    if r != 2.0 {
        return Err(Error::Unsupported(format!("exact pair levels need r = 2 (got {r})")));
    }
    let counts = family.counts();
    let pair = (0..family.k_max())
        .map(|k| {
            (0..=k)
                .map(|l| (1.0 / counts[l] as f64 - 1.0 / counts[k + 1] as f64).sqrt())
                .collect()
        })
        .collect();
    Ok(PairLevels {
        r,
        pair,
        method: LevelsMethod::ExactMean,
    })
}

/// Normal-limit pairwise levels for median and quantile estimates.
///
/// By the Bahadur representation a nested quantile estimate behaves like a
/// mean of bounded scores, so `Var(θ̃_{k+1} - θ̃_ℓ) ≈ v·(1/N_ℓ - 1/N_{k+1})`
/// with `v = α(1-α)/f0²`.
pub fn pair_levels_asymptotic(family: &WindowFamily, loss: LossKind, f0: f64, r: f64) -> Result<PairLevels> {
    let unit = levels_asymptotic(family, loss, f0, r)?;
    let counts = family.counts();
    // s_0 = c_r·sqrt(v/N_0) gives c_r·sqrt(v)
    let scale = unit.s(0) * (counts[0] as f64).sqrt();
    let pair = (0..family.k_max())
        .map(|k| {
            (0..=k)
                .map(|l| scale * (1.0 / counts[l] as f64 - 1.0 / counts[k + 1] as f64).sqrt())
                .collect()
        })
        .collect();
    Ok(PairLevels {
        r,
        pair,
        method: LevelsMethod::Asymptotic,
    })
}

/// Monte Carlo pairwise levels; nested estimates are dependent, so no
/// closed form is assumed.
pub fn pair_levels_mc(
    family: &WindowFamily,
    loss: LossKind,
    noise: NoiseKind,
    runs: usize,
    r: f64,
    seed: u64,
) -> Result<PairLevels> {
    noise.validate()?;
    loss.validate()?;
    if runs == 0 {
        return Err(Error::input("Monte Carlo levels need at least one run"));
    }
    let reps = noise_replicates(&family.localized(), loss, noise, runs, seed, domain::PAIR_LEVELS);
    let k_max = family.k_max();
    let mut sums: Vec<Vec<f64>> = (0..k_max).map(|k| vec![0.0; k + 1]).collect();
    for est in &reps {
        for (k, row) in sums.iter_mut().enumerate() {
            for (l, acc) in row.iter_mut().enumerate() {
                *acc += (est.base[k + 1] - est.base[l]).abs().powf(r);
            }
        }
    }
    let pair = sums
        .iter()
        .map(|row| row.iter().map(|&v| moment_root(v, runs, r)).collect())
        .collect();
    Ok(PairLevels {
        r,
        pair,
        method: LevelsMethod::MonteCarlo { runs, seed },
    })
}
