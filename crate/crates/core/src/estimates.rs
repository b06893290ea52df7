//! Base estimates `θ̃_k` over each window and ring estimates `θ̃_{(k+1)\k}`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::loss::{location_value, LossKind};
use crate::noise::{NoiseKind, RngStream};
use crate::windows::WindowFamily;

/// All base and ring estimates of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    /// `θ̃_0, …, θ̃_K`.
    pub base: Vec<f64>,
    /// `θ̃_{(k+1)\k}` for `k = 0..K`.
    pub rings: Vec<f64>,
}

impl Estimates {
    pub fn k_max(&self) -> usize {
        self.base.len() - 1
    }

    /// Adds `c` to every estimate.
    pub fn shifted(&self, c: f64) -> Estimates {
        Estimates {
            base: self.base.iter().map(|v| v + c).collect(),
            rings: self.rings.iter().map(|v| v + c).collect(),
        }
    }
}

/// Computes base and ring estimates for `values` indexed by the family's
/// design indices.
pub fn base_estimates(values: &[f64], family: &WindowFamily, loss: LossKind) -> Result<Estimates> {
    loss.validate()?;
    if let Some(&bad) = family.order().iter().find(|&&i| i >= values.len()) {
        return Err(Error::precondition(format!(
            "window index {bad} outside data of length {}",
            values.len()
        )));
    }
    if let Some(v) = family.order().iter().map(|&i| values[i]).find(|v| !v.is_finite()) {
        return Err(Error::input(format!("non-finite observation {v}")));
    }
    let local: Vec<f64> = family.order().iter().map(|&i| values[i]).collect();
    let mut ws = Workspace::default();
    Ok(ws.estimates_local(&local, family.counts(), loss))
}

/// Reusable scratch buffer for repeated estimation.
#[derive(Debug, Default)]
pub struct Workspace {
    buf: Vec<f64>,
}

impl Workspace {
    /// Estimate over `local[lo..hi]`.
    #[inline]
    pub fn estimate(&mut self, local: &[f64], lo: usize, hi: usize, loss: LossKind) -> f64 {
        self.buf.clear();
        self.buf.extend_from_slice(&local[lo..hi]);
        location_value(&mut self.buf, loss)
    }

    /// Estimates where `local` holds the family's values nearest-first, so
    /// `U_k = local[..counts[k]]`.
    pub fn estimates_local(&mut self, local: &[f64], counts: &[usize], loss: LossKind) -> Estimates {
        let base = counts
            .iter()
            .map(|&n| self.estimate(local, 0, n, loss))
            .collect();
        let rings = counts
            .windows(2)
            .map(|w| self.estimate(local, w[0], w[1], loss))
            .collect();
        Estimates { base, rings }
    }
}

/// Domain tags separating the random streams of different phases.
pub mod domain {
    pub const LEVELS: u64 = 1;
    pub const CALIBRATION: u64 = 2;
    pub const VERIFICATION: u64 = 3;
    pub const BENCHMARK: u64 = 4;
    pub const PAIR_LEVELS: u64 = 5;
    pub const TWO_SAMPLE: u64 = 6;
    pub const MOMENTS: u64 = 7;
    pub const TAILS: u64 = 8;
}

/// Base and ring estimates for `runs` pure-noise samples on the family.
///
/// Replicate `i` uses stream `(seed, domain, i)` and lands in slot `i`, so
/// the output does not depend on the number of worker threads.
pub fn noise_replicates(
    family: &WindowFamily,
    loss: LossKind,
    noise: NoiseKind,
    runs: usize,
    seed: u64,
    domain: u64,
) -> Vec<Estimates> {
    let n = family.counts().last().copied().unwrap_or(0);
    let counts = family.counts();
    (0..runs)
        .into_par_iter()
        .map_init(
            || (Workspace::default(), vec![0.0; n]),
            |(ws, local), i| {
                let mut rng = RngStream::for_replicate(seed, domain, i as u64).rng();
                noise.fill(&mut rng, local);
                ws.estimates_local(local, counts, loss)
            },
        )
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::windows::{build_family_1d, equidistant_design, CountScheme};

    #[test]
    fn constant_data() {
        let design = equidistant_design(200);
        let fam = build_family_1d(&design, 0.0, &CountScheme::FromFive.counts(17)).unwrap();
        let values = vec![3.5; 200];
        for loss in [LossKind::Mean, LossKind::Median, LossKind::Huber(1.0)] {
            let est = base_estimates(&values, &fam, loss).unwrap();
            assert!(est.base.iter().chain(&est.rings).all(|&v| (v - 3.5).abs() < 1e-12));
            assert_eq!(est.rings.len(), 16);
        }
    }

    #[test]
    fn median_base_is_third_order_statistic() {
        let design = equidistant_design(200);
        let fam = build_family_1d(&design, 0.0, &CountScheme::FromFive.counts(17)).unwrap();
        let values: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64).collect();
        let est = base_estimates(&values, &fam, LossKind::Median).unwrap();
        let mut u0: Vec<f64> = fam.base().iter().map(|&i| values[i]).collect();
        u0.sort_by(f64::total_cmp);
        assert_eq!(est.base[0], u0[2]);
    }

    #[test]
    fn step_signal_ring_jump() {
        // g = 0 on |x| ≤ 0.2 and 2 outside: 40 design points inside
        let design = equidistant_design(200);
        let fam = build_family_1d(&design, 0.0, &CountScheme::FromFive.counts(17)).unwrap();
        let g: Vec<f64> = design.iter().map(|&x| if x.abs() <= 0.2 { 0.0 } else { 2.0 }).collect();
        assert_eq!(g.iter().filter(|&&v| v == 0.0).count(), 40);
        let est = base_estimates(&g, &fam, LossKind::Median).unwrap();
        // counts 37 → 46: ring 9 has 3 zeros and 6 twos, median 2
        for k in 0..9 {
            assert_eq!(est.rings[k], 0.0);
        }
        assert_eq!(est.rings[9], 2.0);
        assert!(est.rings[10..].iter().all(|&v| v == 2.0));
    }

    #[test]
    fn index_mismatch() {
        let design = equidistant_design(20);
        let fam = build_family_1d(&design, 0.0, &[3, 5]).unwrap();
        assert!(base_estimates(&[0.0; 5], &fam, LossKind::Mean).is_err());
    }

    #[test]
    fn replicates_are_reproducible() {
        let design = equidistant_design(50);
        let fam = build_family_1d(&design, 0.0, &[5, 10, 20]).unwrap().localized();
        let a = noise_replicates(&fam, LossKind::Median, NoiseKind::laplace(), 64, 3, 1);
        let b = noise_replicates(&fam, LossKind::Median, NoiseKind::laplace(), 64, 3, 1);
        assert_eq!(a, b);
        let c = noise_replicates(&fam, LossKind::Median, NoiseKind::laplace(), 64, 3, 2);
        assert_ne!(a, c);
    }
}
