//! Standardized noise laws and reproducible random substreams.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Shape of a symmetric, unit-variance noise law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseDist {
    Laplace,
    Gaussian,
    /// Student t with `dof ≥ 3`, rescaled to unit variance.
    StudentT(u32),
}

/// A noise law: unit-variance shape times `scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseKind {
    pub dist: NoiseDist,
    pub scale: f64,
}

impl NoiseKind {
    pub fn new(dist: NoiseDist, scale: f64) -> Result<Self> {
        let kind = NoiseKind { dist, scale };
        kind.validate()?;
        Ok(kind)
    }

    pub fn unit(dist: NoiseDist) -> Self {
        NoiseKind { dist, scale: 1.0 }
    }

    pub fn laplace() -> Self {
        Self::unit(NoiseDist::Laplace)
    }

    pub fn gaussian() -> Self {
        Self::unit(NoiseDist::Gaussian)
    }

    pub fn student(dof: u32) -> Self {
        Self::unit(NoiseDist::StudentT(dof))
    }

    pub fn with_scale(self, scale: f64) -> Self {
        NoiseKind { scale, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if let NoiseDist::StudentT(dof) = self.dist {
            if dof < 3 {
                return Err(Error::Unsupported(format!(
                    "student t with {dof} degrees of freedom has no finite variance"
                )));
            }
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::input(format!("noise scale must be finite and >= 0, got {}", self.scale)));
        }
        Ok(())
    }

    /// Laplace scale parameter `b = 1/√2` for unit variance.
    const LAPLACE_B: f64 = std::f64::consts::FRAC_1_SQRT_2;

    /// Factor turning a raw t draw into a unit-variance one.
    fn t_standardizer(dof: u32) -> f64 {
        let nu = dof as f64;
        ((nu - 2.0) / nu).sqrt()
    }

    /// Density of the unit-scale law.
    fn unit_pdf(&self, x: f64) -> f64 {
        match self.dist {
            NoiseDist::Laplace => {
                let b = Self::LAPLACE_B;
                (-x.abs() / b).exp() / (2.0 * b)
            }
            NoiseDist::Gaussian => (-0.5 * x * x).exp() / (2.0 * PI).sqrt(),
            NoiseDist::StudentT(dof) => {
                let c = Self::t_standardizer(dof);
                let t = StudentsT::new(0.0, 1.0, dof as f64).expect("valid dof");
                t.pdf(x / c) / c
            }
        }
    }

    fn unit_cdf(&self, x: f64) -> f64 {
        match self.dist {
            NoiseDist::Laplace => {
                let b = Self::LAPLACE_B;
                if x < 0.0 {
                    0.5 * (x / b).exp()
                } else {
                    1.0 - 0.5 * (-x / b).exp()
                }
            }
            NoiseDist::Gaussian => Normal::standard().cdf(x),
            NoiseDist::StudentT(dof) => {
                let c = Self::t_standardizer(dof);
                StudentsT::new(0.0, 1.0, dof as f64).expect("valid dof").cdf(x / c)
            }
        }
    }

    /// Density at `x`. Requires `scale > 0`.
    pub fn pdf(&self, x: f64) -> f64 {
        self.unit_pdf(x / self.scale) / self.scale
    }

    /// Distribution function at `x`. Requires `scale > 0`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.unit_cdf(x / self.scale)
    }

    fn draw_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.dist {
            NoiseDist::Laplace => {
                // inverse cdf on u ∈ (-1/2, 1/2)
                let u: f64 = rng.random::<f64>() - 0.5;
                let tail = 1.0 - 2.0 * u.abs();
                let mag = -Self::LAPLACE_B * tail.max(f64::MIN_POSITIVE).ln();
                if u < 0.0 {
                    -mag
                } else {
                    mag
                }
            }
            NoiseDist::Gaussian => StandardNormal.sample(rng),
            NoiseDist::StudentT(dof) => {
                let t = StudentT::new(dof as f64).expect("valid dof");
                t.sample(rng) * Self::t_standardizer(dof)
            }
        }
    }

    /// Fills `out` with i.i.d. draws.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self.dist {
            NoiseDist::StudentT(dof) => {
                let t = StudentT::new(dof as f64).expect("valid dof");
                let c = Self::t_standardizer(dof) * self.scale;
                for v in out.iter_mut() {
                    *v = t.sample(rng) * c;
                }
            }
            _ => {
                for v in out.iter_mut() {
                    *v = self.draw_unit(rng) * self.scale;
                }
            }
        }
    }

    /// Median of `|ε_1 - ε_2|` for two independent draws, by bisection on the
    /// numerically integrated distribution of the difference.
    pub fn median_abs_difference(&self) -> f64 {
        let unit = NoiseKind::unit(self.dist);
        let (lo, hi, steps) = (-40.0, 40.0, 16_000usize);
        let h = (hi - lo) / steps as f64;
        // P(|D| <= t) = ∫ f(x) (F(x + t) - F(x - t)) dx, Simpson's rule
        let prob_within = |t: f64| -> f64 {
            let g = |x: f64| unit.unit_pdf(x) * (unit.unit_cdf(x + t) - unit.unit_cdf(x - t));
            let mut acc = g(lo) + g(hi);
            for i in 1..steps {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * g(lo + i as f64 * h);
            }
            acc * h / 3.0
        };
        let (mut a, mut b) = (0.0, 10.0);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if prob_within(m) < 0.5 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b) * self.scale
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dist {
            NoiseDist::Laplace => write!(f, "laplace")?,
            NoiseDist::Gaussian => write!(f, "gaussian")?,
            NoiseDist::StudentT(d) => write!(f, "t{d}")?,
        }
        if self.scale != 1.0 {
            write!(f, "*{}", self.scale)?;
        }
        Ok(())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    /// Accepts `laplace`, `gaussian`/`normal`, `t3`/`student:3`, optionally
    /// followed by `*scale`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, scale) = match s.split_once('*') {
            Some((n, sc)) => (
                n,
                sc.parse::<f64>()
                    .map_err(|e| Error::input(format!("bad noise scale '{sc}': {e}")))?,
            ),
            None => (s.as_str(), 1.0),
        };
        let dist = match name {
            "laplace" => NoiseDist::Laplace,
            "gaussian" | "normal" => NoiseDist::Gaussian,
            other => {
                let dof = other
                    .strip_prefix("student:")
                    .or_else(|| other.strip_prefix('t'))
                    .and_then(|d| d.parse::<u32>().ok())
                    .ok_or_else(|| Error::input(format!("unknown noise '{other}'")))?;
                NoiseDist::StudentT(dof)
            }
        };
        NoiseKind::new(dist, scale)
    }
}

/// Density at zero of the noise law.
pub fn density_at_zero(kind: NoiseKind) -> f64 {
    kind.pdf(0.0)
}

/// 64-bit finalizer from SplitMix64.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies one reproducible substream: output depends only on
/// `(master_seed, stream_id, draw index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        RngStream {
            master_seed,
            stream_id,
        }
    }

    /// Stream number `index` inside a named block of streams.
    ///
    /// Different experiment phases (levels, calibration, verification,
    /// benchmark replicates) use different `domain` tags so their replicate
    /// indices never collide.
    pub fn for_replicate(master_seed: u64, domain: u64, index: u64) -> Self {
        RngStream::new(master_seed, mix64(domain.wrapping_mul(0x9E37_79B9_7F4A_7C15)) ^ index)
    }

    /// A ChaCha8 generator keyed by the mixed master seed, with the stream id
    /// as its 64-bit stream number.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.master_seed;
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            chunk.copy_from_slice(&mix64(state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// `n` i.i.d. draws from `kind` on the given stream.
pub fn sample_noise(kind: NoiseKind, n: usize, stream: RngStream) -> Result<Vec<f64>> {
    kind.validate()?;
    let mut out = vec![0.0; n];
    kind.fill(&mut stream.rng(), &mut out);
    Ok(out)
}

/// `(E|Z|^r)^{1/r}` for standard normal `Z`.
pub fn normal_abs_moment_root(r: f64) -> f64 {
    let m = 2f64.powf(r / 2.0) * statrs::function::gamma::gamma((r + 1.0) / 2.0) / PI.sqrt();
    m.powf(1.0 / r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn empty_and_deterministic() {
        let s = RngStream::new(7, 3);
        assert!(sample_noise(NoiseKind::laplace(), 0, s).unwrap().is_empty());
        let a = sample_noise(NoiseKind::laplace(), 100, s).unwrap();
        let b = sample_noise(NoiseKind::laplace(), 100, s).unwrap();
        assert_eq!(a, b);
        let c = sample_noise(NoiseKind::laplace(), 100, RngStream::new(7, 4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn prefix_stable() {
        // draw i depends only on the stream and i
        let s = RngStream::new(1, 9);
        let a = sample_noise(NoiseKind::gaussian(), 10, s).unwrap();
        let b = sample_noise(NoiseKind::gaussian(), 20, s).unwrap();
        assert_eq!(a[..], b[..10]);
    }

    #[test]
    fn unit_variance_and_symmetry() {
        for kind in [NoiseKind::laplace(), NoiseKind::gaussian(), NoiseKind::student(3)] {
            let xs = sample_noise(kind, 1_000_000, RngStream::new(42, 0)).unwrap();
            let (m, v) = mean_var(&xs);
            if kind.dist == NoiseDist::Laplace {
                // sd of the sample variance: sqrt((μ4 - 1)/n) with μ4 = 6
                assert!((v - 1.0).abs() < 3.0 * (5.0f64 / 1e6).sqrt(), "{kind}: var {v}");
                assert!((0.99..=1.01).contains(&v));
            } else if kind.dist == NoiseDist::Gaussian {
                assert!((v - 1.0).abs() < 0.01, "{kind}: var {v}");
            }
            assert!(m.abs() < 0.01, "{kind}: mean {m}");
            let mut sorted = xs.clone();
            let med = crate::loss::location_value(&mut sorted, crate::loss::LossKind::Median);
            // sd of the sample median ≈ 1/(2 f(0) √n)
            let se = 1.0 / (2.0 * density_at_zero(kind) * 1000.0);
            assert!(med.abs() < 3.0 * se, "{kind}: median {med}");
        }
    }

    #[test]
    fn streams_uncorrelated() {
        let a = sample_noise(NoiseKind::gaussian(), 100_000, RngStream::new(5, 0)).unwrap();
        let b = sample_noise(NoiseKind::gaussian(), 100_000, RngStream::new(5, 1)).unwrap();
        let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64;
        assert!(corr.abs() < 0.01, "{corr}");
    }

    #[test]
    fn densities_at_zero() {
        assert!((density_at_zero(NoiseKind::laplace()) - 1.0 / SQRT_2).abs() < 1e-12);
        assert!((density_at_zero(NoiseKind::gaussian()) - 0.398_942_280_4).abs() < 1e-9);
        assert!((density_at_zero(NoiseKind::student(3)) - 2.0 / PI).abs() < 1e-9);
        assert!((density_at_zero(NoiseKind::laplace().with_scale(2.0)) - 0.5 / SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn student_dof_restricted() {
        assert!(matches!(
            sample_noise(NoiseKind::student(2), 3, RngStream::new(0, 0)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn median_abs_difference_closed_forms() {
        // Gaussian: |ε1-ε2| ~ √2|Z|, median √2·Φ⁻¹(3/4)
        let g = NoiseKind::gaussian().median_abs_difference();
        assert!((g - SQRT_2 * 0.674_489_750_196_081_7).abs() < 1e-6, "{g}");
        // Laplace(b): P(|D| > t) = (1 + t/(2b)) e^{-t/b}; solve = 1/2
        let b = std::f64::consts::FRAC_1_SQRT_2;
        let surv = |t: f64| (1.0 + t / (2.0 * b)) * (-t / b).exp();
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..100 {
            let m = 0.5 * (lo + hi);
            if surv(m) > 0.5 { lo = m } else { hi = m }
        }
        let l = NoiseKind::laplace().median_abs_difference();
        assert!((l - lo).abs() < 1e-6, "{l} vs {lo}");
    }

    #[test]
    fn parse_and_display() {
        let k: NoiseKind = "t3".parse().unwrap();
        assert_eq!(k, NoiseKind::student(3));
        let k: NoiseKind = "laplace*0.5".parse().unwrap();
        assert_eq!(k.scale, 0.5);
        assert_eq!(k.to_string(), "laplace*0.5");
        assert!("cauchy".parse::<NoiseKind>().is_err());
    }

    #[test]
    fn normal_moments() {
        assert!((normal_abs_moment_root(2.0) - 1.0).abs() < 1e-12);
        assert!((normal_abs_moment_root(1.0) - (2.0 / PI).sqrt()).abs() < 1e-12);
    }
}
