//! Location M-estimators for the supported loss menu.
//!
//! Every loss here is convex, so the set of minimizers of `Σ ρ(y_i - μ)` is a
//! closed interval. When that interval is not a single point the midpoint is
//! returned. With this convention the estimate of a union of samples always
//! lies between the smallest and largest blockwise estimates, which is what
//! the window selector relies on.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which loss `ρ` is minimized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// `ρ(x) = x²/2`.
    Mean,
    /// `ρ(x) = |x|`. Same estimator as `Quantile(0.5)`.
    Median,
    /// Check loss `ρ(x) = |x| + (2α - 1)x`.
    Quantile(f64),
    /// `ρ(x) = x²/2` for `|x| ≤ κ`, `κ|x| - κ²/2` otherwise.
    Huber(f64),
}

impl LossKind {
    pub fn quantile(alpha: f64) -> Result<Self> {
        let loss = LossKind::Quantile(alpha);
        loss.validate()?;
        Ok(loss)
    }

    pub fn huber(kink: f64) -> Result<Self> {
        let loss = LossKind::Huber(kink);
        loss.validate()?;
        Ok(loss)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossKind::Quantile(a) if !(a > 0.0 && a < 1.0) => Err(Error::input(format!(
                "quantile level must lie strictly inside (0, 1), got {a}"
            ))),
            LossKind::Huber(k) if !(k > 0.0 && k.is_finite()) => Err(Error::input(format!(
                "huber kink must be positive and finite, got {k}"
            ))),
            _ => Ok(()),
        }
    }

    /// The loss `ρ(x)`.
    pub fn rho(&self, x: f64) -> f64 {
        match *self {
            LossKind::Mean => 0.5 * x * x,
            LossKind::Median => x.abs(),
            LossKind::Quantile(a) => x.abs() + (2.0 * a - 1.0) * x,
            LossKind::Huber(k) => {
                if x.abs() <= k {
                    0.5 * x * x
                } else {
                    k * x.abs() - 0.5 * k * k
                }
            }
        }
    }

    /// Quantile level if this loss is order-statistic based.
    fn quantile_level(&self) -> Option<f64> {
        match *self {
            LossKind::Median => Some(0.5),
            LossKind::Quantile(a) => Some(a),
            _ => None,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Mean => write!(f, "mean"),
            LossKind::Median => write!(f, "median"),
            LossKind::Quantile(a) => write!(f, "quantile:{a}"),
            LossKind::Huber(k) => write!(f, "huber:{k}"),
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s.as_str(), None),
        };
        let parse_arg = |what: &str| -> Result<f64> {
            arg.ok_or_else(|| Error::input(format!("{what} loss needs a parameter, e.g. {what}:0.25")))?
                .parse::<f64>()
                .map_err(|e| Error::input(format!("bad {what} parameter: {e}")))
        };
        match name {
            "mean" => Ok(LossKind::Mean),
            "median" => Ok(LossKind::Median),
            "quantile" => LossKind::quantile(parse_arg("quantile")?),
            "huber" => LossKind::huber(parse_arg("huber")?),
            other => Err(Error::input(format!("unknown loss '{other}'"))),
        }
    }
}

/// Result of a location fit: the reported value and the argmin interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationResult {
    pub value: f64,
    pub minimizer_lo: f64,
    pub minimizer_hi: f64,
}

impl LocationResult {
    fn point(v: f64) -> Self {
        LocationResult {
            value: v,
            minimizer_lo: v,
            minimizer_hi: v,
        }
    }

    fn interval(lo: f64, hi: f64) -> Self {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        LocationResult {
            value: (lo + hi) / 2.0,
            minimizer_lo: lo,
            minimizer_hi: hi,
        }
    }
}

/// Location M-estimate of `values` under `loss`.
pub fn locate(values: &[f64], loss: LossKind) -> Result<LocationResult> {
    if values.is_empty() {
        return Err(Error::precondition("locate needs at least one value"));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::input(format!("non-finite observation {bad}")));
    }
    loss.validate()?;
    let mut scratch = values.to_vec();
    Ok(locate_in_place(&mut scratch, loss))
}

/// Same as [`locate`] but reorders `buf` and skips input validation.
///
/// Callers must guarantee a nonempty, finite buffer and a valid loss.
pub fn locate_in_place(buf: &mut [f64], loss: LossKind) -> LocationResult {
    debug_assert!(!buf.is_empty());
    if let Some(alpha) = loss.quantile_level() {
        return quantile_in_place(buf, alpha);
    }
    match loss {
        LossKind::Mean => LocationResult::point(buf.iter().sum::<f64>() / buf.len() as f64),
        LossKind::Huber(k) => huber(buf, k),
        LossKind::Median | LossKind::Quantile(_) => unreachable!(),
    }
}

/// Fast path returning only the point estimate.
#[inline]
pub fn location_value(buf: &mut [f64], loss: LossKind) -> f64 {
    locate_in_place(buf, loss).value
}

/// `ρ'(residual)` with a fixed subgradient choice at kinks.
///
/// Mean uses `ρ(x) = x²/2`, so the factor is 1 and `influence(Mean, x) = x`.
/// At zero the median returns 0 and the quantile loss returns `2α - 1`, the
/// midpoint of its subdifferential `[2α - 2, 2α]`.
pub fn influence(loss: LossKind, residual: f64) -> f64 {
    match loss {
        LossKind::Mean => residual,
        LossKind::Median => sign(residual),
        LossKind::Quantile(a) => sign(residual) + (2.0 * a - 1.0),
        LossKind::Huber(k) => residual.clamp(-k, k),
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn cmp_f64(a: &f64, b: &f64) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// α-quantile via order statistics.
///
/// The objective's slope between order statistics is `2(m - Nα)` where `m`
/// counts observations below `μ`. When `Nα` is an integer `m0` the objective
/// is flat on `[Y_(m0), Y_(m0+1)]`; otherwise the minimizer is `Y_(⌈Nα⌉)`.
fn quantile_in_place(buf: &mut [f64], alpha: f64) -> LocationResult {
    let n = buf.len();
    let target = n as f64 * alpha;
    let rounded = target.round();
    if (target - rounded).abs() < 1e-9 && rounded >= 1.0 && rounded <= (n - 1) as f64 {
        let m0 = rounded as usize;
        let (_, lo, upper) = buf.select_nth_unstable_by(m0 - 1, cmp_f64);
        let lo = *lo;
        let hi = upper.iter().copied().fold(f64::INFINITY, f64::min);
        LocationResult::interval(lo, hi)
    } else {
        let rank = (target.ceil() as usize).clamp(1, n);
        let (_, v, _) = buf.select_nth_unstable_by(rank - 1, cmp_f64);
        LocationResult::point(*v)
    }
}

/// Huber location by locating the zero set of the clipped-residual sum.
///
/// `S(μ) = Σ clip(y_i - μ, -κ, κ)` is continuous, non-increasing and linear
/// between the breakpoints `y_i ± κ`. On a segment with inner set `I`
/// (observations within `κ` of `μ`) the root is
/// `(Σ_I y_i + κ(n_up - n_down)) / |I|`. The zero set `[lo, hi]` is found as
/// `lo = inf{S ≤ 0}` and `hi = sup{S ≥ 0}`.
fn huber(buf: &mut [f64], kink: f64) -> LocationResult {
    buf.sort_unstable_by(cmp_f64);
    let ys: &[f64] = buf;
    let mut breaks: Vec<f64> = ys
        .iter()
        .flat_map(|&y| [y - kink, y + kink])
        .collect();
    breaks.sort_unstable_by(cmp_f64);
    breaks.dedup();

    let psi_sum = |mu: f64| -> f64 {
        let mut inner = 0.0;
        let mut up = 0i64;
        let mut down = 0i64;
        for &y in ys {
            let d = y - mu;
            if d > kink {
                up += 1;
            } else if d < -kink {
                down += 1;
            } else {
                inner += d;
            }
        }
        inner + kink * (up - down) as f64
    };
    // Root of the linear piece on [a, b], taken from the segment's inner set.
    let segment_root = |a: f64, b: f64| -> f64 {
        let mid = 0.5 * (a + b);
        let mut sum = 0.0;
        let mut n_inner = 0usize;
        let mut up = 0i64;
        let mut down = 0i64;
        for &y in ys {
            let d = y - mid;
            if d > kink {
                up += 1;
            } else if d < -kink {
                down += 1;
            } else {
                sum += y;
                n_inner += 1;
            }
        }
        if n_inner == 0 {
            return a;
        }
        ((sum + kink * (up - down) as f64) / n_inner as f64).clamp(a, b)
    };

    // `y - (y ± κ)` is not exactly ∓κ in floating point, so S at a
    // breakpoint inside a flat zero stretch can come out as ±ulp. Values
    // within `tol` count as zero.
    let tol = 1e-12 * ys.iter().fold(kink * ys.len() as f64, |acc, y| acc + y.abs());
    // First breakpoint with S <= 0; S(breaks[0]) = Nκ > 0.
    let first_nonpos = breaks.partition_point(|&b| psi_sum(b) > tol);
    // Last breakpoint with S >= 0; S(last) = -Nκ < 0.
    let first_neg = breaks.partition_point(|&b| psi_sum(b) >= -tol);
    let lo = segment_root(breaks[first_nonpos - 1], breaks[first_nonpos]);
    let hi = segment_root(breaks[first_neg - 1], breaks[first_neg]);
    LocationResult::interval(lo, hi)
}

/// Checks the betweenness property for one partition of `values`.
///
/// `blocks` lists index sets into `values`; they must be nonempty, disjoint
/// and cover every index. Mean and Huber comparisons allow a rounding slack
/// of `1e-12·(1 + max|y|)`; order-statistic losses are compared exactly.
pub fn betweenness_holds(values: &[f64], blocks: &[Vec<usize>], loss: LossKind) -> Result<bool> {
    if values.is_empty() || blocks.is_empty() {
        return Err(Error::precondition("betweenness needs data and at least one block"));
    }
    let mut seen = vec![false; values.len()];
    for block in blocks {
        if block.is_empty() {
            return Err(Error::precondition("partition block is empty"));
        }
        for &i in block {
            match seen.get_mut(i) {
                None => {
                    return Err(Error::precondition(format!("index {i} out of range")));
                }
                Some(true) => {
                    return Err(Error::precondition(format!("index {i} appears twice")));
                }
                Some(s) => *s = true,
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::precondition("partition does not cover all indices"));
    }

    let whole = locate(values, loss)?.value;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for block in blocks {
        let sub: Vec<f64> = block.iter().map(|&i| values[i]).collect();
        let v = locate(&sub, loss)?.value;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let slack = match loss {
        LossKind::Mean | LossKind::Huber(_) => {
            1e-12 * (1.0 + values.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
        }
        _ => 0.0,
    };
    Ok(lo - slack <= whole && whole <= hi + slack)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force argmin interval of Σρ over a fine grid.
    fn grid_argmin(values: &[f64], loss: LossKind, lo: f64, hi: f64, step: f64) -> (f64, f64) {
        let steps = ((hi - lo) / step).round() as usize;
        let obj = |mu: f64| values.iter().map(|&y| loss.rho(y - mu)).sum::<f64>();
        let mut best = f64::INFINITY;
        let mut pts = Vec::new();
        for i in 0..=steps {
            let mu = lo + i as f64 * step;
            let v = obj(mu);
            if v < best - 1e-9 {
                best = v;
                pts.clear();
                pts.push(mu);
            } else if (v - best).abs() <= 1e-9 {
                pts.push(mu);
            }
        }
        (pts[0], *pts.last().unwrap())
    }

    #[test]
    fn huber_flat_minimum_keeps_both_ends() {
        // S is exactly zero on [y_1 + κ, y_2 - κ], but 3 - (3 - κ) rounds
        // away from κ for this κ
        let kink = 0.5827078967140811;
        let r = locate(&[3.0, -1.946609773861232], LossKind::Huber(kink)).unwrap();
        assert!((r.minimizer_lo - (-1.946609773861232 + kink)).abs() < 1e-12);
        assert!((r.minimizer_hi - (3.0 - kink)).abs() < 1e-12);
        assert!((r.value - 0.5 * (3.0 - 1.946609773861232)).abs() < 1e-12);
    }

    #[test]
    fn median_odd() {
        assert_eq!(locate(&[3.0, 1.0, 2.0], LossKind::Median).unwrap().value, 2.0);
    }

    #[test]
    fn median_even_is_mean_of_middle_order_statistics() {
        let r = locate(&[1.0, 2.0, 3.0, 10.0], LossKind::Median).unwrap();
        assert_eq!(r.value, 2.5);
        assert_eq!((r.minimizer_lo, r.minimizer_hi), (2.0, 3.0));
    }

    #[test]
    fn lower_quartile_takes_interval_midpoint() {
        let data = [0.0, 1.0, 2.0, 3.0];
        let (glo, ghi) = grid_argmin(&data, LossKind::Quantile(0.25), -1.0, 4.0, 1e-4);
        assert!((glo - 0.0).abs() < 1e-3 && (ghi - 1.0).abs() < 1e-3);
        let r = locate(&data, LossKind::Quantile(0.25)).unwrap();
        assert_eq!(r.value, 0.5);
    }

    #[test]
    fn huber_root_of_clipped_sum() {
        let r = locate(&[0.0, 0.0, 10.0], LossKind::Huber(1.0)).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12, "{r:?}");
        // bisection oracle on the monotone clipped sum
        let s = |mu: f64| [0.0, 0.0, 10.0].iter().map(|y: &f64| (y - mu).clamp(-1.0, 1.0)).sum::<f64>();
        let (mut a, mut b) = (-20.0, 20.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if s(m) > 0.0 { a = m } else { b = m }
        }
        assert!((r.value - 0.5 * (a + b)).abs() < 1e-9);
    }

    #[test]
    fn huber_flat_zero_set() {
        // no observation within the kink of any μ in (1, 9): S ≡ 0 there
        let r = locate(&[0.0, 10.0], LossKind::Huber(1.0)).unwrap();
        assert_eq!((r.minimizer_lo, r.minimizer_hi), (1.0, 9.0));
        assert_eq!(r.value, 5.0);
    }

    #[test]
    fn median_equals_half_quantile() {
        let data = [4.0, -1.0, 7.5, 2.0, 2.0, 9.0];
        let a = locate(&data, LossKind::Median).unwrap();
        let b = locate(&data, LossKind::Quantile(0.5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quantile_near_integer_target() {
        // 10 * 0.3 is not exactly 3 in floating point
        let data: Vec<f64> = (0..10).map(f64::from).collect();
        let r = locate(&data, LossKind::Quantile(0.3)).unwrap();
        assert_eq!((r.minimizer_lo, r.minimizer_hi), (2.0, 3.0));
    }

    #[test]
    fn influence_values() {
        assert_eq!(influence(LossKind::Median, -3.0), -1.0);
        assert_eq!(influence(LossKind::Huber(1.0), 5.0), 1.0);
        assert_eq!(influence(LossKind::Mean, 2.5), 2.5);
        assert_eq!(influence(LossKind::Quantile(0.25), 0.0), -0.5);
        assert_eq!(influence(LossKind::Quantile(0.25), 2.0), 0.5);
    }

    #[test]
    fn errors() {
        assert!(matches!(locate(&[], LossKind::Mean), Err(Error::Precondition(_))));
        assert!(matches!(locate(&[1.0, f64::NAN], LossKind::Mean), Err(Error::Input(_))));
        assert!(LossKind::quantile(1.0).is_err());
        assert!(LossKind::huber(0.0).is_err());
        assert!("quantile:0.3".parse::<LossKind>().is_ok());
        assert!("bogus".parse::<LossKind>().is_err());
    }

    #[test]
    fn betweenness_examples() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert!(betweenness_holds(&v, &[vec![0, 1], vec![2, 3]], LossKind::Median).unwrap());
        assert!(betweenness_holds(&v, &[vec![0, 1, 2, 3]], LossKind::Huber(0.5)).unwrap());
        assert!(betweenness_holds(&v, &[vec![0, 1], vec![2]], LossKind::Mean).is_err());
        assert!(betweenness_holds(&v, &[vec![0, 1], vec![1, 2, 3]], LossKind::Mean).is_err());
        assert!(betweenness_holds(&v, &[vec![0, 1], vec![], vec![2, 3]], LossKind::Mean).is_err());
    }
}
