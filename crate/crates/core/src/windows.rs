//! Nested neighbourhood families `U_0 ⊂ U_1 ⊂ … ⊂ U_K` and their rings.
//!
//! A family is stored as one ordering of design indices plus the cumulative
//! counts `N_0 < … < N_K`: `U_k` is the prefix of length `N_k` and the ring
//! `U_{k+1} \ U_k` is the slice between consecutive counts. Nesting, ring
//! disjointness and the partition identity hold by construction.

use crate::error::{Error, Result};

/// Where a family is centred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Center {
    Point(f64),
    Pixel { x: usize, y: usize },
}

/// Declared geometric growth targets `q_1 ≤ N_{k+1}/N_k ≤ q_2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthTargets {
    pub lo: f64,
    pub hi: f64,
}

impl GrowthTargets {
    pub const LINE: GrowthTargets = GrowthTargets { lo: 1.15, hi: 1.35 };
    pub const DISC: GrowthTargets = GrowthTargets { lo: 1.2, hi: 2.5 };
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowFamily {
    center: Center,
    order: Vec<usize>,
    counts: Vec<usize>,
    growth: GrowthTargets,
    /// Steps `k` where `N_{k+1}/N_k` falls outside the declared targets.
    growth_violations: Vec<usize>,
}

impl WindowFamily {
    /// Builds a family from an ordering and cumulative counts.
    pub fn from_order(
        center: Center,
        order: Vec<usize>,
        counts: Vec<usize>,
        growth: GrowthTargets,
    ) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::precondition("a window family needs at least one level"));
        }
        if counts[0] == 0 {
            return Err(Error::precondition("window counts must be positive"));
        }
        if counts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::precondition("window counts must be strictly increasing"));
        }
        let n_max = *counts.last().unwrap();
        if n_max > order.len() {
            return Err(Error::precondition(format!(
                "largest window needs {n_max} points but only {} are available",
                order.len()
            )));
        }
        let mut order = order;
        order.truncate(n_max);
        let mut fam = WindowFamily {
            center,
            order,
            counts,
            growth,
            growth_violations: Vec::new(),
        };
        fam.growth_violations = fam.compute_violations();
        Ok(fam)
    }

    fn compute_violations(&self) -> Vec<usize> {
        self.counts
            .windows(2)
            .enumerate()
            .filter(|(_, w)| {
                let ratio = w[1] as f64 / w[0] as f64;
                ratio < self.growth.lo || ratio > self.growth.hi
            })
            .map(|(k, _)| k)
            .collect()
    }

    pub fn with_growth_targets(mut self, growth: GrowthTargets) -> Self {
        self.growth = growth;
        self.growth_violations = self.compute_violations();
        self
    }

    pub fn center(&self) -> Center {
        self.center
    }

    /// Largest index `K`.
    pub fn k_max(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn count(&self, k: usize) -> usize {
        self.counts[k]
    }

    /// All design indices of `U_K`, nearest first.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// `U_k` as design indices.
    pub fn members(&self, k: usize) -> &[usize] {
        &self.order[..self.counts[k]]
    }

    /// `U_0`.
    pub fn base(&self) -> &[usize] {
        self.members(0)
    }

    pub fn growth_targets(&self) -> GrowthTargets {
        self.growth
    }

    pub fn growth_violations(&self) -> &[usize] {
        &self.growth_violations
    }

    /// Observed `(min, max)` of consecutive count ratios.
    pub fn growth_range(&self) -> Option<(f64, f64)> {
        self.counts
            .windows(2)
            .map(|w| w[1] as f64 / w[0] as f64)
            .fold(None, |acc, r| match acc {
                None => Some((r, r)),
                Some((lo, hi)) => Some((lo.min(r), hi.max(r))),
            })
    }

    /// Same shape with design indices replaced by `0..N_K`.
    ///
    /// Pure-noise simulations only need values on `U_K`, so they work on this
    /// compact form.
    pub fn localized(&self) -> WindowFamily {
        WindowFamily {
            center: self.center,
            order: (0..self.order.len()).collect(),
            counts: self.counts.clone(),
            growth: self.growth,
            growth_violations: self.growth_violations.clone(),
        }
    }
}

/// `U_{k+1} \ U_k` for `0 ≤ k < K`.
pub fn ring_indices(family: &WindowFamily, k: usize) -> Result<&[usize]> {
    if k >= family.k_max() {
        return Err(Error::precondition(format!(
            "ring index {k} out of range for K = {}",
            family.k_max()
        )));
    }
    Ok(&family.order[family.counts[k]..family.counts[k + 1]])
}

/// The rings `A_1, …, A_K` together with `U_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RingDecomposition {
    pub base: Vec<usize>,
    pub rings: Vec<Vec<usize>>,
}

impl RingDecomposition {
    pub fn of(family: &WindowFamily) -> Self {
        RingDecomposition {
            base: family.base().to_vec(),
            rings: (0..family.k_max())
                .map(|k| ring_indices(family, k).unwrap().to_vec())
                .collect(),
        }
    }
}

/// Equidistant design `x_i = -1 + 2(i-1)/(n-1)`, endpoints included.
pub fn equidistant_design(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Window size schemes for the 1D benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountScheme {
    /// `N_k = ⌊5^{k+1}/4^k⌋`, starting at 5.
    FromFive,
    /// `N_k = ⌊5^k/4^{k-1}⌋ = ⌊4·(5/4)^k⌋`, starting at 4.
    FromFour,
}

impl CountScheme {
    pub fn name(&self) -> &'static str {
        match self {
            CountScheme::FromFive => "from5",
            CountScheme::FromFour => "from4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "from5" => Ok(CountScheme::FromFive),
            "from4" => Ok(CountScheme::FromFour),
            other => Err(Error::input(format!(
                "unknown window scheme '{other}' (expected from5 or from4)"
            ))),
        }
    }

    /// First `levels` counts of the scheme, computed in exact integer arithmetic.
    pub fn counts(&self, levels: usize) -> Vec<usize> {
        let shift = match self {
            CountScheme::FromFive => 1u32,
            CountScheme::FromFour => 0u32,
        };
        (0..levels as u32)
            .map(|k| {
                let e = k + shift;
                // ⌊5^e / 4^(e-1)⌋ = ⌊4·5^e / 4^e⌋
                let num = 4u128 * 5u128.pow(e);
                (num / 4u128.pow(e)) as usize
            })
            .collect()
    }
}

/// Family of windows around `center` holding the `counts[k]` design points
/// nearest to it. Ties in distance go to the smaller index.
pub fn build_family_1d(design: &[f64], center: f64, counts: &[usize]) -> Result<WindowFamily> {
    if design.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::precondition("design points must be sorted"));
    }
    if let Some(&n_max) = counts.last() {
        if n_max > design.len() {
            return Err(Error::precondition(format!(
                "window count {n_max} exceeds design size {}",
                design.len()
            )));
        }
    }
    // Distances are quantized so that points symmetric about the centre tie
    // exactly despite rounding in the design coordinates.
    let key = |i: usize| ((design[i] - center).abs() * 1e9).round() as i64;
    let mut order: Vec<usize> = (0..design.len()).collect();
    order.sort_by_key(|&i| (key(i), i));
    WindowFamily::from_order(Center::Point(center), order, counts.to_vec(), GrowthTargets::LINE)
}

/// Radii `r_k = r_0·g^k` for `k = 0..levels`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiiSpec {
    pub r0: f64,
    pub growth: f64,
    pub levels: usize,
}

impl Default for RadiiSpec {
    /// `r_0 = 1.5` (3×3 block) and area growth of about 1.4 per level.
    fn default() -> Self {
        RadiiSpec {
            r0: 1.5,
            growth: 1.4_f64.sqrt(),
            levels: 14,
        }
    }
}

impl RadiiSpec {
    pub fn radii(&self) -> Vec<f64> {
        (0..self.levels)
            .map(|k| self.r0 * self.growth.powi(k as i32))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0 && self.growth > 1.0 && self.levels >= 1) {
            return Err(Error::input(format!(
                "invalid radii: r0={} growth={} levels={}",
                self.r0, self.growth, self.levels
            )));
        }
        Ok(())
    }
}

/// Pixel offsets within `radius`, sorted by distance, then row, then column.
pub(crate) fn disc_offsets(radius: f64) -> Vec<(i64, i64, f64)> {
    let reach = radius.floor() as i64;
    let r2 = radius * radius;
    let mut offs = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let d2 = (dx * dx + dy * dy) as f64;
            if d2 <= r2 {
                offs.push((dx, dy, d2));
            }
        }
    }
    offs.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0)));
    offs
}

/// Disc windows of the given radii around a pixel, clipped at the borders.
///
/// Levels whose clipped pixel count does not grow are dropped, so the result
/// may have fewer levels than `radii`.
pub fn build_family_2d(
    width: usize,
    height: usize,
    center: (usize, usize),
    radii: &[f64],
) -> Result<WindowFamily> {
    let (cx, cy) = center;
    if cx >= width || cy >= height {
        return Err(Error::precondition(format!(
            "center ({cx}, {cy}) outside {width}x{height} image"
        )));
    }
    if radii.is_empty() || radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] < 0.0 {
        return Err(Error::precondition("radii must be nonnegative and strictly increasing"));
    }
    let offsets = disc_offsets(*radii.last().unwrap());
    let (order, counts) = clip_disc(&offsets, radii, width, height, cx, cy);
    WindowFamily::from_order(Center::Pixel { x: cx, y: cy }, order, counts, GrowthTargets::DISC)
}

/// Unclipped disc family at the centre of the smallest square that holds
/// the largest disc.
pub fn interior_disc_family(spec: &RadiiSpec) -> Result<WindowFamily> {
    spec.validate()?;
    let radii = spec.radii();
    let reach = radii.last().unwrap().floor() as usize;
    let side = 2 * reach + 1;
    build_family_2d(side, side, (reach, reach), &radii)
}

/// Clips precomputed disc offsets at the image borders and returns the
/// pixel ordering with deduplicated cumulative counts.
pub(crate) fn clip_disc(
    offsets: &[(i64, i64, f64)],
    radii: &[f64],
    width: usize,
    height: usize,
    cx: usize,
    cy: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut order = Vec::with_capacity(offsets.len());
    let mut counts = Vec::with_capacity(radii.len());
    let mut level = 0;
    for &(dx, dy, d2) in offsets {
        while level < radii.len() && d2 > radii[level] * radii[level] {
            push_count(&mut counts, order.len());
            level += 1;
        }
        let x = cx as i64 + dx;
        let y = cy as i64 + dy;
        if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
            order.push(y as usize * width + x as usize);
        }
    }
    while level < radii.len() {
        push_count(&mut counts, order.len());
        level += 1;
    }
    (order, counts)
}

fn push_count(counts: &mut Vec<usize>, n: usize) {
    if n > 0 && counts.last().is_none_or(|&last| n > last) {
        counts.push(n);
    }
}
