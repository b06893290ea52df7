//! Robust 2D denoising: every pixel runs the ring rule over clipped disc
//! windows and keeps the location estimate of the selected window.
//!
//! Levels depend only on the window counts, so they are computed once per
//! distinct clipped shape before the parallel phase. Noise enters through
//! `s ↦ σ·s`, which lets one unit-scale calibration serve every image.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::artifact::{closed_form_levels, Artifact, CalibSection, Geometry};
use crate::calibration::Rule;
use crate::error::{Error, Result};
use crate::estimates::Workspace;
use crate::levels::Levels;
use crate::loss::LossKind;
use crate::noise::NoiseKind;
use crate::selector::{CriticalValues, RrThresholds};
use crate::windows::{clip_disc, disc_offsets, Center, GrowthTargets, RadiiSpec, WindowFamily};

/// Grey-level image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Image> {
        if width == 0 || height == 0 {
            return Err(Error::input(format!("image must be non-empty, got {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::input(format!(
                "{width}x{height} image needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite intensity {v}")));
        }
        Ok(Image { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Image> {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Image::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sub-image `[x0, x0+w) × [y0, y0+h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::input("crop rectangle outside the image"));
        }
        Image::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }

    /// Mean squared difference to `other`.
    pub fn mse(&self, other: &Image) -> Result<f64> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::input("images differ in size"));
        }
        let ss: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(ss / self.data.len() as f64)
    }
}

/// Robust noise scale estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleEstimate {
    pub sigma: f64,
    /// Set when the median absolute difference is zero (e.g. a constant
    /// image); `sigma` is then 0.
    pub degenerate: bool,
}

/// `median |Y(x+1,y) - Y(x,y)| / c`, where `c` is the median absolute
/// difference of two independent unit-scale draws from `noise`.
pub fn estimate_noise_scale(image: &Image, noise: NoiseKind) -> Result<ScaleEstimate> {
    noise.validate()?;
    if image.width < 2 || image.height < 2 {
        return Err(Error::input(format!(
            "noise scale needs at least a 2x2 image, got {}x{}",
            image.width, image.height
        )));
    }
    let mut diffs: Vec<f64> = (0..image.height)
        .flat_map(|y| (0..image.width - 1).map(move |x| (x, y)))
        .map(|(x, y)| (image.get(x + 1, y) - image.get(x, y)).abs())
        .collect();
    let mid = diffs.len() / 2;
    let (_, upper, _) = diffs.select_nth_unstable_by(mid, f64::total_cmp);
    let mut med = *upper;
    if diffs.len().is_multiple_of(2) {
        let lower = diffs[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        med = 0.5 * (med + lower);
    }
    if med == 0.0 {
        return Ok(ScaleEstimate {
            sigma: 0.0,
            degenerate: true,
        });
    }
    let c = noise.with_scale(1.0).median_abs_difference();
    Ok(ScaleEstimate {
        sigma: med / c,
        degenerate: false,
    })
}

/// Noise scale used to rescale the levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseScale {
    Known(f64),
    Auto,
}

impl fmt::Display for NoiseScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseScale::Known(s) => write!(f, "{s}"),
            NoiseScale::Auto => f.write_str("auto"),
        }
    }
}

impl std::str::FromStr for NoiseScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(NoiseScale::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(NoiseScale::Known(v)),
            _ => Err(Error::input(format!("noise scale must be 'auto' or a number >= 0, got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseConfig {
    pub loss: LossKind,
    pub radii: RadiiSpec,
    /// Noise law the levels refer to; also fixes the constant of the
    /// automatic scale estimate.
    pub noise: NoiseKind,
    pub noise_scale: NoiseScale,
    pub zeta: f64,
    pub alpha: f64,
    pub r: f64,
    /// Unit-scale levels of the unclipped family, when available from a
    /// calibration; clipped shapes always use closed-form levels.
    pub interior_levels: Option<Levels>,
}

impl DenoiseConfig {
    /// Settings from the first disc-geometry ring-rule section of `artifact`.
    pub fn from_artifact(artifact: &Artifact, noise_scale: NoiseScale) -> Result<DenoiseConfig> {
        let section = artifact
            .sections
            .iter()
            .find(|s| matches!(s.geometry, Geometry::Disc(_)) && s.rule() == Rule::RingRule)
            .ok_or_else(|| Error::Incompatible("artifact has no disc-geometry ring-rule section".into()))?;
        DenoiseConfig::from_section(section, noise_scale)
    }

    pub fn from_section(section: &CalibSection, noise_scale: NoiseScale) -> Result<DenoiseConfig> {
        let Geometry::Disc(radii) = section.geometry else {
            return Err(Error::Incompatible(format!("section '{}' is not a disc geometry", section.name)));
        };
        if section.rule() != Rule::RingRule {
            return Err(Error::Incompatible(format!("section '{}' is not a ring-rule section", section.name)));
        }
        let crit = section.crit();
        let zeta = crit.zeta.ok_or_else(|| {
            Error::Incompatible(format!(
                "section '{}' has no zeta; denoising needs a zeta-mode calibration",
                section.name
            ))
        })?;
        Ok(DenoiseConfig {
            loss: section.loss,
            radii,
            noise: section.noise,
            noise_scale,
            zeta,
            alpha: crit.alpha,
            r: crit.r,
            interior_levels: Some(section.levels.clone()),
        })
    }
}

/// Selected window per pixel, as an index into the radii `0..levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct KhatMap {
    pub width: usize,
    pub height: usize,
    /// Largest possible value (`levels - 1`).
    pub k_max: usize,
    pub k_hat: Vec<usize>,
}

impl KhatMap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> usize {
        self.k_hat[y * self.width + x]
    }

    pub fn to_image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.k_hat.iter().map(|&k| k as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoised {
    pub image: Image,
    pub k_hat: KhatMap,
    pub sigma: f64,
    pub warnings: Vec<String>,
}

/// Thresholds of one clipped shape plus the radius level of each kept count.
struct Shape {
    thresholds: RrThresholds,
    radius_level: Vec<usize>,
}

/// Radius index of each deduplicated count: the largest radius whose
/// clipped window has that many pixels.
fn radius_levels(counts: &[usize], offsets: &[(i64, i64, f64)], radii: &[f64], clip: impl Fn(i64, i64) -> bool) -> Vec<usize> {
    let mut per_radius = Vec::with_capacity(radii.len());
    let mut n = 0;
    let mut it = offsets.iter().peekable();
    for r in radii {
        while let Some(&&(dx, dy, d2)) = it.peek() {
            if d2 > r * r {
                break;
            }
            if clip(dx, dy) {
                n += 1;
            }
            it.next();
        }
        per_radius.push(n);
    }
    counts
        .iter()
        .map(|c| per_radius.iter().rposition(|n| n == c).expect("count comes from the same radii"))
        .collect()
}

/// Prepared per-image state: offsets, shape table and the pixel→shape map.
struct Plan {
    offsets: Vec<(i64, i64, f64)>,
    radii: Vec<f64>,
    reach: usize,
    shapes: Vec<Shape>,
    /// Shape index keyed by clipped reach `(left, right, top, bottom)`.
    by_clip: HashMap<[usize; 4], usize>,
}

impl Plan {
    fn clip_key(&self, w: usize, h: usize, x: usize, y: usize) -> [usize; 4] {
        let r = self.reach;
        [x.min(r), (w - 1 - x).min(r), y.min(r), (h - 1 - y).min(r)]
    }

    fn build(cfg: &DenoiseConfig, w: usize, h: usize, sigma: f64) -> Result<Plan> {
        cfg.radii.validate()?;
        cfg.loss.validate()?;
        let radii = cfg.radii.radii();
        let reach = radii.last().unwrap().floor() as usize;
        let offsets = disc_offsets(*radii.last().unwrap());
        let unit = cfg.noise.with_scale(1.0);
        let side = |n: usize| -> Vec<(usize, usize)> {
            let mut v: Vec<(usize, usize)> = (0..n).map(|i| (i.min(reach), (n - 1 - i).min(reach))).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let mut plan = Plan {
            offsets,
            radii,
            reach,
            shapes: Vec::new(),
            by_clip: HashMap::new(),
        };
        let mut by_counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for &(l, r) in &side(w) {
            for &(t, b) in &side(h) {
                // a representative centre in a (l+r+1)×(t+b+1) box
                let (bw, bh) = (l + r + 1, t + b + 1);
                let (_, counts) = clip_disc(&plan.offsets, &plan.radii, bw, bh, l, t);
                let idx = match by_counts.get(&counts) {
                    Some(&i) => i,
                    None => {
                        let shape = plan.shape(cfg, unit, &counts, sigma, |dx, dy| {
                            dx >= -(l as i64) && dx <= r as i64 && dy >= -(t as i64) && dy <= b as i64
                        })?;
                        plan.shapes.push(shape);
                        by_counts.insert(counts, plan.shapes.len() - 1);
                        plan.shapes.len() - 1
                    }
                };
                plan.by_clip.insert([l, r, t, b], idx);
            }
        }
        Ok(plan)
    }

    fn shape(
        &self,
        cfg: &DenoiseConfig,
        unit: NoiseKind,
        counts: &[usize],
        sigma: f64,
        inside: impl Fn(i64, i64) -> bool,
    ) -> Result<Shape> {
        let radius_level = radius_levels(counts, &self.offsets, &self.radii, inside);
        if counts.len() < 2 {
            // a single window: nothing to test
            return Ok(Shape {
                thresholds: RrThresholds::empty(),
                radius_level,
            });
        }
        let order: Vec<usize> = (0..*counts.last().unwrap()).collect();
        let family = WindowFamily::from_order(
            Center::Pixel { x: 0, y: 0 },
            order,
            counts.to_vec(),
            GrowthTargets::DISC,
        )?;
        let levels = match &cfg.interior_levels {
            Some(l) if l.k_max() == family.k_max() && l.r == cfg.r && is_interior(counts, &self.offsets) => l.clone(),
            _ => closed_form_levels(&family, cfg.loss, unit, cfg.r)?,
        };
        let crit = CriticalValues::from_zeta(&levels, cfg.zeta, cfg.alpha)?;
        let thresholds = RrThresholds::new(&levels.scaled(sigma), &crit)?;
        Ok(Shape {
            thresholds,
            radius_level,
        })
    }
}

fn is_interior(counts: &[usize], offsets: &[(i64, i64, f64)]) -> bool {
    counts.last() == Some(&offsets.len())
}

/// Denoises `image`; pixels are processed independently in parallel.
pub fn denoise_image(image: &Image, cfg: &DenoiseConfig) -> Result<Denoised> {
    let mut warnings = Vec::new();
    let sigma = match cfg.noise_scale {
        NoiseScale::Known(s) => {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::input(format!("noise scale must be >= 0, got {s}")));
            }
            s
        }
        NoiseScale::Auto => {
            let est = estimate_noise_scale(image, cfg.noise)?;
            if est.degenerate {
                warnings.push("median absolute difference is zero; noise scale set to 0".to_string());
            }
            est.sigma
        }
    };
    let (w, h) = (image.width, image.height);
    let plan = Plan::build(cfg, w, h, sigma)?;
    let rows: Vec<Vec<(f64, usize)>> = (0..h)
        .into_par_iter()
        .map_init(
            || (Workspace::default(), Vec::new(), Vec::new()),
            |(ws, local, base), y| {
                (0..w)
                    .map(|x| {
                        let shape = &plan.shapes[plan.by_clip[&plan.clip_key(w, h, x, y)]];
                        let (order, counts) = clip_disc(&plan.offsets, &plan.radii, w, h, x, y);
                        local.clear();
                        local.extend(order.iter().map(|&i| image.data[i]));
                        let (value, k) = select_lazy(ws, local, &counts, cfg.loss, &shape.thresholds, base);
                        (value, shape.radius_level[k])
                    })
                    .collect()
            },
        )
        .collect();
    let mut data = Vec::with_capacity(w * h);
    let mut k_hat = Vec::with_capacity(w * h);
    for row in rows {
        for (v, k) in row {
            data.push(v);
            k_hat.push(k);
        }
    }
    Ok(Denoised {
        image: Image { width: w, height: h, data },
        k_hat: KhatMap {
            width: w,
            height: h,
            k_max: cfg.radii.levels - 1,
            k_hat,
        },
        sigma,
        warnings,
    })
}

/// Ring rule computing base and ring estimates only as far as needed.
fn select_lazy(
    ws: &mut Workspace,
    local: &[f64],
    counts: &[usize],
    loss: LossKind,
    thr: &RrThresholds,
    base: &mut Vec<f64>,
) -> (f64, usize) {
    base.clear();
    base.push(ws.estimate(local, 0, counts[0], loss));
    let k_max = counts.len() - 1;
    for k in 0..k_max {
        let ring = ws.estimate(local, counts[k], counts[k + 1], loss);
        if !thr.accepts(k, ring, base) {
            return (base[k], k);
        }
        base.push(ws.estimate(local, 0, counts[k + 1], loss));
    }
    (base[k_max], k_max)
}

// ---------------------------------------------------------------- PGM I/O

/// Reads a binary (P5, 8- or 16-bit) or plain (P2) PGM file. Intensities
/// are returned in grey levels; the maxval is returned alongside.
pub fn read_pgm(path: &Path) -> Result<(Image, u16)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<(Image, u16)> {
    let bad = |reason: &str| Error::format("pgm", reason);
    let mut pos = 0;
    let mut token = || -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token().ok_or_else(|| bad("empty file"))?;
    let mut num = |what: &str| -> Result<usize> {
        token()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(&format!("missing or invalid {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(bad(&format!("maxval {maxval} outside 1..=65535")));
    }
    let n = width * height;
    let data: Vec<f64> = match magic.as_str() {
        "P5" => {
            // exactly one whitespace byte separates the header from the raster
            let start = pos + 1;
            let wide = maxval > 255;
            let need = n * if wide { 2 } else { 1 };
            let raster = bytes.get(start..start + need).ok_or_else(|| bad("truncated raster"))?;
            if wide {
                raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect()
            } else {
                raster.iter().map(|&b| b as f64).collect()
            }
        }
        "P2" => (0..n).map(|_| num("sample").map(|v| v as f64)).collect::<Result<_>>()?,
        other => return Err(bad(&format!("unsupported magic '{other}' (P5 or P2)"))),
    };
    if data.iter().any(|&v| v > maxval as f64) {
        return Err(bad("sample exceeds maxval"));
    }
    Ok((Image::new(width, height, data)?, maxval as u16))
}

/// Encodes `image` as binary PGM; values are rounded and clamped to
/// `[0, maxval]`.
pub fn encode_pgm(image: &Image, maxval: u16) -> Vec<u8> {
    let maxval = maxval.max(1);
    let mut out = format!("P5\n{} {}\n{}\n", image.width, image.height, maxval).into_bytes();
    let q = |v: f64| v.round().clamp(0.0, maxval as f64) as u16;
    for &v in &image.data {
        if maxval > 255 {
            out.extend_from_slice(&q(v).to_be_bytes());
        } else {
            out.push(q(v) as u8);
        }
    }
    out
}

pub fn write_pgm(path: &Path, image: &Image, maxval: u16) -> Result<()> {
    fs::write(path, encode_pgm(image, maxval)).map_err(|e| Error::io(path, e))
}

/// Writes the k̂ map with maxval `K`, so grey levels are window indices.
pub fn write_khat_pgm(path: &Path, map: &KhatMap) -> Result<()> {
    let maxval = u16::try_from(map.k_max.max(1)).map_err(|_| Error::input("too many window levels for PGM"))?;
    write_pgm(path, &map.to_image(), maxval)
}

// ------------------------------------------------------- flat real grids

const GRID_MAGIC: &str = "ADGRID v1";

/// Text header `ADGRID v1\n<width> <height>\n` followed by little-endian
/// f64 values in row-major order.
pub fn encode_grid(image: &Image) -> Vec<u8> {
    let mut out = format!("{GRID_MAGIC}\n{} {}\n", image.width, image.height).into_bytes();
    for v in &image.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn parse_grid(bytes: &[u8]) -> Result<Image> {
    let bad = |reason: &str| Error::format("grid", reason);
    let mut lines = bytes.splitn(3, |&b| b == b'\n');
    let magic = lines.next().ok_or_else(|| bad("empty file"))?;
    if magic != GRID_MAGIC.as_bytes() {
        return Err(bad("missing ADGRID v1 header"));
    }
    let dims = std::str::from_utf8(lines.next().ok_or_else(|| bad("missing dimensions"))?)
        .map_err(|_| bad("dimensions are not text"))?;
    let mut it = dims.split_whitespace().map(str::parse::<usize>);
    let (Some(Ok(w)), Some(Ok(h)), None) = (it.next(), it.next(), it.next()) else {
        return Err(bad("dimensions must be '<width> <height>'"));
    };
    let raster = lines.next().unwrap_or(&[]);
    if raster.len() != w * h * 8 {
        return Err(bad(&format!("expected {} raster bytes, got {}", w * h * 8, raster.len())));
    }
    let data = raster
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Image::new(w, h, data)
}

pub fn write_grid(path: &Path, image: &Image) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_grid(image)).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_grid(&bytes)
}

/// Reads a PGM or grid file, chosen by content.
pub fn read_image(path: &Path) -> Result<(Image, Option<u16>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(GRID_MAGIC.as_bytes()) {
        return Ok((parse_grid(&bytes)?, None));
    }
    let (img, maxval) = parse_pgm(&bytes)?;
    Ok((img, Some(maxval)))
}
