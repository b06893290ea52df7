//! Text serialization of calibration results.
//!
//! An artifact holds one or more sections, each a calibrated rule for one
//! loss on one window geometry, together with the level tables it was
//! calibrated against. Floats are written in shortest round-trip form so a
//! reloaded section reproduces the calibrated thresholds bit for bit. The
//! header carries an FNV-1a hash of the body; no timestamps are written.

use std::fmt::Write as _;
use std::path::Path;

use crate::calibration::{calibrate, CalibConfig, CalibMode, CalibResult, Rule, RuleLevels};
use crate::error::{Error, Result};
use crate::levels::{
    levels_asymptotic, levels_exact_mean, levels_mc, pair_levels_asymptotic, pair_levels_exact_mean,
    pair_levels_mc, Levels,
    LevelsMethod, PairLevels,
};
use crate::loss::LossKind;
use crate::noise::{mix64, NoiseKind};
use crate::selector::CriticalValues;
use crate::windows::{
    build_family_1d, equidistant_design, interior_disc_family, CountScheme, RadiiSpec, WindowFamily,
};

const MAGIC: &str = "adaptmreg-calibration v1";

/// Window geometry a section was calibrated on.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// Equidistant design of `n` points on [-1, 1] with `windows` nested
    /// windows around `center`.
    Line {
        n: usize,
        center: f64,
        scheme: CountScheme,
        windows: usize,
    },
    /// Interior disc family.
    Disc(RadiiSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibSection {
    pub name: String,
    pub loss: LossKind,
    pub noise: NoiseKind,
    pub geometry: Geometry,
    pub counts: Vec<usize>,
    pub levels: Levels,
    pub pair: Option<PairLevels>,
    pub result: CalibResult,
}

impl CalibSection {
    pub fn rule(&self) -> Rule {
        self.result.rule
    }

    pub fn crit(&self) -> &CriticalValues {
        &self.result.crit
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Artifact {
    /// Settings echoed as `# key=value` lines; informational only.
    pub settings: Vec<(String, String)>,
    pub sections: Vec<CalibSection>,
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn method_line(m: &LevelsMethod) -> String {
    match m {
        LevelsMethod::MonteCarlo { runs, seed } => format!("monte_carlo {runs} {seed}"),
        other => other.to_string(),
    }
}

fn write_section(out: &mut String, s: &CalibSection) {
    let res = &s.result;
    let _ = writeln!(out, "[section {}]", s.name);
    let _ = writeln!(out, "loss: {}", s.loss);
    let _ = writeln!(out, "rule: {}", res.rule);
    let _ = writeln!(out, "mode: {}", res.mode);
    let _ = writeln!(out, "noise: {}", s.noise);
    match &s.geometry {
        Geometry::Line {
            n,
            center,
            scheme,
            windows,
        } => {
            let _ = writeln!(out, "geometry: line {n} {center} {} {windows}", scheme.name());
        }
        Geometry::Disc(r) => {
            let _ = writeln!(out, "geometry: disc {} {} {}", r.r0, r.growth, r.levels);
        }
    }
    let _ = writeln!(out, "counts: {}", join(&s.counts));
    let _ = writeln!(out, "r: {}", res.crit.r);
    let _ = writeln!(out, "alpha: {}", res.crit.alpha);
    let _ = writeln!(out, "runs: {}", res.runs);
    let _ = writeln!(out, "seed: {}", res.seed);
    if let Some(z) = res.crit.zeta {
        let _ = writeln!(out, "zeta: {z}");
    }
    let _ = writeln!(out, "achieved_lhs: {}", res.achieved_lhs);
    let _ = writeln!(out, "budget: {}", res.budget);
    let _ = writeln!(out, "std_error: {}", res.std_error);
    let _ = writeln!(out, "z: {}", join(res.crit.values()));
    let _ = writeln!(out, "share: {}", join(&res.per_k_error_share));
    let _ = writeln!(out, "levels: {}", method_line(&s.levels.method));
    let _ = writeln!(out, "s: {}", join(&s.levels.s));
    for (k, row) in s.levels.s_ring.iter().enumerate() {
        let _ = writeln!(out, "s_ring {k}: {}", join(row));
    }
    if let Some(p) = &s.pair {
        let _ = writeln!(out, "pair_levels: {}", method_line(&p.method));
        for (k, row) in p.pair.iter().enumerate() {
            let _ = writeln!(out, "pair {k}: {}", join(row));
        }
    }
    for w in &res.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
}

impl Artifact {
    pub fn body(&self) -> String {
        let mut out = String::new();
        for s in &self.sections {
            write_section(&mut out, s);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let body = self.body();
        let mut out = format!("{MAGIC}\nconfig_hash: {:016x}\n", fnv1a64(body.as_bytes()));
        for (k, v) in &self.settings {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(&body);
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Artifact> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Artifact::parse(&text)
    }

    /// Section for `loss` and `rule`, if any.
    pub fn find(&self, loss: LossKind, rule: Rule) -> Option<&CalibSection> {
        self.sections.iter().find(|s| s.loss == loss && s.rule() == rule)
    }

    pub fn by_name(&self, name: &str) -> Option<&CalibSection> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn parse(text: &str) -> Result<Artifact> {
        let bad = |reason: String| Error::format("calibration artifact", reason);
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad(format!("missing '{MAGIC}' header")));
        }
        let hash_line = lines.next().ok_or_else(|| bad("missing config_hash".into()))?;
        let stated = hash_line
            .strip_prefix("config_hash: ")
            .and_then(|h| u64::from_str_radix(h, 16).ok())
            .ok_or_else(|| bad(format!("bad hash line '{hash_line}'")))?;

        let mut settings = Vec::new();
        let mut blocks: Vec<(String, Vec<(String, String)>)> = Vec::new();
        for (no, line) in lines.enumerate() {
            if let Some(c) = line.strip_prefix("# ") {
                if let Some((k, v)) = c.split_once('=') {
                    settings.push((k.to_string(), v.to_string()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix("[section ").and_then(|r| r.strip_suffix(']')) {
                blocks.push((name.to_string(), Vec::new()));
                continue;
            }
            let (k, v) = line
                .split_once(": ")
                .ok_or_else(|| bad(format!("line {}: expected 'key: value'", no + 3)))?;
            let block = blocks
                .last_mut()
                .ok_or_else(|| bad(format!("line {}: entry outside a section", no + 3)))?;
            block.1.push((k.to_string(), v.to_string()));
        }
        let sections = blocks
            .into_iter()
            .map(|(name, kv)| parse_section(name, kv))
            .collect::<Result<Vec<_>>>()?;
        let art = Artifact { settings, sections };
        if fnv1a64(art.body().as_bytes()) != stated {
            return Err(bad("config_hash does not match the contents".into()));
        }
        Ok(art)
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::format("calibration artifact", format!("bad value for {key}: '{v}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split_whitespace().map(|x| parse_num(key, x)).collect()
}

fn parse_method(v: &str) -> Result<LevelsMethod> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    match parts.as_slice() {
        ["exact_mean"] => Ok(LevelsMethod::ExactMean),
        ["asymptotic"] => Ok(LevelsMethod::Asymptotic),
        ["monte_carlo", runs, seed] => Ok(LevelsMethod::MonteCarlo {
            runs: parse_num("levels", runs)?,
            seed: parse_num("levels", seed)?,
        }),
        _ => Err(Error::format("calibration artifact", format!("bad levels method '{v}'"))),
    }
}

fn parse_geometry(v: &str) -> Result<Geometry> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    match parts.as_slice() {
        ["line", n, c, scheme, windows] => Ok(Geometry::Line {
            n: parse_num("geometry", n)?,
            center: parse_num("geometry", c)?,
            scheme: CountScheme::parse(scheme)?,
            windows: parse_num("geometry", windows)?,
        }),
        ["disc", r0, g, levels] => Ok(Geometry::Disc(RadiiSpec {
            r0: parse_num("geometry", r0)?,
            growth: parse_num("geometry", g)?,
            levels: parse_num("geometry", levels)?,
        })),
        _ => Err(Error::format("calibration artifact", format!("bad geometry '{v}'"))),
    }
}

fn parse_section(name: String, kv: Vec<(String, String)>) -> Result<CalibSection> {
    let bad = |reason: String| Error::format("calibration artifact", format!("section {name}: {reason}"));
    let mut get = std::collections::BTreeMap::new();
    let mut s_ring = Vec::new();
    let mut pair_rows = Vec::new();
    let mut warnings = Vec::new();
    for (k, v) in kv {
        if let Some(idx) = k.strip_prefix("s_ring ") {
            if parse_num::<usize>("s_ring", idx)? != s_ring.len() {
                return Err(bad("s_ring rows out of order".into()));
            }
            s_ring.push(parse_list::<f64>("s_ring", &v)?);
        } else if let Some(idx) = k.strip_prefix("pair ") {
            if parse_num::<usize>("pair", idx)? != pair_rows.len() {
                return Err(bad("pair rows out of order".into()));
            }
            pair_rows.push(parse_list::<f64>("pair", &v)?);
        } else if k == "warning" {
            warnings.push(v);
        } else if get.insert(k.clone(), v).is_some() {
            return Err(bad(format!("duplicate key {k}")));
        }
    }
    const KNOWN: [&str; 18] = [
        "loss", "rule", "mode", "noise", "geometry", "counts", "r", "alpha", "runs", "seed", "zeta",
        "achieved_lhs", "budget", "std_error", "z", "share", "levels", "s",
    ];
    if let Some(k) = get.keys().find(|k| !KNOWN.contains(&k.as_str()) && *k != "pair_levels") {
        return Err(bad(format!("unknown key {k}")));
    }
    let field = |k: &str| get.get(k).map(String::as_str).ok_or_else(|| bad(format!("missing {k}")));

    let loss: LossKind = field("loss")?.parse()?;
    let rule: Rule = field("rule")?.parse()?;
    let mode: CalibMode = field("mode")?.parse()?;
    let noise: NoiseKind = field("noise")?.parse()?;
    let r: f64 = parse_num("r", field("r")?)?;
    let alpha: f64 = parse_num("alpha", field("alpha")?)?;
    let mut crit = CriticalValues::new(parse_list("z", field("z")?)?, alpha, r)?;
    crit.zeta = get.get("zeta").map(|v| parse_num("zeta", v)).transpose()?;
    let levels = Levels::from_tables(r, parse_list("s", field("s")?)?, s_ring, parse_method(field("levels")?)?)?;
    let pair = match get.get("pair_levels") {
        Some(m) => Some(PairLevels::from_table(r, pair_rows, parse_method(m)?)?),
        None if pair_rows.is_empty() => None,
        None => return Err(bad("pair rows without pair_levels".into())),
    };
    let counts: Vec<usize> = parse_list("counts", field("counts")?)?;
    if counts.len() != levels.s.len() || crit.k_max() + 1 != counts.len() {
        return Err(bad("table sizes do not match the window counts".into()));
    }
    if rule == Rule::Lepski && pair.as_ref().is_none_or(|p| p.k_max() != crit.k_max()) {
        return Err(bad("lepski section needs pair levels of matching size".into()));
    }
    let result = CalibResult {
        crit,
        mode,
        rule,
        per_k_error_share: parse_list("share", field("share")?)?,
        achieved_lhs: parse_num("achieved_lhs", field("achieved_lhs")?)?,
        budget: parse_num("budget", field("budget")?)?,
        std_error: parse_num("std_error", field("std_error")?)?,
        seed: parse_num("seed", field("seed")?)?,
        runs: parse_num("runs", field("runs")?)?,
        warnings,
    };
    Ok(CalibSection {
        geometry: parse_geometry(field("geometry")?)?,
        name,
        loss,
        noise,
        counts,
        levels,
        pair,
        result,
    })
}

impl Geometry {
    /// The window family this geometry describes (the interior family for
    /// discs).
    pub fn family(&self) -> Result<WindowFamily> {
        match self {
            Geometry::Line {
                n,
                center,
                scheme,
                windows,
            } => build_family_1d(&equidistant_design(*n), *center, &scheme.counts(*windows)),
            Geometry::Disc(spec) => interior_disc_family(spec),
        }
    }
}

/// How the error levels of a section are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelsKind {
    /// Closed form: exact for the mean, normal limit for median/quantile.
    ClosedForm,
    MonteCarlo { runs: usize },
}

/// Everything needed to calibrate one section.
#[derive(Debug, Clone)]
pub struct SectionRequest {
    pub name: String,
    pub loss: LossKind,
    pub rule: Rule,
    pub mode: CalibMode,
    pub noise: NoiseKind,
    pub geometry: Geometry,
    pub levels: LevelsKind,
    /// Levels of the pairwise statistics (Lepski rule only).
    pub pair_levels: LevelsKind,
    pub r: f64,
    pub alpha: f64,
    pub runs: usize,
    pub seed: u64,
}

/// Closed-form levels for `loss` under unit-scale `noise`.
pub fn closed_form_levels(family: &WindowFamily, loss: LossKind, noise: NoiseKind, r: f64) -> Result<Levels> {
    match loss {
        LossKind::Mean => levels_exact_mean(family, r),
        LossKind::Median => levels_asymptotic(family, loss, noise.with_scale(1.0).pdf(0.0), r),
        LossKind::Quantile(a) => {
            let unit = noise.with_scale(1.0);
            let q = quantile_of(unit, a);
            levels_asymptotic(family, loss, unit.pdf(q), r)
        }
        LossKind::Huber(_) => Err(Error::Unsupported(
            "closed-form levels are not available for the Huber loss; use Monte Carlo levels".into(),
        )),
    }
}

/// Closed-form pairwise levels: exact for the mean, normal limit for
/// median/quantile.
pub fn closed_form_pair_levels(family: &WindowFamily, loss: LossKind, noise: NoiseKind, r: f64) -> Result<PairLevels> {
    let unit = noise.with_scale(1.0);
    match loss {
        LossKind::Mean => pair_levels_exact_mean(family, r),
        LossKind::Median => pair_levels_asymptotic(family, loss, unit.pdf(0.0), r),
        LossKind::Quantile(a) => pair_levels_asymptotic(family, loss, unit.pdf(quantile_of(unit, a)), r),
        LossKind::Huber(_) => Err(Error::Unsupported(
            "closed-form levels are not available for the Huber loss; use Monte Carlo levels".into(),
        )),
    }
}

/// `α`-quantile of a noise law by bisection on its CDF.
fn quantile_of(noise: NoiseKind, alpha: f64) -> f64 {
    let (mut lo, mut hi) = (-100.0, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if noise.cdf(mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Computes levels and calibrates one section.
pub fn build_section(req: &SectionRequest) -> Result<CalibSection> {
    let family = req.geometry.family()?;
    let noise = req.noise.with_scale(1.0);
    let levels_seed = mix64(req.seed ^ 0x4c45_5645_4c53);
    let levels = match req.levels {
        LevelsKind::ClosedForm => closed_form_levels(&family, req.loss, noise, req.r)?,
        LevelsKind::MonteCarlo { runs } => levels_mc(&family, req.loss, noise, runs, req.r, levels_seed)?,
    };
    let pair = match (req.rule, req.pair_levels) {
        (Rule::RingRule, _) => None,
        (Rule::Lepski, LevelsKind::ClosedForm) => Some(closed_form_pair_levels(&family, req.loss, noise, req.r)?),
        (Rule::Lepski, LevelsKind::MonteCarlo { runs }) => {
            Some(pair_levels_mc(&family, req.loss, noise, runs, req.r, levels_seed)?)
        }
    };
    let cfg = CalibConfig {
        r: req.r,
        alpha: req.alpha,
        runs: req.runs,
        family: family.clone(),
        loss: req.loss,
        noise,
        seed: req.seed,
        mode: req.mode,
    };
    let rule_levels = match &pair {
        None => RuleLevels::Ring(&levels),
        Some(p) => RuleLevels::Lepski { base: &levels, pair: p },
    };
    let result = calibrate(&cfg, rule_levels)?;
    let mut result = result;
    result.warnings.extend(levels.warnings.iter().cloned());
    Ok(CalibSection {
        name: req.name.clone(),
        loss: req.loss,
        noise,
        geometry: req.geometry.clone(),
        counts: family.counts().to_vec(),
        levels,
        pair,
        result,
    })
}

impl CalibSection {
    /// The calibration setup of this section with a different seed and
    /// run count, for out-of-sample checks.
    pub fn config(&self, runs: usize, seed: u64) -> Result<CalibConfig> {
        Ok(CalibConfig {
            r: self.result.crit.r,
            alpha: self.result.crit.alpha,
            runs,
            family: self.geometry.family()?,
            loss: self.loss,
            noise: self.noise,
            seed,
            mode: self.result.mode,
        })
    }

    pub fn rule_levels(&self) -> RuleLevels<'_> {
        match &self.pair {
            None => RuleLevels::Ring(&self.levels),
            Some(p) => RuleLevels::Lepski {
                base: &self.levels,
                pair: p,
            },
        }
    }
}
