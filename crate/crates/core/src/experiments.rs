//! Simulation studies: the pointwise benchmark, the two-sample variance
//! comparison and the median moment and tail checks.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use crate::artifact::{build_section, Artifact, CalibSection, Geometry, LevelsKind, SectionRequest};
use crate::calibration::{CalibMode, Rule};
use crate::error::{Error, Result};
use crate::estimates::{domain, Workspace};
use crate::loss::{location_value, LossKind};
use crate::noise::{normal_abs_moment_root, NoiseKind, RngStream};
use crate::selector::{LepskiThresholds, RrThresholds};
use crate::windows::{build_family_1d, equidistant_design, CountScheme, WindowFamily};

/// Regression function on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    /// 0 on `|x| ≤ 0.2`, 2 outside.
    Step,
    /// `2x(x + 1)`.
    Parabola,
    /// Piecewise-linear interpolation of `(x, g)` knots sorted by `x`,
    /// constant beyond the end knots.
    Table(Vec<(f64, f64)>),
}

impl Signal {
    pub fn example(id: u32) -> Result<Signal> {
        match id {
            1 => Ok(Signal::Step),
            2 => Ok(Signal::Parabola),
            _ => Err(Error::input(format!("unknown example {id} (1 or 2)"))),
        }
    }

    pub fn table(knots: Vec<(f64, f64)>) -> Result<Signal> {
        if knots.is_empty() || knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::input("signal knots must be nonempty with increasing x"));
        }
        if knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::input("signal knots must be finite"));
        }
        Ok(Signal::Table(knots))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Signal::Step => {
                if x.abs() <= 0.2 {
                    0.0
                } else {
                    2.0
                }
            }
            Signal::Parabola => 2.0 * x * (x + 1.0),
            Signal::Table(k) => {
                let i = k.partition_point(|&(kx, _)| kx <= x);
                if i == 0 {
                    k[0].1
                } else if i == k.len() {
                    k[k.len() - 1].1
                } else {
                    let (x0, y0) = k[i - 1];
                    let (x1, y1) = k[i];
                    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
                }
            }
        }
    }

    /// Window whose sample median serves as the oracle estimate at 0.
    pub fn oracle_window(&self) -> Option<f64> {
        match self {
            Signal::Step => Some(0.2),
            Signal::Parabola => Some(0.39),
            Signal::Table(_) => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Signal::Step => "1".into(),
            Signal::Parabola => "2".into(),
            Signal::Table(_) => "custom".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    MeanLepski,
    MeanRR,
    MedianLepski,
    MedianRR,
    MedianOracle,
}

impl Method {
    /// Column order of the benchmark table.
    pub const ALL: [Method; 5] = [
        Method::MeanLepski,
        Method::MeanRR,
        Method::MedianLepski,
        Method::MedianRR,
        Method::MedianOracle,
    ];

    fn calibrated(self) -> Option<(LossKind, Rule)> {
        match self {
            Method::MeanLepski => Some((LossKind::Mean, Rule::Lepski)),
            Method::MeanRR => Some((LossKind::Mean, Rule::RingRule)),
            Method::MedianLepski => Some((LossKind::Median, Rule::Lepski)),
            Method::MedianRR => Some((LossKind::Median, Rule::RingRule)),
            Method::MedianOracle => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::MeanLepski => "mean_lepski",
            Method::MeanRR => "mean_rr",
            Method::MedianLepski => "median_lepski",
            Method::MedianRR => "median_rr",
            Method::MedianOracle => "median_oracle",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::input(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub signal: Signal,
    pub noise: NoiseKind,
    pub n: usize,
    pub runs: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: Method,
    pub mc_median_abs_error: f64,
    /// Frequency of each selected index (empty for the oracle).
    pub k_hat_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub example: String,
    pub noise: NoiseKind,
    pub runs: usize,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn error(&self, method: Method) -> Option<f64> {
        self.rows.iter().find(|r| r.method == method).map(|r| r.mc_median_abs_error)
    }

    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                self.example, self.noise, row.method, row.mc_median_abs_error, self.runs, self.seed
            );
        }
        out
    }
}

pub const BENCH_HEADER: &str = "example,noise,method,mc_median_abs_error,runs,seed";

/// Median with the midpoint convention for even sizes.
pub fn sample_median(values: &[f64]) -> f64 {
    let mut buf = values.to_vec();
    location_value(&mut buf, LossKind::Median)
}

struct Prepared {
    method: Method,
    plan: Plan,
}

/// Selection plan; the index points into the per-replicate estimate list.
enum Plan {
    Rr(usize, RrThresholds),
    Lepski(usize, LepskiThresholds),
    Oracle(Vec<usize>),
}

fn check_section(section: &CalibSection, n: usize, family: &WindowFamily) -> Result<()> {
    match &section.geometry {
        Geometry::Line { n: sn, center, .. } if *sn == n && *center == 0.0 => {}
        other => {
            return Err(Error::Incompatible(format!(
                "section {} was calibrated on {other:?}, not on a {n}-point design at 0",
                section.name
            )))
        }
    }
    if section.counts != family.counts() {
        return Err(Error::Incompatible(format!("section {} window counts differ", section.name)));
    }
    Ok(())
}

/// Runs the benchmark at `x = 0`.
///
/// Every replicate draws one noise vector shared by all methods. Levels and
/// thresholds from the artifact (calibrated at unit noise scale) are
/// multiplied by the known noise scale.
pub fn run_benchmark(spec: &ExperimentSpec, artifact: &Artifact) -> Result<BenchReport> {
    spec.noise.validate()?;
    if spec.methods.is_empty() {
        return Err(Error::input("no benchmark methods selected"));
    }
    if spec.runs == 0 {
        return Err(Error::input("benchmark needs at least one run"));
    }
    let design = equidistant_design(spec.n);
    let counts = artifact
        .sections
        .first()
        .map(|s| s.counts.clone())
        .ok_or_else(|| Error::Incompatible("calibration artifact has no sections".into()))?;
    if *counts.last().unwrap() > spec.n {
        return Err(Error::input(format!(
            "design size {} is smaller than the largest window {}",
            spec.n,
            counts.last().unwrap()
        )));
    }
    let family = build_family_1d(&design, 0.0, &counts)?;
    let sigma = spec.noise.scale;
    let theta = spec.signal.eval(0.0);
    let g: Vec<f64> = design.iter().map(|&x| spec.signal.eval(x)).collect();

    let mut prepared = Vec::new();
    let mut losses: Vec<LossKind> = Vec::new();
    for &method in &spec.methods {
        let plan = match method.calibrated() {
            Some((loss, rule)) => {
                let sec = artifact.find(loss, rule).ok_or_else(|| {
                    Error::Incompatible(format!("calibration artifact lacks a {loss}/{rule} section"))
                })?;
                check_section(sec, spec.n, &family)?;
                let lv = sec.levels.scaled(sigma);
                let slot = losses.iter().position(|&l| l == loss).unwrap_or_else(|| {
                    losses.push(loss);
                    losses.len() - 1
                });
                match rule {
                    Rule::RingRule => Plan::Rr(slot, RrThresholds::new(&lv, sec.crit())?),
                    Rule::Lepski => {
                        let pair = sec
                            .pair
                            .as_ref()
                            .ok_or_else(|| Error::Incompatible("lepski section without pair levels".into()))?
                            .scaled(sigma);
                        Plan::Lepski(slot, LepskiThresholds::new(&pair, sec.crit())?)
                    }
                }
            }
            None => {
                let h = spec.signal.oracle_window().ok_or_else(|| {
                    Error::input("the oracle method needs a signal with a known oracle window")
                })?;
                let idx: Vec<usize> = (0..spec.n).filter(|&i| design[i].abs() <= h + 1e-12).collect();
                Plan::Oracle(idx)
            }
        };
        prepared.push(Prepared { method, plan });
    }

    let order = family.order().to_vec();
    let k_max = family.k_max();
    let errors: Vec<Vec<(f64, usize)>> = (0..spec.runs)
        .into_par_iter()
        .map_init(
            || (Workspace::default(), vec![0.0; spec.n], vec![0.0; order.len()]),
            |(ws, y, local), i| {
                let mut rng = RngStream::for_replicate(spec.seed, domain::BENCHMARK, i as u64).rng();
                spec.noise.fill(&mut rng, y);
                for (yi, gi) in y.iter_mut().zip(&g) {
                    *yi += gi;
                }
                for (l, &j) in local.iter_mut().zip(&order) {
                    *l = y[j];
                }
                let ests: Vec<_> = losses
                    .iter()
                    .map(|&loss| ws.estimates_local(local, family.counts(), loss))
                    .collect();
                prepared
                    .iter()
                    .map(|p| match &p.plan {
                        Plan::Rr(slot, thr) => {
                            let est = &ests[*slot];
                            let k = thr.select(&est.base, &est.rings);
                            ((est.base[k] - theta).abs(), k)
                        }
                        Plan::Lepski(slot, thr) => {
                            let est = &ests[*slot];
                            let k = thr.select(&est.base);
                            ((est.base[k] - theta).abs(), k)
                        }
                        Plan::Oracle(idx) => {
                            let vals: Vec<f64> = idx.iter().map(|&j| y[j]).collect();
                            ((sample_median(&vals) - theta).abs(), usize::MAX)
                        }
                    })
                    .collect()
            },
        )
        .collect();

    let rows = prepared
        .iter()
        .enumerate()
        .map(|(m, p)| {
            let errs: Vec<f64> = errors.iter().map(|e| e[m].0).collect();
            let mut k_hat_counts = Vec::new();
            if !matches!(p.plan, Plan::Oracle(_)) {
                k_hat_counts = vec![0; k_max + 1];
                for e in &errors {
                    k_hat_counts[e[m].1] += 1;
                }
            }
            BenchRow {
                method: p.method,
                mc_median_abs_error: sample_median(&errs),
                k_hat_counts,
            }
        })
        .collect();
    Ok(BenchReport {
        example: spec.signal.label(),
        noise: spec.noise,
        runs: spec.runs,
        seed: spec.seed,
        rows,
    })
}

/// Calibrates the four benchmark rules (mean and median, ring rule and
/// Lepski) on an `n`-point design under unit-scale `noise`.
///
/// Mean levels are exact and median levels use the normal limit. Pairwise
/// levels for the Lepski rule follow `pair_levels`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_bench_suite(
    n: usize,
    scheme: CountScheme,
    windows: usize,
    noise: NoiseKind,
    mode: CalibMode,
    pair_levels: LevelsKind,
    runs: usize,
    seed: u64,
) -> Result<Artifact> {
    let geometry = Geometry::Line {
        n,
        center: 0.0,
        scheme,
        windows,
    };
    let sections = [
        (LossKind::Mean, Rule::RingRule),
        (LossKind::Mean, Rule::Lepski),
        (LossKind::Median, Rule::RingRule),
        (LossKind::Median, Rule::Lepski),
    ]
    .into_iter()
    .map(|(loss, rule)| {
        build_section(&SectionRequest {
            name: format!("{loss}-{rule}"),
            loss,
            rule,
            mode,
            noise,
            geometry: geometry.clone(),
            levels: LevelsKind::ClosedForm,
            pair_levels,
            r: 2.0,
            alpha: 1.0,
            runs,
            seed,
        })
    })
    .collect::<Result<Vec<_>>>()?;
    Ok(Artifact {
        settings: vec![
            ("n".into(), n.to_string()),
            ("scheme".into(), scheme.name().into()),
            ("windows".into(), windows.to_string()),
            ("noise".into(), noise.to_string()),
            ("mode".into(), mode.to_string()),
            (
                "pair_levels".into(),
                match pair_levels {
                    LevelsKind::ClosedForm => "closed_form".into(),
                    LevelsKind::MonteCarlo { runs } => format!("monte_carlo:{runs}"),
                },
            ),
            ("runs".into(), runs.to_string()),
            ("seed".into(), seed.to_string()),
        ],
        sections,
    })
}

/// Variances of the two-sample statistics, simulated and in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSampleReport {
    pub delta: f64,
    pub n: usize,
    pub runs: usize,
    /// Variance of `√n (med₂ - med₁ - Δ)`.
    pub var_w: f64,
    /// Variance of `√n (2(med₁₂ - med₁) - Δ)`.
    pub var_l: f64,
    pub formula_w: f64,
    pub formula_l: f64,
}

impl TwoSampleReport {
    pub const CSV_HEADER: &'static str = "delta,n,runs,var_w,var_l,formula_w,formula_l";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.delta, self.n, self.runs, self.var_w, self.var_l, self.formula_w, self.formula_l
        )
    }
}

/// Limiting variances of the Wald-type statistic (`1/(2f(0)²)`) and of the
/// union-minus-first statistic for a symmetric noise law.
pub fn two_sample_formulas(kind: NoiseKind, delta: f64) -> (f64, f64) {
    let f0 = kind.pdf(0.0);
    let fh = kind.pdf(delta / 2.0);
    let big_f = kind.cdf(delta / 2.0);
    let w = 1.0 / (2.0 * f0 * f0);
    let l = 2.0 * big_f * (1.0 - big_f) / (fh * fh) + 1.0 / (f0 * f0) - 2.0 * (1.0 - big_f) / (f0 * fh);
    (w, l)
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

pub fn two_sample_study(kind: NoiseKind, delta: f64, n: usize, runs: usize, seed: u64) -> Result<TwoSampleReport> {
    kind.validate()?;
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::input(format!("delta must be >= 0, got {delta}")));
    }
    if n == 0 || runs < 2 {
        return Err(Error::input("need n >= 1 and at least two runs"));
    }
    let root_n = (n as f64).sqrt();
    let stats: Vec<(f64, f64)> = (0..runs)
        .into_par_iter()
        .map_init(
            || (vec![0.0; 2 * n], vec![0.0; 2 * n]),
            |(y, buf), i| {
                let mut rng = RngStream::for_replicate(seed, domain::TWO_SAMPLE, i as u64).rng();
                kind.fill(&mut rng, y);
                for v in &mut y[n..] {
                    *v += delta;
                }
                let mut med = |lo: usize, hi: usize| {
                    buf[..hi - lo].copy_from_slice(&y[lo..hi]);
                    location_value(&mut buf[..hi - lo], LossKind::Median)
                };
                let m1 = med(0, n);
                let m2 = med(n, 2 * n);
                let m12 = med(0, 2 * n);
                (root_n * (m2 - m1 - delta), root_n * (2.0 * (m12 - m1) - delta))
            },
        )
        .collect();
    let tw: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let tl: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let (formula_w, formula_l) = two_sample_formulas(kind, delta);
    Ok(TwoSampleReport {
        delta,
        n,
        runs,
        var_w: variance(&tw),
        var_l: variance(&tl),
        formula_w,
        formula_l,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub n: usize,
    /// `E|med|^r` by simulation.
    pub moment: f64,
    /// `moment / (c_r / (2 f(0) √N))^r`, which tends to 1.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub r: f64,
    pub runs: usize,
    pub rows: Vec<MomentRow>,
}

impl MomentReport {
    pub const CSV_HEADER: &'static str = "n,r,runs,moment,ratio";

    pub fn csv(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", row.n, self.r, self.runs, row.moment, row.ratio);
        }
        out
    }

    /// Least-squares slope of `ln ratio` against `ln N`.
    pub fn log_slope(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .map(|r| ((r.n as f64).ln(), r.ratio.ln()))
            .collect();
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }
}

fn require_odd(n: usize) -> Result<()> {
    if n.is_multiple_of(2) {
        return Err(Error::input(format!("sample size must be odd, got {n}")));
    }
    Ok(())
}

/// Medians of `runs` samples of size `n`, one stream per `(n, replicate)`.
fn simulate_medians(kind: NoiseKind, n: usize, runs: usize, seed: u64, dom: u64) -> Vec<f64> {
    let tag = dom | ((n as u64) << 8);
    (0..runs)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |y, i| {
                let mut rng = RngStream::for_replicate(seed, tag, i as u64).rng();
                kind.fill(&mut rng, y);
                location_value(y, LossKind::Median)
            },
        )
        .collect()
}

pub fn median_moment_study(kind: NoiseKind, ns: &[usize], r: f64, runs: usize, seed: u64) -> Result<MomentReport> {
    kind.validate()?;
    if ns.is_empty() || runs == 0 {
        return Err(Error::input("need at least one sample size and one run"));
    }
    if !(r > 0.0) {
        return Err(Error::input(format!("r must be positive, got {r}")));
    }
    for &n in ns {
        require_odd(n)?;
    }
    let f0 = kind.pdf(0.0);
    let c_r = normal_abs_moment_root(r);
    let rows = ns
        .iter()
        .map(|&n| {
            let meds = simulate_medians(kind, n, runs, seed, domain::MOMENTS);
            let moment = meds.iter().map(|m| m.abs().powf(r)).sum::<f64>() / runs as f64;
            let scale = c_r / (2.0 * f0 * (n as f64).sqrt());
            MomentRow {
                n,
                moment,
                ratio: moment / scale.powf(r),
            }
        })
        .collect();
    Ok(MomentReport { r, runs, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailRow {
    pub tau: f64,
    /// Share of replicates with `2√N f(0) |med| > τ`.
    pub exceedance: f64,
    /// `2 e^{-τ²/8}`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub n: usize,
    pub runs: usize,
    pub rows: Vec<TailRow>,
}

impl TailReport {
    pub const CSV_HEADER: &'static str = "n,runs,tau,exceedance,bound";

    pub fn csv(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", self.n, self.runs, row.tau, row.exceedance, row.bound);
        }
        out
    }
}

pub fn tail_study(kind: NoiseKind, n: usize, taus: &[f64], runs: usize, seed: u64) -> Result<TailReport> {
    kind.validate()?;
    require_odd(n)?;
    if runs == 0 {
        return Err(Error::input("tail study needs at least one run"));
    }
    let cap = (n as f64).sqrt() / 2.0;
    if let Some(t) = taus.iter().find(|&&t| !(t >= 0.0 && t <= cap)) {
        return Err(Error::input(format!("tau must lie in [0, sqrt(N)/2 = {cap}], got {t}")));
    }
    let f0 = kind.pdf(0.0);
    let scale = 2.0 * (n as f64).sqrt() * f0;
    let stats: Vec<f64> = simulate_medians(kind, n, runs, seed, domain::TAILS)
        .into_iter()
        .map(|m| scale * m.abs())
        .collect();
    let rows = taus
        .iter()
        .map(|&tau| TailRow {
            tau,
            exceedance: stats.iter().filter(|&&s| s > tau).count() as f64 / runs as f64,
            bound: 2.0 * (-tau * tau / 8.0).exp(),
        })
        .collect();
    Ok(TailReport { n, runs, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signals() {
        assert_eq!(Signal::Step.eval(0.2), 0.0);
        assert_eq!(Signal::Step.eval(-0.21), 2.0);
        assert_eq!(Signal::Parabola.eval(0.5), 1.5);
        let t = Signal::table(vec![(-1.0, 0.0), (1.0, 4.0)]).unwrap();
        assert_eq!(t.eval(0.0), 2.0);
        assert_eq!(t.eval(5.0), 4.0);
        assert!(Signal::table(vec![(1.0, 0.0), (0.0, 1.0)]).is_err());
        // 40 design points in the step's flat zone, 78 in the parabola's window
        let design = equidistant_design(200);
        assert_eq!(design.iter().filter(|x| x.abs() <= 0.2).count(), 40);
        assert_eq!(design.iter().filter(|x| x.abs() <= 0.39).count(), 78);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
    }

    #[test]
    fn two_sample_formulas_laplace() {
        let lap = NoiseKind::laplace();
        let (w, l) = two_sample_formulas(lap, 0.0);
        assert!((w - 1.0).abs() < 1e-12);
        assert!((l - 1.0).abs() < 1e-12);
        // independent evaluation with b = 1/√2 at Δ = 0.2
        let b = std::f64::consts::FRAC_1_SQRT_2;
        let e = (-0.1 / b).exp();
        let (fh, big_f, f0) = (e / (2.0 * b), 1.0 - 0.5 * e, 1.0 / (2.0 * b));
        let expect = 2.0 * big_f * (1.0 - big_f) / (fh * fh) + 1.0 / (f0 * f0) - 2.0 * (1.0 - big_f) / (f0 * fh);
        let (_, l) = two_sample_formulas(lap, 0.2);
        assert!((l - expect).abs() < 1e-12);
    }

    #[test]
    fn tails_monotone_and_vacuous_at_zero() {
        let rep = tail_study(NoiseKind::laplace(), 101, &[0.0, 1.0, 2.0, 3.0], 2000, 1).unwrap();
        assert_eq!(rep.rows[0].exceedance, 1.0);
        assert!(rep.rows.windows(2).all(|w| w[1].exceedance <= w[0].exceedance));
        assert!(tail_study(NoiseKind::laplace(), 100, &[1.0], 10, 1).is_err());
        assert!(tail_study(NoiseKind::laplace(), 101, &[6.0], 10, 1).is_err());
    }

    #[test]
    fn moments_reject_even_sizes() {
        assert!(median_moment_study(NoiseKind::laplace(), &[100], 2.0, 10, 1).is_err());
    }

    #[test]
    fn sample_median_convention() {
        assert_eq!(sample_median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
        assert_eq!(sample_median(&[3.0, 1.0, 2.0]), 2.0);
    }
}
