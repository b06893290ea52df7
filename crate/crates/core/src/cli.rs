//! Command-line front end.
//!
//! Every subcommand writes data files only. Errors are reported as a single
//! line `adaptmreg: error[<kind>]: <reason>` on stderr; the exit code is 1
//! for bad arguments or input and 2 for failures while running.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::artifact::{build_section, Artifact, Geometry, LevelsKind, SectionRequest};
use crate::calibration::{verify_calibration, CalibMode, Rule};
use crate::error::{Error, Result};
use crate::experiments::{
    calibrate_bench_suite, median_moment_study, run_benchmark, tail_study, two_sample_study, ExperimentSpec,
    Method, MomentReport, Signal, TailReport, TwoSampleReport, BENCH_HEADER,
};
use crate::imaging::{
    denoise_image, encode_grid, encode_pgm, read_image, write_khat_pgm, DenoiseConfig, Image, NoiseScale,
};
use crate::loss::LossKind;
use crate::noise::{sample_noise, NoiseKind, RngStream};
use crate::windows::{equidistant_design, CountScheme, RadiiSpec};

const ENV_WORKERS: &str = "ADAPTMREG_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "adaptmreg", version, about = "Pointwise adaptive robust regression")]
pub struct Cli {
    /// Worker threads (default: ADAPTMREG_WORKERS, then all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// File of `key = value` lines supplying defaults for the subcommand's
    /// flags; flags on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Calibrate critical values and write an artifact.
    Calibrate(CalibrateArgs),
    /// Check a calibration on fresh replicates.
    Verify(VerifyArgs),
    /// One row of the benchmark table as CSV.
    Bench(BenchArgs),
    /// Two-sample variance study.
    Prop1(Prop1Args),
    /// Normalized moments of the sample median.
    Moments(MomentsArgs),
    /// Tail exceedances of the sample median.
    Tails(TailsArgs),
    /// Denoise an image.
    Denoise(DenoiseArgs),
    /// Dump simulated data.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long, default_value = "zeta")]
    mode: CalibMode,
    #[arg(long, default_value_t = 10_000)]
    runs: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    r: f64,
    #[arg(long, default_value = "laplace")]
    noise: NoiseKind,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// `line` (1D design) or `disc` (interior image window).
    #[arg(long, default_value = "line")]
    geometry: String,
    /// Single section loss; without `--loss`/`--rule` a line geometry gets
    /// all four benchmark sections and a disc gets median-rr.
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    rule: Option<Rule>,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value = "from5", value_parser = parse_scheme)]
    scheme: CountScheme,
    #[arg(long, default_value_t = 17)]
    windows: usize,
    #[arg(long, default_value_t = RadiiSpec::default().r0)]
    r0: f64,
    #[arg(long, default_value_t = RadiiSpec::default().growth)]
    growth: f64,
    #[arg(long, default_value_t = RadiiSpec::default().levels)]
    radii: usize,
    /// `closed-form` or `mc:<runs>`.
    #[arg(long, default_value = "closed-form", value_parser = parse_levels_kind)]
    levels: LevelsKind,
    /// Levels of the pairwise statistics of the Lepski rule.
    #[arg(long, default_value = "closed-form", value_parser = parse_levels_kind)]
    pair_levels: LevelsKind,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    calib: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    runs: usize,
    /// Only this section (default: all).
    #[arg(long)]
    section: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    example: u32,
    #[arg(long, default_value = "laplace")]
    noise: NoiseKind,
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    calib: PathBuf,
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Comma-separated subset of methods (default: all five).
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Prop1Args {
    #[arg(long, default_value = "laplace")]
    noise: NoiseKind,
    #[arg(long, value_delimiter = ',', default_value = "0,0.2")]
    delta: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 20_000)]
    runs: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MomentsArgs {
    #[arg(long, default_value = "laplace")]
    noise: NoiseKind,
    #[arg(long, value_delimiter = ',', default_value = "101,401,1601")]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 2.0)]
    r: f64,
    #[arg(long, default_value_t = 20_000)]
    runs: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TailsArgs {
    #[arg(long, default_value = "laplace")]
    noise: NoiseKind,
    #[arg(long, default_value_t = 1001)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    taus: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    runs: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DenoiseArgs {
    /// PGM (P5/P2) or ADGRID file.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    /// Noise scale in intensity units, or `auto`.
    #[arg(long, default_value = "auto")]
    sigma: NoiseScale,
    /// Output image; `.pgm` writes PGM, anything else an ADGRID file.
    #[arg(long)]
    out: PathBuf,
    /// k̂ map as PGM with maxval K.
    #[arg(long)]
    khat: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// `signal` (1D design, signal and noisy data) or `image` (two-region
    /// test image).
    #[arg(long, default_value = "signal")]
    what: String,
    #[arg(long, default_value_t = 1)]
    example: u32,
    #[arg(long, default_value = "laplace")]
    noise: NoiseKind,
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Image side length.
    #[arg(long, default_value_t = 256)]
    size: usize,
    /// Intensity jump between the two image regions.
    #[arg(long, default_value_t = 2.0)]
    jump: f64,
    /// PGM output only: grey level = offset + gain·value.
    #[arg(long, default_value_t = 128.0)]
    offset: f64,
    #[arg(long, default_value_t = 20.0)]
    gain: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise-free image (image mode).
    #[arg(long)]
    clean: Option<PathBuf>,
}

fn parse_scheme(s: &str) -> Result<CountScheme> {
    CountScheme::parse(s)
}

fn parse_levels_kind(s: &str) -> Result<LevelsKind> {
    if s == "closed-form" {
        return Ok(LevelsKind::ClosedForm);
    }
    let runs = s
        .strip_prefix("mc:")
        .and_then(|r| r.parse().ok())
        .ok_or_else(|| Error::input(format!("levels must be 'closed-form' or 'mc:<runs>', got '{s}'")))?;
    Ok(LevelsKind::MonteCarlo { runs })
}

fn levels_kind_name(k: LevelsKind) -> String {
    match k {
        LevelsKind::ClosedForm => "closed-form".into(),
        LevelsKind::MonteCarlo { runs } => format!("mc:{runs}"),
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match merge_config(argv) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.to_string();
            let mut lines = msg.lines();
            let first = lines.next().unwrap_or("bad arguments");
            eprintln!("adaptmreg: error[usage]: {}", first.trim_start_matches("error: "));
            // clap lists missing arguments and usage on the following lines
            for line in lines.filter(|l| !l.trim().is_empty()) {
                eprintln!("{line}");
            }
            return 1;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> i32 {
    let line = e.to_string().replace('\n', " ");
    eprintln!("adaptmreg: error[{}]: {line}", e.kind());
    if e.is_validation() {
        1
    } else {
        2
    }
}

/// Inserts `--key value` for config-file entries not given on the command
/// line. Keys are the subcommand's long flag names.
fn merge_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let Some(pos) = strs.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(argv);
    };
    let path = match strs[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => strs
            .get(pos + 1)
            .cloned()
            .ok_or_else(|| Error::Config("--config needs a path".into()))?,
    };
    let cmd = Cli::command();
    let Some(sub) = strs[1..]
        .iter()
        .find_map(|a| cmd.get_subcommands().find(|s| s.get_name() == a))
    else {
        return Ok(argv);
    };
    let known: Vec<String> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut extra = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{path}:{}: expected 'key = value'", i + 1)))?;
        let key = key.trim().replace('_', "-");
        if !known.contains(&key) || key == "config" {
            return Err(Error::Config(format!("{path}:{}: unknown key '{key}'", i + 1)));
        }
        let flag = format!("--{key}");
        let given = strs.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if !given {
            extra.push(OsString::from(flag));
            extra.push(OsString::from(value.trim()));
        }
    }
    let mut out = argv;
    out.extend(extra);
    Ok(out)
}

fn workers(cli: &Cli) -> Result<Option<usize>> {
    if let Some(w) = cli.workers {
        return Ok(Some(w));
    }
    match std::env::var(ENV_WORKERS) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{ENV_WORKERS} must be a positive integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

fn execute(cli: Cli) -> Result<()> {
    let threads = workers(&cli)?;
    if threads == Some(0) {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Verify(a) => verify(a),
        Command::Bench(a) => bench(a),
        Command::Prop1(a) => prop1(a),
        Command::Moments(a) => moments(a),
        Command::Tails(a) => tails(a),
        Command::Denoise(a) => denoise(a),
        Command::Simulate(a) => simulate(a),
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn echo(pairs: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        let _ = writeln!(s, "# {k}={v}");
    }
    s
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let radii = RadiiSpec {
        r0: a.r0,
        growth: a.growth,
        levels: a.radii,
    };
    let geometry = match a.geometry.as_str() {
        "line" => Geometry::Line {
            n: a.n,
            center: 0.0,
            scheme: a.scheme,
            windows: a.windows,
        },
        "disc" => {
            radii.validate()?;
            Geometry::Disc(radii)
        }
        other => return Err(Error::input(format!("unknown geometry '{other}' (line or disc)"))),
    };
    let suite = a.loss.is_none() && a.rule.is_none() && matches!(geometry, Geometry::Line { .. });
    let artifact = if suite {
        if a.r != 2.0 || a.alpha != 1.0 || a.levels != LevelsKind::ClosedForm {
            return Err(Error::input(
                "the benchmark suite uses r=2, alpha=1 and closed-form levels; pass --loss and --rule for other settings",
            ));
        }
        calibrate_bench_suite(a.n, a.scheme, a.windows, a.noise, a.mode, a.pair_levels, a.runs, a.seed)?
    } else {
        let loss = a.loss.unwrap_or(LossKind::Median);
        let rule = a.rule.unwrap_or(Rule::RingRule);
        let section = build_section(&SectionRequest {
            name: format!("{loss}-{rule}"),
            loss,
            rule,
            mode: a.mode,
            noise: a.noise,
            geometry: geometry.clone(),
            levels: a.levels,
            pair_levels: a.pair_levels,
            r: a.r,
            alpha: a.alpha,
            runs: a.runs,
            seed: a.seed,
        })?;
        let mut settings = vec![("geometry".to_string(), a.geometry.clone())];
        match geometry {
            Geometry::Line { .. } => settings.extend([
                ("n".to_string(), a.n.to_string()),
                ("scheme".to_string(), a.scheme.name().to_string()),
                ("windows".to_string(), a.windows.to_string()),
            ]),
            Geometry::Disc(_) => settings.extend([
                ("r0".to_string(), a.r0.to_string()),
                ("growth".to_string(), a.growth.to_string()),
                ("radii".to_string(), a.radii.to_string()),
            ]),
        }
        settings.extend([
            ("loss".to_string(), loss.to_string()),
            ("rule".to_string(), rule.to_string()),
            ("noise".to_string(), a.noise.to_string()),
            ("mode".to_string(), a.mode.to_string()),
            ("levels".to_string(), levels_kind_name(a.levels)),
            ("pair_levels".to_string(), levels_kind_name(a.pair_levels)),
            ("r".to_string(), a.r.to_string()),
            ("alpha".to_string(), a.alpha.to_string()),
            ("runs".to_string(), a.runs.to_string()),
            ("seed".to_string(), a.seed.to_string()),
        ]);
        Artifact {
            settings,
            sections: vec![section],
        }
    };
    for s in &artifact.sections {
        for w in &s.result.warnings {
            eprintln!("adaptmreg: warning: {}: {w}", s.name);
        }
    }
    artifact.write(&a.out)
}

fn verify(a: VerifyArgs) -> Result<()> {
    let artifact = Artifact::read(&a.calib)?;
    let mut out = String::from("section,ratio,std_error,runs,seed\n");
    let mut any = false;
    for s in &artifact.sections {
        if a.section.as_deref().is_some_and(|name| name != s.name) {
            continue;
        }
        any = true;
        let cfg = s.config(a.runs, a.seed)?;
        let v = verify_calibration(&cfg, s.crit(), s.rule_levels())?;
        let _ = writeln!(out, "{},{},{},{},{}", s.name, v.ratio, v.std_error, a.runs, a.seed);
    }
    if !any {
        return Err(Error::input(format!(
            "no section named '{}' in {}",
            a.section.unwrap_or_default(),
            a.calib.display()
        )));
    }
    emit(a.out.as_deref(), &out)
}

fn bench(a: BenchArgs) -> Result<()> {
    let artifact = Artifact::read(&a.calib)?;
    let methods = if a.methods.is_empty() {
        Method::ALL.to_vec()
    } else {
        a.methods.clone()
    };
    let spec = ExperimentSpec {
        signal: Signal::example(a.example)?,
        noise: a.noise,
        n: a.n,
        runs: a.runs,
        methods,
        seed: a.seed,
    };
    let report = run_benchmark(&spec, &artifact)?;
    let mut text = echo(&[
        ("example", a.example.to_string()),
        ("noise", a.noise.to_string()),
        ("n", a.n.to_string()),
        ("runs", a.runs.to_string()),
        ("seed", a.seed.to_string()),
        ("calib", a.calib.display().to_string()),
        ("calib_hash", format!("{:016x}", crate::artifact::fnv1a64(artifact.body().as_bytes()))),
    ]);
    text.push_str(BENCH_HEADER);
    text.push('\n');
    text.push_str(&report.csv_rows());
    emit(a.out.as_deref(), &text)
}

fn prop1(a: Prop1Args) -> Result<()> {
    let mut text = echo(&[
        ("noise", a.noise.to_string()),
        ("n", a.n.to_string()),
        ("runs", a.runs.to_string()),
        ("seed", a.seed.to_string()),
    ]);
    text.push_str(TwoSampleReport::CSV_HEADER);
    text.push('\n');
    for &d in &a.delta {
        let rep = two_sample_study(a.noise, d, a.n, a.runs, a.seed)?;
        text.push_str(&rep.csv_row());
        text.push('\n');
    }
    emit(a.out.as_deref(), &text)
}

fn moments(a: MomentsArgs) -> Result<()> {
    let rep = median_moment_study(a.noise, &a.ns, a.r, a.runs, a.seed)?;
    let mut text = echo(&[
        ("noise", a.noise.to_string()),
        ("runs", a.runs.to_string()),
        ("seed", a.seed.to_string()),
        ("log_slope", rep.log_slope().to_string()),
    ]);
    text.push_str(MomentReport::CSV_HEADER);
    text.push('\n');
    text.push_str(&rep.csv());
    emit(a.out.as_deref(), &text)
}

fn tails(a: TailsArgs) -> Result<()> {
    let rep = tail_study(a.noise, a.n, &a.taus, a.runs, a.seed)?;
    let mut text = echo(&[
        ("noise", a.noise.to_string()),
        ("runs", a.runs.to_string()),
        ("seed", a.seed.to_string()),
    ]);
    text.push_str(TailReport::CSV_HEADER);
    text.push('\n');
    text.push_str(&rep.csv());
    emit(a.out.as_deref(), &text)
}

fn is_pgm_path(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn write_image(path: &Path, image: &Image, maxval: u16) -> Result<()> {
    let bytes = if is_pgm_path(path) {
        encode_pgm(image, maxval)
    } else {
        encode_grid(image)
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn denoise(a: DenoiseArgs) -> Result<()> {
    let artifact = Artifact::read(&a.calib)?;
    let (image, maxval) = read_image(&a.input)?;
    let cfg = DenoiseConfig::from_artifact(&artifact, a.sigma)?;
    let out = denoise_image(&image, &cfg)?;
    for w in &out.warnings {
        eprintln!("adaptmreg: warning: {w}");
    }
    write_image(&a.out, &out.image, maxval.unwrap_or(255))?;
    if let Some(k) = &a.khat {
        write_khat_pgm(k, &out.k_hat)?;
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    match a.what.as_str() {
        "signal" => {
            let signal = Signal::example(a.example)?;
            let x = equidistant_design(a.n);
            let eps = sample_noise(a.noise, a.n, RngStream::new(a.seed, 0))?;
            let mut text = echo(&[
                ("example", a.example.to_string()),
                ("noise", a.noise.to_string()),
                ("n", a.n.to_string()),
                ("seed", a.seed.to_string()),
            ]);
            text.push_str("x,g,y\n");
            for (xi, e) in x.iter().zip(&eps) {
                let g = signal.eval(*xi);
                let _ = writeln!(text, "{xi},{g},{}", g + e);
            }
            emit(a.out.as_deref(), &text)
        }
        "image" => {
            let size = a.size;
            if size == 0 {
                return Err(Error::input("image size must be positive"));
            }
            let clean = two_region_image(size, a.jump)?;
            let eps = sample_noise(a.noise, size * size, RngStream::new(a.seed, 0))?;
            let noisy = Image::new(size, size, clean.data().iter().zip(&eps).map(|(c, e)| c + e).collect())?;
            let out = a
                .out
                .as_deref()
                .ok_or_else(|| Error::input("image mode needs --out"))?;
            let to_grey = |img: &Image| -> Result<Image> {
                if is_pgm_path(out) {
                    Image::new(size, size, img.data().iter().map(|v| a.offset + a.gain * v).collect())
                } else {
                    Ok(img.clone())
                }
            };
            write_image(out, &to_grey(&noisy)?, 255)?;
            if let Some(c) = &a.clean {
                write_image(c, &to_grey(&clean)?, 255)?;
            }
            Ok(())
        }
        other => Err(Error::input(format!("unknown simulate target '{other}' (signal or image)"))),
    }
}

/// Centred disc of height `jump` and radius `size/4` on a zero background.
pub fn two_region_image(size: usize, jump: f64) -> Result<Image> {
    let c = (size as f64 - 1.0) / 2.0;
    let rad = size as f64 / 4.0;
    Image::from_fn(size, size, |x, y| {
        let (dx, dy) = (x as f64 - c, y as f64 - c);
        if dx * dx + dy * dy < rad * rad {
            jump
        } else {
            0.0
        }
    })
}
