use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use qsx_core::assemble::{extend, verify_extension, ExtensionConfig, ExtensionMap};
use qsx_core::counterexample::{
    bilipschitz_constant, build_scene, density_report, john_constant, obstruction_certificate,
};
use qsx_core::metric::{
    fit_power_modulus, holder_envelope, ratio_samples, relative_connectedness_constant,
    uniform_perfectness_gap_constant, weak_qs_constant, PowerModulus, SiteMap,
};
use qsx_core::preextend::fatten_isolated;
use qsx_core::QsxError;

const EXIT_INPUT: u8 = 2;
const EXIT_PRECONDITION: u8 = 3;
const EXIT_RESOURCE: u8 = 4;

#[derive(Parser)]
#[command(name = "qsx", about = "quasisymmetric extension toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report distortion constants of a finite site map.
    Analyze {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build an extension and emit its description plus a sampled curve.
    Extend {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        window: usize,
        #[arg(long, default_value_t = 1e-4)]
        resolution: f64,
        #[arg(long, default_value_t = 512)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Certify the distortion constants of a stored extension.
    Verify {
        extension: PathBuf,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the boundary scene with flipped boxes and its diagnostics.
    Counterexample {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long = "points-per-face", default_value_t = 4)]
        points_per_face: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a power modulus to the pair-ratio samples of a site map.
    FitModulus {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct ModulusSpec {
    #[serde(rename = "C")]
    c: f64,
    alpha: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct ConfigOverrides {
    window: Option<usize>,
    resolution: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct InputDocument {
    points: Vec<f64>,
    images: Vec<Vec<f64>>,
    #[serde(default)]
    modulus: Option<ModulusSpec>,
    #[serde(default)]
    config: ConfigOverrides,
}

struct CliFailure {
    code: u8,
    message: String,
}

impl CliFailure {
    fn input(message: impl Into<String>) -> Self {
        CliFailure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<QsxError> for CliFailure {
    fn from(e: QsxError) -> Self {
        let code = match root_error(&e) {
            QsxError::PointBudgetOverflow { .. } => EXIT_RESOURCE,
            _ => EXIT_PRECONDITION,
        };
        CliFailure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliFailure {
    fn from(e: std::io::Error) -> Self {
        CliFailure::input(format!("io error: {e}"))
    }
}

fn root_error(e: &QsxError) -> &QsxError {
    match e {
        QsxError::Stage { source, .. } => root_error(source),
        other => other,
    }
}

/// serde_json's shortest-roundtrip floats can drop below 17 significant
/// digits; the artifact contract wants them spelled out.
struct SigDigitFormatter;

impl serde_json::ser::Formatter for SigDigitFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        if value.is_finite() {
            write!(writer, "{}", fmt_f64(value))
        } else {
            Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "non-finite float in output",
            ))
        }
    }
}

fn fmt_f64(value: f64) -> String {
    format!("{value:.16e}")
}

fn to_json(value: &impl Serialize) -> Result<Vec<u8>, CliFailure> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigitFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| CliFailure::input(format!("serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(buf)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliFailure> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .map_err(|e| CliFailure::input(format!("cannot persist {}: {}", path.display(), e.error)))?;
    Ok(())
}

fn read_input(path: &Path) -> Result<(SiteMap, InputDocument), CliFailure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliFailure::input(format!("cannot read {}: {e}", path.display())))?;
    let doc: InputDocument = serde_json::from_str(&text)
        .map_err(|e| CliFailure::input(format!("{}: {e}", path.display())))?;
    if doc.points.len() != doc.images.len() {
        return Err(CliFailure::input(format!(
            "{}: points ({}) and images ({}) lengths differ",
            path.display(),
            doc.points.len(),
            doc.images.len()
        )));
    }
    let map = SiteMap::new(doc.points.clone(), doc.images.clone())?;
    Ok((map, doc))
}

fn resolve_modulus(map: &SiteMap, spec: &Option<ModulusSpec>) -> Result<PowerModulus, CliFailure> {
    match spec {
        Some(m) => Ok(PowerModulus::new(m.c, m.alpha)?),
        None => {
            let fitted = fit_power_modulus(&ratio_samples(map))?;
            log::warn!(
                "no modulus in input; fitted eta(t) = {:.6}*max(t^{:.6}, t^(1/{:.6})) from the data",
                fitted.scale(),
                fitted.exponent(),
                fitted.exponent()
            );
            Ok(fitted)
        }
    }
}

#[derive(Serialize)]
struct AnalyzeReport {
    sites: usize,
    connectedness_constant: f64,
    gap_constant: Option<f64>,
    weak_constant: Option<f64>,
    worst_triple: Option<(f64, f64, f64)>,
    weak_constant_note: Option<String>,
    modulus: ModulusSpec,
    holder_constant: f64,
}

fn cmd_analyze(input: &Path, out: Option<&Path>) -> Result<(), CliFailure> {
    let (map, doc) = read_input(input)?;
    if map.len() < 2 {
        return Err(QsxError::SingletonSet.into());
    }
    let m = relative_connectedness_constant(map.sites())?;
    let modulus = resolve_modulus(&map, &doc.modulus)?;
    // The gap statistic needs positive-length components; measure it on the
    // fattened normalized set.
    let (norm, _) = qsx_core::preextend::normalize(&map)?;
    let gap = uniform_perfectness_gap_constant(&fatten_isolated(&norm, &modulus)?.interval_set());
    let holder = holder_envelope(&map, modulus.exponent())?;
    let (weak, triple, note) = if map.len() >= 3 {
        let qs = weak_qs_constant(&map)?;
        (Some(qs.weak_constant), Some(qs.worst_triple), None)
    } else {
        (None, None, Some("n/a, < 3 sites".to_string()))
    };
    let report = AnalyzeReport {
        sites: map.len(),
        connectedness_constant: m,
        gap_constant: gap.is_finite().then_some(gap),
        weak_constant: weak,
        worst_triple: triple,
        weak_constant_note: note,
        modulus: ModulusSpec {
            c: modulus.scale(),
            alpha: modulus.exponent(),
        },
        holder_constant: holder,
    };
    let bytes = to_json(&report)?;
    std::io::stdout().write_all(&bytes)?;
    if let Some(path) = out {
        write_atomic(path, &bytes)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ExtensionDocument {
    #[serde(rename = "N")]
    n: usize,
    breakpoints: Vec<f64>,
    assignment: serde_json::Value,
    bridges: serde_json::Value,
    map: ExtensionMap,
}

fn cmd_extend(
    input: &Path,
    out: &Path,
    window: usize,
    resolution: f64,
    samples: usize,
    seed: u64,
) -> Result<(), CliFailure> {
    let (map, doc) = read_input(input)?;
    let modulus = resolve_modulus(&map, &doc.modulus)?;
    let config = ExtensionConfig {
        window: doc.config.window.unwrap_or(window),
        resolution: doc.config.resolution.unwrap_or(resolution),
        seed: doc.config.seed.unwrap_or(seed),
    };
    log::info!("extend seed = {}", config.seed);
    let ext = extend(&map, &modulus, &config)?;

    let assignment = serde_json::to_value(ext.assignment())
        .map_err(|e| CliFailure::input(format!("serialization failed: {e}")))?;
    let bridges = serde_json::to_value(ext.bridges())
        .map_err(|e| CliFailure::input(format!("serialization failed: {e}")))?;
    let docout = ExtensionDocument {
        n: ext.total_dim(),
        breakpoints: ext.breakpoints_normalized(),
        assignment,
        bridges,
        map: ext.clone(),
    };
    write_atomic(&suffixed(out, ".extension.json"), &to_json(&docout)?)?;

    let (lo, hi) = ext.window();
    let mut csv = String::new();
    csv.push('x');
    for i in 1..=ext.total_dim() {
        csv.push_str(&format!(",F{i}"));
    }
    csv.push('\n');
    let steps = samples.max(2);
    for s in 0..steps {
        let x = lo + (hi - lo) * s as f64 / (steps - 1) as f64;
        let y = ext.evaluate(x)?;
        csv.push_str(&fmt_f64(x));
        for v in &y {
            csv.push(',');
            csv.push_str(&fmt_f64(*v));
        }
        csv.push('\n');
    }
    write_atomic(&suffixed(out, ".curve.csv"), csv.as_bytes())?;
    Ok(())
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_verify(
    extension: &Path,
    samples: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliFailure> {
    let text = std::fs::read_to_string(extension)
        .map_err(|e| CliFailure::input(format!("cannot read {}: {e}", extension.display())))?;
    let doc: ExtensionDocument = serde_json::from_str(&text)
        .map_err(|e| CliFailure::input(format!("{}: {e}", extension.display())))?;
    log::info!("verify seed = {seed}");
    let report = verify_extension(&doc.map, samples, seed)?;
    let bytes = to_json(&report)?;
    std::io::stdout().write_all(&bytes)?;
    if let Some(path) = out {
        write_atomic(path, &bytes)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CounterexampleDiagnostics {
    bilipschitz_constant: f64,
    john_constant: f64,
    density: Vec<(usize, usize, f64)>,
    density_ok: bool,
    obstruction: qsx_core::counterexample::ObstructionReport,
}

fn cmd_counterexample(
    n: usize,
    m: usize,
    k: usize,
    points_per_face: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliFailure> {
    log::info!("counterexample seed = {seed}");
    let (scene, sites) = build_scene(n, m, k, points_per_face)?;
    write_atomic(
        &suffixed(out, ".scene.json"),
        &to_json(&serde_json::json!({
            "scene": scene,
            "sites": sites,
        }))?,
    )?;
    let l = bilipschitz_constant(&sites, seed)?;
    let john = john_constant(&scene, 256, seed)?;
    let density = density_report(n, m, k, points_per_face)?;
    let density_ok = density.iter().all(|&(_, _, r)| r < 1.0);
    let obstruction = obstruction_certificate(&scene, &PowerModulus::identity(), seed)?;
    let diag = CounterexampleDiagnostics {
        bilipschitz_constant: l,
        john_constant: john,
        density,
        density_ok,
        obstruction,
    };
    let bytes = to_json(&diag)?;
    std::io::stdout().write_all(&bytes)?;
    write_atomic(&suffixed(out, ".diagnostics.json"), &bytes)?;
    Ok(())
}

fn cmd_fit_modulus(input: &Path, out: Option<&Path>) -> Result<(), CliFailure> {
    let (map, _) = read_input(input)?;
    let fitted = fit_power_modulus(&ratio_samples(&map))?;
    let bytes = to_json(&ModulusSpec {
        c: fitted.scale(),
        alpha: fitted.exponent(),
    })?;
    std::io::stdout().write_all(&bytes)?;
    if let Some(path) = out {
        write_atomic(path, &bytes)?;
    }
    Ok(())
}

fn configure_threads() {
    if let Ok(v) = std::env::var("QSX_THREADS") {
        match v.parse::<usize>() {
            Ok(threads) if threads > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
            _ => log::warn!("ignoring invalid QSX_THREADS = {v:?}"),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliFailure> {
    match cli.command {
        Command::Analyze { input, out } => cmd_analyze(&input, out.as_deref()),
        Command::Extend {
            input,
            out,
            window,
            resolution,
            samples,
            seed,
        } => cmd_extend(&input, &out, window, resolution, samples, seed),
        Command::Verify {
            extension,
            samples,
            seed,
            out,
        } => cmd_verify(&extension, samples, seed, out.as_deref()),
        Command::Counterexample {
            n,
            m,
            k,
            points_per_face,
            seed,
            out,
        } => cmd_counterexample(n, m, k, points_per_face, seed, &out),
        Command::FitModulus { input, out } => cmd_fit_modulus(&input, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    configure_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
