use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use gwtail::fourier::{DEFAULT_FFT_SIZE, DEFAULT_N_MAX};
use gwtail::julia::{self, JuliaParams, Window};
use gwtail::montecarlo::{self, RNG_NAME};
use gwtail::quadrature::{self, density_header, density_row, linspace, QuadratureConfig};
use gwtail::schroder::{DEFAULT_DEGREE_CAP, DEFAULT_PHI_ITERATIONS};
use gwtail::series::{SeriesConfig, SeriesEvaluator};
use gwtail::spectral::{check_conditions, perron_data};
use gwtail::{load_model, PgfModel, SpectralData};
use num_complex::Complex64;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Limit densities of supercritical multitype Galton-Watson processes.
#[derive(Parser, Debug)]
#[command(name = "gwtail", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check conditions (A)-(D) and print spectral data as JSON.
    Analyze(Common),
    /// Density by numerical Laplace inversion.
    Density(DensityArgs),
    /// Density by the complete left-tail series.
    Series(SeriesArgs),
    /// Density by the single-mode approximation.
    Approx(SeriesArgs),
    /// Render the modified filled Julia set as a PGM image.
    Julia(JuliaArgs),
    /// Simulate the process and sample the normalised population.
    Simulate(SimulateArgs),
    /// Quadrature, series and approximation side by side.
    Compare(CompareArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Model file (JSON).
    #[arg(value_name = "MODEL")]
    model_pos: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output file; stdout when absent. A `.meta.json` sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Iteration count of the main recurrence of the command.
    #[arg(long)]
    iters: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct QuadArgs {
    #[arg(long, default_value_t = 400.0)]
    cutoff: f64,
    #[arg(long, default_value_t = 100_000)]
    nodes: usize,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
}

#[derive(Args, Debug, Clone)]
struct SerArgs {
    #[arg(long, default_value_t = DEFAULT_DEGREE_CAP)]
    mcap: u32,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    nmax: usize,
    #[arg(long = "fft-size", default_value_t = DEFAULT_FFT_SIZE)]
    fft_size: usize,
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[command(flatten)]
    common: Common,
    /// Grid as lo:hi:n.
    #[arg(long, default_value = "0.05:4:400")]
    grid: String,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Args, Debug)]
struct SeriesArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "0.05:4:400")]
    grid: String,
    #[command(flatten)]
    ser: SerArgs,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "0.05:4:400")]
    grid: String,
    #[command(flatten)]
    quad: QuadArgs,
    #[command(flatten)]
    ser: SerArgs,
}

#[derive(Args, Debug)]
struct JuliaArgs {
    #[command(flatten)]
    common: Common,
    /// Window as cx:cy:width:height; derived from the model when absent.
    #[arg(long)]
    window: Option<String>,
    /// Resolution as N or WxH.
    #[arg(long, default_value = "512")]
    res: String,
    #[arg(long, default_value_t = 1.0)]
    zoom: f64,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Starting type, 1-based.
    #[arg(long = "type", default_value_t = 1)]
    start_type: usize,
    #[arg(long, default_value_t = 18)]
    horizon: usize,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also compare against the quadrature density with a KS statistic.
    #[arg(long)]
    ks: bool,
    #[command(flatten)]
    quad: QuadArgs,
}

/// A usage or input problem (exit code 1).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<gwtail::Error>() {
            return if is_numeric(e) { 2 } else { 1 };
        }
    }
    2
}

fn is_numeric(e: &gwtail::Error) -> bool {
    match e {
        gwtail::Error::Numeric(_) => true,
        gwtail::Error::AtIndex { source, .. } => is_numeric(source),
        _ => false,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Analyze(c) => analyze(&c),
        Command::Density(a) => density(&a),
        Command::Series(a) => series(&a, false),
        Command::Approx(a) => series(&a, true),
        Command::Julia(a) => julia_cmd(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Compare(a) => compare(&a),
    }
}

struct Loaded {
    path: PathBuf,
    model: PgfModel,
    hash: String,
}

fn load(c: &Common) -> Result<Loaded> {
    let path = match (&c.model_pos, &c.model) {
        (Some(_), Some(_)) => return Err(usage("give the model either positionally or with --model")),
        (Some(p), None) | (None, Some(p)) => p.clone(),
        (None, None) => return Err(usage("a model file is required")),
    };
    let model = load_model(&path).with_context(|| format!("loading {}", path.display()))?;
    let hash = hex::encode(Sha256::digest(model.to_json_string().as_bytes()));
    Ok(Loaded { path, model, hash })
}

fn parse_grid(arg: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = arg.split(':').collect();
    let bad = || usage(format!("grid must be lo:hi:n with 0 < lo < hi, got '{arg}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi.is_finite()) || n == 0 || (n > 1 && !(hi > lo)) {
        return Err(bad());
    }
    Ok(linspace(lo, hi, n))
}

fn parse_res(arg: &str) -> Result<(usize, usize)> {
    let bad = || usage(format!("resolution must be N or WxH, got '{arg}'"));
    let (w, h) = match arg.split_once('x') {
        Some((w, h)) => (w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?),
        None => {
            let n = arg.parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

fn parse_window(arg: &str) -> Result<Window> {
    let v: Vec<f64> = arg
        .split(':')
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("window must be cx:cy:width:height, got '{arg}'")))?;
    if v.len() != 4 {
        return Err(usage(format!("window must be cx:cy:width:height, got '{arg}'")));
    }
    Window::new(Complex64::new(v[0], v[1]), v[2], v[3]).map_err(|e| usage(e.to_string()))
}

fn quad_config(q: &QuadArgs, iters: Option<usize>) -> QuadratureConfig {
    QuadratureConfig {
        cutoff: q.cutoff,
        nodes: q.nodes,
        delta: q.delta,
        iterations: iters.unwrap_or(QuadratureConfig::default().iterations),
        ..Default::default()
    }
}

fn series_config(s: &SerArgs, iters: Option<usize>) -> SeriesConfig {
    SeriesConfig {
        m_cap: s.mcap,
        n_max: s.nmax,
        fft_size: s.fft_size,
        iterations: iters.unwrap_or(DEFAULT_PHI_ITERATIONS),
        ..Default::default()
    }
}

fn meta(command: &str, loaded: &Loaded, knobs: Value, extra: Value) -> Value {
    json!({
        "tool": "gwtail",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "model": loaded.path.display().to_string(),
        "model_sha256": loaded.hash,
        "knobs": knobs,
        "diagnostics": extra,
    })
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn emit(out: &Option<PathBuf>, body: &[u8], meta: &Value) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
            let side = sidecar_path(path);
            let text = serde_json::to_string_pretty(meta)? + "\n";
            std::fs::write(&side, text).with_context(|| format!("writing {}", side.display()))?;
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(body)?;
        }
    }
    Ok(())
}

fn analyze(c: &Common) -> Result<()> {
    let loaded = load(c)?;
    let m = &loaded.model;
    let b: Vec<f64> = perron_data(&m.mean_matrix())?.2.iter().copied().collect();
    let angle = julia::default_critical_angle(m, &b).ok();
    let report = check_conditions(m, angle.as_ref().map(|a| a.angle));
    let body = serde_json::to_string_pretty(&json!({
        "model": loaded.path.display().to_string(),
        "model_sha256": loaded.hash,
        "report": report,
        "critical_angle": angle,
    }))? + "\n";
    emit(&c.out, body.as_bytes(), &meta("analyze", &loaded, json!({}), json!({})))?;
    if report.all_pass() {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|k| k.status != gwtail::spectral::CheckStatus::Pass)
            .map(|k| k.condition.as_str())
            .collect();
        Err(usage(format!("conditions not satisfied: {}", failed.join(", "))))
    }
}

fn density(a: &DensityArgs) -> Result<()> {
    let xs = parse_grid(&a.grid)?;
    let loaded = load(&a.common)?;
    let cfg = quad_config(&a.quad, a.common.iters);
    let curve = quadrature::density_quadrature_grid(&loaded.model, &cfg, &xs)?;
    if curve.any_unreliable() {
        eprintln!(
            "warning: points below x = {} are unreliable by quadrature; use `series` there",
            quadrature::RELIABLE_X_MIN
        );
    }
    let unreliable: Vec<f64> = xs
        .iter()
        .zip(&curve.unreliable)
        .filter(|p| *p.1)
        .map(|p| *p.0)
        .collect();
    let m = meta(
        "density",
        &loaded,
        json!({ "grid": a.grid, "quadrature": cfg }),
        json!({
            "unreliable_x": unreliable,
            "recommendation": if unreliable.is_empty() { Value::Null } else { json!("series") },
        }),
    );
    emit(&a.common.out, curve.to_csv().as_bytes(), &m)
}

fn series(a: &SeriesArgs, approx: bool) -> Result<()> {
    let xs = parse_grid(&a.grid)?;
    let loaded = load(&a.common)?;
    let sd = SpectralData::compute(&loaded.model)?;
    let cfg = series_config(&a.ser, a.common.iters);
    let ev = SeriesEvaluator::new(&loaded.model, &sd, &cfg)?;
    let mut body = density_header(ev.n());
    let mut residue = 0.0f64;
    for &x in &xs {
        let row = if approx {
            ev.density_approx(x)?
        } else {
            let v = ev.density_series_detailed(x)?;
            residue = residue.max(v.imag_residue);
            v.density
        };
        body.push_str(&density_row(x, &row));
    }
    let f = ev.fourier();
    let m = meta(
        if approx { "approx" } else { "series" },
        &loaded,
        json!({
            "grid": a.grid,
            "m_cap": cfg.m_cap,
            "n_max": cfg.n_max,
            "fft_size": cfg.fft_size,
            "iterations": cfg.iterations,
        }),
        json!({
            "taylor_scale": ev.taylor().scale(),
            "contour_angle": f.contour_angle(),
            "aliasing_error": f.aliasing_error(),
            "max_imag_residue": if approx { Value::Null } else { json!(residue) },
        }),
    );
    emit(&a.common.out, body.as_bytes(), &m)
}

fn julia_cmd(a: &JuliaArgs) -> Result<()> {
    let out = a
        .common
        .out
        .clone()
        .ok_or_else(|| usage("julia needs --out for the PGM image"))?;
    let (cols, rows) = parse_res(&a.res)?;
    let loaded = load(&a.common)?;
    let m = &loaded.model;
    let b: Vec<f64> = perron_data(&m.mean_matrix())?.2.iter().copied().collect();
    let window = match &a.window {
        Some(w) => parse_window(w)?,
        None => Window::default_for(&b, a.zoom).map_err(|e| usage(e.to_string()))?,
    };
    let params = JuliaParams {
        t_max: a.common.iters.unwrap_or(JuliaParams::default().t_max),
        ..Default::default()
    };
    let raster = julia::render_j1(m, &b, &window, cols, rows, &params)?;
    let angle = julia::critical_angle(
        m,
        &b,
        &julia::DEFAULT_RADII,
        julia::DEFAULT_ANGULAR_RESOLUTION,
        &params,
    )
    .ok();
    let side = meta(
        "julia",
        &loaded,
        json!({ "window": window, "cols": cols, "rows": rows, "params": params, "zoom": a.zoom }),
        json!({ "member_fraction": raster.member_fraction(), "critical_angle": angle }),
    );
    emit(&Some(out), &raster.to_pgm(), &side)
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let loaded = load(&a.common)?;
    let m = &loaded.model;
    if a.start_type == 0 || a.start_type > m.n() {
        return Err(usage(format!("--type must be in 1..={}", m.n())));
    }
    let sd = SpectralData::compute(m)?;
    let set = montecarlo::sample_martingale(m, &sd, a.start_type - 1, a.horizon, a.paths, a.seed)?;
    let ks = if a.ks {
        let cfg = quad_config(&a.quad, a.common.iters);
        let curve = quadrature::density_quadrature_grid(m, &cfg, &linspace(0.01, 20.0, 4000))?;
        Some(montecarlo::ks_test(&set, &curve)?)
    } else {
        None
    };
    let b = sd.right[a.start_type - 1];
    let summary = json!({
        "mean": set.mean(),
        "std_error": set.std_error(),
        "expected_mean": b,
        "ks_statistic": ks,
    });
    eprintln!("{}", serde_json::to_string(&summary)?);
    let side = meta(
        "simulate",
        &loaded,
        json!({
            "type": a.start_type,
            "horizon": a.horizon,
            "paths": a.paths,
            "seed": a.seed,
            "rng": RNG_NAME,
        }),
        summary,
    );
    emit(&a.common.out, set.to_csv().as_bytes(), &side)
}

fn compare(a: &CompareArgs) -> Result<()> {
    let xs = parse_grid(&a.grid)?;
    let loaded = load(&a.common)?;
    let m = &loaded.model;
    let sd = SpectralData::compute(m)?;
    let qcfg = quad_config(&a.quad, None);
    let scfg = series_config(&a.ser, a.common.iters);
    let curve = quadrature::density_quadrature_grid(m, &qcfg, &xs)?;
    let ev = SeriesEvaluator::new(m, &sd, &scfg)?;
    let n = ev.n();
    let mut body = String::from("x");
    for i in 1..=n {
        let _ = write!(body, ",d_quadrature_{i},d_series_{i},d_approx_{i}");
    }
    body.push('\n');
    let mut worst_series = vec![0.0f64; n];
    let mut worst_approx = vec![0.0f64; n];
    for (k, &x) in xs.iter().enumerate() {
        let q = &curve.values[k];
        let s = ev.density_series(x)?;
        let ap = ev.density_approx(x)?;
        let _ = write!(body, "{x:.16e}");
        for i in 0..n {
            let _ = write!(body, ",{:.16e},{:.16e},{:.16e}", q[i], s[i], ap[i]);
            if !curve.unreliable[k] && q[i].abs() > 0.0 {
                worst_series[i] = worst_series[i].max(((s[i] - q[i]) / q[i]).abs());
                worst_approx[i] = worst_approx[i].max(((ap[i] - q[i]) / q[i]).abs());
            }
        }
        body.push('\n');
    }
    let summary = json!({
        "max_rel_error_series": worst_series,
        "max_rel_error_approx": worst_approx,
        "reference": "quadrature",
        "excluded_below_x": quadrature::RELIABLE_X_MIN,
    });
    eprintln!("{}", serde_json::to_string(&summary)?);
    let side = meta(
        "compare",
        &loaded,
        json!({
            "grid": a.grid,
            "quadrature": qcfg,
            "m_cap": scfg.m_cap,
            "n_max": scfg.n_max,
            "fft_size": scfg.fft_size,
            "iterations": scfg.iterations,
        }),
        summary,
    );
    emit(&a.common.out, body.as_bytes(), &side)
}
