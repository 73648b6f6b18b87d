//! `lamn`: simulate, estimate and verify from the command line.
//!
//! Exit codes: 0 success (for `verify`: every check passed), 1 some check
//! failed, 2 usage or configuration error.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use lamn_core::harness::{self, ExperimentConfig, ExperimentId, ExperimentReport, KRule};
use lamn_core::model::by_name;
use lamn_core::rng::replication_stream;
use lamn_core::simulate::{augment, observe, simulate_cells, BlockSet, PathGrid};
use lamn_core::{estimate_augmented, estimate_means_only, EstimateResult, WeightMeasure};

#[derive(Parser)]
#[command(name = "lamn", version, about = "Diffusions observed through local means")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path and write its local means as CSV.
    Simulate(SimulateArgs),
    /// Maximize the quasi-likelihood for observations read from CSV.
    Estimate(EstimateArgs),
    /// Run Monte Carlo experiments and write CSV/JSON reports.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON file with a simulation config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// JSON measure or shorthand (`lebesgue`, `dirac:0.5`, `atomic:0.2@0.5,0.8@0.5`, `mixture:0.5;0.3@0.5`).
    #[arg(long)]
    measure: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    xi0: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// Euler sub-steps per cell.
    #[arg(long)]
    m: Option<usize>,
    /// Block length; when given, block anchors are written too.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also dump the fine path (columns t, X, dW).
    #[arg(long)]
    path_out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Observations CSV (`j,xbar` or `j,xbar,l,anchor`).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    measure: Option<String>,
    #[arg(long)]
    xi0: Option<f64>,
    /// Block length for means-only data (default `max(2, ⌈log₂ n⌉)`).
    #[arg(long)]
    k: Option<usize>,
    /// Starting point (default: midpoint of Θ).
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Experiment id (`expansion`, `information`, `coupling`, `chi2`, `density`, `estimator`, `e1`…`e7`) or `all`.
    #[arg(long, default_value = "all")]
    experiment: String,
    /// JSON file with one experiment config or an array of them.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    measure: Option<String>,
    #[arg(long)]
    theta0: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    xi0: Option<f64>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    m: Option<usize>,
    /// `fixed:<k>`, `<k>` or `log2`.
    #[arg(long)]
    k: Option<KRule>,
    #[arg(long = "M")]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output prefix; writes `<out>.csv` and `<out>.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationConfig {
    model: String,
    measure: WeightMeasure,
    theta: f64,
    #[serde(default)]
    xi0: f64,
    n: usize,
    #[serde(default = "default_m")]
    m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(default = "default_seed")]
    seed: u64,
}

fn default_m() -> usize {
    32
}

fn default_seed() -> u64 {
    20_240_601
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    measure: Option<WeightMeasure>,
    #[serde(default)]
    xi0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
}

#[derive(Serialize)]
struct EstimateOutput {
    theta_hat: f64,
    score_at_hat: f64,
    info_at_hat: f64,
    boundary_hit: bool,
    iterations: usize,
    mode: &'static str,
    n: usize,
    k: usize,
    input: PathBuf,
    config: EstimationConfig,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parse_measure(s: &str) -> anyhow::Result<WeightMeasure> {
    s.parse().map_err(|e| anyhow!("--measure: {e}"))
}

/// Write to a temporary sibling and rename, so a failure leaves no file.
fn write_atomically(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = BufWriter::new(File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?);
        f.write_all(bytes)?;
        f.flush()?;
    }
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(p) => read_json::<SimulationConfig>(p)?,
        None => SimulationConfig {
            model: "multiplicative_bm".into(),
            measure: WeightMeasure::lebesgue(),
            theta: 1.0,
            xi0: 0.0,
            n: 1024,
            m: default_m(),
            k: None,
            seed: default_seed(),
        },
    };
    if let Some(v) = args.model {
        cfg.model = v;
    }
    if let Some(v) = &args.measure {
        cfg.measure = parse_measure(v)?;
    }
    if let Some(v) = args.theta {
        cfg.theta = v;
    }
    if let Some(v) = args.xi0 {
        cfg.xi0 = v;
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.m {
        cfg.m = v;
    }
    if args.k.is_some() {
        cfg.k = args.k;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    let model = by_name(&cfg.model).map_err(|e| anyhow!("{e}"))?;
    model.check_theta(cfg.theta).map_err(|e| anyhow!("{e}"))?;
    if cfg.n == 0 || cfg.m == 0 {
        return Err(Failure::Usage(anyhow!("n and m must be positive")));
    }
    if let Some(k) = cfg.k {
        if k == 0 || k > cfg.n {
            return Err(Failure::Usage(anyhow!("k = {k} must lie in 1..={}", cfg.n)));
        }
    }

    let mut rng = replication_stream(cfg.seed, 0, 0);
    let path = simulate_cells(model, cfg.theta, cfg.xi0, cfg.n, cfg.m, cfg.n, &mut rng)
        .map_err(|e| Failure::Runtime(e.into()))?;
    let obs = observe(&path, &cfg.measure);
    let csv = match cfg.k {
        None => means_csv(&obs),
        Some(k) => {
            let blocks = augment(&path, &obs, k).map_err(|e| Failure::Runtime(e.into()))?;
            augmented_csv(&blocks, &obs)
        }
    }
    .map_err(Failure::Runtime)?;
    write_atomically(&args.out, &csv)?;
    let sidecar = serde_json::to_vec_pretty(&cfg).map_err(|e| Failure::Runtime(e.into()))?;
    write_atomically(&with_suffix(&args.out, ".json"), &sidecar)?;
    if let Some(p) = &args.path_out {
        write_atomically(p, &path_csv(&path).map_err(Failure::Runtime)?)?;
    }
    Ok(())
}

fn means_csv(obs: &[f64]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["j", "xbar"])?;
    for (j, x) in obs.iter().enumerate() {
        w.write_record([j.to_string(), x.to_string()])?;
    }
    Ok(w.into_inner()?)
}

/// One row per mean; block starts also carry `l` and the anchor
/// `X_{kl/n}`. A final row `j = n` with empty `xbar` holds `X_1`.
fn augmented_csv(blocks: &BlockSet, obs: &[f64]) -> anyhow::Result<Vec<u8>> {
    let anchors = blocks.anchors();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["j", "xbar", "l", "anchor"])?;
    for (j, x) in obs.iter().enumerate() {
        if j % blocks.k == 0 {
            let l = j / blocks.k;
            w.write_record([j.to_string(), x.to_string(), l.to_string(), anchors[l].to_string()])?;
        } else {
            w.write_record([j.to_string(), x.to_string(), String::new(), String::new()])?;
        }
    }
    let last = anchors.len() - 1;
    w.write_record([
        blocks.n.to_string(),
        String::new(),
        last.to_string(),
        anchors[last].to_string(),
    ])?;
    Ok(w.into_inner()?)
}

fn path_csv(path: &PathGrid) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "X", "dW"])?;
    let dt = path.step();
    for (i, x) in path.values.iter().enumerate() {
        let dw = if i == 0 { String::new() } else { path.dw[i - 1].to_string() };
        w.write_record([(i as f64 * dt).to_string(), x.to_string(), dw])?;
    }
    Ok(w.into_inner()?)
}

/// Parsed observation file.
struct Observations {
    means: Vec<f64>,
    /// `(j, anchor)` pairs, present in augmented files.
    anchors: Option<Vec<(usize, f64)>>,
}

fn read_observations(path: &Path) -> anyhow::Result<Observations> {
    let mut text = String::new();
    File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_string(&mut text)?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let augmented = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["j", "xbar"] => false,
        ["j", "xbar", "l", "anchor"] => true,
        other => bail!("unexpected header {other:?} (want j,xbar or j,xbar,l,anchor)"),
    };
    let mut means = Vec::new();
    let mut anchors = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("record {}", line + 1))?;
        let field = |i: usize| record.get(i).map(str::trim).unwrap_or("");
        let j: usize = field(0)
            .parse()
            .with_context(|| format!("record {}: bad j '{}'", line + 1, field(0)))?;
        let xbar = field(1);
        if !xbar.is_empty() {
            if j != means.len() {
                bail!("record {}: expected j = {}, got {j}", line + 1, means.len());
            }
            let x: f64 = xbar
                .parse()
                .with_context(|| format!("record {}: bad xbar '{xbar}'", line + 1))?;
            if !x.is_finite() {
                bail!("record {}: non-finite xbar", line + 1);
            }
            means.push(x);
        } else if !augmented {
            bail!("record {}: empty xbar", line + 1);
        }
        if augmented && !field(3).is_empty() {
            let a: f64 = field(3)
                .parse()
                .with_context(|| format!("record {}: bad anchor '{}'", line + 1, field(3)))?;
            if !a.is_finite() {
                bail!("record {}: non-finite anchor", line + 1);
            }
            anchors.push((j, a));
        }
    }
    if means.is_empty() {
        bail!("no observations");
    }
    Ok(Observations {
        means,
        anchors: augmented.then_some(anchors),
    })
}

/// Block length implied by anchor positions `0, k, 2k, …, n`.
fn infer_k(anchors: &[(usize, f64)], n: usize) -> anyhow::Result<usize> {
    let k = match anchors.get(1) {
        Some(&(j, _)) if j > 0 => j,
        _ => bail!("augmented file needs anchors at j = 0 and at least one later block start"),
    };
    let count = n.div_ceil(k);
    let expected: Vec<usize> = (0..count).map(|l| l * k).chain(std::iter::once(n)).collect();
    let got: Vec<usize> = anchors.iter().map(|a| a.0).collect();
    if got != expected {
        bail!("anchor positions {got:?} do not match block length {k} (expected {expected:?})");
    }
    Ok(k)
}

fn estimate(args: EstimateArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(p) => read_json::<EstimationConfig>(p)?,
        None => EstimationConfig {
            model: None,
            measure: None,
            xi0: 0.0,
            k: None,
            theta: None,
        },
    };
    if args.model.is_some() {
        cfg.model = args.model;
    }
    if let Some(v) = &args.measure {
        cfg.measure = Some(parse_measure(v)?);
    }
    if let Some(v) = args.xi0 {
        cfg.xi0 = v;
    }
    if args.k.is_some() {
        cfg.k = args.k;
    }
    if args.theta.is_some() {
        cfg.theta = args.theta;
    }
    // fall back to the simulation sidecar when present
    let sidecar = with_suffix(&args.input, ".json");
    let sim: Option<SimulationConfig> = if sidecar.exists() { read_json(&sidecar).ok() } else { None };
    if cfg.model.is_none() {
        cfg.model = Some(sim.as_ref().map_or("multiplicative_bm".into(), |s| s.model.clone()));
    }
    if cfg.measure.is_none() {
        cfg.measure = Some(sim.as_ref().map_or_else(WeightMeasure::lebesgue, |s| s.measure.clone()));
    }
    if args.xi0.is_none() && args.config.is_none() {
        if let Some(s) = &sim {
            cfg.xi0 = s.xi0;
        }
    }
    let model = by_name(cfg.model.as_deref().unwrap_or_default()).map_err(|e| anyhow!("{e}"))?;
    if let Some(t) = cfg.theta {
        model.check_theta(t).map_err(|e| anyhow!("{e}"))?;
    }
    let measure = cfg.measure.clone().expect("resolved above");
    let v = measure.v_coefficients();

    let data = read_observations(&args.input)?;
    let n = data.means.len();
    let (result, mode, k): (EstimateResult, _, _) = match &data.anchors {
        Some(anchors) => {
            let k = infer_k(anchors, n)?;
            if let Some(given) = cfg.k {
                if given != k {
                    return Err(Failure::Usage(anyhow!("--k {given} disagrees with anchors (k = {k})")));
                }
            }
            let values: Vec<f64> = anchors.iter().map(|a| a.1).collect();
            let blocks = BlockSet::from_parts(n, k, &values, &data.means).map_err(|e| anyhow!("{e}"))?;
            let r = estimate_augmented(&blocks, model, &v, cfg.theta).map_err(|e| anyhow!("{e}"))?;
            cfg.k = Some(k);
            (r, "augmented", k)
        }
        None => {
            let k = cfg.k.unwrap_or_else(|| KRule::Log2.block_len(n));
            if k < 2 || k > n {
                return Err(Failure::Usage(anyhow!("means-only estimation needs 2 <= k <= n, got k = {k}")));
            }
            let r = estimate_means_only(&data.means, cfg.xi0, model, &v, k, cfg.theta)
                .map_err(|e| anyhow!("{e}"))?;
            cfg.k = Some(k);
            (r, "means_only", k)
        }
    };
    let out = EstimateOutput {
        theta_hat: result.theta_hat,
        score_at_hat: result.score_at_hat,
        info_at_hat: result.info_at_hat,
        boundary_hit: result.boundary_hit,
        iterations: result.iterations,
        mode,
        n,
        k,
        input: args.input.clone(),
        config: cfg,
    };
    let mut json = serde_json::to_vec_pretty(&out).map_err(|e| Failure::Runtime(e.into()))?;
    json.push(b'\n');
    match &args.out {
        Some(p) => write_atomically(p, &json)?,
        None => std::io::stdout().write_all(&json).map_err(|e| Failure::Runtime(e.into()))?,
    }
    Ok(())
}

fn verify_configs(args: &VerifyArgs) -> anyhow::Result<Vec<ExperimentConfig>> {
    let mut configs = match &args.config {
        Some(p) => {
            let value: serde_json::Value = read_json(p)?;
            if value.is_array() {
                serde_json::from_value(value)?
            } else {
                vec![serde_json::from_value(value)?]
            }
        }
        None if args.experiment == "all" => ExperimentId::ALL
            .iter()
            .flat_map(|&id| ExperimentConfig::defaults(id))
            .collect(),
        None => {
            let id: ExperimentId = args.experiment.parse()?;
            ExperimentConfig::defaults(id)
        }
    };
    if args.config.is_some() && args.experiment != "all" {
        let id: ExperimentId = args.experiment.parse()?;
        configs.retain(|c| c.experiment == id);
    }
    let measure = args.measure.as_deref().map(parse_measure).transpose()?;
    for cfg in &mut configs {
        if let Some(v) = &args.model {
            cfg.model = v.clone();
        }
        if let Some(v) = &measure {
            cfg.measure = v.clone();
        }
        if let Some(v) = args.theta0 {
            cfg.theta0 = v;
        }
        if let Some(v) = args.h {
            cfg.h = v;
        }
        if let Some(v) = args.xi0 {
            cfg.xi0 = v;
        }
        if let Some(v) = &args.n {
            cfg.n = v.clone();
        }
        if let Some(v) = args.m {
            cfg.m = v;
        }
        if let Some(v) = args.k {
            cfg.k = v;
        }
        if let Some(v) = args.replications {
            cfg.replications = v;
        }
        if let Some(v) = args.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
    }
    if configs.is_empty() {
        bail!("no experiment selected");
    }
    Ok(configs)
}

fn verify(args: VerifyArgs) -> Result<bool, Failure> {
    let configs = verify_configs(&args)?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut reports: Vec<ExperimentReport> = Vec::new();
    for cfg in &configs {
        let report = harness::run(cfg, workers).map_err(|e| Failure::Runtime(e.into()))?;
        for row in report.checks() {
            eprintln!(
                "{} {} n={} {} = {:.6} (target {:.6} ± {:.6})",
                if row.pass == Some(true) { "PASS" } else { "FAIL" },
                row.experiment,
                row.n,
                row.stat,
                row.value,
                row.target.unwrap_or(f64::NAN),
                row.tol.unwrap_or(f64::NAN),
            );
        }
        reports.push(report);
    }
    let csv = harness::csv_string(&reports).map_err(|e| Failure::Runtime(e.into()))?;
    match &args.out {
        Some(prefix) => {
            write_atomically(&with_suffix(prefix, ".csv"), csv.as_bytes())?;
            let json = serde_json::to_vec_pretty(&reports).map_err(|e| Failure::Runtime(e.into()))?;
            write_atomically(&with_suffix(prefix, ".json"), &json)?;
        }
        None => print!("{csv}"),
    }
    Ok(reports.iter().all(|r| r.all_pass))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Estimate(a) => estimate(a).map(|_| true),
        Command::Verify(a) => verify(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
