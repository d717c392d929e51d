//! `fmds` command-line interface.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fmds::io::{self, AlignmentExport, CoeffSidecar};
use fmds::nalgebra::DMatrix;
use fmds::report::{self, DEFAULT_CLUSTER_THRESHOLD, DEFAULT_RESIDUAL_TOLERANCE};
use fmds::dissim::correlation_dissim;
use fmds::sim::run_study;
use fmds::{
    fit, init_coeffs, BasisSpec, CoeffSet, CurvilinearConfig,
    DissimilaritySeries, FitConfig, InitStrategy, ScenarioConfig,
};
use serde::{Deserialize, Serialize};

use manifest::{FitTiming, RunManifest};

/// A problem with the command line itself (exit code 2).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "fmds", version, about = "Functional multidimensional scaling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Master seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "fmds-out")]
    out: PathBuf,
    /// JSON file with a run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Embedding dimension.
    #[arg(long, global = true)]
    p: Option<usize>,
    /// Interior knots of the cubic basis (comma-separated list for `simulate`).
    #[arg(long = "L", global = true, value_delimiter = ',')]
    knots: Vec<usize>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long = "max-sweeps", global = true)]
    max_sweeps: Option<usize>,
    /// Initialization: mean-matrix or per-timepoint.
    #[arg(long, global = true)]
    init: Option<InitStrategy>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the simulation study and write per-replication and aggregate RMSE tables.
    Simulate(SimulateArgs),
    /// Fit trajectories to a price panel or a dissimilarity series.
    Fit(FitArgs),
    /// Object coordinates at one or more time points.
    Snapshot(SnapshotArgs),
    /// Split objects by estimated distance to a center object.
    Cluster(ClusterArgs),
    /// Observed against estimated dissimilarities.
    Shepard(ShepardArgs),
    /// Residuals of estimated against observed dissimilarities.
    Residuals(ResidualArgs),
    /// Align one coefficient set to another by an orthogonal transform.
    Align(AlignArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Objects per scenario.
    #[arg(long)]
    n: Option<usize>,
    /// Time-point counts (comma-separated).
    #[arg(long, value_delimiter = ',')]
    m: Vec<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// JSON file holding the pq × pq coefficient covariance as an array of rows.
    #[arg(long)]
    sigma: Option<PathBuf>,
    /// Desk-scale preset: n = 50, L = 5, m = 15,50,100, 20 replications.
    #[arg(long, conflicts_with = "full")]
    desk: bool,
    /// Full preset: n = 50, L = 5,10, m = 15,50,100,200, 300 replications.
    #[arg(long)]
    full: bool,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["prices", "dissim"]))]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// `date,ticker,close` CSV; monthly correlation dissimilarities are built from it.
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Long-format `i,j,t,d` CSV.
    #[arg(long)]
    dissim: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoeffInput {
    /// Coefficient CSV written by `fit`.
    #[arg(long)]
    coeffs: PathBuf,
    /// Sidecar JSON; defaults to the coefficient path with a `.json` extension.
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SnapshotArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: CoeffInput,
    /// Time points (comma-separated); one file is written per value.
    #[arg(long, value_delimiter = ',', required = true)]
    t: Vec<f64>,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: CoeffInput,
    /// Center object: a label from the sidecar or a 1-based index.
    #[arg(long)]
    center: String,
    #[arg(long, default_value_t = DEFAULT_CLUSTER_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    t: f64,
}

#[derive(Args, Debug)]
struct ShepardArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: CoeffInput,
    /// Long-format `i,j,t,d` CSV of observed dissimilarities.
    #[arg(long)]
    dissim: PathBuf,
    /// Restrict the output to one time point.
    #[arg(long)]
    t: Option<f64>,
}

#[derive(Args, Debug)]
struct ResidualArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: CoeffInput,
    #[arg(long)]
    dissim: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RESIDUAL_TOLERANCE)]
    tolerance: f64,
}

#[derive(Args, Debug)]
struct AlignArgs {
    #[command(flatten)]
    common: Common,
    /// Coefficients to be transformed.
    #[arg(long)]
    fitted: PathBuf,
    /// Reference coefficients.
    #[arg(long)]
    truth: PathBuf,
    /// Sidecar describing the basis; defaults to the fitted sidecar.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Time-period length; the objective integrates over `[1, m]`.
    #[arg(long)]
    m: Option<usize>,
}

/// Everything a run can be configured with. Loaded from `--config` and then
/// overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    seed: u64,
    p: usize,
    interior_knots: usize,
    init: InitStrategy,
    fit: FitConfig,
    align: CurvilinearConfig,
    simulate: SimulateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct SimulateConfig {
    n: usize,
    interior_knots: Vec<usize>,
    m: Vec<usize>,
    reps: usize,
    sigma: Option<DMatrix<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            p: 2,
            interior_knots: 5,
            init: InitStrategy::default(),
            fit: FitConfig::default(),
            align: CurvilinearConfig::default(),
            simulate: SimulateConfig::default(),
        }
    }
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            n: 50,
            interior_knots: vec![5],
            m: vec![15, 50, 100, 200],
            reps: 20,
            sigma: None,
        }
    }
}

impl RunConfig {
    fn resolve(common: &Common, allow_knot_list: bool) -> Result<(Self, Vec<PathBuf>)> {
        let mut inputs = Vec::new();
        let mut cfg: RunConfig = match &common.config {
            Some(path) => {
                inputs.push(path.clone());
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text)
                    .map_err(|e| usage(format!("config {}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = common.seed {
            cfg.seed = seed;
        }
        if let Some(p) = common.p {
            cfg.p = p;
        }
        match common.knots.as_slice() {
            [] => {}
            [l] => {
                cfg.interior_knots = *l;
                cfg.simulate.interior_knots = vec![*l];
            }
            many if allow_knot_list => cfg.simulate.interior_knots = many.to_vec(),
            _ => return Err(usage("--L takes a single value for this command")),
        }
        if let Some(e) = common.epsilon {
            cfg.fit.epsilon = e;
        }
        if let Some(a) = common.alpha {
            cfg.fit.alpha = a;
        }
        if let Some(s) = common.max_sweeps {
            cfg.fit.max_sweeps = s;
        }
        if let Some(init) = common.init {
            cfg.init = init;
        }
        cfg.fit.seed = cfg.seed;
        cfg.align.seed = cfg.seed;
        cfg.fit.validate().map_err(|e| usage(e.to_string()))?;
        cfg.align.validate().map_err(|e| usage(e.to_string()))?;
        if cfg.p == 0 {
            return Err(usage("--p must be at least 1"));
        }
        Ok((cfg, inputs))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Snapshot(a) => cmd_snapshot(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Shepard(a) => cmd_shepard(a),
        Command::Residuals(a) => cmd_residuals(a),
        Command::Align(a) => cmd_align(a),
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let (mut cfg, mut inputs) = RunConfig::resolve(&args.common, true)?;
    if args.desk {
        cfg.simulate.n = 50;
        cfg.simulate.interior_knots = vec![5];
        cfg.simulate.m = vec![15, 50, 100];
        cfg.simulate.reps = 20;
    }
    if args.full {
        cfg.simulate.n = 50;
        cfg.simulate.interior_knots = vec![5, 10];
        cfg.simulate.m = vec![15, 50, 100, 200];
        cfg.simulate.reps = 300;
    }
    if let Some(n) = args.n {
        cfg.simulate.n = n;
    }
    if !args.m.is_empty() {
        cfg.simulate.m = args.m.clone();
    }
    if let Some(reps) = args.reps {
        cfg.simulate.reps = reps;
    }
    if let Some(path) = &args.sigma {
        let rows: Vec<Vec<f64>> = serde_json::from_str(
            &std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )
        .map_err(|e| usage(format!("sigma {}: {e}", path.display())))?;
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(usage("sigma must be a square array of rows"));
        }
        cfg.simulate.sigma = Some(DMatrix::from_fn(d, d, |i, j| rows[i][j]));
        inputs.push(path.clone());
    }
    let (sim, fit_cfg, align_cfg) = (&cfg.simulate, &cfg.fit, &cfg.align);
    if sim.interior_knots.is_empty() || sim.m.is_empty() {
        return Err(usage("simulate needs at least one --L and one --m value"));
    }
    let cells: Vec<ScenarioConfig> = sim
        .interior_knots
        .iter()
        .flat_map(|&l| {
            sim.m.iter().map(move |&m| ScenarioConfig {
                n: sim.n,
                p: cfg.p,
                interior_knots: l,
                m,
                reps: sim.reps,
                sigma: sim.sigma.clone(),
                seed: cfg.seed,
                init: cfg.init,
                fit: fit_cfg.clone(),
                align: align_cfg.clone(),
            })
        })
        .collect();
    for c in &cells {
        c.validate().map_err(|e| usage(e.to_string()))?;
    }

    prepare_out(&args.common.out)?;
    let mut manifest = RunManifest::start("simulate", &cfg, cfg.seed, &inputs)?;
    let report = run_study(&cells)?;
    let out = &args.common.out;
    io::write_file(&out.join("replications.csv"), |w| io::write_replications(w, &report))?;
    io::write_file(&out.join("aggregate.csv"), |w| io::write_aggregate(w, &report))?;
    for c in &report.cells {
        for r in &c.replications {
            manifest.fits.push(FitTiming {
                label: format!("L={} m={} rep={}", c.interior_knots, c.m, r.rep + 1),
                seconds: r.fit_seconds,
                sweeps: r.sweeps,
                converged: r.converged,
                final_f: r.final_f,
            });
        }
        for (rep, msg) in &c.failures {
            manifest
                .warnings
                .push(format!("L={} m={} rep={} failed: {msg}", c.interior_knots, c.m, rep + 1));
        }
    }
    manifest.outputs = vec!["replications.csv".into(), "aggregate.csv".into()];
    manifest.finish(out)
}

/// Diagnostics written next to the fitted coefficients.
#[derive(Debug, Serialize)]
struct FitSummary {
    n: usize,
    m: usize,
    initial_f: f64,
    final_f: f64,
    sweeps_used: usize,
    converged: bool,
    pair_steps: u64,
    capped_pairs: u64,
    loss_trace: Vec<f64>,
    change_trace: Vec<f64>,
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let (cfg, mut inputs) = RunConfig::resolve(&args.common, false)?;
    let series = if let Some(path) = &args.prices {
        inputs.push(path.clone());
        let panel = io::read_prices(io::open(path)?).with_context(|| format!("reading {}", path.display()))?;
        correlation_dissim(&panel)?
    } else {
        let path = args.dissim.as_ref().expect("clap enforces one input");
        inputs.push(path.clone());
        io::read_dissim_long(io::open(path)?).with_context(|| format!("reading {}", path.display()))?
    };
    let grid = series.grid();
    if grid.len() < 2 {
        bail!("need at least two time points, found {}", grid.len());
    }
    if cfg.p >= series.n() {
        return Err(usage(format!("--p {} must be below the object count {}", cfg.p, series.n())));
    }
    let spec = BasisSpec::new(cfg.interior_knots, grid[0], grid[grid.len() - 1])?;

    prepare_out(&args.common.out)?;
    let mut manifest = RunManifest::start("fit", &cfg, cfg.seed, &inputs)?;
    let init = init_coeffs(&series, &spec, cfg.p, cfg.init)?;
    let started = Instant::now();
    let result = fit(&series, &spec, &cfg.fit, &init)?;
    manifest.fits.push(FitTiming {
        label: "fit".into(),
        seconds: started.elapsed().as_secs_f64(),
        sweeps: result.sweeps_used,
        converged: result.converged,
        final_f: result.final_f,
    });

    let out = &args.common.out;
    io::write_file(&out.join("coefficients.csv"), |w| io::write_coeffs(w, &result.coeffs))?;
    let sidecar = CoeffSidecar {
        n: series.n(),
        p: cfg.p,
        q: spec.q(),
        interior_knots: cfg.interior_knots,
        domain: spec.domain(),
        seed: cfg.seed,
        init: cfg.init,
        config: cfg.fit.clone(),
        labels: series.labels().map(<[String]>::to_vec),
    };
    io::write_json(&out.join("coefficients.json"), &sidecar)?;
    io::write_file(&out.join("dissimilarities.csv"), |w| io::write_dissim_long(w, &series))?;
    io::write_file(&out.join("super_matrix.csv"), |w| io::write_super_matrix(w, &series))?;
    io::write_json(
        &out.join("fit.json"),
        &FitSummary {
            n: series.n(),
            m: series.m(),
            initial_f: result.initial_f,
            final_f: result.final_f,
            sweeps_used: result.sweeps_used,
            converged: result.converged,
            pair_steps: result.pair_steps,
            capped_pairs: result.capped_pairs,
            loss_trace: result.loss_trace.clone(),
            change_trace: result.change_trace.clone(),
        },
    )?;
    let sup = series.super_matrix();
    manifest.details = serde_json::json!({
        "n": series.n(),
        "m": series.m(),
        "super_matrix_rows": sup.rows(),
        "super_matrix_cols": sup.cols(),
    });
    manifest.outputs = ["coefficients.csv", "coefficients.json", "dissimilarities.csv", "super_matrix.csv", "fit.json"]
        .map(String::from)
        .to_vec();
    manifest.finish(out)
}

struct Loaded {
    coeffs: CoeffSet,
    sidecar: CoeffSidecar,
    spec: BasisSpec,
    inputs: Vec<PathBuf>,
}

fn load_coeffs(input: &CoeffInput) -> Result<Loaded> {
    let sidecar_path = input
        .sidecar
        .clone()
        .unwrap_or_else(|| input.coeffs.with_extension("json"));
    let coeffs = io::read_coeffs(io::open(&input.coeffs)?)
        .with_context(|| format!("reading {}", input.coeffs.display()))?;
    let sidecar: CoeffSidecar =
        io::read_json(&sidecar_path).with_context(|| format!("reading {}", sidecar_path.display()))?;
    if coeffs.shape() != (sidecar.n, sidecar.p, sidecar.q) {
        bail!(
            "coefficients have shape {:?} but the sidecar says ({}, {}, {})",
            coeffs.shape(),
            sidecar.n,
            sidecar.p,
            sidecar.q
        );
    }
    let spec = sidecar.spec()?;
    Ok(Loaded {
        coeffs,
        sidecar,
        spec,
        inputs: vec![input.coeffs.clone(), sidecar_path],
    })
}

fn read_series(path: &Path) -> Result<DissimilaritySeries> {
    io::read_dissim_long(io::open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn cmd_snapshot(args: SnapshotArgs) -> Result<()> {
    let (cfg, mut inputs) = RunConfig::resolve(&args.common, false)?;
    let loaded = load_coeffs(&args.input)?;
    inputs.extend(loaded.inputs.iter().cloned());
    let out = &args.common.out;
    prepare_out(out)?;
    let mut manifest = RunManifest::start("snapshot", &cfg, cfg.seed, &inputs)?;
    let label = |i: usize| loaded.sidecar.label(i);
    for &t in &args.t {
        let rows = report::snapshot(&loaded.coeffs, &loaded.spec, &[t])?;
        let name = format!("snapshot_t{t}.csv");
        io::write_file(&out.join(&name), |w| io::write_snapshot(w, &rows, &label))?;
        manifest.outputs.push(name);
    }
    manifest.finish(out)
}

#[derive(Debug, Serialize)]
struct ClusterExport {
    center: String,
    threshold: f64,
    t: f64,
    red: Vec<String>,
    blue: Vec<String>,
}

fn cmd_cluster(args: ClusterArgs) -> Result<()> {
    let (cfg, mut inputs) = RunConfig::resolve(&args.common, false)?;
    let loaded = load_coeffs(&args.input)?;
    inputs.extend(loaded.inputs.iter().cloned());
    let center = loaded.sidecar.resolve(&args.center)?;
    if !(args.threshold > 0.0) {
        return Err(usage("--threshold must be positive"));
    }
    let out = &args.common.out;
    prepare_out(out)?;
    let mut manifest = RunManifest::start("cluster", &cfg, cfg.seed, &inputs)?;
    let rep = report::cluster(&loaded.coeffs, &loaded.spec, center, args.threshold, args.t)?;
    let label = |i: usize| loaded.sidecar.label(i);
    io::write_file(&out.join("cluster.csv"), |w| io::write_cluster(w, &rep, &label))?;
    io::write_json(
        &out.join("cluster.json"),
        &ClusterExport {
            center: label(center),
            threshold: rep.threshold,
            t: rep.t,
            red: rep.red.iter().map(|r| label(r.0)).collect(),
            blue: rep.blue.iter().map(|r| label(r.0)).collect(),
        },
    )?;
    manifest.outputs = vec!["cluster.csv".into(), "cluster.json".into()];
    manifest.finish(out)
}

fn cmd_shepard(args: ShepardArgs) -> Result<()> {
    let (cfg, mut inputs) = RunConfig::resolve(&args.common, false)?;
    let loaded = load_coeffs(&args.input)?;
    inputs.extend(loaded.inputs.iter().cloned());
    inputs.push(args.dissim.clone());
    let series = read_series(&args.dissim)?;
    let out = &args.common.out;
    prepare_out(out)?;
    let mut manifest = RunManifest::start("shepard", &cfg, cfg.seed, &inputs)?;
    let mut rows = report::shepard(&loaded.coeffs, &loaded.spec, &series)?;
    let mut grid = series.grid().to_vec();
    if let Some(t) = args.t {
        if !grid.contains(&t) {
            bail!("t = {t} is not a time point of {}", args.dissim.display());
        }
        rows.retain(|r| r.t == t);
        grid = vec![t];
    }
    io::write_file(&out.join("shepard.csv"), |w| io::write_shepard(w, &rows))?;
    // a correlation is undefined when every value in a slice is equal
    let correlations: Vec<Option<f64>> = grid
        .iter()
        .map(|&t| report::shepard_correlations(&rows, &[t]).ok().map(|c| c[0]))
        .collect();
    manifest.details = serde_json::json!({ "t": grid, "correlation": correlations });
    manifest.outputs = vec!["shepard.csv".into()];
    manifest.finish(out)
}

fn cmd_residuals(args: ResidualArgs) -> Result<()> {
    let (cfg, mut inputs) = RunConfig::resolve(&args.common, false)?;
    let loaded = load_coeffs(&args.input)?;
    inputs.extend(loaded.inputs.iter().cloned());
    inputs.push(args.dissim.clone());
    let series = read_series(&args.dissim)?;
    if !(args.tolerance >= 0.0) {
        return Err(usage("--tolerance must be nonnegative"));
    }
    let out = &args.common.out;
    prepare_out(out)?;
    let mut manifest = RunManifest::start("residuals", &cfg, cfg.seed, &inputs)?;
    let rep = report::residuals(&loaded.coeffs, &loaded.spec, &series, args.tolerance)?;
    io::write_file(&out.join("residuals.csv"), |w| io::write_residuals(w, &rep))?;
    io::write_json(&out.join("residual_summary.json"), &rep.summary)?;
    manifest.outputs = vec!["residuals.csv".into(), "residual_summary.json".into()];
    manifest.finish(out)
}

fn cmd_align(args: AlignArgs) -> Result<()> {
    let (cfg, mut inputs) = RunConfig::resolve(&args.common, false)?;
    let sidecar_path = args
        .sidecar
        .clone()
        .unwrap_or_else(|| args.fitted.with_extension("json"));
    let sidecar: CoeffSidecar =
        io::read_json(&sidecar_path).with_context(|| format!("reading {}", sidecar_path.display()))?;
    let spec = sidecar.spec()?;
    let fitted = io::read_coeffs(io::open(&args.fitted)?)
        .with_context(|| format!("reading {}", args.fitted.display()))?;
    let truth = io::read_coeffs(io::open(&args.truth)?)
        .with_context(|| format!("reading {}", args.truth.display()))?;
    inputs.extend([args.fitted.clone(), args.truth.clone(), sidecar_path]);
    let m = match args.m {
        Some(m) => m,
        None => {
            let (lo, hi) = spec.domain();
            if lo != 1.0 || hi.fract() != 0.0 {
                return Err(usage(format!(
                    "domain [{lo}, {hi}] is not [1, m] for an integer m; pass --m"
                )));
            }
            hi as usize
        }
    };
    let out = &args.common.out;
    prepare_out(out)?;
    let mut manifest = RunManifest::start("align", &cfg, cfg.seed, &inputs)?;
    let result = fmds::align(&fitted, &truth, &spec, m, &cfg.align)?;
    io::write_json(&out.join("alignment.json"), &AlignmentExport::from(&result))?;
    manifest.outputs = vec!["alignment.json".into()];
    manifest.finish(out)
}
