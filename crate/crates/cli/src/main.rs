//! Command-line front end: configuration, subcommands, deterministic
//! seeding, and bit-stable CSV/JSONL emission.
//!
//! Exit codes: 0 success, 1 usage/configuration, 2 numeric or domain
//! error, 3 resource budget exceeded.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use uerw_core::{
    big_c, build_forest, checkpoint_grid, clt_sample, eta_coefficient, ks_distance,
    moment_series, normal_cdf, run_ensemble, run_replicas, simulate, EnsembleOptions, Error,
    IndexSet, LinkMode, ModelParams, SimOptions,
};

const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "uerw",
    version,
    about = "Simulation laboratory for a unidirectional elephant random walk with power-law memory"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one trajectory and emit its checkpoint CSV.
    Simulate(CommonArgs),
    /// Run an ensemble; emit a JSON report (plus a per-checkpoint CSV with --out).
    Ensemble(CommonArgs),
    /// Exact moment recursions; emit CSV.
    Moments(CommonArgs),
    /// Standardized fluctuation sample; emit CSV plus a KS summary JSON.
    Clt(CommonArgs),
    /// Ancestry clusters of one link-tracked trajectory; emit JSONL.
    Genealogy(CommonArgs),
    /// Print the regime classification and derived constants for (p, beta).
    Regime(CommonArgs),
}

impl Cmd {
    fn args(&self) -> &CommonArgs {
        match self {
            Cmd::Simulate(a) | Cmd::Ensemble(a) | Cmd::Moments(a) | Cmd::Clt(a)
            | Cmd::Genealogy(a) | Cmd::Regime(a) => a,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Cmd::Simulate(_) => "simulate",
            Cmd::Ensemble(_) => "ensemble",
            Cmd::Moments(_) => "moments",
            Cmd::Clt(_) => "clt",
            Cmd::Genealogy(_) => "genealogy",
            Cmd::Regime(_) => "regime",
        }
    }
}

/// Every field is optional; defaults are filled after merging flags over the
/// config file. JSON keys mirror the long flags with underscores.
#[derive(Args, Serialize, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields, default)]
struct CommonArgs {
    /// JSON config file; flags win on conflict.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    /// Horizon n_max.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    /// Master seed; replica r derives its stream from (seed, r).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "checkpoint-ratio")]
    checkpoint_ratio: Option<f64>,
    #[arg(long = "n-eval")]
    n_eval: Option<u64>,
    #[arg(long = "n-ref")]
    n_ref: Option<u64>,
    /// Extinction tail probability.
    #[arg(long)]
    delta: Option<f64>,
    /// Index set: `all`, `arith:a,d`, `file:<path>`, `complement-file:<path>`.
    #[arg(long = "index-set")]
    index_set: Option<String>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

impl CommonArgs {
    fn merge_over(self, base: CommonArgs) -> CommonArgs {
        CommonArgs {
            config: self.config,
            p: self.p.or(base.p),
            beta: self.beta.or(base.beta),
            steps: self.steps.or(base.steps),
            replicas: self.replicas.or(base.replicas),
            seed: self.seed.or(base.seed),
            checkpoint_ratio: self.checkpoint_ratio.or(base.checkpoint_ratio),
            n_eval: self.n_eval.or(base.n_eval),
            n_ref: self.n_ref.or(base.n_ref),
            delta: self.delta.or(base.delta),
            index_set: self.index_set.or(base.index_set),
            out: self.out.or(base.out),
            threads: self.threads.or(base.threads),
        }
    }
}

/// Fully resolved configuration, embedded verbatim in every output.
#[derive(Serialize, Clone)]
struct RunConfig {
    artifact_version: &'static str,
    subcommand: &'static str,
    p: f64,
    beta: f64,
    steps: u64,
    replicas: u64,
    seed: u64,
    checkpoint_ratio: f64,
    n_eval: Option<u64>,
    n_ref: Option<u64>,
    delta: f64,
    index_set: String,
    threads: Option<usize>,
}

fn resolve(cmd: &Cmd) -> Result<(RunConfig, ModelParams, Option<PathBuf>), Error> {
    let mut args = cmd.args().clone();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let file: CommonArgs = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?;
        args = args.merge_over(file);
    }
    let p = args.p.ok_or_else(|| Error::Config("--p is required".into()))?;
    let beta = args.beta.ok_or_else(|| Error::Config("--beta is required".into()))?;
    let params = ModelParams::new(p, beta)?;
    let n_eval = args.n_eval;
    let n_ref = args.n_ref.or(n_eval.map(|n| 4 * n));
    let config = RunConfig {
        artifact_version: ARTIFACT_VERSION,
        subcommand: cmd.name(),
        p,
        beta,
        steps: args.steps.unwrap_or(1_000),
        replicas: args.replicas.unwrap_or(100),
        seed: args.seed.unwrap_or(0),
        checkpoint_ratio: args.checkpoint_ratio.unwrap_or(1.2),
        n_eval,
        n_ref,
        delta: args.delta.unwrap_or(uerw_core::DEFAULT_DELTA),
        index_set: args.index_set.unwrap_or_else(|| "all".into()),
        threads: args.threads,
    };
    if config.checkpoint_ratio <= 1.0 || !config.checkpoint_ratio.is_finite() {
        return Err(Error::Config(format!(
            "checkpoint-ratio must be > 1, got {}",
            config.checkpoint_ratio
        )));
    }
    Ok((config, params, args.out))
}

fn parse_index_set(spec: &str) -> Result<IndexSet, Error> {
    let set = if spec == "all" {
        IndexSet::All
    } else if let Some(rest) = spec.strip_prefix("arith:") {
        let (a, d) = rest
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("index set `{spec}`: want arith:a,d")))?;
        let start = a
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("index set `{spec}`: {e}")))?;
        let step = d
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("index set `{spec}`: {e}")))?;
        IndexSet::Arithmetic { start, step }
    } else if let Some(path) = spec.strip_prefix("complement-file:") {
        IndexSet::Complement(read_int_file(path)?)
    } else if let Some(path) = spec.strip_prefix("file:") {
        IndexSet::Members(read_int_file(path)?)
    } else {
        return Err(Error::Config(format!(
            "unknown index set `{spec}`; expected all, arith:a,d, file:<path>, complement-file:<path>"
        )));
    };
    set.validate()?;
    Ok(set)
}

fn read_int_file(path: &str) -> Result<Vec<u64>, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read index file {path}: {e}")))?;
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<u64>()
                .map_err(|e| Error::Config(format!("index file {path}: `{tok}`: {e}")))
        })
        .collect()
}

/// 17 significant digits: enough for a bit-stable f64 round-trip.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn config_header(config: &RunConfig) -> String {
    format!(
        "# config: {}\n",
        serde_json::to_string(config).expect("config serializes")
    )
}

fn emit(out: Option<&Path>, content: &str) -> Result<(), Error> {
    match out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(path) => fs::write(path, content)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display()))),
    }
}

fn sim_options(config: &RunConfig) -> SimOptions {
    SimOptions {
        checkpoint_ratio: config.checkpoint_ratio,
        ..SimOptions::default()
    }
}

fn run_simulate(config: &RunConfig, params: ModelParams, out: Option<&Path>) -> Result<(), Error> {
    let traj = simulate(params, config.steps, config.seed, &sim_options(config))?;
    let mut csv = config_header(config);
    csv.push_str("n,S,Sigma,M\n");
    for c in traj.checkpoints() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            c.n,
            c.s,
            fmt_f64(c.sigma),
            fmt_f64(c.martingale)
        ));
    }
    emit(out, &csv)
}

fn ensemble_options(config: &RunConfig, with_clt: bool) -> EnsembleOptions {
    EnsembleOptions {
        sim: sim_options(config),
        delta: config.delta,
        threads: config.threads,
        clt: if with_clt {
            config.n_eval.zip(config.n_ref)
        } else {
            None
        },
        ..EnsembleOptions::default()
    }
}

fn run_ensemble_cmd(
    config: &RunConfig,
    params: ModelParams,
    out: Option<&Path>,
) -> Result<(), Error> {
    let opts = ensemble_options(config, true);
    let report = run_ensemble(params, config.steps, config.replicas, config.seed, &opts)?;
    let doc = serde_json::json!({ "config": config, "report": report });
    let json = format!("{}\n", serde_json::to_string_pretty(&doc).expect("report serializes"));
    emit(out, &json)?;
    if let Some(path) = out {
        let mut csv = config_header(config);
        csv.push_str("n,mean_S,mean_M,S_q10,S_median,S_q90\n");
        for c in &report.checkpoints {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.n,
                fmt_f64(c.mean_s),
                fmt_f64(c.mean_m),
                fmt_f64(c.s_q10),
                fmt_f64(c.s_median),
                fmt_f64(c.s_q90)
            ));
        }
        emit(Some(&path.with_extension("csv")), &csv)?;
    }
    Ok(())
}

fn run_moments(config: &RunConfig, params: ModelParams, out: Option<&Path>) -> Result<(), Error> {
    let set = parse_index_set(&config.index_set)?;
    let grid = checkpoint_grid(config.steps, config.checkpoint_ratio);
    let series = moment_series(&params, &set, &grid)?;
    let mut csv = config_header(config);
    csv.push_str("n,E_S,E_Sigma,E_Xi2,ratio\n");
    for (i, &n) in series.grid.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            n,
            fmt_f64(series.e_s[i]),
            fmt_f64(series.e_xi[i]),
            fmt_f64(series.e_xi2[i]),
            fmt_f64(series.ratio[i])
        ));
    }
    emit(out, &csv)
}

fn run_clt(config: &RunConfig, params: ModelParams, out: Option<&Path>) -> Result<(), Error> {
    let n_eval = config
        .n_eval
        .ok_or_else(|| Error::Config("clt requires --n-eval".into()))?;
    let n_ref = config.n_ref.expect("defaulted from n_eval");
    if n_ref > config.steps {
        return Err(Error::Config(format!(
            "n_ref = {n_ref} exceeds the horizon --steps = {}",
            config.steps
        )));
    }
    let mut opts = ensemble_options(config, false);
    opts.clt = Some((n_eval, n_ref));
    let reps = run_replicas(params, config.steps, config.replicas, config.seed, &opts)?;
    let sample = clt_sample(&params, &reps, n_eval, n_ref)?;
    let mut csv = config_header(config);
    csv.push_str("z,z_raw,w_scaled\n");
    for i in 0..sample.z.len() {
        csv.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(sample.z[i]),
            fmt_f64(sample.z_raw[i]),
            fmt_f64(sample.w_scaled[i])
        ));
    }
    emit(out, &csv)?;
    let ks = ks_distance(&sample.z, normal_cdf)?;
    let ks_raw = ks_distance(&sample.z_raw, normal_cdf)?;
    let summary = serde_json::json!({
        "config": config,
        "n_eval": n_eval,
        "n_ref": n_ref,
        "sample_size": sample.z.len(),
        "excluded_zero_eta": sample.excluded_zero_eta,
        "excluded_nonsurviving": sample.excluded_nonsurviving,
        "ks": ks,
        "ks_raw": ks_raw,
    });
    let json = format!("{}\n", serde_json::to_string_pretty(&summary).expect("summary"));
    match out {
        None => {
            print!("{json}");
            Ok(())
        }
        Some(path) => {
            let mut sibling = path.as_os_str().to_owned();
            sibling.push(".summary.json");
            emit(Some(Path::new(&sibling)), &json)
        }
    }
}

fn run_genealogy(config: &RunConfig, params: ModelParams, out: Option<&Path>) -> Result<(), Error> {
    let opts = SimOptions {
        track_links: true,
        ..sim_options(config)
    };
    let traj = simulate(params, config.steps, config.seed, &opts)?;
    let forest = build_forest(&traj, LinkMode::Effective)?;
    let grid = checkpoint_grid(config.steps, config.checkpoint_ratio);
    // theta enters only as the growth normalization; fall back to 0 (raw
    // counts) outside the growth regimes.
    let theta = params.theta().max(0.0);
    let mut lines = config_header(config);
    for level in 0..=1u32 {
        let roots = forest.level_set(level, traj.n());
        for (j, &root) in roots.iter().enumerate() {
            let members = forest.cluster(level, j + 1, traj.n())?;
            let growth: Vec<f64> = forest
                .cluster_growth_profile(level, j + 1, theta, &grid)?
                .into_iter()
                .map(|(_, v)| v)
                .collect();
            let record = serde_json::json!({
                "level": level,
                "root": root,
                "size": members.len(),
                "growth": growth,
            });
            lines.push_str(&serde_json::to_string(&record).expect("record"));
            lines.push('\n');
        }
    }
    emit(out, &lines)
}

fn run_regime(config: &RunConfig, params: ModelParams, out: Option<&Path>) -> Result<(), Error> {
    let doc = serde_json::json!({
        "config": config,
        "regime": params.regime().name(),
        "theta": params.theta(),
        "gamma": params.gamma(),
        "C": big_c(&params).ok(),
        "eta_coefficient": eta_coefficient(&params).ok(),
    });
    emit(
        out,
        &format!("{}\n", serde_json::to_string_pretty(&doc).expect("regime doc")),
    )
}

fn dispatch(cmd: &Cmd) -> Result<(), Error> {
    let (config, params, out) = resolve(cmd)?;
    let out = out.as_deref();
    match cmd {
        Cmd::Simulate(_) => run_simulate(&config, params, out),
        Cmd::Ensemble(_) => run_ensemble_cmd(&config, params, out),
        Cmd::Moments(_) => run_moments(&config, params, out),
        Cmd::Clt(_) => run_clt(&config, params, out),
        Cmd::Genealogy(_) => run_genealogy(&config, params, out),
        Cmd::Regime(_) => run_regime(&config, params, out),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Resource(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's default exit code for usage errors is 2; this tool
            // reserves 2 for numeric errors and reports usage as 1.
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(&cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
