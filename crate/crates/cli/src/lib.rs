//! Command-line front end: CSV ingestion, configuration, method dispatch and
//! output serialization.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use log::warn;
use serde::Serialize;

use predset_core::conformal::{inductive_cp_threshold, CalibrationSet, WeightedCalibration};
use predset_core::crossfit::odds_weight;
use predset_core::rejsamp::{rs_estimate, rs_prepare};
use predset_core::simbench::{oracle_tau0, run_study, OracleSample, Population};
use predset_core::table::{CoverageTable, SelectedThreshold};
use predset_core::tmle::tmle_estimate;
use predset_core::{
    fit_nuisances, make_folds, onestep_estimate, plugin_estimate, select_threshold, weighted_plugin_estimate,
    BinaryLearnerSpec, BoundRule, DgpKind, DgpSpec, Method, ObservedSample, ObservedUnit, Purpose, RiskTargets,
    RngStream, RsConfig, StudyConfig, ThresholdGrid,
};

#[derive(Debug, Parser)]
#[command(name = "predset", version, about = "PAC prediction sets under covariate shift")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Key-value file of defaults (`key = value`, keys are flag names).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate coverage errors on a CSV sample and select a threshold.
    Fit(FitArgs),
    /// Run the simulation study.
    Simulate(SimulateArgs),
    /// Oracle coverage-error curve and optimal threshold for a DGP.
    Oracle(OracleArgs),
    /// Write a simulated sample in the input CSV format.
    Draw(DrawArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LearnerArg {
    Logistic,
    Stumps,
}

#[derive(Debug, Clone, Args)]
pub struct TargetArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha_error: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha_conf: f64,
    /// Threshold grid as `lo:hi:step`.
    #[arg(long, default_value = "0:0.3:0.05")]
    pub grid: String,
}

#[derive(Debug, Clone, Args)]
pub struct EstimationArgs {
    #[arg(long, default_value_t = 2)]
    pub folds: usize,
    /// Propensity truncation level.
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Multiplier on the largest test weight for the rejection bound.
    #[arg(long, default_value_t = 1.3)]
    pub bhat_mult: f64,
    /// Fixed rejection bound; overrides the multiplier rule.
    #[arg(long)]
    pub bhat_fixed: Option<f64>,
    #[arg(long, value_enum, default_value_t = LearnerArg::Logistic)]
    pub g_learner: LearnerArg,
    #[arg(long, value_enum, default_value_t = LearnerArg::Logistic)]
    pub e_learner: LearnerArg,
    /// Ridge penalty for the logistic learner.
    #[arg(long, default_value_t = 1e-6)]
    pub lambda: f64,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Table path; metadata goes to `<output>.meta.json`.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value = "onestep")]
    pub method: String,
    #[command(flatten)]
    pub targets: TargetArgs,
    #[command(flatten)]
    pub est: EstimationArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "lowdim")]
    pub dgp: String,
    /// Sample sizes, comma separated.
    #[arg(long, default_value = "1000")]
    pub n: String,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// Methods, comma separated, or `all`.
    #[arg(long, default_value = "all")]
    pub method: String,
    #[arg(long, default_value_t = 100_000)]
    pub oracle_m: usize,
    /// Output directory for `replications.jsonl`, `aggregate.csv` and `oracle.json`.
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub targets: TargetArgs,
    #[command(flatten)]
    pub est: EstimationArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[arg(long, default_value = "lowdim")]
    pub dgp: String,
    #[arg(long, default_value_t = 100_000)]
    pub oracle_m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV path; metadata goes to `<output>.meta.json`. Prints to stdout if absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub targets: TargetArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DrawArgs {
    #[arg(long, default_value = "lowdim")]
    pub dgp: String,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

/// Per-threshold numbers: 17 significant digits.
pub fn fmt_num(v: f64) -> anyhow::Result<String> {
    if !v.is_finite() {
        bail!("refusing to emit non-finite value {v}");
    }
    Ok(format!("{v:.16e}"))
}

pub fn parse_grid(spec: &str) -> anyhow::Result<ThresholdGrid> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("grid must be lo:hi:step, got '{spec}'");
    }
    let num = |s: &str| s.trim().parse::<f64>().with_context(|| format!("bad grid value '{s}'"));
    Ok(ThresholdGrid::linspace(num(parts[0])?, num(parts[1])?, num(parts[2])?)?)
}

fn learner(kind: LearnerArg, lambda: f64) -> BinaryLearnerSpec {
    match kind {
        LearnerArg::Logistic => BinaryLearnerSpec::logistic_ridge(lambda),
        LearnerArg::Stumps => BinaryLearnerSpec::boosted_stumps(100, 0.1, 1.0),
    }
}

fn bound_rule(est: &EstimationArgs) -> BoundRule {
    match est.bhat_fixed {
        Some(b) => BoundRule::Fixed(b),
        None => BoundRule::MaxTimes(est.bhat_mult),
    }
}

/// Sample plus non-fatal messages from [`ingest_csv`].
#[derive(Debug)]
pub struct Ingested {
    pub sample: ObservedSample,
    pub warnings: Vec<String>,
}

/// Reads the input format: columns `a`, `score` and `x1..xp`, any order.
/// Line numbers in messages count the header as line 1.
pub fn ingest_csv(path: &Path) -> anyhow::Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers = rdr.headers().context("cannot read header row")?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let a_col = col("a").ok_or_else(|| anyhow!("missing column 'a'"))?;
    let s_col = col("score").ok_or_else(|| anyhow!("missing column 'score'"))?;
    let mut x_cols = Vec::new();
    for j in 1.. {
        match col(&format!("x{j}")) {
            Some(c) => x_cols.push(c),
            None => break,
        }
    }
    if x_cols.is_empty() {
        bail!("missing covariate column 'x1'");
    }
    let mut warnings = Vec::new();
    for h in headers.iter() {
        let known = h == "a"
            || h == "score"
            || (h.starts_with('x') && h[1..].parse::<usize>().is_ok_and(|j| j >= 1 && j <= x_cols.len()));
        if !known {
            warnings.push(format!("ignoring column '{h}'"));
        }
    }

    let mut units = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.with_context(|| format!("line {line}: malformed record"))?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let num = |c: usize, name: &str| -> anyhow::Result<f64> {
            let s = field(c);
            let v: f64 = s
                .parse()
                .map_err(|_| anyhow!("line {line}: malformed number '{s}' in column '{name}'"))?;
            if !v.is_finite() {
                bail!("line {line}: non-finite value in column '{name}'");
            }
            Ok(v)
        };
        let x = x_cols
            .iter()
            .enumerate()
            .map(|(j, &c)| num(c, &format!("x{}", j + 1)))
            .collect::<anyhow::Result<Vec<f64>>>()?;
        let unit = match field(a_col) {
            "1" => {
                if field(s_col).is_empty() {
                    bail!("line {line}: source unit (a=1) has a blank score");
                }
                ObservedUnit::source(x, num(s_col, "score")?)
            }
            "0" => {
                if !field(s_col).is_empty() {
                    warnings.push(format!("line {line}: score given for a target unit (a=0) is ignored"));
                }
                ObservedUnit::target(x)
            }
            other => bail!("line {line}: column 'a' must be 0 or 1, got '{other}'"),
        };
        units.push(unit);
    }
    if units.is_empty() {
        bail!("no data rows after the header");
    }
    let last = units.len() + 1;
    let n1 = units.iter().filter(|u| u.is_source()).count();
    if n1 == 0 {
        bail!("lines 2-{last}: no source units (a=1); both populations are required");
    }
    if n1 == units.len() {
        bail!("lines 2-{last}: no target units (a=0); both populations are required");
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(Ingested {
        sample: ObservedSample::new(units)?,
        warnings,
    })
}

/// Writes a sample in the input format with round-trip exact numbers.
pub fn emit_csv(sample: &ObservedSample, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut header = vec!["a".to_string(), "score".to_string()];
    header.extend((1..=sample.dim()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for u in sample.units() {
        let mut rec = vec![
            u.a().to_string(),
            u.score().map(|s| format!("{s:?}")).unwrap_or_default(),
        ];
        rec.extend(u.x().iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct FitMeta {
    pub method: String,
    pub seed: u64,
    pub n: usize,
    pub n1: usize,
    pub n0: usize,
    pub folds: usize,
    pub delta: f64,
    pub alpha_error: f64,
    pub alpha_conf: f64,
    pub selected_tau: f64,
    pub sentinel: bool,
    pub flags: Vec<String>,
    pub learner_warnings: usize,
    pub notes: Vec<String>,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn write_table(path: &Path, table: &CoverageTable, selected: &SelectedThreshold) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["tau", "psi_hat", "se", "cub", "selected_flag"])?;
    let sel = match selected {
        SelectedThreshold::Grid { index, .. } => Some(*index),
        _ => None,
    };
    for (k, r) in table.rows.iter().enumerate() {
        w.write_record([
            fmt_num(r.tau)?,
            fmt_num(r.psi_hat)?,
            fmt_num(r.se)?,
            fmt_num(r.cub)?,
            if sel == Some(k) { "1" } else { "0" }.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_fit(args: &FitArgs) -> anyhow::Result<()> {
    let method = Method::parse(&args.method)?;
    let grid = parse_grid(&args.targets.grid)?;
    let targets = RiskTargets::new(args.targets.alpha_error, args.targets.alpha_conf)?;
    let est = &args.est;
    let sample = ingest_csv(&args.input)?.sample;
    let g_spec = learner(est.g_learner, est.lambda);
    let e_spec = learner(est.e_learner, est.lambda);
    let base = RngStream::new(est.seed, Purpose::User, 0);

    let mut meta = FitMeta {
        method: method.name().into(),
        seed: est.seed,
        n: sample.len(),
        n1: sample.n_source(),
        n0: sample.n_target(),
        folds: est.folds,
        delta: est.delta,
        alpha_error: targets.alpha_error(),
        alpha_conf: targets.alpha_conf(),
        selected_tau: 0.0,
        sentinel: false,
        flags: Vec::new(),
        learner_warnings: 0,
        notes: Vec::new(),
    };

    if method == Method::Rs {
        let cfg = RsConfig {
            train_fraction: 0.5,
            bound: bound_rule(est),
            delta: est.delta,
            g_spec,
            e_spec,
        };
        let run = rs_prepare(&sample, &cfg, &grid, &base)?;
        let table = rs_estimate(&run, &sample, &targets)?;
        let d = select_threshold(&table, &targets);
        meta.selected_tau = d.tau_hat();
        meta.sentinel = d.selected.is_sentinel();
        meta.notes
            .push(format!("bound {:.4}, accepted {} units", run.bhat, run.accepted.len()));
        write_table(&args.output, &table, &d.selected)?;
        return write_json(&sidecar(&args.output), &meta);
    }

    let folds = make_folds(sample.len(), est.folds, &base.with_purpose(Purpose::Folds))?;
    let fits = fit_nuisances(&sample, &folds, &grid, &g_spec, &e_spec, est.delta, &base)?;
    meta.learner_warnings = fits.learner_warnings();
    let table = match method {
        Method::OneStep => Some(onestep_estimate(&sample, &folds, &grid, &fits, &targets)?),
        Method::Tmle => {
            meta.notes
                .push("least-squares targeted values are clipped to [0, 1] for psi_hat only".into());
            Some(tmle_estimate(&sample, &folds, &grid, &fits, &targets)?)
        }
        Method::Plugin => Some(plugin_estimate(&sample, &folds, &grid, &fits, &targets)?),
        Method::WeightedPlugin => Some(weighted_plugin_estimate(&sample, &folds, &grid, &fits, &targets)?),
        _ => None,
    };
    if let Some(table) = table {
        let d = select_threshold(&table, &targets);
        meta.selected_tau = d.tau_hat();
        meta.sentinel = d.selected.is_sentinel();
        meta.flags = table.flags.clone();
        write_table(&args.output, &table, &d.selected)?;
        return write_json(&sidecar(&args.output), &meta);
    }

    // conformal baselines calibrate on the source units of fold 1
    let cal: Vec<usize> = folds
        .indices(1)
        .iter()
        .copied()
        .filter(|&i| sample.unit(i).is_source())
        .collect();
    if cal.is_empty() {
        bail!("fold 1 has no source units to calibrate on");
    }
    let scores: Vec<f64> = cal.iter().map(|&i| sample.unit(i).score().expect("source")).collect();
    meta.notes.push(format!("calibrated on {} source units", cal.len()));
    if method == Method::InductiveCp {
        match inductive_cp_threshold(&CalibrationSet::new(scores)?, &targets) {
            Some(t) => meta.selected_tau = t,
            None => meta.sentinel = true,
        }
        let mut w = csv::Writer::from_path(&args.output)?;
        w.write_record(["tau", "psi_hat", "se", "cub", "selected_flag"])?;
        w.flush()?;
        return write_json(&sidecar(&args.output), &meta);
    }

    let gamma = cal.len() as f64 / folds.indices(1).len() as f64;
    let weight = |x: &[f64]| odds_weight(fits.propensity(1, x), gamma);
    let weights = cal
        .iter()
        .map(|&i| weight(sample.unit(i).x()))
        .collect::<Result<Vec<_>, _>>()?;
    let wc = WeightedCalibration::new(&scores, &weights)?;
    let mut w = csv::Writer::from_path(&args.output)?;
    w.write_record(["row", "cutoff", "full_set"])?;
    for (i, u) in sample.units().iter().enumerate() {
        if u.is_source() {
            continue;
        }
        let t = wc.cutoff(weight(u.x())?, targets.alpha_error())?;
        let full = t == f64::NEG_INFINITY;
        w.write_record([
            (i + 2).to_string(),
            fmt_num(if full { 0.0 } else { t })?,
            (full as u8).to_string(),
        ])?;
    }
    w.flush()?;
    let reference = wc.cutoff(1.0, targets.alpha_error())?;
    meta.sentinel = reference == f64::NEG_INFINITY;
    meta.selected_tau = if meta.sentinel { 0.0 } else { reference };
    meta.notes
        .push("selected_tau is the cutoff for a unit-weight test point; rows are input line numbers".into());
    write_json(&sidecar(&args.output), &meta)
}

pub fn parse_methods(s: &str) -> anyhow::Result<Vec<Method>> {
    if s == "all" {
        return Ok(Method::ALL.to_vec());
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for part in s.split(',') {
        let m = Method::parse(part.trim())?;
        if seen.insert(m) {
            out.push(m);
        }
    }
    Ok(out)
}

pub fn simulate_config(args: &SimulateArgs) -> anyhow::Result<StudyConfig> {
    let est = &args.est;
    let ns = args
        .n
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .with_context(|| format!("bad sample size '{s}'"))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let cfg = StudyConfig {
        ns,
        reps: args.reps,
        methods: parse_methods(&args.method)?,
        targets: RiskTargets::new(args.targets.alpha_error, args.targets.alpha_conf)?,
        grid: parse_grid(&args.targets.grid)?,
        folds: est.folds,
        delta: est.delta,
        g_spec: learner(est.g_learner, est.lambda),
        e_spec: learner(est.e_learner, est.lambda),
        rs_bound: bound_rule(est),
        oracle_m: args.oracle_m,
        seed: est.seed,
        ..StudyConfig::new(DgpSpec::new(DgpKind::parse(&args.dgp)?))
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let cfg = simulate_config(args)?;
    let report = run_study(&cfg)?;
    fs::create_dir_all(&args.output).with_context(|| format!("cannot create {}", args.output.display()))?;

    let mut rows = fs::File::create(args.output.join("replications.jsonl"))?;
    for r in &report.rows {
        serde_json::to_writer(&mut rows, r)?;
        writeln!(rows)?;
    }

    let mut w = csv::Writer::from_path(args.output.join("aggregate.csv"))?;
    w.write_record([
        "n",
        "method",
        "reps",
        "successes",
        "failures",
        "sentinels",
        "proportion",
        "wilson_lo",
        "wilson_hi",
        "mean_tau_hat",
        "mean_psi_true",
    ])?;
    for a in &report.aggregates {
        w.write_record([
            a.n.to_string(),
            a.method.name().to_string(),
            a.reps.to_string(),
            a.successes.to_string(),
            a.failures.to_string(),
            a.sentinels.to_string(),
            fmt_num(a.proportion)?,
            fmt_num(a.wilson_lo)?,
            fmt_num(a.wilson_hi)?,
            fmt_num(a.mean_tau_hat)?,
            fmt_num(a.mean_psi_true)?,
        ])?;
    }
    w.flush()?;

    #[derive(Serialize)]
    struct OracleOut<'a> {
        dgp: &'a str,
        m: usize,
        tau0: f64,
        psi_grid: &'a [(f64, f64)],
        psi_method: &'static str,
        tau0_method: &'static str,
    }
    write_json(
        &args.output.join("oracle.json"),
        &OracleOut {
            dgp: cfg.dgp.kind.name(),
            m: report.oracle.m,
            tau0: report.oracle.tau0,
            psi_grid: &report.oracle.psi_grid,
            psi_method: "labels integrated analytically over covariate draws",
            tau0_method: "empirical quantile of scores with sampled labels",
        },
    )?;

    for a in &report.aggregates {
        println!(
            "n={:<6} {:<8} proportion {:.4} [{:.4}, {:.4}] failures {}",
            a.n,
            a.method.name(),
            a.proportion,
            a.wilson_lo,
            a.wilson_hi,
            a.failures
        );
    }
    Ok(())
}

pub fn cmd_oracle(args: &OracleArgs) -> anyhow::Result<()> {
    let spec = DgpSpec::new(DgpKind::parse(&args.dgp)?);
    let grid = parse_grid(&args.targets.grid)?;
    let alpha = args.targets.alpha_error;
    let os = OracleSample::draw(
        &spec,
        Population::Target,
        args.oracle_m,
        &RngStream::new(args.seed, Purpose::Oracle, 0),
    )?;
    let curve = os.curve();
    let tau0 = oracle_tau0(
        &spec,
        alpha,
        args.oracle_m,
        &RngStream::new(args.seed, Purpose::Oracle, 1),
        Population::Target,
    )?;

    let mut out: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["tau", "psi"])?;
    for &t in grid.taus() {
        w.write_record([fmt_num(t)?, fmt_num(curve.psi(t))?])?;
    }
    w.flush()?;
    drop(w);
    #[derive(Serialize)]
    struct Meta<'a> {
        dgp: &'a str,
        m: usize,
        seed: u64,
        alpha_error: f64,
        tau0: f64,
    }
    let meta = Meta {
        dgp: spec.kind.name(),
        m: args.oracle_m,
        seed: args.seed,
        alpha_error: alpha,
        tau0,
    };
    match &args.output {
        Some(p) => write_json(&sidecar(p), &meta)?,
        None => println!("tau0,{}", fmt_num(tau0)?),
    }
    Ok(())
}

pub fn cmd_draw(args: &DrawArgs) -> anyhow::Result<()> {
    let spec = DgpSpec::new(DgpKind::parse(&args.dgp)?);
    let sample = spec.draw(args.n, &RngStream::new(args.seed, Purpose::DgpDraw, 0))?;
    emit_csv(&sample, &args.output)
}

/// Reads a config file into `--key value` arguments, rejecting keys the
/// subcommand does not accept.
pub fn config_args(path: &Path, subcommand: &str) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(subcommand)
        .ok_or_else(|| anyhow!("unknown subcommand '{subcommand}'"))?;
    let known: BTreeSet<String> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .filter(|l| l != "config")
        .collect();
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected key = value", path.display(), k + 1))?;
        let key = key.trim().replace('_', "-");
        if !known.contains(&key) {
            bail!("{}:{}: unknown key '{key}' for '{subcommand}'", path.display(), k + 1);
        }
        out.push(format!("--{key}"));
        out.push(value.trim().to_string());
    }
    Ok(out)
}

/// Parses `argv`, merging a config file so that command-line flags win.
pub fn parse_args(argv: Vec<String>) -> anyhow::Result<Cli> {
    let first = Cli::try_parse_from(&argv).map_err(|e| anyhow!(e.render().to_string()))?;
    let Some(path) = first.config.clone() else {
        return Ok(first);
    };
    let sub = match first.command {
        Command::Fit(_) => "fit",
        Command::Simulate(_) => "simulate",
        Command::Oracle(_) => "oracle",
        Command::Draw(_) => "draw",
    };
    let pos = argv
        .iter()
        .position(|a| a == sub)
        .ok_or_else(|| anyhow!("cannot locate subcommand"))?;
    let mut merged = argv[..=pos].to_vec();
    merged.extend(config_args(&path, sub)?);
    merged.extend(argv[pos + 1..].iter().cloned());
    Cli::try_parse_from(&merged).map_err(|e| anyhow!(e.render().to_string()))
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Draw(a) => cmd_draw(a),
    }
}
