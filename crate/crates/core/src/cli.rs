//! Command-line front end: flags, config merging, dispatch and output files.
//!
//! Every command writes its table to `<out>/<command>.csv` (or `.json`) and
//! prints one `key=value` summary line on stdout. Exit codes: 0 success,
//! 2 configuration error, 3 domain error, 4 numeric-quality failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;

use crate::collective::{collective_discrepancy, CollectiveDistribution, CollectiveSetup};
use crate::config::{parse_config, Command, ConfigError, Format, GridSpec, RunConfig};
use crate::error::Error;
use crate::fit::{extrapolate_even, log_log_slope, LinearFit};
use crate::io::{num, to_json_bytes, write_bytes, Table};
use crate::lindblad::{gdi_diagnostic, leading_error_term, KrausFamily};
use crate::montecarlo::{
    analytic_targets, compare, run, EstimatorCheck, ExperimentRecord, Protocol, ProtocolPlan, RunOptions,
    ThresholdSetup, TrialPlan, TrialStatistics, AnalyticTargets,
};
use crate::pointer::Basis;
use crate::protocols::{
    conditional_mean, disturbance_report, kick_postselection_probability, postselected_pointer,
    postselection_probability, sequential_cross_coefficient, sequential_moments, sequential_order_gap,
    MeasurementSetup, SequentialSetup,
};
use crate::quadrature::trapezoid;
use crate::quantum::{anomalous_pair, anomalous_pair_from, weak_value, WeakValuePart};

#[derive(Debug, Parser)]
#[command(name = "weakval", version, about = "Weak measurements with post-selection")]
pub struct Args {
    /// Command to run; may instead be given as "command" in the config.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// Config file, or inline JSON starting with '{'.
    #[arg(long)]
    pub config: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores); results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Single coupling; also replaces the coupling grid.
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Comma-separated coupling grid.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub lambda_grid: Option<Vec<f64>>,
    /// Number of Monte Carlo trials (accepts forms like 1e6).
    #[arg(long, value_parser = parse_count)]
    pub trials: Option<usize>,
    #[arg(long, value_enum)]
    pub basis: Option<Basis>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Protocol for `simulate`.
    #[arg(long, value_enum)]
    pub protocol: Option<Protocol>,
}

fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 1.0 && v.fract() == 0.0 && v <= 1e15 => Ok(v as usize),
        _ => Err(format!("`{s}` is not a positive whole number")),
    }
}

/// A failed run, mapped to an exit code.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Domain(Error),
    Output(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) | Failure::Output(_) => 2,
            Failure::Domain(Error::NumericQuality(_)) | Failure::Domain(Error::GridTooCoarse(_)) => 4,
            Failure::Domain(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "{e}"),
            Failure::Domain(e) => write!(f, "{e}"),
            Failure::Output(e) => write!(f, "cannot write output: {e}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Output(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Output(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&args) {
        Ok(summary) => {
            let _ = writeln!(stdout, "{summary}");
            0
        }
        Err(f) => {
            let _ = writeln!(stderr, "error: {f}");
            f.exit_code()
        }
    }
}

/// Merges flags over the config file and fills defaults.
pub fn effective_config(args: &Args) -> Outcome<RunConfig> {
    let mut cfg = match &args.config {
        Some(src) => parse_config(src)?,
        None => RunConfig::default(),
    };
    if let Some(c) = args.command {
        cfg.command = Some(c);
    }
    if let Some(v) = &args.out {
        cfg.out = Some(v.clone());
    }
    if let Some(v) = args.seed {
        cfg.seed = Some(v);
    }
    if let Some(v) = args.threads {
        cfg.threads = Some(v);
    }
    if let Some(v) = args.lambda {
        cfg.lambda = Some(v);
        cfg.lambda_grid = Some(vec![v]);
    }
    if let Some(v) = &args.lambda_grid {
        cfg.lambda_grid = Some(v.clone());
    }
    if let Some(v) = args.trials {
        cfg.trials = Some(v);
    }
    if let Some(v) = args.basis {
        cfg.basis = Some(v);
    }
    if let Some(v) = args.format {
        cfg.format = Some(v);
    }
    if let Some(v) = args.protocol {
        cfg.protocol = Some(v);
    }
    if let Some(n) = cfg.n {
        cfg.n_values = Some(vec![n]);
    }
    cfg.validate_fields()?;
    Ok(cfg.with_defaults())
}

/// Runs the configured command and returns its summary line.
pub fn execute(args: &Args) -> Outcome<String> {
    let cfg = effective_config(args)?;
    let command = cfg
        .command
        .ok_or_else(|| ConfigError::schema("command", "required (as argument or config field)"))?;
    let ctx = Context {
        hash: cfg.hash(),
        out: PathBuf::from(cfg.out.clone().unwrap_or_else(|| "weakval-out".into())),
        format: cfg.format.unwrap_or(Format::Csv),
        cfg,
    };
    let mut summary = Summary::new(command);
    match command {
        Command::WeakValue => cmd_weak_value(&ctx, &mut summary)?,
        Command::Density => cmd_density(&ctx, &mut summary)?,
        Command::PostselectProb => cmd_postselect_prob(&ctx, &mut summary)?,
        Command::Kick => cmd_kick(&ctx, &mut summary)?,
        Command::Sequential => cmd_sequential(&ctx, &mut summary)?,
        Command::Collective => cmd_collective(&ctx, &mut summary)?,
        Command::Lindblad => cmd_lindblad(&ctx, &mut summary)?,
        Command::Disturbance => cmd_disturbance(&ctx, &mut summary)?,
        Command::Simulate => {
            let protocol = ctx.cfg.protocol.unwrap_or(Protocol::Single);
            cmd_simulate(&ctx, &mut summary, protocol, "simulate")?
        }
        Command::Threshold => cmd_simulate(&ctx, &mut summary, Protocol::Threshold, "threshold")?,
        Command::Anomalous => cmd_anomalous(&ctx, &mut summary)?,
    }
    summary.push("config_hash", ctx.hash.clone());
    Ok(summary.line())
}

struct Context {
    cfg: RunConfig,
    hash: String,
    out: PathBuf,
    format: Format,
}

impl Context {
    fn lambda(&self) -> f64 {
        self.cfg.lambda.unwrap_or(0.1)
    }

    fn grid(&self) -> &[f64] {
        self.cfg.lambda_grid.as_deref().unwrap_or(&[])
    }

    fn setup(&self, lambda: f64) -> Outcome<MeasurementSetup> {
        Ok(MeasurementSetup::new(self.cfg.observable()?, lambda, self.cfg.psi()?, self.cfg.phi()?)?)
    }

    fn path(&self, stem: &str, ext: &str) -> PathBuf {
        self.out.join(format!("{stem}.{ext}"))
    }

    /// Writes `table` as `<stem>.csv` or `<stem>.json`.
    fn write_table(&self, stem: &str, table: &Table) -> Outcome<PathBuf> {
        let (path, bytes) = match self.format {
            Format::Csv => (self.path(stem, "csv"), table.to_csv(&self.hash)?),
            Format::Json => (
                self.path(stem, "json"),
                to_json_bytes(&serde_json::json!({
                    "config_hash": self.hash,
                    "rows": table.to_json(),
                }))?,
            ),
        };
        write_bytes(&path, &bytes)?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, stem: &str, value: &T) -> Outcome<PathBuf> {
        let path = self.path(stem, "json");
        write_bytes(&path, &to_json_bytes(&serde_json::json!({
            "config_hash": self.hash,
            "result": value,
        }))?)?;
        Ok(path)
    }
}

struct Summary(Vec<(String, String)>);

impl Summary {
    fn new(command: Command) -> Self {
        let name = serde_json::to_value(command)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        Summary(vec![("command".into(), name)])
    }

    fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    fn num(&mut self, key: &str, v: f64) {
        self.push(key, num(v));
    }

    fn file(&mut self, key: &str, p: &Path) {
        self.push(key, p.display());
    }

    fn line(&self) -> String {
        self.0
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Appends the λ→0 extrapolation row when the grid has at least two couplings.
fn extrapolation(lambdas: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let mut distinct = lambdas.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    (distinct.len() >= 2).then(|| extrapolate_even(lambdas, ys))
}

fn cmd_weak_value(ctx: &Context, s: &mut Summary) -> Outcome<()> {
    let a = ctx.cfg.observable()?;
    let wv = weak_value(&a, &ctx.cfg.psi()?, &ctx.cfg.phi()?)?;
    let mut t = Table::new(&["weak_value_re", "weak_value_im", "overlap_re", "overlap_im", "postselect_prob_unperturbed"]);
    t.push(vec![
        num(wv.value.re),
        num(wv.value.im),
        num(wv.preselect_overlap.re),
        num(wv.preselect_overlap.im),
        num(wv.postselect_probability()),
    ]);
    let p = ctx.write_table("weak-value", &t)?;
    s.num("weak_value_re", wv.value.re);
    s.num("weak_value_im", wv.value.im);
    s.num("postselect_prob_unperturbed", wv.postselect_probability());
    s.file("output", &p);
    Ok(())
}

fn cmd_density(ctx: &Context, s: &mut Summary) -> Outcome<()> {
    let lambda = ctx.lambda();
    let setup = ctx.setup(lambda)?;
    let basis = ctx.cfg.basis.unwrap_or(Basis::X);
    let (w, p) = postselected_pointer(&setup);
    let w = w.normalized().in_basis(basis);
    let grid = ctx.cfg.grid.unwrap_or_else(|| {
        let (lo, hi) = w.center_range();
        GridSpec {
            min: lo - 10.0,
            max: hi + 10.0,
            points: 2001,
        }
    });
    let xs = grid.values();
    let ds: Vec<f64> = xs.iter().map(|&x| w.density(x)).collect();
    let mut t = Table::new(&["x", "density"]);
    for (x, d) in xs.iter().zip(&ds) {
        t.push(vec![num(*x), num(*d)]);
    }
    let path = ctx.write_table("density", &t)?;
    s.num("lambda", lambda);
    s.push("basis", if basis == Basis::X { "x" } else { "xprime" });
    s.num("postselect_prob", p);
    s.num("mean", w.mean());
    s.num("integral", trapezoid(&ds, grid.step()));
    s.file("output", &path);
    Ok(())
}

fn cmd_postselect_prob(ctx: &Context, s: &mut Summary) -> Outcome<()> {
    let grid = ctx.grid();
    let mut t = Table::new(&[
        "lambda",
        "postselect_prob",
        "postselect_prob_unperturbed",
        "scaled_correction",
        "second_order_coeff",
        "fit_residual",
    ]);
    let mut ys = Vec::new();
    let mut coeff = 0.0;
    for &l in grid {
        let r = disturbance_report(&ctx.setup(l)?);
        let y = (r.postselect_prob_exact - r.postselect_prob_unperturbed) / (l * l);
        coeff = r.second_order_coeff;
        ys.push(y);
        t.push(vec![
            num(l),
            num(r.postselect_prob_exact),
            num(r.postselect_prob_unperturbed),
            num(y),
            num(r.second_order_coeff),
            String::new(),
        ]);
    }
    if let Some(fit) = extrapolation(grid, &ys) {
        t.push(vec!["extrapolated".into(), String::new(), String::new(), num(fit.intercept), num(coeff), num(fit.residual)]);
        s.num("extrapolated_correction", fit.intercept);
    }
    s.num("second_order_coeff", coeff);
    let path = ctx.write_table("postselect-prob", &t)?;
    s.file("output", &path);
    Ok(())
}

fn cmd_kick(ctx: &Context, s: &mut Summary) -> Outcome<()> {
    let grid = ctx.grid();
    let mut t = Table::new(&["lambda", "postselect_prob_kick", "postselect_prob_von_neumann", "mean_xprime", "mean_over_lambda", "fit_residual"]);
    let mut ys = Vec::new();
    let mut im = 0.0;
    for &l in grid {
        let setup = ctx.setup(l)?;
        im = setup.weak_value().value.im;
        let m = conditional_mean(&setup, Basis::XPrime);
        ys.push(m / l);
        t.push(vec![
            num(l),
            num(kick_postselection_probability(&setup)),
            num(postselection_probability(&setup)),
            num(m),
            num(m / l),
            String::new(),
        ]);
    }
    if let Some(fit) = extrapolation(grid, &ys) {
        t.push(vec!["extrapolated".into(), String::new(), String::new(), String::new(), num(fit.intercept), num(fit.residual)]);
        s.num("extrapolated_mean_over_lambda", fit.intercept);
    }
    s.num("weak_value_im", im);
    let path = ctx.write_table("kick", &t)?;
    s.file("output", &path);
    Ok(())
}

fn cmd_sequential(ctx: &Context, s: &mut Summary) -> Outcome<()> {
    let base = SequentialSetup::new(
        ctx.cfg.observable()?,
        0.0,
        ctx.cfg.observable_b()?,
        0.0,
        ctx.cfg.psi()?,
        ctx.cfg.phi()?,
    )?
    .with_order(ctx.cfg.order.unwrap_or_default());
    let basis = ctx.cfg.basis.unwrap_or(Basis::X);
    let base = base.with_bases([basis, basis]);
    let grid = ctx.grid();
    let mut t = Table::new(&["lambda", "postselect_prob", "mean_1", "mean_2", "covariance", "coefficient", "fit_residual"]);
    let mut ys = Vec::new();
    for &l in grid {
        let m = sequential_moments(&base.with_lambdas(l, l));
        let c = m.covariance / (l * l / 2.0);
        ys.push(c);
        t.push(vec![num(l), num(m.probability), num(m.mean_1), num(m.mean_2), num(m.covariance), num(c), String::new()]);
    }
    if let Some(fit) = extrapolation(grid, &ys) {
        t.push(vec![
            "extrapolated".into(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            num(fit.intercept),
            num(fit.residual),
        ]);
        s.num("extrapolated_coefficient", fit.intercept);
    }
    s.num("analytic_coefficient", sequential_cross_coefficient(&base)?);
    s.num("order_gap", sequential_order_gap(&base)?);
    let path = ctx.write_table("sequential", &t)?;
    s.file("output", &path);
    Ok(())
}

fn cmd_collective(ctx: &Context, s: &mut Summary) -> Outcome<()> {
    let mut base = CollectiveSetup::new(ctx.cfg.observable()?, ctx.lambda(), ctx.cfg.psi()?, ctx.cfg.phi()?, 1)?;
    if ctx.cfg.max_systems.is_some() || ctx.cfg.term_cap.is_some() {
        base = base.with_caps(
            ctx.cfg.max_systems.unwrap_or(base.max_systems),
            ctx.cfg.term_cap.map(u128::from).unwrap_or(base.term_cap),
        )?;
    }
    let ns = ctx.cfg.n_values.clone().unwrap_or_default();
    let mut t = Table::new(&["n", "metric", "value"]);
    let mut sup = Vec::new();
    let mut mean = Vec::new();
    let mut ratio = Vec::new();
    for &n in &ns {
        let cs = base.with_n(n)?;
        let d = CollectiveDistribution::new(&cs);
        let q = collective_discrepancy(&cs);
        for (metric, v) in [
            ("ratio", d.ratio()),
            ("xprime_mean", d.mean(Basis::XPrime)),
            ("x_density_sup", q.x_density_sup),
            ("xprime_mean_gap", q.xprime_mean_gap),
            ("ratio_gap", q.ratio_gap),
        ] {
            if !v.is_finite() {
                return Err(Error::NumericQuality(format!("{metric} is not finite at N = {n}")).into());
            }
            t.push(vec![n.to_string(), metric.into(), num(v)]);
        }
        sup.push(q.x_density_sup);
        mean.push(q.xprime_mean_gap);
        ratio.push(q.ratio_gap);
    }
    if ns.len() >= 2 {
        let nf: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
        for (metric, v) in [("x_density_sup", &sup), ("xprime_mean_gap", &mean), ("ratio_gap", &ratio)] {
            if v.iter().all(|g| *g > 0.0) {
                let slope = log_log_slope(&nf, v);
                t.push(vec!["slope".into(), metric.into(), num(slope)]);
                s.num(&format!("slope_{metric}"), slope);
            }
        }
    }
    let aw = base.weak_value().value;
    s.num("limit_ratio", (0.5 * (base.lambda * aw.im).powi(2)).exp());
    let path = ctx.write_table("collective", &t)?;
    s.file("output", &path);
    Ok(())
}

fn cmd_lindblad(ctx: &Context, s: &mut Summary) -> Outcome<()> {
    let lambda = ctx.lambda();
    let a = ctx.cfg.observable()?;
    let (psi, phi) = (ctx.cfg.psi()?, ctx.cfg.phi()?);
    // validates dimensions and the overlap
    weak_value(&a, &psi, &phi)?;
    let fam = KrausFamily::new(a.clone(), lambda)?;
    let r = fam.window();
    let grid = ctx.cfg.grid.unwrap_or(GridSpec {
        min: -r,
        max: r,
        points: 401,
    });
    let mut t = Table::new(&["x", "joint", "pw", "error", "leading_error"]);
    for x in grid.values() {
        let d = fam.decompose(&psi, &phi, x)?;
        t.push(vec![
            num(x),
            num(d.joint_p),
            num(d.pw),
            num(d.error),
            num(leading_error_term(&a, lambda, &psi, &phi, x)?),
        ]);
    }
    let path = ctx.write_table("lindblad", &t)?;
    let report = gdi_diagnostic(&a, lambda, &psi, &phi)?;
    let gdi = ctx.write_json("lindblad-gdi", &report)?;
    s.num("lambda", lambda);
    s.num("mean_full", report.mean_full);
    s.num("mean_pw", report.mean_pw);
    s.num("mean_gap", report.mean_gap);
    s.num("integrated_error_over_lambda2", report.integrated_error_over_lambda2);
    s.file("output", &path);
    s.file("report", &gdi);
    Ok(())
}

fn cmd_disturbance(ctx: &Context, s: &mut Summary) -> Outcome<()> {
    let grid = ctx.grid();
    let mut t = Table::new(&[
        "lambda",
        "postselect_prob",
        "postselect_prob_unperturbed",
        "scaled_disturbance",
        "nonselective_purity",
        "fidelity_to_initial",
        "identity_residual",
        "fit_residual",
    ]);
    let mut ys = Vec::new();
    let mut worst: f64 = 0.0;
    for &l in grid {
        let r = disturbance_report(&ctx.setup(l)?);
        let y = (r.postselect_prob_exact - r.postselect_prob_unperturbed) / (l * l);
        ys.push(y);
        worst = worst.max(r.identity_residual.abs());
        t.push(vec![
            num(l),
            num(r.postselect_prob_exact),
            num(r.postselect_prob_unperturbed),
            num(y),
            num(r.nonselective_purity),
            num(r.fidelity_to_initial),
            num(r.identity_residual),
            String::new(),
        ]);
    }
    if worst > 1e-10 {
        return Err(Error::NumericQuality(format!("disturbance identity residual {worst:e}")).into());
    }
    if let Some(fit) = extrapolation(grid, &ys) {
        let mut row = vec!["extrapolated".to_string(), String::new(), String::new(), num(fit.intercept)];
        row.extend([String::new(), String::new(), String::new(), num(fit.residual)]);
        t.push(row);
        s.num("extrapolated_scaled_disturbance", fit.intercept);
    }
    s.num("max_identity_residual", worst);
    let path = ctx.write_table("disturbance", &t)?;
    s.file("output", &path);
    Ok(())
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    protocol: Protocol,
    seed: u64,
    trials: usize,
    statistics: &'a TrialStatistics,
    targets: &'a AnalyticTargets,
    checks: &'a [EstimatorCheck],
}

fn cmd_simulate(ctx: &Context, s: &mut Summary, protocol: Protocol, stem: &str) -> Outcome<()> {
    let lambda = ctx.lambda();
    let plan = match protocol {
        Protocol::Single => ProtocolPlan::Single(ctx.setup(lambda)?),
        Protocol::Kick => ProtocolPlan::Kick(ctx.setup(lambda)?),
        Protocol::Sequential => ProtocolPlan::Sequential(
            SequentialSetup::new(
                ctx.cfg.observable()?,
                lambda,
                ctx.cfg.observable_b()?,
                lambda,
                ctx.cfg.psi()?,
                ctx.cfg.phi()?,
            )?
            .with_order(ctx.cfg.order.unwrap_or_default()),
        ),
        Protocol::Threshold => {
            let observable = ctx.cfg.observable()?;
            let psi = ctx.cfg.psi()?;
            if psi.dim() != observable.dim() {
                return Err(Error::DimensionMismatch {
                    expected: observable.dim(),
                    got: psi.dim(),
                }
                .into());
            }
            ProtocolPlan::Threshold(ThresholdSetup {
                observable,
                lambda,
                psi,
                threshold_multiple: ctx.cfg.threshold_multiple.unwrap_or(100.0),
            })
        }
    };
    let seed = ctx.cfg.seed.unwrap_or(0);
    let mut sampler = ctx.cfg.sampler.unwrap_or_default();
    sampler.seed = seed;
    let options = RunOptions {
        trials: ctx.cfg.trials.unwrap_or(100_000),
        seed,
        threads: ctx.cfg.threads.unwrap_or(0),
        sampler,
    };
    let plan = TrialPlan { protocol: plan, options };
    let (records, stats) = run(&plan)?;
    let targets = analytic_targets(&plan.protocol);
    let checks = compare(&stats, &targets);
    let path = ctx.write_table(&format!("{stem}-records"), &records_table(&records))?;
    let report = ctx.write_json(
        &format!("{stem}-stats"),
        &SimulationReport {
            protocol,
            seed,
            trials: options.trials,
            statistics: &stats,
            targets: &targets,
            checks: &checks,
        },
    )?;
    s.push("protocol", serde_json::to_value(protocol)?.as_str().unwrap_or_default());
    s.push("seed", seed);
    s.push("n_total", stats.n_total);
    s.push("n_postselected", stats.n_postselected);
    s.num("postselection_rate", stats.postselection_rate);
    s.num("conditional_mean", stats.conditional_means[0]);
    s.num("standard_error", stats.standard_errors[0]);
    s.num("analytic_mean", targets.conditional_means[0]);
    if let Some(c) = stats.covariance {
        s.num("covariance", c);
        s.num("covariance_standard_error", stats.covariance_standard_error.unwrap_or(f64::NAN));
    }
    s.file("records", &path);
    s.file("report", &report);
    Ok(())
}

fn records_table(records: &[ExperimentRecord]) -> Table {
    let mut t = Table::new(&["trial", "x", "x2", "postselected"]);
    for (i, r) in records.iter().enumerate() {
        t.push(vec![
            i.to_string(),
            num(r.x),
            r.x2.map(num).unwrap_or_default(),
            if r.postselected { "1" } else { "0" }.into(),
        ]);
    }
    t
}

fn cmd_anomalous(ctx: &Context, s: &mut Summary) -> Outcome<()> {
    let a = ctx.cfg.observable()?;
    let eps = ctx.cfg.epsilon.unwrap_or(0.01);
    let part = ctx.cfg.part.unwrap_or(WeakValuePart::Re);
    let pair = match &ctx.cfg.psi {
        Some(_) => anomalous_pair_from(&a, &ctx.cfg.psi()?, eps, part)?,
        None => anomalous_pair(&a, eps, part)?,
    };
    let wv = weak_value(&a, &pair.psi, &pair.phi)?;
    #[derive(Serialize)]
    struct Out<'a> {
        pair: &'a crate::quantum::AnomalousPair,
        weak_value: [f64; 2],
    }
    let path = ctx.write_json(
        "anomalous",
        &Out {
            pair: &pair,
            weak_value: [wv.value.re, wv.value.im],
        },
    )?;
    s.num("epsilon", eps);
    s.num("weak_value_re", wv.value.re);
    s.num("weak_value_im", wv.value.im);
    s.num("postselect_prob_unperturbed", wv.postselect_probability());
    s.file("output", &path);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_cli(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = main_with_args(std::iter::once("weakval").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    fn field(line: &str, key: &str) -> f64 {
        line.split_whitespace()
            .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
            .unwrap_or_else(|| panic!("{key} missing from {line}"))
            .parse()
            .unwrap()
    }

    #[test]
    fn parse_counts() {
        assert_eq!(parse_count("1e6"), Ok(1_000_000));
        assert_eq!(parse_count("250"), Ok(250));
        assert!(parse_count("1.5").is_err());
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let (code, _, err) = run_cli(&["weak-value", "--out", out, "--config", r#"{"observable": [[[0,0],[1,0]],[[0,0],[0,0]]]}"#]);
        assert_eq!(code, 2, "{err}");
        assert!(err.contains("observable"));
        let (code, _, err) = run_cli(&["weak-value", "--out", out, "--config", r#"{"observable": "sigma_x", "psi": [[1,0],[0,0]], "phi": [[0,0],[1,0]]}"#]);
        assert_eq!(code, 3, "{err}");
        assert!(err.contains("orthogonal post-selection"));
        let (code, _, _) = run_cli(&["--out", out]);
        assert_eq!(code, 2);
        let (code, _, _) = run_cli(&["bogus"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn weak_value_summary() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let (code, line, err) = run_cli(&["anomalous", "--out", out, "--config", r#"{"observable": "sigma_x", "epsilon": 0.01}"#]);
        assert_eq!(code, 0, "{err}");
        assert!((field(&line, "weak_value_re") - 99.995).abs() < 1e-3);
        assert!((field(&line, "postselect_prob_unperturbed") - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn density_integrates_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        for basis in ["x", "xprime"] {
            let (code, line, err) = run_cli(&[
                "density", "--out", out, "--lambda", "0.1", "--basis", basis, "--config",
                r#"{"observable": "sigma_x", "psi": [[1,0],[0,0]], "phi": [[0.6,0],[0.8,0]]}"#,
            ]);
            assert_eq!(code, 0, "{err}");
            assert!((field(&line, "integral") - 1.0).abs() < 1e-6, "{line}");
        }
        let csv = std::fs::read_to_string(dir.path().join("density.csv")).unwrap();
        assert!(csv.starts_with("x,density\r\n"));
        assert!(csv.trim_end().lines().last().unwrap().starts_with("# config_hash="));
    }
}
