use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mixglm::acceptance::{self, AcceptanceOptions};
use mixglm::estimators::generate_dataset;
use mixglm::experiments::{
    compare_eigenvalues, parse_list, preset, read_kv_file, sweep, sweep_linear_preprocessor, to_csv, Scale,
    SweepConfig,
};
use mixglm::gamp::{run_gamp, Choice, DEFAULT_T_MAX};
use mixglm::preprocess::by_name;
use mixglm::theory::TheoryReport;
use mixglm::{LinkModel, QuadratureSpec};

#[derive(Parser)]
#[command(name = "mixglm", version, about = "Spectral, linear and combined estimators for mixed GLMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the asymptotic report for one configuration as JSON.
    Predict(PredictArgs),
    /// Monte Carlo sweep over delta; writes CSV.
    Sweep(SweepArgs),
    /// Run GAMP from the true signal and compare with state evolution.
    GampVerify(GampArgs),
    /// Compare empirical and predicted top-3 eigenvalues.
    Eigs(EigsArgs),
    /// Run the acceptance criteria.
    Verify(VerifyArgs),
}

/// Flags shared by the single-configuration commands.
#[derive(Args, Clone)]
struct ModelArgs {
    /// Plain-text `key = value` file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `mlr` or `pr`.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    m: ModelArgs,
    /// Spectral preprocessor: opt1, opt2, ycs, lal or identity.
    #[arg(long)]
    preproc: Option<String>,
    /// Linear preprocessor: optlin or identity.
    #[arg(long)]
    lin: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// fig1, fig2, fig3 or fig4.
    #[arg(long)]
    preset: Option<String>,
    /// `full` or `desk`.
    #[arg(long, default_value = "full")]
    scale: String,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    /// Comma list or `start:step:stop`.
    #[arg(long)]
    delta_grid: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma list of lin, spec_opt, spec_ycs, spec_lal, comb.
    #[arg(long)]
    estimators: Option<String>,
    #[arg(long)]
    seed_base: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GampArgs {
    #[command(flatten)]
    m: ModelArgs,
    #[arg(long)]
    d: Option<usize>,
    /// Targeted signal, 1 or 2.
    #[arg(long)]
    choice: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EigsArgs {
    #[command(flatten)]
    m: ModelArgs,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    preproc: Option<String>,
    /// Number of seeds, starting at `seed_base`.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    seed_base: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Multiplies every tolerance.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
    /// Comma list of criterion numbers; all by default.
    #[arg(long)]
    only: Option<String>,
    /// Emit JSON instead of text lines.
    #[arg(long)]
    json: bool,
}

/// Flag values layered over a config file.
struct Settings {
    file: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => read_kv_file(p)?,
            None => BTreeMap::new(),
        };
        Ok(Self { file })
    }

    fn get<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.file.get(key) {
            Some(s) => s.parse().map_err(|_| anyhow::anyhow!("bad value '{s}' for '{key}' in config")),
            None => Ok(default),
        }
    }

    fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        for k in self.file.keys() {
            if !known.contains(&k.as_str()) {
                bail!("unknown config key '{k}'");
            }
        }
        Ok(())
    }
}

const MODEL_KEYS: [&str; 4] = ["model", "sigma", "alpha", "delta"];

struct Base {
    model: LinkModel,
    alpha: f64,
    delta: f64,
}

fn base(s: &Settings, m: &ModelArgs) -> Result<Base> {
    let name: String = s.get("model", m.model.clone(), "mlr".into())?;
    let sigma = s.get("sigma", m.sigma, 0.0)?;
    Ok(Base {
        model: LinkModel::from_name(&name, sigma)?,
        alpha: s.get("alpha", m.alpha, 0.6)?,
        delta: s.get("delta", m.delta, 4.0)?,
    })
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn predict(a: PredictArgs) -> Result<()> {
    let s = Settings::load(a.m.config.as_deref())?;
    s.reject_unknown(&[&MODEL_KEYS[..], &["preproc", "lin"]].concat())?;
    let b = base(&s, &a.m)?;
    let spec = QuadratureSpec::default();
    let t = by_name(&s.get("preproc", a.preproc, "opt1".into())?, &b.model, b.alpha, &spec)?;
    let lin: String = s.get("lin", a.lin, "optlin".into())?;
    let l = match lin.as_str() {
        "optlin" => sweep_linear_preprocessor(&b.model, &spec)?,
        other => by_name(other, &b.model, b.alpha, &spec)?,
    };
    let report = TheoryReport::compute(&b.model, b.alpha, b.delta, &l, &t, &spec)?;
    emit(&(serde_json::to_string_pretty(&report)? + "\n"), a.output.as_deref())
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let file = match &a.config {
        Some(p) => read_kv_file(p)?,
        None => BTreeMap::new(),
    };
    let mut configs = match &a.preset {
        Some(name) => preset(name, a.scale.parse::<Scale>()?)?,
        None => vec![SweepConfig::default()],
    };
    let mut over = file;
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            over.insert(k.into(), v);
        }
    };
    put("model", a.model);
    put("sigma", a.sigma.map(|v| v.to_string()));
    put("alpha", a.alpha.map(|v| v.to_string()));
    put("d", a.d.map(|v| v.to_string()));
    put("delta_grid", a.delta_grid);
    put("trials", a.trials.map(|v| v.to_string()));
    put("estimators", a.estimators);
    put("seed_base", a.seed_base.map(|v| v.to_string()));
    put("output_path", a.output.map(|p| p.display().to_string()));
    let output = over.remove("output_path").map(PathBuf::from);
    let spec = QuadratureSpec::default();
    let mut rows = Vec::new();
    for c in &mut configs {
        c.apply(&over)?;
        c.validate()?;
        rows.extend(sweep(c, &spec)?);
    }
    emit(&to_csv(&rows), output.as_deref())
}

fn gamp_cmd(a: GampArgs) -> Result<()> {
    let s = Settings::load(a.m.config.as_deref())?;
    s.reject_unknown(&[&MODEL_KEYS[..], &["d", "choice", "t_max", "tol", "seed"]].concat())?;
    let b = base(&s, &a.m)?;
    let spec = QuadratureSpec::default();
    let d = s.get("d", a.d, 1000)?;
    let choice = Choice::from_index(s.get("choice", a.choice, 1)?)?;
    let t_max = s.get("t_max", a.t_max, DEFAULT_T_MAX)?;
    let tol = s.get("tol", a.tol, 1e-10)?;
    let seed = s.get("seed", a.seed, 0)?;
    let signal = if choice == Choice::One { 1 } else { 2 };
    let l = sweep_linear_preprocessor(&b.model, &spec)?;
    let t = by_name(&format!("opt{signal}"), &b.model, b.alpha, &spec)?;
    let ds = generate_dataset(d, b.delta, b.alpha, &b.model, seed)?;
    let run = run_gamp(&ds, &l, &t, &b.model, choice, t_max, tol, &spec)?;
    let mut out = String::from(
        "t,beta_t2,chi1_t,empirical_norm2_over_d,empirical_corr_x1,corr_with_eigvec,chi2_t,empirical_corr_x2,eig_residual\n",
    );
    for r in &run.records {
        let k = r.t - 1;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.t,
            r.beta_t2,
            run.trace.chi1[k],
            r.empirical_norm2_over_d,
            r.empirical_corr_x1,
            r.corr_with_eigvec,
            run.trace.chi2[k],
            r.empirical_corr_x2,
            r.eig_residual
        )?;
    }
    emit(&out, a.output.as_deref())?;
    eprintln!(
        "converged={} iterations={} beta_tilde2={} chi_tilde={}",
        run.converged,
        run.records.len(),
        run.trace.beta_tilde2,
        run.trace.chi_tilde
    );
    Ok(())
}

fn eigs_cmd(a: EigsArgs) -> Result<()> {
    let s = Settings::load(a.m.config.as_deref())?;
    s.reject_unknown(&[&MODEL_KEYS[..], &["d", "preproc", "seeds", "seed_base"]].concat())?;
    let b = base(&s, &a.m)?;
    let spec = QuadratureSpec::default();
    let d = s.get("d", a.d, 1000)?;
    let t = by_name(&s.get("preproc", a.preproc, "opt1".into())?, &b.model, b.alpha, &spec)?;
    let n_seeds: u64 = s.get("seeds", a.seeds, 5)?;
    let seed_base: u64 = s.get("seed_base", a.seed_base, 0)?;
    if n_seeds == 0 {
        bail!("seeds must be at least 1");
    }
    let seeds: Vec<u64> = (seed_base..seed_base + n_seeds).collect();
    let rows = compare_eigenvalues(&b.model, b.alpha, b.delta, d, &t, &seeds, &spec)?;
    let mut out = String::from("seed,lambda1,lambda2,lambda3,pred1,pred2,pred3\n");
    for r in rows {
        let [e1, e2, e3] = r.empirical;
        let [p1, p2, p3] = r.predicted;
        writeln!(out, "{},{e1},{e2},{e3},{p1},{p2},{p3}", r.seed)?;
    }
    emit(&out, a.output.as_deref())
}

fn verify_cmd(a: VerifyArgs) -> Result<bool> {
    let only: Vec<usize> = match &a.only {
        Some(s) => parse_list("only", s)?.into_iter().map(|x| x as usize).collect(),
        None => Vec::new(),
    };
    if only.iter().any(|i| !(1..=acceptance::CRITERIA.len()).contains(i)) {
        bail!("criteria are numbered 1 to {}", acceptance::CRITERIA.len());
    }
    let opts = AcceptanceOptions { tol_scale: a.tol_scale, ..Default::default() };
    let outcomes = acceptance::run(&opts, &only)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&outcomes)?);
    } else {
        for o in &outcomes {
            println!("{}", o.line());
        }
    }
    Ok(outcomes.iter().all(|o| o.pass))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Predict(a) => predict(a).map(|_| true),
        Command::Sweep(a) => sweep_cmd(a).map(|_| true),
        Command::GampVerify(a) => gamp_cmd(a).map(|_| true),
        Command::Eigs(a) => eigs_cmd(a).map(|_| true),
        Command::Verify(a) => verify_cmd(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
