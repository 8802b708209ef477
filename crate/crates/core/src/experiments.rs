//! Monte Carlo sweeps over the aspect ratio, figure presets and the
//! plain-text configuration format shared with the command line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    calibrate_signs, combined_estimate, generate_dataset, linear_estimate, overlap, rescale_to_sqrt_d,
    spectral_matrix, top_eigenpairs, Dataset,
};
use crate::models::LinkModel;
use crate::numerics::QuadratureSpec;
use crate::preprocess::{baseline_lal, baseline_ycs, optimal_linear, optimal_spectral, Preprocessor};
use crate::theory::{rho_lin, TheoryReport};

pub const CSV_HEADER: &str =
    "model,sigma,alpha,d,delta,estimator,signal,overlap_mean,overlap_std,overlap_pred,trials,seed_base";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    Lin,
    SpecOpt,
    SpecYcs,
    SpecLal,
    Comb,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] =
        [Self::Lin, Self::SpecOpt, Self::SpecYcs, Self::SpecLal, Self::Comb];

    pub fn key(self) -> &'static str {
        match self {
            Self::Lin => "lin",
            Self::SpecOpt => "spec_opt",
            Self::SpecYcs => "spec_ycs",
            Self::SpecLal => "spec_lal",
            Self::Comb => "comb",
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.key() == s)
            .ok_or_else(|| {
                Error::Argument(format!(
                    "unknown estimator '{s}' (expected lin, spec_opt, spec_ycs, spec_lal or comb)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// `mlr` or `pr`.
    pub model: String,
    pub sigma: f64,
    pub alpha: f64,
    pub d: usize,
    pub delta_grid: Vec<f64>,
    pub trials: usize,
    pub estimators: Vec<EstimatorKind>,
    pub seed_base: u64,
    pub output_path: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            model: "mlr".into(),
            sigma: 0.0,
            alpha: 0.6,
            d: 500,
            delta_grid: vec![2.0, 4.0, 6.0, 8.0],
            trials: 5,
            estimators: EstimatorKind::ALL.to_vec(),
            seed_base: 0,
            output_path: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.link()?;
        if self.trials == 0 {
            return Err(Error::Argument("trials must be at least 1".into()));
        }
        if self.d < 3 {
            return Err(Error::Argument(format!("d must be at least 3, got {}", self.d)));
        }
        if self.delta_grid.is_empty() {
            return Err(Error::Argument("delta_grid is empty".into()));
        }
        if self.delta_grid.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Argument("delta_grid entries must be positive and finite".into()));
        }
        if self.delta_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Argument("delta_grid must be strictly increasing".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Argument("no estimators selected".into()));
        }
        if !(self.alpha > 0.5 && self.alpha < 1.0) {
            return Err(Error::Argument(format!("alpha must lie in (1/2, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn link(&self) -> Result<LinkModel> {
        LinkModel::from_name(&self.model, self.sigma)
    }

    /// Overrides fields from `key = value` pairs. Unknown keys are errors.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in kv {
            match k.as_str() {
                "model" => self.model = v.clone(),
                "sigma" => self.sigma = parse_num(k, v)?,
                "alpha" => self.alpha = parse_num(k, v)?,
                "d" => self.d = parse_num(k, v)?,
                "delta_grid" => self.delta_grid = parse_list(k, v)?,
                "trials" => self.trials = parse_num(k, v)?,
                "estimators" => {
                    self.estimators =
                        v.split(',').map(|s| s.trim().parse()).collect::<Result<Vec<_>>>()?
                }
                "seed_base" => self.seed_base = parse_num(k, v)?,
                "output_path" => self.output_path = Some(PathBuf::from(v)),
                other => return Err(Error::Argument(format!("unknown sweep key '{other}'"))),
            }
        }
        Ok(())
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply(&parse_kv(text)?)?;
        c.validate()?;
        Ok(c)
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Argument(format!("cannot parse value '{v}' for key '{key}'")))
}

/// Comma-separated numbers, or `start:step:stop` (inclusive).
pub fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = v.split(':').collect();
    if parts.len() == 3 {
        let start: f64 = parse_num(key, parts[0])?;
        let step: f64 = parse_num(key, parts[1])?;
        let stop: f64 = parse_num(key, parts[2])?;
        if !(step > 0.0) || stop < start {
            return Err(Error::Argument(format!("bad range '{v}' for key '{key}'")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        return Ok((0..count).map(|i| start + step * i as f64).collect());
    }
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_num(key, s)).collect()
}

/// Parses `key = value` lines. `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Argument(format!("line {}: empty key", i + 1)));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Argument(format!("line {}: duplicate key '{k}'", i + 1)));
        }
    }
    Ok(out)
}

pub fn read_kv_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_kv(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    Full,
    /// `d = 500` and 5 trials.
    Desk,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scale::Full),
            "desk" => Ok(Scale::Desk),
            _ => Err(Error::Argument(format!("unknown scale '{s}' (expected full or desk)"))),
        }
    }
}

pub const PRESETS: [&str; 4] = ["fig1", "fig2", "fig3", "fig4"];

/// Named figure configurations. `fig2` and `fig3` expand to one sweep per
/// curve family.
pub fn preset(name: &str, scale: Scale) -> Result<Vec<SweepConfig>> {
    let (d, trials) = match scale {
        Scale::Full => (2000, 10),
        Scale::Desk => (500, 5),
    };
    let base = |model: &str, sigma: f64, alpha: f64, grid: Vec<f64>, est: &[EstimatorKind]| SweepConfig {
        model: model.into(),
        sigma,
        alpha,
        d,
        delta_grid: grid,
        trials,
        estimators: est.to_vec(),
        seed_base: 0,
        output_path: None,
    };
    let spec_only = [EstimatorKind::SpecOpt];
    let grid = |lo: f64, hi: f64, step: f64| parse_list("grid", &format!("{lo}:{step}:{hi}")).unwrap();
    let out = match name {
        "fig1" => vec![base(
            "mlr",
            0.0,
            0.6,
            grid(1.0, 8.0, 0.5),
            &[EstimatorKind::Lin, EstimatorKind::SpecOpt, EstimatorKind::Comb, EstimatorKind::SpecYcs, EstimatorKind::SpecLal],
        )],
        "fig2" => vec![
            base("mlr", 0.0, 0.6, grid(0.5, 8.0, 0.5), &spec_only),
            base("mlr", 0.0, 0.8, grid(0.5, 8.0, 0.5), &spec_only),
        ],
        "fig3" => {
            let mut v = Vec::new();
            for sigma in [0.8, 1.5] {
                for model in ["mlr", "pr"] {
                    v.push(base(model, sigma, 0.8, grid(1.0, 16.0, 1.0), &spec_only));
                }
            }
            v
        }
        "fig4" => vec![
            base("mlr", 1.5, 0.6, grid(2.0, 40.0, 2.0), &spec_only),
            base("pr", 1.5, 0.6, grid(2.0, 40.0, 2.0), &spec_only),
        ],
        other => {
            return Err(Error::Argument(format!(
                "unknown preset '{other}' (expected fig1, fig2, fig3 or fig4)"
            )))
        }
    };
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    pub sigma: f64,
    pub alpha: f64,
    pub d: usize,
    pub delta: f64,
    pub estimator: EstimatorKind,
    pub signal: usize,
    pub overlap_mean: f64,
    pub overlap_std: f64,
    pub overlap_pred: f64,
    pub trials: usize,
    pub seed_base: u64,
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.model,
            self.sigma,
            self.alpha,
            self.d,
            self.delta,
            self.estimator.key(),
            self.signal,
            self.overlap_mean,
            self.overlap_std,
            self.overlap_pred,
            self.trials,
            self.seed_base
        )
    }
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_line());
    }
    s
}

pub fn write_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(rows)).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// The linear preprocessor used by sweeps: the optimal one when it exists,
/// the identity otherwise.
pub fn sweep_linear_preprocessor(model: &LinkModel, spec: &QuadratureSpec) -> Result<Preprocessor> {
    match optimal_linear(model, spec) {
        Err(Error::IneffectiveLinear { .. }) => Ok(Preprocessor::identity(&model.support(spec))),
        other => other,
    }
}

struct Maps {
    l: Preprocessor,
    opt: Option<[Preprocessor; 2]>,
    ycs: Option<Preprocessor>,
    lal: Option<Preprocessor>,
}

impl Maps {
    fn new(cfg: &SweepConfig, model: &LinkModel, spec: &QuadratureSpec) -> Result<Self> {
        let has = |k| cfg.estimators.contains(&k);
        let opt = if has(EstimatorKind::SpecOpt) || has(EstimatorKind::Comb) {
            Some([
                optimal_spectral(model, cfg.alpha, 1, spec)?,
                optimal_spectral(model, cfg.alpha, 2, spec)?,
            ])
        } else {
            None
        };
        Ok(Self {
            l: sweep_linear_preprocessor(model, spec)?,
            opt,
            ycs: has(EstimatorKind::SpecYcs).then(baseline_ycs),
            lal: has(EstimatorKind::SpecLal).then(baseline_lal),
        })
    }
}

struct Predictions {
    lin: [f64; 2],
    opt: Option<[TheoryReport; 2]>,
    ycs: Option<TheoryReport>,
    lal: Option<TheoryReport>,
}

impl Predictions {
    fn new(maps: &Maps, model: &LinkModel, alpha: f64, delta: f64, spec: &QuadratureSpec) -> Result<Self> {
        let report = |t: &Preprocessor| TheoryReport::compute(model, alpha, delta, &maps.l, t, spec);
        Ok(Self {
            lin: rho_lin(alpha, delta, &maps.l, model, spec)?.rho,
            opt: match &maps.opt {
                Some([t1, t2]) => Some([report(t1)?, report(t2)?]),
                None => None,
            },
            ycs: maps.ycs.as_ref().map(report).transpose()?,
            lal: maps.lal.as_ref().map(report).transpose()?,
        })
    }

    fn get(&self, est: EstimatorKind, signal: usize) -> f64 {
        let pick = |r: &TheoryReport| if signal == 1 { r.rho_spec_1 } else { r.rho_spec_2 };
        let opt = |i: usize| &self.opt.as_ref().expect("optimal maps present")[i - 1];
        match est {
            EstimatorKind::Lin => self.lin[signal - 1],
            EstimatorKind::SpecOpt => pick(opt(signal)),
            EstimatorKind::SpecYcs => pick(self.ycs.as_ref().expect("ycs present")),
            EstimatorKind::SpecLal => pick(self.lal.as_ref().expect("lal present")),
            EstimatorKind::Comb => opt(signal).combiner(signal).overlap,
        }
    }
}

/// Overlaps of one trial, in the row order of the sweep.
fn run_trial(
    ds: &Dataset,
    cfg: &SweepConfig,
    maps: &Maps,
    pred: &Predictions,
) -> Result<Vec<f64>> {
    let x_lin = linear_estimate(ds, &maps.l);
    let truth = [&ds.x1_star, &ds.x2_star];
    let top = |t: &Preprocessor, i: usize| -> Result<nalgebra::DVector<f64>> {
        let e = top_eigenpairs(spectral_matrix(ds, t))?;
        Ok(if i == 1 { e.v1 } else { e.v2 })
    };
    let mut opt_vecs: [Option<nalgebra::DVector<f64>>; 2] = [None, None];
    if let Some(ts) = &maps.opt {
        for i in 1..=2 {
            opt_vecs[i - 1] = Some(top(&ts[i - 1], i)?);
        }
    }
    let both = |t: &Preprocessor| -> Result<[f64; 2]> {
        let e = top_eigenpairs(spectral_matrix(ds, t))?;
        Ok([overlap(&e.v1, truth[0]), overlap(&e.v2, truth[1])])
    };
    let ycs = maps.ycs.as_ref().map(both).transpose()?;
    let lal = maps.lal.as_ref().map(both).transpose()?;
    let mut out = Vec::with_capacity(2 * cfg.estimators.len());
    for est in &cfg.estimators {
        for signal in 1..=2 {
            let x = truth[signal - 1];
            let v = match est {
                EstimatorKind::Lin => overlap(&x_lin, x),
                EstimatorKind::SpecOpt => overlap(opt_vecs[signal - 1].as_ref().unwrap(), x),
                EstimatorKind::SpecYcs => ycs.unwrap()[signal - 1],
                EstimatorKind::SpecLal => lal.unwrap()[signal - 1],
                EstimatorKind::Comb => {
                    let v = opt_vecs[signal - 1].as_ref().unwrap();
                    let s = calibrate_signs(v, x, None);
                    let comb = pred.opt.as_ref().unwrap()[signal - 1].combiner(signal);
                    let xc = combined_estimate(&rescale_to_sqrt_d(&x_lin), &rescale_to_sqrt_d(&(v * s)), &comb);
                    overlap(&xc, x)
                }
            };
            out.push(v);
        }
    }
    Ok(out)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every trial of every grid point and returns one row per
/// `(δ, estimator, signal)` in grid order. Trial `k` uses seed
/// `seed_base + k`. Writes the CSV when `output_path` is set.
pub fn sweep(cfg: &SweepConfig, spec: &QuadratureSpec) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let model = cfg.link()?;
    let maps = Maps::new(cfg, &model, spec)?;
    let mut rows = Vec::new();
    for &delta in &cfg.delta_grid {
        let pred = Predictions::new(&maps, &model, cfg.alpha, delta, spec)?;
        let per_trial: Vec<Vec<f64>> = (0..cfg.trials)
            .into_par_iter()
            .map(|k| {
                let ds = generate_dataset(cfg.d, delta, cfg.alpha, &model, cfg.seed_base + k as u64)?;
                run_trial(&ds, cfg, &maps, &pred)
            })
            .collect::<Result<_>>()?;
        let mut col = 0;
        for &est in &cfg.estimators {
            for signal in 1..=2 {
                let xs: Vec<f64> = per_trial.iter().map(|t| t[col]).collect();
                let (overlap_mean, overlap_std) = mean_std(&xs);
                rows.push(SweepRow {
                    model: model.name().to_string(),
                    sigma: cfg.sigma,
                    alpha: cfg.alpha,
                    d: cfg.d,
                    delta,
                    estimator: est,
                    signal,
                    overlap_mean,
                    overlap_std,
                    overlap_pred: pred.get(est, signal),
                    trials: cfg.trials,
                    seed_base: cfg.seed_base,
                });
                col += 1;
            }
        }
    }
    if let Some(path) = &cfg.output_path {
        write_csv(&rows, path)?;
    }
    Ok(rows)
}

/// Empirical against predicted top-3 eigenvalues of `D` for one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenComparison {
    pub seed: u64,
    pub empirical: [f64; 3],
    pub predicted: [f64; 3],
}

pub fn top3_eigenvalues(ds: &Dataset, t: &Preprocessor) -> Result<[f64; 3]> {
    let m = spectral_matrix(ds, t);
    if m.nrows() < 3 {
        return Err(Error::Eigen("need d >= 3".into()));
    }
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    if ev.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok([ev[0], ev[1], ev[2]])
}

#[allow(clippy::too_many_arguments)]
pub fn compare_eigenvalues(
    model: &LinkModel,
    alpha: f64,
    delta: f64,
    d: usize,
    t: &Preprocessor,
    seeds: &[u64],
    spec: &QuadratureSpec,
) -> Result<Vec<EigenComparison>> {
    let predicted = crate::theory::predict_eigenvalues(alpha, delta, t, model, spec)?;
    seeds
        .par_iter()
        .map(|&seed| {
            let ds = generate_dataset(d, delta, alpha, model, seed)?;
            Ok(EigenComparison { seed, empirical: top3_eigenvalues(&ds, t)?, predicted })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_parsing() {
        let kv = parse_kv("# c\n model = pr \nsigma=0.5 # noise\n\n").unwrap();
        assert_eq!(kv["model"], "pr");
        assert_eq!(kv["sigma"], "0.5");
        assert!(parse_kv("novalue").is_err());
        assert!(parse_kv("a=1\na=2").is_err());
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list("g", "1,2, 3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_list("g", "1:0.5:2").unwrap(), vec![1.0, 1.5, 2.0]);
        assert!(parse_list("g", "1:0:2").is_err());
        assert!(parse_list("g", "x").is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = SweepConfig::default();
        assert!(c.validate().is_ok());
        c.trials = 0;
        assert!(c.validate().is_err());
        c.trials = 1;
        c.delta_grid = vec![2.0, 2.0];
        assert!(c.validate().is_err());
        c.delta_grid = vec![3.0, 2.0];
        assert!(c.validate().is_err());
        assert!(SweepConfig::from_kv_text("model = xx").is_err());
        assert!(SweepConfig::from_kv_text("bogus = 1").is_err());
        let c = SweepConfig::from_kv_text("estimators = lin,comb\ndelta_grid = 2:2:6\nseed_base = 9").unwrap();
        assert_eq!(c.estimators, vec![EstimatorKind::Lin, EstimatorKind::Comb]);
        assert_eq!(c.delta_grid, vec![2.0, 4.0, 6.0]);
        assert_eq!(c.seed_base, 9);
    }

    #[test]
    fn presets_are_valid() {
        for name in PRESETS {
            for scale in [Scale::Full, Scale::Desk] {
                let cs = preset(name, scale).unwrap();
                assert!(!cs.is_empty());
                for c in cs {
                    c.validate().unwrap();
                    assert_eq!(c.d, if scale == Scale::Full { 2000 } else { 500 });
                    assert_eq!(c.trials, if scale == Scale::Full { 10 } else { 5 });
                }
            }
        }
        assert!(preset("fig9", Scale::Desk).is_err());
        assert_eq!(preset("fig3", Scale::Full).unwrap().len(), 4);
    }

    #[test]
    fn smoke_sweep_schema() {
        let cfg = SweepConfig { d: 60, trials: 1, delta_grid: vec![2.0, 5.0], ..Default::default() };
        let rows = sweep(&cfg, &QuadratureSpec::default()).unwrap();
        assert_eq!(rows.len(), 2 * 5 * 2);
        let csv = to_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        for line in lines {
            assert_eq!(line.split(',').count(), 12);
        }
        assert!(rows.iter().all(|r| r.overlap_std == 0.0));
        assert!(rows.iter().all(|r| (0.0..=1.0 + 1e-12).contains(&r.overlap_mean)));
    }
}
