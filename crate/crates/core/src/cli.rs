//! Config-driven front end: comparison tables, scaling studies, the
//! verification harness and data generation. Every command writes CSV whose
//! bytes depend only on the config and seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    bound_composite, bound_mixed_lower, bound_mixed_mc, bound_mixed_small_p, bound_mixed_upper,
    bound_tracenorm, quotient_trace_vs_frobenius, BoundReport, ChainConstants,
};
use crate::classes::{ClassSpec, CompositeSpec, HiddenNorm, MixedNormSpec, TraceNormSpec};
use crate::datagen::{generate, load_dataset, to_csv, SpectrumProfile, SpectrumSpec};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_gaussian_width, estimate_r, exact_r, AscentConfig, McEstimate, DEFAULT_MAX_SUPPORT,
    DEFAULT_TRIALS,
};
use crate::index_map::{make_mc, make_mt, make_one_vs_one, IndexKind, IndexMap};
use crate::numerics::{empirical_covariance, DataSample, Matrix, SpectralSummary};
use crate::rng::RngStream;
use crate::verifiers::{
    check_contraction, check_diameter_component, check_gaussian_width_component,
    check_lipschitz_component, check_main_tool, check_q_component, check_subexp_lemma,
    check_szarek_lower, CheckOutcome, FiniteLinearClass, MaxAffine, MC_BAND,
};

const SALT_DATA: u64 = 0xDA7A;
const SALT_RADEMACHER: u64 = 0x5EED_0001;
const SALT_GAUSS: u64 = 0x5EED_0002;

const CONFIG_HELP: &str = r#"CONFIG (JSON)
  {
    "dataset":   {"path": "x.csv"}
               | {"generator": {"d": 8, "profile": {"kind": "whitened", "d_eff": 8},
                                "unit_norm": true}, "n_examples": 64}
               | {"rows": [[1, 0], [0, 1]]},
    "index_map": {"kind": "mc", "t": 4} | {"kind": "mt", "t": 4}
               | {"kind": "1v1", "labels": [1, 2, 1, 3]}
               | {"kind": "custom", "subsets": [[0, 1], [1, 2]]},
    "class":     {"type": "mixed_norm", "p": 2, "b": 1}        (p may be "inf")
               | {"type": "trace_norm", "b": 1}
               | {"type": "composite", "k": 4, "w_norm": "22", "b": 1, "a": 1,
                  "activation": {"kind": "relu", "scale": 1}},
    "estimator": {"trials": 2000, "exact_max_support": 20, "gaussian": true,
                  "ascent": {"restarts": 8, "steps": 200, "step_size": null,
                             "finite_difference": false}},
    "bounds":    {"c1": 1.0, "c2": 1.0},
    "seed":      0,
    "grid":      {"t": [4, 16], "n": [32], "k": [], "d": []}   (scaling-study only)
  }
  Defaults: estimator.trials 2000, exact_max_support 20, gaussian true, ascent as
  shown, bounds.c1 = c2 = 1 (nominal), seed 0. For "mt" the per-task size is
  N/T; for "mc" every component uses all N examples. Generator profiles:
  whitened{d_eff}, power_law{exponent}, custom{eigenvalues}. Grid axes left
  empty keep the base value; scaling studies need a generator dataset and use
  n per task, N = n*T."#;

#[derive(Debug, Parser)]
#[command(name = "vecrad", version, about = "Rademacher/Gaussian complexity estimates and bounds for vector-valued classes", after_long_help = CONFIG_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Master seed (overrides the config's `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo trials (overrides `estimator.trials`).
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Worker threads; output does not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo (and exact, when small) complexity estimates.
    Estimate { config: PathBuf },
    /// Closed-form bounds only.
    Bound { config: PathBuf },
    /// Estimates next to bounds, with sandwich violations flagged.
    Compare { config: PathBuf },
    /// Estimates and bounds over the config's parameter grid.
    ScalingStudy { config: PathBuf },
    /// Runs the numeric verification suite; exit status 1 on any failure.
    Verify {
        #[arg(long, hide = true)]
        corrupt_bound_constant: Option<f64>,
    },
    /// Writes a synthetic dataset.
    GenData(GenDataArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub d: usize,
    /// Number of vectors.
    #[arg(long)]
    pub n: usize,
    /// Flat spectrum on the first `d_eff` coordinates (default: d).
    #[arg(long, conflicts_with = "power_law")]
    pub d_eff: Option<usize>,
    /// Eigenvalues `j^{-exponent}`.
    #[arg(long)]
    pub power_law: Option<f64>,
    /// Keep the Gaussian rows instead of normalizing them.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetConfig {
    Path {
        path: PathBuf,
    },
    Generator {
        generator: SpectrumSpec,
        n_examples: usize,
    },
    Rows {
        rows: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum IndexMapConfig {
    #[serde(rename = "mc")]
    MultiCategory { t: usize },
    #[serde(rename = "mt")]
    MultiTask { t: usize },
    #[serde(rename = "1v1")]
    OneVsOne { labels: Vec<usize> },
    #[serde(rename = "custom")]
    Custom { subsets: Vec<Vec<usize>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub trials: usize,
    pub ascent: AscentConfig,
    pub exact_max_support: usize,
    pub gaussian: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            trials: DEFAULT_TRIALS,
            ascent: AscentConfig::default(),
            exact_max_support: DEFAULT_MAX_SUPPORT,
            gaussian: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub c1: f64,
    pub c2: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        let c = ChainConstants::default();
        BoundsConfig { c1: c.c1, c2: c.c2 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub t: Vec<usize>,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub d: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub dataset: DatasetConfig,
    pub index_map: IndexMapConfig,
    pub class: ClassSpec,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: Option<GridConfig>,
}

fn config_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Attributes a library error to the config section that caused it.
fn in_section<T>(section: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { .. } | Error::Io(_) | Error::Parse { .. } => e,
        Error::InvalidParameter { name, reason } => {
            config_err(&format!("{section}.{name}"), reason)
        }
        other => config_err(section, other.to_string()),
    })
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let field = [
                "dataset",
                "index_map",
                "class",
                "estimator",
                "bounds",
                "grid",
                "seed",
            ]
            .into_iter()
            .find(|f| msg.contains(&format!("`{f}`")))
            .unwrap_or("config");
            config_err(field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err("config", format!("{}: {e}", path.display())))?;
        Config::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimator.trials < 2 {
            return Err(config_err(
                "estimator.trials",
                format!("need at least 2, got {}", self.estimator.trials),
            ));
        }
        in_section("class", self.class.validate())?;
        in_section("estimator.ascent", self.estimator.ascent.validate())?;
        if !(self.bounds.c1 > 0.0 && self.bounds.c2 > 0.0) {
            return Err(config_err("bounds", "c1 and c2 must be positive"));
        }
        match &self.index_map {
            IndexMapConfig::MultiCategory { t } | IndexMapConfig::MultiTask { t } if *t == 0 => {
                Err(config_err("index_map.t", "must be at least 1"))
            }
            _ => Ok(()),
        }
    }

    /// Applies the global `--seed` / `--trials` overrides.
    pub fn with_overrides(mut self, global: &GlobalArgs) -> Result<Config> {
        if let Some(s) = global.seed {
            self.seed = s;
        }
        if let Some(t) = global.trials {
            self.estimator.trials = t;
        }
        self.validate()?;
        Ok(self)
    }

    fn stream(&self, salt: u64) -> RngStream {
        RngStream::new(self.seed).derive(salt)
    }

    pub fn load_sample(&self) -> Result<DataSample> {
        match &self.dataset {
            DatasetConfig::Path { path } => load_dataset(path),
            DatasetConfig::Generator {
                generator,
                n_examples,
            } => in_section(
                "dataset",
                generate(generator, *n_examples, &self.stream(SALT_DATA)),
            ),
            DatasetConfig::Rows { rows } => in_section("dataset", DataSample::new(rows.clone())),
        }
    }

    pub fn build_map(&self, n_examples: usize) -> Result<IndexMap> {
        let r = match &self.index_map {
            IndexMapConfig::MultiCategory { t } => make_mc(*t, n_examples),
            IndexMapConfig::MultiTask { t } => {
                if !n_examples.is_multiple_of(*t) {
                    return Err(config_err(
                        "index_map.t",
                        format!("N = {n_examples} is not a multiple of T = {t}"),
                    ));
                }
                make_mt(*t, n_examples / t)
            }
            IndexMapConfig::OneVsOne { labels } => {
                if labels.len() != n_examples {
                    return Err(config_err(
                        "index_map.labels",
                        format!("{} labels for {n_examples} examples", labels.len()),
                    ));
                }
                make_one_vs_one(labels)
            }
            IndexMapConfig::Custom { subsets } => IndexMap::custom(n_examples, subsets.clone()),
        };
        in_section("index_map", r)
    }
}

pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub const COMPARE_HEADER: &str =
    "quantity,class,alpha,T,n_or_N,K,p,value,stderr,trials,seed,status,theta,trace,lambda_max";

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub quantity: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub trials: Option<usize>,
    pub status: String,
}

impl CompareRow {
    fn bound(quantity: &str, value: f64) -> Self {
        CompareRow {
            quantity: quantity.into(),
            value,
            stderr: None,
            trials: None,
            status: "ok".into(),
        }
    }

    fn estimate(quantity: &str, e: &McEstimate) -> Self {
        CompareRow {
            quantity: quantity.into(),
            value: e.mean,
            stderr: Some(e.stderr),
            trials: Some(e.trials),
            status: "ok".into(),
        }
    }
}

/// Columns shared by every row of one table.
struct RowContext {
    class: String,
    alpha: String,
    t: usize,
    n_or_n: String,
    k: String,
    p: String,
    seed: u64,
    theta: f64,
    trace: f64,
    lambda_max: f64,
}

impl RowContext {
    fn new(class: &ClassSpec, sample: &DataSample, map: &IndexMap, seed: u64) -> Result<Self> {
        let s = SpectralSummary::of(&empirical_covariance(sample))?;
        let n_or_n = match map.kind() {
            IndexKind::MultiTask => fmt_num(map.per_task_n()),
            _ => sample.len().to_string(),
        };
        let (k, p) = match class {
            ClassSpec::MixedNorm(m) => (String::new(), fmt_num(m.p)),
            ClassSpec::TraceNorm(_) => (String::new(), String::new()),
            ClassSpec::Composite(c) => (c.k.to_string(), String::new()),
        };
        Ok(RowContext {
            class: class.label(),
            alpha: map.kind().label().to_string(),
            t: map.t(),
            n_or_n,
            k,
            p,
            seed,
            theta: map.theta(),
            trace: s.trace,
            lambda_max: s.lambda_max,
        })
    }

    fn line(&self, r: &CompareRow) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.quantity,
            csv_field(&self.class),
            self.alpha,
            self.t,
            self.n_or_n,
            self.k,
            self.p,
            fmt_num(r.value),
            fmt_opt(r.stderr),
            r.trials.map(|t| t.to_string()).unwrap_or_default(),
            self.seed,
            r.status,
            fmt_num(self.theta),
            fmt_num(self.trace),
            fmt_num(self.lambda_max),
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Estimates for the configured class: Rademacher, Gaussian (normalized by
/// `N`) and, for small linear instances, the exact value.
pub fn estimate_rows(cfg: &Config, sample: &DataSample, map: &IndexMap) -> Result<Vec<CompareRow>> {
    let ascent = cfg.estimator.ascent;
    let ascent = (!cfg.class.is_linear()).then_some(&ascent);
    let trials = cfg.estimator.trials;
    let mut rows = Vec::new();
    let r = estimate_r(
        &cfg.class,
        sample,
        map,
        trials,
        &cfg.stream(SALT_RADEMACHER),
        ascent,
    )?;
    let mut row = CompareRow::estimate("estimate", &r);
    if !cfg.class.is_linear() {
        row.status = "ascent_lower_estimate".into();
    }
    rows.push(row);
    if cfg.estimator.gaussian {
        let g = estimate_gaussian_width(
            &cfg.class,
            sample,
            map,
            trials,
            &cfg.stream(SALT_GAUSS),
            ascent,
        )?;
        rows.push(CompareRow::estimate("gaussian_estimate", &g.normalized));
    }
    if cfg.class.is_linear() && map.support() <= cfg.estimator.exact_max_support {
        let exact = exact_r(&cfg.class, sample, map, cfg.estimator.exact_max_support)?;
        rows.push(CompareRow::bound("exact", exact));
    }
    Ok(rows)
}

fn report_row(quantity: &str, rep: &BoundReport) -> CompareRow {
    CompareRow::bound(quantity, rep.value)
}

/// Bounds applicable to the configured class and index map. Bounds whose
/// preconditions fail are reported with value `nan` and the reason as status.
pub fn bound_rows(cfg: &Config, sample: &DataSample, map: &IndexMap) -> Result<Vec<CompareRow>> {
    let mut rows = Vec::new();
    let push = |rows: &mut Vec<CompareRow>, q: &str, r: Result<BoundReport>| -> Result<()> {
        match r {
            Ok(rep) => {
                rows.push(report_row(q, &rep));
                if let Some(m) = rep.alternate("simplified") {
                    let mut alt = CompareRow::bound(&format!("{q}_simplified"), m);
                    alt.status = "reference".into();
                    rows.push(alt);
                }
                Ok(())
            }
            Err(
                e @ (Error::PreconditionFailed { .. }
                | Error::NotMultiCategory
                | Error::NotUnitNorm { .. }
                | Error::DegenerateExponent),
            ) => {
                let mut row = CompareRow::bound(q, f64::NAN);
                row.status = format!("not_applicable: {}", e).replace(',', ";");
                rows.push(row);
                Ok(())
            }
            Err(e) => Err(e),
        }
    };
    match &cfg.class {
        ClassSpec::MixedNorm(s) if s.p >= 2.0 => {
            push(&mut rows, "lower_bound", bound_mixed_lower(s, sample, map))?;
            push(&mut rows, "upper_bound", bound_mixed_upper(s, sample, map))?;
        }
        ClassSpec::MixedNorm(s) => {
            if s.p > 1.0 {
                push(
                    &mut rows,
                    "upper_bound_small_p",
                    bound_mixed_small_p(s, sample, map),
                )?;
            }
            if map.subsets().iter().all(|x| x.len() == map.n_examples()) {
                push(&mut rows, "upper_bound_mc", bound_mixed_mc(s, sample, map))?;
            }
        }
        ClassSpec::TraceNorm(s) => {
            push(&mut rows, "upper_bound", bound_tracenorm(s, sample, map))?;
            let frob = MixedNormSpec { p: 2.0, b: s.b };
            push(
                &mut rows,
                "lower_bound_w22",
                bound_mixed_lower(&frob, sample, map),
            )?;
            if sample.check_unit_norm(crate::bounds::UNIT_NORM_TOL).is_ok()
                && matches!(map.kind(), IndexKind::MultiCategory | IndexKind::MultiTask)
            {
                let q = quotient_trace_vs_frobenius(sample, map)?;
                let mut row = report_row("quotient_trace_vs_frobenius", &q);
                row.status = "reference".into();
                rows.push(row);
            }
        }
        ClassSpec::Composite(s) => {
            let c = ChainConstants {
                c1: cfg.bounds.c1,
                c2: cfg.bounds.c2,
            };
            let rep = bound_composite(s, sample, map, c)?;
            let mut row = report_row("upper_bound_nominal", &rep);
            row.status = "nominal_constants".into();
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Flags estimates outside `[lower − 3σ, upper + 3σ]` and bounds on the
/// wrong side of an estimate.
fn flag_sandwich(rows: &mut [CompareRow]) {
    let est = rows
        .iter()
        .find(|r| r.quantity == "estimate" && r.stderr.is_some())
        .map(|r| (r.value, r.stderr.unwrap_or(0.0)));
    let exact = rows.iter().find(|r| r.quantity == "exact").map(|r| r.value);
    let Some((mean, se)) = est else { return };
    let band = MC_BAND * se + 1e-12 * mean.abs();
    let mut below = false;
    let mut above = false;
    for r in rows.iter_mut() {
        if r.status != "ok" || r.value.is_nan() {
            continue;
        }
        let is_lower = r.quantity.starts_with("lower_bound");
        let is_upper = r.quantity.starts_with("upper_bound");
        let violated = (is_lower && mean + band < r.value)
            || (is_upper && mean - band > r.value)
            || (is_lower && exact.is_some_and(|x| x < r.value * (1.0 - 1e-12)))
            || (is_upper && exact.is_some_and(|x| x > r.value * (1.0 + 1e-12)));
        if violated {
            r.status = "violated".into();
            below |= is_lower;
            above |= is_upper;
        }
    }
    if let Some(r) = rows.iter_mut().find(|r| r.quantity == "estimate") {
        if below {
            r.status = "below_lower_bound".into();
        } else if above {
            r.status = "above_upper_bound".into();
        }
    }
}

fn render(ctx: &RowContext, rows: &[CompareRow]) -> String {
    let mut out = String::from(COMPARE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&ctx.line(r));
        out.push('\n');
    }
    out
}

fn table(cfg: &Config, estimates: bool, bounds: bool) -> Result<String> {
    let sample = cfg.load_sample()?;
    let map = cfg.build_map(sample.len())?;
    let ctx = RowContext::new(&cfg.class, &sample, &map, cfg.seed)?;
    let mut rows = Vec::new();
    if estimates {
        rows.extend(estimate_rows(cfg, &sample, &map)?);
    }
    if bounds {
        rows.extend(bound_rows(cfg, &sample, &map)?);
    }
    if estimates && bounds {
        flag_sandwich(&mut rows);
    }
    Ok(render(&ctx, &rows))
}

pub fn run_estimate(cfg: &Config) -> Result<String> {
    table(cfg, true, false)
}

pub fn run_bound(cfg: &Config) -> Result<String> {
    table(cfg, false, true)
}

pub fn run_compare(cfg: &Config) -> Result<String> {
    table(cfg, true, true)
}

pub const SCALING_HEADER: &str =
    "quantity,class,alpha,T,n,N,K,d,p,value,stderr,trials,seed,ratio_to_sqrtT";

/// Long-format sweep over `grid`. At every point the data are regenerated
/// with `N = n·T` and both the mc and mt maps are evaluated, followed by the
/// ratio `R_mc/R_mt` and its ratio to `√T`.
pub fn run_scaling_study(cfg: &Config) -> Result<String> {
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| config_err("grid", "scaling-study needs a grid"))?;
    let DatasetConfig::Generator { generator, .. } = &cfg.dataset else {
        return Err(config_err(
            "dataset",
            "scaling-study needs a generator dataset",
        ));
    };
    let base_t = match &cfg.index_map {
        IndexMapConfig::MultiCategory { t } | IndexMapConfig::MultiTask { t } => *t,
        _ => {
            return Err(config_err(
                "index_map",
                "scaling-study supports mc and mt only",
            ))
        }
    };
    let base_n = match &cfg.dataset {
        DatasetConfig::Generator { n_examples, .. } => (n_examples / base_t).max(1),
        _ => unreachable!(),
    };
    let base_k = match cfg.class {
        ClassSpec::Composite(c) => c.k,
        _ => 0,
    };
    let axis = |v: &Vec<usize>, base: usize| if v.is_empty() { vec![base] } else { v.clone() };
    let ts = axis(&grid.t, base_t);
    let ns = axis(&grid.n, base_n);
    let ks = axis(&grid.k, base_k);
    let ds = axis(&grid.d, generator.d);
    if [&ts, &ns, &ds].iter().any(|a| a.contains(&0)) {
        return Err(config_err("grid", "T, n and d must be positive"));
    }
    if matches!(cfg.class, ClassSpec::Composite(_)) && ks.contains(&0) {
        return Err(config_err("grid.k", "K must be positive"));
    }

    let mut out = String::from(SCALING_HEADER);
    out.push('\n');
    for &t in &ts {
        for &n in &ns {
            for &k in &ks {
                for &d in &ds {
                    let mut point = cfg.clone();
                    let mut gen = generator.clone();
                    gen.d = d;
                    if let SpectrumProfile::Whitened { d_eff } = &mut gen.profile {
                        *d_eff = d;
                    }
                    point.dataset = DatasetConfig::Generator {
                        generator: gen,
                        n_examples: n * t,
                    };
                    if let ClassSpec::Composite(c) = &mut point.class {
                        c.k = k;
                    }
                    scaling_point(&point, t, n, d, &mut out)?;
                }
            }
        }
    }
    Ok(out)
}

fn scaling_point(cfg: &Config, t: usize, n: usize, d: usize, out: &mut String) -> Result<()> {
    let sample = cfg.load_sample()?;
    let big_n = sample.len();
    let k = match cfg.class {
        ClassSpec::Composite(c) => c.k.to_string(),
        _ => String::new(),
    };
    let p = match cfg.class {
        ClassSpec::MixedNorm(m) => fmt_num(m.p),
        _ => String::new(),
    };
    let label = csv_field(&cfg.class.label());
    let mut line =
        |quantity: &str, alpha: &str, value: f64, e: Option<&McEstimate>, ratio: Option<f64>| {
            let _ = writeln!(
                out,
                "{quantity},{label},{alpha},{t},{n},{big_n},{k},{d},{p},{},{},{},{},{}",
                fmt_num(value),
                fmt_opt(e.map(|e| e.stderr)),
                e.map(|e| e.trials.to_string()).unwrap_or_default(),
                cfg.seed,
                fmt_opt(ratio),
            );
        };
    let mut means = Vec::new();
    for (alpha, map) in [("mc", make_mc(t, big_n)?), ("mt", make_mt(t, n)?)] {
        let rows = estimate_rows(cfg, &sample, &map)?;
        let est = rows[0].clone();
        let e = McEstimate {
            mean: est.value,
            stderr: est.stderr.unwrap_or(0.0),
            trials: est.trials.unwrap_or(0),
            master_seed: cfg.seed,
        };
        line("estimate", alpha, e.mean, Some(&e), None);
        means.push(e);
        for b in bound_rows(cfg, &sample, &map)? {
            if !b.value.is_nan() {
                line(&b.quantity, alpha, b.value, None, None);
            }
        }
    }
    let (mc, mt) = (means[0], means[1]);
    if mt.mean > 0.0 {
        let ratio = mc.mean / mt.mean;
        // delta method on the ratio of two independent means
        let se = ratio * ((mc.stderr / mc.mean).powi(2) + (mt.stderr / mt.mean).powi(2)).sqrt();
        let e = McEstimate {
            mean: ratio,
            stderr: se,
            trials: mc.trials,
            master_seed: cfg.seed,
        };
        line(
            "theta_ratio",
            "mc/mt",
            ratio,
            Some(&e),
            Some(ratio / (t as f64).sqrt()),
        );
    }
    Ok(())
}

pub const VERIFY_HEADER: &str = "check,instance,lhs,rhs,stderr,status";

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySummary {
    pub lines: Vec<(String, CheckOutcome)>,
}

impl VerifySummary {
    pub fn all_passed(&self) -> bool {
        self.lines.iter().all(|(_, c)| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.lines.iter().filter(|(_, c)| !c.passed).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(VERIFY_HEADER);
        out.push('\n');
        for (inst, c) in &self.lines {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.name,
                inst,
                fmt_num(c.lhs),
                fmt_num(c.rhs),
                fmt_opt(c.stderr),
                if c.passed { "pass" } else { "FAIL" }
            );
        }
        out
    }
}

fn unit_sample(d: usize, n: usize, stream: &RngStream) -> Result<DataSample> {
    generate(&SpectrumSpec::whitened(d, true), n, stream)
}

fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("shape matches")
}

/// Runs every verifier on small seeded instances. `corrupt_bound_constant`
/// multiplies the mixed-norm and trace-norm upper bounds before they are
/// compared with their estimates.
pub fn run_verify(seed: u64, corrupt_bound_constant: Option<f64>) -> Result<VerifySummary> {
    let master = RngStream::new(seed);
    let factor = corrupt_bound_constant.unwrap_or(1.0);
    let mut lines = Vec::new();
    let mut rng = master.derive(1).rng();

    for i in 0..12u64 {
        let n = 1 + (i as usize % 6);
        let d = 1 + (i as usize % 4);
        let p = 1 + (i % 3) as u32;
        let x = generate(
            &SpectrumSpec {
                d,
                profile: SpectrumProfile::Whitened { d_eff: d },
                unit_norm: i % 2 == 0,
            },
            n,
            &master.derive(100 + i),
        )?;
        let r = check_subexp_lemma(&x, p, 8)?;
        lines.push((
            format!("n={n} d={d} p={p}"),
            CheckOutcome {
                name: "subexp_lemma".into(),
                lhs: r.min_eigenvalue_of_gap,
                rhs: -crate::verifiers::PSD_TOL,
                stderr: None,
                passed: r.passed,
            },
        ));
    }

    for i in 0..12u64 {
        let n = 1 + (i as usize % 10);
        let d = 1 + (i as usize % 5);
        let x = unit_sample(d, n, &master.derive(200 + i))?;
        lines.push((format!("n={n} d={d}"), check_szarek_lower(&x)?));
    }

    for i in 0..12u64 {
        let (n, t, d) = (2, 2, 1 + (i as usize % 3));
        let x = unit_sample(d, n, &master.derive(300 + i))?;
        let lip = rng.random_range(0.5..2.0);
        let hs: Vec<MaxAffine> = (0..n)
            .map(|_| MaxAffine::random(t, 3, lip, &mut rng))
            .collect();
        let class =
            FiniteLinearClass::new((0..6).map(|_| random_matrix(t, d, &mut rng)).collect())?;
        lines.push((
            format!("n={n} T={t} d={d}"),
            check_contraction(&x, &hs, &class, DEFAULT_MAX_SUPPORT)?,
        ));
    }

    for (i, (t, n, d)) in [(1usize, 4usize, 3usize), (2, 3, 4), (4, 4, 8)]
        .into_iter()
        .enumerate()
    {
        let x = unit_sample(d, t * n, &master.derive(400 + i as u64))?;
        let map = make_mt(t, n)?;
        lines.push((
            format!("mt T={t} n={n} d={d}"),
            check_main_tool(&x, &map, 2000, &master.derive(450 + i as u64))?,
        ));
    }

    let trials = 2000;
    for (i, (t, n, d, p)) in [
        (2usize, 8usize, 4usize, 2.0),
        (4, 8, 8, f64::INFINITY),
        (3, 6, 5, 3.0),
    ]
    .into_iter()
    .enumerate()
    {
        let x = unit_sample(d, t * n, &master.derive(500 + i as u64))?;
        for (alpha, map) in [("mt", make_mt(t, n)?), ("mc", make_mc(t, t * n)?)] {
            let spec = MixedNormSpec::new(p, 1.0)?;
            let class = ClassSpec::MixedNorm(spec);
            let est = estimate_r(
                &class,
                &x,
                &map,
                trials,
                &master.derive(550 + i as u64),
                None,
            )?;
            let upper = bound_mixed_upper(&spec, &x, &map)?.value * factor;
            let lower = bound_mixed_lower(&spec, &x, &map)?.value;
            let inst = format!("{alpha} T={t} n={n} d={d} p={}", fmt_num(p));
            lines.push((
                inst.clone(),
                CheckOutcome {
                    name: "mixed_upper".into(),
                    lhs: est.mean,
                    rhs: upper,
                    stderr: Some(est.stderr),
                    passed: est.mean - MC_BAND * est.stderr <= upper,
                },
            ));
            lines.push((
                inst,
                CheckOutcome {
                    name: "mixed_lower".into(),
                    lhs: lower,
                    rhs: est.mean,
                    stderr: Some(est.stderr),
                    passed: lower <= est.mean + MC_BAND * est.stderr,
                },
            ));
        }
    }

    for (i, (t, n, d)) in [(4usize, 8usize, 6usize), (8, 4, 16)]
        .into_iter()
        .enumerate()
    {
        let x = unit_sample(d, t * n, &master.derive(600 + i as u64))?;
        let map = make_mt(t, n)?;
        let spec = TraceNormSpec { b: 1.0 };
        let est = estimate_r(
            &ClassSpec::TraceNorm(spec),
            &x,
            &map,
            trials,
            &master.derive(650 + i as u64),
            None,
        )?;
        let bound = bound_tracenorm(&spec, &x, &map)?.value * factor;
        lines.push((
            format!("mt T={t} n={n} d={d}"),
            CheckOutcome {
                name: "tracenorm_upper".into(),
                lhs: est.mean,
                rhs: bound,
                stderr: Some(est.stderr),
                passed: est.mean - MC_BAND * est.stderr <= bound,
            },
        ));
    }

    for (i, w_norm) in [HiddenNorm::TwoInf, HiddenNorm::TwoTwo, HiddenNorm::TwoOne]
        .into_iter()
        .enumerate()
    {
        let (t, n, d, k) = (2usize, 4usize, 4usize, 3usize);
        let x = unit_sample(d, t * n, &master.derive(700 + i as u64))?;
        let map = make_mt(t, n)?;
        let spec = CompositeSpec {
            k,
            w_norm,
            b: 1.0,
            a: 1.0,
            activation: crate::classes::Activation::TANH,
        };
        let s = master.derive(750 + i as u64);
        let inst = format!("mt T={t} n={n} d={d} K={k} {}", w_norm.label());
        lines.push((
            inst.clone(),
            check_gaussian_width_component(&spec, &x, &map, 2000, &s)?,
        ));
        lines.push((
            inst.clone(),
            check_diameter_component(&spec, &x, &map, 200, &s.derive(1))?,
        ));
        lines.push((
            inst.clone(),
            check_lipschitz_component(&spec, &x, &map, 200, &s.derive(2))?,
        ));
        lines.push((
            inst,
            check_q_component(&spec, &x, &map, 10, 400, &s.derive(3))?,
        ));
    }

    Ok(VerifySummary { lines })
}

pub fn run_gen_data(args: &GenDataArgs, seed: u64) -> Result<String> {
    let profile = match (args.power_law, args.d_eff) {
        (Some(e), _) => SpectrumProfile::PowerLaw { exponent: e },
        (None, d_eff) => SpectrumProfile::Whitened {
            d_eff: d_eff.unwrap_or(args.d),
        },
    };
    let spec = SpectrumSpec {
        d: args.d,
        profile,
        unit_norm: !args.raw,
    };
    let x = generate(&spec, args.n, &RngStream::new(seed).derive(SALT_DATA))?;
    Ok(to_csv(&x))
}

/// Runs `f` on a dedicated pool of `threads` workers (global pool when
/// `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(config_err("threads", "must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| config_err("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Executes a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let g = cli.global.clone();
    let load = |p: &Path| Config::load(p)?.with_overrides(&g);
    let out = g.out.as_deref();
    match &cli.command {
        Command::Estimate { config } => {
            let cfg = load(config)?;
            emit(out, &with_threads(g.threads, || run_estimate(&cfg))??)?;
        }
        Command::Bound { config } => {
            let cfg = load(config)?;
            emit(out, &run_bound(&cfg)?)?;
        }
        Command::Compare { config } => {
            let cfg = load(config)?;
            emit(out, &with_threads(g.threads, || run_compare(&cfg))??)?;
        }
        Command::ScalingStudy { config } => {
            let cfg = load(config)?;
            emit(out, &with_threads(g.threads, || run_scaling_study(&cfg))??)?;
        }
        Command::Verify {
            corrupt_bound_constant,
        } => {
            let seed = g.seed.unwrap_or(0);
            let summary = with_threads(g.threads, || run_verify(seed, *corrupt_bound_constant))??;
            emit(out, &summary.to_csv())?;
            if !summary.all_passed() {
                eprintln!("{} check(s) failed", summary.failures());
                return Ok(1);
            }
        }
        Command::GenData(args) => {
            emit(out, &run_gen_data(args, g.seed.unwrap_or(0))?)?;
        }
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAIR: &str = r#"{
        "dataset": {"rows": [[1, 0], [0, 1]]},
        "index_map": {"kind": "mt", "t": 1},
        "class": {"type": "mixed_norm", "p": "inf", "b": 1},
        "estimator": {"trials": 500},
        "seed": 7
    }"#;

    fn value(csv: &str, quantity: &str) -> f64 {
        let line = csv
            .lines()
            .find(|l| l.starts_with(&format!("{quantity},")))
            .unwrap_or_else(|| panic!("no row {quantity} in\n{csv}"));
        line.split(',').nth(7).unwrap().parse().unwrap()
    }

    #[test]
    fn orthonormal_pair_compare() {
        let cfg = Config::from_json(PAIR).unwrap();
        let csv = run_compare(&cfg).unwrap();
        assert!(csv.starts_with(COMPARE_HEADER));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((value(&csv, "estimate") - h).abs() < 1e-12);
        assert!((value(&csv, "exact") - h).abs() < 1e-12);
        assert!((value(&csv, "lower_bound") - 0.5).abs() < 1e-12);
        assert!((value(&csv, "upper_bound") - h).abs() < 1e-12);
        assert!(!csv.contains("violated"));
    }

    #[test]
    fn trials_zero_names_field() {
        let text = PAIR.replace("\"trials\": 500", "\"trials\": 0");
        match Config::from_json(&text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "estimator.trials"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_and_bad_fields_are_config_errors() {
        let bad = PAIR.replace("\"b\": 1", "\"b\": -1");
        match Config::from_json(&bad) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "class.B"),
            other => panic!("unexpected {other:?}"),
        }
        let extra = PAIR.replace("\"seed\": 7", "\"seed\": 7, \"colour\": 1");
        assert!(matches!(
            Config::from_json(&extra),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn compare_is_deterministic_across_threads() {
        let cfg = Config::from_json(PAIR).unwrap();
        let a = with_threads(Some(1), || run_compare(&cfg))
            .unwrap()
            .unwrap();
        let b = with_threads(Some(4), || run_compare(&cfg))
            .unwrap()
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn verify_passes_and_detects_corruption() {
        let ok = run_verify(0, None).unwrap();
        assert!(ok.all_passed(), "{}", ok.to_csv());
        let bad = run_verify(0, Some(0.01)).unwrap();
        assert!(!bad.all_passed());
        assert_eq!(ok.to_csv().lines().count(), ok.lines.len() + 1);
    }

    #[test]
    fn gen_data_round_trip() {
        let args = GenDataArgs {
            d: 3,
            n: 5,
            d_eff: None,
            power_law: None,
            raw: false,
        };
        let text = run_gen_data(&args, 1).unwrap();
        let x = crate::datagen::parse_csv(&text).unwrap();
        assert_eq!((x.len(), x.dim()), (5, 3));
    }
}
