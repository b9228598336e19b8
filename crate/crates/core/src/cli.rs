//! The `geomx` command-line driver. Each stage reads and writes files in an
//! output directory; `model.json` carries state between stages.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{stage_seed, stages, PipelineConfig};
use crate::data::{ExpData, Provenance, RawData};
use crate::diagnostics::{
    gauge_overlay, local_shape_fit, pp_points, qq_exponential, write_local_shape_csv, write_overlay_csv,
    write_pairs_csv,
};
use crate::error::{Error, Result};
use crate::fit::{block_bootstrap_se, fit_mle, select_model, BootstrapConfig};
use crate::margins::{fit_marginals, from_exponential, to_exponential};
use crate::model_file::{ModelFile, ModelProvenance};
use crate::predict::{
    chi_empirical, chi_model, estimate_set_probability, estimate_set_probability_unchecked, max_valid_k,
    simulate_conditional, ChiPoint, KSelection, ProbEstimate, Rectangle, RegionSpec,
};
use crate::radial::{decompose, exceedances, fit_threshold};
use crate::simulators::{oracle_probability, sample, CopulaSpec};

pub const EXP_FILE: &str = "exp.csv";
pub const MODEL_FILE: &str = "model.json";

#[derive(Debug, Parser)]
#[command(
    name = "geomx",
    version,
    about = "Geometric multivariate extremes: fit limit-set models and estimate extreme-set probabilities"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for all outputs.
    #[arg(long, default_value = "geomx-out")]
    pub out_dir: PathBuf,
    /// Model file; defaults to `<out-dir>/model.json`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out_dir.join(MODEL_FILE))
    }

    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::from_path(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

/// Conditioning level: a number `>= 1` or `auto`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KArg {
    Auto,
    Value(f64),
}

impl FromStr for KArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(KArg::Auto);
        }
        s.parse::<f64>().map(KArg::Value).map_err(|_| format!("expected a number or `auto`, got `{s}`"))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit marginal models and write data on exponential margins.
    Transform {
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate the threshold surface and extract exceedances.
    Threshold {
        /// Exponential-margin data; defaults to `<out-dir>/exp.csv`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit candidate gauges and select by AIC.
    Fit {
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write PP, QQ, gauge-overlay and local-shape tables.
    Diagnose {
        #[command(flatten)]
        common: Common,
    },
    /// Draw from the fitted model above `k` times the threshold.
    Simulate {
        #[arg(long, default_value_t = 10_000)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate the probability of a rectangle on exponential margins.
    Prob {
        /// Bounds as `lo:hi` per coordinate, e.g. `10:12,10:12` or `8:inf,8:inf`.
        #[arg(long)]
        region: Rectangle,
        #[arg(long, default_value = "auto")]
        k: KArg,
        #[arg(long, default_value_t = 10_000)]
        m: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Model-based and empirical tail dependence curves.
    Chi {
        /// Index subsets (0-based), separated by `;`, e.g. `0,1;0,1,2`.
        #[arg(long)]
        subsets: String,
        /// Comma-separated levels in (0, 1).
        #[arg(long)]
        u: String,
        #[arg(long, default_value_t = 10_000)]
        m: usize,
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Brute-force Monte Carlo probability under a reference distribution.
    Oracle {
        /// Distribution as JSON text or a path to a JSON file.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        region: Rectangle,
        #[arg(long, default_value_t = 1_000_000)]
        n_mc: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Draw a synthetic data set on exponential margins.
    Sample {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Transform, threshold, fit and diagnose in one go.
    Run {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, &text)?;
    Ok(text)
}

fn read_exp(path: &Path) -> Result<ExpData> {
    let f = File::open(path)
        .map_err(|e| Error::Validation(format!("cannot read exponential-margin data {}: {e}", path.display())))?;
    ExpData::read_csv(f)
}

fn parse_spec(text: &str) -> Result<CopulaSpec> {
    let t = text.trim();
    let json = if t.starts_with('{') { t.to_string() } else { std::fs::read_to_string(t)? };
    serde_json::from_str(&json).map_err(|e| Error::Validation(format!("distribution spec: {e}")))
}

pub fn cmd_transform(input: &Path, cfg: &PipelineConfig, out_dir: &Path, model_path: &Path) -> Result<ModelFile> {
    std::fs::create_dir_all(out_dir)?;
    let raw = RawData::from_path(input)?;
    let created_unix = cfg
        .timestamps
        .then(|| std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs()));
    let provenance = ModelProvenance {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        input: Some(input.display().to_string()),
        created_unix,
    };
    let mut model = ModelFile::new(raw.names.clone(), provenance);
    let exp = if cfg.exponential_input {
        ExpData::new(raw.values.clone(), Provenance::Marginal(raw.names.clone()))?
    } else {
        let marg = fit_marginals(&raw, cfg.tail_quantile)?;
        let exp = to_exponential(&raw, &marg)?;
        model.marginals = Some(marg);
        exp
    };
    exp.write_csv(create(&out_dir.join(EXP_FILE))?)?;
    model.save(model_path)?;
    println!("transformed {} rows x {} columns", exp.nrows(), exp.dim());
    Ok(model)
}

pub fn cmd_threshold(
    exp_path: &Path,
    cfg: &PipelineConfig,
    tau: Option<f64>,
    out_dir: &Path,
    model_path: &Path,
) -> Result<ModelFile> {
    let mut model = ModelFile::load(model_path)?;
    let x = read_exp(exp_path)?;
    if x.dim() != model.columns.len() {
        return Err(Error::Dimension { expected: model.columns.len(), got: x.dim() });
    }
    let tau = tau.unwrap_or(cfg.tau);
    let ra = decompose(&x);
    let t = fit_threshold(&ra, tau, &cfg.window)?;
    let exc = exceedances(&ra, &t);
    t.write_csv(create(&out_dir.join("threshold.csv"))?)?;
    println!("threshold tau={tau}: {} of {} points exceed", exc.n0(), exc.n_total);
    model.threshold = Some(t);
    model.exceedances = Some(exc);
    model.fits.clear();
    model.selected = None;
    model.bootstrap = None;
    model.save(model_path)?;
    Ok(model)
}

pub fn cmd_fit(exp_path: &Path, cfg: &PipelineConfig, out_dir: &Path, model_path: &Path) -> Result<ModelFile> {
    let mut model = ModelFile::load(model_path)?;
    let exc = model.exceedances()?.clone();
    let d = model.columns.len();
    let mut fits = Vec::new();
    for cand in &cfg.candidates {
        let template = cand.template(d)?;
        match fit_mle(&exc, &template, &cfg.fit) {
            Ok(f) => fits.push(f),
            Err(e) => log::warn!("candidate {} failed: {e}", cand.family),
        }
    }
    let selected = select_model(&fits).ok_or_else(|| Error::FitFailure("every candidate fit failed".into()))?;
    let mut table = csv::Writer::from_writer(create(&out_dir.join("aic.csv"))?);
    table.write_record(["family", "n_params", "nll", "aic", "selected"])?;
    println!("{:<20} {:>8} {:>14} {:>14}", "family", "params", "nll", "aic");
    for (i, f) in fits.iter().enumerate() {
        let mark = if i == selected { "*" } else { "" };
        println!("{:<20} {:>8} {:>14.4} {:>14.4} {mark}", f.gauge.family().name(), f.n_params(), f.nll, f.aic);
        table.write_record([
            f.gauge.family().name().to_string(),
            f.n_params().to_string(),
            format!("{:?}", f.nll),
            format!("{:?}", f.aic),
            (i == selected).to_string(),
        ])?;
    }
    table.flush()?;
    model.bootstrap = None;
    if let Some(b) = &cfg.bootstrap {
        let x = read_exp(exp_path)?;
        let boot = BootstrapConfig {
            block_len: b.block_len,
            replicates: b.replicates,
            seed: stage_seed(model.provenance.seed, stages::BOOTSTRAP),
        };
        let template = fits[selected].gauge.clone();
        let t = model.threshold()?;
        let res = block_bootstrap_se(&x, &template, t.tau, &t.window, &cfg.fit, &boot)?;
        println!("bootstrap standard errors: {:?}", res.se);
        model.bootstrap = Some(res);
    }
    model.fits = fits;
    model.selected = Some(selected);
    model.save(model_path)?;
    Ok(model)
}

pub fn cmd_diagnose(out_dir: &Path, model_path: &Path) -> Result<()> {
    let model = ModelFile::load(model_path)?;
    let fit = model.selected_fit()?;
    let exc = model.exceedances()?;
    let t = model.threshold()?;
    let pp = pp_points(fit, exc)?;
    write_pairs_csv(create(&out_dir.join("pp.csv"))?, ["theoretical", "model"], &pp.points)?;
    write_pairs_csv(create(&out_dir.join("qq.csv"))?, ["theoretical", "model"], &qq_exponential(fit, exc)?)?;
    let steps = match t.dim {
        2 => 200,
        3 => 50,
        _ => 10,
    };
    write_overlay_csv(create(&out_dir.join("gauge_overlay.csv"))?, &gauge_overlay(t, &fit.gauge, steps)?)?;
    let local = local_shape_fit(exc, &t.window, &fit.gauge)?;
    write_local_shape_csv(create(&out_dir.join("local_shape.csv"))?, &local)?;
    println!(
        "KS statistic {:.4} (5% critical value {:.4}); {} local shape windows",
        pp.ks_stat,
        crate::diagnostics::ks_critical_5pct(exc.n0()),
        local.len()
    );
    Ok(())
}

fn resolve_seed(common: &Common, model: &ModelFile, stage: u64) -> u64 {
    common.seed.unwrap_or_else(|| stage_seed(model.provenance.seed, stage))
}

pub fn cmd_simulate(m: usize, k: f64, seed: u64, out_dir: &Path, model_path: &Path) -> Result<()> {
    let model = ModelFile::load(model_path)?;
    let s = simulate_conditional(model.selected_fit()?, model.exceedances()?, m, k, seed)?;
    s.write_csv(create(&out_dir.join("draws.csv"))?, &model.columns)?;
    if let Some(marg) = &model.marginals {
        let x = ExpData::new(s.points.clone(), Provenance::Marginal(model.columns.clone()))?;
        from_exponential(&x, marg)?.write_csv(create(&out_dir.join("draws_original.csv"))?)?;
    }
    #[derive(Serialize)]
    struct Meta {
        m: usize,
        k: f64,
        seed: u64,
    }
    write_json(&out_dir.join("draws.meta.json"), &Meta { m, k, seed })?;
    println!("simulated {m} points above k={k} (seed {seed})");
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ProbReport {
    pub region: Rectangle,
    pub k_mode: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_selection: Option<KSelection>,
    pub estimate: ProbEstimate,
    pub warnings: Vec<String>,
}

pub fn cmd_prob(
    region: &Rectangle,
    k: KArg,
    m: usize,
    seed: u64,
    out_dir: &Path,
    model_path: &Path,
) -> Result<ProbReport> {
    let model = ModelFile::load(model_path)?;
    let (fit, exc, t) = (model.selected_fit()?, model.exceedances()?, model.threshold()?);
    if region.dim() != t.dim {
        return Err(Error::Dimension { expected: t.dim, got: region.dim() });
    }
    let spec = RegionSpec::Rectangle(region.clone());
    let mut warnings = Vec::new();
    let report = match k {
        KArg::Auto => {
            let sel = max_valid_k(region, t)?;
            let estimate = if sel.clamped {
                let msg = format!(
                    "region is not fully above the threshold surface (boundary ratio {:.4}); k clamped to 1 and only the part above the surface is estimated",
                    sel.min_ratio
                );
                warnings.push(msg);
                estimate_set_probability_unchecked(fit, exc, &spec, 1.0, m, seed)?
            } else {
                estimate_set_probability(fit, exc, t, &spec, sel.k, m, seed)?
            };
            ProbReport { region: region.clone(), k_mode: "auto", k_selection: Some(sel), estimate, warnings }
        }
        KArg::Value(k) => {
            let estimate = estimate_set_probability(fit, exc, t, &spec, k, m, seed)?;
            ProbReport { region: region.clone(), k_mode: "fixed", k_selection: None, estimate, warnings }
        }
    };
    print!("{}", write_json(&out_dir.join("prob.json"), &report)?);
    Ok(report)
}

#[derive(Debug, Serialize)]
pub struct ChiReport {
    pub subset: Vec<usize>,
    pub model: Vec<ChiPoint>,
    pub empirical: Vec<ChiPoint>,
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| Error::Validation(format!("cannot parse {what} `{t}`"))))
        .collect()
}

pub fn cmd_chi(
    subsets: &str,
    u: &str,
    m: usize,
    seed: u64,
    exp_path: &Path,
    out_dir: &Path,
    model_path: &Path,
) -> Result<Vec<ChiReport>> {
    let model = ModelFile::load(model_path)?;
    let (fit, exc, t) = (model.selected_fit()?, model.exceedances()?, model.threshold()?);
    let u_grid: Vec<f64> = parse_list(u, "level")?;
    let x = read_exp(exp_path)?;
    let mut reports = Vec::new();
    for (i, part) in subsets.split(';').enumerate() {
        let subset: Vec<usize> = parse_list(part, "index")?;
        reports.push(ChiReport {
            model: chi_model(fit, exc, t, &subset, &u_grid, m, seed.wrapping_add(1000 * i as u64))?,
            empirical: chi_empirical(&x, &subset, &u_grid)?,
            subset,
        });
    }
    write_json(&out_dir.join("chi.json"), &reports)?;
    let mut w = csv::Writer::from_writer(create(&out_dir.join("chi.csv"))?);
    w.write_record(["subset", "source", "u", "chi", "lo", "hi"])?;
    for r in &reports {
        let name: Vec<String> = r.subset.iter().map(usize::to_string).collect();
        for (source, pts) in [("model", &r.model), ("empirical", &r.empirical)] {
            for p in pts {
                w.write_record([
                    name.join(" "),
                    source.to_string(),
                    format!("{:?}", p.u),
                    format!("{:?}", p.chi),
                    format!("{:?}", p.lo),
                    format!("{:?}", p.hi),
                ])?;
            }
        }
    }
    w.flush()?;
    println!("wrote chi curves for {} subsets", reports.len());
    Ok(reports)
}

#[derive(Debug, Serialize)]
pub struct OracleReport {
    pub spec: CopulaSpec,
    pub region: Rectangle,
    pub estimate: f64,
    pub mc_se: f64,
    pub n_mc: u64,
    pub seed: u64,
}

pub fn cmd_oracle(spec: &CopulaSpec, region: &Rectangle, n_mc: u64, seed: u64, out_dir: &Path) -> Result<OracleReport> {
    let est = oracle_probability(spec, &RegionSpec::Rectangle(region.clone()), n_mc, seed)?;
    let report = OracleReport {
        spec: spec.clone(),
        region: region.clone(),
        estimate: est.estimate,
        mc_se: est.mc_se,
        n_mc,
        seed,
    };
    print!("{}", write_json(&out_dir.join("oracle.json"), &report)?);
    Ok(report)
}

fn input_or(input: &Option<PathBuf>, fallback: Option<&PathBuf>) -> Result<PathBuf> {
    input
        .clone()
        .or_else(|| fallback.cloned())
        .ok_or_else(|| Error::Validation("no input file: pass --input or set `input` in the configuration".into()))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Transform { input, common } => {
            let cfg = common.config()?;
            let input = input_or(&input, cfg.input.as_ref())?;
            cmd_transform(&input, &cfg, &common.out_dir, &common.model_path())?;
        }
        Command::Threshold { input, tau, common } => {
            let cfg = common.config()?;
            std::fs::create_dir_all(&common.out_dir)?;
            let exp = input.unwrap_or_else(|| common.out_dir.join(EXP_FILE));
            cmd_threshold(&exp, &cfg, tau, &common.out_dir, &common.model_path())?;
        }
        Command::Fit { input, common } => {
            let cfg = common.config()?;
            std::fs::create_dir_all(&common.out_dir)?;
            let exp = input.unwrap_or_else(|| common.out_dir.join(EXP_FILE));
            cmd_fit(&exp, &cfg, &common.out_dir, &common.model_path())?;
        }
        Command::Diagnose { common } => {
            std::fs::create_dir_all(&common.out_dir)?;
            cmd_diagnose(&common.out_dir, &common.model_path())?;
        }
        Command::Simulate { m, k, common } => {
            std::fs::create_dir_all(&common.out_dir)?;
            let model = ModelFile::load(common.model_path())?;
            let seed = resolve_seed(&common, &model, stages::SIMULATE);
            cmd_simulate(m, k, seed, &common.out_dir, &common.model_path())?;
        }
        Command::Prob { region, k, m, common } => {
            std::fs::create_dir_all(&common.out_dir)?;
            let model = ModelFile::load(common.model_path())?;
            let seed = resolve_seed(&common, &model, stages::PROB);
            cmd_prob(&region, k, m, seed, &common.out_dir, &common.model_path())?;
        }
        Command::Chi { subsets, u, m, input, common } => {
            std::fs::create_dir_all(&common.out_dir)?;
            let model = ModelFile::load(common.model_path())?;
            let seed = resolve_seed(&common, &model, stages::CHI);
            let exp = input.unwrap_or_else(|| common.out_dir.join(EXP_FILE));
            cmd_chi(&subsets, &u, m, seed, &exp, &common.out_dir, &common.model_path())?;
        }
        Command::Oracle { spec, region, n_mc, common } => {
            std::fs::create_dir_all(&common.out_dir)?;
            let seed = common.seed.unwrap_or(1);
            cmd_oracle(&parse_spec(&spec)?, &region, n_mc, seed, &common.out_dir)?;
        }
        Command::Sample { spec, n, output, seed } => {
            let x = sample(&parse_spec(&spec)?, n, seed)?;
            x.write_csv(create(&output)?)?;
            println!("wrote {n} rows to {}", output.display());
        }
        Command::Run { input, tau, common } => {
            let cfg = common.config()?;
            let input = input_or(&input, cfg.input.as_ref())?;
            let (out, model) = (&common.out_dir, common.model_path());
            cmd_transform(&input, &cfg, out, &model)?;
            cmd_threshold(&out.join(EXP_FILE), &cfg, tau, out, &model)?;
            cmd_fit(&out.join(EXP_FILE), &cfg, out, &model)?;
            cmd_diagnose(out, &model)?;
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_entry() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
