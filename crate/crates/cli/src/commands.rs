use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rdoll::backtest::{overnight_returns, run_backtest, BacktestReport, PricePanel};
use rdoll::data_io::{
    load_classification, load_full_classification, load_prices, write_classification,
    write_label_map, write_prices, write_report, DataManifest, PriceOptions,
};
use rdoll::portfolio::fallacy_diagnostics;
use rdoll::riskmodel::{check_positive_definite, ModelTerminal, DEFAULT_DENSE_CAP};
use rdoll::synthetic::{generate, SyntheticConfig};
use rdoll::taxonomy::{validate_tree, ClassificationTree, THREE_LEVEL_NAMES};

use crate::config::{resolve_model, weights_overridden, RunArgs, RunConfig};

/// Nested and flattened covariances must agree to this relative tolerance.
const FLATTEN_TOL: f64 = 1e-12;
const UNIT_DIAGONAL_TOL: f64 = 1e-12;
const PROJECTOR_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-8;

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn init_threads(jobs: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| anyhow!("cannot start {jobs} worker threads: {e}"))
}

struct Loaded {
    panel: PricePanel,
    tree: ClassificationTree,
    manifest: DataManifest,
    classification: rdoll::data_io::Classification,
}

fn load_market(config: &RunConfig) -> Result<Loaded> {
    let data = config.require(&config.data, "data")?;
    let class_path = config.require(&config.classification, "classification")?;
    let prices = load_prices(
        data,
        PriceOptions {
            derive_adj_open: config.derive_adj_open,
        },
    )?;
    let classification = load_classification(class_path, prices.panel.tickers())?;
    for t in &classification.excluded {
        log::warn!("{t} has no classification; excluded");
    }
    let manifest = DataManifest::new(data, class_path, &prices, &classification);
    Ok(Loaded {
        panel: prices.panel.select(&classification.classified),
        tree: classification.tree.clone(),
        manifest,
        classification,
    })
}

pub fn backtest(args: &RunArgs) -> Result<()> {
    let config = RunConfig::resolve(args)?;
    let out = config.require(&config.out, "out")?.to_path_buf();
    // validate settings before touching any data
    let heuristic = rdoll::riskmodel::ModelSpec::heuristic(rdoll::riskmodel::AnsatzWeights::from_slice(
        &config.weights,
    )?);
    config.backtest_config(&heuristic)?;
    init_threads(config.jobs)?;

    let loaded = load_market(&config)?;
    let model = resolve_model(&config, weights_overridden(args)?, loaded.panel.tickers())?;
    let bt = config.backtest_config(&model)?;
    let report = run_backtest(&bt, &loaded.panel, &loaded.tree)?;

    write_report(&report, &out)?;
    write_text(&out.join("run_config.toml"), &config.to_toml()?)?;
    write_text(&out.join("manifest.toml"), &toml::to_string(&loaded.manifest)?)?;
    write_label_map(&loaded.classification, &out.join("labels.csv"))?;
    print_metrics(&report);
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn print_metrics(report: &BacktestReport) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{} dates from {} to {}",
        report.dates.len(),
        report.dates.first().map_or("-", String::as_str),
        report.dates.last().map_or("-", String::as_str)
    );
    let _ = writeln!(out, "{:<26} {:>9} {:>8} {:>8}", "strategy", "ROC %", "SR", "CPS");
    let fmt = |x: Option<f64>| x.map_or("undef".to_string(), |v| format!("{v:.2}"));
    for s in &report.strategies {
        let _ = writeln!(
            out,
            "{:<26} {:>9.2} {:>8} {:>8}",
            s.name,
            100.0 * s.metrics.roc,
            fmt(s.metrics.sharpe),
            fmt(s.metrics.cps)
        );
    }
}

pub fn model_check(args: &RunArgs) -> Result<()> {
    let config = RunConfig::resolve(args)?;
    let class_path = config.require(&config.classification, "classification")?;
    let (tickers, classification) = load_full_classification(class_path)?;
    let tree = &classification.tree;
    let n = tree.n_stocks();
    let report = validate_tree(tree);
    let cards = tree.cardinalities();
    println!("stocks {n}, groups (K, F, L) = ({}, {}, {})", cards[0], cards[1], cards[2]);
    if !report.is_valid() {
        bail!("classification has empty groups: {:?}", report.empty_groups);
    }
    if n > DEFAULT_DENSE_CAP {
        bail!("{n} stocks exceed the dense check limit of {DEFAULT_DENSE_CAP}");
    }

    let model = resolve_model(&config, weights_overridden(args)?, &tickers)?;
    let stocks: Vec<usize> = (0..n).collect();
    let nested = model.build_nested(tree, &stocks)?;
    let expanded = nested.expand();
    let flat = nested.flatten().gamma();
    let deviation = expanded
        .iter()
        .zip(flat.iter())
        .map(|(a, b)| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
        .filter(|d| d.is_finite())
        .fold(0.0, f64::max);
    let flat_ok = deviation <= FLATTEN_TOL;
    println!("flattened vs nested max relative deviation {deviation:.3e} {}", pass(flat_ok));

    let pd = check_positive_definite(&flat)?;
    println!(
        "eigenvalues min {:.6e} max {:.6e} positive definite {}",
        pd.min_eigenvalue,
        pd.max_eigenvalue,
        pass(pd.positive_definite)
    );

    let diag_dev = flat.diagonal().iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max);
    let diag_ok = match model.terminal {
        ModelTerminal::ExplicitFcm(_) => {
            println!("unit diagonal not expected with an explicit terminal (max |diag - 1| = {diag_dev:.3e})");
            true
        }
        _ => {
            let ok = diag_dev <= UNIT_DIAGONAL_TOL;
            println!("unit diagonal max |diag - 1| = {diag_dev:.3e} {}", pass(ok));
            ok
        }
    };
    if !(flat_ok && pd.positive_definite && diag_ok) {
        bail!("model check failed");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallacyLevel {
    Identity,
    Level(usize),
}

pub fn parse_level(s: &str) -> Result<FallacyLevel> {
    if s == "identity" {
        return Ok(FallacyLevel::Identity);
    }
    THREE_LEVEL_NAMES
        .iter()
        .position(|n| *n == s)
        .map(FallacyLevel::Level)
        .ok_or_else(|| anyhow!("unknown level '{s}' (expected sub-industry, industry, sector or identity)"))
}

pub fn demo_fallacy(args: &RunArgs, level: FallacyLevel, window: Option<usize>) -> Result<()> {
    let config = RunConfig::resolve(args)?;
    let loaded = load_market(&config)?;
    let returns = overnight_returns(&loaded.panel);
    let t = window.unwrap_or(returns.n_dates()).min(returns.n_dates());
    if t < 2 {
        bail!("need at least two return dates, have {}", returns.n_dates());
    }
    let complete: Vec<usize> = (0..returns.n_stocks())
        .filter(|&i| (0..t).all(|s| returns.get(i, s).is_some()))
        .collect();
    let dropped = returns.n_stocks() - complete.len();
    if dropped > 0 {
        log::warn!("{dropped} stocks lack a full return window and are left out");
    }
    let r = nalgebra::DMatrix::from_fn(t, complete.len(), |s, k| {
        returns.get(complete[k], s).expect("complete window")
    });
    let loadings = match level {
        FallacyLevel::Identity => nalgebra::DMatrix::identity(complete.len(), complete.len()),
        FallacyLevel::Level(l) => loaded.tree.restrict(&complete).stock_loadings(l).to_matrix(),
    };
    let rep = fallacy_diagnostics(&r, &loadings)?;
    println!("dates {}, stocks {}, factors {}", rep.n_dates, rep.n_stocks, rep.n_factors);
    let proj_ok = rep.idempotence_error <= PROJECTOR_TOL && rep.symmetry_error <= PROJECTOR_TOL;
    println!(
        "projector max |Q^2 - Q| {:.3e}, max |Q - Q^T| {:.3e} {}",
        rep.idempotence_error,
        rep.symmetry_error,
        pass(proj_ok)
    );
    let trace_ok = rep.trace_relative_error() <= TRACE_TOL;
    println!(
        "trace identity model {:.10e} sample {:.10e} relative error {:.3e} {}",
        rep.trace_model,
        rep.trace_sample,
        rep.trace_relative_error(),
        pass(trace_ok)
    );
    let mut gaps: Vec<f64> = rep.variance_gaps.iter().copied().collect();
    gaps.sort_by(f64::total_cmp);
    let q = |p: f64| gaps[((gaps.len() - 1) as f64 * p).round() as usize];
    println!(
        "per-stock variance gaps min {:.3e} q25 {:.3e} median {:.3e} q75 {:.3e} max {:.3e}",
        q(0.0),
        q(0.25),
        q(0.5),
        q(0.75),
        q(1.0)
    );
    println!(
        "naive specific variances negative for {} of {} stocks",
        rep.negative_specific_count(),
        rep.n_stocks
    );
    if !(proj_ok && trace_ok) {
        bail!("fallacy diagnostics failed their identities");
    }
    Ok(())
}

pub struct SynthArgs {
    pub out: PathBuf,
    pub stocks: usize,
    pub dates: usize,
    pub seed: u64,
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let config = SyntheticConfig {
        n_stocks: args.stocks,
        n_dates: args.dates,
        seed: args.seed,
        ..SyntheticConfig::default()
    };
    let market = generate(&config)?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write_prices(&market.panel, &args.out.join("prices.csv"))?;
    let rows: Vec<(String, [String; 3])> = market
        .panel
        .tickers()
        .iter()
        .cloned()
        .zip(market.labels)
        .collect();
    write_classification(&rows, &args.out.join("classification.csv"))?;
    println!(
        "wrote {} stocks x {} dates to {}",
        market.panel.n_stocks(),
        market.panel.n_dates(),
        args.out.display()
    );
    Ok(())
}
