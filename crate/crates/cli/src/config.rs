//! Run configuration: a TOML file merged with command-line overrides.
//!
//! Paths inside a file are relative to that file's directory; paths given as
//! flags are relative to the working directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use rdoll::backtest::{AlphaTiming, BacktestConfig, Strategy};
use rdoll::data_io::{load_style_loadings, read_matrix};
use rdoll::riskmodel::{AnsatzWeights, ModelSpec, ModelTerminal};
use serde::{Deserialize, Serialize};

/// Classification depth of the CSV format.
pub const DEPTH: usize = 3;

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Price CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Classification CSV.
    #[arg(long)]
    pub classification: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub lookback: Option<usize>,
    #[arg(long)]
    pub universe_size: Option<usize>,
    /// Dates between universe refreshes.
    #[arg(long)]
    pub interval: Option<usize>,
    /// Gross dollars per day, long plus short.
    #[arg(long)]
    pub investment: Option<f64>,
    /// `equal`, `two-term`, or comma-separated specific,levels...,market.
    #[arg(long)]
    pub weights: Option<String>,
    /// Comma-separated strategy names.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<String>>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Model spec file for the optimized strategies.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Derive a missing adj_open column from open·adj_close/close.
    #[arg(long)]
    pub derive_adj_open: bool,
    /// `same-day-open` or `previous-overnight`.
    #[arg(long)]
    pub alpha_timing: Option<String>,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum WeightsValue {
    Preset(String),
    List(Vec<f64>),
}

impl WeightsValue {
    fn parse_flag(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            return Ok(Self::Preset(s.to_string()));
        }
        let list = s
            .split(',')
            .map(|w| w.trim().parse::<f64>().with_context(|| format!("bad weight '{w}'")))
            .collect::<Result<_>>()?;
        Ok(Self::List(list))
    }

    pub fn resolve(&self) -> Result<AnsatzWeights> {
        match self {
            Self::Preset(p) if p == "equal" => Ok(AnsatzWeights::equal(DEPTH)),
            Self::Preset(p) if p == "two-term" => Ok(AnsatzWeights::two_term(DEPTH)),
            Self::Preset(p) => bail!("unknown weight preset '{p}' (expected equal or two-term)"),
            Self::List(w) => Ok(AnsatzWeights::from_slice(w)?),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    data: Option<PathBuf>,
    classification: Option<PathBuf>,
    out: Option<PathBuf>,
    lookback: Option<usize>,
    universe_size: Option<usize>,
    interval: Option<usize>,
    investment: Option<f64>,
    weights: Option<WeightsValue>,
    strategies: Option<Vec<String>>,
    jobs: Option<usize>,
    model: Option<PathBuf>,
    derive_adj_open: Option<bool>,
    alpha_timing: Option<String>,
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    toml::from_str(&text).map_err(|e| anyhow!("{}: {}", path.display(), e.message()))
}

fn relative_to(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Everything a command needs, fully resolved. Written to the output
/// directory as `run_config.toml`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub classification: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub lookback: usize,
    pub universe_size: usize,
    pub interval: usize,
    pub investment: f64,
    pub weights: Vec<f64>,
    pub strategies: Vec<String>,
    pub jobs: usize,
    pub derive_adj_open: bool,
    pub alpha_timing: String,
}

impl RunConfig {
    pub fn resolve(args: &RunArgs) -> Result<Self> {
        let (file, base) = match &args.config {
            Some(p) => (
                read_toml::<ConfigFile>(p)?,
                p.parent().map(Path::to_path_buf).unwrap_or_default(),
            ),
            None => (ConfigFile::default(), PathBuf::new()),
        };
        let from_file = |p: Option<PathBuf>| p.map(|p| relative_to(&base, p));
        let defaults = BacktestConfig::default();
        let weights = match &args.weights {
            Some(w) => WeightsValue::parse_flag(w)?,
            None => file.weights.unwrap_or(WeightsValue::Preset("equal".into())),
        };
        let strategies = args
            .strategies
            .clone()
            .or(file.strategies)
            .unwrap_or_else(|| Strategy::standard_set(DEPTH).iter().map(Strategy::name).collect());
        let config = Self {
            data: args.data.clone().or(from_file(file.data)),
            classification: args.classification.clone().or(from_file(file.classification)),
            out: args.out.clone().or(from_file(file.out)),
            model: args.model.clone().or(from_file(file.model)),
            lookback: args.lookback.or(file.lookback).unwrap_or(defaults.lookback),
            universe_size: args.universe_size.or(file.universe_size).unwrap_or(defaults.universe_size),
            interval: args.interval.or(file.interval).unwrap_or(defaults.interval),
            investment: args.investment.or(file.investment).unwrap_or(defaults.investment),
            weights: weights.resolve()?.to_vec(),
            strategies: strategies.iter().map(|s| s.trim().to_string()).collect(),
            jobs: args.jobs.or(file.jobs).unwrap_or(0),
            derive_adj_open: args.derive_adj_open || file.derive_adj_open.unwrap_or(false),
            alpha_timing: args
                .alpha_timing
                .clone()
                .or(file.alpha_timing)
                .unwrap_or_else(|| "same-day-open".into()),
        };
        config.alpha_timing()?;
        Ok(config)
    }

    pub fn alpha_timing(&self) -> Result<AlphaTiming> {
        match self.alpha_timing.as_str() {
            "same-day-open" => Ok(AlphaTiming::SameDayOpen),
            "previous-overnight" => Ok(AlphaTiming::PreviousOvernight),
            other => bail!("unknown alpha timing '{other}' (expected same-day-open or previous-overnight)"),
        }
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        field
            .as_deref()
            .ok_or_else(|| anyhow!("no {name} given (use --{name} or the config file)"))
    }

    /// Backtest settings with every optimized strategy using `model`.
    pub fn backtest_config(&self, model: &ModelSpec) -> Result<BacktestConfig> {
        let strategies = self
            .strategies
            .iter()
            .map(|name| {
                let s: Strategy = name.parse()?;
                Ok(match s {
                    Strategy::Optimized { alpha_weighting, .. } => Strategy::Optimized {
                        model: model.clone(),
                        alpha_weighting,
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let config = BacktestConfig {
            lookback: self.lookback,
            universe_size: self.universe_size,
            interval: self.interval,
            investment: self.investment,
            strategies,
            alpha_timing: self.alpha_timing()?,
        };
        config.validate(DEPTH)?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    weights: Option<WeightsValue>,
    terminal: Option<String>,
    fcm: Option<PathBuf>,
    style_loadings: Option<PathBuf>,
}

/// The correlation model for the optimizer. Weights come from the command
/// line or config when given there, else from the model file.
pub fn resolve_model(
    config: &RunConfig,
    weights_overridden: bool,
    tickers: &[String],
) -> Result<ModelSpec> {
    let Some(path) = &config.model else {
        return Ok(ModelSpec::heuristic(AnsatzWeights::from_slice(&config.weights)?));
    };
    let file: ModelFile = read_toml(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let weights = match (&file.weights, weights_overridden) {
        (Some(w), false) => w.resolve()?,
        _ => AnsatzWeights::from_slice(&config.weights)?,
    };
    let terminal = match file.terminal.as_deref().unwrap_or("scalar-x") {
        "scalar-x" => ModelTerminal::ScalarX,
        "none" => ModelTerminal::None,
        "explicit-fcm" => {
            let fcm = file
                .fcm
                .clone()
                .ok_or_else(|| anyhow!("{}: terminal explicit-fcm needs an fcm path", path.display()))?;
            ModelTerminal::ExplicitFcm(read_matrix(&relative_to(&base, fcm))?)
        }
        other => bail!(
            "{}: unknown terminal '{other}' (expected scalar-x, none or explicit-fcm)",
            path.display()
        ),
    };
    if file.fcm.is_some() && !matches!(terminal, ModelTerminal::ExplicitFcm(_)) {
        bail!("{}: fcm is only used with terminal explicit-fcm", path.display());
    }
    let style_loadings = file
        .style_loadings
        .map(|p| load_style_loadings(&relative_to(&base, p), tickers))
        .transpose()?;
    Ok(ModelSpec {
        weights,
        terminal,
        style_loadings,
    })
}

/// Whether the weights were set anywhere other than the model file.
pub fn weights_overridden(args: &RunArgs) -> Result<bool> {
    if args.weights.is_some() {
        return Ok(true);
    }
    match &args.config {
        Some(p) => Ok(read_toml::<ConfigFile>(p)?.weights.is_some()),
        None => Ok(false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "data = \"p.csv\"\nlookback = 10\nweights = [0.5, 0.5, 0, 0, 0]\nstrategies = [\"intercept\"]\n",
        )
        .unwrap();
        let args = RunArgs {
            config: Some(path),
            lookback: Some(5),
            ..Default::default()
        };
        let c = RunConfig::resolve(&args).unwrap();
        assert_eq!(c.lookback, 5);
        assert_eq!(c.data, Some(dir.path().join("p.csv")));
        assert_eq!(c.weights, [0.5, 0.5, 0.0, 0.0, 0.0]);
        assert_eq!(c.strategies, ["intercept"]);
        assert_eq!(c.universe_size, 2000);
    }

    #[test]
    fn defaults_and_presets() {
        let c = RunConfig::resolve(&RunArgs::default()).unwrap();
        assert_eq!(c.weights, [0.2; 5]);
        assert_eq!(c.strategies.len(), 5);
        let args = RunArgs {
            weights: Some("two-term".into()),
            ..Default::default()
        };
        assert_eq!(RunConfig::resolve(&args).unwrap().weights, [0.5, 0.5, 0.0, 0.0, 0.0]);
        let args = RunArgs {
            weights: Some("0.1, 0.2,0.3,0.2,0.2".into()),
            ..Default::default()
        };
        assert_eq!(RunConfig::resolve(&args).unwrap().weights[2], 0.3);
        let args = RunArgs {
            weights: Some("flat".into()),
            ..Default::default()
        };
        assert!(RunConfig::resolve(&args).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "lookbak = 3\n").unwrap();
        let args = RunArgs {
            config: Some(path),
            ..Default::default()
        };
        assert!(RunConfig::resolve(&args).unwrap_err().to_string().contains("lookbak"));
    }

    #[test]
    fn optimized_strategies_get_the_model() {
        let c = RunConfig::resolve(&RunArgs {
            strategies: Some(vec!["sector".into(), "optimized".into()]),
            ..Default::default()
        })
        .unwrap();
        let model = ModelSpec::heuristic(AnsatzWeights::two_term(DEPTH));
        let b = c.backtest_config(&model).unwrap();
        assert!(matches!(&b.strategies[1], Strategy::Optimized { model: m, .. } if *m == model));
    }
}
