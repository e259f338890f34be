//! Command-line surface: configuration, dataset ingestion and validation,
//! and the subcommands for fitting, effect estimation, quantile effects,
//! sensitivity grids, simulation, and the self-check battery.
//!
//! ## Configuration
//!
//! A run is described by a plain-text key = value file plus command-line
//! flag overrides; **flags win** over the file, the file wins over the
//! `ZOIBMED_SEED` environment variable, which wins over built-in defaults.
//! Grammar: one `key = value` pair per line; `#` starts a comment; blank
//! lines are ignored; list values are comma-separated; per-column keys use
//! a dotted suffix. Keys:
//!
//! ```text
//! input            path to the CSV dataset
//! outcome          outcome column name
//! mediator         mediator column name
//! treatment        treatment column name (values 0/1)
//! covariates       comma list of covariate columns (default: all others)
//! categorical      comma list of covariate columns to dummy-code
//! bounds.<col>     lo,hi rescale bounds for outcome/mediator/covariates
//! levels.<col>     admissible levels for a categorical column (others
//!                  become row rejections)
//! heterogeneous    true/false (per-arm coefficient banks)
//! prior_sd         ridge prior SD (omit for plain ML)
//! k                mediator draws per unit (default 10)
//! b                bootstrap replicates (default 200)
//! quantiles        q list for quantile effects (default 0.25,0.5,0.75)
//! lambdas          sensitivity grid (default: pilot range, 9 points + 0)
//! rho              copula correlation for the logit scale (default 0.95)
//! sensitivity_scale  linear | logit | both (default both)
//! seed             master seed (default: $ZOIBMED_SEED, else 20260817)
//! out_dir          artifact directory (default "out")
//! formats          csv,json (default both)
//! threads          worker threads (default: all cores)
//! original_scale   true/false: display effects ×(hi−lo) (default true)
//! x100             true/false: ×100 display scaling for simulation tables
//! scenarios        simulation scenario indices (default 1,2,3,4,5)
//! reps             simulation replicates per scenario (default 50)
//! n_sim            simulated dataset size (default 899)
//! stratified       true/false: stratify bootstrap by arm (default true)
//! ```
//!
//! ## Determinism
//!
//! Identical config + seed produce byte-identical artifacts, for any
//! `threads` setting: all Monte Carlo work is keyed by derived counter
//! seeds and reduced in fixed order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::check;
use crate::error::{Error, Result};
use crate::fit::{bootstrap_fit, fit_all, pilot_lambda_range, FittedModels, SensitivityScale};
use crate::gformula::{
    estimate_average_effects, estimate_quantile_effects, percentile_interval, MonteCarloConfig,
};
use crate::model::{
    boundary_summary, rescale_to_unit, standardize_covariates, BoundarySummary, Dataset,
    ModelSpec, RescaleRecord, StandardizeRecord,
};
use crate::rngutil::{cell_seed, derive_seed, tags};
use crate::sensitivity::sensitivity_grid;
use crate::simharness::{
    bundled_covariate_pool, bundled_reference_coefficients, run_scenario, write_bundled_assets,
    HarnessConfig, ScenarioSpec,
};
use crate::special::normal_p_value_two_sided;

/// Default master seed when neither flag, config, nor env provides one.
pub const DEFAULT_SEED: u64 = 20_260_817;
/// Environment variable consulted for the default seed.
pub const SEED_ENV_VAR: &str = "ZOIBMED_SEED";

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

/// Which sensitivity scales a `sensitivity` run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SensitivityChoice {
    Linear,
    Logit,
    Both,
}

impl SensitivityChoice {
    fn scales(self) -> Vec<SensitivityScale> {
        match self {
            SensitivityChoice::Linear => vec![SensitivityScale::Linear],
            SensitivityChoice::Logit => vec![SensitivityScale::Logit],
            SensitivityChoice::Both => vec![SensitivityScale::Linear, SensitivityScale::Logit],
        }
    }
}

/// Output formats for table artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Fully resolved run configuration (defaults + env + file + flags).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub outcome: Option<String>,
    pub mediator: Option<String>,
    pub treatment: Option<String>,
    /// Covariate columns; empty means every column not claimed by another
    /// role.
    pub covariates: Vec<String>,
    /// Covariate columns to dummy-code (reference cell = first level in
    /// lexicographic order).
    pub categorical: Vec<String>,
    /// Rescale bounds per variable name.
    pub bounds: BTreeMap<String, (f64, f64)>,
    /// Admissible level sets for categorical columns (optional).
    pub levels: BTreeMap<String, Vec<String>>,
    pub heterogeneous: bool,
    pub prior_sd: Option<f64>,
    pub k: usize,
    pub b: usize,
    pub quantiles: Vec<f64>,
    /// Sensitivity λ grid; empty means the pilot range (9 points, 0
    /// inserted).
    pub lambdas: Vec<f64>,
    pub rho: f64,
    pub sensitivity_scale: SensitivityChoice,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub formats: Vec<OutputFormat>,
    pub threads: Option<usize>,
    pub original_scale: bool,
    pub x100: bool,
    pub scenarios: Vec<usize>,
    pub reps: usize,
    pub n_sim: usize,
    pub stratified: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            outcome: None,
            mediator: None,
            treatment: None,
            covariates: Vec::new(),
            categorical: Vec::new(),
            bounds: BTreeMap::new(),
            levels: BTreeMap::new(),
            heterogeneous: false,
            prior_sd: None,
            k: 10,
            b: 200,
            quantiles: vec![0.25, 0.5, 0.75],
            lambdas: Vec::new(),
            rho: crate::sensitivity::DEFAULT_RHO,
            sensitivity_scale: SensitivityChoice::Both,
            seed: DEFAULT_SEED,
            out_dir: PathBuf::from("out"),
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
            threads: None,
            original_scale: true,
            x100: false,
            scenarios: vec![1, 2, 3, 4, 5],
            reps: 50,
            n_sim: 899,
            stratified: true,
        }
    }
}

impl RunConfig {
    fn model_spec(&self) -> ModelSpec {
        ModelSpec { heterogeneous: self.heterogeneous, prior_sd: self.prior_sd }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.b < 2 {
            return bad(format!("b must be at least 2, got {}", self.b));
        }
        for &q in &self.quantiles {
            if !(q > 0.0 && q < 1.0) {
                return bad(format!("quantiles must lie strictly in (0,1), got {q}"));
            }
        }
        for &l in &self.lambdas {
            if !l.is_finite() {
                return bad(format!("lambda grid entries must be finite, got {l}"));
            }
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0,1], got {}", self.rho));
        }
        if self.formats.is_empty() {
            return bad("at least one output format is required".into());
        }
        if self.scenarios.is_empty() || self.scenarios.iter().any(|&s| !(1..=5).contains(&s)) {
            return bad(format!("scenarios must be a nonempty subset of 1..=5, got {:?}", self.scenarios));
        }
        if self.reps < 2 {
            return bad(format!("reps must be at least 2, got {}", self.reps));
        }
        if self.n_sim == 0 {
            return bad("n_sim must be positive".into());
        }
        for (col, &(lo, hi)) in &self.bounds {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return bad(format!("bounds.{col} must satisfy lo < hi, got [{lo}, {hi}]"));
            }
        }
        Ok(())
    }

    fn require_data_roles(&self) -> Result<(&Path, &str, &str, &str)> {
        let input = self
            .input
            .as_deref()
            .ok_or_else(|| Error::Config("this command needs `input` (CSV path)".into()))?;
        let outcome = self
            .outcome
            .as_deref()
            .ok_or_else(|| Error::Config("this command needs `outcome` (column name)".into()))?;
        let mediator = self
            .mediator
            .as_deref()
            .ok_or_else(|| Error::Config("this command needs `mediator` (column name)".into()))?;
        let treatment = self
            .treatment
            .as_deref()
            .ok_or_else(|| Error::Config("this command needs `treatment` (column name)".into()))?;
        Ok((input, outcome, mediator, treatment))
    }
}

// ---------------------------------------------------------------------------
// Config file + flag merging
// ---------------------------------------------------------------------------

/// A partially specified configuration: one layer of the precedence stack.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartialConfig {
    pub input: Option<PathBuf>,
    pub outcome: Option<String>,
    pub mediator: Option<String>,
    pub treatment: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub categorical: Option<Vec<String>>,
    pub bounds: BTreeMap<String, (f64, f64)>,
    pub levels: BTreeMap<String, Vec<String>>,
    pub heterogeneous: Option<bool>,
    pub prior_sd: Option<Option<f64>>,
    pub k: Option<usize>,
    pub b: Option<usize>,
    pub quantiles: Option<Vec<f64>>,
    pub lambdas: Option<Vec<f64>>,
    pub rho: Option<f64>,
    pub sensitivity_scale: Option<SensitivityChoice>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub formats: Option<Vec<OutputFormat>>,
    pub threads: Option<usize>,
    pub original_scale: Option<bool>,
    pub x100: Option<bool>,
    pub scenarios: Option<Vec<usize>>,
    pub reps: Option<usize>,
    pub n_sim: Option<usize>,
    pub stratified: Option<bool>,
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true/false, got '{v}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num::<T>(key, s))
        .collect()
}

fn parse_string_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse_scale_choice(v: &str) -> Result<SensitivityChoice> {
    match v {
        "linear" => Ok(SensitivityChoice::Linear),
        "logit" => Ok(SensitivityChoice::Logit),
        "both" => Ok(SensitivityChoice::Both),
        _ => Err(Error::Config(format!(
            "sensitivity_scale: expected linear|logit|both, got '{v}'"
        ))),
    }
}

fn parse_formats(v: &str) -> Result<Vec<OutputFormat>> {
    parse_string_list(v)
        .iter()
        .map(|s| match s.as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("formats: expected csv|json, got '{other}'"))),
        })
        .collect()
}

/// Parse the key = value config grammar documented at the top of this
/// module.
pub fn parse_config_file(text: &str) -> Result<PartialConfig> {
    let mut cfg = PartialConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "config line {}: expected key = value, got '{raw}'",
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        match key {
            "input" => cfg.input = Some(PathBuf::from(value)),
            "outcome" => cfg.outcome = Some(value.to_string()),
            "mediator" => cfg.mediator = Some(value.to_string()),
            "treatment" => cfg.treatment = Some(value.to_string()),
            "covariates" => cfg.covariates = Some(parse_string_list(value)),
            "categorical" => cfg.categorical = Some(parse_string_list(value)),
            "heterogeneous" => cfg.heterogeneous = Some(parse_bool(key, value)?),
            "prior_sd" => {
                cfg.prior_sd = Some(if value.is_empty() || value == "none" {
                    None
                } else {
                    Some(parse_num::<f64>(key, value)?)
                })
            }
            "k" => cfg.k = Some(parse_num(key, value)?),
            "b" => cfg.b = Some(parse_num(key, value)?),
            "quantiles" => cfg.quantiles = Some(parse_list(key, value)?),
            "lambdas" => cfg.lambdas = Some(parse_list(key, value)?),
            "rho" => cfg.rho = Some(parse_num(key, value)?),
            "sensitivity_scale" => cfg.sensitivity_scale = Some(parse_scale_choice(value)?),
            "seed" => cfg.seed = Some(parse_num(key, value)?),
            "out_dir" => cfg.out_dir = Some(PathBuf::from(value)),
            "formats" => cfg.formats = Some(parse_formats(value)?),
            "threads" => cfg.threads = Some(parse_num(key, value)?),
            "original_scale" => cfg.original_scale = Some(parse_bool(key, value)?),
            "x100" => cfg.x100 = Some(parse_bool(key, value)?),
            "scenarios" => cfg.scenarios = Some(parse_list(key, value)?),
            "reps" => cfg.reps = Some(parse_num(key, value)?),
            "n_sim" => cfg.n_sim = Some(parse_num(key, value)?),
            "stratified" => cfg.stratified = Some(parse_bool(key, value)?),
            _ => {
                if let Some(col) = key.strip_prefix("bounds.") {
                    let parts = parse_list::<f64>(key, value)?;
                    if parts.len() != 2 {
                        return Err(Error::Config(format!("{key}: expected lo,hi")));
                    }
                    cfg.bounds.insert(col.to_string(), (parts[0], parts[1]));
                } else if let Some(col) = key.strip_prefix("levels.") {
                    cfg.levels.insert(col.to_string(), parse_string_list(value));
                } else {
                    return Err(Error::Config(format!(
                        "config line {}: unknown key '{key}'",
                        lineno + 1
                    )));
                }
            }
        }
    }
    Ok(cfg)
}

/// Apply one override layer on top of `base`.
fn apply_layer(base: &mut RunConfig, layer: &PartialConfig) {
    macro_rules! take {
        ($field:ident) => {
            if let Some(v) = &layer.$field {
                base.$field = v.clone();
            }
        };
    }
    // Fields that stay Option-valued in RunConfig.
    macro_rules! take_opt {
        ($field:ident) => {
            if let Some(v) = &layer.$field {
                base.$field = Some(v.clone());
            }
        };
    }
    take_opt!(input);
    take_opt!(outcome);
    take_opt!(mediator);
    take_opt!(treatment);
    take!(covariates);
    take!(categorical);
    take!(heterogeneous);
    take!(prior_sd);
    take!(k);
    take!(b);
    take!(quantiles);
    take!(lambdas);
    take!(rho);
    take!(sensitivity_scale);
    take!(seed);
    take!(out_dir);
    take!(formats);
    take_opt!(threads);
    take!(original_scale);
    take!(x100);
    take!(scenarios);
    take!(reps);
    take!(n_sim);
    take!(stratified);
    for (k, v) in &layer.bounds {
        base.bounds.insert(k.clone(), *v);
    }
    for (k, v) in &layer.levels {
        base.levels.insert(k.clone(), v.clone());
    }
}

/// Resolve the precedence stack: defaults < `ZOIBMED_SEED` < config file <
/// flags.
pub fn resolve_config(
    file_layer: Option<&PartialConfig>,
    flag_layer: &PartialConfig,
    env_seed: Option<u64>,
) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(seed) = env_seed {
        cfg.seed = seed;
    }
    if let Some(file) = file_layer {
        apply_layer(&mut cfg, file);
    }
    apply_layer(&mut cfg, flag_layer);
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

/// Everything `ingest` learns about the dataset, mirroring the boundary
/// diagnostics numerically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestReport {
    pub n_rows_read: usize,
    pub n_rows_kept: usize,
    pub arm_counts: [usize; 2],
    /// Design covariate columns after categorical expansion.
    pub covariate_columns: Vec<String>,
    /// Header columns not claimed by any role (dropped).
    pub ignored_columns: Vec<String>,
    pub rescales: Vec<RescaleRecord>,
    pub standardization: Vec<StandardizeRecord>,
    /// Per-arm boundary proportions and interior moments for the mediator
    /// and outcome.
    pub boundary: Vec<BoundarySummary>,
}

/// Parse, validate, rescale, expand, and standardize the input CSV into a
/// model-ready [`Dataset`].
///
/// Any missing value, out-of-range value, unknown categorical level, or
/// non-0/1 treatment is collected into a row-indexed rejection report and
/// the whole ingest fails (strict validation): partial datasets are never
/// analyzed silently.
pub fn ingest(config: &RunConfig) -> Result<(Dataset, IngestReport)> {
    let (input, outcome_col, mediator_col, treatment_col) = config.require_data_roles()?;
    let text = std::fs::read_to_string(input)
        .map_err(|e| Error::Ingest(format!("cannot read {}: {e}", input.display())))?;
    ingest_from_str(&text, config, outcome_col, mediator_col, treatment_col)
}

fn ingest_from_str(
    text: &str,
    config: &RunConfig,
    outcome_col: &str,
    mediator_col: &str,
    treatment_col: &str,
) -> Result<(Dataset, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Ingest(format!("cannot parse header row: {e}")))?
        .iter()
        .map(String::from)
        .collect();

    // --- Resolve roles into column indices; enforce the partition. ---
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Ingest(format!("column '{name}' not found in header")))
    };
    let y_idx = find(outcome_col)?;
    let m_idx = find(mediator_col)?;
    let a_idx = find(treatment_col)?;
    let covariate_names: Vec<String> = if config.covariates.is_empty() {
        headers
            .iter()
            .filter(|h| {
                h.as_str() != outcome_col
                    && h.as_str() != mediator_col
                    && h.as_str() != treatment_col
            })
            .cloned()
            .collect()
    } else {
        config.covariates.clone()
    };
    let mut x_idx = Vec::with_capacity(covariate_names.len());
    for name in &covariate_names {
        x_idx.push(find(name)?);
    }
    let mut claimed: Vec<usize> = vec![y_idx, m_idx, a_idx];
    claimed.extend(&x_idx);
    {
        let mut sorted = claimed.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != claimed.len() {
            return Err(Error::Ingest(
                "role assignment must be a partition: a column was claimed twice".into(),
            ));
        }
    }
    for cat in &config.categorical {
        if !covariate_names.iter().any(|c| c == cat) {
            return Err(Error::Ingest(format!(
                "categorical column '{cat}' is not among the covariates"
            )));
        }
    }
    let ignored_columns: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !claimed.contains(i))
        .map(|(_, h)| h.clone())
        .collect();

    // --- Row pass: parse every field, collecting row-indexed rejections. ---
    let is_missing = |s: &str| s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan");
    let mut rejections: Vec<(usize, String)> = Vec::new();
    let mut outcome_raw: Vec<f64> = Vec::new();
    let mut mediator_raw: Vec<f64> = Vec::new();
    let mut treatment: Vec<u8> = Vec::new();
    // Numeric covariates as raw strings for now; categorical keep strings.
    let mut numeric_cols: Vec<Vec<f64>> = vec![Vec::new(); covariate_names.len()];
    let mut cat_cols: Vec<Vec<String>> = vec![Vec::new(); covariate_names.len()];
    let is_cat: Vec<bool> = covariate_names
        .iter()
        .map(|c| config.categorical.iter().any(|k| k == c))
        .collect();

    let bounds_for = |name: &str, default: Option<(f64, f64)>| -> Option<(f64, f64)> {
        config.bounds.get(name).copied().or(default)
    };
    let y_bounds = bounds_for(outcome_col, Some((0.0, 1.0))).unwrap();
    let m_bounds = bounds_for(mediator_col, Some((0.0, 1.0))).unwrap();

    let mut n_rows_read = 0usize;
    for (row0, record) in rdr.records().enumerate() {
        let row = row0 + 1; // 1-based data row (header excluded)
        n_rows_read += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejections.push((row, format!("unparseable row: {e}")));
                continue;
            }
        };
        if record.len() != headers.len() {
            rejections.push((
                row,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
            continue;
        }
        let mut bad = false;
        let reject = |r: &mut Vec<(usize, String)>, msg: String, bad: &mut bool| {
            r.push((row, msg));
            *bad = true;
        };

        let parse_field = |idx: usize,
                           name: &str,
                           bounds: Option<(f64, f64)>,
                           rejections: &mut Vec<(usize, String)>,
                           bad: &mut bool|
         -> f64 {
            let s = record.get(idx).unwrap_or("");
            if is_missing(s) {
                reject(rejections, format!("missing value in '{name}'"), bad);
                return f64::NAN;
            }
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    if let Some((lo, hi)) = bounds {
                        if v < lo || v > hi {
                            reject(
                                rejections,
                                format!("'{name}' value {v} outside bounds [{lo}, {hi}]"),
                                bad,
                            );
                            return f64::NAN;
                        }
                    }
                    v
                }
                _ => {
                    reject(rejections, format!("'{name}' value '{s}' is not a number"), bad);
                    f64::NAN
                }
            }
        };

        let y = parse_field(y_idx, outcome_col, Some(y_bounds), &mut rejections, &mut bad);
        let m = parse_field(m_idx, mediator_col, Some(m_bounds), &mut rejections, &mut bad);

        let a_str = record.get(a_idx).unwrap_or("");
        let a: u8 = if is_missing(a_str) {
            reject(&mut rejections, format!("missing value in '{treatment_col}'"), &mut bad);
            0
        } else {
            match a_str.parse::<f64>() {
                Ok(v) if v == 0.0 => 0,
                Ok(v) if v == 1.0 => 1,
                _ => {
                    reject(
                        &mut rejections,
                        format!("'{treatment_col}' value '{a_str}' is not 0 or 1"),
                        &mut bad,
                    );
                    0
                }
            }
        };

        let mut numeric_row: Vec<f64> = Vec::with_capacity(covariate_names.len());
        let mut cat_row: Vec<String> = vec![String::new(); covariate_names.len()];
        for (j, name) in covariate_names.iter().enumerate() {
            if is_cat[j] {
                let s = record.get(x_idx[j]).unwrap_or("");
                if is_missing(s) {
                    reject(&mut rejections, format!("missing value in '{name}'"), &mut bad);
                } else if let Some(levels) = config.levels.get(name) {
                    if !levels.iter().any(|l| l == s) {
                        reject(
                            &mut rejections,
                            format!("'{name}' has unknown category '{s}' (admissible: {})", levels.join(", ")),
                            &mut bad,
                        );
                    }
                }
                cat_row[j] = s.to_string();
                numeric_row.push(f64::NAN);
            } else {
                let v = parse_field(x_idx[j], name, bounds_for(name, None), &mut rejections, &mut bad);
                numeric_row.push(v);
            }
        }

        if bad {
            continue;
        }
        outcome_raw.push(y);
        mediator_raw.push(m);
        treatment.push(a);
        for (j, v) in numeric_row.into_iter().enumerate() {
            if is_cat[j] {
                cat_cols[j].push(std::mem::take(&mut cat_row[j]));
            } else {
                numeric_cols[j].push(v);
            }
        }
    }

    if !rejections.is_empty() {
        let shown: Vec<String> = rejections
            .iter()
            .take(20)
            .map(|(row, msg)| format!("data row {row}: {msg}"))
            .collect();
        let extra = rejections.len().saturating_sub(20);
        let tail = if extra > 0 { format!("\n... and {extra} more") } else { String::new() };
        return Err(Error::Ingest(format!(
            "{} row(s) rejected:\n{}{tail}",
            rejections.len(),
            shown.join("\n")
        )));
    }
    let n = outcome_raw.len();
    if n == 0 {
        return Err(Error::Ingest("no data rows".into()));
    }

    // --- Rescale outcome, mediator, and any bounded covariates. ---
    let mut rescales = Vec::new();
    let (outcome_unit, y_rec) = rescale_to_unit(&outcome_raw, y_bounds.0, y_bounds.1, outcome_col)?;
    let (mediator_unit, m_rec) = rescale_to_unit(&mediator_raw, m_bounds.0, m_bounds.1, mediator_col)?;
    rescales.push(y_rec);
    rescales.push(m_rec);

    // --- Expand categoricals (reference cell = first sorted level) and
    //     assemble the design covariate columns. ---
    let mut design_cols: Vec<Vec<f64>> = Vec::new();
    let mut design_names: Vec<String> = Vec::new();
    for (j, name) in covariate_names.iter().enumerate() {
        if is_cat[j] {
            let mut levels: Vec<String> = cat_cols[j].clone();
            levels.sort_unstable();
            levels.dedup();
            if levels.len() < 2 {
                return Err(Error::Ingest(format!(
                    "categorical column '{name}' has a single level; drop it or recode"
                )));
            }
            // levels[0] is the reference cell.
            for level in &levels[1..] {
                let col: Vec<f64> = cat_cols[j]
                    .iter()
                    .map(|v| if v == level { 1.0 } else { 0.0 })
                    .collect();
                design_cols.push(col);
                design_names.push(format!("{name}={level}"));
            }
        } else if let Some(&(lo, hi)) = config.bounds.get(name) {
            let (col, rec) = rescale_to_unit(&numeric_cols[j], lo, hi, name)?;
            rescales.push(rec);
            design_cols.push(col);
            design_names.push(name.clone());
        } else {
            design_cols.push(std::mem::take(&mut numeric_cols[j]));
            design_names.push(name.clone());
        }
    }

    // --- Standardize all design covariate columns (indicators included). ---
    let standardization = standardize_covariates(&mut design_cols, &design_names)?;

    // --- Transpose to row-major and build the Dataset (which enforces the
    //     overlap condition and range invariants). ---
    let covariates: Vec<Vec<f64>> = (0..n)
        .map(|i| design_cols.iter().map(|c| c[i]).collect())
        .collect();
    let arm1 = treatment.iter().filter(|&&a| a == 1).count();
    let arm_counts = [n - arm1, arm1];
    let mut boundary = boundary_summary(mediator_col, &mediator_unit, &treatment);
    boundary.extend(boundary_summary(outcome_col, &outcome_unit, &treatment));

    let dataset = Dataset::new(
        covariates,
        treatment,
        mediator_unit,
        outcome_unit,
        design_names.clone(),
        rescales.clone(),
    )?;
    let report = IngestReport {
        n_rows_read,
        n_rows_kept: n,
        arm_counts,
        covariate_columns: design_names,
        ignored_columns,
        rescales,
        standardization,
        boundary,
    };
    Ok((dataset, report))
}

// ---------------------------------------------------------------------------
// Effect tables
// ---------------------------------------------------------------------------

/// Display names in [`EffectEstimates::NAMES`] order, mirroring the
/// delta/zeta/tau notation.
pub const EFFECT_LABELS: [&str; 5] = ["delta(0)", "delta(1)", "zeta(0)", "zeta(1)", "tau"];

/// One row of the effect table: Est., SD, Lower, Upper, Z-score, P-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub effect: String,
    pub est: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub z: f64,
    pub p_value: f64,
}

/// The effect table on both scales plus its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectTable {
    /// Unit-interval scale (the model's native scale).
    pub unit: Vec<EffectRow>,
    /// Original outcome scale: unit values × (hi − lo).
    pub original: Vec<EffectRow>,
    /// Outcome rescale width (hi − lo); 1 when no rescale was configured.
    pub outcome_width: f64,
    pub b_requested: usize,
    pub b_succeeded: usize,
    pub seed: u64,
}

impl EffectTable {
    /// The rows on the configured display scale.
    pub fn display_rows(&self, original_scale: bool) -> &[EffectRow] {
        if original_scale {
            &self.original
        } else {
            &self.unit
        }
    }
}

/// Equal-tailed 95% bootstrap percentile bounds ((B+1)-rank convention).
fn percentile_bounds(column: &[f64]) -> Result<(f64, f64)> {
    percentile_interval(column, 0.025)
}

fn effect_rows_from_draws(point: [f64; 5], draws: &[[f64; 5]]) -> Result<Vec<EffectRow>> {
    let mut rows = Vec::with_capacity(5);
    for (j, label) in EFFECT_LABELS.iter().enumerate() {
        let column: Vec<f64> = draws.iter().map(|d| d[j]).collect();
        let mean = column.iter().sum::<f64>() / column.len() as f64;
        let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (column.len() - 1) as f64;
        let sd = var.sqrt();
        let (lower, upper) = percentile_bounds(&column)?;
        let z = point[j] / sd;
        rows.push(EffectRow {
            effect: label.to_string(),
            est: point[j],
            sd,
            lower,
            upper,
            z,
            p_value: normal_p_value_two_sided(z),
        });
    }
    Ok(rows)
}

fn scale_rows(rows: &[EffectRow], width: f64) -> Vec<EffectRow> {
    // Z and P are scale-invariant (both numerator and denominator scale).
    rows.iter()
        .map(|r| EffectRow {
            effect: r.effect.clone(),
            est: r.est * width,
            sd: r.sd * width,
            lower: r.lower * width,
            upper: r.upper * width,
            z: r.z,
            p_value: r.p_value,
        })
        .collect()
}

fn outcome_width(dataset: &Dataset, config: &RunConfig) -> f64 {
    let Some(outcome_col) = config.outcome.as_deref() else { return 1.0 };
    dataset
        .rescale_records()
        .iter()
        .find(|r| r.variable == outcome_col)
        .map(|r| r.width())
        .unwrap_or(1.0)
}

/// Fit, bootstrap, and estimate the average effects: the `effects`
/// subcommand's computation, independent of artifact emission.
pub fn compute_effects(config: &RunConfig, dataset: &Dataset) -> Result<(FittedModels, EffectTable)> {
    let spec = config.model_spec();
    let models = fit_all(dataset, &spec)?;
    let point_cfg = MonteCarloConfig {
        k: config.k,
        use_dirichlet_weights: false,
        master_seed: derive_seed(config.seed, tags::POINT_ESTIMATE),
    };
    let point = estimate_average_effects(&models, dataset, &point_cfg)?;

    let ensemble = bootstrap_fit(dataset, &spec, config.b, config.seed, config.stratified, Some(&models.coefficients))?;
    let draws = replicate_average_effects(&ensemble, dataset, config.k, config.seed)?;

    let unit = effect_rows_from_draws(point.as_array(), &draws)?;
    let width = outcome_width(dataset, config);
    let original = scale_rows(&unit, width);
    let table = EffectTable {
        unit,
        original,
        outcome_width: width,
        b_requested: config.b,
        b_succeeded: draws.len(),
        seed: config.seed,
    };
    Ok((models, table))
}

/// One average-effect run per surviving bootstrap replicate. Replicate
/// `b` keeps its own substream (`slot` 0) keyed by its ORIGINAL index, so
/// failed replicates do not shift later seeds; Dirichlet weights are on.
fn replicate_average_effects(
    ensemble: &crate::fit::BootstrapEnsemble,
    dataset: &Dataset,
    k: usize,
    seed: u64,
) -> Result<Vec<[f64; 5]>> {
    use rayon::prelude::*;
    let failed: std::collections::HashSet<usize> =
        ensemble.failures.iter().map(|(i, _)| *i).collect();
    let surviving: Vec<usize> = (0..ensemble.b).filter(|i| !failed.contains(i)).collect();
    let family = derive_seed(seed, tags::REPLICATE_ESTIMATE);
    ensemble
        .replicates
        .par_iter()
        .zip(&surviving)
        .map(|(models, &b_idx)| {
            let cfg = MonteCarloConfig {
                k,
                use_dirichlet_weights: true,
                master_seed: cell_seed(family, b_idx, 0),
            };
            Ok(estimate_average_effects(models, dataset, &cfg)?.as_array())
        })
        .collect()
}

/// Quantile-effect table rows for every configured q (shared bootstrap
/// ensemble; per-(replicate, q) substreams).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileEffectRow {
    pub q: f64,
    #[serde(flatten)]
    pub row: EffectRow,
}

pub fn compute_quantile_effects(
    config: &RunConfig,
    dataset: &Dataset,
) -> Result<(FittedModels, Vec<QuantileEffectRow>, Vec<QuantileEffectRow>)> {
    use rayon::prelude::*;
    let spec = config.model_spec();
    let models = fit_all(dataset, &spec)?;
    let ensemble = bootstrap_fit(dataset, &spec, config.b, config.seed, config.stratified, Some(&models.coefficients))?;
    let failed: std::collections::HashSet<usize> =
        ensemble.failures.iter().map(|(i, _)| *i).collect();
    let surviving: Vec<usize> = (0..ensemble.b).filter(|i| !failed.contains(i)).collect();
    let family = derive_seed(config.seed, tags::REPLICATE_ESTIMATE);
    let point_family = derive_seed(config.seed, tags::QUANTILE);

    let width = outcome_width(dataset, config);
    let mut unit_rows = Vec::new();
    let mut original_rows = Vec::new();
    for (qi, &q) in config.quantiles.iter().enumerate() {
        let point_cfg = MonteCarloConfig {
            k: config.k,
            use_dirichlet_weights: false,
            master_seed: cell_seed(point_family, qi, 0),
        };
        let point = estimate_quantile_effects(&models, dataset, q, &point_cfg)?;
        let draws: Vec<[f64; 5]> = ensemble
            .replicates
            .par_iter()
            .zip(&surviving)
            .map(|(m, &b_idx)| {
                let cfg = MonteCarloConfig {
                    k: config.k,
                    use_dirichlet_weights: true,
                    // Slot q+1 keeps quantile replicate streams disjoint
                    // from the average-effect replicate streams (slot 0).
                    master_seed: cell_seed(family, b_idx, qi + 1),
                };
                Ok(estimate_quantile_effects(m, dataset, q, &cfg)?.as_array())
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = effect_rows_from_draws(point.as_array(), &draws)?;
        for row in scale_rows(&rows, width) {
            original_rows.push(QuantileEffectRow { q, row });
        }
        for row in rows {
            unit_rows.push(QuantileEffectRow { q, row });
        }
    }
    Ok((models, unit_rows, original_rows))
}

// ---------------------------------------------------------------------------
// Sensitivity grids
// ---------------------------------------------------------------------------

/// One long-format sensitivity row: scale, λ, ρ, effect, estimate, and the
/// equal-tailed 95% percentile interval over bootstrap replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub scale: String,
    pub lambda: f64,
    /// Copula correlation; `None` on the linear scale (no copula).
    pub rho: Option<f64>,
    pub effect: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

fn lambda_grid(config: &RunConfig, dataset: &Dataset, scale: SensitivityScale) -> Result<Vec<f64>> {
    let mut grid = if config.lambdas.is_empty() {
        let (lo, hi) = pilot_lambda_range(dataset, scale)?;
        let points = 9;
        (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect()
    } else {
        config.lambdas.clone()
    };
    if !grid.iter().any(|&l| l == 0.0) {
        grid.push(0.0);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

/// Point sensitivity grids plus bootstrap percentile bands, long format.
///
/// The point grid uses the `POINT_ESTIMATE` substream and each replicate
/// reuses the `effects` replicate substream (slot 0), so the linear λ=0
/// row is bitwise identical to the `effects` table for the same config —
/// estimate and interval alike.
pub fn compute_sensitivity(
    config: &RunConfig,
    dataset: &Dataset,
) -> Result<(FittedModels, Vec<SensitivityRow>)> {
    use rayon::prelude::*;
    let spec = config.model_spec();
    let models = fit_all(dataset, &spec)?;
    let ensemble = bootstrap_fit(dataset, &spec, config.b, config.seed, config.stratified, Some(&models.coefficients))?;
    let failed: std::collections::HashSet<usize> =
        ensemble.failures.iter().map(|(i, _)| *i).collect();
    let surviving: Vec<usize> = (0..ensemble.b).filter(|i| !failed.contains(i)).collect();
    let family = derive_seed(config.seed, tags::REPLICATE_ESTIMATE);
    // Match the effects table's display scale so the linear λ=0 row is
    // comparable (bitwise) with the emitted effects table.
    let width = if config.original_scale { outcome_width(dataset, config) } else { 1.0 };

    let mut rows = Vec::new();
    for scale in config.sensitivity_scale.scales() {
        let grid = lambda_grid(config, dataset, scale)?;
        let point_cfg = MonteCarloConfig {
            k: config.k,
            use_dirichlet_weights: false,
            master_seed: derive_seed(config.seed, tags::POINT_ESTIMATE),
        };
        let point_runs = sensitivity_grid(&models, dataset, &grid, config.rho, scale, &point_cfg)?;

        // replicate_runs[b][l] = effects array of replicate b at λ_l.
        let replicate_runs: Vec<Vec<[f64; 5]>> = ensemble
            .replicates
            .par_iter()
            .zip(&surviving)
            .map(|(m, &b_idx)| {
                let cfg = MonteCarloConfig {
                    k: config.k,
                    use_dirichlet_weights: true,
                    master_seed: cell_seed(family, b_idx, 0),
                };
                let runs = sensitivity_grid(m, dataset, &grid, config.rho, scale, &cfg)?;
                Ok(runs.into_iter().map(|r| r.effects.as_array()).collect())
            })
            .collect::<Result<Vec<_>>>()?;

        let scale_name = match scale {
            SensitivityScale::Linear => "linear",
            SensitivityScale::Logit => "logit",
        };
        let rho = match scale {
            SensitivityScale::Linear => None,
            SensitivityScale::Logit => Some(config.rho),
        };
        for (l, run) in point_runs.iter().enumerate() {
            let point = run.effects.as_array();
            for j in 0..5 {
                let column: Vec<f64> = replicate_runs.iter().map(|r| r[l][j]).collect();
                let (lower, upper) = percentile_bounds(&column)?;
                rows.push(SensitivityRow {
                    scale: scale_name.to_string(),
                    lambda: run.lambda,
                    rho,
                    effect: EFFECT_LABELS[j].to_string(),
                    estimate: point[j] * width,
                    lower: lower * width,
                    upper: upper * width,
                });
            }
        }
    }
    Ok((models, rows))
}

// ---------------------------------------------------------------------------
// Simulation tables
// ---------------------------------------------------------------------------

/// One Table-2-style metrics row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    pub scenario: String,
    pub effect: String,
    pub truth: f64,
    pub bias: f64,
    pub rmse: f64,
    pub coverage: f64,
    pub mean_interval_length: f64,
}

pub fn compute_simulation(config: &RunConfig) -> Result<Vec<SimulationRow>> {
    let (pool, _names) = bundled_covariate_pool();
    let reference = bundled_reference_coefficients();
    let mut rows = Vec::new();
    let scale = if config.x100 { 100.0 } else { 1.0 };
    let family = derive_seed(config.seed, tags::SIM_GENERATE);
    for &idx in &config.scenarios {
        let scenario = ScenarioSpec::numbered(
            idx,
            reference.clone(),
            ModelSpec::default(),
            config.n_sim,
            config.reps,
        )?;
        let harness = HarnessConfig {
            b: config.b,
            k_point: config.k,
            k_bootstrap: 2,
            stratified: config.stratified,
            base_seed: cell_seed(family, idx, 0),
        };
        let result = run_scenario(&scenario, &pool, &harness)?;
        for (row, label) in result.rows.iter().zip(EFFECT_LABELS) {
            rows.push(SimulationRow {
                scenario: result.label.clone(),
                effect: label.to_string(),
                truth: row.truth * scale,
                bias: row.bias * scale,
                rmse: row.rmse * scale,
                coverage: row.coverage,
                mean_interval_length: row.mean_interval_length * scale,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Artifact emission (CSV writers + round-trip readers)
// ---------------------------------------------------------------------------

fn fmt_f64(v: f64) -> String {
    // Shortest round-trip decimal form: parses back to the identical bits,
    // so CSV -> memory -> CSV is a fixpoint.
    format!("{v}")
}

pub fn effects_to_csv(rows: &[EffectRow]) -> String {
    let mut out = String::from("effect,est,sd,lower,upper,z,p_value\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.effect,
            fmt_f64(r.est),
            fmt_f64(r.sd),
            fmt_f64(r.lower),
            fmt_f64(r.upper),
            fmt_f64(r.z),
            fmt_f64(r.p_value)
        );
    }
    out
}

pub fn effects_from_csv(text: &str) -> Result<Vec<EffectRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<EffectRow>() {
        rows.push(rec?);
    }
    Ok(rows)
}

pub fn quantile_effects_to_csv(rows: &[QuantileEffectRow]) -> String {
    let mut out = String::from("q,effect,est,sd,lower,upper,z,p_value\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(r.q),
            r.row.effect,
            fmt_f64(r.row.est),
            fmt_f64(r.row.sd),
            fmt_f64(r.row.lower),
            fmt_f64(r.row.upper),
            fmt_f64(r.row.z),
            fmt_f64(r.row.p_value)
        );
    }
    out
}

pub fn quantile_effects_from_csv(text: &str) -> Result<Vec<QuantileEffectRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(QuantileEffectRow {
            q: rec.get(0).unwrap_or("").parse().map_err(|e| Error::Ingest(format!("bad q: {e}")))?,
            row: EffectRow {
                effect: rec.get(1).unwrap_or("").to_string(),
                est: parse_csv_f64(&rec, 2)?,
                sd: parse_csv_f64(&rec, 3)?,
                lower: parse_csv_f64(&rec, 4)?,
                upper: parse_csv_f64(&rec, 5)?,
                z: parse_csv_f64(&rec, 6)?,
                p_value: parse_csv_f64(&rec, 7)?,
            },
        });
    }
    Ok(rows)
}

fn parse_csv_f64(rec: &csv::StringRecord, idx: usize) -> Result<f64> {
    rec.get(idx)
        .unwrap_or("")
        .parse::<f64>()
        .map_err(|e| Error::Ingest(format!("bad float in column {idx}: {e}")))
}

pub fn sensitivity_to_csv(rows: &[SensitivityRow]) -> String {
    let mut out = String::from("scale,lambda,rho,effect,estimate,lower,upper\n");
    for r in rows {
        let rho = r.rho.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{rho},{},{},{},{}",
            r.scale,
            fmt_f64(r.lambda),
            r.effect,
            fmt_f64(r.estimate),
            fmt_f64(r.lower),
            fmt_f64(r.upper)
        );
    }
    out
}

pub fn sensitivity_from_csv(text: &str) -> Result<Vec<SensitivityRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let rho_field = rec.get(2).unwrap_or("");
        rows.push(SensitivityRow {
            scale: rec.get(0).unwrap_or("").to_string(),
            lambda: parse_csv_f64(&rec, 1)?,
            rho: if rho_field.is_empty() { None } else { Some(parse_csv_f64(&rec, 2)?) },
            effect: rec.get(3).unwrap_or("").to_string(),
            estimate: parse_csv_f64(&rec, 4)?,
            lower: parse_csv_f64(&rec, 5)?,
            upper: parse_csv_f64(&rec, 6)?,
        });
    }
    Ok(rows)
}

pub fn simulation_to_csv(rows: &[SimulationRow]) -> String {
    let mut out = String::from("scenario,effect,truth,bias,rmse,coverage,mean_interval_length\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.scenario,
            r.effect,
            fmt_f64(r.truth),
            fmt_f64(r.bias),
            fmt_f64(r.rmse),
            fmt_f64(r.coverage),
            fmt_f64(r.mean_interval_length)
        );
    }
    out
}

pub fn simulation_from_csv(text: &str) -> Result<Vec<SimulationRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<SimulationRow>() {
        rows.push(rec?);
    }
    Ok(rows)
}

fn write_artifact(config: &RunConfig, name: &str, csv_text: Option<&str>, json: Option<String>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&config.out_dir)?;
    let mut written = Vec::new();
    for fmt in &config.formats {
        match fmt {
            OutputFormat::Csv => {
                if let Some(text) = csv_text {
                    let path = config.out_dir.join(format!("{name}.csv"));
                    std::fs::write(&path, text)?;
                    written.push(path);
                }
            }
            OutputFormat::Json => {
                if let Some(ref text) = json {
                    let path = config.out_dir.join(format!("{name}.json"));
                    std::fs::write(&path, text)?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

// ---------------------------------------------------------------------------
// Subcommand drivers
// ---------------------------------------------------------------------------

fn print_table(header: &str, body: &str) {
    println!("{header}");
    print!("{body}");
}

pub fn cmd_fit(config: &RunConfig) -> Result<()> {
    let (dataset, report) = ingest(config)?;
    let models = fit_all(&dataset, &config.model_spec())?;
    let spec = config.model_spec();
    #[derive(Serialize)]
    struct FitArtifact<'a> {
        models: &'a FittedModels,
        mediator_design: Vec<String>,
        outcome_design: Vec<String>,
        ingest: &'a IngestReport,
    }
    let artifact = FitArtifact {
        models: &models,
        mediator_design: spec.design_names(dataset.column_names(), false),
        outcome_design: spec.design_names(dataset.column_names(), true),
        ingest: &report,
    };
    std::fs::create_dir_all(&config.out_dir)?;
    let path = config.out_dir.join("fit.json");
    std::fs::write(&path, to_json_pretty(&artifact)?)?;
    println!(
        "fitted both models: loglik = {:.4}, converged = {} -> {}",
        models.loglik,
        models.converged,
        path.display()
    );
    for w in &models.warnings {
        println!("note: {w}");
    }
    Ok(())
}

pub fn cmd_effects(config: &RunConfig) -> Result<EffectTable> {
    let (dataset, report) = ingest(config)?;
    let (_models, table) = compute_effects(config, &dataset)?;
    let display = table.display_rows(config.original_scale);
    let csv_text = effects_to_csv(display);
    #[derive(Serialize)]
    struct EffectsArtifact<'a> {
        table: &'a EffectTable,
        display_scale: &'a str,
        ingest: &'a IngestReport,
    }
    let json = to_json_pretty(&EffectsArtifact {
        table: &table,
        display_scale: if config.original_scale { "original" } else { "unit" },
        ingest: &report,
    })?;
    write_artifact(config, "effects", Some(&csv_text), Some(json))?;
    print_table(
        &format!(
            "average effects ({} scale; B = {} of {} replicates):",
            if config.original_scale { "original" } else { "unit" },
            table.b_succeeded,
            table.b_requested
        ),
        &csv_text,
    );
    Ok(table)
}

pub fn cmd_quantile_effects(config: &RunConfig) -> Result<Vec<QuantileEffectRow>> {
    let (dataset, _report) = ingest(config)?;
    let (_models, unit, original) = compute_quantile_effects(config, &dataset)?;
    let display = if config.original_scale { &original } else { &unit };
    let csv_text = quantile_effects_to_csv(display);
    #[derive(Serialize)]
    struct QuantileArtifact<'a> {
        unit: &'a [QuantileEffectRow],
        original: &'a [QuantileEffectRow],
        display_scale: &'a str,
        seed: u64,
    }
    let json = to_json_pretty(&QuantileArtifact {
        unit: &unit,
        original: &original,
        display_scale: if config.original_scale { "original" } else { "unit" },
        seed: config.seed,
    })?;
    write_artifact(config, "quantile_effects", Some(&csv_text), Some(json))?;
    print_table("quantile effects:", &csv_text);
    Ok(display.clone())
}

pub fn cmd_sensitivity(config: &RunConfig) -> Result<Vec<SensitivityRow>> {
    let (dataset, _report) = ingest(config)?;
    let (_models, rows) = compute_sensitivity(config, &dataset)?;
    let csv_text = sensitivity_to_csv(&rows);
    #[derive(Serialize)]
    struct SensitivityArtifact<'a> {
        rows: &'a [SensitivityRow],
        seed: u64,
    }
    let json = to_json_pretty(&SensitivityArtifact { rows: &rows, seed: config.seed })?;
    write_artifact(config, "sensitivity", Some(&csv_text), Some(json))?;
    print_table("sensitivity grid:", &csv_text);
    Ok(rows)
}

pub fn cmd_simulate(config: &RunConfig) -> Result<Vec<SimulationRow>> {
    let rows = compute_simulation(config)?;
    let csv_text = simulation_to_csv(&rows);
    #[derive(Serialize)]
    struct SimulationArtifact<'a> {
        rows: &'a [SimulationRow],
        x100: bool,
        seed: u64,
        reps: usize,
        n: usize,
        b: usize,
    }
    let json = to_json_pretty(&SimulationArtifact {
        rows: &rows,
        x100: config.x100,
        seed: config.seed,
        reps: config.reps,
        n: config.n_sim,
        b: config.b,
    })?;
    write_artifact(config, "simulation", Some(&csv_text), Some(json))?;
    print_table(
        &format!("simulation metrics{}:", if config.x100 { " (×100)" } else { "" }),
        &csv_text,
    );
    Ok(rows)
}

pub fn cmd_check(config: &RunConfig) -> Result<()> {
    let outcomes = check::run_all(config.seed)?;
    let report = check::render_report(&outcomes);
    print!("{report}");
    std::fs::create_dir_all(&config.out_dir)?;
    std::fs::write(config.out_dir.join("check.txt"), &report)?;
    check::ensure_passed(&outcomes)
}

pub fn cmd_synth(config: &RunConfig) -> Result<()> {
    // Regenerates (fits) the reference assets rather than copying the
    // bundled copies; see the data/ directory for the committed versions.
    write_bundled_assets(&config.out_dir)?;
    println!(
        "wrote covariate_pool.csv and reference_coefficients.json to {}",
        config.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// clap surface
// ---------------------------------------------------------------------------

/// Causal mediation analysis with zero-one inflated beta regressions.
#[derive(Debug, Parser)]
#[command(name = "zoibmed", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub overrides: FlagOverrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flag overrides; every flag beats the corresponding config-file key.
#[derive(Debug, Args)]
pub struct FlagOverrides {
    /// Plain-text key = value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Input CSV path.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Outcome column name.
    #[arg(long, global = true)]
    pub outcome: Option<String>,
    /// Mediator column name.
    #[arg(long, global = true)]
    pub mediator: Option<String>,
    /// Treatment column name (0/1 values).
    #[arg(long, global = true)]
    pub treatment: Option<String>,
    /// Comma list of covariate columns (default: all remaining).
    #[arg(long, global = true)]
    pub covariates: Option<String>,
    /// Comma list of categorical covariate columns.
    #[arg(long, global = true)]
    pub categorical: Option<String>,
    /// Rescale bounds, repeatable: --bounds col=lo:hi
    #[arg(long, global = true)]
    pub bounds: Vec<String>,
    /// Per-arm coefficient banks instead of a shared treatment column.
    #[arg(long, global = true)]
    pub heterogeneous: Option<bool>,
    /// Ridge prior SD (omit for plain maximum likelihood).
    #[arg(long, global = true)]
    pub prior_sd: Option<f64>,
    /// Mediator draws per unit (K).
    #[arg(short, long, global = true)]
    pub k: Option<usize>,
    /// Bootstrap replicates (B).
    #[arg(short, long, global = true)]
    pub b: Option<usize>,
    /// Comma list of quantiles for quantile effects.
    #[arg(long, global = true)]
    pub quantiles: Option<String>,
    /// Comma list of sensitivity λ values (default: pilot range).
    #[arg(long, global = true)]
    pub lambdas: Option<String>,
    /// Copula correlation ρ for the logit sensitivity scale.
    #[arg(long, global = true)]
    pub rho: Option<f64>,
    /// Sensitivity scale: linear, logit, or both.
    #[arg(long, global = true)]
    pub sensitivity_scale: Option<String>,
    /// Master seed (default: $ZOIBMED_SEED, else built-in).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Artifact output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Output formats: comma list of csv,json.
    #[arg(long, global = true)]
    pub formats: Option<String>,
    /// Worker threads (identical results for any value).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Display effects on the original outcome scale (×(hi−lo)).
    #[arg(long, global = true)]
    pub original_scale: Option<bool>,
    /// ×100 display scaling for simulation tables.
    #[arg(long, global = true)]
    pub x100: Option<bool>,
    /// Comma list of simulation scenarios (1..=5).
    #[arg(long, global = true)]
    pub scenarios: Option<String>,
    /// Simulation replicates per scenario.
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Simulated dataset size.
    #[arg(long, global = true)]
    pub n_sim: Option<usize>,
    /// Stratify bootstrap resamples by treatment arm.
    #[arg(long, global = true)]
    pub stratified: Option<bool>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit both ZOIB regressions and write fit.json.
    Fit,
    /// Average natural effects with bootstrap SD, percentile bounds,
    /// Z-scores, and P-values.
    Effects,
    /// Quantile natural effects for each configured q.
    QuantileEffects,
    /// Sensitivity grids over λ (and ρ on the logit scale), long format.
    Sensitivity,
    /// Simulation study over the bundled scenarios.
    Simulate,
    /// Run the self-check battery; nonzero exit on any failure.
    Check,
    /// Regenerate the bundled synthetic assets into the output directory.
    Synth,
}

impl FlagOverrides {
    fn to_layer(&self) -> Result<PartialConfig> {
        let mut layer = PartialConfig {
            input: self.input.clone(),
            outcome: self.outcome.clone(),
            mediator: self.mediator.clone(),
            treatment: self.treatment.clone(),
            covariates: self.covariates.as_deref().map(parse_string_list),
            categorical: self.categorical.as_deref().map(parse_string_list),
            heterogeneous: self.heterogeneous,
            prior_sd: self.prior_sd.map(Some),
            k: self.k,
            b: self.b,
            rho: self.rho,
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            threads: self.threads,
            original_scale: self.original_scale,
            x100: self.x100,
            reps: self.reps,
            n_sim: self.n_sim,
            stratified: self.stratified,
            ..PartialConfig::default()
        };
        if let Some(q) = &self.quantiles {
            layer.quantiles = Some(parse_list("quantiles", q)?);
        }
        if let Some(l) = &self.lambdas {
            layer.lambdas = Some(parse_list("lambdas", l)?);
        }
        if let Some(s) = &self.sensitivity_scale {
            layer.sensitivity_scale = Some(parse_scale_choice(s)?);
        }
        if let Some(f) = &self.formats {
            layer.formats = Some(parse_formats(f)?);
        }
        if let Some(s) = &self.scenarios {
            layer.scenarios = Some(parse_list("scenarios", s)?);
        }
        for spec in &self.bounds {
            let Some((col, range)) = spec.split_once('=') else {
                return Err(Error::Config(format!("--bounds expects col=lo:hi, got '{spec}'")));
            };
            let Some((lo, hi)) = range.split_once(':') else {
                return Err(Error::Config(format!("--bounds expects col=lo:hi, got '{spec}'")));
            };
            layer.bounds.insert(
                col.trim().to_string(),
                (parse_num("bounds", lo.trim())?, parse_num("bounds", hi.trim())?),
            );
        }
        Ok(layer)
    }
}

/// Resolve the full config for a parsed CLI invocation.
pub fn config_from_cli(cli: &Cli) -> Result<RunConfig> {
    let file_layer = match &cli.overrides.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            Some(parse_config_file(&text)?)
        }
        None => None,
    };
    let flag_layer = cli.overrides.to_layer()?;
    let env_seed = std::env::var(SEED_ENV_VAR)
        .ok()
        .map(|v| {
            v.parse::<u64>()
                .map_err(|_| Error::Config(format!("{SEED_ENV_VAR} must be an integer, got '{v}'")))
        })
        .transpose()?;
    resolve_config(file_layer.as_ref(), &flag_layer, env_seed)
}

fn configure_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        // A second initialization (tests, repeated calls) is harmless: the
        // existing pool is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
}

/// Run one parsed invocation.
pub fn run(cli: &Cli) -> Result<()> {
    let config = config_from_cli(cli)?;
    configure_threads(config.threads);
    match cli.command {
        Command::Fit => cmd_fit(&config),
        Command::Effects => cmd_effects(&config).map(|_| ()),
        Command::QuantileEffects => cmd_quantile_effects(&config).map(|_| ()),
        Command::Sensitivity => cmd_sensitivity(&config).map(|_| ()),
        Command::Simulate => cmd_simulate(&config).map(|_| ()),
        Command::Check => cmd_check(&config),
        Command::Synth => cmd_synth(&config),
    }
}

/// Binary entry point: parse, run, map errors to a nonzero exit status.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_grammar_and_precedence() {
        let file = parse_config_file(
            "# comment\n\
             input = data.csv\n\
             outcome = y   # trailing comment\n\
             mediator = m\n\
             treatment = a\n\
             covariates = x1, x2\n\
             categorical = x2\n\
             bounds.y = 1,5\n\
             levels.x2 = lo,hi\n\
             k = 7\n\
             b = 31\n\
             quantiles = 0.1,0.9\n\
             rho = 0.5\n\
             sensitivity_scale = linear\n\
             seed = 99\n\
             x100 = true\n",
        )
        .unwrap();
        let flags = PartialConfig { seed: Some(123), k: Some(3), ..PartialConfig::default() };
        let cfg = resolve_config(Some(&file), &flags, Some(7)).unwrap();
        assert_eq!(cfg.seed, 123, "flags beat file beats env");
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.b, 31, "file beats defaults");
        assert_eq!(cfg.quantiles, vec![0.1, 0.9]);
        assert_eq!(cfg.bounds.get("y"), Some(&(1.0, 5.0)));
        assert_eq!(cfg.levels.get("x2").map(Vec::len), Some(2));
        assert_eq!(cfg.sensitivity_scale, SensitivityChoice::Linear);
        assert!(cfg.x100);

        // Env seed applies when no other layer sets it.
        let cfg2 = resolve_config(None, &PartialConfig::default(), Some(7)).unwrap();
        assert_eq!(cfg2.seed, 7);
        let cfg3 = resolve_config(None, &PartialConfig::default(), None).unwrap();
        assert_eq!(cfg3.seed, DEFAULT_SEED);

        // Unknown keys and malformed lines are rejected.
        assert!(parse_config_file("nonsense_key = 1").is_err());
        assert!(parse_config_file("just some text").is_err());
        // Invalid values are rejected at validation time.
        assert!(resolve_config(
            Some(&parse_config_file("rho = 1.5").unwrap()),
            &PartialConfig::default(),
            None
        )
        .is_err());
        assert!(resolve_config(
            Some(&parse_config_file("b = 1").unwrap()),
            &PartialConfig::default(),
            None
        )
        .is_err());
    }

    fn demo_config() -> RunConfig {
        RunConfig {
            outcome: Some("y".into()),
            mediator: Some("m".into()),
            treatment: Some("a".into()),
            ..RunConfig::default()
        }
    }

    #[test]
    fn ingest_rescales_expands_and_reports() {
        let csv_text = "\
y,m,a,x1,grp,junk
1,1.0,0,0.5,red,9
5,2.5,1,-0.25,blue,9
3,4.0,0,1.5,green,9
2,1.0,1,0.75,red,9
4,3.25,0,-1.0,blue,9
3,2.0,1,0.25,green,9
";
        let mut config = demo_config();
        config.covariates = vec!["x1".into(), "grp".into()];
        config.categorical = vec!["grp".into()];
        config.bounds.insert("y".into(), (1.0, 5.0));
        config.bounds.insert("m".into(), (1.0, 4.0));
        let (dataset, report) = ingest_from_str(&csv_text, &config, "y", "m", "a").unwrap();
        assert_eq!(dataset.n(), 6);
        assert_eq!(report.n_rows_read, 6);
        assert_eq!(report.n_rows_kept, 6);
        assert_eq!(report.ignored_columns, vec!["junk".to_string()]);
        // (y - 1) / 4: y = 1 -> 0, y = 5 -> 1, y = 3 -> 0.5.
        assert_eq!(dataset.outcome()[0], 0.0);
        assert_eq!(dataset.outcome()[1], 1.0);
        assert_eq!(dataset.outcome()[2], 0.5);
        // m = 1 -> 0 under bounds [1,4].
        assert_eq!(dataset.mediator()[0], 0.0);
        assert_eq!(dataset.mediator()[2], 1.0);
        // Categorical expansion: levels sorted = blue,green,red; blue is
        // the reference cell, so columns are grp=green and grp=red.
        assert_eq!(
            dataset.column_names(),
            &["x1".to_string(), "grp=green".to_string(), "grp=red".to_string()]
        );
        // Standardized columns have mean ~0.
        for j in 0..3 {
            let mean: f64 =
                (0..6).map(|i| dataset.covariate_row(i)[j]).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-12, "column {j} mean {mean}");
        }
        assert_eq!(report.arm_counts, [3, 3]);
        assert_eq!(report.boundary.len(), 4, "mediator + outcome, per arm");
        assert_eq!(report.rescales.len(), 2);
        assert_eq!(report.standardization.len(), 3);
    }

    #[test]
    fn ingest_rejects_with_row_indices() {
        let csv_text = "\
y,m,a,x1
0.5,0.5,0,0.0
1.2,0.5,1,0.1
0.5,,0,0.2
0.5,0.5,2,0.3
0.5,0.5,1,oops
";
        let config = demo_config();
        let err = ingest_from_str(&csv_text, &config, "y", "m", "a").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("4 row(s) rejected"), "{msg}");
        assert!(msg.contains("data row 2: 'y' value 1.2 outside bounds [0, 1]"), "{msg}");
        assert!(msg.contains("data row 3: missing value in 'm'"), "{msg}");
        assert!(msg.contains("data row 4: 'a' value '2' is not 0 or 1"), "{msg}");
        assert!(msg.contains("data row 5: 'x1' value 'oops' is not a number"), "{msg}");
    }

    #[test]
    fn ingest_rejects_unknown_categories_and_empty_arms() {
        let mut config = demo_config();
        config.covariates = vec!["grp".into()];
        config.categorical = vec!["grp".into()];
        config.levels.insert("grp".into(), vec!["lo".into(), "hi".into()]);
        let csv_text = "y,m,a,grp\n0.5,0.5,0,lo\n0.5,0.5,1,mid\n0.4,0.6,0,hi\n0.3,0.2,1,lo\n";
        let err = ingest_from_str(csv_text, &config, "y", "m", "a").unwrap_err();
        assert!(err.to_string().contains("unknown category 'mid'"), "{err}");

        // Single-arm data violates overlap.
        let csv_text = "y,m,a,grp\n0.5,0.5,1,lo\n0.4,0.6,1,hi\n0.3,0.2,1,lo\n0.2,0.4,1,hi\n";
        let err = ingest_from_str(csv_text, &config, "y", "m", "a").unwrap_err();
        assert!(err.to_string().contains("overlap"), "{err}");
    }

    #[test]
    fn csv_roundtrips_are_fixpoints() {
        let rows = vec![
            EffectRow {
                effect: "delta(0)".into(),
                est: -0.011_234_567_89,
                sd: 0.004_5,
                lower: -0.02,
                upper: -0.002,
                z: -2.496_570_642,
                p_value: 0.012_539,
            },
            EffectRow {
                effect: "tau".into(),
                est: 0.1,
                sd: 0.03,
                lower: 0.04,
                upper: 0.16,
                z: 10.0 / 3.0,
                p_value: 8.442e-4,
            },
        ];
        let text = effects_to_csv(&rows);
        let parsed = effects_from_csv(&text).unwrap();
        assert_eq!(parsed, rows);
        assert_eq!(effects_to_csv(&parsed), text, "CSV -> memory -> CSV fixpoint");

        let qrows = vec![QuantileEffectRow { q: 0.25, row: rows[0].clone() }];
        let qtext = quantile_effects_to_csv(&qrows);
        let qparsed = quantile_effects_from_csv(&qtext).unwrap();
        assert_eq!(qparsed, qrows);
        assert_eq!(quantile_effects_to_csv(&qparsed), qtext);

        let srows = vec![
            SensitivityRow {
                scale: "linear".into(),
                lambda: -0.25,
                rho: None,
                effect: "zeta(1)".into(),
                estimate: 0.07,
                lower: 0.01,
                upper: 0.13,
            },
            SensitivityRow {
                scale: "logit".into(),
                lambda: 0.5,
                rho: Some(0.95),
                effect: "delta(0)".into(),
                estimate: -0.01,
                lower: -0.02,
                upper: 0.0,
            },
        ];
        let stext = sensitivity_to_csv(&srows);
        let sparsed = sensitivity_from_csv(&stext).unwrap();
        assert_eq!(sparsed, srows);
        assert_eq!(sensitivity_to_csv(&sparsed), stext);

        let simrows = vec![SimulationRow {
            scenario: "Scenario 1".into(),
            effect: "delta(0)".into(),
            truth: 0.0,
            bias: 0.0012,
            rmse: 0.0044,
            coverage: 0.96,
            mean_interval_length: 0.017,
        }];
        let simtext = simulation_to_csv(&simrows);
        let simparsed = simulation_from_csv(&simtext).unwrap();
        assert_eq!(simparsed, simrows);
        assert_eq!(simulation_to_csv(&simparsed), simtext);
    }

    /// Write a synthetic dataset as a raw CSV with the outcome on a [1, 5]
    /// scale, exercising rescale + standardization on ingest.
    fn write_demo_csv(dir: &std::path::Path, n: usize, seed: u64) -> PathBuf {
        let ds = crate::testutil::synthetic_dataset(seed, n);
        let mut text = String::from("y,m,a,x1,x2\n");
        for i in 0..ds.n() {
            let _ = writeln!(
                text,
                "{},{},{},{},{}",
                1.0 + 4.0 * ds.outcome()[i],
                ds.mediator()[i],
                ds.treatment()[i],
                ds.covariate_row(i)[0],
                ds.covariate_row(i)[1]
            );
        }
        let path = dir.join("demo.csv");
        std::fs::write(&path, text).unwrap();
        path
    }

    fn e2e_config(dir: &std::path::Path, seed: u64) -> RunConfig {
        let input = write_demo_csv(dir, 300, 914);
        let mut config = demo_config();
        config.input = Some(input);
        config.bounds.insert("y".into(), (1.0, 5.0));
        config.b = 40;
        config.k = 4;
        config.seed = seed;
        config.out_dir = dir.join("out");
        config
    }

    #[test]
    fn effects_table_is_well_formed_and_artifacts_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        let config = e2e_config(tmp.path(), 2024);
        let table = cmd_effects(&config).unwrap();

        for rows in [&table.unit, &table.original] {
            assert_eq!(rows.len(), 5);
            for (row, label) in rows.iter().zip(EFFECT_LABELS) {
                assert_eq!(row.effect, label);
                assert!((row.z - row.est / row.sd).abs() <= 1e-12 * row.z.abs().max(1.0));
                assert_eq!(row.p_value, normal_p_value_two_sided(row.z));
                assert!(row.lower <= row.upper);
                assert!(row.sd > 0.0);
            }
        }
        assert_eq!(table.outcome_width, 4.0);
        for (u, o) in table.unit.iter().zip(&table.original) {
            assert_eq!(o.est, u.est * 4.0, "original scale = unit × width");
            assert_eq!(o.lower, u.lower * 4.0);
            assert_eq!(o.z, u.z, "Z is scale-invariant");
            assert_eq!(o.p_value, u.p_value);
        }
        assert!(table.b_succeeded >= 38, "at most 5% of B = 40 may fail");

        // Byte-identical artifacts for the identical config + seed.
        let mut config2 = config.clone();
        config2.out_dir = tmp.path().join("out2");
        cmd_effects(&config2).unwrap();
        for name in ["effects.csv", "effects.json"] {
            let a = std::fs::read(config.out_dir.join(name)).unwrap();
            let b = std::fs::read(config2.out_dir.join(name)).unwrap();
            assert_eq!(a, b, "{name} must be byte-identical across reruns");
        }
        // A different seed must actually change the table.
        let mut config3 = config.clone();
        config3.seed = 2025;
        config3.out_dir = tmp.path().join("out3");
        let table3 = cmd_effects(&config3).unwrap();
        assert_ne!(table3.unit[0].sd, table.unit[0].sd);
    }

    #[test]
    fn sensitivity_linear_lambda0_row_matches_effects_bitwise() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = e2e_config(tmp.path(), 515);
        config.sensitivity_scale = SensitivityChoice::Both;
        config.lambdas = vec![0.0, 0.2];

        let (dataset, _) = ingest(&config).unwrap();
        let (_, table) = compute_effects(&config, &dataset).unwrap();
        let (_, rows) = compute_sensitivity(&config, &dataset).unwrap();

        // Display scale is original by default; compare against the
        // original-scale effects rows.
        let lam0: Vec<&SensitivityRow> = rows
            .iter()
            .filter(|r| r.scale == "linear" && r.lambda == 0.0)
            .collect();
        assert_eq!(lam0.len(), 5);
        for (srow, erow) in lam0.iter().zip(&table.original) {
            assert_eq!(srow.effect, erow.effect);
            assert_eq!(srow.estimate, erow.est, "λ=0 linear estimate == effects");
            assert_eq!(srow.lower, erow.lower, "λ=0 linear lower == effects");
            assert_eq!(srow.upper, erow.upper, "λ=0 linear upper == effects");
            assert_eq!(srow.rho, None);
        }
        // Logit rows exist, carry ρ, and the λ=0 logit τ equals the
        // λ=0 linear τ (τ is mediator-free on both scales).
        let logit0: Vec<&SensitivityRow> = rows
            .iter()
            .filter(|r| r.scale == "logit" && r.lambda == 0.0)
            .collect();
        assert_eq!(logit0.len(), 5);
        assert!(logit0.iter().all(|r| r.rho == Some(config.rho)));
        // λ≠0 must move the point estimates somewhere on the linear scale.
        let lam02: Vec<&SensitivityRow> = rows
            .iter()
            .filter(|r| r.scale == "linear" && r.lambda == 0.2)
            .collect();
        assert!(lam02.iter().zip(&lam0).any(|(a, b)| a.estimate != b.estimate));
        // τ is λ-invariant on the linear scale, bitwise.
        assert_eq!(lam02[4].estimate, lam0[4].estimate);
    }

    #[test]
    fn quantile_effects_cover_each_q() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = e2e_config(tmp.path(), 77);
        config.quantiles = vec![0.25, 0.5];
        config.b = 24;
        let (dataset, _) = ingest(&config).unwrap();
        let (_, unit, original) = compute_quantile_effects(&config, &dataset).unwrap();
        assert_eq!(unit.len(), 10, "2 quantiles × 5 effects");
        assert_eq!(original.len(), 10);
        for (i, row) in unit.iter().enumerate() {
            assert_eq!(row.q, if i < 5 { 0.25 } else { 0.5 });
            assert_eq!(row.row.effect, EFFECT_LABELS[i % 5]);
            assert!(row.row.lower <= row.row.upper);
        }
        // Median and lower-quartile tables must genuinely differ.
        assert_ne!(unit[4].row.est, unit[9].row.est);
    }

    #[test]
    fn simulate_tiny_run_has_scenario_labels_and_x100_scaling() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = RunConfig::default();
        config.out_dir = tmp.path().join("out");
        config.scenarios = vec![1];
        config.reps = 2;
        config.n_sim = 400;
        config.b = 24;
        config.k = 2;
        config.seed = 99;
        let rows = compute_simulation(&config).unwrap();
        assert_eq!(rows.len(), 5);
        for (row, label) in rows.iter().zip(EFFECT_LABELS) {
            assert_eq!(row.scenario, "Scenario 1");
            assert_eq!(row.effect, label);
            assert!((0.0..=1.0).contains(&row.coverage));
            assert!(row.rmse >= 0.0);
        }
        // Scenario 1 nulls the mediator path: δ truths are exactly zero.
        assert_eq!(rows[0].truth, 0.0);
        assert_eq!(rows[1].truth, 0.0);

        let mut config_x100 = config.clone();
        config_x100.x100 = true;
        let rows_x100 = compute_simulation(&config_x100).unwrap();
        for (a, b) in rows_x100.iter().zip(&rows) {
            assert_eq!(a.truth, b.truth * 100.0);
            assert_eq!(a.bias, b.bias * 100.0);
            assert_eq!(a.rmse, b.rmse * 100.0);
            assert_eq!(a.mean_interval_length, b.mean_interval_length * 100.0);
            assert_eq!(a.coverage, b.coverage, "coverage is a proportion, never scaled");
        }
    }

    #[test]
    fn cli_parses_and_env_seed_applies() {
        // Safe in edition 2021; no other test reads this variable.
        std::env::set_var(SEED_ENV_VAR, "4242");
        let cli = Cli::try_parse_from(["zoibmed", "synth"]).unwrap();
        let cfg = config_from_cli(&cli).unwrap();
        assert_eq!(cfg.seed, 4242, "env var sets the default seed");

        let cli = Cli::try_parse_from(["zoibmed", "--seed", "7", "check"]).unwrap();
        let cfg = config_from_cli(&cli).unwrap();
        assert_eq!(cfg.seed, 7, "flag beats env var");
        std::env::remove_var(SEED_ENV_VAR);

        let cli = Cli::try_parse_from([
            "zoibmed",
            "--bounds",
            "y=1:5",
            "--quantiles",
            "0.2,0.8",
            "--threads",
            "2",
            "effects",
        ])
        .unwrap();
        let cfg = config_from_cli(&cli).unwrap();
        assert_eq!(cfg.bounds.get("y"), Some(&(1.0, 5.0)));
        assert_eq!(cfg.quantiles, vec![0.2, 0.8]);
        assert_eq!(cfg.threads, Some(2));
        assert!(matches!(cli.command, Command::Effects));

        assert!(Cli::try_parse_from(["zoibmed", "no-such-command"]).is_err());
    }

    #[test]
    fn flag_layer_parses_bounds_and_lists() {
        let flags = FlagOverrides {
            config: None,
            input: None,
            outcome: None,
            mediator: None,
            treatment: None,
            covariates: Some("x1, x2".into()),
            categorical: None,
            bounds: vec!["y=1:5".into(), "m=1:4".into()],
            heterogeneous: None,
            prior_sd: None,
            k: None,
            b: None,
            quantiles: Some("0.2,0.8".into()),
            lambdas: None,
            rho: None,
            sensitivity_scale: Some("both".into()),
            seed: None,
            out_dir: None,
            formats: Some("csv".into()),
            threads: None,
            original_scale: None,
            x100: None,
            scenarios: Some("1,5".into()),
            reps: None,
            n_sim: None,
            stratified: None,
        };
        let layer = flags.to_layer().unwrap();
        assert_eq!(layer.bounds.get("y"), Some(&(1.0, 5.0)));
        assert_eq!(layer.quantiles, Some(vec![0.2, 0.8]));
        assert_eq!(layer.formats, Some(vec![OutputFormat::Csv]));
        assert_eq!(layer.scenarios, Some(vec![1, 5]));
        let cfg = resolve_config(None, &layer, None).unwrap();
        assert_eq!(cfg.covariates, vec!["x1".to_string(), "x2".to_string()]);
    }
}
