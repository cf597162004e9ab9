//! Flag, config-file and preset resolution into one `RunConfig`.
//!
//! Precedence, lowest first: built-in defaults, the preset, the config file,
//! explicit flags. The resolved config is echoed into every output file.

use std::fs;
use std::path::{Path, PathBuf};

use selfseed_core::eval::ReportFormat;
use selfseed_core::{CycleConfig, Error, PipelineConfig, Result, SelectionMethod};
use serde::{Deserialize, Serialize};

use crate::args::{FormatArg, MethodArg, Preset, RunArgs};

/// Config file contents; keys mirror the long flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub store: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub preset: Option<Preset>,
    pub k: Option<usize>,
    pub k_neighbors: Option<usize>,
    pub b_size: Option<usize>,
    pub method: Option<SelectionMethod>,
    pub i_epochs: Option<usize>,
    pub r_epochs: Option<usize>,
    pub lr: Option<f64>,
    pub loss_limit: Option<f64>,
    pub max_cycles: Option<usize>,
    pub retain_seed: Option<bool>,
    pub k_grid: Option<Vec<usize>>,
    pub format: Option<ReportFormat>,
    pub seed: Option<u64>,
    pub standardize_features: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::read_io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidFormat {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

/// Everything a run depends on. The output directory is left out of the echo
/// so runs that differ only in where they write produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub store: PathBuf,
    #[serde(skip)]
    pub out: PathBuf,
    pub preset: Preset,
    pub method: SelectionMethod,
    /// `None` when the neighbor count follows `k`.
    pub k_neighbors: Option<usize>,
    pub cycle: CycleConfig,
    pub k_grid: Vec<usize>,
    pub format: ReportFormat,
    pub seed: u64,
    pub standardize_features: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rankings: Option<PathBuf>,
}

fn method(m: MethodArg) -> SelectionMethod {
    match m {
        MethodArg::Default => SelectionMethod::Default,
        MethodArg::Improved => SelectionMethod::Improved,
    }
}

fn format(f: FormatArg) -> ReportFormat {
    match f {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
    }
}

fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    value.ok_or_else(|| Error::InvalidConfig(format!("--{flag} is required (flag or config file)")))
}

impl RunConfig {
    pub fn resolve(command: &'static str, args: &RunArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let preset = args.preset.or(file.preset).unwrap_or_default();
        let mut cycle = match preset {
            Preset::Default => CycleConfig::default(),
            Preset::LargeLabelspace => CycleConfig::large_labelspace(),
        };

        macro_rules! layer {
            ($field:ident, $target:expr) => {
                if let Some(v) = args.$field.or(file.$field) {
                    $target = v;
                }
            };
        }
        layer!(k, cycle.k);
        layer!(b_size, cycle.b_size);
        layer!(i_epochs, cycle.i_epochs);
        layer!(r_epochs, cycle.r_epochs);
        layer!(lr, cycle.learning_rate);
        layer!(loss_limit, cycle.loss_limit);
        layer!(max_cycles, cycle.max_cycles);
        cycle.retain_seed = args.retain_seed || file.retain_seed.unwrap_or(false);
        let seed = args.seed.or(file.seed).unwrap_or(0);
        cycle.rng_seed = seed;
        cycle.validate()?;

        let k_neighbors = args.k_neighbors.or(file.k_neighbors);
        if k_neighbors == Some(0) {
            return Err(Error::InvalidConfig("k-neighbors must be >= 1".into()));
        }
        let store = required(args.store.clone().or(file.store), "store")?;
        let out = required(args.out.clone().or(file.out), "out")?;
        if store == out {
            return Err(Error::InvalidConfig("--store and --out must differ".into()));
        }

        Ok(Self {
            command,
            store,
            out,
            preset,
            method: args
                .method
                .map(method)
                .or(file.method)
                .unwrap_or(SelectionMethod::Improved),
            k_neighbors,
            k_grid: args
                .k_grid
                .clone()
                .or(file.k_grid)
                .unwrap_or_else(|| vec![cycle.k]),
            cycle,
            format: args
                .format
                .map(format)
                .or(file.format)
                .unwrap_or(ReportFormat::Json),
            seed,
            standardize_features: args.standardize_features
                || file.standardize_features.unwrap_or(false),
            checkpoint: None,
            rankings: None,
        })
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            cycle: self.cycle.clone(),
            k_neighbors: self.k_neighbors,
            method: self.method,
        }
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}
