//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Relative dataset and scenario
//! paths resolve against the config file's directory; `output_dir` resolves
//! against the working directory. Every key is optional:
//!
//! | key | default |
//! |-----|---------|
//! | `seed` | 0 |
//! | `n_clients` | 30 |
//! | `rounds` | 10 |
//! | `selection_mode` | `optimized` (or `random`) |
//! | `selection_fraction` | 0.2 |
//! | `encryption` | false |
//! | `learning_rate` | 0.01 |
//! | `batch_size` | 10 |
//! | `momentum` | 0.9 |
//! | `local_epochs` | 1 |
//! | `eta_global` | 1.0 |
//! | `hidden_layers` | empty (comma-separated widths) |
//! | `unreliable_fraction` | 0.3 |
//! | `overhead_s` | 1.0 |
//! | `early_stop` | false |
//! | `min_compute`, `min_bandwidth`, `min_data_size`, `data_type` | 300, 1000, 1, `mnist` |
//! | `budget`, `security_deposit`, `closing_time` | 100000000, 1000000, 60 |
//! | `dataset` | `synthetic` (or `idx`) |
//! | `idx_dir` | none; fills the four IDX paths with the standard file names |
//! | `train_images`, `train_labels`, `test_images`, `test_labels` | none |
//! | `train_limit`, `test_limit` | 0 (all rows) |
//! | `synthetic_classes`, `synthetic_train`, `synthetic_test` | 10, 2000, 500 |
//! | `synthetic_dim`, `synthetic_separation` | 20, 1.0 |
//! | `ckks_preset` | `desk` (`test`, `desk`, `full`) |
//! | `gas_price_min`, `gas_price_avg` | 11.27, 23.49 |
//! | `output_dir` | `out` |
//! | `record_wall_time` | false |
//! | `precision` | `f64` (or `f32`) |
//! | `scenario` | none; contract script for `auction-demo` |

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fedchain::ckks::CkksParams;
use fedchain::flcore::{GlobalStep, TrainConfig};
use fedchain::ledger::GasPrices;
use fedchain::simnet::{default_requirements, derive_seed, ExperimentPlan, PopulationSpec, SelectionMode};

use crate::synth::SyntheticSpec;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F64,
    F32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Synthetic,
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub n_clients: usize,
    pub rounds: usize,
    pub selection_mode: SelectionMode,
    pub selection_fraction: f64,
    pub encryption: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub local_epochs: usize,
    pub eta_global: f64,
    pub hidden_layers: Vec<usize>,
    pub unreliable_fraction: f64,
    pub overhead_s: f64,
    pub early_stop: bool,
    pub min_compute: f64,
    pub min_bandwidth: f64,
    pub min_data_size: u64,
    pub data_type: String,
    pub budget: u64,
    pub security_deposit: u64,
    pub closing_time: u64,
    pub dataset: DatasetSource,
    pub train_limit: usize,
    pub test_limit: usize,
    pub synthetic: SyntheticSpec,
    pub ckks_preset: String,
    pub gas_prices: GasPrices,
    pub output_dir: PathBuf,
    pub record_wall_time: bool,
    pub precision: Precision,
    pub scenario: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let req = default_requirements();
        Self {
            seed: 0,
            n_clients: 30,
            rounds: 10,
            selection_mode: SelectionMode::Optimized,
            selection_fraction: 0.2,
            encryption: false,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            momentum: train.momentum,
            local_epochs: train.local_epochs,
            eta_global: GlobalStep::default().eta_global,
            hidden_layers: Vec::new(),
            unreliable_fraction: PopulationSpec::default().unreliable_fraction,
            overhead_s: 1.0,
            early_stop: false,
            min_compute: req.min_compute,
            min_bandwidth: req.min_bandwidth,
            min_data_size: req.min_data_size,
            data_type: req.data_type,
            budget: req.budget,
            security_deposit: req.security_deposit,
            closing_time: req.closing_time,
            dataset: DatasetSource::Synthetic,
            train_limit: 0,
            test_limit: 0,
            synthetic: SyntheticSpec::default(),
            ckks_preset: "desk".into(),
            gas_prices: GasPrices::default(),
            output_dir: PathBuf::from("out"),
            record_wall_time: false,
            precision: Precision::F64,
            scenario: None,
        }
    }
}

impl RunConfig {
    pub fn ckks_params(&self) -> Result<CkksParams, CliError> {
        Ok(CkksParams::preset(&self.ckks_preset)?)
    }

    /// The synthetic generator seed, split from the run seed.
    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            seed: derive_seed(self.seed, "synthetic"),
            ..self.synthetic.clone()
        }
    }

    pub fn to_plan(&self) -> Result<ExperimentPlan, CliError> {
        let mut plan = ExperimentPlan::new(self.ckks_params()?);
        plan.n_clients = self.n_clients;
        plan.rounds = self.rounds;
        plan.selection_mode = self.selection_mode;
        plan.selection_fraction = self.selection_fraction;
        plan.encryption = self.encryption;
        plan.seed = self.seed;
        plan.train_config = TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            momentum: self.momentum,
            local_epochs: self.local_epochs,
            seed: 0,
        };
        plan.global_step = GlobalStep::new(self.eta_global)?;
        plan.requirements.min_compute = self.min_compute;
        plan.requirements.min_bandwidth = self.min_bandwidth;
        plan.requirements.min_data_size = self.min_data_size;
        plan.requirements.data_type = self.data_type.clone();
        plan.requirements.iterations = self.rounds as u32;
        plan.requirements.budget = self.budget;
        plan.requirements.security_deposit = self.security_deposit;
        plan.requirements.closing_time = self.closing_time;
        plan.population.unreliable_fraction = self.unreliable_fraction;
        plan.population.data_type = self.data_type.clone();
        plan.hidden_layers = self.hidden_layers.clone();
        plan.gas_prices = self.gas_prices;
        plan.overhead_s = self.overhead_s;
        plan.early_stop = self.early_stop;
        plan.validate()?;
        Ok(plan)
    }
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str, expected: &str) -> Result<T, CliError> {
    raw.parse().map_err(|_| CliError::Config {
        line,
        message: format!("{key}: expected {expected}, got '{raw}'"),
    })
}

fn list(line: usize, key: &str, raw: &str) -> Result<Vec<usize>, CliError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| value(line, key, s, "a comma-separated list of integers"))
        .collect()
}

const IDX_NAMES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Standard file name inside `dir`, preferring a gzipped copy when present.
fn idx_file(dir: &Path, name: &str) -> PathBuf {
    let gz = dir.join(format!("{name}.gz"));
    if gz.exists() {
        gz
    } else {
        dir.join(name)
    }
}

/// Parses config text; relative input paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig, CliError> {
    let mut c = RunConfig::default();
    let mut seen = HashSet::new();
    let mut dataset_kind = "synthetic".to_string();
    let mut idx: [Option<PathBuf>; 4] = Default::default();
    let resolve = |raw: &str| {
        let p = PathBuf::from(raw);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, raw)) = content.split_once('=') else {
            return Err(CliError::Config {
                line,
                message: format!("expected 'key = value', got '{content}'"),
            });
        };
        let (key, v) = (key.trim(), raw.trim());
        if !seen.insert(key.to_string()) {
            return Err(CliError::Config {
                line,
                message: format!("duplicate key '{key}'"),
            });
        }
        let int = "an unsigned integer";
        let real = "a number";
        let flag = "true or false";
        match key {
            "seed" => c.seed = value(line, key, v, int)?,
            "n_clients" => c.n_clients = value(line, key, v, int)?,
            "rounds" => c.rounds = value(line, key, v, int)?,
            "selection_mode" => c.selection_mode = value(line, key, v, "optimized or random")?,
            "selection_fraction" => c.selection_fraction = value(line, key, v, real)?,
            "encryption" => c.encryption = value(line, key, v, flag)?,
            "learning_rate" => c.learning_rate = value(line, key, v, real)?,
            "batch_size" => c.batch_size = value(line, key, v, int)?,
            "momentum" => c.momentum = value(line, key, v, real)?,
            "local_epochs" => c.local_epochs = value(line, key, v, int)?,
            "eta_global" => c.eta_global = value(line, key, v, real)?,
            "hidden_layers" => c.hidden_layers = list(line, key, v)?,
            "unreliable_fraction" => c.unreliable_fraction = value(line, key, v, real)?,
            "overhead_s" => c.overhead_s = value(line, key, v, real)?,
            "early_stop" => c.early_stop = value(line, key, v, flag)?,
            "min_compute" => c.min_compute = value(line, key, v, real)?,
            "min_bandwidth" => c.min_bandwidth = value(line, key, v, real)?,
            "min_data_size" => c.min_data_size = value(line, key, v, int)?,
            "data_type" => c.data_type = v.to_string(),
            "budget" => c.budget = value(line, key, v, int)?,
            "security_deposit" => c.security_deposit = value(line, key, v, int)?,
            "closing_time" => c.closing_time = value(line, key, v, int)?,
            "dataset" => match v {
                "synthetic" | "idx" => dataset_kind = v.to_string(),
                _ => {
                    return Err(CliError::Config {
                        line,
                        message: format!("dataset: expected synthetic or idx, got '{v}'"),
                    })
                }
            },
            "idx_dir" => {
                let dir = resolve(v);
                for (slot, name) in idx.iter_mut().zip(IDX_NAMES) {
                    slot.get_or_insert_with(|| idx_file(&dir, name));
                }
            }
            "train_images" => idx[0] = Some(resolve(v)),
            "train_labels" => idx[1] = Some(resolve(v)),
            "test_images" => idx[2] = Some(resolve(v)),
            "test_labels" => idx[3] = Some(resolve(v)),
            "train_limit" => c.train_limit = value(line, key, v, int)?,
            "test_limit" => c.test_limit = value(line, key, v, int)?,
            "synthetic_classes" => c.synthetic.classes = value(line, key, v, int)?,
            "synthetic_train" => c.synthetic.train_samples = value(line, key, v, int)?,
            "synthetic_test" => c.synthetic.test_samples = value(line, key, v, int)?,
            "synthetic_dim" => c.synthetic.feature_dim = value(line, key, v, int)?,
            "synthetic_separation" => c.synthetic.separation = value(line, key, v, real)?,
            "ckks_preset" => {
                CkksParams::preset(v).map_err(|e| CliError::Config {
                    line,
                    message: e.to_string(),
                })?;
                c.ckks_preset = v.to_string();
            }
            "gas_price_min" => c.gas_prices.min = value(line, key, v, real)?,
            "gas_price_avg" => c.gas_prices.avg = value(line, key, v, real)?,
            "output_dir" => c.output_dir = PathBuf::from(v),
            "record_wall_time" => c.record_wall_time = value(line, key, v, flag)?,
            "precision" => {
                c.precision = match v {
                    "f64" => Precision::F64,
                    "f32" => Precision::F32,
                    _ => {
                        return Err(CliError::Config {
                            line,
                            message: format!("precision: expected f64 or f32, got '{v}'"),
                        })
                    }
                }
            }
            "scenario" => c.scenario = Some(resolve(v)),
            _ => {
                return Err(CliError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }
    for p in [c.gas_prices.min, c.gas_prices.avg] {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(CliError::Invalid(format!("gas price {p} must be non-negative")));
        }
    }
    if dataset_kind == "idx" {
        let [Some(train_images), Some(train_labels), Some(test_images), Some(test_labels)] = idx else {
            return Err(CliError::Invalid(
                "dataset = idx needs idx_dir or all four of train_images, train_labels, test_images, test_labels"
                    .into(),
            ));
        };
        for p in [&train_images, &train_labels, &test_images, &test_labels] {
            if !p.is_file() {
                return Err(CliError::Io {
                    path: p.display().to_string(),
                    message: "dataset file not found".into(),
                });
            }
        }
        c.dataset = DatasetSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        };
    } else if idx.iter().any(Option::is_some) {
        return Err(CliError::Invalid("IDX paths given but dataset is not idx".into()));
    }
    if let Some(s) = &c.scenario {
        if !s.is_file() {
            return Err(CliError::Io {
                path: s.display().to_string(),
                message: "scenario file not found".into(),
            });
        }
    }
    Ok(c)
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = parse_config("", Path::new(".")).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.n_clients, 30);
        assert_eq!(c.learning_rate, 0.01);
        assert_eq!(c.batch_size, 10);
        assert_eq!(c.gas_prices, GasPrices { min: 11.27, avg: 23.49 });
        assert!(c.to_plan().is_ok());
    }

    #[test]
    fn parses_values_and_comments() {
        let text = "# smoke\nn_clients = 4 # four\nselection_mode = random\nhidden_layers = 16, 8\nencryption = true\n\nprecision = f32\n";
        let c = parse_config(text, Path::new(".")).unwrap();
        assert_eq!(c.n_clients, 4);
        assert_eq!(c.selection_mode, SelectionMode::Random);
        assert_eq!(c.hidden_layers, vec![16, 8]);
        assert!(c.encryption);
        assert_eq!(c.precision, Precision::F32);
    }

    #[test]
    fn errors_cite_lines_and_keys() {
        match parse_config("seed = 1\n\nbatch_size = ten\n", Path::new(".")) {
            Err(CliError::Config { line: 3, message }) => assert!(message.contains("batch_size")),
            other => panic!("{other:?}"),
        }
        match parse_config("\nlerning_rate = 0.1\n", Path::new(".")) {
            Err(e @ CliError::UnknownKey { line: 2, .. }) => assert!(e.to_string().contains("lerning_rate")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_config("rounds 3", Path::new(".")),
            Err(CliError::Config { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("seed = 1\nseed = 2", Path::new(".")),
            Err(CliError::Config { line: 2, .. })
        ));
        assert!(matches!(
            parse_config("ckks_preset = huge", Path::new(".")),
            Err(CliError::Config { line: 1, .. })
        ));
    }

    #[test]
    fn idx_paths_must_exist() {
        let text = "dataset = idx\nidx_dir = /nonexistent/mnist\n";
        assert!(matches!(parse_config(text, Path::new(".")), Err(CliError::Io { .. })));
        assert!(matches!(
            parse_config("dataset = idx\n", Path::new(".")),
            Err(CliError::Invalid(_))
        ));
    }
}
