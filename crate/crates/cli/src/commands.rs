use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fedchain::ckks::{CkksContext, CkksParams};
use fedchain::contracts::script::{parse_script, run_script};
use fedchain::contracts::ScoreWeights;
use fedchain::flcore::{
    checkpoint, encrypt_update, encrypted_fedavg, fedavg, ClientUpdate, DatasetShard, GlobalStep, ModelWeights, Shape,
};
use fedchain::ledger::{gas_cost_report, gas_report_csv, GasTable};
use fedchain::simnet::{derive_seed, run_experiment, trace_csv, TRACE_HEADER};
use fedchain::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{DatasetSource, Precision, RunConfig};
use crate::{idx, synth, CliError};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const SNAPSHOT_FILE: &str = "ledger_snapshot.txt";
pub const MODEL_FILE: &str = "model.flwt";
pub const GAS_REPORT_FILE: &str = "gas_report.csv";
pub const AUCTION_TRACE_FILE: &str = "auction_trace.txt";

/// `FEDCHAIN_OUT` when set, otherwise the configured directory.
pub fn output_dir(configured: &Path) -> PathBuf {
    match std::env::var_os("FEDCHAIN_OUT") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => configured.to_path_buf(),
    }
}

/// Writes every file under a temporary name first and renames them only
/// once all writes succeeded, so a failure leaves no partial outputs.
fn write_all(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let staged: Vec<(PathBuf, PathBuf)> = files
        .iter()
        .map(|(name, _)| (dir.join(format!(".{name}.partial")), dir.join(name)))
        .collect();
    let cleanup = || {
        for (tmp, _) in &staged {
            let _ = std::fs::remove_file(tmp);
        }
    };
    for ((tmp, _), (_, bytes)) in staged.iter().zip(files) {
        if let Err(e) = std::fs::write(tmp, bytes) {
            cleanup();
            return Err(CliError::io(tmp, e));
        }
    }
    for (tmp, dst) in &staged {
        if let Err(e) = std::fs::rename(tmp, dst) {
            cleanup();
            return Err(CliError::io(dst, e));
        }
    }
    Ok(staged.into_iter().map(|(_, dst)| dst).collect())
}

fn load_data<T: Scalar>(cfg: &RunConfig) -> Result<(DatasetShard<T>, DatasetShard<T>), CliError> {
    let (train, test) = match &cfg.dataset {
        DatasetSource::Synthetic => synth::gen_synthetic(&cfg.synthetic_spec())?,
        DatasetSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => (
            idx::load_dataset(train_images, train_labels)?,
            idx::load_dataset(test_images, test_labels)?,
        ),
    };
    let limit = |d: DatasetShard<T>, n: usize| {
        if n == 0 || n >= d.len() {
            d
        } else {
            d.subset(&(0..n).collect::<Vec<_>>())
        }
    };
    Ok((limit(train, cfg.train_limit), limit(test, cfg.test_limit)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutputs {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub final_accuracy: f64,
    pub rounds_completed: usize,
}

fn run_with<T: Scalar>(cfg: &RunConfig) -> Result<(Vec<(&'static str, Vec<u8>)>, f64, usize), CliError> {
    let plan = cfg.to_plan()?;
    let (train, test) = load_data::<T>(cfg)?;
    let res = run_experiment(&plan, &train, &test)?;
    let files = vec![
        (
            TRACE_FILE,
            trace_csv(&res.traces, plan.selection_mode, plan.encryption, cfg.record_wall_time).into_bytes(),
        ),
        (SUMMARY_FILE, res.summary.to_text(cfg.record_wall_time).into_bytes()),
        (SNAPSHOT_FILE, res.ledger.snapshot().into_bytes()),
        (MODEL_FILE, checkpoint::to_bytes(&res.final_model)),
    ];
    Ok((files, res.summary.final_accuracy, res.summary.rounds_completed))
}

fn verify_outputs(dir: &Path, rounds: usize) -> Result<(), CliError> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))
    };
    let bad = |name: &str, why: &str| CliError::Format(format!("{name}: {why}"));
    let trace = read(TRACE_FILE)?;
    let mut lines = trace.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(bad(TRACE_FILE, "missing header"));
    }
    let columns = TRACE_HEADER.split(',').count();
    let rows: Vec<&str> = lines.collect();
    if rows.len() != rounds || rows.iter().any(|r| r.split(',').count() != columns) {
        return Err(bad(TRACE_FILE, "malformed rows"));
    }
    if read(SUMMARY_FILE)?.lines().any(|l| l.split_once(" = ").is_none()) {
        return Err(bad(SUMMARY_FILE, "expected key = value lines"));
    }
    if !read(SNAPSHOT_FILE)?.starts_with("ledger-snapshot v1\n") {
        return Err(bad(SNAPSHOT_FILE, "missing snapshot header"));
    }
    Ok(())
}

/// Runs one experiment and writes the trace, summary, ledger snapshot and
/// final model checkpoint into `out_dir`.
pub fn cmd_run(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutputs, CliError> {
    let (files, final_accuracy, rounds_completed) = match cfg.precision {
        Precision::F64 => run_with::<f64>(cfg)?,
        Precision::F32 => run_with::<f32>(cfg)?,
    };
    let written = write_all(out_dir, &files)?;
    verify_outputs(out_dir, rounds_completed)?;
    Ok(RunOutputs {
        dir: out_dir.to_path_buf(),
        files: written,
        final_accuracy,
        rounds_completed,
    })
}

pub const BENCH_OPS: [&str; 6] = ["encode", "encrypt", "add", "mul_plain", "rescale", "decrypt"];
pub const BENCH_HEADER: &str = "metric,value,unit";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub preset: String,
    /// Mean milliseconds per call, in [`BENCH_OPS`] order.
    pub op_ms: Vec<(&'static str, f64)>,
    pub plain_aggregation_ms: f64,
    pub encrypted_aggregation_ms: f64,
}

impl BenchReport {
    pub fn aggregation_ratio(&self) -> f64 {
        self.encrypted_aggregation_ms / self.plain_aggregation_ms
    }

    /// Six op rows followed by one ratio row.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{BENCH_HEADER}\n");
        for (op, ms) in &self.op_ms {
            writeln!(s, "{op},{ms:.6},ms").unwrap();
        }
        writeln!(s, "aggregation_ratio,{:.6},x", self.aggregation_ratio()).unwrap();
        s
    }
}

fn mean_ms<R>(reps: usize, mut f: impl FnMut() -> Result<R, CliError>) -> Result<(f64, R), CliError> {
    let start = Instant::now();
    let mut last = f()?;
    for _ in 1..reps {
        last = f()?;
    }
    Ok((start.elapsed().as_secs_f64() * 1e3 / reps as f64, last))
}

/// Times the six primitive ops and a 10-client aggregation of a
/// 10,000-parameter model, encrypted and plain.
pub fn cmd_bench_ckks(preset: &str, reps: usize) -> Result<BenchReport, CliError> {
    let reps = reps.max(1);
    let ctx = CkksContext::new(CkksParams::preset(preset)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0, "bench"));
    let values: Vec<f64> = (0..ctx.slots()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let kp = ctx.keygen(1);
    let level = ctx.top_level();

    let (encode, pt) = mean_ms(reps, || Ok(ctx.encode(&values, level)?))?;
    let (encrypt, ct) = mean_ms(reps, || Ok(ctx.encrypt(&pt, &kp.public_key, 2)?))?;
    let (add, sum) = mean_ms(reps, || Ok(ctx.add(&ct, &ct)?))?;
    let (mul_plain, prod) = mean_ms(reps, || Ok(ctx.mul_plain(&sum, &pt)?))?;
    let (rescale, scaled) = mean_ms(reps, || Ok(ctx.rescale(&prod)?))?;
    let (decrypt, _) = mean_ms(reps, || Ok(ctx.decrypt(&scaled, &kp.secret_key)))?;

    // 4999 inputs, 2 classes: 10,000 parameters.
    let shape = Shape::logistic(4999, 2)?;
    let params = shape.param_count();
    let w = ModelWeights::new((0..params).map(|_| rng.gen_range(-1.0..1.0)).collect(), shape)?;
    let updates = (0..10)
        .map(|_| {
            let delta = (0..params).map(|_| rng.gen_range(-0.1..0.1)).collect();
            ClientUpdate::<f64>::new(delta, rng.gen_range(100..1000))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let enc = updates
        .iter()
        .enumerate()
        .map(|(i, u)| encrypt_update(&ctx, u, &kp.public_key, 10 + i as u64))
        .collect::<Result<Vec<_>, _>>()?;
    let step = GlobalStep::default();
    let plain_reps = 1000;
    let (plain_aggregation_ms, _) = mean_ms(plain_reps, || Ok(fedavg(&w, &updates, step)?))?;
    let (encrypted_aggregation_ms, _) = mean_ms(1, || Ok(encrypted_fedavg(&ctx, &w, &enc, step)?))?;

    Ok(BenchReport {
        preset: preset.to_string(),
        op_ms: BENCH_OPS
            .into_iter()
            .zip([encode, encrypt, add, mul_plain, rescale, decrypt])
            .collect(),
        plain_aggregation_ms,
        encrypted_aggregation_ms,
    })
}

pub fn write_bench_report(report: &BenchReport, out_dir: &Path) -> Result<PathBuf, CliError> {
    let name = format!("bench_ckks_{}.csv", report.preset);
    let files = [(name.as_str(), report.to_csv().into_bytes())];
    Ok(write_all(out_dir, &files)?.remove(0))
}

/// Gas units and costs at both configured prices for every contract op.
pub fn cmd_gas_report(cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf, CliError> {
    let rows = gas_cost_report(&GasTable::default(), cfg.gas_prices);
    let files = [(GAS_REPORT_FILE, gas_report_csv(&rows).into_bytes())];
    Ok(write_all(out_dir, &files)?.remove(0))
}

/// Replays the configured contract scenario. Reverts are part of the
/// replay and land in the trace; only an unreadable script is an error.
pub fn cmd_auction_demo(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let path = cfg
        .scenario
        .as_ref()
        .ok_or_else(|| CliError::Invalid("auction-demo needs a scenario path in the config".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let lines = parse_script(&text)?;
    let run = run_script(&lines, GasTable::default(), cfg.gas_prices.avg, ScoreWeights::default());
    let files = [
        (AUCTION_TRACE_FILE, run.trace().into_bytes()),
        (SNAPSHOT_FILE, run.ledger.snapshot().into_bytes()),
    ];
    write_all(out_dir, &files)
}
