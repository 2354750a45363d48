//! The four subcommands. Every argument and input check runs before the
//! first output file is created, so a usage failure leaves nothing behind.

use std::fs;
use std::path::{Path, PathBuf};

use dac_core::analysis::bound_report;
use dac_core::data::{gen_gauss_blobs, gen_two_moons, load_csv, rotate, save_csv, translate, Dataset};
use dac_core::model::{load_model, model_to_text, train_source, ModelParams};
use dac_core::report::{feature_dump_csv, feature_dump_name, metrics_csv, parse_feature_dump, BankSnapshot};
use dac_core::trainer::adapt_observed;
use dac_core::DacError;

use crate::config::{DataKind, DataParams, RunConfig};

pub const RESOLVED_CONFIG: &str = "resolved-config.txt";
pub const METRICS: &str = "metrics.csv";
pub const MODEL: &str = "model.txt";
pub const FINAL_STATE: &str = "final-state.csv";
pub const SOURCE_HISTORY: &str = "source-history.csv";
pub const BOUND_REPORT: &str = "bound-report.csv";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or inputs; exit code 2.
    Usage(String),
    /// Training or I/O failure after outputs were started; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {}", path.display(), e)))?;
    RunConfig::parse(&text).map_err(|e| usage(format!("{}: {}", path.display(), e)))
}

fn required(flag: Option<PathBuf>, key: Option<&PathBuf>, name: &str) -> CliResult<PathBuf> {
    flag.or_else(|| key.cloned())
        .ok_or_else(|| usage(format!("missing --{} (or config key)", name)))
}

fn read_dataset(path: &Path) -> CliResult<Dataset> {
    load_csv(path).map_err(|e| usage(format!("{}: {}", path.display(), e)))
}

fn read_model(path: &Path) -> CliResult<ModelParams> {
    load_model(path).map_err(|e| usage(format!("{}: {}", path.display(), e)))
}

fn write(path: PathBuf, text: &str) -> CliResult<()> {
    fs::write(&path, text).map_err(|e| runtime(format!("cannot write {}: {}", path.display(), e)))
}

fn make_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {}", dir.display(), e)))
}

/// Domain-shift knobs applied on top of a generator's output.
pub fn generate(params: &DataParams, seed: u64, domain: &str) -> Result<Dataset, DacError> {
    let ds = match params.kind {
        DataKind::Moons => {
            let ds = gen_two_moons(params.n, params.noise, params.rotation, seed)?;
            if params.shift.is_empty() {
                ds
            } else {
                translate(&ds, &params.shift)?
            }
        }
        DataKind::Blobs => {
            let shift = if params.shift.is_empty() {
                vec![0.0; params.dim]
            } else {
                params.shift.clone()
            };
            let ds = gen_gauss_blobs(params.n, params.classes, params.dim, &shift, params.spread, seed)?;
            if params.rotation != 0.0 {
                rotate(&ds, params.rotation)?
            } else {
                ds
            }
        }
    };
    Ok(ds.with_domain(domain))
}

pub fn gen_data(params: &DataParams, seed: u64, domain: &str, out: &Path) -> CliResult<()> {
    if domain.is_empty() || domain.contains(',') {
        return Err(usage("domain must be non-empty and contain no comma"));
    }
    let ds = generate(params, seed, domain).map_err(usage)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        make_dir(parent)?;
    }
    save_csv(&ds, out).map_err(runtime)?;
    println!("wrote {} samples to {}", ds.len(), out.display());
    Ok(())
}

pub fn cmd_train_source(cfg: &RunConfig, source: Option<PathBuf>, out: Option<PathBuf>) -> CliResult<()> {
    let source = required(source, cfg.source_csv.as_ref(), "source")?;
    let out = required(out, cfg.out_dir.as_ref(), "out")?;
    let ds = read_dataset(&source)?;
    if ds.labels().is_none() {
        return Err(usage(format!("{}: source data must be labeled", source.display())));
    }
    let trained = train_source(&cfg.source, &ds, cfg.adapt.seed).map_err(|e| match e {
        DacError::InvalidArgument(m) => CliError::Usage(m),
        other => runtime(other),
    })?;
    make_dir(&out)?;
    write(out.join(RESOLVED_CONFIG), &cfg.to_text())?;
    write(out.join(MODEL), &model_to_text(&trained.params))?;
    let mut hist = String::from("epoch,loss\n");
    for (e, l) in trained.epoch_losses.iter().enumerate() {
        hist.push_str(&format!("{},{}\n", e + 1, dac_core::data::format_f64(*l)));
    }
    write(out.join(SOURCE_HISTORY), &hist)?;
    println!("held-out source accuracy {:.4}", trained.holdout_accuracy);
    Ok(())
}

pub fn cmd_adapt(
    cfg: &RunConfig,
    model: Option<PathBuf>,
    target: Option<PathBuf>,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let model = required(model, cfg.source_model.as_ref(), "source-model")?;
    let target = required(target, cfg.target_csv.as_ref(), "target")?;
    let out = required(out, cfg.out_dir.as_ref(), "out")?;
    let source = read_model(&model)?;
    let ds = read_dataset(&target)?;
    if ds.dim() != source.dims().input {
        return Err(usage(format!(
            "target dimension {} does not match model input {}",
            ds.dim(),
            source.dims().input
        )));
    }
    cfg.adapt.validate(ds.len()).map_err(usage)?;

    make_dir(&out)?;
    write(out.join(RESOLVED_CONFIG), &cfg.to_text())?;
    let mut dump_error = None;
    let outcome = adapt_observed(&cfg.adapt, &source, &ds, |snap| {
        if cfg.dump_features && dump_error.is_none() {
            let r = feature_dump_csv(snap.bank, snap.pseudo)
                .map_err(runtime)
                .and_then(|text| write(out.join(feature_dump_name(snap.record.epoch)), &text));
            dump_error = r.err();
        }
    })
    .map_err(runtime)?;
    if let Some(e) = dump_error {
        return Err(e);
    }
    write(out.join(METRICS), &metrics_csv(&outcome.history))?;
    write(out.join(MODEL), &model_to_text(&outcome.params))?;
    write(
        out.join(FINAL_STATE),
        &feature_dump_csv(&outcome.bank, &outcome.pseudo).map_err(runtime)?,
    )?;
    if let Some(last) = outcome.history.last() {
        if let Some(e) = &last.evaluation {
            println!("epoch {} target accuracy {:.4}", last.epoch, e.accuracy);
        }
    }
    Ok(())
}

pub fn cmd_analyze(
    cfg: &RunConfig,
    run: Option<PathBuf>,
    model: Option<PathBuf>,
    state: Option<PathBuf>,
    target: Option<PathBuf>,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let model = model
        .or_else(|| run.as_ref().map(|r| r.join(MODEL)))
        .ok_or_else(|| usage("missing --model (or --run)"))?;
    let state = state
        .or_else(|| run.as_ref().map(|r| r.join(FINAL_STATE)))
        .ok_or_else(|| usage("missing --state (or --run)"))?;
    let target = required(target, cfg.target_csv.as_ref(), "target")?;
    let out = out
        .or_else(|| run.clone())
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| usage("missing --out (or --run)"))?;
    let params = read_model(&model)?;
    let ds = read_dataset(&target)?;
    if ds.labels().is_none() {
        return Err(usage(format!(
            "{}: analysis needs ground-truth labels",
            target.display()
        )));
    }
    if ds.dim() != params.dims().input {
        return Err(usage("target dimension does not match the model"));
    }
    let text = fs::read_to_string(&state).map_err(|e| usage(format!("cannot read {}: {}", state.display(), e)))?;
    let snapshot: BankSnapshot = parse_feature_dump(&text).map_err(|e| usage(format!("{}: {}", state.display(), e)))?;
    if snapshot.split.len() != ds.len() {
        return Err(usage("state row count differs from target size"));
    }
    let (bank, pseudo) = snapshot
        .restore(params.dims().classes, cfg.adapt.bank_config())
        .map_err(usage)?;
    if !(cfg.adapt.policy.radius_r > 0.0) || cfg.n_aug == 0 || cfg.n_pairs == 0 {
        return Err(usage("radius_r, n_aug and n_pairs must be positive"));
    }

    let report = bound_report(&params, &pseudo, &ds, &bank, &cfg.adapt.policy, &cfg.analysis()).map_err(runtime)?;
    make_dir(&out)?;
    write(out.join(BOUND_REPORT), &report.to_csv_string())?;
    println!(
        "consistency {:.4} (source-like {}) eps_dt {:.4} tau_claim {:.6}",
        report.consistency_error,
        report
            .consistency_error_source_like
            .map(|v| format!("{:.4}", v))
            .unwrap_or_else(|| "-".into()),
        report.eps_dt,
        report.tau_claim
    );
    Ok(())
}
