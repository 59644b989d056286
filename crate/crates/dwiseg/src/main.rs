//! Command-line front end. Every subcommand is a thin wrapper over the
//! library: JSON configs with `--set key=value` overrides (unknown keys are
//! rejected), and every run writes a `resolved_config.json` echo into its
//! output directory so artifacts can be reproduced from the echo plus seeds.
//!
//! Exit codes: 0 success, 2 bad usage or config, 1 runtime failure. Errors
//! are a single machine-parsable line on stderr.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use dwiseg::data::{
    generate_phantom_cohort, read_dataset, read_mask_set, split_ratios, write_dataset,
    write_mask_set, DomainTag, MaskSet, PhantomConfig, Zone,
};
use dwiseg::experiment::{
    desk_plan, emit_curve_plot, emit_metric_bars, load_results, full_scale_plan, persist_results,
    run_sweep, CellStatus, ExperimentPlan, PlotFormat,
};
use dwiseg::metrics::{
    base_apex_analysis, evaluate_cohort, patient_mean_dsc, BaseApexBreakdown, MetricsReport,
};
use dwiseg::model::{build_model, load_checkpoint, save_checkpoint, ModelConfig};
use dwiseg::postprocess::{postprocess_volume, PostprocessConfig};
use dwiseg::transfer::{
    finetune, predict_patient, train_source, write_training_log, FineTuneScheme, TrainConfig,
};
use dwiseg::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dwiseg",
    version,
    about = "Transfer-learning segmentation workbench for dual-domain DWI phantoms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic DWI cohort and write it as a dataset directory.
    GeneratePhantom(GeneratePhantomArgs),
    /// Train a source-domain model from scratch on a dataset.
    TrainSource(TrainSourceArgs),
    /// Adapt a source checkpoint to a target dataset with layer freezing.
    Finetune(FinetuneArgs),
    /// Run a checkpoint over a dataset and write predicted mask volumes.
    Predict(PredictArgs),
    /// Morphologically clean predicted mask volumes.
    Postprocess(PostprocessArgs),
    /// Score predicted mask volumes against a dataset's ground truth.
    Evaluate(EvaluateArgs),
    /// Run a fine-tune-size sweep from a plan and persist results + plots.
    Sweep(SweepArgs),
    /// Re-plot a persisted sweep directory.
    Plot(PlotArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("dwiseg: error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GeneratePhantom(a) => cmd_generate_phantom(a),
        Command::TrainSource(a) => cmd_train_source(a),
        Command::Finetune(a) => cmd_finetune(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Postprocess(a) => cmd_postprocess(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

// ---- config plumbing ----

/// Loads `path` (or serializes `default`), applies `--set` overrides, then
/// re-parses into the typed config so unknown keys are rejected.
fn load_config<T: DeserializeOwned + Serialize>(
    default: T,
    path: Option<&Path>,
    sets: &[String],
) -> Result<T> {
    let mut value = match path {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_slice(&bytes)?
        }
        None => serde_json::to_value(&default)?,
    };
    for spec in sets {
        apply_override(&mut value, spec)?;
    }
    Ok(serde_json::from_value(value)?)
}

/// Applies one `a.b.c=value` override; the value parses as JSON when it can,
/// otherwise it is taken as a bare string (`--set zone=tz`).
fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' must be KEY=VALUE")))?;
    if path.is_empty() {
        return Err(Error::Config(format!("override '{spec}' has an empty key")));
    }
    let new = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = path.split('.').collect();
    let (last, trunk) = parts.split_last().unwrap();
    let mut cur = root;
    for part in trunk {
        let obj = cur.as_object_mut().ok_or_else(|| {
            Error::Config(format!("override key '{path}': '{part}' is not an object"))
        })?;
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(serde_json::Map::new()));
    }
    cur.as_object_mut()
        .ok_or_else(|| Error::Config(format!("override key '{path}' does not address an object")))?
        .insert(last.to_string(), new);
    Ok(())
}

/// Writes the resolved-config echo every run leaves in its output directory.
fn write_echo<T: Serialize>(
    out: &Path,
    command: &str,
    config: &T,
    inputs: &[(&str, String)],
) -> Result<()> {
    #[derive(Serialize)]
    struct Echo<'a, T> {
        command: &'a str,
        config: &'a T,
        inputs: BTreeMap<&'a str, &'a str>,
    }
    let echo = Echo {
        command,
        config,
        inputs: inputs.iter().map(|(k, v)| (*k, v.as_str())).collect(),
    };
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("resolved_config.json");
    let text = serde_json::to_string_pretty(&echo)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn parse_zone(s: &str) -> std::result::Result<Zone, String> {
    match s {
        "wg" => Ok(Zone::Wg),
        "tz" => Ok(Zone::Tz),
        other => Err(format!("unknown zone '{other}', expected wg or tz")),
    }
}

fn parse_domain(s: &str) -> std::result::Result<DomainTag, String> {
    match s {
        "source" => Ok(DomainTag::Source),
        "target" => Ok(DomainTag::Target),
        other => Err(format!("unknown domain '{other}', expected source or target")),
    }
}

fn parse_format(s: &str) -> std::result::Result<PlotFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn scheme_name(scheme: FineTuneScheme) -> String {
    serde_json::to_string(&scheme)
        .map(|s| s.trim_matches('"').to_string())
        .unwrap_or_else(|_| format!("{scheme:?}"))
}

// ---- generate-phantom ----

#[derive(Args)]
struct GeneratePhantomArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Cohort flavor: source (clean) or target (domain-shifted).
    #[arg(long, default_value = "source", value_parser = parse_domain)]
    domain: DomainTag,
    /// Phantom config JSON; defaults to the chosen domain's preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config field, e.g. --set n_patients=12 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn cmd_generate_phantom(a: GeneratePhantomArgs) -> Result<()> {
    let default = match a.domain {
        DomainTag::Source => PhantomConfig::source_default(),
        DomainTag::Target => PhantomConfig::target_default(),
    };
    let config: PhantomConfig = load_config(default, a.config.as_deref(), &a.set)?;
    let cohort = generate_phantom_cohort(&config, a.domain)?;
    let manifest = write_dataset(&cohort, &a.out)?;
    write_echo(
        &a.out,
        "generate-phantom",
        &config,
        &[("domain", a.domain.to_string())],
    )?;
    println!(
        "wrote {} patients ({} slices) to {}",
        cohort.n_patients(),
        cohort.total_slices(),
        manifest.display()
    );
    Ok(())
}

// ---- train-source ----

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainSourceJob {
    model: ModelConfig,
    train: TrainConfig,
    /// Patient-level train/val split; there is no source test bucket.
    split_seed: u64,
    train_weight: f64,
    val_weight: f64,
}

impl Default for TrainSourceJob {
    fn default() -> Self {
        TrainSourceJob {
            model: ModelConfig::default(),
            train: TrainConfig {
                augment: true,
                ..TrainConfig::default()
            },
            split_seed: 0,
            train_weight: 4.0,
            val_weight: 1.0,
        }
    }
}

#[derive(Args)]
struct TrainSourceArgs {
    /// Source-domain dataset directory.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for checkpoint, training log and config echo.
    #[arg(long)]
    out: PathBuf,
    /// Job config JSON (model + training hyperparameters).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn check_dims(dataset: (usize, usize), model: (usize, usize)) -> Result<()> {
    if dataset != model {
        return Err(Error::Config(format!(
            "dataset slices are {}x{} but the model expects {}x{}",
            dataset.0, dataset.1, model.0, model.1
        )));
    }
    Ok(())
}

fn cmd_train_source(a: TrainSourceArgs) -> Result<()> {
    let job: TrainSourceJob = load_config(TrainSourceJob::default(), a.config.as_deref(), &a.set)?;
    let cohort = read_dataset(&a.dataset)?;
    check_dims(
        (cohort.height, cohort.width),
        (job.model.height, job.model.width),
    )?;
    let split = split_ratios(
        &cohort,
        (job.train_weight, job.val_weight, 0.0),
        job.split_seed,
    )?;
    let val = (split.val.n_patients() > 0).then_some(&split.val);
    let mut model = build_model(&job.model, job.train.seed)?;
    let outcome = train_source(&mut model, &split.train, val, &job.train)?;
    write_echo(
        &a.out,
        "train-source",
        &job,
        &[("dataset", a.dataset.display().to_string())],
    )?;
    let ckpt = a.out.join("checkpoint.bin");
    save_checkpoint(&model, &ckpt)?;
    write_training_log(&a.out.join("training_log.csv"), &outcome.log)?;
    println!(
        "trained {} epochs, best epoch {} (val DSC {:.4}); checkpoint at {}",
        outcome.log.len(),
        outcome.best_epoch,
        outcome.best_val_dsc,
        ckpt.display()
    );
    Ok(())
}

// ---- finetune ----

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FinetuneJob {
    /// None = the zone's default freezing scheme.
    scheme: Option<FineTuneScheme>,
    train: TrainConfig,
}

#[derive(Args)]
struct FinetuneArgs {
    /// Target-domain dataset directory (all its patients are used).
    #[arg(long)]
    dataset: PathBuf,
    /// Source checkpoint to adapt.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory for checkpoint, training log and config echo.
    #[arg(long)]
    out: PathBuf,
    /// Job config JSON (scheme + training hyperparameters).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn cmd_finetune(a: FinetuneArgs) -> Result<()> {
    let job: FinetuneJob = load_config(FinetuneJob::default(), a.config.as_deref(), &a.set)?;
    let cohort = read_dataset(&a.dataset)?;
    let mut model = load_checkpoint(&a.checkpoint)?;
    check_dims(
        (cohort.height, cohort.width),
        (model.config.height, model.config.width),
    )?;
    let scheme = job
        .scheme
        .unwrap_or_else(|| FineTuneScheme::default_for_zone(job.train.zone));
    let outcome = finetune(&mut model, &cohort, None, scheme, &job.train)?;
    write_echo(
        &a.out,
        "finetune",
        &job,
        &[
            ("dataset", a.dataset.display().to_string()),
            ("checkpoint", a.checkpoint.display().to_string()),
        ],
    )?;
    let ckpt = a.out.join("checkpoint.bin");
    save_checkpoint(&model, &ckpt)?;
    write_training_log(&a.out.join("training_log.csv"), &outcome.log)?;
    println!(
        "fine-tuned {} epochs with {} scheme; checkpoint at {}",
        outcome.log.len(),
        scheme_name(scheme),
        ckpt.display()
    );
    Ok(())
}

// ---- predict ----

#[derive(Args)]
struct PredictArgs {
    /// Dataset directory to predict on.
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoint to run.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output mask-set directory.
    #[arg(long)]
    out: PathBuf,
    /// Zone label recorded in the mask set (wg or tz).
    #[arg(long, value_parser = parse_zone)]
    zone: Zone,
    /// Probability threshold for binarization.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    if !(a.threshold > 0.0 && a.threshold <= 1.0) {
        return Err(Error::Config(format!(
            "threshold {} must be in (0, 1]",
            a.threshold
        )));
    }
    let cohort = read_dataset(&a.dataset)?;
    let model = load_checkpoint(&a.checkpoint)?;
    check_dims(
        (cohort.height, cohort.width),
        (model.config.height, model.config.width),
    )?;
    let mut patients = Vec::with_capacity(cohort.n_patients());
    for p in &cohort.patients {
        patients.push((p.patient_id.clone(), predict_patient(&model, p, a.threshold)?));
    }
    let set = MaskSet {
        zone: a.zone,
        height: cohort.height,
        width: cohort.width,
        patients,
    };
    let manifest = write_mask_set(&set, &a.out)?;
    write_echo(
        &a.out,
        "predict",
        &json!({ "zone": a.zone, "threshold": a.threshold }),
        &[
            ("dataset", a.dataset.display().to_string()),
            ("checkpoint", a.checkpoint.display().to_string()),
        ],
    )?;
    println!(
        "wrote {} predicted volumes to {}",
        set.patients.len(),
        manifest.display()
    );
    Ok(())
}

// ---- postprocess ----

#[derive(Args)]
struct PostprocessArgs {
    /// Input mask-set directory.
    #[arg(long)]
    masks: PathBuf,
    /// Output mask-set directory.
    #[arg(long)]
    out: PathBuf,
    /// Post-processing config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn cmd_postprocess(a: PostprocessArgs) -> Result<()> {
    let config: PostprocessConfig =
        load_config(PostprocessConfig::default(), a.config.as_deref(), &a.set)?;
    config.validate()?;
    let set = read_mask_set(&a.masks)?;
    let mut patients = Vec::with_capacity(set.patients.len());
    for (patient_id, masks) in &set.patients {
        patients.push((
            patient_id.clone(),
            postprocess_volume(masks, &config, set.zone)?,
        ));
    }
    let out_set = MaskSet {
        zone: set.zone,
        height: set.height,
        width: set.width,
        patients,
    };
    write_mask_set(&out_set, &a.out)?;
    write_echo(
        &a.out,
        "postprocess",
        &config,
        &[("masks", a.masks.display().to_string())],
    )?;
    println!(
        "post-processed {} volumes into {}",
        out_set.patients.len(),
        a.out.display()
    );
    Ok(())
}

// ---- evaluate ----

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted mask-set directory.
    #[arg(long)]
    masks: PathBuf,
    /// Dataset directory holding the ground truth.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for report.json / report.csv.
    #[arg(long)]
    out: PathBuf,
    /// If set, also classify detection errors as base/apex vs mid-gland,
    /// counting ground-truth masks below this pixel count as base/apex.
    #[arg(long)]
    size_threshold: Option<usize>,
}

#[derive(Serialize)]
struct EvalOutput {
    zone: Zone,
    report: MetricsReport,
    patient_mean_dsc: f64,
    base_apex: Option<BaseApexBreakdown>,
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let set = read_mask_set(&a.masks)?;
    let gt = read_dataset(&a.dataset)?;
    if set.patients.len() != gt.n_patients() {
        return Err(Error::Misaligned(format!(
            "{} predicted patients vs {} in the dataset",
            set.patients.len(),
            gt.n_patients()
        )));
    }
    for ((pred_id, _), patient) in set.patients.iter().zip(&gt.patients) {
        if pred_id != &patient.patient_id {
            return Err(Error::Misaligned(format!(
                "prediction for patient '{pred_id}' paired with dataset patient '{}'",
                patient.patient_id
            )));
        }
    }
    let preds: Vec<Vec<Array2<u8>>> = set.patients.iter().map(|(_, m)| m.clone()).collect();
    let report = evaluate_cohort(&preds, &gt, set.zone)?;
    let patient_mean = patient_mean_dsc(&preds, &gt, set.zone)?;
    let base_apex = a
        .size_threshold
        .map(|t| base_apex_analysis(&preds, &gt, set.zone, t))
        .transpose()?;
    let output = EvalOutput {
        zone: set.zone,
        report,
        patient_mean_dsc: patient_mean,
        base_apex,
    };

    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let json_path = a.out.join("report.json");
    let text = serde_json::to_string_pretty(&output)?;
    fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;

    let csv_path = a.out.join("report.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::Invalid(e.to_string()))?;
    w.write_record([
        "zone",
        "mean_dsc",
        "std_dsc",
        "sensitivity",
        "specificity",
        "precision",
        "n_slices_total",
        "n_slices_with_prostate",
    ])
    .map_err(|e| Error::Invalid(e.to_string()))?;
    let r = &output.report;
    w.write_record([
        output.zone.to_string(),
        r.mean_dsc.to_string(),
        r.std_dsc.to_string(),
        r.sensitivity.to_string(),
        r.specificity.to_string(),
        r.precision.map(|p| p.to_string()).unwrap_or_default(),
        r.n_slices_total.to_string(),
        r.n_slices_with_prostate.to_string(),
    ])
    .map_err(|e| Error::Invalid(e.to_string()))?;
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    write_echo(
        &a.out,
        "evaluate",
        &json!({ "size_threshold": a.size_threshold }),
        &[
            ("masks", a.masks.display().to_string()),
            ("dataset", a.dataset.display().to_string()),
        ],
    )?;
    println!(
        "mean DSC {:.4} +/- {:.4} over {} prostate slices ({} total)",
        r.mean_dsc, r.std_dsc, r.n_slices_with_prostate, r.n_slices_total
    );
    Ok(())
}

// ---- sweep ----

#[derive(Args)]
struct SweepArgs {
    /// Sweep plan JSON.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in plan: "desk" (fast) or "full" (full-scale grid).
    #[arg(long, requires = "zone")]
    preset: Option<String>,
    /// Zone for --preset plans (wg or tz).
    #[arg(long, value_parser = parse_zone)]
    zone: Option<Zone>,
    /// Output directory for per-cell JSON, CSVs and plots.
    #[arg(long)]
    out: PathBuf,
    /// Parallel cell workers; defaults to $DWISEG_WORKERS, then 1.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let mut value: Value = match (&a.config, &a.preset) {
        (Some(path), None) => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_slice(&bytes)?
        }
        (None, Some(preset)) => {
            let zone = a.zone.expect("clap enforces --zone with --preset");
            let plan = match preset.as_str() {
                "desk" => desk_plan(zone),
                "full" => full_scale_plan(zone),
                other => {
                    return Err(Error::Config(format!(
                        "unknown preset '{other}', expected desk or full"
                    )))
                }
            };
            serde_json::to_value(&plan)?
        }
        _ => return Err(Error::Config("sweep needs --config or --preset".into())),
    };
    for spec in &a.set {
        apply_override(&mut value, spec)?;
    }
    let plan: ExperimentPlan = serde_json::from_value(value)?;
    let workers = match a.workers {
        Some(w) => w,
        None => match std::env::var("DWISEG_WORKERS") {
            Ok(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("DWISEG_WORKERS='{v}' is not a number")))?,
            Err(_) => 1,
        },
    };
    let result = run_sweep(&plan, workers)?;
    persist_results(&result, &a.out)?;
    emit_curve_plot(&result, &a.out.join("dsc_curve.svg"), PlotFormat::Svg)?;
    emit_metric_bars(&result, &[], &a.out.join("metric_bars.svg"), PlotFormat::Svg)?;
    write_echo(&a.out, "sweep", &plan, &[("workers", workers.to_string())])?;
    let failed = result
        .cells
        .iter()
        .filter(|c| !matches!(c.status, CellStatus::Ok))
        .count();
    println!(
        "sweep complete: {} cells ({} failed); results in {}",
        result.cells.len(),
        failed,
        a.out.display()
    );
    Ok(())
}

// ---- plot ----

#[derive(Args)]
struct PlotArgs {
    /// Persisted sweep directory (plan.json plus per-cell JSON files).
    #[arg(long)]
    results: PathBuf,
    /// Output directory for the plot files.
    #[arg(long)]
    out: PathBuf,
    /// Output format; only svg is built in.
    #[arg(long, default_value = "svg", value_parser = parse_format)]
    format: PlotFormat,
    /// Sizes for the metric bars, e.g. --sizes 2,8; default: all plan sizes.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let result = load_results(&a.results)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    emit_curve_plot(&result, &a.out.join("dsc_curve.svg"), a.format)?;
    emit_metric_bars(&result, &a.sizes, &a.out.join("metric_bars.svg"), a.format)?;
    write_echo(
        &a.out,
        "plot",
        &json!({ "format": "svg", "sizes": a.sizes }),
        &[("results", a.results.display().to_string())],
    )?;
    println!("wrote plots to {}", a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_nest_and_reject_non_objects() {
        let mut v = json!({ "train": { "epochs": 5 }, "zone": "wg" });
        apply_override(&mut v, "train.epochs=9").unwrap();
        apply_override(&mut v, "zone=tz").unwrap();
        apply_override(&mut v, "train.loss.x=0.5").unwrap();
        assert_eq!(v["train"]["epochs"], json!(9));
        assert_eq!(v["zone"], json!("tz"));
        assert_eq!(v["train"]["loss"]["x"], json!(0.5));
        assert!(apply_override(&mut v, "zone.sub=1").is_err());
        assert!(apply_override(&mut v, "no_equals_sign").is_err());
    }

    #[test]
    fn typed_parse_rejects_unknown_override_keys() {
        let job: Result<FinetuneJob> =
            load_config(FinetuneJob::default(), None, &["train.epoks=3".to_string()]);
        assert!(matches!(job, Err(Error::Json(_))));
        let job: FinetuneJob =
            load_config(FinetuneJob::default(), None, &["train.epochs=3".to_string()]).unwrap();
        assert_eq!(job.train.epochs, 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
