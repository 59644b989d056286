//! Sweep orchestration: trains source models once per seed, then walks the
//! (regime × fine-tune size × X × seed) grid on nested target subsets, always
//! evaluating against one fixed target test set. Results are persisted as
//! per-cell JSON plus deterministic aggregate CSV; wall-clock goes to a
//! separate timings file so result files are byte-reproducible.

mod plot;

pub use plot::{emit_curve_plot, emit_metric_bars, PlotFormat};

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_phantom_cohort, nested_subset, split_fixed_test, split_ratios, Cohort, DomainShift,
    DomainTag, FixedTestSplit, PhantomConfig, Zone,
};
use crate::error::{Error, Result};
use crate::loss::validate_x_on_grid;
use crate::metrics::{evaluate_cohort, MetricsReport};
use crate::model::{build_model, Model, ModelConfig};
use crate::postprocess::{derive_min_size_threshold, postprocess_volume, PostprocessConfig};
use crate::transfer::{finetune, predict_patient, train_source, FineTuneScheme, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Transfer,
    Scratch,
    NoTraining,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Transfer => "transfer",
            Regime::Scratch => "scratch",
            Regime::NoTraining => "no-training",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub zone: Zone,
    /// Patient counts for the fine-tune subsets; strictly increasing, and the
    /// subsets are nested (size 4 contains size 2).
    pub finetune_sizes: Vec<usize>,
    pub regimes: Vec<Regime>,
    /// Empty-slice reward values to sweep; each must sit on the 0.1 grid.
    pub x_values: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Patients reserved from the target cohort as the immutable test set.
    pub fixed_test_size: usize,
    pub split_seed: u64,
    pub source_phantom: PhantomConfig,
    pub target_phantom: PhantomConfig,
    pub model: ModelConfig,
    /// Template for source training; per-cell fields (zone) are overridden.
    pub source_train: TrainConfig,
    /// Template for fine-tuning and scratch cells; zone, seed and loss X are
    /// overridden per cell.
    pub finetune_train: TrainConfig,
    /// Defaults to the zone's scheme when absent.
    pub scheme: Option<FineTuneScheme>,
    /// Evaluation-time cleanup. A zero min-pixel threshold for the plan's
    /// zone is replaced by the value derived from source training masks.
    pub postprocess: PostprocessConfig,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.finetune_sizes.is_empty() {
            return Err(Error::Config("finetune_sizes must not be empty".into()));
        }
        if !self.finetune_sizes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(
                "finetune_sizes must be strictly increasing".into(),
            ));
        }
        if self.regimes.is_empty() {
            return Err(Error::Config("regimes must not be empty".into()));
        }
        let mut seen = self.regimes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.regimes.len() {
            return Err(Error::Config("duplicate regimes in plan".into()));
        }
        if self.x_values.is_empty() {
            return Err(Error::Config("x_values must not be empty".into()));
        }
        if !self.x_values.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(
                "x_values must be strictly increasing".into(),
            ));
        }
        for &x in &self.x_values {
            validate_x_on_grid(x)?;
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("duplicate seeds in plan".into()));
        }
        if self.fixed_test_size == 0 {
            return Err(Error::Config("fixed_test_size must be >= 1".into()));
        }
        let max_size = *self.finetune_sizes.last().unwrap();
        if max_size + self.fixed_test_size > self.target_phantom.n_patients {
            return Err(Error::Config(format!(
                "largest fine-tune size {max_size} + fixed_test_size {} exceeds the {}-patient target cohort",
                self.fixed_test_size, self.target_phantom.n_patients
            )));
        }
        self.source_phantom.validate()?;
        self.target_phantom.validate()?;
        self.model.validate()?;
        for phantom in [&self.source_phantom, &self.target_phantom] {
            if (phantom.height, phantom.width) != (self.model.height, self.model.width) {
                return Err(Error::Config(
                    "phantom dimensions must match the model input size".into(),
                ));
            }
        }
        self.source_train.validate()?;
        self.finetune_train.validate()?;
        if self.finetune_train.augment {
            return Err(Error::Config(
                "finetune_train.augment must be false; augmentation is for source training".into(),
            ));
        }
        self.postprocess.validate()
    }

    pub fn scheme(&self) -> FineTuneScheme {
        self.scheme
            .unwrap_or_else(|| FineTuneScheme::default_for_zone(self.zone))
    }
}

/// Identifies one sweep cell. `x` is absent for the no-training baseline,
/// which performs no optimization and therefore has no loss parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub regime: Regime,
    pub size: usize,
    pub x: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    #[serde(flatten)]
    pub key: CellKey,
    pub status: CellStatus,
    pub report: Option<MetricsReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub zone: Zone,
    pub plan: ExperimentPlan,
    /// In canonical order: regimes, then sizes, then X values, then seeds.
    pub cells: Vec<CellResult>,
    /// Wall-clock seconds per cell, aligned with `cells`; kept out of the
    /// deterministic result files.
    pub runtimes_s: Vec<f64>,
}

/// Canonical cell enumeration for a plan.
pub fn planned_cells(plan: &ExperimentPlan) -> Vec<CellKey> {
    let mut cells = Vec::new();
    for &regime in &plan.regimes {
        for &size in &plan.finetune_sizes {
            match regime {
                Regime::NoTraining => {
                    for &seed in &plan.seeds {
                        cells.push(CellKey {
                            regime,
                            size,
                            x: None,
                            seed,
                        });
                    }
                }
                Regime::Transfer | Regime::Scratch => {
                    for &x in &plan.x_values {
                        for &seed in &plan.seeds {
                            cells.push(CellKey {
                                regime,
                                size,
                                x: Some(x),
                                seed,
                            });
                        }
                    }
                }
            }
        }
    }
    cells
}

struct SweepContext<'a> {
    plan: &'a ExperimentPlan,
    target_split: FixedTestSplit,
    source_models: BTreeMap<u64, Model>,
    postprocess: PostprocessConfig,
}

/// Runs every planned cell. Source models are trained once per seed and
/// shared by all transfer and no-training cells of that seed. Cell failures
/// are recorded in the result; only setup failures abort the sweep.
/// `workers` caps the number of parallel cell jobs; 1 means sequential.
pub fn run_sweep(plan: &ExperimentPlan, workers: usize) -> Result<ExperimentResult> {
    plan.validate()?;
    if workers == 0 {
        return Err(Error::Config("workers must be >= 1".into()));
    }
    let source = generate_phantom_cohort(&plan.source_phantom, DomainTag::Source)?;
    let target = generate_phantom_cohort(&plan.target_phantom, DomainTag::Target)?;
    let source_split = split_ratios(&source, (4.0, 1.0, 0.0), plan.split_seed)?;
    let target_split = split_fixed_test(&target, plan.fixed_test_size, plan.split_seed)?;

    let mut postprocess = plan.postprocess;
    if postprocess.min_pixels(plan.zone) == 0 {
        let derived = derive_min_size_threshold(
            &source_split.train,
            plan.zone,
            postprocess.threshold_fraction,
        )?;
        match plan.zone {
            Zone::Wg => postprocess.min_mask_pixels_wg = derived,
            Zone::Tz => postprocess.min_mask_pixels_tz = derived,
        }
    }

    let needs_source = plan
        .regimes
        .iter()
        .any(|r| matches!(r, Regime::Transfer | Regime::NoTraining));
    let mut source_models = BTreeMap::new();
    if needs_source {
        for &seed in &plan.seeds {
            let mut config = plan.source_train.clone();
            config.zone = plan.zone;
            config.seed = seed;
            let mut model = build_model(&plan.model, seed)?;
            train_source(
                &mut model,
                &source_split.train,
                Some(&source_split.val),
                &config,
            )?;
            source_models.insert(seed, model);
        }
    }

    let ctx = SweepContext {
        plan,
        target_split,
        source_models,
        postprocess,
    };
    let cells = planned_cells(plan);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Invalid(format!("worker pool: {e}")))?;
    let outcomes: Vec<(CellResult, f64)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&key| {
                let started = Instant::now();
                let cell = match run_cell(&ctx, key) {
                    Ok(report) => CellResult {
                        key,
                        status: CellStatus::Ok,
                        report: Some(report),
                    },
                    Err(e) => CellResult {
                        key,
                        status: CellStatus::Failed(e.to_string()),
                        report: None,
                    },
                };
                (cell, started.elapsed().as_secs_f64())
            })
            .collect()
    });
    let (cells, runtimes_s) = outcomes.into_iter().unzip();
    Ok(ExperimentResult {
        zone: plan.zone,
        plan: plan.clone(),
        cells,
        runtimes_s,
    })
}

fn run_cell(ctx: &SweepContext<'_>, key: CellKey) -> Result<MetricsReport> {
    let plan = ctx.plan;
    let model = match key.regime {
        Regime::NoTraining => ctx
            .source_models
            .get(&key.seed)
            .ok_or_else(|| Error::Invalid(format!("no source model for seed {}", key.seed)))?
            .clone(),
        Regime::Transfer => {
            let mut model = ctx
                .source_models
                .get(&key.seed)
                .ok_or_else(|| Error::Invalid(format!("no source model for seed {}", key.seed)))?
                .clone();
            let subset = nested_subset(&ctx.target_split, key.size)?;
            let config = cell_train_config(plan, key);
            finetune(&mut model, &subset, None, plan.scheme(), &config)?;
            model
        }
        Regime::Scratch => {
            let mut model = build_model(&plan.model, key.seed)?;
            let subset = nested_subset(&ctx.target_split, key.size)?;
            let config = cell_train_config(plan, key);
            finetune(
                &mut model,
                &subset,
                None,
                FineTuneScheme::AllTrainable,
                &config,
            )?;
            model
        }
    };
    evaluate_on_test(&model, &ctx.target_split.test, plan, &ctx.postprocess)
}

fn cell_train_config(plan: &ExperimentPlan, key: CellKey) -> TrainConfig {
    let mut config = plan.finetune_train.clone();
    config.zone = plan.zone;
    config.seed = key.seed;
    if let Some(x) = key.x {
        config.loss.x = x;
    }
    config
}

fn evaluate_on_test(
    model: &Model,
    test: &Cohort,
    plan: &ExperimentPlan,
    postprocess: &PostprocessConfig,
) -> Result<MetricsReport> {
    let mut preds = Vec::with_capacity(test.n_patients());
    for patient in &test.patients {
        let raw = predict_patient(model, patient, plan.finetune_train.loss.binarize_threshold)?;
        preds.push(postprocess_volume(&raw, postprocess, plan.zone)?);
    }
    evaluate_cohort(&preds, test, plan.zone)
}

fn fmt_x(x: Option<f64>) -> String {
    match x {
        Some(x) => format!("{x:.1}"),
        None => String::new(),
    }
}

fn cell_file_name(key: &CellKey) -> String {
    format!(
        "cell_{}_size{}_x{}_seed{}.json",
        key.regime,
        key.size,
        match key.x {
            Some(x) => format!("{x:.1}"),
            None => "na".to_string(),
        },
        key.seed
    )
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `plan.json`, one JSON per cell, `aggregate.csv` (deterministic,
/// byte-reproducible given the same plan) and `timings.csv` (wall-clock, not
/// reproducible by nature).
pub fn persist_results(result: &ExperimentResult, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let plan_path = out_dir.join("plan.json");
    let plan_json = serde_json::to_string_pretty(&result.plan)?;
    std::fs::write(&plan_path, plan_json).map_err(|e| Error::io(&plan_path, e))?;

    for cell in &result.cells {
        let path = out_dir.join(cell_file_name(&cell.key));
        let json = serde_json::to_string_pretty(cell)?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    }

    let csv_path = out_dir.join("aggregate.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::Invalid(e.to_string()))?;
    let rows = [
        "zone",
        "regime",
        "x",
        "size",
        "seed",
        "status",
        "mean_dsc",
        "std_dsc",
        "sensitivity",
        "specificity",
        "precision",
    ];
    w.write_record(rows).map_err(|e| Error::Invalid(e.to_string()))?;
    for cell in &result.cells {
        let (status, m) = match (&cell.status, &cell.report) {
            (CellStatus::Ok, Some(m)) => ("ok".to_string(), Some(m)),
            (CellStatus::Failed(_), _) => ("failed".to_string(), None),
            (CellStatus::Ok, None) => ("failed".to_string(), None),
        };
        let record = [
            result.zone.to_string(),
            cell.key.regime.to_string(),
            fmt_x(cell.key.x),
            cell.key.size.to_string(),
            cell.key.seed.to_string(),
            status,
            fmt_opt(m.map(|m| m.mean_dsc)),
            fmt_opt(m.map(|m| m.std_dsc)),
            fmt_opt(m.map(|m| m.sensitivity)),
            fmt_opt(m.map(|m| m.specificity)),
            fmt_opt(m.and_then(|m| m.precision)),
        ];
        w.write_record(&record).map_err(|e| Error::Invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let timings_path = out_dir.join("timings.csv");
    let mut w = csv::Writer::from_path(&timings_path).map_err(|e| Error::Invalid(e.to_string()))?;
    w.write_record(["regime", "x", "size", "seed", "runtime_s"])
        .map_err(|e| Error::Invalid(e.to_string()))?;
    for (cell, runtime) in result.cells.iter().zip(&result.runtimes_s) {
        w.write_record([
            cell.key.regime.to_string(),
            fmt_x(cell.key.x),
            cell.key.size.to_string(),
            cell.key.seed.to_string(),
            format!("{runtime:.3}"),
        ])
        .map_err(|e| Error::Invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&timings_path, e))?;
    Ok(())
}

/// Reloads a persisted sweep directory (plan plus every per-cell JSON), e.g.
/// for plotting. Wall-clock timings are not reloaded.
pub fn load_results(dir: &Path) -> Result<ExperimentResult> {
    let plan_path = dir.join("plan.json");
    let bytes = std::fs::read(&plan_path).map_err(|e| Error::io(&plan_path, e))?;
    let plan: ExperimentPlan = serde_json::from_slice(&bytes)?;
    plan.validate()?;
    let keys = planned_cells(&plan);
    let mut cells = Vec::with_capacity(keys.len());
    for key in keys {
        let path = dir.join(cell_file_name(&key));
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        cells.push(serde_json::from_slice::<CellResult>(&bytes)?);
    }
    let runtimes_s = vec![0.0; cells.len()];
    Ok(ExperimentResult {
        zone: plan.zone,
        plan,
        cells,
        runtimes_s,
    })
}

/// Mean DSC over seeds for each (regime, size, x) with at least one
/// successful cell.
pub fn mean_dsc_by_cell(result: &ExperimentResult) -> BTreeMap<(Regime, usize, Option<u64>), f64> {
    let mut sums: BTreeMap<(Regime, usize, Option<u64>), (f64, usize)> = BTreeMap::new();
    for cell in &result.cells {
        if let (CellStatus::Ok, Some(report)) = (&cell.status, &cell.report) {
            let entry = sums
                .entry((cell.key.regime, cell.key.size, cell.key.x.map(x_decile)))
                .or_insert((0.0, 0));
            entry.0 += report.mean_dsc;
            entry.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect()
}

/// X as a grid index (0..=10) so it can key ordered maps.
fn x_decile(x: f64) -> u64 {
    (x * 10.0).round() as u64
}

/// Per-cell model selection: for every (regime, size), the X whose
/// mean-over-seeds DSC is highest (ties go to the smaller X). The
/// no-training baseline has no X and is skipped.
pub fn best_x_selection(result: &ExperimentResult) -> BTreeMap<(Regime, usize), f64> {
    let means = mean_dsc_by_cell(result);
    let mut best: BTreeMap<(Regime, usize), (f64, f64)> = BTreeMap::new();
    for (&(regime, size, x), &dsc) in &means {
        let Some(x) = x else { continue };
        let x = x as f64 / 10.0;
        best.entry((regime, size))
            .and_modify(|(best_x, best_dsc)| {
                if dsc > *best_dsc {
                    *best_x = x;
                    *best_dsc = dsc;
                }
            })
            .or_insert((x, dsc));
    }
    best.into_iter().map(|(k, (x, _))| (k, x)).collect()
}

/// Desk-scale preset: a sweep that finishes in tens of CPU-minutes.
pub fn desk_plan(zone: Zone) -> ExperimentPlan {
    let source_phantom = PhantomConfig {
        n_patients: 10,
        slices_per_patient: 6,
        b_values: vec![0, 800],
        rng_seed: 11,
        ..PhantomConfig::source_default()
    };
    let target_phantom = PhantomConfig {
        n_patients: 28,
        slices_per_patient: 6,
        b_values: vec![100, 800],
        rng_seed: 23,
        // Stronger patient-level variation than the default so the benefit
        // of extra fine-tune patients stays visible at this tiny scale.
        domain_shift: DomainShift {
            per_patient_jitter: 0.45,
            ..DomainShift::default()
        },
        ..PhantomConfig::target_default()
    };
    ExperimentPlan {
        zone,
        finetune_sizes: vec![2, 4, 8, 16],
        regimes: vec![Regime::Transfer, Regime::Scratch, Regime::NoTraining],
        x_values: vec![0.0, 1.0],
        seeds: vec![0, 1, 2],
        fixed_test_size: 12,
        split_seed: 7,
        source_phantom,
        target_phantom,
        model: ModelConfig {
            n_levels: 3,
            base_channels: 8,
            ..ModelConfig::default()
        },
        source_train: TrainConfig {
            zone,
            learning_rate: 1e-3,
            epochs: 8,
            batch_size: 8,
            augment: true,
            ..TrainConfig::default()
        },
        finetune_train: TrainConfig {
            zone,
            learning_rate: 3e-4,
            // Long enough that a couple of patients genuinely overfit their
            // own intensity statistics; that is what makes subset size matter.
            epochs: 14,
            batch_size: 8,
            ..TrainConfig::default()
        },
        scheme: None,
        postprocess: PostprocessConfig::default(),
    }
}

/// The full-scale study grid; orders of magnitude more compute than the desk
/// preset.
pub fn full_scale_plan(zone: Zone) -> ExperimentPlan {
    let mut plan = desk_plan(zone);
    plan.finetune_sizes = vec![8, 30, 42, 70, 85, 106, 115];
    plan.x_values = crate::loss::x_grid();
    plan.fixed_test_size = 33;
    plan.source_phantom.n_patients = 130;
    plan.source_phantom.slices_per_patient = 12;
    plan.target_phantom.n_patients = 148;
    plan.target_phantom.slices_per_patient = 12;
    plan.model = ModelConfig::default();
    plan.source_train.learning_rate = 1e-4;
    plan.source_train.epochs = 25;
    plan.source_train.batch_size = 16;
    plan.finetune_train.learning_rate = 1e-4;
    plan.finetune_train.epochs = 25;
    plan.finetune_train.batch_size = 16;
    plan
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use crate::metrics::Confusion;

    pub(crate) fn tiny_plan() -> ExperimentPlan {
        let mut plan = desk_plan(Zone::Wg);
        plan.finetune_sizes = vec![1, 2];
        plan.seeds = vec![0];
        plan.x_values = vec![0.0];
        plan.fixed_test_size = 2;
        plan.source_phantom.n_patients = 3;
        plan.source_phantom.slices_per_patient = 3;
        plan.source_phantom.height = 16;
        plan.source_phantom.width = 16;
        plan.source_phantom.b_values = vec![0];
        plan.target_phantom.n_patients = 4;
        plan.target_phantom.slices_per_patient = 3;
        plan.target_phantom.height = 16;
        plan.target_phantom.width = 16;
        plan.target_phantom.b_values = vec![100];
        plan.model = ModelConfig {
            n_levels: 2,
            base_channels: 4,
            height: 16,
            width: 16,
            ..ModelConfig::default()
        };
        plan.source_train.epochs = 1;
        plan.source_train.batch_size = 4;
        plan.finetune_train.epochs = 1;
        plan.finetune_train.batch_size = 4;
        plan
    }

    pub(crate) fn fake_cell(
        regime: Regime,
        size: usize,
        x: Option<f64>,
        seed: u64,
        dsc: f64,
    ) -> CellResult {
        CellResult {
            key: CellKey {
                regime,
                size,
                x,
                seed,
            },
            status: CellStatus::Ok,
            report: Some(MetricsReport {
                mean_dsc: dsc,
                std_dsc: 0.0,
                sensitivity: 1.0,
                specificity: 1.0,
                precision: Some(1.0),
                n_slices_total: 4,
                n_slices_with_prostate: 4,
                confusion: Confusion {
                    true_positive: 4,
                    false_positive: 0,
                    true_negative: 0,
                    false_negative: 0,
                },
            }),
        }
    }

    pub(crate) fn fake_result(values: &[(Regime, usize, f64, u64, f64)]) -> ExperimentResult {
        let cells: Vec<CellResult> = values
            .iter()
            .map(|&(regime, size, x, seed, dsc)| fake_cell(regime, size, Some(x), seed, dsc))
            .collect();
        ExperimentResult {
            zone: Zone::Wg,
            plan: tiny_plan(),
            runtimes_s: vec![0.0; cells.len()],
            cells,
        }
    }

    /// Synthetic result with an increasing transfer curve, an increasing
    /// scratch curve below it and a flat no-training baseline.
    pub(crate) fn fake_three_regime_result(sizes: &[usize]) -> ExperimentResult {
        let mut plan = tiny_plan();
        plan.finetune_sizes = sizes.to_vec();
        plan.x_values = vec![0.0, 1.0];
        let mut cells = Vec::new();
        for &regime in &[Regime::Transfer, Regime::Scratch] {
            let base = if regime == Regime::Transfer { 0.70 } else { 0.50 };
            for (i, &size) in sizes.iter().enumerate() {
                for &x in &plan.x_values.clone() {
                    let dsc = base + 0.02 * i as f64 - if x > 0.5 { 0.05 } else { 0.0 };
                    cells.push(fake_cell(regime, size, Some(x), 0, dsc));
                }
            }
        }
        for &size in sizes {
            cells.push(fake_cell(Regime::NoTraining, size, None, 0, 0.40));
        }
        ExperimentResult {
            zone: Zone::Wg,
            plan,
            runtimes_s: vec![0.0; cells.len()],
            cells,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::tests_support::{fake_result, tiny_plan};
    use super::*;

    #[test]
    fn plan_validation_catches_grid_errors() {
        let mut plan = tiny_plan();
        plan.finetune_sizes = vec![4, 2];
        assert!(plan.validate().is_err());

        let mut plan = tiny_plan();
        plan.x_values = vec![0.15];
        assert!(plan.validate().is_err());

        let mut plan = tiny_plan();
        plan.fixed_test_size = 3; // 2 + 3 > 4 patients
        assert!(plan.validate().is_err());

        let mut plan = tiny_plan();
        plan.seeds = vec![0, 0];
        assert!(plan.validate().is_err());

        let mut plan = tiny_plan();
        plan.finetune_train.augment = true;
        assert!(plan.validate().is_err());

        assert!(tiny_plan().validate().is_ok());
    }

    #[test]
    fn planned_cells_cover_the_grid_in_canonical_order() {
        let mut plan = tiny_plan();
        plan.x_values = vec![0.0, 1.0];
        plan.seeds = vec![0, 1];
        let cells = planned_cells(&plan);
        // transfer: 2 sizes x 2 x x 2 seeds = 8; scratch: 8; no-training: 2x2 = 4.
        assert_eq!(cells.len(), 20);
        assert_eq!(
            cells[0],
            CellKey {
                regime: Regime::Transfer,
                size: 1,
                x: Some(0.0),
                seed: 0
            }
        );
        let no_training: Vec<_> = cells
            .iter()
            .filter(|c| c.regime == Regime::NoTraining)
            .collect();
        assert_eq!(no_training.len(), 4);
        assert!(no_training.iter().all(|c| c.x.is_none()));
    }

    #[test]
    fn best_x_selection_prefers_higher_mean_and_breaks_ties_low() {
        // Transfer favors X=0, scratch at the larger size favors X=1.
        let result = fake_result(&[
            (Regime::Transfer, 2, 0.0, 0, 0.80),
            (Regime::Transfer, 2, 0.0, 1, 0.82),
            (Regime::Transfer, 2, 1.0, 0, 0.70),
            (Regime::Transfer, 2, 1.0, 1, 0.72),
            (Regime::Scratch, 16, 0.0, 0, 0.60),
            (Regime::Scratch, 16, 1.0, 0, 0.75),
            // Exact tie at scratch size 2: the smaller X wins.
            (Regime::Scratch, 2, 0.0, 0, 0.5),
            (Regime::Scratch, 2, 1.0, 0, 0.5),
        ]);
        let best = best_x_selection(&result);
        assert_eq!(best[&(Regime::Transfer, 2)], 0.0);
        assert_eq!(best[&(Regime::Scratch, 16)], 1.0);
        assert_eq!(best[&(Regime::Scratch, 2)], 0.0);
    }

    #[test]
    fn persisted_files_round_trip_and_reruns_are_byte_identical() {
        let result = fake_result(&[
            (Regime::Transfer, 1, 0.0, 0, 0.7123456789),
            (Regime::Scratch, 1, 0.0, 0, 0.654321),
        ]);
        let dir = tempfile::tempdir().unwrap();
        persist_results(&result, dir.path()).unwrap();

        let csv_text = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
        let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
        let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), result.cells.len());
        for (row, cell) in rows.iter().zip(&result.cells) {
            assert_eq!(&row[1], cell.key.regime.to_string().as_str());
            let parsed: f64 = row[6].parse().unwrap();
            assert_eq!(parsed, cell.report.as_ref().unwrap().mean_dsc);
        }

        let cell_json =
            std::fs::read_to_string(dir.path().join("cell_transfer_size1_x0.0_seed0.json"))
                .unwrap();
        let parsed: CellResult = serde_json::from_str(&cell_json).unwrap();
        assert_eq!(parsed, result.cells[0]);

        let dir2 = tempfile::tempdir().unwrap();
        persist_results(&result, dir2.path()).unwrap();
        let csv2 = std::fs::read_to_string(dir2.path().join("aggregate.csv")).unwrap();
        assert_eq!(csv_text, csv2);
    }

    #[test]
    fn persisted_sweep_reloads_for_plotting() {
        let plan = tiny_plan();
        let cells: Vec<CellResult> = planned_cells(&plan)
            .into_iter()
            .map(|k| super::tests_support::fake_cell(k.regime, k.size, k.x, k.seed, 0.5))
            .collect();
        let result = ExperimentResult {
            zone: plan.zone,
            plan: plan.clone(),
            runtimes_s: vec![0.0; cells.len()],
            cells,
        };
        let dir = tempfile::tempdir().unwrap();
        persist_results(&result, dir.path()).unwrap();
        let back = load_results(dir.path()).unwrap();
        assert_eq!(back.plan, plan);
        assert_eq!(back.cells, result.cells);

        // A missing cell file is an error, not a silent gap.
        std::fs::remove_file(dir.path().join(cell_file_name(&result.cells[0].key))).unwrap();
        assert!(load_results(dir.path()).is_err());
    }

    #[test]
    fn failed_cells_are_flagged_in_the_csv() {
        let mut result = fake_result(&[(Regime::Transfer, 1, 0.0, 0, 0.7)]);
        result.cells.push(CellResult {
            key: CellKey {
                regime: Regime::Scratch,
                size: 1,
                x: Some(0.0),
                seed: 0,
            },
            status: CellStatus::Failed("synthetic failure".into()),
            report: None,
        });
        result.runtimes_s.push(0.0);
        let dir = tempfile::tempdir().unwrap();
        persist_results(&result, dir.path()).unwrap();
        let csv_text = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
        let failed_line = csv_text
            .lines()
            .find(|l| l.contains("scratch"))
            .unwrap();
        assert!(failed_line.contains("failed"));
        assert!(failed_line.ends_with(",,,,,") || failed_line.contains("failed,,"));
    }

    /// End-to-end at the smallest possible scale: every planned cell runs,
    /// reports land on the fixed test set, repeat run is identical.
    #[test]
    fn micro_sweep_runs_every_cell_and_is_deterministic() {
        let plan = tiny_plan();
        let result = run_sweep(&plan, 1).unwrap();
        assert_eq!(result.cells.len(), planned_cells(&plan).len());
        for cell in &result.cells {
            assert_eq!(cell.status, CellStatus::Ok, "{:?}", cell.key);
            let report = cell.report.as_ref().unwrap();
            assert_eq!(
                report.n_slices_total,
                plan.fixed_test_size * plan.target_phantom.slices_per_patient
            );
        }
        // The no-training baseline never touches the fine-tune subset, so its
        // report is exactly the same at every size.
        let baselines: Vec<_> = result
            .cells
            .iter()
            .filter(|c| c.key.regime == Regime::NoTraining)
            .collect();
        assert!(baselines.windows(2).all(|w| {
            w[0].key.seed != w[1].key.seed || w[0].report == w[1].report
        }));

        let rerun = run_sweep(&plan, 1).unwrap();
        assert_eq!(result.cells, rerun.cells);
    }
}
