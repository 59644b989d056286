//! Training engine: source-domain training, scheme-based fine-tuning with
//! frozen parameter groups, Adam, and volume inference.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array2, ArrayD, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{augment_slice, enumerate_slices, Cohort, PatientVolume, Zone};
use crate::error::{Error, Result};
use crate::loss::{binarize, binary_dsc, soft_dice_training_loss, LossConfig};
use crate::model::{up_group_name, GradStore, Model, ParamStore, BOTTLENECK_GROUP, HEAD_GROUP};

/// Which parameter groups stay trainable during fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FineTuneScheme {
    /// Up-blocks and head only; the encoder and bottleneck keep their
    /// source-domain features. The default recipe for whole-gland transfer.
    DecoderOnly,
    /// Decoder plus the shallowest ⌈L/2⌉ down-blocks; deep encoder and
    /// bottleneck stay frozen. The default recipe for transition-zone
    /// transfer, where low-level contrast shifts matter more.
    DecoderShallowEncoder,
    AllTrainable,
    /// No updates at all; used for the no-training baseline.
    AllFrozen,
}

impl FineTuneScheme {
    pub fn default_for_zone(zone: Zone) -> FineTuneScheme {
        match zone {
            Zone::Wg => FineTuneScheme::DecoderOnly,
            Zone::Tz => FineTuneScheme::DecoderShallowEncoder,
        }
    }

    /// Group names left trainable for a model with `n_levels` levels.
    /// `unfreeze_bottleneck` adds the bottleneck to the two decoder schemes
    /// (it is frozen in both by default).
    pub fn trainable_groups(self, n_levels: usize, unfreeze_bottleneck: bool) -> BTreeSet<String> {
        let mut names = BTreeSet::new();
        let add_decoder = |names: &mut BTreeSet<String>| {
            for i in 1..=n_levels {
                names.insert(up_group_name(i));
            }
            names.insert(HEAD_GROUP.to_string());
            if unfreeze_bottleneck {
                names.insert(BOTTLENECK_GROUP.to_string());
            }
        };
        match self {
            FineTuneScheme::DecoderOnly => add_decoder(&mut names),
            FineTuneScheme::DecoderShallowEncoder => {
                add_decoder(&mut names);
                for i in 1..=n_levels.div_ceil(2) {
                    names.insert(crate::model::down_group_name(i));
                }
            }
            FineTuneScheme::AllTrainable => {
                names.insert(HEAD_GROUP.to_string());
                names.insert(BOTTLENECK_GROUP.to_string());
                for i in 1..=n_levels {
                    names.insert(crate::model::down_group_name(i));
                    names.insert(up_group_name(i));
                }
            }
            FineTuneScheme::AllFrozen => {}
        }
        names
    }
}

/// Expands trainable group names into a per-parameter flag vector indexed
/// by `ParamId`. Unknown group names are rejected.
pub fn apply_scheme(model: &Model, trainable: &BTreeSet<String>) -> Result<Vec<bool>> {
    for name in trainable {
        if !model.groups.contains(name) {
            return Err(Error::Config(format!("unknown parameter group '{name}'")));
        }
    }
    let mut mask = vec![false; model.params.len()];
    for (name, ids) in model.groups.iter() {
        if trainable.contains(name) {
            for &id in ids {
                mask[id.index()] = true;
            }
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub zone: Zone,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Random flips and small rotations; a source-training option, rejected
    /// by [`finetune`].
    pub augment: bool,
    /// Adds the bottleneck to the trainable set of the decoder schemes.
    pub unfreeze_bottleneck: bool,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            zone: Zone::Wg,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 25,
            batch_size: 16,
            seed: 0,
            augment: false,
            unfreeze_bottleneck: false,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must be in [0,1)".into()));
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::Config("adam_epsilon must be > 0".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        self.loss.validate()
    }
}

/// Adam with bias correction. Frozen parameters are skipped entirely:
/// neither the weights nor the moment buffers move, so a frozen tensor is
/// bit-identical after any number of steps.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore, config: &TrainConfig) -> Adam {
        let zeros: Vec<ArrayD<f64>> = params
            .param_ids()
            .map(|id| ArrayD::zeros(params.get(id).raw_dim()))
            .collect();
        Adam {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.adam_epsilon,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &GradStore, trainable: &[bool]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for id in params.param_ids() {
            let i = id.index();
            if !trainable[i] {
                continue;
            }
            let g = grads.get(id);
            self.m[i].zip_mut_with(g, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            self.v[i].zip_mut_with(g, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            let (lr, eps) = (self.lr, self.eps);
            Zip::from(params.get_mut(id))
                .and(&self.m[i])
                .and(&self.v[i])
                .for_each(|p, &m, &v| {
                    *p -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
                });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// NaN when no validation cohort was supplied.
    pub val_dsc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    /// 1-based; 0 when training was skipped (zero fine-tune epochs).
    pub best_epoch: usize,
    pub best_val_dsc: f64,
}

/// Writes the per-epoch log as CSV (`epoch,train_loss,val_dsc`).
pub fn write_training_log(path: &Path, log: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.write_record(["epoch", "train_loss", "val_dsc"])
        .and_then(|()| {
            log.iter().try_for_each(|r| {
                w.write_record([
                    r.epoch.to_string(),
                    format!("{:.6}", r.train_loss),
                    format!("{:.6}", r.val_dsc),
                ])
            })
        })
        .map_err(|e| Error::io(path, e.into()))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Trains every parameter group from the current initialization.
/// Model selection: the epoch with the best validation mean DSC wins and its
/// parameters are restored into `model`; with an empty validation cohort the
/// final epoch is kept.
pub fn train_source(
    model: &mut Model,
    train: &Cohort,
    val: Option<&Cohort>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let trainable = vec![true; model.params.len()];
    train_inner(model, train, val, config, &trainable)
}

/// Continues training from the current (pretrained) parameters with the
/// scheme's frozen groups pinned. Zero epochs is the identity. Augmentation
/// is rejected here: it is a source-training option.
pub fn finetune(
    model: &mut Model,
    train: &Cohort,
    val: Option<&Cohort>,
    scheme: FineTuneScheme,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if config.epochs == 0 {
        return Ok(TrainOutcome {
            log: vec![],
            best_epoch: 0,
            best_val_dsc: f64::NAN,
        });
    }
    if config.augment {
        return Err(Error::Config(
            "augmentation is not used during fine-tuning; disable it".into(),
        ));
    }
    let groups = scheme.trainable_groups(model.config.n_levels, config.unfreeze_bottleneck);
    let trainable = apply_scheme(model, &groups)?;
    train_inner(model, train, val, config, &trainable)
}

fn train_inner(
    model: &mut Model,
    train: &Cohort,
    val: Option<&Cohort>,
    config: &TrainConfig,
    trainable: &[bool],
) -> Result<TrainOutcome> {
    config.validate()?;
    let samples = enumerate_slices(train);
    if samples.is_empty() {
        return Err(Error::Invalid("training set has no slices".into()));
    }
    let any_trainable = trainable.iter().any(|&t| t);
    let mut adam = Adam::new(&model.params, config);
    let mut grads = GradStore::zeros_like(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.zero();
            for &ix in batch {
                let augmented;
                let sample = if config.augment {
                    augmented = augment_slice(&samples[ix], rng.gen());
                    &augmented
                } else {
                    &samples[ix]
                };
                let image = sample.image.mapv(f64::from);
                let (prob, trace) = model.forward_trace(&image)?;
                let lv = soft_dice_training_loss(&prob, sample.mask(config.zone), &config.loss)?;
                loss_sum += lv.loss;
                if any_trainable {
                    model.backward(&trace, &lv.grad, &mut grads);
                }
            }
            if any_trainable {
                grads.scale(1.0 / batch.len() as f64);
                adam.step(&mut model.params, &grads, trainable);
            }
        }
        let train_loss = loss_sum / samples.len() as f64;
        let val_dsc = match val {
            None => f64::NAN,
            Some(v) => validation_dsc(model, v, config)?,
        };
        log.push(EpochRecord {
            epoch,
            train_loss,
            val_dsc,
        });
        if !val_dsc.is_nan() && best.as_ref().is_none_or(|(b, _, _)| val_dsc > *b) {
            best = Some((val_dsc, epoch, model.params.clone()));
        }
    }

    let (best_epoch, best_val_dsc) = match best {
        Some((v, e, params)) => {
            model.params = params;
            (e, v)
        }
        None => (config.epochs, f64::NAN),
    };
    Ok(TrainOutcome {
        log,
        best_epoch,
        best_val_dsc,
    })
}

/// Validation score: mean ε-smoothed DSC over every slice of the cohort
/// (empty/empty slices score 1), computed on fused, binarized predictions.
fn validation_dsc(model: &Model, val: &Cohort, config: &TrainConfig) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for patient in &val.patients {
        let preds = predict_patient(model, patient, config.loss.binarize_threshold)?;
        for (pred, gt) in preds.iter().zip(patient.masks(config.zone)) {
            sum += binary_dsc(pred, gt, config.loss.epsilon)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Invalid("validation cohort has no slices".into()));
    }
    Ok(sum / n as f64)
}

/// Per-slice soft masks for one patient. Multi-b-value slices are fused by
/// averaging the per-b-value probability maps.
pub fn predict_patient_soft(model: &Model, patient: &PatientVolume) -> Result<Vec<Array2<f64>>> {
    let mut out = Vec::with_capacity(patient.n_slices());
    for slice_images in &patient.images {
        if slice_images.is_empty() {
            return Err(Error::Invalid(format!(
                "patient {} has a slice with no acquisitions",
                patient.patient_id
            )));
        }
        let mut acc: Option<Array2<f64>> = None;
        for img in slice_images {
            let prob = model.forward(&img.mapv(f64::from))?;
            acc = Some(match acc {
                None => prob,
                Some(a) => a + prob,
            });
        }
        out.push(acc.unwrap() / slice_images.len() as f64);
    }
    Ok(out)
}

/// Binarized per-slice predictions for one patient.
pub fn predict_patient(
    model: &Model,
    patient: &PatientVolume,
    threshold: f64,
) -> Result<Vec<Array2<u8>>> {
    Ok(predict_patient_soft(model, patient)?
        .iter()
        .map(|soft| binarize(soft, threshold))
        .collect())
}
