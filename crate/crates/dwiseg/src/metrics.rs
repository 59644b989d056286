//! Evaluation: per-slice Dice statistics on prostate-containing slices,
//! slice-level detection metrics, and a base/apex breakdown of detection
//! errors.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{Cohort, Zone};
use crate::error::{Error, Result};
use crate::loss::modified_dsc;

/// Slice-level detection counts. A slice is detection-positive when its
/// predicted mask is non-empty; ground truth defines the actual class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean/population-std of per-slice DSC over slices whose ground-truth
    /// mask is non-empty.
    pub mean_dsc: f64,
    pub std_dsc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// Absent when nothing was predicted positive (TP+FP = 0).
    pub precision: Option<f64>,
    pub n_slices_total: usize,
    pub n_slices_with_prostate: usize,
    pub confusion: Confusion,
}

fn count(mask: &Array2<u8>) -> usize {
    mask.iter().map(|&v| usize::from(v)).sum()
}

fn check_alignment(preds: &[Vec<Array2<u8>>], gt: &Cohort) -> Result<()> {
    if preds.len() != gt.n_patients() {
        return Err(Error::Misaligned(format!(
            "{} predicted volumes vs {} patients",
            preds.len(),
            gt.n_patients()
        )));
    }
    for (pv, patient) in preds.iter().zip(&gt.patients) {
        if pv.len() != patient.n_slices() {
            return Err(Error::Misaligned(format!(
                "patient {}: {} predicted slices vs {}",
                patient.patient_id,
                pv.len(),
                patient.n_slices()
            )));
        }
        for (i, m) in pv.iter().enumerate() {
            if m.dim() != (gt.height, gt.width) {
                return Err(Error::Misaligned(format!(
                    "patient {} slice {i}: mask {:?} vs cohort {}x{}",
                    patient.patient_id,
                    m.dim(),
                    gt.height,
                    gt.width
                )));
            }
        }
    }
    Ok(())
}

/// Scores one predicted cohort (one mask per slice per patient, aligned with
/// `gt`) against ground truth for the given zone.
pub fn evaluate_cohort(
    preds: &[Vec<Array2<u8>>],
    gt: &Cohort,
    zone: Zone,
) -> Result<MetricsReport> {
    check_alignment(preds, gt)?;
    let mut dscs = Vec::new();
    let mut confusion = Confusion {
        true_positive: 0,
        false_positive: 0,
        true_negative: 0,
        false_negative: 0,
    };
    for (pv, patient) in preds.iter().zip(&gt.patients) {
        for (pred, gt_mask) in pv.iter().zip(patient.masks(zone)) {
            let gt_pos = count(gt_mask) > 0;
            let pred_pos = count(pred) > 0;
            match (pred_pos, gt_pos) {
                (true, true) => confusion.true_positive += 1,
                (true, false) => confusion.false_positive += 1,
                (false, false) => confusion.true_negative += 1,
                (false, true) => confusion.false_negative += 1,
            }
            if gt_pos {
                // Exact ratio; the empty-reward parameter is never reached
                // because the ground truth here is non-empty.
                dscs.push(modified_dsc(pred, gt_mask, 1.0)?);
            }
        }
    }
    let (mean_dsc, std_dsc) = dsc_statistics(&dscs)?;
    let positives = confusion.true_positive + confusion.false_negative;
    let negatives = confusion.true_negative + confusion.false_positive;
    let predicted_pos = confusion.true_positive + confusion.false_positive;
    Ok(MetricsReport {
        mean_dsc,
        std_dsc,
        sensitivity: confusion.true_positive as f64 / positives as f64,
        // Vacuously perfect when the cohort has no prostate-free slices.
        specificity: if negatives == 0 {
            1.0
        } else {
            confusion.true_negative as f64 / negatives as f64
        },
        precision: (predicted_pos > 0)
            .then(|| confusion.true_positive as f64 / predicted_pos as f64),
        n_slices_total: confusion.total(),
        n_slices_with_prostate: positives,
        confusion,
    })
}

/// Arithmetic mean and population standard deviation.
pub fn dsc_statistics(dscs: &[f64]) -> Result<(f64, f64)> {
    if dscs.is_empty() {
        return Err(Error::Invalid(
            "no slices with a non-empty ground-truth mask to score".into(),
        ));
    }
    let n = dscs.len() as f64;
    let mean = dscs.iter().sum::<f64>() / n;
    let var = dscs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Patient-level aggregation: mean over patients of each patient's mean
/// per-slice DSC (non-empty ground-truth slices only). Patients without any
/// prostate-containing slice are skipped.
pub fn patient_mean_dsc(preds: &[Vec<Array2<u8>>], gt: &Cohort, zone: Zone) -> Result<f64> {
    check_alignment(preds, gt)?;
    let mut patient_means = Vec::new();
    for (pv, patient) in preds.iter().zip(&gt.patients) {
        let mut dscs = Vec::new();
        for (pred, gt_mask) in pv.iter().zip(patient.masks(zone)) {
            if count(gt_mask) > 0 {
                dscs.push(modified_dsc(pred, gt_mask, 1.0)?);
            }
        }
        if !dscs.is_empty() {
            patient_means.push(dscs.iter().sum::<f64>() / dscs.len() as f64);
        }
    }
    dsc_statistics(&patient_means).map(|(mean, _)| mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseApexBreakdown {
    pub n_mispredicted: usize,
    pub n_base_apex: usize,
    pub n_midgland: usize,
}

/// Classifies every detection error (FP or FN slice) as mid-gland when the
/// same patient has detection-positive predictions both before and after the
/// slice, else base/apex. A slice whose non-empty ground-truth mask is
/// smaller than `size_threshold` pixels also counts as base/apex: tiny
/// cross-sections are the gland's end caps.
pub fn base_apex_analysis(
    preds: &[Vec<Array2<u8>>],
    gt: &Cohort,
    zone: Zone,
    size_threshold: usize,
) -> Result<BaseApexBreakdown> {
    check_alignment(preds, gt)?;
    let mut out = BaseApexBreakdown {
        n_mispredicted: 0,
        n_base_apex: 0,
        n_midgland: 0,
    };
    for (pv, patient) in preds.iter().zip(&gt.patients) {
        let pred_pos: Vec<bool> = pv.iter().map(|m| count(m) > 0).collect();
        for (s, (pred, gt_mask)) in pv.iter().zip(patient.masks(zone)).enumerate() {
            let gt_count = count(gt_mask);
            let mispredicted = (count(pred) > 0) != (gt_count > 0);
            if !mispredicted {
                continue;
            }
            out.n_mispredicted += 1;
            let small_gt = gt_count > 0 && gt_count < size_threshold;
            let positive_before = pred_pos[..s].iter().any(|&p| p);
            let positive_after = pred_pos[s + 1..].iter().any(|&p| p);
            if !small_gt && positive_before && positive_after {
                out.n_midgland += 1;
            } else {
                out.n_base_apex += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DomainTag, PatientVolume};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: usize = 8;
    const W: usize = 8;

    fn mask_with(count: usize) -> Array2<u8> {
        let mut m = Array2::zeros((H, W));
        for i in 0..count {
            m[[i / W, i % W]] = 1;
        }
        m
    }

    fn cohort_from_masks(per_patient: Vec<Vec<Array2<u8>>>) -> Cohort {
        let patients = per_patient
            .into_iter()
            .enumerate()
            .map(|(i, masks)| PatientVolume {
                patient_id: format!("p{i:03}"),
                images: masks.iter().map(|_| vec![Array2::zeros((H, W))]).collect(),
                wg_masks: masks.clone(),
                tz_masks: masks,
            })
            .collect();
        Cohort {
            domain_tag: DomainTag::Target,
            b_values: vec![0],
            height: H,
            width: W,
            patients,
        }
    }

    fn random_mask(rng: &mut ChaCha8Rng, p_nonempty: f64) -> Array2<u8> {
        if !rng.gen_bool(p_nonempty) {
            return Array2::zeros((H, W));
        }
        let density = rng.gen_range(0.1..0.5);
        let m = Array2::from_shape_fn((H, W), |_| u8::from(rng.gen_bool(density)));
        if m.iter().all(|&v| v == 0) {
            mask_with(1)
        } else {
            m
        }
    }

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let gt = cohort_from_masks(vec![vec![mask_with(0), mask_with(10), mask_with(12)]]);
        let preds: Vec<Vec<Array2<u8>>> = gt
            .patients
            .iter()
            .map(|p| p.wg_masks.clone())
            .collect();
        let report = evaluate_cohort(&preds, &gt, Zone::Wg).unwrap();
        assert_eq!(report.mean_dsc, 1.0);
        assert_eq!(report.std_dsc, 0.0);
        assert_eq!(report.sensitivity, 1.0);
        assert_eq!(report.specificity, 1.0);
        assert_eq!(report.precision, Some(1.0));
        assert_eq!(report.n_slices_total, 3);
        assert_eq!(report.n_slices_with_prostate, 2);
    }

    #[test]
    fn all_empty_predictions() {
        let gt = cohort_from_masks(vec![vec![mask_with(0), mask_with(10), mask_with(12)]]);
        let preds = vec![vec![mask_with(0), mask_with(0), mask_with(0)]];
        let report = evaluate_cohort(&preds, &gt, Zone::Wg).unwrap();
        assert_eq!(report.mean_dsc, 0.0);
        assert_eq!(report.sensitivity, 0.0);
        assert_eq!(report.specificity, 1.0);
        assert_eq!(report.precision, None, "no positive predictions");
        assert_eq!(report.confusion.false_negative, 2);
        assert_eq!(report.confusion.true_negative, 1);
    }

    /// Brute-force recount with independent bookkeeping: every slice is
    /// re-scored from scratch with plain loops and integer counters.
    fn oracle_report(preds: &[Vec<Array2<u8>>], gt: &Cohort, zone: Zone) -> MetricsReport {
        let (mut tp, mut fp, mut tn, mut fal_n) = (0usize, 0usize, 0usize, 0usize);
        let mut dscs: Vec<f64> = Vec::new();
        for (pi, patient) in gt.patients.iter().enumerate() {
            for (si, gt_mask) in patient.masks(zone).iter().enumerate() {
                let pred = &preds[pi][si];
                let mut inter = 0usize;
                let mut np = 0usize;
                let mut ng = 0usize;
                for r in 0..gt.height {
                    for c in 0..gt.width {
                        let p = pred[[r, c]] == 1;
                        let g = gt_mask[[r, c]] == 1;
                        if p {
                            np += 1;
                        }
                        if g {
                            ng += 1;
                        }
                        if p && g {
                            inter += 1;
                        }
                    }
                }
                match (np > 0, ng > 0) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, false) => tn += 1,
                    (false, true) => fal_n += 1,
                }
                if ng > 0 {
                    dscs.push(2.0 * inter as f64 / (np + ng) as f64);
                }
            }
        }
        let n = dscs.len() as f64;
        let mean = dscs.iter().sum::<f64>() / n;
        let std = (dscs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
        MetricsReport {
            mean_dsc: mean,
            std_dsc: std,
            sensitivity: tp as f64 / (tp + fal_n) as f64,
            specificity: if tn + fp == 0 {
                1.0
            } else {
                tn as f64 / (tn + fp) as f64
            },
            precision: (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64),
            n_slices_total: tp + fp + tn + fal_n,
            n_slices_with_prostate: tp + fal_n,
            confusion: Confusion {
                true_positive: tp,
                false_positive: fp,
                true_negative: tn,
                false_negative: fal_n,
            },
        }
    }

    #[test]
    fn matches_brute_force_recount_on_random_cohorts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let n_patients = rng.gen_range(1..4);
            let mut gt_masks = Vec::new();
            let mut preds = Vec::new();
            let mut any_prostate = false;
            for _ in 0..n_patients {
                let n_slices = rng.gen_range(2..7);
                let gts: Vec<_> = (0..n_slices).map(|_| random_mask(&mut rng, 0.6)).collect();
                any_prostate |= gts.iter().any(|m| m.iter().any(|&v| v > 0));
                preds.push((0..n_slices).map(|_| random_mask(&mut rng, 0.6)).collect::<Vec<_>>());
                gt_masks.push(gts);
            }
            if !any_prostate {
                continue;
            }
            let gt = cohort_from_masks(gt_masks);
            let got = evaluate_cohort(&preds, &gt, Zone::Wg).unwrap();
            let want = oracle_report(&preds, &gt, Zone::Wg);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn empty_gt_slices_never_affect_mean_dsc() {
        let gt = cohort_from_masks(vec![vec![mask_with(9), mask_with(16)]]);
        let preds = vec![vec![mask_with(12), mask_with(16)]];
        let base = evaluate_cohort(&preds, &gt, Zone::Wg).unwrap();

        let padded_gt = cohort_from_masks(vec![vec![
            mask_with(0),
            mask_with(9),
            mask_with(16),
            mask_with(0),
        ]]);
        let padded_preds = vec![vec![mask_with(3), mask_with(12), mask_with(16), mask_with(0)]];
        let padded = evaluate_cohort(&padded_preds, &padded_gt, Zone::Wg).unwrap();
        assert_eq!(padded.mean_dsc, base.mean_dsc);
        assert_eq!(padded.std_dsc, base.std_dsc);
        assert_ne!(padded.confusion, base.confusion);
    }

    #[test]
    fn statistics_match_hand_arithmetic() {
        assert_eq!(dsc_statistics(&[1.0, 1.0, 1.0]).unwrap(), (1.0, 0.0));
        let (mean, std) = dsc_statistics(&[0.8, 0.6]).unwrap();
        assert!((mean - 0.7).abs() < 1e-12);
        assert!((std - 0.1).abs() < 1e-12);
        assert!(dsc_statistics(&[]).is_err());
    }

    #[test]
    fn misaligned_cohorts_are_rejected() {
        let gt = cohort_from_masks(vec![vec![mask_with(4), mask_with(5)]]);
        let too_few_patients: Vec<Vec<Array2<u8>>> = vec![];
        assert!(matches!(
            evaluate_cohort(&too_few_patients, &gt, Zone::Wg),
            Err(Error::Misaligned(_))
        ));
        let wrong_slices = vec![vec![mask_with(4)]];
        assert!(matches!(
            evaluate_cohort(&wrong_slices, &gt, Zone::Wg),
            Err(Error::Misaligned(_))
        ));
        let wrong_shape = vec![vec![Array2::zeros((H + 1, W)), Array2::zeros((H, W))]];
        assert!(matches!(
            evaluate_cohort(&wrong_shape, &gt, Zone::Wg),
            Err(Error::Misaligned(_))
        ));
    }

    #[test]
    fn base_apex_positional_rule() {
        // Patient slices: prostate on 1..=3; predictions miss slice 1 (first
        // prostate slice, nothing predicted before it -> base/apex) and have
        // no other errors.
        let gt = cohort_from_masks(vec![vec![
            mask_with(0),
            mask_with(20),
            mask_with(30),
            mask_with(20),
            mask_with(0),
        ]]);
        let preds = vec![vec![
            mask_with(0),
            mask_with(0),
            mask_with(30),
            mask_with(20),
            mask_with(0),
        ]];
        let out = base_apex_analysis(&preds, &gt, Zone::Wg, 0).unwrap();
        assert_eq!(
            out,
            BaseApexBreakdown {
                n_mispredicted: 1,
                n_base_apex: 1,
                n_midgland: 0
            }
        );

        // FN strictly between two detection-positive slices -> mid-gland.
        let preds = vec![vec![
            mask_with(0),
            mask_with(18),
            mask_with(0),
            mask_with(20),
            mask_with(0),
        ]];
        let out = base_apex_analysis(&preds, &gt, Zone::Wg, 0).unwrap();
        assert_eq!(
            out,
            BaseApexBreakdown {
                n_mispredicted: 1,
                n_base_apex: 0,
                n_midgland: 1
            }
        );

        // Same miss, but the ground truth there is below the size band:
        // counts as base/apex despite the position.
        let out = base_apex_analysis(&preds, &gt, Zone::Wg, 40).unwrap();
        assert_eq!(
            out,
            BaseApexBreakdown {
                n_mispredicted: 1,
                n_base_apex: 1,
                n_midgland: 0
            }
        );
    }

    #[test]
    fn breakdown_partitions_mispredictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n_slices = rng.gen_range(3..8);
            let gts: Vec<_> = (0..n_slices).map(|_| random_mask(&mut rng, 0.5)).collect();
            let preds: Vec<Vec<Array2<u8>>> =
                vec![(0..n_slices).map(|_| random_mask(&mut rng, 0.5)).collect()];
            let gt = cohort_from_masks(vec![gts]);
            let out = base_apex_analysis(&preds, &gt, Zone::Wg, 5).unwrap();
            assert_eq!(out.n_base_apex + out.n_midgland, out.n_mispredicted);
        }
    }

    #[test]
    fn patient_level_mean_differs_from_slice_level() {
        // Patient A: one slice at DSC 1.0; patient B: three slices at 0.5.
        // Slice-level mean = (1 + 0.5*3)/4 = 0.625; patient-level = 0.75.
        let gt = cohort_from_masks(vec![
            vec![mask_with(10)],
            vec![mask_with(16), mask_with(16), mask_with(16)],
        ]);
        let half = {
            // Prediction overlapping 8 of 16 pixels with equal size: DSC 0.5.
            let mut m = Array2::zeros((H, W));
            for i in 8..24 {
                m[[i / W, i % W]] = 1;
            }
            m
        };
        let preds = vec![
            vec![mask_with(10)],
            vec![half.clone(), half.clone(), half],
        ];
        let report = evaluate_cohort(&preds, &gt, Zone::Wg).unwrap();
        assert!((report.mean_dsc - 0.625).abs() < 1e-12);
        let by_patient = patient_mean_dsc(&preds, &gt, Zone::Wg).unwrap();
        assert!((by_patient - 0.75).abs() < 1e-12);
    }
}
