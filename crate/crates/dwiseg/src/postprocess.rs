//! Morphological cleanup of predicted masks: closing (fill holes), opening
//! (drop specks), and suppression of implausibly small slice masks using a
//! threshold derived from base/apex mask sizes.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{Cohort, Zone};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PostprocessConfig {
    /// Disk structuring-element radius in pixels.
    pub disk_radius: usize,
    /// Slice masks smaller than these counts are emptied; 0 disables the
    /// filter. Typically filled in from [`derive_min_size_threshold`].
    pub min_mask_pixels_wg: usize,
    pub min_mask_pixels_tz: usize,
    /// Fraction of the mean base/apex mask size used by the threshold rule.
    pub threshold_fraction: f64,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            disk_radius: 2,
            min_mask_pixels_wg: 0,
            min_mask_pixels_tz: 0,
            threshold_fraction: 0.9,
        }
    }
}

impl PostprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.disk_radius == 0 {
            return Err(Error::Config("disk_radius must be >= 1".into()));
        }
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction <= 1.0) {
            return Err(Error::Config("threshold_fraction must be in (0,1]".into()));
        }
        Ok(())
    }

    pub fn min_pixels(&self, zone: Zone) -> usize {
        match zone {
            Zone::Wg => self.min_mask_pixels_wg,
            Zone::Tz => self.min_mask_pixels_tz,
        }
    }
}

/// Offsets (dr, dc) with dr² + dc² ≤ radius².
fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut offsets = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            if dr * dr + dc * dc <= r * r {
                offsets.push((dr, dc));
            }
        }
    }
    offsets
}

fn dilate(mask: &Array2<u8>, offsets: &[(isize, isize)]) -> Array2<u8> {
    let (h, w) = mask.dim();
    let mut out = Array2::zeros((h, w));
    for ((r, c), &v) in mask.indexed_iter() {
        if v == 0 {
            continue;
        }
        for &(dr, dc) in offsets {
            let rr = r as isize + dr;
            let cc = c as isize + dc;
            if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                out[[rr as usize, cc as usize]] = 1;
            }
        }
    }
    out
}

/// Erosion with everything outside the frame counting as background.
fn erode(mask: &Array2<u8>, offsets: &[(isize, isize)]) -> Array2<u8> {
    let (h, w) = mask.dim();
    Array2::from_shape_fn((h, w), |(r, c)| {
        let all_in = offsets.iter().all(|&(dr, dc)| {
            let rr = r as isize + dr;
            let cc = c as isize + dc;
            rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w && mask[[rr as usize, cc as usize]] != 0
        });
        u8::from(all_in)
    })
}

/// Dilation followed by erosion; fills holes/gaps up to the disk scale.
/// Computed on a frame padded by the radius so border pixels behave as on an
/// unbounded canvas, which keeps the operation extensive (output ⊇ input)
/// and idempotent.
pub fn close_mask(mask: &Array2<u8>, radius: usize) -> Array2<u8> {
    let (h, w) = mask.dim();
    let offsets = disk_offsets(radius);
    let mut padded = Array2::zeros((h + 2 * radius, w + 2 * radius));
    padded
        .slice_mut(ndarray::s![radius..radius + h, radius..radius + w])
        .assign(mask);
    let closed = erode(&dilate(&padded, &offsets), &offsets);
    closed
        .slice(ndarray::s![radius..radius + h, radius..radius + w])
        .to_owned()
}

/// Erosion followed by dilation; removes specks below the disk scale.
/// Anti-extensive (output ⊆ input) and idempotent; no padding is needed
/// because the eroded support already lies inside the input.
pub fn open_mask(mask: &Array2<u8>, radius: usize) -> Array2<u8> {
    let offsets = disk_offsets(radius);
    dilate(&erode(mask, &offsets), &offsets)
}

/// Minimum plausible mask size: `fraction` of the mean pixel count over every
/// patient's base and apex slices (the first and last slices with a non-empty
/// mask; a patient whose prostate spans a single slice contributes one
/// count). Computed in integer arithmetic — the fraction is treated as a
/// 9-decimal-place rational — so e.g. a mean of 133.33… at 0.9 yields exactly
/// 120, not a float-rounding neighbor.
pub fn derive_min_size_threshold(cohort: &Cohort, zone: Zone, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config("threshold fraction must be in (0,1]".into()));
    }
    let mut counts: Vec<u64> = Vec::new();
    for patient in &cohort.patients {
        let sizes: Vec<u64> = patient
            .masks(zone)
            .iter()
            .map(|m| m.iter().map(|&v| u64::from(v)).sum())
            .collect();
        let nonempty: Vec<usize> = (0..sizes.len()).filter(|&i| sizes[i] > 0).collect();
        let (Some(&first), Some(&last)) = (nonempty.first(), nonempty.last()) else {
            return Err(Error::Invalid(format!(
                "patient {} has no non-empty {zone} mask",
                patient.patient_id
            )));
        };
        counts.push(sizes[first]);
        if last != first {
            counts.push(sizes[last]);
        }
    }
    if counts.is_empty() {
        return Err(Error::Invalid("cohort has no patients".into()));
    }
    const DEN: u128 = 1_000_000_000;
    let num = (fraction * DEN as f64).round() as u128;
    let sum: u128 = counts.iter().map(|&c| u128::from(c)).sum();
    let n = counts.len() as u128;
    Ok((sum * num / (n * DEN)) as usize)
}

/// Empties slices with 0 < |mask| < `min_pixels`; everything else passes
/// through. The boundary is strict: a mask of exactly `min_pixels` survives.
pub fn filter_small_masks(masks: &[Array2<u8>], min_pixels: usize) -> Vec<Array2<u8>> {
    masks
        .iter()
        .map(|m| {
            let count: usize = m.iter().map(|&v| usize::from(v)).sum();
            if count > 0 && count < min_pixels {
                Array2::zeros(m.dim())
            } else {
                m.clone()
            }
        })
        .collect()
}

/// Per-slice pipeline: close, open, then drop small masks.
pub fn postprocess_volume(
    masks: &[Array2<u8>],
    config: &PostprocessConfig,
    zone: Zone,
) -> Result<Vec<Array2<u8>>> {
    config.validate()?;
    let cleaned: Vec<Array2<u8>> = masks
        .iter()
        .map(|m| open_mask(&close_mask(m, config.disk_radius), config.disk_radius))
        .collect();
    Ok(filter_small_masks(&cleaned, config.min_pixels(zone)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DomainTag, PatientVolume};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn subset(a: &Array2<u8>, b: &Array2<u8>) -> bool {
        a.iter().zip(b.iter()).all(|(&x, &y)| x <= y)
    }

    fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Array2<u8> {
        let density = rng.gen_range(0.05..0.6);
        Array2::from_shape_fn((h, w), |_| u8::from(rng.gen_bool(density)))
    }

    #[test]
    fn closing_fills_interior_hole() {
        let mut mask = Array2::<u8>::zeros((12, 12));
        for r in 3..9 {
            for c in 3..9 {
                mask[[r, c]] = 1;
            }
        }
        mask[[5, 5]] = 0;
        let closed = close_mask(&mask, 2);
        assert_eq!(closed[[5, 5]], 1);
        assert!(subset(&mask, &closed));
    }

    #[test]
    fn closing_is_extensive_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let mask = random_mask(&mut rng, 16, 16);
            let once = close_mask(&mask, 2);
            assert!(subset(&mask, &once));
            assert_eq!(close_mask(&once, 2), once);
        }
        let empty = Array2::<u8>::zeros((8, 8));
        assert_eq!(close_mask(&empty, 2), empty);
    }

    #[test]
    fn opening_removes_isolated_pixel() {
        let mut mask = Array2::<u8>::zeros((10, 10));
        mask[[4, 4]] = 1;
        assert_eq!(open_mask(&mask, 2).sum(), 0);
    }

    #[test]
    fn opening_is_anti_extensive_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let mask = random_mask(&mut rng, 16, 16);
            let once = open_mask(&mask, 2);
            assert!(subset(&once, &mask));
            assert_eq!(open_mask(&once, 2), once);
        }
    }

    #[test]
    fn opening_keeps_large_blob() {
        let mut mask = Array2::<u8>::zeros((20, 20));
        for r in 4..16 {
            for c in 4..16 {
                if (r as isize - 10).pow(2) + (c as isize - 10).pow(2) <= 36 {
                    mask[[r, c]] = 1;
                }
            }
        }
        let opened = open_mask(&mask, 2);
        assert!(subset(&opened, &mask));
        // A disk of radius 6 survives an opening with radius 2 mostly intact.
        assert!(opened.iter().map(|&v| usize::from(v)).sum::<usize>() >= 85);
    }

    fn mask_of_size(h: usize, w: usize, count: usize) -> Array2<u8> {
        let mut m = Array2::zeros((h, w));
        for i in 0..count {
            m[[i / w, i % w]] = 1;
        }
        m
    }

    fn cohort_with_base_apex_counts(per_patient: &[Vec<usize>]) -> Cohort {
        let patients: Vec<PatientVolume> = per_patient
            .iter()
            .enumerate()
            .map(|(i, counts)| {
                let masks: Vec<Array2<u8>> = counts.iter().map(|&c| mask_of_size(24, 24, c)).collect();
                PatientVolume {
                    patient_id: format!("p{i:03}"),
                    images: masks.iter().map(|_| vec![Array2::zeros((24, 24))]).collect(),
                    wg_masks: masks.clone(),
                    tz_masks: masks,
                }
            })
            .collect();
        Cohort {
            domain_tag: DomainTag::Source,
            b_values: vec![0],
            height: 24,
            width: 24,
            patients,
        }
    }

    #[test]
    fn threshold_rule_reproduces_reference_values() {
        // Mean 400/3 = 133.33…; 0.9 of that floors to exactly 120.
        // One patient with a single prostate slice (100) contributes one
        // count; the other contributes base and apex (150 each).
        let cohort = cohort_with_base_apex_counts(&[vec![0, 100, 0], vec![150, 200, 150]]);
        assert_eq!(derive_min_size_threshold(&cohort, Zone::Wg, 0.9).unwrap(), 120);

        // Mean 650/9 = 72.22…; 0.9 of that is exactly 65.
        let counts: Vec<Vec<usize>> = vec![
            vec![72, 300, 72],
            vec![72, 300, 72],
            vec![72, 300, 72],
            vec![72, 300, 73],
            vec![0, 73, 0],
        ];
        let cohort = cohort_with_base_apex_counts(&counts);
        assert_eq!(derive_min_size_threshold(&cohort, Zone::Tz, 0.9).unwrap(), 65);

        // Uniform 100-pixel base/apex slices -> 90.
        let cohort = cohort_with_base_apex_counts(&[vec![100, 400, 100]]);
        assert_eq!(derive_min_size_threshold(&cohort, Zone::Wg, 0.9).unwrap(), 90);
    }

    #[test]
    fn threshold_rule_is_permutation_invariant_and_rejects_empty() {
        let a = cohort_with_base_apex_counts(&[vec![80, 300, 90], vec![100, 250, 110]]);
        let b = cohort_with_base_apex_counts(&[vec![100, 250, 110], vec![80, 300, 90]]);
        assert_eq!(
            derive_min_size_threshold(&a, Zone::Wg, 0.9).unwrap(),
            derive_min_size_threshold(&b, Zone::Wg, 0.9).unwrap()
        );
        let no_masks = cohort_with_base_apex_counts(&[vec![0, 0, 0]]);
        assert!(derive_min_size_threshold(&no_masks, Zone::Wg, 0.9).is_err());
        let nobody = cohort_with_base_apex_counts(&[]);
        assert!(derive_min_size_threshold(&nobody, Zone::Wg, 0.9).is_err());
    }

    #[test]
    fn size_filter_boundary_is_strict() {
        let slices = vec![
            mask_of_size(16, 16, 119),
            mask_of_size(16, 16, 120),
            Array2::zeros((16, 16)),
        ];
        let filtered = filter_small_masks(&slices, 120);
        assert_eq!(filtered[0].sum(), 0);
        assert_eq!(filtered[1].iter().map(|&v| usize::from(v)).sum::<usize>(), 120);
        assert_eq!(filtered[2].sum(), 0);
        for (out, inp) in filtered.iter().zip(&slices) {
            assert!(subset(out, inp));
        }
    }

    #[test]
    fn pipeline_fills_hole_and_drops_speck() {
        let mut mask = Array2::<u8>::zeros((24, 24));
        for r in 4..14 {
            for c in 4..14 {
                mask[[r, c]] = 1;
            }
        }
        mask[[8, 8]] = 0; // interior hole
        mask[[20, 20]] = 1; // distant speck
        let config = PostprocessConfig::default();
        let out = postprocess_volume(&[mask], &config, Zone::Wg).unwrap();
        assert_eq!(out[0][[8, 8]], 1);
        assert_eq!(out[0][[20, 20]], 0);

        // A mask the pipeline has already cleaned passes through unchanged.
        let again = postprocess_volume(&out, &config, Zone::Wg).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn config_validation() {
        let bad_radius = PostprocessConfig {
            disk_radius: 0,
            ..PostprocessConfig::default()
        };
        assert!(bad_radius.validate().is_err());
        let bad_fraction = PostprocessConfig {
            threshold_fraction: 1.5,
            ..PostprocessConfig::default()
        };
        assert!(bad_fraction.validate().is_err());
    }
}
