//! Cohort, volume and slice types plus the dataset plumbing around them:
//! phantom generation, on-disk format, patient-level splits, sample
//! enumeration and augmentation.

mod io;
mod phantom;
mod samples;
mod split;

pub use io::{
    decode_image_blob, decode_mask_blob, read_dataset, read_mask_set, write_dataset,
    write_mask_set, DatasetManifest, ManifestPatient, MaskSet, MaskSetManifest, MANIFEST_FILE,
    MASK_SET_FILE,
};
pub use phantom::{generate_phantom_cohort, DomainShift, PhantomConfig};
pub use samples::{apply_augment, augment_slice, enumerate_slices, AugmentParams};
pub use split::{nested_subset, split_fixed_test, split_ratios, FixedTestSplit, RatioSplit};

use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Prostate zone a model segments. One binary model per zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Wg,
    Tz,
}

impl std::fmt::Display for Zone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Zone::Wg => write!(f, "WG"),
            Zone::Tz => write!(f, "TZ"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Source,
    Target,
}

impl std::fmt::Display for DomainTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DomainTag::Source => write!(f, "source"),
            DomainTag::Target => write!(f, "target"),
        }
    }
}

/// One single-channel training sample: one b-value of one axial slice,
/// with the ground-truth masks for both zones.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSample {
    pub image: Array2<f32>,
    /// Diffusion weighting in s/mm².
    pub b_value: u32,
    pub wg_mask: Array2<u8>,
    pub tz_mask: Array2<u8>,
    pub patient_id: String,
    pub slice_index: usize,
}

impl SliceSample {
    /// Ground-truth mask for the requested zone.
    pub fn mask(&self, zone: Zone) -> &Array2<u8> {
        match zone {
            Zone::Wg => &self.wg_mask,
            Zone::Tz => &self.tz_mask,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.image.dim();
        if self.wg_mask.dim() != dim || self.tz_mask.dim() != dim {
            return Err(Error::Shape(format!(
                "sample {}/{}: image {:?} vs masks {:?}/{:?}",
                self.patient_id,
                self.slice_index,
                dim,
                self.wg_mask.dim(),
                self.tz_mask.dim()
            )));
        }
        validate_mask_pair(&self.wg_mask, &self.tz_mask)
    }
}

/// Checks masks are {0,1}-valued and TZ lies inside WG pixelwise.
pub fn validate_mask_pair(wg: &Array2<u8>, tz: &Array2<u8>) -> Result<()> {
    for (&w, &t) in wg.iter().zip(tz.iter()) {
        if w > 1 || t > 1 {
            return Err(Error::Invalid("mask values must be in {0,1}".into()));
        }
        if t == 1 && w == 0 {
            return Err(Error::Invalid("tz_mask must lie inside wg_mask".into()));
        }
    }
    Ok(())
}

/// Ordered axial stack for one patient. `images[slice_index][b_index]`
/// is aligned with the owning cohort's `b_values`; masks are shared
/// across the b-values of a slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientVolume {
    pub patient_id: String,
    pub images: Vec<Vec<Array2<f32>>>,
    pub wg_masks: Vec<Array2<u8>>,
    pub tz_masks: Vec<Array2<u8>>,
}

impl PatientVolume {
    pub fn n_slices(&self) -> usize {
        self.images.len()
    }

    pub fn masks(&self, zone: Zone) -> &[Array2<u8>] {
        match zone {
            Zone::Wg => &self.wg_masks,
            Zone::Tz => &self.tz_masks,
        }
    }

    /// Slice indices whose WG mask is non-empty, in order.
    pub fn prostate_slice_indices(&self) -> Vec<usize> {
        self.wg_masks
            .iter()
            .enumerate()
            .filter(|(_, m)| m.iter().any(|&v| v != 0))
            .map(|(i, _)| i)
            .collect()
    }

    fn validate(&self, n_b_values: usize, height: usize, width: usize) -> Result<()> {
        let n = self.n_slices();
        if self.wg_masks.len() != n || self.tz_masks.len() != n {
            return Err(Error::Invalid(format!(
                "patient {}: mask count does not match slice count",
                self.patient_id
            )));
        }
        for (idx, per_b) in self.images.iter().enumerate() {
            if per_b.len() != n_b_values {
                return Err(Error::Invalid(format!(
                    "patient {} slice {}: expected {} b-values, found {}",
                    self.patient_id,
                    idx,
                    n_b_values,
                    per_b.len()
                )));
            }
            for img in per_b {
                if img.dim() != (height, width) {
                    return Err(Error::Shape(format!(
                        "patient {} slice {}: image {:?}, cohort {}x{}",
                        self.patient_id,
                        idx,
                        img.dim(),
                        height,
                        width
                    )));
                }
            }
        }
        for idx in 0..n {
            if self.wg_masks[idx].dim() != (height, width)
                || self.tz_masks[idx].dim() != (height, width)
            {
                return Err(Error::Shape(format!(
                    "patient {} slice {}: mask shape differs from cohort",
                    self.patient_id, idx
                )));
            }
            validate_mask_pair(&self.wg_masks[idx], &self.tz_masks[idx])?;
        }
        // Prostate is continuous along the axial axis: non-empty WG slices
        // must form one contiguous run.
        let run = self.prostate_slice_indices();
        if let (Some(&first), Some(&last)) = (run.first(), run.last()) {
            if last - first + 1 != run.len() {
                return Err(Error::Invalid(format!(
                    "patient {}: prostate slices are not contiguous",
                    self.patient_id
                )));
            }
        }
        Ok(())
    }
}

/// A set of patients from one institution/scanner.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub domain_tag: DomainTag,
    /// Diffusion weightings shared by every slice of every patient, in s/mm².
    pub b_values: Vec<u32>,
    pub height: usize,
    pub width: usize,
    pub patients: Vec<PatientVolume>,
}

impl Cohort {
    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }

    pub fn total_slices(&self) -> usize {
        self.patients.iter().map(|p| p.n_slices()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.patients {
            if !seen.insert(p.patient_id.as_str()) {
                return Err(Error::Invalid(format!(
                    "duplicate patient_id {}",
                    p.patient_id
                )));
            }
            p.validate(self.b_values.len(), self.height, self.width)?;
        }
        Ok(())
    }

    /// Sub-cohort with the given patient indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Cohort> {
        let mut patients = Vec::with_capacity(indices.len());
        for &i in indices {
            let p = self
                .patients
                .get(i)
                .ok_or_else(|| Error::Invalid(format!("patient index {i} out of range")))?;
            patients.push(p.clone());
        }
        Ok(Cohort {
            domain_tag: self.domain_tag,
            b_values: self.b_values.clone(),
            height: self.height,
            width: self.width,
            patients,
        })
    }
}

#[cfg(test)]
pub(crate) fn mask_pixel_count(mask: &Array2<u8>) -> usize {
    mask.iter().filter(|&&v| v != 0).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn tz_outside_wg_rejected() {
        let wg = arr2(&[[1, 0], [0, 0]]);
        let tz = arr2(&[[0, 1], [0, 0]]);
        assert!(validate_mask_pair(&wg, &tz).is_err());
        let tz_ok = arr2(&[[1, 0], [0, 0]]);
        assert!(validate_mask_pair(&wg, &tz_ok).is_ok());
    }

    #[test]
    fn non_binary_mask_rejected() {
        let wg = arr2(&[[2, 0], [0, 0]]);
        let tz = arr2(&[[0, 0], [0, 0]]);
        assert!(validate_mask_pair(&wg, &tz).is_err());
    }

    #[test]
    fn noncontiguous_prostate_run_rejected() {
        let img = Array2::<f32>::zeros((4, 4));
        let empty = Array2::<u8>::zeros((4, 4));
        let mut full = Array2::<u8>::zeros((4, 4));
        full[[1, 1]] = 1;
        let patient = PatientVolume {
            patient_id: "p0".into(),
            images: vec![vec![img.clone()]; 3],
            wg_masks: vec![full.clone(), empty.clone(), full.clone()],
            tz_masks: vec![empty.clone(); 3],
        };
        let cohort = Cohort {
            domain_tag: DomainTag::Source,
            b_values: vec![0],
            height: 4,
            width: 4,
            patients: vec![patient],
        };
        assert!(cohort.validate().is_err());
    }

    #[test]
    fn duplicate_patient_ids_rejected() {
        let mk = || PatientVolume {
            patient_id: "p0".into(),
            images: vec![],
            wg_masks: vec![],
            tz_masks: vec![],
        };
        let cohort = Cohort {
            domain_tag: DomainTag::Source,
            b_values: vec![0],
            height: 4,
            width: 4,
            patients: vec![mk(), mk()],
        };
        assert!(cohort.validate().is_err());
    }
}
