//! On-disk dataset format.
//!
//! A dataset root holds `manifest.json` plus one directory per patient with
//! raw little-endian 32-bit float image files and raw 8-bit {0,1} mask files,
//! row-major. The manifest records every file name with its SHA-256 digest so
//! truncation and corruption are detected on read.

use super::{Cohort, DomainTag, PatientVolume, Zone};
use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    /// Path relative to the dataset root.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSlice {
    pub index: usize,
    /// One image file per b-value, aligned with the manifest's `b_values`.
    pub images: Vec<FileEntry>,
    pub wg_mask: FileEntry,
    pub tz_mask: FileEntry,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPatient {
    pub patient_id: String,
    pub n_slices: usize,
    pub slices: Vec<ManifestSlice>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub domain_tag: DomainTag,
    pub b_values: Vec<u32>,
    pub height: usize,
    pub width: usize,
    pub patients: Vec<ManifestPatient>,
}

impl DatasetManifest {
    /// Parses and structurally validates manifest bytes.
    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let manifest: DatasetManifest = serde_json::from_slice(bytes)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: self.format_version,
                expected: FORMAT_VERSION,
            });
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::Invalid("manifest: zero image dimensions".into()));
        }
        if self.b_values.is_empty() {
            return Err(Error::Invalid("manifest: empty b_values".into()));
        }
        for p in &self.patients {
            if p.slices.len() != p.n_slices {
                return Err(Error::Invalid(format!(
                    "manifest: patient {} declares {} slices but lists {}",
                    p.patient_id,
                    p.n_slices,
                    p.slices.len()
                )));
            }
            for (expected_idx, s) in p.slices.iter().enumerate() {
                if s.index != expected_idx {
                    return Err(Error::Invalid(format!(
                        "manifest: patient {} slice indices not contiguous from 0",
                        p.patient_id
                    )));
                }
                if s.images.len() != self.b_values.len() {
                    return Err(Error::Invalid(format!(
                        "manifest: patient {} slice {} has {} image files for {} b-values",
                        p.patient_id,
                        s.index,
                        s.images.len(),
                        self.b_values.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn image_to_bytes(img: &Array2<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.len() * 4);
    for &v in img.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn mask_to_bytes(mask: &Array2<u8>) -> Vec<u8> {
    mask.iter().copied().collect()
}

/// Decodes a raw little-endian f32 image blob of the given dimensions.
pub fn decode_image_blob(bytes: &[u8], height: usize, width: usize) -> Result<Array2<f32>> {
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Invalid("image dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Integrity {
            file: String::new(),
            reason: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Array2::from_shape_vec((height, width), values)
        .map_err(|e| Error::Shape(e.to_string()))
}

/// Decodes a raw 8-bit {0,1} mask blob of the given dimensions.
pub fn decode_mask_blob(bytes: &[u8], height: usize, width: usize) -> Result<Array2<u8>> {
    let expected = height
        .checked_mul(width)
        .ok_or_else(|| Error::Invalid("mask dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Integrity {
            file: String::new(),
            reason: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    if let Some(bad) = bytes.iter().find(|&&v| v > 1) {
        return Err(Error::Integrity {
            file: String::new(),
            reason: format!("mask byte {bad} outside {{0,1}}"),
        });
    }
    Array2::from_shape_vec((height, width), bytes.to_vec())
        .map_err(|e| Error::Shape(e.to_string()))
}

fn write_file(root: &Path, rel: &str, bytes: &[u8]) -> Result<FileEntry> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(FileEntry {
        path: rel.to_string(),
        sha256: sha256_hex(bytes),
    })
}

fn read_file_checked(root: &Path, entry: &FileEntry) -> Result<Vec<u8>> {
    let path = root.join(&entry.path);
    let bytes = fs::read(&path).map_err(|_| Error::Integrity {
        file: entry.path.clone(),
        reason: "missing or unreadable".into(),
    })?;
    if sha256_hex(&bytes) != entry.sha256 {
        return Err(Error::Integrity {
            file: entry.path.clone(),
            reason: "sha256 mismatch".into(),
        });
    }
    Ok(bytes)
}

/// Writes a cohort under `root` and returns the manifest path.
pub fn write_dataset(cohort: &Cohort, root: &Path) -> Result<PathBuf> {
    cohort.validate()?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut patients = Vec::with_capacity(cohort.patients.len());
    for p in &cohort.patients {
        let mut slices = Vec::with_capacity(p.n_slices());
        for (idx, per_b) in p.images.iter().enumerate() {
            let mut images = Vec::with_capacity(per_b.len());
            for (img, &b) in per_b.iter().zip(&cohort.b_values) {
                let rel = format!("{}/slice{:03}_b{}.img", p.patient_id, idx, b);
                images.push(write_file(root, &rel, &image_to_bytes(img))?);
            }
            let wg_rel = format!("{}/slice{:03}_wg.mask", p.patient_id, idx);
            let tz_rel = format!("{}/slice{:03}_tz.mask", p.patient_id, idx);
            slices.push(ManifestSlice {
                index: idx,
                images,
                wg_mask: write_file(root, &wg_rel, &mask_to_bytes(&p.wg_masks[idx]))?,
                tz_mask: write_file(root, &tz_rel, &mask_to_bytes(&p.tz_masks[idx]))?,
            });
        }
        patients.push(ManifestPatient {
            patient_id: p.patient_id.clone(),
            n_slices: p.n_slices(),
            slices,
        });
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        domain_tag: cohort.domain_tag,
        b_values: cohort.b_values.clone(),
        height: cohort.height,
        width: cohort.width,
        patients,
    };
    let manifest_path = root.join(MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(&manifest)?;
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

fn named_integrity(file: &str, err: Error) -> Error {
    match err {
        Error::Integrity { reason, .. } => Error::Integrity {
            file: file.to_string(),
            reason,
        },
        other => other,
    }
}

/// Reads a dataset back; round-trips `write_dataset` bit-exactly.
pub fn read_dataset(root: &Path) -> Result<Cohort> {
    let manifest_path = root.join(MANIFEST_FILE);
    let bytes = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest = DatasetManifest::from_slice(&bytes)?;

    let mut patients = Vec::with_capacity(manifest.patients.len());
    for mp in &manifest.patients {
        let mut images = Vec::with_capacity(mp.n_slices);
        let mut wg_masks = Vec::with_capacity(mp.n_slices);
        let mut tz_masks = Vec::with_capacity(mp.n_slices);
        for s in &mp.slices {
            let mut per_b = Vec::with_capacity(s.images.len());
            for entry in &s.images {
                let raw = read_file_checked(root, entry)?;
                per_b.push(
                    decode_image_blob(&raw, manifest.height, manifest.width)
                        .map_err(|e| named_integrity(&entry.path, e))?,
                );
            }
            let wg_raw = read_file_checked(root, &s.wg_mask)?;
            let tz_raw = read_file_checked(root, &s.tz_mask)?;
            images.push(per_b);
            wg_masks.push(
                decode_mask_blob(&wg_raw, manifest.height, manifest.width)
                    .map_err(|e| named_integrity(&s.wg_mask.path, e))?,
            );
            tz_masks.push(
                decode_mask_blob(&tz_raw, manifest.height, manifest.width)
                    .map_err(|e| named_integrity(&s.tz_mask.path, e))?,
            );
        }
        patients.push(PatientVolume {
            patient_id: mp.patient_id.clone(),
            images,
            wg_masks,
            tz_masks,
        });
    }

    let cohort = Cohort {
        domain_tag: manifest.domain_tag,
        b_values: manifest.b_values,
        height: manifest.height,
        width: manifest.width,
        patients,
    };
    cohort.validate()?;
    Ok(cohort)
}

pub const MASK_SET_FILE: &str = "masks.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSetPatient {
    pub patient_id: String,
    /// One mask file per slice, in slice order.
    pub masks: Vec<FileEntry>,
}

/// Index for a directory of predicted (or post-processed) mask volumes for
/// one zone. Same blob format and integrity scheme as dataset masks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSetManifest {
    pub format_version: u32,
    pub zone: Zone,
    pub height: usize,
    pub width: usize,
    pub patients: Vec<MaskSetPatient>,
}

impl MaskSetManifest {
    /// Parses and structurally validates mask-set manifest bytes.
    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let manifest: MaskSetManifest = serde_json::from_slice(bytes)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: self.format_version,
                expected: FORMAT_VERSION,
            });
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::Invalid("mask set dimensions must be nonzero".into()));
        }
        for p in &self.patients {
            if p.patient_id.is_empty() {
                return Err(Error::Invalid("empty patient id in mask set".into()));
            }
            if p.masks.is_empty() {
                return Err(Error::Invalid(format!(
                    "patient {} has no mask files",
                    p.patient_id
                )));
            }
        }
        Ok(())
    }
}

/// In-memory mask volumes for one zone, keyed by patient in cohort order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub zone: Zone,
    pub height: usize,
    pub width: usize,
    pub patients: Vec<(String, Vec<Array2<u8>>)>,
}

/// Writes mask volumes under `root` and returns the manifest path.
pub fn write_mask_set(set: &MaskSet, root: &Path) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut patients = Vec::with_capacity(set.patients.len());
    for (patient_id, masks) in &set.patients {
        let mut entries = Vec::with_capacity(masks.len());
        for (idx, mask) in masks.iter().enumerate() {
            if mask.dim() != (set.height, set.width) {
                return Err(Error::Shape(format!(
                    "patient {patient_id} slice {idx}: mask is {:?}, set is {}x{}",
                    mask.dim(),
                    set.height,
                    set.width
                )));
            }
            if mask.iter().any(|&v| v > 1) {
                return Err(Error::Invalid(format!(
                    "patient {patient_id} slice {idx}: mask values outside {{0,1}}"
                )));
            }
            let rel = format!("{patient_id}/slice{idx:03}.mask");
            entries.push(write_file(root, &rel, &mask_to_bytes(mask))?);
        }
        patients.push(MaskSetPatient {
            patient_id: patient_id.clone(),
            masks: entries,
        });
    }
    let manifest = MaskSetManifest {
        format_version: FORMAT_VERSION,
        zone: set.zone,
        height: set.height,
        width: set.width,
        patients,
    };
    manifest.validate()?;
    let manifest_path = root.join(MASK_SET_FILE);
    let json = serde_json::to_vec_pretty(&manifest)?;
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Reads a mask set back; round-trips `write_mask_set` bit-exactly.
pub fn read_mask_set(root: &Path) -> Result<MaskSet> {
    let manifest_path = root.join(MASK_SET_FILE);
    let bytes = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest = MaskSetManifest::from_slice(&bytes)?;
    let mut patients = Vec::with_capacity(manifest.patients.len());
    for mp in &manifest.patients {
        let mut masks = Vec::with_capacity(mp.masks.len());
        for entry in &mp.masks {
            let raw = read_file_checked(root, entry)?;
            masks.push(
                decode_mask_blob(&raw, manifest.height, manifest.width)
                    .map_err(|e| named_integrity(&entry.path, e))?,
            );
        }
        patients.push((mp.patient_id.clone(), masks));
    }
    Ok(MaskSet {
        zone: manifest.zone,
        height: manifest.height,
        width: manifest.width,
        patients,
    })
}
