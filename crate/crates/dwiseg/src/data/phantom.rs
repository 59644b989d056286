//! Synthetic dual-domain phantom cohorts.
//!
//! Each patient is an axial stack of elliptical "gland" cross-sections whose
//! area rises from the base, peaks mid-gland and falls toward the apex, with
//! a concentric inner ellipse for the transition zone. Pixel intensity decays
//! as `s0 * exp(-b * adc)` per tissue; the target domain additionally blurs,
//! rescales and re-noises the images to emulate a scanner shift.

use super::{Cohort, DomainTag, PatientVolume};
use crate::error::{Error, Result};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

/// Intensity corruption applied to target-domain images only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainShift {
    /// Gaussian blur standard deviation in pixels.
    pub blur_sigma: f64,
    pub intensity_scale: f64,
    pub intensity_offset: f64,
    /// Replaces `noise_sigma` for target-domain images.
    pub noise_sigma_target: f64,
    /// Relative per-patient variation of scale and offset, emulating
    /// per-exam scanner settings: each target patient's scale is
    /// `intensity_scale * (1 + jitter * u)` with u uniform in [-1, 1].
    /// 0 applies the identical shift to every patient. Must be in [0, 1).
    #[serde(default)]
    pub per_patient_jitter: f64,
}

impl Default for DomainShift {
    fn default() -> Self {
        DomainShift {
            blur_sigma: 1.2,
            intensity_scale: 0.65,
            intensity_offset: 0.12,
            noise_sigma_target: 0.04,
            per_patient_jitter: 0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub n_patients: usize,
    pub slices_per_patient: usize,
    pub height: usize,
    pub width: usize,
    /// Diffusion weightings in s/mm².
    pub b_values: Vec<u32>,
    /// Apparent diffusion coefficients in mm²/s.
    pub adc_wg: f64,
    pub adc_tz: f64,
    pub adc_background: f64,
    /// Base signal per tissue at b=0, arbitrary units.
    pub s0_wg: f64,
    pub s0_tz: f64,
    pub s0_background: f64,
    /// Additive Gaussian noise level for source-domain images.
    pub noise_sigma: f64,
    pub domain_shift: DomainShift,
    /// Fraction of slices per patient that contain prostate, in (0,1].
    pub prostate_slice_fraction: f64,
    pub rng_seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            n_patients: 8,
            slices_per_patient: 8,
            height: 64,
            width: 64,
            b_values: vec![0, 400, 1000, 1600],
            adc_wg: 0.0016,
            adc_tz: 0.0012,
            adc_background: 0.0025,
            s0_wg: 1.0,
            s0_tz: 1.0,
            s0_background: 0.35,
            noise_sigma: 0.02,
            domain_shift: DomainShift::default(),
            prostate_slice_fraction: 0.5,
            rng_seed: 0,
        }
    }
}

impl PhantomConfig {
    /// Source-institution preset: includes a b=0 acquisition.
    pub fn source_default() -> Self {
        PhantomConfig::default()
    }

    /// Target-institution preset: b=100 instead of b=0.
    pub fn target_default() -> Self {
        PhantomConfig {
            b_values: vec![100, 400, 1000, 1600],
            ..PhantomConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 || self.slices_per_patient == 0 {
            return Err(Error::Config("phantom: need at least one patient and one slice".into()));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("phantom: non-positive image dimensions".into()));
        }
        if self.b_values.is_empty() {
            return Err(Error::Config("phantom: empty b_values".into()));
        }
        if !(self.prostate_slice_fraction > 0.0 && self.prostate_slice_fraction <= 1.0) {
            return Err(Error::Config(
                "phantom: prostate_slice_fraction must be in (0,1]".into(),
            ));
        }
        let sigmas = [
            self.noise_sigma,
            self.domain_shift.blur_sigma,
            self.domain_shift.noise_sigma_target,
        ];
        if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Config("phantom: sigmas must be finite and >= 0".into()));
        }
        let jitter = self.domain_shift.per_patient_jitter;
        if !(jitter.is_finite() && (0.0..1.0).contains(&jitter)) {
            return Err(Error::Config(
                "phantom: per_patient_jitter must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

struct SliceGeometry {
    center_x: f64,
    center_y: f64,
    wg_ax: f64,
    wg_ay: f64,
    tz_ax: f64,
    tz_ay: f64,
    has_prostate: bool,
}

/// Smallest-to-largest-to-smallest axis profile across the prostate run.
fn axis_profile(k: usize, run_len: usize) -> f64 {
    let t = (k as f64 + 0.5) / run_len as f64;
    let min_scale = 0.35;
    min_scale + (1.0 - min_scale) * (std::f64::consts::PI * t).sin()
}

fn patient_geometry(
    cfg: &PhantomConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<SliceGeometry>, usize, usize) {
    let n = cfg.slices_per_patient;
    let run_len = ((n as f64 * cfg.prostate_slice_fraction).round() as usize).clamp(1, n);
    let run_start = rng.gen_range(0..=n - run_len);

    let cx0 = cfg.width as f64 / 2.0;
    let cy0 = cfg.height as f64 / 2.0;
    let jitter = Uniform::new_inclusive(-0.05, 0.05);
    let center_x = cx0 + jitter.sample(rng) * cfg.width as f64;
    let center_y = cy0 + jitter.sample(rng) * cfg.height as f64;
    let ax_base = cfg.width as f64 * (0.20 + rng.gen_range(0.0..0.05));
    let ay_base = cfg.height as f64 * (0.16 + rng.gen_range(0.0..0.05));
    let tz_ratio = 0.55 + rng.gen_range(-0.05..0.05);

    let mut slices = Vec::with_capacity(n);
    for idx in 0..n {
        let has_prostate = idx >= run_start && idx < run_start + run_len;
        let scale = if has_prostate {
            axis_profile(idx - run_start, run_len)
        } else {
            0.0
        };
        slices.push(SliceGeometry {
            center_x,
            center_y,
            wg_ax: ax_base * scale,
            wg_ay: ay_base * scale,
            tz_ax: ax_base * scale * tz_ratio,
            tz_ay: ay_base * scale * tz_ratio,
            has_prostate,
        });
    }
    (slices, run_start, run_len)
}

fn inside_ellipse(r: usize, c: usize, cx: f64, cy: f64, ax: f64, ay: f64) -> bool {
    if ax <= 0.0 || ay <= 0.0 {
        return false;
    }
    let dx = (c as f64 - cx) / ax;
    let dy = (r as f64 - cy) / ay;
    dx * dx + dy * dy <= 1.0
}

fn rasterize_masks(cfg: &PhantomConfig, geo: &SliceGeometry) -> (Array2<u8>, Array2<u8>) {
    let mut wg = Array2::<u8>::zeros((cfg.height, cfg.width));
    let mut tz = Array2::<u8>::zeros((cfg.height, cfg.width));
    if !geo.has_prostate {
        return (wg, tz);
    }
    for r in 0..cfg.height {
        for c in 0..cfg.width {
            if inside_ellipse(r, c, geo.center_x, geo.center_y, geo.wg_ax, geo.wg_ay) {
                wg[[r, c]] = 1;
                if inside_ellipse(r, c, geo.center_x, geo.center_y, geo.tz_ax, geo.tz_ay) {
                    tz[[r, c]] = 1;
                }
            }
        }
    }
    (wg, tz)
}

/// Noiseless signal for one b-value given the slice masks.
fn signal_image(cfg: &PhantomConfig, wg: &Array2<u8>, tz: &Array2<u8>, b: u32) -> Array2<f64> {
    let b = f64::from(b);
    let v_bg = cfg.s0_background * (-b * cfg.adc_background).exp();
    let v_wg = cfg.s0_wg * (-b * cfg.adc_wg).exp();
    let v_tz = cfg.s0_tz * (-b * cfg.adc_tz).exp();
    let mut img = Array2::<f64>::zeros(wg.dim());
    for ((r, c), out) in img.indexed_iter_mut() {
        *out = if tz[[r, c]] == 1 {
            v_tz
        } else if wg[[r, c]] == 1 {
            v_wg
        } else {
            v_bg
        };
    }
    img
}

/// Separable Gaussian blur; the kernel is renormalized at image borders.
fn gaussian_blur(img: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d as f64 * d as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let (h, w) = img.dim();
    let pass = |src: &Array2<f64>, horizontal: bool| {
        let mut dst = Array2::<f64>::zeros((h, w));
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                let mut norm = 0.0;
                for (i, &wgt) in weights.iter().enumerate() {
                    let d = i as i64 - radius;
                    let (rr, cc) = if horizontal {
                        (r as i64, c as i64 + d)
                    } else {
                        (r as i64 + d, c as i64)
                    };
                    if rr >= 0 && rr < h as i64 && cc >= 0 && cc < w as i64 {
                        acc += wgt * src[[rr as usize, cc as usize]];
                        norm += wgt;
                    }
                }
                dst[[r, c]] = acc / norm;
            }
        }
        dst
    };
    pass(&pass(img, true), false)
}

/// Generates a deterministic phantom cohort. The same `(config, domain)`
/// pair always yields a bit-identical cohort.
pub fn generate_phantom_cohort(config: &PhantomConfig, domain: DomainTag) -> Result<Cohort> {
    config.validate()?;
    let salt = match domain {
        DomainTag::Source => 0x5352_43u64,
        DomainTag::Target => 0x5447_54u64,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ salt);
    let noise_sigma = match domain {
        DomainTag::Source => config.noise_sigma,
        DomainTag::Target => config.domain_shift.noise_sigma_target,
    };
    let noise = if noise_sigma > 0.0 {
        Some(Normal::new(0.0, noise_sigma).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };

    let mut patients = Vec::with_capacity(config.n_patients);
    for p in 0..config.n_patients {
        let (geometry, _, _) = patient_geometry(config, &mut rng);
        // Per-exam scanner settings: drawn for every target patient (even at
        // jitter 0) so the geometry stream is jitter-independent.
        let (scale_p, offset_p) = if domain == DomainTag::Target {
            let shift = &config.domain_shift;
            let u1: f64 = rng.gen_range(-1.0..=1.0);
            let u2: f64 = rng.gen_range(-1.0..=1.0);
            (
                shift.intensity_scale * (1.0 + shift.per_patient_jitter * u1),
                shift.intensity_offset * (1.0 + shift.per_patient_jitter * u2),
            )
        } else {
            (1.0, 0.0)
        };
        let mut images = Vec::with_capacity(config.slices_per_patient);
        let mut wg_masks = Vec::with_capacity(config.slices_per_patient);
        let mut tz_masks = Vec::with_capacity(config.slices_per_patient);
        for geo in &geometry {
            let (wg, tz) = rasterize_masks(config, geo);
            let mut per_b = Vec::with_capacity(config.b_values.len());
            for &b in &config.b_values {
                let mut img = signal_image(config, &wg, &tz, b);
                if domain == DomainTag::Target {
                    img = gaussian_blur(&img, config.domain_shift.blur_sigma);
                    img.mapv_inplace(|v| v * scale_p + offset_p);
                }
                if let Some(n) = &noise {
                    img.mapv_inplace(|v| v + n.sample(&mut rng));
                }
                per_b.push(img.mapv(|v| v as f32));
            }
            images.push(per_b);
            wg_masks.push(wg);
            tz_masks.push(tz);
        }
        patients.push(PatientVolume {
            patient_id: format!("{domain}-{p:04}"),
            images,
            wg_masks,
            tz_masks,
        });
    }

    let cohort = Cohort {
        domain_tag: domain,
        b_values: config.b_values.clone(),
        height: config.height,
        width: config.width,
        patients,
    };
    cohort.validate()?;
    Ok(cohort)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::mask_pixel_count;

    fn small_config() -> PhantomConfig {
        PhantomConfig {
            n_patients: 2,
            slices_per_patient: 24,
            height: 32,
            width: 32,
            b_values: vec![0, 400],
            rng_seed: 7,
            ..PhantomConfig::default()
        }
    }

    #[test]
    fn half_fraction_gives_exact_contiguous_run() {
        let cohort = generate_phantom_cohort(&small_config(), DomainTag::Source).unwrap();
        for p in &cohort.patients {
            let run = p.prostate_slice_indices();
            assert_eq!(run.len(), 12);
            assert_eq!(run.last().unwrap() - run.first().unwrap() + 1, 12);
        }
    }

    #[test]
    fn b0_intensity_inside_wg_is_s0() {
        let mut cfg = small_config();
        cfg.noise_sigma = 0.0;
        let cohort = generate_phantom_cohort(&cfg, DomainTag::Source).unwrap();
        let patient = &cohort.patients[0];
        let slice = patient.prostate_slice_indices()[1];
        let img = &patient.images[slice][0]; // b = 0
        for ((r, c), &m) in patient.wg_masks[slice].indexed_iter() {
            if m == 1 && patient.tz_masks[slice][[r, c]] == 0 {
                assert_eq!(img[[r, c]], cfg.s0_wg as f32);
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_phantom_cohort(&small_config(), DomainTag::Target).unwrap();
        let b = generate_phantom_cohort(&small_config(), DomainTag::Target).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn area_profile_rises_peaks_falls() {
        let cohort = generate_phantom_cohort(&small_config(), DomainTag::Source).unwrap();
        for p in &cohort.patients {
            let run = p.prostate_slice_indices();
            let areas: Vec<usize> = run.iter().map(|&i| mask_pixel_count(&p.wg_masks[i])).collect();
            let peak = areas.iter().enumerate().max_by_key(|(_, &a)| a).unwrap().0;
            assert!(areas[0] < areas[peak]);
            assert!(areas[areas.len() - 1] < areas[peak]);
            // Non-decreasing up to the peak, non-increasing after.
            for k in 0..peak {
                assert!(areas[k] <= areas[k + 1]);
            }
            for k in peak..areas.len() - 1 {
                assert!(areas[k] >= areas[k + 1]);
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = small_config();
        cfg.b_values.clear();
        assert!(generate_phantom_cohort(&cfg, DomainTag::Source).is_err());
        let mut cfg = small_config();
        cfg.height = 0;
        assert!(generate_phantom_cohort(&cfg, DomainTag::Source).is_err());
        let mut cfg = small_config();
        cfg.domain_shift.per_patient_jitter = 1.0;
        assert!(generate_phantom_cohort(&cfg, DomainTag::Target).is_err());
    }

    #[test]
    fn jitter_varies_the_intensity_mapping_per_patient_but_not_the_masks() {
        let mut cfg = small_config();
        cfg.n_patients = 4;
        cfg.noise_sigma = 0.0;
        cfg.domain_shift.noise_sigma_target = 0.0;
        cfg.domain_shift.per_patient_jitter = 0.0;
        let flat = generate_phantom_cohort(&cfg, DomainTag::Target).unwrap();
        cfg.domain_shift.per_patient_jitter = 0.4;
        let varied = generate_phantom_cohort(&cfg, DomainTag::Target).unwrap();

        // The corner pixel sits in pure background plateau, so without noise
        // it reads the patient's scale/offset directly.
        let corner = |c: &Cohort, p: usize| c.patients[p].images[0][0][[0, 0]];
        let flat_vals: Vec<f32> = (0..4).map(|p| corner(&flat, p)).collect();
        assert!(flat_vals.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-6));
        let varied_vals: Vec<f32> = (0..4).map(|p| corner(&varied, p)).collect();
        let spread = varied_vals.iter().fold(f32::MIN, |a, &b| a.max(b))
            - varied_vals.iter().fold(f32::MAX, |a, &b| a.min(b));
        assert!(spread > 0.01, "corner spread {spread}");

        // Jitter is intensity-only: geometry is drawn from the same stream.
        for (a, b) in flat.patients.iter().zip(&varied.patients) {
            assert_eq!(a.wg_masks, b.wg_masks);
            assert_eq!(a.tz_masks, b.tz_masks);
        }
    }
}
