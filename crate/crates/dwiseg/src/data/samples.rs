//! Slice-sample enumeration and joint image/mask augmentation.

use super::{Cohort, SliceSample};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest rotation drawn by [`AugmentParams::sample`], in degrees.
pub const MAX_ROTATION_DEG: f64 = 15.0;

/// Flattens a cohort into per-(patient, slice, b-value) samples. Every
/// b-value of a slice becomes its own single-channel sample sharing the
/// slice's masks. Order is patient, then slice, then b-value.
pub fn enumerate_slices(cohort: &Cohort) -> Vec<SliceSample> {
    let mut out = Vec::with_capacity(cohort.total_slices() * cohort.b_values.len());
    for patient in &cohort.patients {
        for slice_index in 0..patient.n_slices() {
            for (b_index, &b_value) in cohort.b_values.iter().enumerate() {
                out.push(SliceSample {
                    image: patient.images[slice_index][b_index].clone(),
                    b_value,
                    wg_mask: patient.wg_masks[slice_index].clone(),
                    tz_mask: patient.tz_masks[slice_index].clone(),
                    patient_id: patient.patient_id.clone(),
                    slice_index,
                });
            }
        }
    }
    out
}

/// One concrete augmentation: optional flips followed by a small rotation
/// about the image centre. The same geometry is applied to the image and
/// to both masks so they stay aligned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub hflip: bool,
    pub vflip: bool,
    pub angle_deg: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        hflip: false,
        vflip: false,
        angle_deg: 0.0,
    };

    /// Draws flips with probability 1/2 each and a rotation uniform in
    /// ±[`MAX_ROTATION_DEG`].
    pub fn sample(seed: u64) -> AugmentParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AugmentParams {
            hflip: rng.gen_bool(0.5),
            vflip: rng.gen_bool(0.5),
            angle_deg: rng.gen_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG),
        }
    }

    fn is_identity(&self) -> bool {
        !self.hflip && !self.vflip && self.angle_deg == 0.0
    }
}

fn flip<T: Copy>(arr: &Array2<T>, hflip: bool, vflip: bool) -> Array2<T> {
    let mut out = arr.clone();
    if hflip {
        out.invert_axis(ndarray::Axis(1));
    }
    if vflip {
        out.invert_axis(ndarray::Axis(0));
    }
    out
}

/// Source pixel for output pixel (r, c) under inverse rotation by `angle`.
fn source_coords(r: usize, c: usize, cy: f64, cx: f64, cos: f64, sin: f64) -> (f64, f64) {
    let dy = r as f64 - cy;
    let dx = c as f64 - cx;
    (cy + (-sin * dx + cos * dy), cx + (cos * dx + sin * dy))
}

/// Bilinear resampling; outside the frame reads as 0.
fn rotate_bilinear(img: &Array2<f32>, angle_deg: f64) -> Array2<f32> {
    let (h, w) = img.dim();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let rad = angle_deg.to_radians();
    let (sin, cos) = rad.sin_cos();
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            0.0
        } else {
            img[[r as usize, c as usize]] as f64
        }
    };
    Array2::from_shape_fn((h, w), |(r, c)| {
        let (sr, sc) = source_coords(r, c, cy, cx, cos, sin);
        let (r0, c0) = (sr.floor(), sc.floor());
        let (fr, fc) = (sr - r0, sc - c0);
        let (r0, c0) = (r0 as isize, c0 as isize);
        let top = at(r0, c0) * (1.0 - fc) + at(r0, c0 + 1) * fc;
        let bot = at(r0 + 1, c0) * (1.0 - fc) + at(r0 + 1, c0 + 1) * fc;
        (top * (1.0 - fr) + bot * fr) as f32
    })
}

/// Nearest-neighbour resampling, so mask values stay in {0,1}; outside the
/// frame reads as 0.
fn rotate_nearest(mask: &Array2<u8>, angle_deg: f64) -> Array2<u8> {
    let (h, w) = mask.dim();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let rad = angle_deg.to_radians();
    let (sin, cos) = rad.sin_cos();
    Array2::from_shape_fn((h, w), |(r, c)| {
        let (sr, sc) = source_coords(r, c, cy, cx, cos, sin);
        let (ri, ci) = (sr.round() as isize, sc.round() as isize);
        if ri < 0 || ci < 0 || ri >= h as isize || ci >= w as isize {
            0
        } else {
            mask[[ri as usize, ci as usize]]
        }
    })
}

/// Applies flips then rotation to the image and both masks together.
/// Identity parameters return a bit-exact copy.
pub fn apply_augment(sample: &SliceSample, params: &AugmentParams) -> SliceSample {
    if params.is_identity() {
        return sample.clone();
    }
    let image = flip(&sample.image, params.hflip, params.vflip);
    let wg = flip(&sample.wg_mask, params.hflip, params.vflip);
    let tz = flip(&sample.tz_mask, params.hflip, params.vflip);
    let (image, wg, tz) = if params.angle_deg == 0.0 {
        (image, wg, tz)
    } else {
        (
            rotate_bilinear(&image, params.angle_deg),
            rotate_nearest(&wg, params.angle_deg),
            rotate_nearest(&tz, params.angle_deg),
        )
    };
    SliceSample {
        image,
        b_value: sample.b_value,
        wg_mask: wg,
        tz_mask: tz,
        patient_id: sample.patient_id.clone(),
        slice_index: sample.slice_index,
    }
}

/// Seeded random augmentation of one sample.
pub fn augment_slice(sample: &SliceSample, seed: u64) -> SliceSample {
    apply_augment(sample, &AugmentParams::sample(seed))
}
