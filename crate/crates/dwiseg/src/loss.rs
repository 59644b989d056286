//! Dice scores and losses.
//!
//! Two families: the conventional ε-smoothed Dice and a piecewise variant
//! that pays a configurable reward X when prediction and ground truth are
//! both empty, so empty slices stop being free wins (X=1 reproduces the
//! conventional convention, X=0 removes the reward entirely).

use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossFamily {
    Conventional,
    Modified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub family: LossFamily,
    /// Empty-slice reward X in [0,1]; only read by the modified family.
    pub x: f64,
    pub epsilon: f64,
    pub binarize_threshold: f64,
    /// Opt-in gradient on empty-ground-truth slices with a non-empty
    /// binarized prediction (numerator-ε form). Off by default: the
    /// piecewise score is identically 0 there, so its gradient is 0.
    pub fp_suppression: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            family: LossFamily::Modified,
            x: 0.0,
            epsilon: 1e-6,
            binarize_threshold: 0.5,
            fp_suppression: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.x) {
            return Err(Error::Config("loss x must be in [0,1]".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("loss epsilon must be > 0".into()));
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(Error::Config("binarize_threshold must be in (0,1)".into()));
        }
        Ok(())
    }
}

/// The eleven sweep values of X: 0.0, 0.1, …, 1.0.
pub fn x_grid() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}

/// Rejects X values off the 0.1-step sweep grid.
pub fn validate_x_on_grid(x: f64) -> Result<()> {
    let scaled = x * 10.0;
    if !(0.0..=10.0).contains(&scaled) || (scaled - scaled.round()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "x = {x} is not on the 0.0..1.0 grid with 0.1 steps"
        )));
    }
    Ok(())
}

fn check_same_shape<A, B>(p: &Array2<A>, g: &Array2<B>) -> Result<()> {
    if p.dim() != g.dim() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs ground truth {:?}",
            p.dim(),
            g.dim()
        )));
    }
    Ok(())
}

fn check_binary(mask: &Array2<u8>) -> Result<()> {
    if mask.iter().any(|&v| v > 1) {
        return Err(Error::Invalid("mask values must be in {0,1}".into()));
    }
    Ok(())
}

fn overlap_counts(p: &Array2<u8>, g: &Array2<u8>) -> (f64, f64, f64) {
    let mut inter = 0u64;
    let mut np = 0u64;
    let mut ng = 0u64;
    for (&a, &b) in p.iter().zip(g.iter()) {
        np += u64::from(a);
        ng += u64::from(b);
        inter += u64::from(a & b);
    }
    (inter as f64, np as f64, ng as f64)
}

/// ε-smoothed Dice score, 2(|P∩G|+ε)/(|P|+|G|+2ε), clamped to [0,1].
/// The symmetric 2ε denominator makes the empty/empty case exactly 1
/// instead of the 2 a single-ε denominator would produce.
pub fn binary_dsc(p: &Array2<u8>, g: &Array2<u8>, epsilon: f64) -> Result<f64> {
    check_same_shape(p, g)?;
    check_binary(p)?;
    check_binary(g)?;
    let (inter, np, ng) = overlap_counts(p, g);
    let dsc = 2.0 * (inter + epsilon) / (np + ng + 2.0 * epsilon);
    Ok(dsc.clamp(0.0, 1.0))
}

/// Negated [`binary_dsc`].
pub fn dice_loss(p: &Array2<u8>, g: &Array2<u8>, epsilon: f64) -> Result<f64> {
    Ok(-binary_dsc(p, g, epsilon)?)
}

/// Piecewise Dice: X when both masks are empty, otherwise the exact
/// ε-free ratio 2|P∩G|/(|P|+|G|).
pub fn modified_dsc(p: &Array2<u8>, g: &Array2<u8>, x: f64) -> Result<f64> {
    check_same_shape(p, g)?;
    check_binary(p)?;
    check_binary(g)?;
    let (inter, np, ng) = overlap_counts(p, g);
    if np == 0.0 && ng == 0.0 {
        Ok(x)
    } else {
        Ok(2.0 * inter / (np + ng))
    }
}

/// Negated [`modified_dsc`].
pub fn modified_dice_loss(p: &Array2<u8>, g: &Array2<u8>, x: f64) -> Result<f64> {
    Ok(-modified_dsc(p, g, x)?)
}

/// Hard mask from a probability map; `threshold` is inclusive.
pub fn binarize(p_soft: &Array2<f64>, threshold: f64) -> Array2<u8> {
    p_soft.mapv(|v| u8::from(v >= threshold))
}

#[derive(Debug, Clone)]
pub struct LossValue {
    pub loss: f64,
    /// d(loss)/d(p_soft), same shape as the prediction.
    pub grad: Array2<f64>,
}

impl LossValue {
    fn constant(loss: f64, dim: (usize, usize)) -> LossValue {
        LossValue {
            loss,
            grad: Array2::zeros(dim),
        }
    }
}

/// Differentiable per-slice training loss on a soft prediction.
///
/// Conventional family: −2(Σp·g + ε)/(Σp + Σg + ε).
/// Modified family, branching on Σg and on the binarized prediction:
/// both empty → constant −X; ground truth empty but prediction non-empty →
/// constant 0 (or the ε-numerator suppression term when opted in);
/// otherwise the ε-free soft ratio −2Σp·g/(Σp + Σg).
pub fn soft_dice_training_loss(
    p_soft: &Array2<f64>,
    g: &Array2<u8>,
    config: &LossConfig,
) -> Result<LossValue> {
    config.validate()?;
    check_same_shape(p_soft, g)?;
    check_binary(g)?;
    if p_soft.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Invalid(
            "soft prediction values must lie in [0,1]".into(),
        ));
    }
    let eps = config.epsilon;
    let s_p: f64 = p_soft.sum();
    let s_g: f64 = g.iter().map(|&v| f64::from(v)).sum();
    let s_pg: f64 = p_soft
        .iter()
        .zip(g.iter())
        .map(|(&p, &gv)| p * f64::from(gv))
        .sum();

    match config.family {
        LossFamily::Conventional => {
            let denom = s_p + s_g + eps;
            let loss = -2.0 * (s_pg + eps) / denom;
            let grad = Array2::from_shape_fn(p_soft.dim(), |ix| {
                let gv = f64::from(g[ix]);
                -2.0 * (gv * denom - (s_pg + eps)) / (denom * denom)
            });
            Ok(LossValue { loss, grad })
        }
        LossFamily::Modified => {
            if s_g == 0.0 {
                let pred_empty = binarize(p_soft, config.binarize_threshold)
                    .iter()
                    .all(|&v| v == 0);
                if pred_empty {
                    Ok(LossValue::constant(-config.x, p_soft.dim()))
                } else if config.fp_suppression {
                    let denom = s_p + eps;
                    let loss = -2.0 * eps / denom;
                    let grad = Array2::from_elem(p_soft.dim(), 2.0 * eps / (denom * denom));
                    Ok(LossValue { loss, grad })
                } else {
                    // Numerator is identically zero here, so both the value
                    // and the gradient vanish.
                    Ok(LossValue::constant(0.0, p_soft.dim()))
                }
            } else {
                let denom = s_p + s_g;
                let loss = -2.0 * s_pg / denom;
                let grad = Array2::from_shape_fn(p_soft.dim(), |ix| {
                    let gv = f64::from(g[ix]);
                    -2.0 * (gv * denom - s_pg) / (denom * denom)
                });
                Ok(LossValue { loss, grad })
            }
        }
    }
}
