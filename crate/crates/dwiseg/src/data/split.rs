//! Patient-level cohort splits. Splitting never happens at slice level, so
//! slices of one patient can never leak between train and test.

use super::Cohort;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RatioSplit {
    pub train: Cohort,
    pub val: Cohort,
    pub test: Cohort,
}

/// Fixed held-out test set plus a shuffled fine-tune pool. Subsets taken
/// from the pool with [`nested_subset`] are nested across sizes and always
/// disjoint from the test set.
#[derive(Debug, Clone)]
pub struct FixedTestSplit {
    pub pool: Cohort,
    pub test: Cohort,
}

/// Allocates `total` patients over weights by largest-remainder rounding.
fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    indices
}

/// Splits into train/val/test by the given ratio weights, e.g. `(3, 1, 1.5)`.
/// A zero weight is allowed and yields an empty bucket, e.g. `(4, 1, 0)` for
/// a train/val split with no held-out test patients.
pub fn split_ratios(cohort: &Cohort, ratios: (f64, f64, f64), seed: u64) -> Result<RatioSplit> {
    let (a, b, c) = ratios;
    if !(a >= 0.0 && b >= 0.0 && c >= 0.0 && a + b + c > 0.0) {
        return Err(Error::Config(
            "split ratios must be non-negative with a positive sum".into(),
        ));
    }
    let counts = largest_remainder(cohort.n_patients(), &[a, b, c]);
    let indices = shuffled_indices(cohort.n_patients(), seed);
    let train_idx = &indices[..counts[0]];
    let val_idx = &indices[counts[0]..counts[0] + counts[1]];
    let test_idx = &indices[counts[0] + counts[1]..];
    Ok(RatioSplit {
        train: cohort.select(train_idx)?,
        val: cohort.select(val_idx)?,
        test: cohort.select(test_idx)?,
    })
}

/// Holds out `test_size` patients; the rest become the fine-tune pool.
pub fn split_fixed_test(cohort: &Cohort, test_size: usize, seed: u64) -> Result<FixedTestSplit> {
    if test_size > cohort.n_patients() {
        return Err(Error::Config(format!(
            "test size {test_size} exceeds cohort of {}",
            cohort.n_patients()
        )));
    }
    let indices = shuffled_indices(cohort.n_patients(), seed);
    let test = cohort.select(&indices[..test_size])?;
    let pool = cohort.select(&indices[test_size..])?;
    Ok(FixedTestSplit { pool, test })
}

/// First `size` patients of the pool, so subsets are nested across sizes.
pub fn nested_subset(split: &FixedTestSplit, size: usize) -> Result<Cohort> {
    if size > split.pool.n_patients() {
        return Err(Error::Config(format!(
            "subset size {size} exceeds fine-tune pool of {}",
            split.pool.n_patients()
        )));
    }
    let indices: Vec<usize> = (0..size).collect();
    split.pool.select(&indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DomainTag, PatientVolume};
    use std::collections::BTreeSet;

    fn cohort_of(n: usize) -> Cohort {
        let patients = (0..n)
            .map(|i| PatientVolume {
                patient_id: format!("p{i:04}"),
                images: vec![],
                wg_masks: vec![],
                tz_masks: vec![],
            })
            .collect();
        Cohort {
            domain_tag: DomainTag::Target,
            b_values: vec![100],
            height: 8,
            width: 8,
            patients,
        }
    }

    fn ids(c: &Cohort) -> BTreeSet<String> {
        c.patients.iter().map(|p| p.patient_id.clone()).collect()
    }

    #[test]
    fn largest_remainder_rounding_533() {
        let split = split_ratios(&cohort_of(533), (3.0, 1.0, 1.5), 11).unwrap();
        assert_eq!(split.train.n_patients(), 291);
        assert_eq!(split.val.n_patients(), 97);
        assert_eq!(split.test.n_patients(), 145);
    }

    #[test]
    fn fixed_test_of_33_leaves_pool_of_115() {
        let split = split_fixed_test(&cohort_of(148), 33, 5).unwrap();
        assert_eq!(split.pool.n_patients(), 115);
        assert_eq!(split.test.n_patients(), 33);
        assert!(ids(&split.pool).is_disjoint(&ids(&split.test)));
    }

    #[test]
    fn subsets_are_nested_and_disjoint_from_test() {
        let split = split_fixed_test(&cohort_of(148), 33, 5).unwrap();
        let s8 = nested_subset(&split, 8).unwrap();
        let s30 = nested_subset(&split, 30).unwrap();
        assert!(ids(&s8).is_subset(&ids(&s30)));
        assert!(ids(&s30).is_disjoint(&ids(&split.test)));
        // Stable across calls.
        let again = split_fixed_test(&cohort_of(148), 33, 5).unwrap();
        assert_eq!(ids(&split.test), ids(&again.test));
    }

    #[test]
    fn oversized_requests_error() {
        assert!(split_fixed_test(&cohort_of(10), 11, 0).is_err());
        let split = split_fixed_test(&cohort_of(10), 4, 0).unwrap();
        assert!(nested_subset(&split, 7).is_err());
    }

    #[test]
    fn ratio_split_partitions_cohort() {
        let split = split_ratios(&cohort_of(37), (3.0, 1.0, 1.5), 2).unwrap();
        let mut all = ids(&split.train);
        all.extend(ids(&split.val));
        all.extend(ids(&split.test));
        assert_eq!(all.len(), 37);
        assert_eq!(
            split.train.n_patients() + split.val.n_patients() + split.test.n_patients(),
            37
        );
    }
}
