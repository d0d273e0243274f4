use crate::error::{Error, Result};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with the `n - 1` denominator; `0` for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sample_sd(values: &[f64]) -> f64 {
    sample_variance(values).sqrt()
}

/// Default batch count for a run of `replications` values: `floor(sqrt(R))`.
pub fn default_batch_count(replications: usize) -> usize {
    (replications as f64).sqrt().floor() as usize
}

/// Batch-means standard error of the grand mean.
///
/// Values are split into `num_batches` contiguous batches of equal size
/// (any trailing remainder is dropped); the result is the standard deviation
/// of the batch means over `sqrt(num_batches)`. It therefore depends on the
/// order of `values`, not only on their multiset.
pub fn batch_means_error(values: &[f64], num_batches: usize) -> Result<f64> {
    if num_batches < 2 {
        return Err(Error::InvalidArgument(format!(
            "batch means needs at least 2 batches, got {num_batches}"
        )));
    }
    if values.len() < 2 * num_batches {
        return Err(Error::InvalidArgument(format!(
            "batch means with {num_batches} batches needs at least {} values, got {}",
            2 * num_batches,
            values.len()
        )));
    }
    let size = values.len() / num_batches;
    let means: Vec<f64> = values
        .chunks_exact(size)
        .take(num_batches)
        .map(mean)
        .collect();
    Ok(sample_sd(&means) / (num_batches as f64).sqrt())
}
