//! Lilliefors normality test: Kolmogorov-Smirnov distance to the normal law
//! with mean and variance estimated from the sample, p-value from a
//! Monte-Carlo null distribution.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand_distr::{Distribution, StandardNormal};

use crate::error::{param, Result};
use crate::rng::{substream, Stream};
use crate::stats::{mean, normal_cdf, std_dev};

pub const NULL_REPLICATES: usize = 2000;
const NULL_SEED: u64 = 0x5EED_1111;
pub const MIN_SAMPLE: usize = 8;

/// KS distance between the standardized sample's ECDF and Φ.
/// `None` when the sample has zero spread.
pub fn lilliefors_statistic(sample: &[f64]) -> Option<f64> {
    let m = mean(sample);
    let s = std_dev(sample);
    if !(s > 0.0) || !s.is_finite() {
        return None;
    }
    let mut z: Vec<f64> = sample.iter().map(|x| (x - m) / s).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    let d = z.iter().enumerate().fold(0.0f64, |d, (i, &v)| {
        let f = normal_cdf(v);
        let plus = (i as f64 + 1.0) / n - f;
        let minus = f - i as f64 / n;
        d.max(plus).max(minus)
    });
    Some(d)
}

fn null_distribution(m: usize) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(d) = cache.lock().unwrap().get(&m) {
        return d.clone();
    }
    let mut rng = substream(NULL_SEED ^ m as u64, Stream::Lilliefors);
    let mut buf = vec![0.0; m];
    let mut stats: Vec<f64> = (0..NULL_REPLICATES)
        .map(|_| {
            for v in buf.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            lilliefors_statistic(&buf).unwrap_or(0.0)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let stats = Arc::new(stats);
    cache.lock().unwrap().insert(m, stats.clone());
    stats
}

/// Monte-Carlo p-value `(1 + #{D_null ≥ D}) / (R + 1)`; zero-variance samples get 0.
pub fn lilliefors_pvalue(sample: &[f64]) -> Result<f64> {
    if sample.len() < MIN_SAMPLE {
        return param(format!(
            "Lilliefors test needs at least {MIN_SAMPLE} observations, got {}",
            sample.len()
        ));
    }
    let Some(d) = lilliefors_statistic(sample) else {
        return Ok(0.0);
    };
    let null = null_distribution(sample.len());
    let below = null.partition_point(|&v| v < d);
    let exceed = null.len() - below;
    Ok((1 + exceed) as f64 / (null.len() + 1) as f64)
}
