use std::str::FromStr;

use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::Dataset;
use crate::error::{usage, Error, Result};
use crate::metric::Metric;
use crate::scalar::Element;
use crate::util::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distribution {
    /// Independent coordinates in `[0, 1)`.
    Uniform,
    /// Independent standard normal coordinates.
    Gaussian,
    /// `n` points around this many standard-normal centers scaled by 4,
    /// each point a unit-variance gaussian offset from its center.
    Clustered(usize),
}

impl FromStr for Distribution {
    type Err = Error;

    /// `uniform`, `gaussian`, or `clustered:<c>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Distribution::Uniform),
            "gaussian" => Ok(Distribution::Gaussian),
            _ => {
                let c = s
                    .strip_prefix("clustered:")
                    .and_then(|c| c.parse::<usize>().ok())
                    .filter(|&c| c > 0)
                    .ok_or_else(|| usage(format!("unknown distribution {s:?}")))?;
                Ok(Distribution::Clustered(c))
            }
        }
    }
}

impl std::fmt::Display for Distribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Distribution::Uniform => f.write_str("uniform"),
            Distribution::Gaussian => f.write_str("gaussian"),
            Distribution::Clustered(c) => write!(f, "clustered:{c}"),
        }
    }
}

const CENTER_SCALE: f64 = 4.0;

fn cast<T: Float>(x: f64) -> T {
    T::from(x).expect("float cast")
}

/// Random dataset, deterministic for a fixed seed. Metric is L2.
pub fn gen_random_dataset<T: Element + Float>(
    n: usize,
    dims: usize,
    distribution: Distribution,
    seed: u64,
) -> Result<Dataset<T>> {
    if let Distribution::Clustered(_) = distribution {
        return gen_clustered_with_labels(n, dims, distribution, seed).map(|(ds, _)| ds);
    }
    if n == 0 || dims == 0 {
        return Err(usage(format!("need n >= 1 and dims >= 1 (n={n}, dims={dims})")));
    }
    let mut rng = rng_for(seed, 0);
    let data = (0..n * dims)
        .map(|_| match distribution {
            Distribution::Uniform => cast(rng.random::<f64>()),
            _ => cast(rng.sample::<f64, _>(StandardNormal)),
        })
        .collect();
    Dataset::new(data, dims, Metric::L2)
}

/// Clustered data together with each point's generating cluster.
/// Non-clustered distributions report every label as `0`.
pub fn gen_clustered_with_labels<T: Element + Float>(
    n: usize,
    dims: usize,
    distribution: Distribution,
    seed: u64,
) -> Result<(Dataset<T>, Vec<usize>)> {
    let Distribution::Clustered(c) = distribution else {
        return gen_random_dataset(n, dims, distribution, seed).map(|ds| (ds, vec![0; n]));
    };
    if n == 0 || dims == 0 || c == 0 {
        return Err(usage(format!("need n, dims, clusters >= 1 (n={n}, dims={dims}, c={c})")));
    }
    let mut rng = rng_for(seed, 0);
    let centers: Vec<f64> = (0..c * dims)
        .map(|_| CENTER_SCALE * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut data = Vec::with_capacity(n * dims);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.random_range(0..c);
        labels.push(label);
        for d in 0..dims {
            let x = centers[label * dims + d] + rng.sample::<f64, _>(StandardNormal);
            data.push(cast(x));
        }
    }
    Ok((Dataset::new(data, dims, Metric::L2)?, labels))
}

/// `copies` stacked copies of `dataset`. Copy `c >= 1` has coordinate
/// `(c - 1) mod dims` shifted so that its minimum sits exactly `epsilon`
/// above the maximum of everything generated before it on that axis.
pub fn synth_shifted_copies<T: Element + Float>(
    dataset: &Dataset<T>,
    copies: usize,
    epsilon: T,
) -> Result<Dataset<T>> {
    if !(epsilon > T::zero()) {
        return Err(usage("epsilon must be positive"));
    }
    if copies == 0 {
        return Err(usage("copies must be at least 1"));
    }
    let dims = dataset.dims();
    if dims == 0 || dataset.is_empty() {
        return Err(usage("shifted copies need a nonempty dataset with at least one dimension"));
    }
    let src = dataset.as_slice();
    let mut out: Vec<T> = Vec::with_capacity(src.len() * copies);
    out.extend_from_slice(src);
    for c in 1..copies {
        let axis = (c - 1) % dims;
        let axis_values = |data: &[T]| data.iter().skip(axis).step_by(dims).copied().collect::<Vec<T>>();
        let cum_max = axis_values(&out).into_iter().fold(T::neg_infinity(), T::max);
        let orig_min = axis_values(src).into_iter().fold(T::infinity(), T::min);
        let shift = (cum_max - orig_min) + epsilon;
        out.extend(src.iter().enumerate().map(|(i, &x)| if i % dims == axis { x + shift } else { x }));
    }
    Dataset::new(out, dims, dataset.metric())
}
