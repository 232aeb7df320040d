//! Seed-deterministic synthetic datasets for benchmarks and audits.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TaskKind};
use crate::domain::{LabelUniverse, LabeledExample, Target};
use crate::error::{Error, Result};
use crate::rng::seed_rng;

/// Generator families. The seed fully determines the output, bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SyntheticSpec {
    /// Balanced Gaussian blobs, one per class, means spread on a circle in
    /// the first two feature dimensions.
    GaussianClasses {
        n: usize,
        classes: usize,
        dim: usize,
        separation: f64,
        noise: f64,
        seed: u64,
    },
    /// `y = sum(x) + noise_scale * (1 + hetero * |x0|) * N(0,1)` with
    /// standard-normal features.
    LinearRegressionHeteroscedastic {
        n: usize,
        dim: usize,
        noise_scale: f64,
        hetero: f64,
        seed: u64,
    },
    /// Regression with a categorical `region` feature and region-dependent
    /// noise scale: a majority region plus deliberately noisier minorities.
    /// Region `r` is drawn with probability `region_weights[r]` and
    /// `y = sum(x) + noise_scales[r] * N(0,1)`. Each example is tagged
    /// `region=<r>`.
    RegionBiased {
        n: usize,
        dim: usize,
        region_weights: Vec<f64>,
        noise_scales: Vec<f64>,
        seed: u64,
    },
    /// Unlabeled 1-D stream: `N(pre_mean, pre_sd)` before `change_index`,
    /// `N(post_mean, post_sd)` from it onward. Row order is arrival order.
    ChangepointStream {
        length: usize,
        change_index: usize,
        pre_mean: f64,
        pre_sd: f64,
        post_mean: f64,
        post_sd: f64,
        seed: u64,
    },
}

fn normal(mean: f64, sd: f64) -> Result<Normal<f64>> {
    Normal::new(mean, sd).map_err(|_| Error::InvalidRate(sd))
}

/// Materializes a synthetic dataset from its spec.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    match spec {
        SyntheticSpec::GaussianClasses {
            n,
            classes,
            dim,
            separation,
            noise,
            seed,
        } => gaussian_classes(*n, *classes, *dim, *separation, *noise, *seed),
        SyntheticSpec::LinearRegressionHeteroscedastic {
            n,
            dim,
            noise_scale,
            hetero,
            seed,
        } => linear_hetero(*n, *dim, *noise_scale, *hetero, *seed),
        SyntheticSpec::RegionBiased {
            n,
            dim,
            region_weights,
            noise_scales,
            seed,
        } => region_biased(*n, *dim, region_weights, noise_scales, *seed),
        SyntheticSpec::ChangepointStream {
            length,
            change_index,
            pre_mean,
            pre_sd,
            post_mean,
            post_sd,
            seed,
        } => changepoint_stream(
            *length,
            *change_index,
            *pre_mean,
            *pre_sd,
            *post_mean,
            *post_sd,
            *seed,
        ),
    }
}

fn feature_names(dim: usize) -> Vec<String> {
    (0..dim).map(|j| format!("x{j}")).collect()
}

fn gaussian_classes(
    n: usize,
    classes: usize,
    dim: usize,
    separation: f64,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::SingleClass);
    }
    if dim == 0 {
        return Err(Error::EmptyInput("feature dimension"));
    }
    let mut universe = LabelUniverse::new();
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            universe.intern(&format!("c{c}"));
            let mut m = vec![0.0; dim];
            if dim == 1 {
                m[0] = separation * c as f64;
            } else {
                let angle = 2.0 * std::f64::consts::PI * c as f64 / classes as f64;
                m[0] = separation * angle.cos();
                m[1] = separation * angle.sin();
            }
            m
        })
        .collect();

    let mut rng = seed_rng(seed);
    let std_normal = normal(0.0, 1.0)?;
    let examples = (0..n)
        .map(|i| {
            let c = i % classes;
            let features: Vec<f64> = (0..dim)
                .map(|j| means[c][j] + noise * std_normal.sample(&mut rng))
                .collect();
            LabeledExample::new(i.to_string(), features, Some(Target::Class(crate::domain::LabelId(c))))
        })
        .collect();

    Ok(Dataset {
        feature_names: feature_names(dim),
        examples,
        task: TaskKind::Classification(universe),
        group_columns: vec![],
    })
}

fn linear_hetero(n: usize, dim: usize, noise_scale: f64, hetero: f64, seed: u64) -> Result<Dataset> {
    if dim == 0 {
        return Err(Error::EmptyInput("feature dimension"));
    }
    let mut rng = seed_rng(seed);
    let std_normal = normal(0.0, 1.0)?;
    let examples = (0..n)
        .map(|i| {
            let features: Vec<f64> = (0..dim).map(|_| std_normal.sample(&mut rng)).collect();
            let sd = noise_scale * (1.0 + hetero * features[0].abs());
            let y = features.iter().sum::<f64>() + sd * std_normal.sample(&mut rng);
            LabeledExample::new(i.to_string(), features, Some(Target::Real(y)))
        })
        .collect();
    Ok(Dataset {
        feature_names: feature_names(dim),
        examples,
        task: TaskKind::Regression,
        group_columns: vec![],
    })
}

fn region_biased(
    n: usize,
    dim: usize,
    region_weights: &[f64],
    noise_scales: &[f64],
    seed: u64,
) -> Result<Dataset> {
    if region_weights.is_empty() || region_weights.len() != noise_scales.len() {
        return Err(Error::LengthMismatch {
            left: region_weights.len(),
            right: noise_scales.len(),
        });
    }
    if region_weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
        return Err(Error::InvalidSplitFractions(format!("{region_weights:?}")));
    }
    if dim == 0 {
        return Err(Error::EmptyInput("feature dimension"));
    }
    let total: f64 = region_weights.iter().sum();
    let mut rng = seed_rng(seed);
    let std_normal = normal(0.0, 1.0)?;
    let examples = (0..n)
        .map(|i| {
            let u: f64 = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut region = region_weights.len() - 1;
            for (r, w) in region_weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    region = r;
                    break;
                }
            }
            let mut features = vec![region as f64];
            features.extend((0..dim).map(|_| std_normal.sample(&mut rng)));
            let y = features[1..].iter().sum::<f64>()
                + noise_scales[region] * std_normal.sample(&mut rng);
            LabeledExample::new(i.to_string(), features, Some(Target::Real(y)))
                .with_tags([format!("region={region}")])
        })
        .collect();

    let mut names = vec!["region".to_string()];
    names.extend(feature_names(dim));
    Ok(Dataset {
        feature_names: names,
        examples,
        task: TaskKind::Regression,
        group_columns: vec!["region".into()],
    })
}

fn changepoint_stream(
    length: usize,
    change_index: usize,
    pre_mean: f64,
    pre_sd: f64,
    post_mean: f64,
    post_sd: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = seed_rng(seed);
    let pre = normal(pre_mean, pre_sd)?;
    let post = normal(post_mean, post_sd)?;
    let examples = (0..length)
        .map(|i| {
            let x = if i < change_index {
                pre.sample(&mut rng)
            } else {
                post.sample(&mut rng)
            };
            LabeledExample::new(i.to_string(), vec![x], None)
        })
        .collect();
    Ok(Dataset {
        feature_names: vec!["x".into()],
        examples,
        task: TaskKind::Unlabeled,
        group_columns: vec![],
    })
}
