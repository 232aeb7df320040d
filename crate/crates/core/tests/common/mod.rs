//! Shared fixtures for the integration suites.
#![allow(dead_code)] // each suite uses a subset

use confaudit_core::conditional::{Taxonomy, TaxonomySpec};
use confaudit_core::data::{self, split, Dataset, Splits, SyntheticSpec};
use confaudit_core::icp::SplitConfig;

/// Regression dataset with a majority region and noisier minority regions.
pub fn region_biased(n: usize, weights: &[f64], noises: &[f64], seed: u64) -> Dataset {
    data::generate(&SyntheticSpec::RegionBiased {
        n,
        dim: 2,
        region_weights: weights.to_vec(),
        noise_scales: noises.to_vec(),
        seed,
    })
    .unwrap()
}

/// One taxonomy category per region value `0..k`.
pub fn region_taxonomy(dataset: &Dataset, k: usize) -> Taxonomy {
    let spec = TaxonomySpec {
        categories: (0..k)
            .map(|r| {
                serde_json::from_value(serde_json::json!({
                    "name": format!("region{r}"),
                    "all": [{"field": "region", "op": "==", "value": r as f64}]
                }))
                .unwrap()
            })
            .collect(),
    };
    Taxonomy::compile(&spec, &dataset.feature_names, dataset.universe()).unwrap()
}

pub fn four_way_split(
    dataset: &Dataset,
    train: f64,
    cal: f64,
    tune: Option<f64>,
    seed: u64,
) -> Splits {
    split(
        dataset,
        &SplitConfig {
            train_fraction: train,
            calibration_fraction: cal,
            tuning_fraction: tune,
            seed,
        },
    )
    .unwrap()
}
