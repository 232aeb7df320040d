//! Conditional-validity behavior on the region-biased fixture: plain ICP
//! under-covers the noisy minority regions, Mondrian restores per-region
//! coverage, the feedback-adjusted variant narrows the gap.

mod common;

use confaudit_core::conditional::{
    ifacm_fit, IfacmConfig, MondrianPredictor, Taxonomy, TaxonomySpec,
};
use confaudit_core::data::Dataset;
use confaudit_core::domain::ConfidenceLevel;
use confaudit_core::icp::{calibrate, predict_interval, Smoothing};
use confaudit_core::rng::{draw_tau, seed_rng};
use confaudit_core::scorers::{KnnRegressor, ResidualRegressionScorer};

type Scorer = ResidualRegressionScorer<KnnRegressor>;

fn fit_scorer(train: &Dataset) -> Scorer {
    ResidualRegressionScorer::fit_knn(&train.examples, 5, false).unwrap()
}

fn per_region_coverage<F>(test: &Dataset, n_regions: usize, mut covers: F) -> Vec<f64>
where
    F: FnMut(&confaudit_core::LabeledExample) -> bool,
{
    let mut hits = vec![0usize; n_regions];
    let mut totals = vec![0usize; n_regions];
    for ex in &test.examples {
        let region = ex.features[0] as usize;
        totals[region] += 1;
        hits[region] += covers(ex) as usize;
    }
    hits.iter()
        .zip(&totals)
        .map(|(&h, &t)| h as f64 / t as f64)
        .collect()
}

#[test]
fn mondrian_restores_minority_coverage_that_icp_loses() {
    let dataset = common::region_biased(9000, &[0.7, 0.15, 0.15], &[1.0, 3.0, 3.0], 11);
    let splits = common::four_way_split(&dataset, 0.25, 0.35, None, 3);
    let taxonomy = common::region_taxonomy(&dataset, 3);
    let scorer = fit_scorer(&splits.train);
    let conf = ConfidenceLevel::new(0.8).unwrap();

    let cal = calibrate(&scorer, &splits.calibration.examples).unwrap();
    let icp_cov = per_region_coverage(&splits.test, 3, |ex| {
        predict_interval(&cal, &scorer, ex, conf)
            .unwrap()
            .contains(ex.real().unwrap())
    });
    // Plain ICP: majority over-covered, noisy minorities deeply under.
    assert!(icp_cov[0] > 0.8, "majority coverage {icp_cov:?}");
    assert!(icp_cov[1] < 0.7, "minority coverage {icp_cov:?}");
    assert!(icp_cov[2] < 0.7, "minority coverage {icp_cov:?}");

    let mondrian = MondrianPredictor::fit(
        &scorer,
        taxonomy.clone(),
        &splits.calibration.examples,
        20,
    )
    .unwrap();
    // Each region has plenty of calibration data, so no pooling.
    for r in 0..3 {
        assert!(mondrian.category_calibration(r).len() >= 200);
    }
    let mondrian_cov = per_region_coverage(&splits.test, 3, |ex| {
        mondrian
            .predict_interval(&scorer, ex, conf)
            .unwrap()
            .contains(ex.real().unwrap())
    });
    for (r, &c) in mondrian_cov.iter().enumerate() {
        assert!(
            (c - 0.8).abs() < 0.05,
            "region {r} coverage {c} should sit near 0.8: {mondrian_cov:?}"
        );
    }
}

#[test]
fn mondrian_single_category_is_bit_identical_to_icp() {
    let dataset = common::region_biased(1200, &[0.6, 0.4], &[1.0, 2.0], 17);
    let splits = common::four_way_split(&dataset, 0.4, 0.3, None, 9);
    let scorer = fit_scorer(&splits.train);
    let taxonomy =
        Taxonomy::compile(&TaxonomySpec::single_category(), &dataset.feature_names, None)
            .unwrap();

    let cal = calibrate(&scorer, &splits.calibration.examples).unwrap();
    let mondrian =
        MondrianPredictor::fit(&scorer, taxonomy, &splits.calibration.examples, 20).unwrap();

    for (i, ex) in splits.test.examples.iter().enumerate().take(100) {
        let y = ex.real().unwrap();
        // Shared tau stream: one draw per call on each side.
        let mut rng_a = seed_rng(7000 + i as u64);
        let mut rng_b = seed_rng(7000 + i as u64);
        use confaudit_core::scorers::ExampleScorer;
        let score = scorer.score_example(ex).unwrap().value();
        let tau_a = draw_tau(&mut rng_a);
        let p_icp = cal
            .p_value(score, Smoothing::Smoothed { tau: tau_a })
            .unwrap();
        let tau_b = draw_tau(&mut rng_b);
        let p_mondrian = mondrian
            .p_value(
                &scorer,
                ex,
                &confaudit_core::Target::Real(y),
                Smoothing::Smoothed { tau: tau_b },
            )
            .unwrap();
        assert_eq!(p_icp.to_bits(), p_mondrian.p.to_bits());
        assert!(!p_mondrian.pooled_fallback);
    }
}

#[test]
fn ifacm_beats_icp_on_max_region_deviation() {
    let dataset = common::region_biased(10_000, &[0.7, 0.15, 0.15], &[1.0, 3.0, 3.0], 23);
    let splits = common::four_way_split(&dataset, 0.25, 0.3, Some(0.2), 5);
    let taxonomy = common::region_taxonomy(&dataset, 3);
    let scorer = fit_scorer(&splits.train);
    let conf = ConfidenceLevel::new(0.8).unwrap();

    let cal = calibrate(&scorer, &splits.calibration.examples).unwrap();
    let icp_cov = per_region_coverage(&splits.test, 3, |ex| {
        predict_interval(&cal, &scorer, ex, conf)
            .unwrap()
            .contains(ex.real().unwrap())
    });
    let icp_dev = icp_cov
        .iter()
        .map(|c| (c - 0.8).abs())
        .fold(0.0f64, f64::max);

    let state = ifacm_fit(
        &scorer,
        taxonomy,
        &splits.calibration.examples,
        &splits.tuning.examples,
        conf,
        &IfacmConfig::default(),
    )
    .unwrap();
    let ifacm_cov = per_region_coverage(&splits.test, 3, |ex| {
        state
            .predict_interval(&scorer, ex, conf)
            .unwrap()
            .contains(ex.real().unwrap())
    });
    let ifacm_dev = ifacm_cov
        .iter()
        .map(|c| (c - 0.8).abs())
        .fold(0.0f64, f64::max);

    assert!(
        ifacm_dev <= icp_dev,
        "adjustment should not hurt: ifacm {ifacm_cov:?} vs icp {icp_cov:?}"
    );
    // Two-region benchmark bound: on a fitted state every region must sit
    // within a few points of the target.
    assert!(
        ifacm_dev < 0.05,
        "ifacm max deviation {ifacm_dev} too large: {ifacm_cov:?}"
    );
}

#[test]
fn ifacm_two_region_benchmark_within_three_points() {
    let dataset = common::region_biased(12_000, &[0.5, 0.5], &[1.0, 3.0], 29);
    let splits = common::four_way_split(&dataset, 0.25, 0.25, Some(0.25), 13);
    let taxonomy = common::region_taxonomy(&dataset, 2);
    let scorer = fit_scorer(&splits.train);
    let conf = ConfidenceLevel::new(0.8).unwrap();

    let state = ifacm_fit(
        &scorer,
        taxonomy,
        &splits.calibration.examples,
        &splits.tuning.examples,
        conf,
        &IfacmConfig::default(),
    )
    .unwrap();
    let cov = per_region_coverage(&splits.test, 2, |ex| {
        state
            .predict_interval(&scorer, ex, conf)
            .unwrap()
            .contains(ex.real().unwrap())
    });
    for (r, &c) in cov.iter().enumerate() {
        assert!(
            (c - 0.8).abs() <= 0.03,
            "region {r} coverage {c} outside +/-3 points: {cov:?}"
        );
    }
}

#[test]
fn no_free_lunch_is_visible_in_inefficiency() {
    // Conditional fixes resize prediction sets; on this fixture the
    // minority intervals must widen relative to plain ICP.
    let dataset = common::region_biased(6000, &[0.7, 0.3], &[1.0, 3.0], 31);
    let splits = common::four_way_split(&dataset, 0.25, 0.35, None, 8);
    let taxonomy = common::region_taxonomy(&dataset, 2);
    let scorer = fit_scorer(&splits.train);
    let conf = ConfidenceLevel::new(0.8).unwrap();

    let cal = calibrate(&scorer, &splits.calibration.examples).unwrap();
    let mondrian =
        MondrianPredictor::fit(&scorer, taxonomy, &splits.calibration.examples, 20).unwrap();

    let mut icp_width = 0.0;
    let mut mondrian_minority_width = 0.0;
    let mut icp_minority_width = 0.0;
    let mut n_minority = 0usize;
    for ex in &splits.test.examples {
        let iv = predict_interval(&cal, &scorer, ex, conf).unwrap();
        icp_width += iv.width().unwrap();
        if ex.features[0] as usize == 1 {
            n_minority += 1;
            icp_minority_width += iv.width().unwrap();
            mondrian_minority_width += mondrian
                .predict_interval(&scorer, ex, conf)
                .unwrap()
                .width()
                .unwrap();
        }
    }
    assert!(n_minority > 100);
    let icp_min = icp_minority_width / n_minority as f64;
    let mondrian_min = mondrian_minority_width / n_minority as f64;
    assert!(
        mondrian_min > icp_min,
        "minority intervals should widen: mondrian {mondrian_min} vs icp {icp_min} (marginal icp {})",
        icp_width / splits.test.len() as f64
    );
}
