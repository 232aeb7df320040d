//! Conditional validity: Mondrian category-conditional calibration and
//! iterative feedback-adjusted scoring.
//!
//! Marginal validity holds over the whole population but can hide severe
//! under-coverage inside subgroups. [`MondrianPredictor`] restores the
//! guarantee within each category of a fixed taxonomy by calibrating per
//! category; [`ifacm_fit`] approximates conditional validity by resizing
//! prediction sets per region through score adjustments. Both trade
//! predictive efficiency for conditional coverage — there is no free lunch.

mod ifacm;
mod mondrian;
mod taxonomy;

pub use ifacm::{ifacm_fit, IfacmConfig, IfacmState, IterationRecord};
pub use mondrian::{MondrianPValue, MondrianPredictor, DEFAULT_MIN_CATEGORY_SIZE};
pub use taxonomy::{
    CategorySpec, Comparator, PredicateSpec, PredicateValue, Taxonomy, TaxonomySpec,
    REST_CATEGORY, TARGET_FIELD,
};
