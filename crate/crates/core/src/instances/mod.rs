//! Instance generation: random synthetic instances and semi-synthetic
//! instances built from rating data.

mod random;
mod ratings;

pub use random::{random_instance, RandomInstanceConfig, REJECTION_BUDGET};
pub use ratings::{
    build_semi_synthetic, load_ratings, LoadReport, MalformedRow, RatingRecord, RatingsConfig,
    RatingsEnvironment, RatingsTable, SemiSynthetic, SemiSyntheticConfig,
};
