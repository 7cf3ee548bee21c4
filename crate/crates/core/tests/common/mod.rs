#![allow(dead_code)]

use lst_core::pipeline::{synthesize, RunConfig};
use lst_core::{random_sources, LabelDist, LatentSourceSpec, PriceSeries};

pub const PLANTED_SOURCES: usize = 8;
pub const PLANTED_DIM: usize = 180;

/// Eight random zero-mean increment patterns laid end to end, with a book
/// imbalance that leans toward the next change.
pub fn planted_spec(noise_sigma: f64) -> LatentSourceSpec {
    let mut spec = LatentSourceSpec::new(
        random_sources(PLANTED_SOURCES, PLANTED_DIM, 7),
        vec![1.0 / PLANTED_SOURCES as f64; PLANTED_SOURCES],
        vec![LabelDist::PointMass { value: 0.0 }; PLANTED_SOURCES],
        noise_sigma,
        1,
    );
    spec.start_price = 10_000.0;
    spec.book_signal = 1.0;
    spec
}

pub fn planted_series(noise_sigma: f64, config: &RunConfig) -> PriceSeries {
    synthesize(&planted_spec(noise_sigma), config)
        .unwrap()
        .series
}

pub fn is_non_increasing<T: PartialOrd>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

pub fn is_non_decreasing<T: PartialOrd>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0])
}
