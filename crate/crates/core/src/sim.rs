//! Synthetic data from the latent source model.
//!
//! A point is drawn by picking source `k` with probability `mix[k]`, adding
//! isotropic Gaussian noise to `sources[k]` and drawing the label from
//! `label_dists[k]`. The same sources can also be stitched end to end as
//! price-increment patterns to produce a price path with planted structure.

use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{PriceSeries, DEFAULT_INTERVAL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelDist {
    PointMass { value: f64 },
    Gaussian { mean: f64, variance: f64 },
}

impl LabelDist {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LabelDist::PointMass { value } => value,
            LabelDist::Gaussian { mean, variance } => {
                // validated: variance >= 0 and finite
                Normal::new(mean, variance.sqrt()).unwrap().sample(rng)
            }
        }
    }
}

fn default_start_price() -> f64 {
    1000.0
}

fn default_interval() -> f64 {
    DEFAULT_INTERVAL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSourceSpec {
    /// Number of sources; must equal `sources.len()`.
    pub k: usize,
    pub sources: Vec<Vec<f64>>,
    pub mix: Vec<f64>,
    pub label_dists: Vec<LabelDist>,
    pub noise_sigma: f64,
    pub seed: u64,
    /// First price of a generated price path.
    #[serde(default = "default_start_price")]
    pub start_price: f64,
    /// Grid spacing of a generated price path, seconds.
    #[serde(default = "default_interval")]
    pub interval: f64,
    /// How strongly a generated book imbalance leans toward the next price
    /// change. Zero leaves imbalances as pure noise.
    #[serde(default)]
    pub book_signal: f64,
}

impl LatentSourceSpec {
    /// Spec with default price-path settings.
    pub fn new(
        sources: Vec<Vec<f64>>,
        mix: Vec<f64>,
        label_dists: Vec<LabelDist>,
        noise_sigma: f64,
        seed: u64,
    ) -> Self {
        Self {
            k: sources.len(),
            sources,
            mix,
            label_dists,
            noise_sigma,
            seed,
            start_price: default_start_price(),
            interval: default_interval(),
            book_signal: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.sources.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.k == 0 || self.sources.len() != self.k {
            return bad(format!(
                "k = {} but {} sources given",
                self.k,
                self.sources.len()
            ));
        }
        if self.mix.len() != self.k || self.label_dists.len() != self.k {
            return bad(format!(
                "expected {} mix weights and label distributions, got {} and {}",
                self.k,
                self.mix.len(),
                self.label_dists.len()
            ));
        }
        let d = self.dim();
        if d == 0 || self.sources.iter().any(|s| s.len() != d) {
            return bad("sources must share a non-zero dimension".into());
        }
        if self.sources.iter().flatten().any(|v| !v.is_finite()) {
            return bad("source entries must be finite".into());
        }
        if self.mix.iter().any(|&m| !(m >= 0.0)) {
            return bad("mix probabilities must be non-negative".into());
        }
        let total: f64 = self.mix.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("mix sums to {total}, not 1"));
        }
        for dist in &self.label_dists {
            match *dist {
                LabelDist::PointMass { value } if !value.is_finite() => {
                    return bad("point-mass label must be finite".into())
                }
                LabelDist::Gaussian { mean, variance }
                    if !mean.is_finite() || !(variance >= 0.0) || !variance.is_finite() =>
                {
                    return bad("gaussian label needs a finite mean and variance >= 0".into())
                }
                _ => {}
            }
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        if !(self.interval > 0.0) {
            return bad(format!("interval {} must be positive", self.interval));
        }
        if !self.book_signal.is_finite() {
            return bad(format!("book_signal {} must be finite", self.book_signal));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn source_picker(&self) -> Result<WeightedIndex<f64>> {
        WeightedIndex::new(&self.mix).map_err(|e| Error::InvalidSpec(e.to_string()))
    }
}

/// `k` sources of `d` standard-normal entries, each shifted to zero mean.
/// Laid end to end as increments they give a price path without drift.
pub fn random_sources(k: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let mean = v.iter().sum::<f64>() / d.max(1) as f64;
            v.iter_mut().for_each(|x| *x -= mean);
            v
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub y: f64,
    /// Zero-based index of the generating source.
    pub source: usize,
}

/// Draws `n` labeled points; deterministic in `spec.seed`.
pub fn generate_labeled(spec: &LatentSourceSpec, n: usize) -> Result<Vec<LabeledPoint>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let picker = spec.source_picker()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let points = (0..n)
        .map(|_| {
            let k = picker.sample(&mut rng);
            let x = spec.sources[k]
                .iter()
                .map(|&s| {
                    let eps: f64 = rng.sample(StandardNormal);
                    s + spec.noise_sigma * eps
                })
                .collect();
            let y = spec.label_dists[k].sample(&mut rng);
            LabeledPoint { x, y, source: k }
        })
        .collect();
    Ok(points)
}

/// Where a source pattern was embedded: its increments start moving the price
/// away from bucket `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plant {
    pub start: usize,
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSeries {
    pub series: PriceSeries,
    pub plants: Vec<Plant>,
}

/// Builds a price path by laying source patterns end to end as increments.
///
/// Patterns are chosen by `mix`; each increment gets `noise_sigma` Gaussian
/// noise. The final pattern is cut short at the end of the path. Imbalances
/// are `tanh(book_signal * next_change + z)` with `z` standard normal, so
/// with `book_signal = 0` they carry no signal.
///
/// Pattern choice and noise come from separate streams of the same seed, so
/// changing `noise_sigma` leaves the planted layout untouched.
pub fn generate_price_series(
    spec: &LatentSourceSpec,
    duration: f64,
    seed: u64,
) -> Result<SyntheticSeries> {
    spec.validate()?;
    let d = spec.dim();
    let buckets = (duration / spec.interval).floor();
    if !(buckets >= d as f64) {
        return Err(Error::InvalidArgument(format!(
            "duration {duration}s is shorter than one {d}-bucket pattern at {}s spacing",
            spec.interval
        )));
    }
    let increments = buckets as usize;
    let picker = spec.source_picker()?;

    let mut layout_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);
    let mut book_rng = ChaCha8Rng::seed_from_u64(seed);
    book_rng.set_stream(2);

    let mut prices = Vec::with_capacity(increments + 1);
    let mut plants = Vec::with_capacity(increments / d + 1);
    let mut price = spec.start_price;
    prices.push(price);
    while prices.len() <= increments {
        let k = picker.sample(&mut layout_rng);
        plants.push(Plant {
            start: prices.len() - 1,
            source: k,
        });
        for &inc in &spec.sources[k] {
            if prices.len() > increments {
                break;
            }
            let eps: f64 = noise_rng.sample(StandardNormal);
            price += inc + spec.noise_sigma * eps;
            prices.push(price);
        }
    }
    let imbalances = (0..prices.len())
        .map(|t| {
            let lean = prices
                .get(t + 1)
                .map_or(0.0, |next| spec.book_signal * (next - prices[t]));
            (lean + book_rng.sample::<f64, _>(StandardNormal)).tanh()
        })
        .collect();

    Ok(SyntheticSeries {
        series: PriceSeries::new(0.0, spec.interval, prices, imbalances)?,
        plants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_source_spec(noise: f64) -> LatentSourceSpec {
        LatentSourceSpec::new(
            vec![vec![1.0, 0.0, -1.0], vec![-1.0, 2.0, 0.5]],
            vec![0.3, 0.7],
            vec![
                LabelDist::PointMass { value: 1.0 },
                LabelDist::PointMass { value: -2.0 },
            ],
            noise,
            11,
        )
    }

    #[test]
    fn zero_noise_reproduces_sources() {
        let spec = two_source_spec(0.0);
        for p in generate_labeled(&spec, 200).unwrap() {
            assert_eq!(p.x, spec.sources[p.source]);
            let expected = if p.source == 0 { 1.0 } else { -2.0 };
            assert_eq!(p.y, expected);
        }
    }

    #[test]
    fn single_source_always_chosen() {
        let spec = LatentSourceSpec::new(
            vec![vec![0.5; 4]],
            vec![1.0],
            vec![LabelDist::Gaussian {
                mean: 0.0,
                variance: 1.0,
            }],
            1.0,
            3,
        );
        assert!(generate_labeled(&spec, 500)
            .unwrap()
            .iter()
            .all(|p| p.source == 0));
    }

    #[test]
    fn mixture_frequency() {
        let points = generate_labeled(&two_source_spec(1.0), 10_000).unwrap();
        let freq = points.iter().filter(|p| p.source == 0).count() as f64 / 10_000.0;
        assert!((freq - 0.3).abs() <= 0.02, "freq {freq}");
    }

    #[test]
    fn random_sources_are_centered() {
        let sources = random_sources(4, 50, 9);
        assert_eq!(sources.len(), 4);
        for s in &sources {
            assert_eq!(s.len(), 50);
            assert!(s.iter().sum::<f64>().abs() < 1e-9);
        }
        assert_eq!(sources, random_sources(4, 50, 9));
        assert_ne!(sources, random_sources(4, 50, 10));
    }

    #[test]
    fn book_signal_leans_toward_next_change() {
        let mut spec = LatentSourceSpec::new(
            random_sources(3, 40, 1),
            vec![1.0 / 3.0; 3],
            vec![LabelDist::PointMass { value: 0.0 }; 3],
            0.2,
            5,
        );
        let quiet = generate_price_series(&spec, 40_000.0, 2).unwrap().series;
        spec.book_signal = 2.0;
        let leaning = generate_price_series(&spec, 40_000.0, 2).unwrap().series;
        assert_eq!(quiet.prices, leaning.prices);
        let agreement = |s: &PriceSeries| {
            let n = s.len() - 1;
            (0..n)
                .filter(|&t| (s.prices[t + 1] - s.prices[t]) * s.imbalances[t] > 0.0)
                .count() as f64
                / n as f64
        };
        let (a0, a1) = (agreement(&quiet), agreement(&leaning));
        assert!((a0 - 0.5).abs() < 0.05, "{a0}");
        assert!(a1 > 0.75, "{a1}");
        assert!(leaning.imbalances.iter().all(|r| r.abs() < 1.0));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = two_source_spec(0.0);
        spec.mix = vec![0.5, 0.6];
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
        let mut spec = two_source_spec(0.0);
        spec.sources[1].pop();
        assert!(spec.validate().is_err());
        let mut spec = two_source_spec(0.0);
        spec.k = 3;
        assert!(spec.validate().is_err());
        let mut spec = two_source_spec(0.0);
        spec.noise_sigma = -1.0;
        assert!(spec.validate().is_err());
        assert!(generate_labeled(&two_source_spec(0.0), 0).is_err());
    }

    #[test]
    fn constant_increment_path_is_linear() {
        let mut spec = LatentSourceSpec::new(
            vec![vec![0.25; 6]],
            vec![1.0],
            vec![LabelDist::PointMass { value: 0.0 }],
            0.0,
            0,
        );
        spec.start_price = 50.0;
        let out = generate_price_series(&spec, 600.0, 9).unwrap();
        assert_eq!(out.series.len(), 61);
        for (i, p) in out.series.prices.iter().enumerate() {
            assert!((p - (50.0 + 0.25 * i as f64)).abs() < 1e-9);
        }
    }

    #[test]
    fn plant_count_matches_embedding_loop() {
        let spec = two_source_spec(0.5);
        for &duration in &[30.0, 95.0, 1000.0, 12_345.0] {
            let out = generate_price_series(&spec, duration, 4).unwrap();
            let buckets = (duration / spec.interval).floor() as usize;
            // the loop embeds one pattern per started block of 3 increments
            let mut expected = 0;
            let mut filled = 0;
            while filled < buckets {
                expected += 1;
                filled += spec.dim();
            }
            assert_eq!(out.plants.len(), expected);
            let ratio = duration / (spec.interval * spec.dim() as f64);
            assert!((out.plants.len() as f64 - ratio).abs() <= 1.0);
            assert_eq!(out.series.len(), buckets + 1);
        }
    }

    #[test]
    fn too_short_duration() {
        assert!(generate_price_series(&two_source_spec(0.0), 20.0, 1).is_err());
    }

    #[test]
    fn price_path_deterministic_and_noise_independent_layout() {
        let a = generate_price_series(&two_source_spec(0.3), 5000.0, 8).unwrap();
        let b = generate_price_series(&two_source_spec(0.3), 5000.0, 8).unwrap();
        assert_eq!(a, b);
        let quiet = generate_price_series(&two_source_spec(0.0), 5000.0, 8).unwrap();
        assert_eq!(a.plants, quiet.plants);
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = two_source_spec(0.1);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"kind\":\"point_mass\""));
        let back: LatentSourceSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
