use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::combiner::{predict_dp, CombinerWeights};
use super::features::{assemble_features, FeatureCache, Features};
use super::kernel::KernelChoice;
use crate::error::{Error, Result};
use crate::market_data::PriceSeries;
use crate::pattern_bank::{PatternBank, WINDOW_LENGTHS};

/// Three banks, the kernel they are scored with and the combiner weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub banks: Vec<PatternBank>,
    pub kernel: KernelChoice,
    pub weights: CombinerWeights,
    pub ridge_fallback: bool,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    kernel: KernelChoice,
    weights: CombinerWeights,
    #[serde(default)]
    ridge_fallback: bool,
    /// Bank files, relative to the model file's directory unless absolute.
    banks: Vec<PathBuf>,
}

impl PredictorModel {
    pub fn new(
        mut banks: Vec<PatternBank>,
        kernel: KernelChoice,
        weights: CombinerWeights,
    ) -> Result<Self> {
        kernel.validate()?;
        if banks.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "expected 3 pattern banks, got {}",
                banks.len()
            )));
        }
        if !weights.is_finite() {
            return Err(Error::InvalidArgument(
                "combiner weights must be finite".into(),
            ));
        }
        for bank in &mut banks {
            bank.set_kernel_c(kernel.c);
        }
        Ok(Self {
            banks,
            kernel,
            weights,
            ridge_fallback: false,
        })
    }

    /// True when the banks have the standard 180/360/720 window lengths.
    pub fn has_standard_windows(&self) -> bool {
        self.banks
            .iter()
            .map(PatternBank::window_length)
            .eq(WINDOW_LENGTHS)
    }

    pub fn features(&self, t: usize, series: &PriceSeries) -> Result<Features> {
        assemble_features(t, series, &self.banks, self.kernel)
    }

    pub fn predict(&self, t: usize, series: &PriceSeries) -> Result<f64> {
        Ok(predict_dp(&self.features(t, series)?, &self.weights))
    }

    /// Predicted price change for each decision bucket in `range`.
    pub fn predict_range(
        &self,
        series: &PriceSeries,
        range: std::ops::Range<usize>,
    ) -> Result<Vec<f64>> {
        let cache = FeatureCache::build(series, &self.banks, self.kernel.variant, range)?;
        Ok(cache
            .features(self.kernel.c)
            .iter()
            .map(|f| predict_dp(f, &self.weights))
            .collect())
    }

    /// Writes the model JSON, pointing at `bank_paths` (stored as given).
    /// The banks themselves are not written.
    pub fn save(&self, path: &Path, bank_paths: &[PathBuf]) -> Result<()> {
        let file = ModelFile {
            kernel: self.kernel,
            weights: self.weights,
            ridge_fallback: self.ridge_fallback,
            banks: bank_paths.to_vec(),
        };
        let text = serde_json::to_string_pretty(&file).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let banks = file
            .banks
            .iter()
            .map(|p| {
                PatternBank::load(&if p.is_absolute() {
                    p.clone()
                } else {
                    base.join(p)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut model = Self::new(banks, file.kernel, file.weights)?;
        model.ridge_fallback = file.ridge_fallback;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern_bank::BankEntry;

    fn bank(m: usize) -> PatternBank {
        PatternBank::new(
            m,
            vec![BankEntry {
                vector: (0..m).map(|i| (i * i) as f64).collect(),
                label: 0.5,
                population: 3,
            }],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn save_and_load_resolves_relative_banks() {
        let dir = tempfile::tempdir().unwrap();
        let banks = vec![bank(3), bank(4), bank(5)];
        let mut paths = Vec::new();
        for (i, b) in banks.iter().enumerate() {
            let name = if i == 1 {
                format!("bank_{i}.bin")
            } else {
                format!("bank_{i}.json")
            };
            b.save(&dir.path().join(&name)).unwrap();
            paths.push(PathBuf::from(name));
        }
        let model = PredictorModel::new(
            banks,
            KernelChoice::exp_similarity(4.0),
            CombinerWeights::from_array([0.1, 0.2, 0.3, 0.4, 0.5]),
        )
        .unwrap();
        let path = dir.path().join("model.json");
        model.save(&path, &paths).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"variant\": \"exp_similarity\""));
        let loaded = PredictorModel::load(&path).unwrap();
        assert_eq!(loaded, model);
        assert!(loaded.banks.iter().all(|b| b.kernel_c() == 4.0));
        assert!(!loaded.has_standard_windows());
    }

    #[test]
    fn missing_bank_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        fs::write(
            &path,
            r#"{"kernel":{"variant":"gaussian_l2","c":1.0},"weights":{"w0":0,"w1":0,"w2":0,"w3":0,"w4":0},"banks":["nope.json","a","b"]}"#,
        )
        .unwrap();
        let err = PredictorModel::load(&path).unwrap_err().to_string();
        assert!(err.contains("nope.json"), "{err}");
    }
}
