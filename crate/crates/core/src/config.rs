//! Single-file experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisConfig;
use crate::error::{Error, Result};
use crate::population::PopulationConfig;
use crate::sweep::SweepGrid;
use crate::trainer::Recipe;

/// Every section is optional and falls back to its defaults; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub population: PopulationConfig,
    pub trainer: Recipe,
    pub sweep: SweepGrid,
    pub analysis: AnalysisConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        self.trainer.validate()?;
        self.sweep.validate()?;
        self.analysis.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn sections_override_defaults() {
        let c = ExperimentConfig::parse(
            r#"
[population]
train_size = 200
specs = [{ name = "hard", p0_range = [0.0, 0.0625], weight = 1.0 }]

[trainer]
lr_rule = "linear"
entropy_coef = 0.0

[sweep]
mode = "fix_B"
fixed_B = 8192
n_values = [8, 16]

[analysis]
window = 3
"#,
        )
        .unwrap();
        assert_eq!(c.population.train_size, 200);
        assert_eq!(c.population.specs[0].p0_range, [0.0, 0.0625]);
        assert_eq!(c.sweep.fixed_batch, Some(8192));
        assert_eq!(c.analysis.window, 3);
        assert_eq!(c.trainer.entropy_coef, 0.0);
    }

    #[test]
    fn unknown_key_is_a_validation_error() {
        let e = ExperimentConfig::parse("[trainer]\nlearning_rate = 1.0\n").unwrap_err();
        assert!(e.is_validation());
        assert!(e.to_string().contains("learning_rate"), "{e}");
    }

    #[test]
    fn invalid_value_names_the_key() {
        let e = ExperimentConfig::parse("[population]\ntrain_size = 0\n").unwrap_err();
        assert!(e.is_validation());
        assert!(e.to_string().contains("population.train_size"), "{e}");
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap(), c);
    }
}
