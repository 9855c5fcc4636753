use std::path::{Path, PathBuf};

use psvm::experiment::ExperimentKind;
use psvm::model::Method;
use serde::Deserialize;

/// Keys accepted in a `--config` TOML file. Every key is optional; command
/// line flags override the file, and the file overrides built-in defaults.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub experiment: Option<ExperimentKind>,
    pub method: Option<Method>,
    pub n_learn: Option<usize>,
    pub n_test: Option<usize>,
    pub eta: Option<f64>,
    #[serde(alias = "C")]
    pub c: Option<f64>,
    #[serde(alias = "C_tilde")]
    pub c_tilde: Option<f64>,
    pub sigma: Option<f64>,
    pub kernel: Option<KernelName>,
    pub noise_amplitude: Option<f64>,
    pub sweep: Option<Vec<f64>>,
    pub repetitions: Option<usize>,
    pub seed: Option<u64>,
    pub platt_folds: Option<usize>,
    pub kkt_tolerance: Option<f64>,
    pub max_iterations: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    Rbf,
    Linear,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_aliases_and_rejects_unknown_keys() {
        let cfg: FileConfig = toml::from_str(
            "experiment = \"noise_sweep\"\nC = 10.0\nC_tilde = 5.0\nsweep = [0.0, 0.1]\nkernel = \"linear\"",
        )
        .unwrap();
        assert_eq!(cfg.experiment, Some(ExperimentKind::NoiseSweep));
        assert_eq!(cfg.c, Some(10.0));
        assert_eq!(cfg.c_tilde, Some(5.0));
        assert_eq!(cfg.kernel, Some(KernelName::Linear));
        assert!(toml::from_str::<FileConfig>("colour = 1").is_err());
    }
}
