use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Timing and threshold knobs for segmentation and cue attachment.
///
/// Loadable from TOML:
///
/// ```toml
/// [fusion]
/// gap_ms = 700
/// max_tokens = 12
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Pause that closes a segment.
    pub gap_ms: u64,
    pub max_tokens: usize,
    /// Plain-text characters per segment, tags excluded.
    pub max_chars: usize,
    /// Watermark slack past a segment's end before it is finalized.
    pub grace_ms: u64,
    pub tone_conf_min: f64,
    pub overlap_min_frac: f64,
    pub overlap_min_ms: u64,
    pub tone_repeat_suppress_ms: u64,
    pub gesture_dedup_ms: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            gap_ms: 700,
            max_tokens: 12,
            max_chars: 60,
            grace_ms: 250,
            tone_conf_min: 0.6,
            overlap_min_frac: 0.5,
            overlap_min_ms: 300,
            tone_repeat_suppress_ms: 5000,
            gesture_dedup_ms: 1000,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config value for {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    fusion: FusionConfig,
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("gap_ms", self.gap_ms > 0),
            ("max_tokens", self.max_tokens > 0),
            ("max_chars", self.max_chars > 0),
            ("grace_ms", self.grace_ms > 0),
            ("tone_conf_min", self.tone_conf_min > 0.0 && self.tone_conf_min <= 1.0),
            (
                "overlap_min_frac",
                self.overlap_min_frac > 0.0 && self.overlap_min_frac <= 1.0,
            ),
            ("overlap_min_ms", self.overlap_min_ms > 0),
            ("tone_repeat_suppress_ms", self.tone_repeat_suppress_ms > 0),
            ("gesture_dedup_ms", self.gesture_dedup_ms > 0),
        ];
        match positive.into_iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(ConfigError::Invalid(name)),
            None => Ok(()),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        file.fusion.validate()?;
        Ok(file.fusion)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = FusionConfig::from_toml_str("[fusion]\ngap_ms = 900\n").unwrap();
        assert_eq!(cfg.gap_ms, 900);
        assert_eq!(cfg.max_tokens, 12);
        assert_eq!(FusionConfig::from_toml_str("").unwrap(), FusionConfig::default());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(
            FusionConfig::from_toml_str("[fusion]\noverlap_min_frac = 1.5\n"),
            Err(ConfigError::Invalid("overlap_min_frac"))
        ));
        assert!(matches!(
            FusionConfig::from_toml_str("[fusion]\ngap_ms = 0\n"),
            Err(ConfigError::Invalid("gap_ms"))
        ));
        assert!(matches!(
            FusionConfig::from_toml_str("[fusion]\ngap_msec = 10\n"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn missing_file_names_path() {
        let err = FusionConfig::load(Path::new("/nonexistent/fusion.toml")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/fusion.toml"));
    }
}
