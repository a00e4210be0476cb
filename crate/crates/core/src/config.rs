use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::composer::{Layout, OutputFormat, DEFAULT_MAX_ROTATION};
use crate::error::{Error, Result};
use crate::selection::SelectionPolicy;
use crate::Count;

pub const DEFAULT_GENERATION_LIMIT: u64 = 1_000_000;

/// Everything that determines a generated dataset. Two runs with equal
/// configs and equal source pixels produce identical outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub input_root: Option<PathBuf>,
    pub output_root: Option<PathBuf>,
    pub layout: Layout,
    pub policy: SelectionPolicy,
    pub seed: Option<u64>,
    pub max_rotation_degrees: f64,
    pub image_format: OutputFormat,
    pub override_target: Option<Count>,
    pub per_class_cap: Option<Count>,
    pub disjoint: bool,
    pub generation_limit: u64,
    /// Plan every class to its own count instead of the common target.
    pub unbalanced: bool,
    pub similarity_cache: Option<PathBuf>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            input_root: None,
            output_root: None,
            layout: Layout::default(),
            policy: SelectionPolicy::default(),
            seed: None,
            max_rotation_degrees: DEFAULT_MAX_ROTATION,
            image_format: OutputFormat::Png,
            override_target: None,
            per_class_cap: None,
            disjoint: false,
            generation_limit: DEFAULT_GENERATION_LIMIT,
            unbalanced: false,
            similarity_cache: None,
        }
    }
}

impl GenerationConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn k(&self) -> usize {
        self.layout.k()
    }

    pub fn with_repetition(&self) -> bool {
        self.policy.with_repetition
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::InvalidConfig("a seed is required; randomness is never implicit".into()))
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.policy.validate(self.k())?;
        if !(self.max_rotation_degrees.is_finite() && self.max_rotation_degrees >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "max_rotation_degrees must be finite and >= 0, got {}",
                self.max_rotation_degrees
            )));
        }
        if self.disjoint && self.policy.kind.needs_similarity() {
            return Err(Error::InvalidConfig("disjoint grouping only supports the class_based policy".into()));
        }
        if self.disjoint && self.with_repetition() {
            return Err(Error::InvalidConfig("disjoint grouping excludes intra-composite repetition".into()));
        }
        if self.unbalanced && self.override_target.is_some() {
            return Err(Error::InvalidConfig("override_target applies to balanced plans only".into()));
        }
        if !self.unbalanced && self.per_class_cap.is_some() {
            return Err(Error::InvalidConfig("per_class_cap applies to unbalanced plans only".into()));
        }
        if self.override_target == Some(0) {
            return Err(Error::InvalidConfig("override_target must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let c: GenerationConfig = serde_json::from_str(r#"{"seed": 7, "layout": {"rows": 2, "cols": 2, "cell_width": 32, "cell_height": 32}}"#).unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.k(), 4);
        assert_eq!(c.max_rotation_degrees, 3.0);
        assert_eq!(c.generation_limit, 1_000_000);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<GenerationConfig>(r#"{"sede": 7}"#).is_err());
    }

    #[test]
    fn seed_is_required() {
        assert!(GenerationConfig::default().require_seed().is_err());
    }

    #[test]
    fn negative_rotation_rejected() {
        let c = GenerationConfig { max_rotation_degrees: -1.0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
