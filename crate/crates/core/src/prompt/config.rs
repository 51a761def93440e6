use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULTS: &str = include_str!("defaults.toml");

/// Number of workflow steps, Step 0 through Step 7.
pub const RULE_STEPS: usize = 8;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("prompt config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("prompt config: expected {RULE_STEPS} rule steps, found {0}")]
    RuleSteps(usize),
    #[error("prompt config: bracket_open must contain `{{id}}`")]
    BracketOpen,
    #[error("prompt config: max_chars must be positive")]
    MaxChars,
}

/// Static section texts and rendering knobs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub version: String,
    pub background: String,
    pub task_description: String,
    pub landmark_id_explanation: String,
    pub rule_preamble: String,
    /// Exactly [`RULE_STEPS`] entries, Step 0 first.
    pub rule_steps: Vec<String>,
    pub output_format: String,
    /// Opening marker; `{id}` is replaced by the RE id.
    pub bracket_open: String,
    pub bracket_close: String,
    /// Prompts longer than this are an error, never truncated.
    pub max_chars: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Overrides {
    version: Option<String>,
    background: Option<String>,
    task_description: Option<String>,
    landmark_id_explanation: Option<String>,
    rule_preamble: Option<String>,
    rule_steps: Option<Vec<String>>,
    output_format: Option<String>,
    bracket_open: Option<String>,
    bracket_close: Option<String>,
    max_chars: Option<usize>,
}

impl Default for PromptConfig {
    fn default() -> Self {
        static CELL: OnceLock<PromptConfig> = OnceLock::new();
        CELL.get_or_init(|| {
            let o: Overrides = toml::from_str(DEFAULTS).expect("bundled defaults parse");
            let config = PromptConfig {
                version: o.version.expect("default version"),
                background: o.background.expect("default background"),
                task_description: o.task_description.expect("default task_description"),
                landmark_id_explanation: o.landmark_id_explanation.expect("default landmark_id_explanation"),
                rule_preamble: o.rule_preamble.expect("default rule_preamble"),
                rule_steps: o.rule_steps.expect("default rule_steps"),
                output_format: o.output_format.expect("default output_format"),
                bracket_open: o.bracket_open.expect("default bracket_open"),
                bracket_close: o.bracket_close.expect("default bracket_close"),
                max_chars: o.max_chars.expect("default max_chars"),
            };
            config.check().expect("bundled defaults are valid");
            config
        })
        .clone()
    }
}

impl PromptConfig {
    /// The bundled defaults as TOML, suitable as a starting point for edits.
    pub fn defaults_toml() -> &'static str {
        DEFAULTS
    }

    /// Reads a TOML file; keys it leaves out keep their default values.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let o: Overrides = toml::from_str(text)?;
        let d = Self::default();
        let config = PromptConfig {
            version: o.version.unwrap_or(d.version),
            background: o.background.unwrap_or(d.background),
            task_description: o.task_description.unwrap_or(d.task_description),
            landmark_id_explanation: o.landmark_id_explanation.unwrap_or(d.landmark_id_explanation),
            rule_preamble: o.rule_preamble.unwrap_or(d.rule_preamble),
            rule_steps: o.rule_steps.unwrap_or(d.rule_steps),
            output_format: o.output_format.unwrap_or(d.output_format),
            bracket_open: o.bracket_open.unwrap_or(d.bracket_open),
            bracket_close: o.bracket_close.unwrap_or(d.bracket_close),
            max_chars: o.max_chars.unwrap_or(d.max_chars),
        };
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<(), ConfigError> {
        if self.rule_steps.len() != RULE_STEPS {
            return Err(ConfigError::RuleSteps(self.rule_steps.len()));
        }
        if !self.bracket_open.contains("{id}") {
            return Err(ConfigError::BracketOpen);
        }
        if self.max_chars == 0 {
            return Err(ConfigError::MaxChars);
        }
        Ok(())
    }

    pub fn open_bracket(&self, re_id: &str) -> String {
        self.bracket_open.replace("{id}", re_id)
    }

    pub fn annotation_rule(&self) -> String {
        let mut out = self.rule_preamble.trim().to_string();
        for (i, step) in self.rule_steps.iter().enumerate() {
            out.push_str(&format!("\nStep {i}: {}", step.trim()));
        }
        out
    }
}
