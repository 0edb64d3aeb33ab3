//! Flat `key = value` configuration files.
//!
//! Keys are the pipeline field names (`n_questions`, `max_chars`, ...). Blank
//! lines and lines starting with `#` are ignored. Command-line flags use the
//! same names with dashes and are applied after the file, so a flag always
//! wins over the file, and the file over built-in defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use selfqa_core::gateway::BackendKind;
use selfqa_core::{GenerationMode, PipelineConfig};

pub const KEYS: &[&str] = &[
    "mode",
    "n_questions",
    "max_chars",
    "overlap",
    "backend",
    "endpoint",
    "api_key_env",
    "model_id",
    "temperature",
    "max_tokens",
    "max_retries",
    "backoff_ms",
    "rate_limit",
    "timeout_secs",
    "concurrency",
    "rules",
    "templates",
    "output",
    "rejected_output",
    "seed",
    "corruption_rate",
    "timestamps",
    "domain",
    "normalize_whitespace",
    "strip_control",
];

pub fn parse_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
        let key = key.trim().to_string();
        if key == "api_key" || key.contains("secret") || (key.contains("token") && key != "max_tokens") {
            bail!(
                "line {}: `{key}` looks like a credential; put it in the environment \
                 and name the variable with api_key_env",
                i + 1
            );
        }
        if !KEYS.contains(&key.as_str()) {
            bail!("line {}: unknown key `{key}`", i + 1);
        }
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        entries.push((key, value.to_string()));
    }
    Ok(entries)
}

pub fn load_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_file(&text).with_context(|| format!("config {}", path.display()))
}

fn parsed<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("{key} = {value:?}: {e}"))
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

/// Sets one key on `config`.
pub fn apply(config: &mut PipelineConfig, key: &str, value: &str) -> Result<()> {
    let backend = &mut config.backend;
    match key {
        "mode" => config.mode = parsed::<GenerationMode>(key, value)?,
        "n_questions" => config.n_questions = parsed(key, value)?,
        "max_chars" => config.max_chars = parsed(key, value)?,
        "overlap" => config.overlap = parsed(key, value)?,
        "backend" => {
            let kind: BackendKind = parsed(key, value)?;
            if kind == BackendKind::Http && backend.kind == BackendKind::Mock {
                backend.rate_limit = 10.0;
            }
            backend.kind = kind;
        }
        "endpoint" => backend.endpoint = (!value.is_empty()).then(|| value.to_string()),
        "api_key_env" => backend.api_key_env = value.to_string(),
        "model_id" => config.model_id = value.to_string(),
        "temperature" => config.temperature = parsed(key, value)?,
        "max_tokens" => config.max_tokens = parsed(key, value)?,
        "max_retries" => backend.max_retries = parsed(key, value)?,
        "backoff_ms" => backend.backoff_base = Duration::from_millis(parsed(key, value)?),
        "rate_limit" => backend.rate_limit = parsed(key, value)?,
        "timeout_secs" => backend.timeout = Duration::from_secs_f64(parsed(key, value)?),
        "concurrency" => config.concurrency = parsed(key, value)?,
        "rules" => config.rules = optional_path(value),
        "templates" => config.templates = optional_path(value),
        "output" => config.output = PathBuf::from(value),
        "rejected_output" => config.rejected_output = optional_path(value),
        "seed" => config.seed = parsed(key, value)?,
        "corruption_rate" => backend.corruption_rate = parsed(key, value)?,
        "timestamps" => config.timestamps = parsed(key, value)?,
        "domain" => config.domain = (!value.is_empty()).then(|| value.to_string()),
        "normalize_whitespace" => config.cleaning.normalize_whitespace = parsed(key, value)?,
        "strip_control" => config.cleaning.strip_control = parsed(key, value)?,
        other => bail!("unknown key `{other}`"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let entries = parse_file(
            "# comment\n\nmode = single-stage\nn_questions=5\noutput = \"out dir/d.jsonl\"\n",
        )
        .unwrap();
        assert_eq!(
            entries,
            vec![
                ("mode".into(), "single-stage".into()),
                ("n_questions".into(), "5".into()),
                ("output".into(), "out dir/d.jsonl".into()),
            ]
        );
    }

    #[test]
    fn rejects_unknown_keys_and_secrets() {
        assert!(parse_file("n_question = 3").is_err());
        assert!(parse_file("api_key = sk-123").is_err());
        assert!(parse_file("access_token = x").is_err());
        assert!(parse_file("just words").is_err());
    }

    #[test]
    fn every_key_applies() {
        let samples = [
            ("mode", "two_stage"),
            ("n_questions", "3"),
            ("max_chars", "500"),
            ("overlap", "50"),
            ("backend", "http"),
            ("endpoint", "http://localhost:1/v1/completions"),
            ("api_key_env", "OTHER_KEY"),
            ("model_id", "m"),
            ("temperature", "0.2"),
            ("max_tokens", "64"),
            ("max_retries", "2"),
            ("backoff_ms", "10"),
            ("rate_limit", "inf"),
            ("timeout_secs", "1.5"),
            ("concurrency", "2"),
            ("rules", "r.rules"),
            ("templates", "tpl"),
            ("output", "o.jsonl"),
            ("rejected_output", "rej.jsonl"),
            ("seed", "9"),
            ("corruption_rate", "0.5"),
            ("timestamps", "false"),
            ("domain", "finance"),
            ("normalize_whitespace", "false"),
            ("strip_control", "true"),
        ];
        assert_eq!(samples.len(), KEYS.len());
        let mut config = PipelineConfig::default();
        for (key, value) in samples {
            apply(&mut config, key, value).unwrap();
        }
        assert_eq!(config.n_questions, 3);
        assert_eq!(config.backend.kind, BackendKind::Http);
        assert!(config.backend.rate_limit.is_infinite());
        assert_eq!(config.backend.timeout, Duration::from_millis(1500));
        assert!(!config.timestamps);
        assert!(config.validate().is_ok());
    }

    #[test]
    fn bad_values_name_the_key() {
        let err = apply(&mut PipelineConfig::default(), "n_questions", "many").unwrap_err();
        assert!(err.to_string().starts_with("n_questions"));
    }
}
