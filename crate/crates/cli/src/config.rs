//! Flat `key = value` run configuration.

use std::path::Path;

use anyhow::{bail, Context, Result};
use murate::{Backend, TrainingConfig};

/// Values read from a config file. Every field is optional; command-line
/// flags take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub backend: Option<Backend>,
    pub lambda: Option<f64>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<u32>,
    pub batch_size: Option<u32>,
    pub margin: Option<f64>,
    pub seed: Option<u64>,
    pub hash_bits: Option<u32>,
    pub max_tokens_per_doc: Option<u32>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub fraction: Option<f64>,
    pub languages: Option<Vec<String>>,
    pub workers: Option<usize>,
}

pub const KEYS: &[&str] = &[
    "backend",
    "lambda",
    "learning_rate",
    "epochs",
    "batch_size",
    "margin",
    "seed",
    "hash_bits",
    "max_tokens_per_doc",
    "beta1",
    "beta2",
    "epsilon",
    "fraction",
    "languages",
    "workers",
];

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("line {line}: invalid value `{value}` for `{key}`: {e}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                bail!("line {line}: expected `key = value`, got `{body}`");
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "backend" => c.backend = Some(parse_value(key, value, line)?),
                "lambda" => c.lambda = Some(parse_value(key, value, line)?),
                "learning_rate" => c.learning_rate = Some(parse_value(key, value, line)?),
                "epochs" => c.epochs = Some(parse_value(key, value, line)?),
                "batch_size" => c.batch_size = Some(parse_value(key, value, line)?),
                "margin" => c.margin = Some(parse_value(key, value, line)?),
                "seed" => c.seed = Some(parse_value(key, value, line)?),
                "hash_bits" => c.hash_bits = Some(parse_value(key, value, line)?),
                "max_tokens_per_doc" => c.max_tokens_per_doc = Some(parse_value(key, value, line)?),
                "beta1" => c.beta1 = Some(parse_value(key, value, line)?),
                "beta2" => c.beta2 = Some(parse_value(key, value, line)?),
                "epsilon" => c.epsilon = Some(parse_value(key, value, line)?),
                "fraction" => c.fraction = Some(parse_value(key, value, line)?),
                "languages" => c.languages = Some(split_list(value)),
                "workers" => c.workers = Some(parse_value(key, value, line)?),
                other => bail!("line {line}: unknown key `{other}` (known keys: {})", KEYS.join(", ")),
            }
        }
        Ok(c)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("in config {}", p.display()))
            }
        }
    }
}

pub fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(str::to_owned).collect()
}

/// Seed from the flag, then the config file, then `MURATE_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: &RunConfig) -> Result<u64> {
    if let Some(s) = flag.or(config.seed) {
        return Ok(s);
    }
    match std::env::var("MURATE_SEED") {
        Ok(v) => v.trim().parse().with_context(|| format!("MURATE_SEED=`{v}` is not an unsigned integer")),
        Err(_) => Ok(0),
    }
}

/// Training overrides given on the command line.
#[derive(Debug, Clone, Default)]
pub struct TrainOverrides {
    pub backend: Option<Backend>,
    pub lambda: Option<f64>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<u32>,
    pub batch_size: Option<u32>,
    pub margin: Option<f64>,
    pub seed: Option<u64>,
    pub hash_bits: Option<u32>,
    pub max_tokens_per_doc: Option<u32>,
}

pub fn training_config(flags: &TrainOverrides, file: &RunConfig) -> Result<(Backend, TrainingConfig)> {
    let backend = flags.backend.or(file.backend).unwrap_or(Backend::HashedLinear);
    let d = TrainingConfig::for_backend(backend);
    let config = TrainingConfig {
        lambda: flags.lambda.or(file.lambda).unwrap_or(d.lambda),
        learning_rate: flags.learning_rate.or(file.learning_rate).unwrap_or(d.learning_rate),
        epochs: flags.epochs.or(file.epochs).unwrap_or(d.epochs),
        batch_size: flags.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
        margin: flags.margin.or(file.margin).unwrap_or(d.margin),
        seed: resolve_seed(flags.seed, file)?,
        hash_bits: flags.hash_bits.or(file.hash_bits).unwrap_or(d.hash_bits),
        max_tokens_per_doc: flags.max_tokens_per_doc.or(file.max_tokens_per_doc).unwrap_or(d.max_tokens_per_doc),
        beta1: file.beta1.unwrap_or(d.beta1),
        beta2: file.beta2.unwrap_or(d.beta2),
        epsilon: file.epsilon.unwrap_or(d.epsilon),
    };
    config.validate()?;
    Ok((backend, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let c = RunConfig::parse("# run\nlambda = 0\nepochs=3 # short\nlanguages = ar, de\nbackend = latent_table\n").unwrap();
        assert_eq!(c.lambda, Some(0.0));
        assert_eq!(c.epochs, Some(3));
        assert_eq!(c.languages, Some(vec!["ar".to_owned(), "de".to_owned()]));
        assert_eq!(c.backend, Some(Backend::LatentTable));
        assert!(RunConfig::parse("lamda = 1").unwrap_err().to_string().contains("unknown key `lamda`"));
        assert!(RunConfig::parse("epochs = x").is_err());
        assert!(RunConfig::parse("epochs").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig { lambda: Some(0.0), epochs: Some(3), seed: Some(9), ..Default::default() };
        let flags = TrainOverrides { epochs: Some(7), ..Default::default() };
        let (backend, c) = training_config(&flags, &file).unwrap();
        assert_eq!(backend, Backend::HashedLinear);
        assert_eq!((c.lambda, c.epochs, c.seed), (0.0, 7, 9));
        assert_eq!(c.learning_rate, 0.05);
    }
}
