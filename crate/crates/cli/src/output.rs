//! Result files. Every file starts with the run metadata and a single
//! timestamp line; everything else is a deterministic function of the config.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use neurotrack::infotheory::EmbedSpec;
use neurotrack::synth::RNG_ALGORITHM;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

/// Key of the only line allowed to differ between identical runs.
pub const TIMESTAMP_KEY: &str = "generated_at_unix";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub embed: EmbedSpec,
    pub lag_window_ms: (f64, f64),
    pub lambda_grid: Vec<f64>,
    pub rng_algorithm: String,
}

impl RunMeta {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            embed: cfg.embed,
            lag_window_ms: cfg.lag_window_ms,
            lambda_grid: cfg.lambda_grid.clone(),
            rng_algorithm: RNG_ALGORITHM.to_string(),
        }
    }

    /// Refuse inputs produced under a different configuration.
    pub fn check_matches(&self, cfg: &RunConfig, path: &Path) -> Result<(), CliError> {
        let expected = cfg.hash();
        if self.config_hash != expected {
            return Err(CliError::Data(format!(
                "{} was produced with config hash {}, current config hash is {expected}",
                path.display(),
                self.config_hash
            )));
        }
        Ok(())
    }
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn to_json<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string(v).expect("serialisable value")
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| CliError::io(path, e))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// `{"meta": ...}` line, timestamp line, then one record per line.
pub fn write_ndjson<T: Serialize>(path: &Path, meta: &RunMeta, records: &[T]) -> Result<(), CliError> {
    let mut s = format!("{{\"meta\":{}}}\n{{\"{TIMESTAMP_KEY}\":{}}}\n", to_json(meta), now_unix());
    for r in records {
        s.push_str(&to_json(r));
        s.push('\n');
    }
    write_file(path, &s)
}

pub fn read_ndjson<T: DeserializeOwned>(path: &Path) -> Result<(RunMeta, Vec<T>), CliError> {
    #[derive(Deserialize)]
    struct Header {
        meta: RunMeta,
    }
    let text = read_file(path)?;
    let mut lines = text.lines();
    let header: Header = lines
        .next()
        .ok_or_else(|| parse_err(path, "empty file"))
        .and_then(|l| serde_json::from_str(l).map_err(|e| parse_err(path, e)))?;
    let records = lines
        .filter(|l| !l.contains(TIMESTAMP_KEY) && !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| parse_err(path, e)))
        .collect::<Result<Vec<T>, _>>()?;
    Ok((header.meta, records))
}

/// Comment lines `# meta: {...}` and `# generated_at_unix: N`, then a header row and data.
pub fn write_csv(path: &Path, meta: &RunMeta, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut s = format!("# meta: {}\n# {TIMESTAMP_KEY}: {}\n{}\n", to_json(meta), now_unix(), header.join(","));
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    write_file(path, &s)
}

/// Pretty JSON object with `meta`, the timestamp and `body` under `key`.
pub fn write_json<T: Serialize>(path: &Path, meta: &RunMeta, key: &str, body: &T) -> Result<(), CliError> {
    let mut obj = serde_json::Map::new();
    obj.insert("meta".into(), serde_json::to_value(meta).expect("serialisable"));
    obj.insert(TIMESTAMP_KEY.into(), now_unix().into());
    obj.insert(key.into(), serde_json::to_value(body).expect("serialisable"));
    let mut s = serde_json::to_string_pretty(&obj).expect("serialisable");
    s.push('\n');
    write_file(path, &s)
}

/// Read an object written by [`write_json`]. `meta` is optional so hand-written files load too.
pub fn read_json<T: DeserializeOwned>(path: &Path, key: &str) -> Result<(Option<RunMeta>, T), CliError> {
    let text = read_file(path)?;
    let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    let obj = v.as_object_mut().ok_or_else(|| parse_err(path, "expected a JSON object"))?;
    let meta = match obj.remove("meta") {
        Some(m) => Some(serde_json::from_value(m).map_err(|e| parse_err(path, e))?),
        None => None,
    };
    let body = obj.remove(key).ok_or_else(|| parse_err(path, format!("missing `{key}`")))?;
    Ok((meta, serde_json::from_value(body).map_err(|e| parse_err(path, e))?))
}
