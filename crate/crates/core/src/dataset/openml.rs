//! OpenML download client with an on-disk CSV cache.
//!
//! Cache layout: `<cache_dir>/<key>.csv` (header row, label column last) and
//! `<cache_dir>/<key>.meta.json` (source URL, fetch timestamp, SHA-256 of the
//! CSV bytes). A cached dataset is always parsed through [`load_csv`], so a
//! cache hit and a fresh download yield the same [`Dataset`].

use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{load_csv, Dataset, LabelColumn};
use crate::error::{KknnError, Result};

pub const DEFAULT_BASE_URL: &str = "https://www.openml.org";

/// Metadata stored next to each cached CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub key: String,
    pub source_url: String,
    pub fetched_at_unix: u64,
    pub sha256: String,
    pub label_column: String,
}

/// A downloaded table, already flattened to CSV text (label column last).
#[derive(Clone, Debug)]
pub struct Download {
    pub csv: String,
    pub source_url: String,
    pub label_column: String,
}

/// Anything able to turn a dataset name or id into CSV text.
pub trait DatasetSource {
    fn download(&self, name_or_id: &str) -> Result<Download>;
}

/// Talks to the public OpenML REST API.
pub struct OpenMlSource {
    base_url: String,
}

impl Default for OpenMlSource {
    fn default() -> Self {
        let base_url = std::env::var("KKNN_OPENML_URL").unwrap_or_else(|_| DEFAULT_BASE_URL.into());
        OpenMlSource { base_url }
    }
}

impl OpenMlSource {
    pub fn new(base_url: impl Into<String>) -> Self {
        OpenMlSource {
            base_url: base_url.into().trim_end_matches('/').to_string(),
        }
    }

    fn get(&self, url: &str) -> std::result::Result<String, ureq::Error> {
        let mut resp = ureq::get(url).call()?;
        let mut body = String::new();
        resp.body_mut()
            .as_reader()
            .read_to_string(&mut body)
            .map_err(ureq::Error::Io)?;
        Ok(body)
    }

    fn get_json(&self, url: &str, key: &str) -> Result<Value> {
        let text = self.get(url).map_err(|e| match e {
            ureq::Error::StatusCode(404 | 412) => KknnError::UnknownDataset(key.to_string()),
            other => KknnError::Network(format!("{url}: {other}")),
        })?;
        serde_json::from_str(&text).map_err(|e| KknnError::Malformed(format!("{url}: {e}")))
    }

    fn resolve_id(&self, key: &str) -> Result<u64> {
        if let Ok(id) = key.parse() {
            return Ok(id);
        }
        let url = format!("{}/api/v1/json/data/list/data_name/{}/status/active", self.base_url, key);
        let v = self.get_json(&url, key)?;
        let list = v["data"]["dataset"]
            .as_array()
            .ok_or_else(|| KknnError::UnknownDataset(key.to_string()))?;
        list.iter()
            .filter_map(|d| {
                let did = json_u64(&d["did"])?;
                let version = json_u64(&d["version"]).unwrap_or(u64::MAX);
                Some((version, did))
            })
            .min()
            .map(|(_, did)| did)
            .ok_or_else(|| KknnError::UnknownDataset(key.to_string()))
    }
}

fn json_u64(v: &Value) -> Option<u64> {
    v.as_u64().or_else(|| v.as_str()?.parse().ok())
}

impl DatasetSource for OpenMlSource {
    fn download(&self, key: &str) -> Result<Download> {
        let id = self.resolve_id(key)?;
        let desc_url = format!("{}/api/v1/json/data/{id}", self.base_url);
        let desc = self.get_json(&desc_url, key)?;
        let desc = &desc["data_set_description"];
        let arff_url = desc["url"]
            .as_str()
            .ok_or_else(|| KknnError::Malformed("description without url".into()))?
            .to_string();
        let target = desc["default_target_attribute"].as_str().map(str::to_string);
        let mut skip: Vec<String> = Vec::new();
        for field in ["ignore_attribute", "row_id_attribute"] {
            match &desc[field] {
                Value::String(s) => skip.extend(s.split(',').map(|x| x.trim().to_string())),
                Value::Array(a) => skip.extend(a.iter().filter_map(|x| x.as_str().map(str::to_string))),
                _ => {}
            }
        }
        let text = self
            .get(&arff_url)
            .map_err(|e| KknnError::Network(format!("{arff_url}: {e}")))?;
        let table = parse_arff(&text)?;
        let (csv, label_column) = table.to_csv(target.as_deref(), &skip)?;
        Ok(Download {
            csv,
            source_url: arff_url,
            label_column,
        })
    }
}

/// Cache file stem for a dataset name or id.
pub fn cache_key(name_or_id: &str) -> String {
    name_or_id
        .trim()
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

pub fn cache_paths(cache_dir: &Path, key: &str) -> (PathBuf, PathBuf) {
    (
        cache_dir.join(format!("{key}.csv")),
        cache_dir.join(format!("{key}.meta.json")),
    )
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| KknnError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| KknnError::io(path, e))
}

/// Reads a cached dataset, verifying its checksum. `Ok(None)` when absent.
pub fn read_cached(cache_dir: &Path, name_or_id: &str) -> Result<Option<Dataset>> {
    let key = cache_key(name_or_id);
    let (csv_path, meta_path) = cache_paths(cache_dir, &key);
    if !csv_path.exists() {
        return Ok(None);
    }
    let bytes = std::fs::read(&csv_path).map_err(|e| KknnError::io(&csv_path, e))?;
    if let Ok(meta_text) = std::fs::read_to_string(&meta_path) {
        let meta: CacheMeta = serde_json::from_str(&meta_text)?;
        if meta.sha256 != sha256_hex(&bytes) {
            return Err(KknnError::Malformed(format!(
                "{} does not match the checksum in {}",
                csv_path.display(),
                meta_path.display()
            )));
        }
    }
    load_csv(&csv_path, &LabelColumn::Last, true).map(Some)
}

/// Stores CSV text in the cache and returns the parsed dataset.
pub fn store_cached(cache_dir: &Path, name_or_id: &str, dl: &Download) -> Result<Dataset> {
    std::fs::create_dir_all(cache_dir).map_err(|e| KknnError::io(cache_dir, e))?;
    let key = cache_key(name_or_id);
    let (csv_path, meta_path) = cache_paths(cache_dir, &key);
    let meta = CacheMeta {
        key: key.clone(),
        source_url: dl.source_url.clone(),
        fetched_at_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        sha256: sha256_hex(dl.csv.as_bytes()),
        label_column: dl.label_column.clone(),
    };
    write_atomic(&csv_path, dl.csv.as_bytes())?;
    write_atomic(&meta_path, serde_json::to_string_pretty(&meta)?.as_bytes())?;
    load_csv(&csv_path, &LabelColumn::Last, true)
}

/// Cache-first fetch through an arbitrary source.
pub fn fetch_with(source: &dyn DatasetSource, name_or_id: &str, cache_dir: &Path) -> Result<Dataset> {
    if let Some(d) = read_cached(cache_dir, name_or_id)? {
        log::debug!("cache hit for {name_or_id}");
        return Ok(d);
    }
    let dl = source.download(name_or_id)?;
    store_cached(cache_dir, name_or_id, &dl)
}

/// Fetches an OpenML dataset by name or numeric id, reading from
/// `cache_dir` when a cached copy exists.
pub fn fetch_openml(name_or_id: &str, cache_dir: impl AsRef<Path>) -> Result<Dataset> {
    fetch_with(&OpenMlSource::default(), name_or_id, cache_dir.as_ref())
}

#[derive(Clone, Debug, PartialEq)]
enum AttrKind {
    Numeric,
    Nominal(Vec<String>),
    Other,
}

#[derive(Clone, Debug)]
pub struct ArffTable {
    names: Vec<String>,
    kinds: Vec<AttrKind>,
    rows: Vec<Vec<Option<String>>>,
}

fn split_arff_values(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    let mut chars = line.chars().peekable();
    while let Some(ch) = chars.next() {
        match quote {
            Some(q) if ch == q => quote = None,
            Some(_) if ch == '\\' => {
                if let Some(n) = chars.next() {
                    cur.push(n);
                }
            }
            Some(_) => cur.push(ch),
            None if ch == '\'' || ch == '"' => quote = Some(ch),
            None if ch == ',' => out.push(std::mem::take(&mut cur).trim().to_string()),
            None => cur.push(ch),
        }
    }
    out.push(cur.trim().to_string());
    out
}

fn parse_attribute(rest: &str) -> Result<(String, AttrKind)> {
    let rest = rest.trim();
    let (name, tail) = if let Some(q) = rest.chars().next().filter(|c| *c == '\'' || *c == '"') {
        let end = rest[1..]
            .find(q)
            .ok_or_else(|| KknnError::Malformed(format!("unterminated attribute name: {rest}")))?;
        (rest[1..1 + end].to_string(), rest[end + 2..].trim())
    } else {
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        (rest[..end].to_string(), rest[end..].trim())
    };
    let kind = if tail.starts_with('{') {
        let inner = tail.trim_start_matches('{').trim_end_matches('}');
        AttrKind::Nominal(split_arff_values(inner))
    } else {
        match tail.split_whitespace().next().map(str::to_ascii_lowercase).as_deref() {
            Some("numeric" | "real" | "integer") => AttrKind::Numeric,
            _ => AttrKind::Other,
        }
    };
    Ok((name, kind))
}

/// Parses dense ARFF text. Sparse instances are rejected.
pub fn parse_arff(text: &str) -> Result<ArffTable> {
    let mut names = Vec::new();
    let mut kinds = Vec::new();
    let mut rows = Vec::new();
    let mut in_data = false;
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = line.to_ascii_lowercase();
            if lower.starts_with("@attribute") {
                let (n, k) = parse_attribute(&line["@attribute".len()..])?;
                names.push(n);
                kinds.push(k);
            } else if lower.starts_with("@data") {
                in_data = true;
            }
            continue;
        }
        if line.starts_with('{') {
            return Err(KknnError::Malformed("sparse ARFF is not supported".into()));
        }
        let vals = split_arff_values(line);
        if vals.len() != names.len() {
            return Err(KknnError::Malformed(format!(
                "data row has {} values, header declares {}",
                vals.len(),
                names.len()
            )));
        }
        rows.push(vals.into_iter().map(|v| if v == "?" { None } else { Some(v) }).collect());
    }
    if !in_data || names.is_empty() {
        return Err(KknnError::Malformed("missing @attribute or @data section".into()));
    }
    Ok(ArffTable { names, kinds, rows })
}

impl ArffTable {
    /// Flattens the table to CSV with the target last. Nominal features are
    /// encoded by their declared position; string/date attributes are
    /// dropped; rows with a missing value are skipped.
    pub fn to_csv(&self, target: Option<&str>, skip: &[String]) -> Result<(String, String)> {
        let target_idx = match target {
            Some(t) => self
                .names
                .iter()
                .position(|n| n == t)
                .ok_or_else(|| KknnError::Malformed(format!("target attribute {t:?} not declared")))?,
            None => self.names.len() - 1,
        };
        let features: Vec<usize> = (0..self.names.len())
            .filter(|&j| j != target_idx && !skip.contains(&self.names[j]))
            .filter(|&j| {
                let keep = self.kinds[j] != AttrKind::Other;
                if !keep {
                    log::warn!("dropping non-numeric attribute {:?}", self.names[j]);
                }
                keep
            })
            .collect();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = features.iter().map(|&j| self.names[j].as_str()).collect();
        header.push(&self.names[target_idx]);
        w.write_record(&header)?;
        let mut dropped = 0usize;
        'rows: for row in &self.rows {
            let mut rec = Vec::with_capacity(features.len() + 1);
            for &j in &features {
                let Some(v) = &row[j] else {
                    dropped += 1;
                    continue 'rows;
                };
                let cell = match &self.kinds[j] {
                    AttrKind::Nominal(values) => values
                        .iter()
                        .position(|x| x == v)
                        .ok_or_else(|| KknnError::Malformed(format!("{v:?} not a declared value of {}", self.names[j])))?
                        .to_string(),
                    _ => v.clone(),
                };
                rec.push(cell);
            }
            let Some(label) = &row[target_idx] else {
                dropped += 1;
                continue;
            };
            rec.push(label.clone());
            w.write_record(&rec)?;
        }
        if dropped > 0 {
            log::warn!("skipped {dropped} row(s) with missing values");
        }
        let bytes = w.into_inner().map_err(|e| KknnError::Malformed(e.to_string()))?;
        let csv = String::from_utf8(bytes).map_err(|e| KknnError::Malformed(e.to_string()))?;
        Ok((csv, self.names[target_idx].clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    const ARFF: &str = "% comment\n@relation toy\n@attribute name string\n\
        @attribute 'hair' {false,true}\n@attribute legs numeric\n\
        @attribute type {mammal,bird}\n@data\n\
        aardvark,true,4,mammal\n'big bird',false,2,bird\nx,?,2,bird\ncat,true,4,mammal\n";

    #[test]
    fn arff_to_csv_encodes_nominals() {
        let table = parse_arff(ARFF).unwrap();
        let (csv, label) = table.to_csv(Some("type"), &[]).unwrap();
        assert_eq!(label, "type");
        assert_eq!(csv, "hair,legs,type\n1,4,mammal\n0,2,bird\n1,4,mammal\n");
    }

    #[test]
    fn sparse_arff_is_malformed() {
        let text = "@relation s\n@attribute a numeric\n@data\n{0 1}\n";
        assert!(matches!(parse_arff(text), Err(KknnError::Malformed(_))));
    }

    struct Counting {
        calls: Cell<usize>,
    }

    impl DatasetSource for Counting {
        fn download(&self, _key: &str) -> Result<Download> {
            self.calls.set(self.calls.get() + 1);
            let (csv, label_column) = parse_arff(ARFF)?.to_csv(Some("type"), &[])?;
            Ok(Download {
                csv,
                source_url: "memory://toy".into(),
                label_column,
            })
        }
    }

    struct Offline;

    impl DatasetSource for Offline {
        fn download(&self, key: &str) -> Result<Download> {
            Err(KknnError::Network(format!("offline: {key}")))
        }
    }

    #[test]
    fn second_fetch_hits_cache() {
        let dir = tempfile::tempdir().unwrap();
        let src = Counting { calls: Cell::new(0) };
        let a = fetch_with(&src, "Toy", dir.path()).unwrap();
        let b = fetch_with(&src, "toy", dir.path()).unwrap();
        assert_eq!(src.calls.get(), 1);
        assert_eq!(a, b);
        let meta: CacheMeta =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("toy.meta.json")).unwrap()).unwrap();
        assert_eq!(meta.source_url, "memory://toy");
        assert_eq!(meta.sha256.len(), 64);
    }

    #[test]
    fn offline_with_empty_cache_is_network_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(fetch_with(&Offline, "zoo", dir.path()), Err(KknnError::Network(_))));
    }

    #[test]
    fn unreachable_host_is_network_error() {
        let dir = tempfile::tempdir().unwrap();
        let src = OpenMlSource::new("http://127.0.0.1:9");
        assert!(matches!(fetch_with(&src, "zoo", dir.path()), Err(KknnError::Network(_))));
    }

    #[test]
    fn tampered_cache_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let src = Counting { calls: Cell::new(0) };
        fetch_with(&src, "toy", dir.path()).unwrap();
        std::fs::write(dir.path().join("toy.csv"), "hair,legs,type\n1,4,mammal\n0,2,bird\n").unwrap();
        assert!(matches!(fetch_with(&src, "toy", dir.path()), Err(KknnError::Malformed(_))));
    }
}
