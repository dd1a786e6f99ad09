//! Local content-addressed artifact store.
//!
//! On-disk layout under the store root:
//!
//! ```text
//! <kind>/<name>/v<version>.bin    payload bytes
//! <kind>/<name>/v<version>.meta   flat `key=value` text sidecar
//! <kind>/<name>/.lock             advisory write lock
//! ```
//!
//! The sidecar holds the reserved keys `id`, `kind`, `name`, `version`,
//! `size`, followed by one `meta.<key>=<value>` line per metadata entry with
//! `\\`, `\n` and `\r` escaped. An artifact id is the SHA-256 hex digest of
//! its payload.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::columnar::{self, Column, ColumnData, ColumnarError, Table};
use crate::fingerprint::Fingerprint;
use crate::series::{Channel, Period, SeriesError, TimeSeries};

/// Environment variable naming the store root.
pub const STORE_ENV: &str = "DVATS_STORE";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage I/O: {0}")]
    StorageIo(#[from] std::io::Error),
    #[error("artifact {kind}/{name}{} not found", .version.map(|v| format!(" v{v}")).unwrap_or_default())]
    NotFound {
        kind: ArtifactKind,
        name: String,
        version: Option<u32>,
    },
    #[error("payload digest mismatch for {kind}/{name} v{version}")]
    DigestMismatch {
        kind: ArtifactKind,
        name: String,
        version: u32,
    },
    #[error("payload must not be empty")]
    EmptyPayload,
    #[error("invalid artifact name `{0}`")]
    InvalidName(String),
    #[error("invalid metadata key `{0}`")]
    InvalidMetadataKey(String),
    #[error("corrupt sidecar {path}: {reason}")]
    CorruptSidecar { path: PathBuf, reason: String },
    #[error(transparent)]
    Columnar(#[from] ColumnarError),
    #[error("payload is not a valid {expected} table: {reason}")]
    BadTable { expected: &'static str, reason: String },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    Dataset,
    EncoderConfig,
    Embeddings,
    Projections,
    RunLog,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 5] = [
        ArtifactKind::Dataset,
        ArtifactKind::EncoderConfig,
        ArtifactKind::Embeddings,
        ArtifactKind::Projections,
        ArtifactKind::RunLog,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::Dataset => "dataset",
            ArtifactKind::EncoderConfig => "encoder-config",
            ArtifactKind::Embeddings => "embeddings",
            ArtifactKind::Projections => "projections",
            ArtifactKind::RunLog => "run-log",
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArtifactKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown artifact kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub id: Fingerprint,
    pub kind: ArtifactKind,
    pub name: String,
    pub version: u32,
    pub size: u64,
    pub metadata: BTreeMap<String, String>,
    pub payload_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

fn validate_name(name: &str) -> Result<(), StoreError> {
    let ok = !name.is_empty()
        && name.len() <= 200
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidName(name.to_owned()))
    }
}

fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(value: &str) -> Option<String> {
    let mut out = String::with_capacity(value.len());
    let mut chars = value.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next()? {
            '\\' => out.push('\\'),
            'n' => out.push('\n'),
            'r' => out.push('\r'),
            _ => return None,
        }
    }
    Some(out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

impl ArtifactStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    /// Opens the store named by `DVATS_STORE`, or `./dvats-store`.
    pub fn from_env() -> Result<Self, StoreError> {
        let root = std::env::var_os(STORE_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("dvats-store"));
        Self::open(root)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, kind: ArtifactKind, name: &str) -> PathBuf {
        self.root.join(kind.as_str()).join(name)
    }

    /// Stores `payload`, assigning the next version under `(kind, name)`.
    /// Storing bytes identical to an existing version returns that version.
    pub fn put_artifact(
        &self,
        kind: ArtifactKind,
        name: &str,
        payload: &[u8],
        metadata: &BTreeMap<String, String>,
    ) -> Result<Artifact, StoreError> {
        validate_name(name)?;
        if payload.is_empty() {
            return Err(StoreError::EmptyPayload);
        }
        for key in metadata.keys() {
            if key.is_empty() || key.contains(['=', '\n', '\r']) {
                return Err(StoreError::InvalidMetadataKey(key.clone()));
            }
        }
        let id = Fingerprint::of_bytes(payload);
        let dir = self.dir(kind, name);
        fs::create_dir_all(&dir)?;
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(dir.join(".lock"))?;
        lock.lock()?;

        let existing = self.list_versions(kind, name)?;
        if let Some(found) = existing.iter().find(|a| a.id == id) {
            return Ok(found.clone());
        }
        let version = existing.last().map_or(1, |a| a.version + 1);
        let payload_rel = PathBuf::from(kind.as_str())
            .join(name)
            .join(format!("v{version}.bin"));
        write_atomic(&self.root.join(&payload_rel), payload)?;

        let artifact = Artifact {
            id,
            kind,
            name: name.to_owned(),
            version,
            size: payload.len() as u64,
            metadata: metadata.clone(),
            payload_path: payload_rel,
        };
        write_atomic(
            &dir.join(format!("v{version}.meta")),
            render_sidecar(&artifact).as_bytes(),
        )?;
        lock.unlock()?;
        Ok(artifact)
    }

    /// Artifact metadata without reading the payload. `None` selects the
    /// highest version.
    pub fn artifact_meta(
        &self,
        kind: ArtifactKind,
        name: &str,
        version: Option<u32>,
    ) -> Result<Artifact, StoreError> {
        validate_name(name)?;
        let not_found = || StoreError::NotFound {
            kind,
            name: name.to_owned(),
            version,
        };
        let versions = self.list_versions(kind, name)?;
        match version {
            None => versions.into_iter().last(),
            Some(v) => versions.into_iter().find(|a| a.version == v),
        }
        .ok_or_else(not_found)
    }

    /// Fetches an artifact and its payload, verifying the payload digest.
    pub fn get_artifact(
        &self,
        kind: ArtifactKind,
        name: &str,
        version: Option<u32>,
    ) -> Result<(Artifact, Vec<u8>), StoreError> {
        let artifact = self.artifact_meta(kind, name, version)?;
        let payload = fs::read(self.root.join(&artifact.payload_path))?;
        if Fingerprint::of_bytes(&payload) != artifact.id {
            return Err(StoreError::DigestMismatch {
                kind,
                name: name.to_owned(),
                version: artifact.version,
            });
        }
        Ok((artifact, payload))
    }

    fn list_versions(&self, kind: ArtifactKind, name: &str) -> Result<Vec<Artifact>, StoreError> {
        let dir = self.dir(kind, name);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut out = Vec::new();
        for entry in entries {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("meta") {
                out.push(parse_sidecar(&path, &fs::read_to_string(&path)?)?);
            }
        }
        out.sort_by_key(|a| a.version);
        Ok(out)
    }

    /// All artifacts, ordered by `(kind, name, version)`.
    pub fn list(&self, kind: Option<ArtifactKind>) -> Result<Vec<Artifact>, StoreError> {
        let kinds: Vec<ArtifactKind> = match kind {
            Some(k) => vec![k],
            None => ArtifactKind::ALL.to_vec(),
        };
        let mut out = Vec::new();
        for kind in kinds {
            let dir = self.root.join(kind.as_str());
            let Ok(entries) = fs::read_dir(&dir) else {
                continue;
            };
            let mut names: Vec<String> = entries
                .filter_map(|e| e.ok())
                .filter(|e| e.path().is_dir())
                .filter_map(|e| e.file_name().into_string().ok())
                .collect();
            names.sort();
            for name in names {
                out.extend(self.list_versions(kind, &name)?);
            }
        }
        out.sort_by(|a, b| (a.kind, &a.name, a.version).cmp(&(b.kind, &b.name, b.version)));
        Ok(out)
    }

    pub fn put_series(
        &self,
        name: &str,
        series: &TimeSeries,
        extra: &BTreeMap<String, String>,
    ) -> Result<Artifact, StoreError> {
        let bytes = columnar::write_columnar(&series_to_table(series))?;
        let mut metadata = extra.clone();
        metadata.insert("series_name".into(), series.name().to_owned());
        metadata.insert("rows".into(), series.len().to_string());
        metadata.insert("channels".into(), series.channel_count().to_string());
        if let Some(f) = series.frequency() {
            metadata.insert("frequency_seconds".into(), f.to_string());
        }
        self.put_artifact(ArtifactKind::Dataset, name, &bytes, &metadata)
    }

    pub fn get_series(
        &self,
        name: &str,
        version: Option<u32>,
    ) -> Result<(Artifact, TimeSeries), StoreError> {
        let (artifact, bytes) = self.get_artifact(ArtifactKind::Dataset, name, version)?;
        let table = columnar::read_columnar(&bytes)?;
        let frequency = artifact
            .metadata
            .get("frequency_seconds")
            .and_then(|f| f.parse::<Period>().ok());
        let series_name = artifact
            .metadata
            .get("series_name")
            .cloned()
            .unwrap_or_else(|| name.to_owned());
        let series = table_to_series(&series_name, &table, frequency)?;
        Ok((artifact, series))
    }
}

fn render_sidecar(a: &Artifact) -> String {
    let mut out = format!(
        "id={}\nkind={}\nname={}\nversion={}\nsize={}\n",
        a.id, a.kind, a.name, a.version, a.size
    );
    for (k, v) in &a.metadata {
        out.push_str(&format!("meta.{}={}\n", k, escape(v)));
    }
    out
}

fn parse_sidecar(path: &Path, text: &str) -> Result<Artifact, StoreError> {
    let corrupt = |reason: &str| StoreError::CorruptSidecar {
        path: path.to_owned(),
        reason: reason.to_owned(),
    };
    let mut fields = BTreeMap::new();
    let mut metadata = BTreeMap::new();
    for line in text.lines() {
        let (k, v) = line.split_once('=').ok_or_else(|| corrupt("line without `=`"))?;
        if let Some(key) = k.strip_prefix("meta.") {
            metadata.insert(key.to_owned(), unescape(v).ok_or_else(|| corrupt("bad escape"))?);
        } else {
            fields.insert(k, v);
        }
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| corrupt(&format!("missing `{k}`")));
    let kind: ArtifactKind = get("kind")?.parse().map_err(|e: String| corrupt(&e))?;
    let name = get("name")?.to_owned();
    let version: u32 = get("version")?.parse().map_err(|_| corrupt("bad version"))?;
    Ok(Artifact {
        id: Fingerprint::from_hex(get("id")?).ok_or_else(|| corrupt("bad id"))?,
        kind,
        version,
        size: get("size")?.parse().map_err(|_| corrupt("bad size"))?,
        metadata,
        payload_path: PathBuf::from(kind.as_str())
            .join(&name)
            .join(format!("v{version}.bin")),
        name,
    })
}

/// `timestamp` int64 column followed by one float64 column per channel.
pub fn series_to_table(series: &TimeSeries) -> Table {
    let mut columns = vec![Column::i64("timestamp", series.timestamps().to_vec())];
    columns.extend(
        series
            .channels()
            .iter()
            .map(|c| Column::f64(c.name.clone(), c.values.clone())),
    );
    Table::new(columns)
}

pub fn table_to_series(
    name: &str,
    table: &Table,
    frequency: Option<Period>,
) -> Result<TimeSeries, StoreError> {
    let bad = |reason: &str| StoreError::BadTable {
        expected: "series",
        reason: reason.to_owned(),
    };
    let mut timestamps = None;
    let mut channels = Vec::new();
    for col in &table.columns {
        match &col.data {
            ColumnData::Int64(v) if timestamps.is_none() => timestamps = Some(v.clone()),
            ColumnData::Float64(v) => channels.push(Channel::new(col.name.clone(), v.clone())),
            ColumnData::Int64(_) => return Err(bad("more than one int64 column")),
        }
    }
    let timestamps = timestamps.ok_or_else(|| bad("no timestamp column"))?;
    Ok(TimeSeries::new(name, timestamps, channels, frequency)?)
}
