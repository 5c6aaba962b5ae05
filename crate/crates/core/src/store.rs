//! JSON documents for profiles and models.
//!
//! One profile document per dataset, named `<dataset>.profile.json`. Discovery
//! reads only these documents, never the raw files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ingest::{dataset_name, CsvOptions, SampleSpec, TableFormat};
use crate::learner::{hex, ChainModel};
use crate::profiler::{profile_dataset, AttributeProfile};

pub const PROFILE_FORMAT_VERSION: u32 = 1;
pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const PROFILE_SUFFIX: &str = ".profile.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileDocument {
    pub format_version: u32,
    pub dataset: String,
    pub source_path: String,
    /// SHA-256 of the source file bytes at profiling time.
    pub content_digest: String,
    pub row_count: u64,
    pub attributes: Vec<AttributeProfile>,
    /// Attributes left out of discovery because they hold numbers, dates or nothing.
    pub ineligible: Vec<String>,
}

impl ProfileDocument {
    pub fn attribute(&self, name: &str) -> Option<&AttributeProfile> {
        self.attributes.iter().find(|a| a.attribute_name == name)
    }
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Loads, classifies and profiles one delimited file.
pub fn profile_file(
    path: &Path,
    options: &CsvOptions,
    sample: SampleSpec,
    exec: Execution,
) -> Result<ProfileDocument> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = dataset_name(path);
    let mut dataset = options.read_table(&name, &mut bytes.as_slice(), path)?;
    dataset.infer_eligibility(sample);
    Ok(ProfileDocument {
        format_version: PROFILE_FORMAT_VERSION,
        dataset: name,
        source_path: path.to_string_lossy().into_owned(),
        content_digest: digest_bytes(&bytes),
        row_count: dataset.row_count as u64,
        attributes: profile_dataset(&dataset, exec),
        ineligible: dataset
            .attributes
            .iter()
            .filter(|a| !a.eligible)
            .map(|a| a.name.clone())
            .collect(),
    })
}

pub fn profile_path(dir: &Path, dataset: &str) -> PathBuf {
    dir.join(format!("{dataset}{PROFILE_SUFFIX}"))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("documents serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses a versioned document, checking `format_version` before the body.
fn read_versioned<T: DeserializeOwned>(path: &Path, expected: u32) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let malformed = |message: String| Error::MalformedDocument {
        path: path.to_path_buf(),
        message,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| malformed("missing format_version".into()))?;
    if found != u64::from(expected) {
        return Err(Error::UnsupportedVersion {
            expected,
            found: found.min(u64::from(u32::MAX)) as u32,
        });
    }
    serde_json::from_value(value).map_err(|e| malformed(e.to_string()))
}

pub fn save_profiles(doc: &ProfileDocument, path: &Path) -> Result<()> {
    write_json(doc, path)
}

pub fn load_profiles(path: &Path) -> Result<ProfileDocument> {
    read_versioned(path, PROFILE_FORMAT_VERSION)
}

/// Whether the source file still has the digest recorded at profiling time.
/// A mismatch or unreadable source is logged as a warning and reported as `false`.
pub fn verify_source(doc: &ProfileDocument) -> bool {
    match fs::read(&doc.source_path) {
        Ok(bytes) if digest_bytes(&bytes) == doc.content_digest => true,
        Ok(_) => {
            log::warn!(
                "{} changed since it was profiled; profile of {} may be stale",
                doc.source_path,
                doc.dataset
            );
            false
        }
        Err(e) => {
            log::warn!("cannot verify source {} of {}: {e}", doc.source_path, doc.dataset);
            false
        }
    }
}

/// A set of profile documents keyed by dataset name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProfileStore {
    documents: BTreeMap<String, ProfileDocument>,
}

impl ProfileStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a document. A second document for the same dataset is an error.
    pub fn insert(&mut self, doc: ProfileDocument) -> Result<()> {
        if self.documents.contains_key(&doc.dataset) {
            return Err(Error::InvalidParameter(format!(
                "two profile documents for dataset {:?}",
                doc.dataset
            )));
        }
        self.documents.insert(doc.dataset.clone(), doc);
        Ok(())
    }

    pub fn from_documents(docs: impl IntoIterator<Item = ProfileDocument>) -> Result<Self> {
        let mut store = Self::new();
        for d in docs {
            store.insert(d)?;
        }
        Ok(store)
    }

    /// Every `*.profile.json` in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(PROFILE_SUFFIX))
            .collect();
        paths.sort();
        Self::from_documents(paths.iter().map(|p| load_profiles(p)).collect::<Result<Vec<_>>>()?)
    }

    pub fn document(&self, dataset: &str) -> Option<&ProfileDocument> {
        self.documents.get(dataset)
    }

    pub fn profile(&self, dataset: &str, attribute: &str) -> Option<&AttributeProfile> {
        self.document(dataset)?.attribute(attribute)
    }

    pub fn documents(&self) -> impl Iterator<Item = &ProfileDocument> {
        self.documents.values()
    }

    /// Profiles of every dataset except `dataset`, by dataset then attribute order.
    pub fn profiles_excluding<'a>(
        &'a self,
        dataset: &'a str,
    ) -> impl Iterator<Item = &'a AttributeProfile> + 'a {
        self.documents
            .values()
            .filter(move |d| d.dataset != dataset)
            .flat_map(|d| d.attributes.iter())
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    model: ChainModel,
}

#[derive(Serialize)]
struct ModelDocumentRef<'a> {
    format_version: u32,
    model: &'a ChainModel,
}

pub fn save_model(model: &ChainModel, path: &Path) -> Result<()> {
    write_json(
        &ModelDocumentRef {
            format_version: MODEL_FORMAT_VERSION,
            model,
        },
        path,
    )
}

pub fn load_model(path: &Path) -> Result<ChainModel> {
    let doc: ModelDocument = read_versioned(path, MODEL_FORMAT_VERSION)?;
    let m = &doc.model;
    let widths_ok = m.forests.len() == crate::learner::CLASS_COUNT
        && m.forests.iter().enumerate().all(|(i, f)| f.width == m.input_width(i));
    if !widths_ok {
        return Err(Error::MalformedDocument {
            path: path.to_path_buf(),
            message: "forest input widths do not match the chain layout".into(),
        });
    }
    Ok(doc.model)
}
