//! Versioned, digest-checked model artifacts.
//!
//! A verifier file is JSON of the form
//! `{format_version, kind, payload_digest, tfidf_digest, body}` where
//! `payload_digest` is the SHA-256 of the canonical (key-sorted, compact)
//! serialization of `body`. Loading recomputes both digests and refuses the
//! file on mismatch.
//!
//! A model directory holds one verifier file per model plus `manifest.json`
//! listing roles, constructs, training sizes and payload digests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::classifiers::TrainedModel;
use crate::corpus::ConstructLabel;
use crate::error::{Error, Result};
use crate::router::{SkippedConstruct, SpecialistEnsemble, Verifier};
use crate::textfeat::TfidfModel;

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline. `serde_json` output is deterministic
/// for a given value, so reruns produce identical bytes.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VerifierBody {
    vectorizer: TfidfModel,
    model: TrainedModel,
    #[serde(default)]
    warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Envelope {
    format_version: u32,
    kind: String,
    payload_digest: String,
    tfidf_digest: String,
    body: Value,
}

fn canonical_digest(body: &Value) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(body)?))
}

/// Writes a verifier file and returns its payload digest.
pub fn save_verifier(path: &Path, verifier: &Verifier) -> Result<String> {
    let body = serde_json::to_value(VerifierBody {
        vectorizer: verifier.vectorizer.clone(),
        model: verifier.model.clone(),
        warnings: verifier.warnings.clone(),
    })?;
    let payload_digest = canonical_digest(&body)?;
    let envelope = Envelope {
        format_version: ARTIFACT_FORMAT_VERSION,
        kind: "verifier".into(),
        payload_digest: payload_digest.clone(),
        tfidf_digest: verifier.vectorizer.digest(),
        body,
    };
    write_json(path, &envelope)?;
    Ok(payload_digest)
}

/// Loads a verifier file, returning it with its verified payload digest.
pub fn load_verifier(path: &Path) -> Result<(Verifier, String)> {
    let envelope: Envelope = read_json(path)?;
    let shown = path.display();
    if envelope.format_version != ARTIFACT_FORMAT_VERSION {
        return Err(Error::Integrity(format!("{shown}: unsupported format version {}", envelope.format_version)));
    }
    if envelope.kind != "verifier" {
        return Err(Error::Integrity(format!("{shown}: expected a verifier artifact, found {:?}", envelope.kind)));
    }
    let actual = canonical_digest(&envelope.body)?;
    if actual != envelope.payload_digest {
        return Err(Error::Integrity(format!(
            "{shown}: payload digest mismatch (recorded {}, computed {actual})",
            envelope.payload_digest
        )));
    }
    let body: VerifierBody = serde_json::from_value(envelope.body)
        .map_err(|e| Error::Integrity(format!("{shown}: payload does not decode: {e}")))?;
    if body.vectorizer.digest() != envelope.tfidf_digest {
        return Err(Error::Integrity(format!("{shown}: vectorizer digest mismatch")));
    }
    if body.vectorizer.dimension() != body.model.dimension {
        return Err(Error::Integrity(format!(
            "{shown}: model expects {} features but the vectorizer produces {}",
            body.model.dimension,
            body.vectorizer.dimension()
        )));
    }
    Ok((Verifier { vectorizer: body.vectorizer, model: body.model, warnings: body.warnings }, actual))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Model,
    Generalist,
    Specialist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub role: Role,
    pub algorithm: String,
    pub construct: Option<ConstructLabel>,
    pub train_size: Option<usize>,
    pub file: String,
    pub payload_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifestKind {
    /// Independent models, one per algorithm.
    ModelSet,
    /// A generalist plus construct specialists consulted by routing.
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: ManifestKind,
    pub k: Option<usize>,
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub skipped: Vec<SkippedConstruct>,
}

pub fn save_model_set(dir: &Path, models: &[Verifier]) -> Result<Manifest> {
    let mut entries = Vec::new();
    for v in models {
        let algorithm = v.model.algorithm.as_str();
        let file = format!("model-{algorithm}.json");
        let payload_digest = save_verifier(&dir.join(&file), v)?;
        entries.push(ManifestEntry {
            role: Role::Model,
            algorithm: algorithm.into(),
            construct: None,
            train_size: Some(v.vectorizer.document_count()),
            file,
            payload_digest,
        });
    }
    let manifest =
        Manifest { format_version: ARTIFACT_FORMAT_VERSION, kind: ManifestKind::ModelSet, k: None, entries, skipped: vec![] };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn save_ensemble(dir: &Path, ensemble: &SpecialistEnsemble) -> Result<Manifest> {
    let g = &ensemble.generalist;
    let algorithm = g.model.algorithm.as_str().to_string();
    let mut entries = vec![ManifestEntry {
        role: Role::Generalist,
        algorithm: algorithm.clone(),
        construct: None,
        train_size: Some(g.vectorizer.document_count()),
        file: "generalist.json".into(),
        payload_digest: save_verifier(&dir.join("generalist.json"), g)?,
    }];
    for (construct, v) in &ensemble.specialists {
        let file = format!("specialist-{}.json", construct.slug());
        entries.push(ManifestEntry {
            role: Role::Specialist,
            algorithm: v.model.algorithm.as_str().into(),
            construct: Some(construct.clone()),
            train_size: ensemble.partition_sizes.get(construct).copied(),
            payload_digest: save_verifier(&dir.join(&file), v)?,
            file,
        });
    }
    let manifest = Manifest {
        format_version: ARTIFACT_FORMAT_VERSION,
        kind: ManifestKind::Ensemble,
        k: Some(ensemble.k),
        entries,
        skipped: ensemble.skipped.clone(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub enum Artifacts {
    Models(Vec<Verifier>),
    Ensemble(SpecialistEnsemble),
}

fn entry_path(dir: &Path, entry: &ManifestEntry) -> Result<PathBuf> {
    let name = Path::new(&entry.file);
    if name.components().count() != 1 || name.is_absolute() {
        return Err(Error::Integrity(format!("manifest entry {:?} is not a plain file name", entry.file)));
    }
    Ok(dir.join(name))
}

fn load_entry(dir: &Path, entry: &ManifestEntry) -> Result<Verifier> {
    let (v, digest) = load_verifier(&entry_path(dir, entry)?)?;
    if digest != entry.payload_digest {
        return Err(Error::Integrity(format!("{}: digest does not match the manifest", entry.file)));
    }
    Ok(v)
}

/// Loads a model directory, or a single verifier file as a one-model set.
pub fn load_artifacts(path: &Path) -> Result<Artifacts> {
    if path.is_file() {
        return Ok(Artifacts::Models(vec![load_verifier(path)?.0]));
    }
    let manifest: Manifest = read_json(&path.join(MANIFEST_FILE))?;
    if manifest.format_version != ARTIFACT_FORMAT_VERSION {
        return Err(Error::Integrity(format!("unsupported manifest version {}", manifest.format_version)));
    }
    match manifest.kind {
        ManifestKind::ModelSet => {
            let models = manifest.entries.iter().map(|e| load_entry(path, e)).collect::<Result<Vec<_>>>()?;
            if models.is_empty() {
                return Err(Error::Integrity("manifest lists no models".into()));
            }
            Ok(Artifacts::Models(models))
        }
        ManifestKind::Ensemble => {
            let mut generalist = None;
            let mut specialists = BTreeMap::new();
            let mut partition_sizes = BTreeMap::new();
            for e in &manifest.entries {
                let v = load_entry(path, e)?;
                match (e.role, &e.construct) {
                    (Role::Generalist, _) => generalist = Some(v),
                    (Role::Specialist, Some(c)) => {
                        partition_sizes.insert(c.clone(), e.train_size.unwrap_or(0));
                        specialists.insert(c.clone(), v);
                    }
                    _ => return Err(Error::Integrity(format!("{}: inconsistent manifest role", e.file))),
                }
            }
            let generalist = generalist.ok_or_else(|| Error::Integrity("ensemble manifest has no generalist".into()))?;
            Ok(Artifacts::Ensemble(SpecialistEnsemble {
                specialists,
                generalist,
                k: manifest.k.unwrap_or(0),
                partition_sizes,
                skipped: manifest.skipped,
            }))
        }
    }
}
