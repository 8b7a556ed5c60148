//! Activation dumps: per-sample, per-layer query/key token matrices described by a JSON manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::npy::{read_npy, write_npy};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Which projected state of a layer to analyse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    #[default]
    Query,
    Key,
}

impl StateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StateKind::Query => "query",
            StateKind::Key => "key",
        }
    }
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "query" | "q" => Ok(StateKind::Query),
            "key" | "k" => Ok(StateKind::Key),
            other => Err(Error::Parameter(format!(
                "state must be 'query' or 'key', got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelGeometry {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
}

impl ModelGeometry {
    pub fn new(layers: usize, heads: usize, hidden: usize) -> Result<Self> {
        let g = Self {
            layers,
            heads,
            hidden,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.hidden == 0 {
            return Err(Error::Manifest(format!(
                "model geometry must be positive, got L={} h={} d={}",
                self.layers, self.heads, self.hidden
            )));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Manifest(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStates {
    pub query: DenseMatrix,
    pub key: DenseMatrix,
}

impl LayerStates {
    pub fn get(&self, kind: StateKind) -> &DenseMatrix {
        match kind {
            StateKind::Query => &self.query,
            StateKind::Key => &self.key,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// `layers[i]` holds layer `i + 1`.
    pub layers: Vec<LayerStates>,
}

impl Sample {
    pub fn tokens(&self) -> usize {
        self.layers.first().map_or(0, |l| l.query.rows())
    }

    /// States of a 1-based layer.
    pub fn layer(&self, index: usize) -> Option<&LayerStates> {
        index.checked_sub(1).and_then(|i| self.layers.get(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDump {
    geometry: ModelGeometry,
    samples: Vec<Sample>,
}

impl ActivationDump {
    /// Validates geometry and per-sample shapes.
    pub fn new(geometry: ModelGeometry, samples: Vec<Sample>) -> Result<Self> {
        geometry.validate()?;
        for sample in &samples {
            validate_sample(&geometry, sample)?;
        }
        Ok(Self { geometry, samples })
    }

    pub fn geometry(&self) -> ModelGeometry {
        self.geometry
    }

    pub fn layers(&self) -> usize {
        self.geometry.layers
    }

    pub fn heads(&self) -> usize {
        self.geometry.heads
    }

    pub fn hidden(&self) -> usize {
        self.geometry.hidden
    }

    pub fn head_dim(&self) -> usize {
        self.geometry.head_dim()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }
}

fn validate_sample(geometry: &ModelGeometry, sample: &Sample) -> Result<()> {
    let here = |layer: usize| format!("sample {:?}, layer {layer}", sample.id);
    if sample.layers.len() != geometry.layers {
        return Err(Error::Shape(format!(
            "has {} layers, model declares {}",
            sample.layers.len(),
            geometry.layers
        ))
        .at(format!("sample {:?}", sample.id)));
    }
    let tokens = sample.tokens();
    for (i, layer) in sample.layers.iter().enumerate() {
        for (kind, m) in [("query", &layer.query), ("key", &layer.key)] {
            if m.cols() != geometry.hidden {
                return Err(Error::Shape(format!(
                    "{kind} tensor has d={}, model declares d={}",
                    m.cols(),
                    geometry.hidden
                ))
                .at(here(i + 1)));
            }
            if m.rows() != tokens {
                return Err(Error::Shape(format!(
                    "{kind} tensor has N={}, layer 1 has N={tokens}",
                    m.rows()
                ))
                .at(here(i + 1)));
            }
        }
    }
    Ok(())
}

/// On-disk manifest, paths relative to the manifest's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub model: ModelGeometry,
    pub samples: Vec<ManifestSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSample {
    pub id: String,
    pub layers: Vec<ManifestLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestLayer {
    pub index: usize,
    pub query: PathBuf,
    pub key: PathBuf,
}

pub fn load_dump(manifest_path: impl AsRef<Path>) -> Result<ActivationDump> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(e.to_string()).at(manifest_path.display().to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    dump_from_manifest(&manifest, base)
}

/// Loads every tensor named by `manifest`, resolving relative paths against `base`.
pub fn dump_from_manifest(manifest: &Manifest, base: &Path) -> Result<ActivationDump> {
    let geometry = manifest.model;
    geometry.validate()?;
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        let mut entries: Vec<&ManifestLayer> = entry.layers.iter().collect();
        entries.sort_by_key(|l| l.index);
        let indices: Vec<usize> = entries.iter().map(|l| l.index).collect();
        let expected: Vec<usize> = (1..=geometry.layers).collect();
        if indices != expected {
            return Err(Error::Manifest(format!(
                "layer indices {indices:?} are not the contiguous range 1..={}",
                geometry.layers
            ))
            .at(format!("sample {:?}", entry.id)));
        }
        let mut layers = Vec::with_capacity(entries.len());
        for layer in entries {
            let load = |p: &Path, kind: &str| {
                read_npy(base.join(p)).map_err(|e| {
                    e.at(format!(
                        "sample {:?}, layer {}, {kind} ({})",
                        entry.id,
                        layer.index,
                        p.display()
                    ))
                })
            };
            layers.push(LayerStates {
                query: load(&layer.query, "query")?,
                key: load(&layer.key, "key")?,
            });
        }
        samples.push(Sample {
            id: entry.id.clone(),
            layers,
        });
    }
    ActivationDump::new(geometry, samples)
}

/// Writes every tensor of `dump` as NPY under `dir` plus a `manifest.json`; returns the manifest path.
pub fn write_dump(dump: &ActivationDump, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut samples = Vec::with_capacity(dump.samples().len());
    for (s, sample) in dump.samples().iter().enumerate() {
        let mut layers = Vec::with_capacity(sample.layers.len());
        for (i, states) in sample.layers.iter().enumerate() {
            let query = PathBuf::from(format!("s{s}_l{}_query.npy", i + 1));
            let key = PathBuf::from(format!("s{s}_l{}_key.npy", i + 1));
            write_npy(&states.query, dir.join(&query))?;
            write_npy(&states.key, dir.join(&key))?;
            layers.push(ManifestLayer {
                index: i + 1,
                query,
                key,
            });
        }
        samples.push(ManifestSample {
            id: sample.id.clone(),
            layers,
        });
    }
    let manifest = Manifest {
        model: dump.geometry(),
        samples,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
