//! Tensor file I/O and activation-dump ingestion.

mod dump;
mod npy;

pub use dump::{
    dump_from_manifest, load_dump, write_dump, ActivationDump, LayerStates, Manifest,
    ManifestLayer, ManifestSample, ModelGeometry, Sample, StateKind,
};
pub use npy::{encode_npy, parse_npy, read_npy, write_npy};
