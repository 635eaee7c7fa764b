// SPDX-License-Identifier: Apache-2.0

//! On-disk checkpoints: the `CGT1` tensor container and the manifest that
//! orders a checkpoint series.

mod container;
mod manifest;

pub use container::{load_checkpoint, read_header, save_checkpoint, LoadedCheckpoint, TensorEntry, MAGIC};
pub use manifest::{read_manifest, write_manifest, CheckpointManifest, ManifestEntry};
