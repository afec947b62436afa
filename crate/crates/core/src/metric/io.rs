//! Distance-matrix files: CSV with a header row of target indices, or a
//! JSON manifest beside a little-endian `f64` payload (as for grids).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::paths::{DistanceMatrix, Provenance};
use crate::error::{Error, Result};

pub const DISTANCE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceManifest {
    pub version: u32,
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
    pub provenance: Provenance,
    pub payload: String,
    pub dtype: String,
    pub order: String,
}

pub fn write_distance_csv(dm: &DistanceMatrix, path: &Path) -> Result<()> {
    let mut out = String::from("source");
    for t in &dm.targets {
        out.push_str(&format!(",{t}"));
    }
    out.push('\n');
    for (r, s) in dm.sources.iter().enumerate() {
        out.push_str(&s.to_string());
        for v in dm.row(r) {
            out.push_str(&format!(",{v:e}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_distance_matrix(dm: &DistanceMatrix, manifest_path: &Path) -> Result<PathBuf> {
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::input("manifest path needs a file name"))?;
    let payload = format!("{stem}.f64le");
    let manifest = DistanceManifest {
        version: DISTANCE_FORMAT_VERSION,
        sources: dm.sources.clone(),
        targets: dm.targets.clone(),
        provenance: dm.provenance,
        payload: payload.clone(),
        dtype: "f64le".into(),
        order: "row-major".into(),
    };
    let payload_path = manifest_path.with_file_name(&payload);
    let bytes: Vec<u8> = dm.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&payload_path, bytes)?;
    fs::write(manifest_path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(payload_path)
}

pub fn read_distance_matrix(manifest_path: &Path) -> Result<DistanceMatrix> {
    let text = fs::read_to_string(manifest_path)?;
    let m: DistanceManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("distance manifest: {e}")))?;
    if m.version != DISTANCE_FORMAT_VERSION || m.dtype != "f64le" || m.order != "row-major" {
        return Err(Error::Format("unsupported distance manifest version, dtype or order".into()));
    }
    let bytes = fs::read(manifest_path.with_file_name(&m.payload))?;
    let want = 8 * m.sources.len() * m.targets.len();
    if bytes.len() != want {
        return Err(Error::Format(format!("payload has {} bytes, expected {want}", bytes.len())));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(DistanceMatrix {
        sources: m.sources,
        targets: m.targets,
        values,
        provenance: m.provenance,
    })
}
